#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "methanol/errors.hpp"

namespace methanol {

// Per-position role of a rendered token.
enum class SegmentLabel : std::uint8_t { System, Query, Thought, Answer, Special };

// One training record: the model receives the query, thinks with the thought,
// then responds with the answer. `thought_text` may be empty only for runs
// that disable the thinking objective.
struct TripletSample {
  std::string system_text;
  std::string query_text;
  std::string thought_text;
  std::string answer_text;
  std::string source_id;
};

struct RenderedSample {
  std::vector<int> token_ids;
  std::vector<SegmentLabel> segments;
  std::string source_id;
};

// Character-level vocabulary: six reserved role/control tokens followed by
// newline and the printable ASCII range. Text bytes can never tokenize to a
// reserved id, so writing the literal characters "<|thk|>" in a sample stays
// ordinary text.
class Vocabulary {
 public:
  static constexpr int kSys = 0;
  static constexpr int kUsr = 1;
  static constexpr int kThk = 2;
  static constexpr int kAns = 3;
  static constexpr int kEot = 4;
  static constexpr int kPad = 5;
  static constexpr int kFirstChar = 6;

  static const Vocabulary& instance();

  int size() const { return kFirstChar + 1 + (0x7E - 0x20 + 1); }  // newline + printable

  bool is_special(int id) const { return id >= 0 && id < kFirstChar; }

  // Throws VocabularyError (with the byte offset) on bytes outside the
  // supported set.
  std::vector<int> tokenize(std::string_view text) const;

  // Inverse of tokenize; ids must be character ids, not specials.
  std::string detokenize(std::span<const int> ids) const;

  static const char* special_name(int id);

 private:
  Vocabulary() = default;
};

// Lays a triplet out as
//   <|sys|> system <|usr|> query <|thk|> thought <|ans|> answer <|eot|>
// with per-span segment labels (delimiters are Special). `max_seq_len` of 0
// skips the length check. An empty thought is rejected unless
// `allow_empty_thought` (the no-thinking paths) is set.
RenderedSample render_chat(const TripletSample& sample, int max_seq_len = 0,
                           bool allow_empty_thought = false);

// Recovers the triplet from a rendered sample, byte-exact. Validates the
// delimiter structure: one thought span and one answer span, in that order.
TripletSample parse_chat(const RenderedSample& rendered);

// Appendix-style rule-based extraction templates. All required fields must
// be nonempty.
TripletSample extract_cot(const std::string& query, const std::string& rationale,
                          const std::string& answer);
TripletSample extract_tom(const std::string& story, const std::string& character,
                          const std::string& question, const std::string& answer,
                          const std::string& perspective);
TripletSample extract_esconv(const std::string& query, const std::string& emotion,
                             const std::string& strategy, const std::string& answer);

// Corpus files are JSON Lines with keys system/query/thought/answer/source_id.
void write_corpus(const std::filesystem::path& path, const std::vector<TripletSample>& samples);
std::vector<TripletSample> read_corpus(const std::filesystem::path& path);

}  // namespace methanol
