#include "methanol/data.hpp"

#include <fstream>

#include <json.hpp>

namespace methanol {

using nlohmann::json;

const Vocabulary& Vocabulary::instance() {
  static const Vocabulary v;
  return v;
}

const char* Vocabulary::special_name(int id) {
  switch (id) {
    case kSys: return "<|sys|>";
    case kUsr: return "<|usr|>";
    case kThk: return "<|thk|>";
    case kAns: return "<|ans|>";
    case kEot: return "<|eot|>";
    case kPad: return "<|pad|>";
    default: return "";
  }
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '\n') {
      ids.push_back(kFirstChar);
    } else if (c >= 0x20 && c <= 0x7E) {
      ids.push_back(kFirstChar + 1 + (c - 0x20));
    } else {
      throw VocabularyError("unsupported byte 0x" + std::to_string(static_cast<int>(c)) +
                                " at offset " + std::to_string(i),
                            i);
    }
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string text;
  text.reserve(ids.size());
  for (int id : ids) {
    if (id == kFirstChar) {
      text.push_back('\n');
    } else if (id > kFirstChar && id < size()) {
      text.push_back(static_cast<char>(0x20 + (id - kFirstChar - 1)));
    } else {
      throw TokenIdError("detokenize: id " + std::to_string(id) +
                         " is not a character token");
    }
  }
  return text;
}

RenderedSample render_chat(const TripletSample& sample, int max_seq_len,
                           bool allow_empty_thought) {
  if (sample.query_text.empty()) throw ExtractionError("render_chat: empty query");
  if (sample.answer_text.empty()) throw ExtractionError("render_chat: empty answer");
  if (sample.thought_text.empty() && !allow_empty_thought) {
    throw EmptySupervisionError("render_chat: empty thought in sample '" + sample.source_id +
                                "' (only allowed when thinking is disabled)");
  }
  const auto& vocab = Vocabulary::instance();
  RenderedSample out;
  out.source_id = sample.source_id;
  auto push_span = [&](int delimiter, const std::string& text, SegmentLabel label) {
    out.token_ids.push_back(delimiter);
    out.segments.push_back(SegmentLabel::Special);
    for (int id : vocab.tokenize(text)) {
      out.token_ids.push_back(id);
      out.segments.push_back(label);
    }
  };
  push_span(Vocabulary::kSys, sample.system_text, SegmentLabel::System);
  push_span(Vocabulary::kUsr, sample.query_text, SegmentLabel::Query);
  push_span(Vocabulary::kThk, sample.thought_text, SegmentLabel::Thought);
  push_span(Vocabulary::kAns, sample.answer_text, SegmentLabel::Answer);
  out.token_ids.push_back(Vocabulary::kEot);
  out.segments.push_back(SegmentLabel::Special);

  if (max_seq_len > 0 && static_cast<int>(out.token_ids.size()) > max_seq_len) {
    throw SequenceTooLongError("render_chat: sample '" + sample.source_id + "' renders to " +
                               std::to_string(out.token_ids.size()) + " tokens, limit " +
                               std::to_string(max_seq_len));
  }
  return out;
}

TripletSample parse_chat(const RenderedSample& rendered) {
  const auto& vocab = Vocabulary::instance();
  const auto& ids = rendered.token_ids;
  // expected delimiter order
  const int expected[] = {Vocabulary::kSys, Vocabulary::kUsr, Vocabulary::kThk,
                          Vocabulary::kAns, Vocabulary::kEot};
  std::vector<std::size_t> delim_pos;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (vocab.is_special(ids[i])) delim_pos.push_back(i);
  }
  if (delim_pos.size() != 5) {
    throw ExtractionError("parse_chat: expected 5 delimiters, found " +
                          std::to_string(delim_pos.size()));
  }
  for (int i = 0; i < 5; ++i) {
    if (ids[delim_pos[static_cast<std::size_t>(i)]] != expected[i]) {
      throw ExtractionError(std::string("parse_chat: delimiter out of order, expected ") +
                            Vocabulary::special_name(expected[i]));
    }
  }
  if (delim_pos[0] != 0 || delim_pos[4] != ids.size() - 1) {
    throw ExtractionError("parse_chat: stray tokens outside the chat frame");
  }
  auto span_text = [&](std::size_t from, std::size_t to) {
    return vocab.detokenize(std::span<const int>(ids.data() + from, to - from));
  };
  TripletSample s;
  s.system_text = span_text(delim_pos[0] + 1, delim_pos[1]);
  s.query_text = span_text(delim_pos[1] + 1, delim_pos[2]);
  s.thought_text = span_text(delim_pos[2] + 1, delim_pos[3]);
  s.answer_text = span_text(delim_pos[3] + 1, delim_pos[4]);
  s.source_id = rendered.source_id;
  return s;
}

namespace {
void require_nonempty_field(const std::string& value, const char* field, const char* op) {
  if (value.empty()) {
    throw ExtractionError(std::string(op) + ": empty " + field);
  }
}
}  // namespace

TripletSample extract_cot(const std::string& query, const std::string& rationale,
                          const std::string& answer) {
  require_nonempty_field(query, "query", "extract_cot");
  require_nonempty_field(rationale, "rationale", "extract_cot");
  require_nonempty_field(answer, "answer", "extract_cot");
  TripletSample s;
  s.query_text = query;
  s.thought_text = "Let's think step by step.\n" + rationale;
  s.answer_text = answer;
  return s;
}

TripletSample extract_tom(const std::string& story, const std::string& character,
                          const std::string& question, const std::string& answer,
                          const std::string& perspective) {
  require_nonempty_field(story, "story", "extract_tom");
  require_nonempty_field(character, "character", "extract_tom");
  require_nonempty_field(question, "question", "extract_tom");
  require_nonempty_field(answer, "answer", "extract_tom");
  require_nonempty_field(perspective, "perspective", "extract_tom");
  TripletSample s;
  s.query_text = "Story:\n" + story + "\nYou are " + character +
                 ".\nBased on the above information, answer the following question:\n" + question;
  s.thought_text = "I am " + character +
                   ".\nBased on the above information, from my point of view, what I know is:\n" +
                   perspective;
  s.answer_text = answer;
  return s;
}

TripletSample extract_esconv(const std::string& query, const std::string& emotion,
                             const std::string& strategy, const std::string& answer) {
  require_nonempty_field(query, "query", "extract_esconv");
  require_nonempty_field(emotion, "emotion", "extract_esconv");
  require_nonempty_field(strategy, "strategy", "extract_esconv");
  require_nonempty_field(answer, "answer", "extract_esconv");
  TripletSample s;
  s.query_text = query;
  s.thought_text = "Now the user's emotion is " + emotion + ", then I need to use the strategy of " +
                   strategy + " to respond to him.";
  s.answer_text = answer;
  return s;
}

void write_corpus(const std::filesystem::path& path, const std::vector<TripletSample>& samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open corpus file " + path.string() + " for writing");
  for (const auto& s : samples) {
    json j{{"system", s.system_text},
           {"query", s.query_text},
           {"thought", s.thought_text},
           {"answer", s.answer_text},
           {"source_id", s.source_id}};
    out << j.dump() << "\n";
  }
  if (!out) throw Error("failed writing corpus file " + path.string());
}

std::vector<TripletSample> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  std::vector<TripletSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("corpus " + path.string() + " line " + std::to_string(lineno) +
                  " is not valid JSON: " + e.what());
    }
    TripletSample s;
    s.system_text = j.value("system", "");
    s.query_text = j.value("query", "");
    s.thought_text = j.value("thought", "");
    s.answer_text = j.value("answer", "");
    s.source_id = j.value("source_id", "");
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace methanol
