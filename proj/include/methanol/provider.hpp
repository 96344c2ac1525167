#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "methanol/data.hpp"

namespace methanol {

// Anything that can turn a prompt into a completion. Implementations:
// HttpProvider below, and deterministic mocks in the tests.
class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const std::string& prompt, std::chrono::milliseconds timeout) = 0;
};

// POSTs {"prompt": ...} as JSON and expects {"text": ...} back. Plain http
// endpoints only. The bearer token usually comes from the
// METHANOL_PROVIDER_TOKEN environment variable (see the CLI).
class HttpProvider : public CompletionProvider {
 public:
  HttpProvider(std::string endpoint, std::string token);
  std::string complete(const std::string& prompt, std::chrono::milliseconds timeout) override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
  std::string token_;
};

struct Utterance {
  std::string speaker;
  std::string text;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> turns;
};

// The annotation prompt sent to the provider, with the dialogue interpolated
// as "speaker: text" lines.
std::string bootstrap_prompt(const Dialogue& dialogue);

// Parses a provider response of numbered lines ("1. ...", one per utterance)
// into per-utterance thoughts. Throws AnnotationParseError (with the raw
// response attached) when the numbering does not line up.
std::vector<std::string> parse_bootstrap_response(const std::string& raw, std::size_t expected);

// Annotates every turn with a thought, then emits one triplet per reply:
// the previous utterance becomes the query, earlier turns are flattened into
// the system text, and the reply (with its thought) plays the assistant.
std::vector<TripletSample> bootstrap_thoughts(const Dialogue& dialogue,
                                              CompletionProvider& provider,
                                              std::chrono::milliseconds timeout);

}  // namespace methanol
