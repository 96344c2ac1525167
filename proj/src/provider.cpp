#include "methanol/provider.hpp"

#include <cctype>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace methanol {

using nlohmann::json;

HttpProvider::HttpProvider(std::string endpoint, std::string token) : token_(std::move(token)) {
  const std::string prefix = "http://";
  if (endpoint.rfind(prefix, 0) != 0) {
    throw ConfigError("provider endpoint must start with http://, got '" + endpoint + "'");
  }
  std::string rest = endpoint.substr(prefix.size());
  const auto slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = hostport.find(':');
  if (colon == std::string::npos) {
    host_ = hostport;
  } else {
    host_ = hostport.substr(0, colon);
    port_ = std::stoi(hostport.substr(colon + 1));
  }
  if (host_.empty()) throw ConfigError("provider endpoint has no host: '" + endpoint + "'");
}

std::string HttpProvider::complete(const std::string& prompt,
                                   std::chrono::milliseconds timeout) {
  httplib::Client client(host_, port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  const std::string body = json{{"prompt", prompt}}.dump();
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) {
    throw ProviderError("provider request to " + host_ + ":" + std::to_string(port_) +
                            " failed: " + httplib::to_string(res.error()),
                        /*retryable=*/true);
  }
  if (res->status >= 500) {
    throw ProviderError("provider returned status " + std::to_string(res->status),
                        /*retryable=*/true);
  }
  if (res->status != 200) {
    throw ProviderError("provider rejected the request with status " +
                            std::to_string(res->status),
                        /*retryable=*/false);
  }
  json j;
  try {
    j = json::parse(res->body);
  } catch (const json::exception&) {
    throw ProviderError("provider response is not valid JSON", /*retryable=*/false);
  }
  if (!j.contains("text") || !j.at("text").is_string()) {
    throw ProviderError("provider response has no 'text' field", /*retryable=*/false);
  }
  return j.at("text").get<std::string>();
}

std::string bootstrap_prompt(const Dialogue& dialogue) {
  std::string rendered;
  for (const auto& turn : dialogue.turns) {
    rendered += turn.speaker + ": " + turn.text + "\n";
  }
  return "Please describe in the first-person perspective mental activity of each character in "
         "the following dialogue before each statement. Please try to be colloquial and concise. "
         "Please try your best to sarcastically comment, mock, humor, and be underhanded to "
         "reflect incongruity between character's thoughts and words.\n\n" +
         rendered;
}

std::vector<std::string> parse_bootstrap_response(const std::string& raw, std::size_t expected) {
  std::vector<std::string> thoughts;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t digits = i;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits])))
      ++digits;
    if (digits == i) continue;  // not a numbered line
    if (digits >= line.size() || (line[digits] != '.' && line[digits] != ')')) continue;
    const long number = std::stol(line.substr(i, digits - i));
    if (number != static_cast<long>(thoughts.size()) + 1) {
      throw AnnotationParseError("bootstrap annotation numbering jumps to " +
                                     std::to_string(number) + " at line " +
                                     std::to_string(thoughts.size() + 1),
                                 raw);
    }
    std::size_t start = digits + 1;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    thoughts.push_back(line.substr(start));
  }
  if (thoughts.size() != expected) {
    throw AnnotationParseError("bootstrap annotation has " + std::to_string(thoughts.size()) +
                                   " thoughts for " + std::to_string(expected) + " utterances",
                               raw);
  }
  return thoughts;
}

std::vector<TripletSample> bootstrap_thoughts(const Dialogue& dialogue,
                                              CompletionProvider& provider,
                                              std::chrono::milliseconds timeout) {
  if (dialogue.turns.empty()) {
    throw ConfigError("bootstrap_thoughts: dialogue '" + dialogue.id + "' has no utterances");
  }
  const std::string raw = provider.complete(bootstrap_prompt(dialogue), timeout);
  const auto thoughts = parse_bootstrap_response(raw, dialogue.turns.size());

  // Shift by one turn: each reply becomes an assistant sample whose query is
  // the preceding utterance; earlier context is flattened into the system text.
  std::vector<TripletSample> samples;
  for (std::size_t u = 1; u < dialogue.turns.size(); ++u) {
    TripletSample s;
    std::string context;
    for (std::size_t p = 0; p + 1 < u; ++p) {
      context += dialogue.turns[p].speaker + ": " + dialogue.turns[p].text + "\n";
    }
    s.system_text = context;
    s.query_text = dialogue.turns[u - 1].text;
    s.thought_text = thoughts[u];
    s.answer_text = dialogue.turns[u].text;
    s.source_id = dialogue.id + "#" + std::to_string(u);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace methanol
