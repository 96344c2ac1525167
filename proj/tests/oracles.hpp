#pragma once

// Independent oracles shared by the unit tests and the acceptance suite:
// an arithmetic re-evaluator, an event-replay simulator for the egoview
// stories, and a two-pass greedy decoder that recomputes a full forward pass
// per step instead of using the incremental cache.

#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "methanol/data.hpp"
#include "methanol/model.hpp"

namespace oracles {

inline long long eval_left_to_right(const std::string& query) {
  std::istringstream in(query);
  long long acc;
  in >> acc;
  char op;
  long long rhs;
  while (in >> op && op != '=') {
    in >> rhs;
    if (op == '+') acc += rhs;
    else if (op == '-') acc -= rhs;
    else acc *= rhs;
  }
  return acc;
}

// Replays the story text and tracks what one agent can see. Returns
// {container the agent last saw the object in, true final container};
// believed comes back empty if a story line cannot be parsed.
struct EgoReplay {
  static int room_of_container(const std::string& c) {
    return (c == "box" || c == "jar") ? 0 : 1;
  }
  static int room_index(const std::string& r) { return r == "hall" ? 0 : 1; }

  static std::pair<std::string, std::string> replay(const std::string& story,
                                                    const std::string& who,
                                                    const std::string& object) {
    std::map<std::string, int> where;
    std::string believed, actual;
    std::istringstream in(story);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line.back() != '.') return {"", ""};
      std::istringstream ls(line.substr(0, line.size() - 1));
      std::vector<std::string> w;
      std::string tok;
      while (ls >> tok) w.push_back(tok);
      int event_room = -2;
      std::string seen_container, seen_object, actor;
      if (w.size() == 4 && w[1] == "entered") {
        actor = w[0];
        event_room = room_index(w[3]);
        where[actor] = event_room;
      } else if (w.size() == 4 && w[1] == "exited") {
        actor = w[0];
        event_room = room_index(w[3]);
        where[actor] = -1;
      } else if (w.size() == 6 && w[0] == "The" && w[2] == "is") {
        seen_object = w[1];
        seen_container = w[5];
        event_room = room_of_container(seen_container);
      } else if (w.size() == 7 && w[1] == "moved") {
        actor = w[0];
        seen_object = w[3];
        seen_container = w[6];
        event_room = room_of_container(seen_container);
      } else {
        return {"", ""};
      }
      if (seen_object == object) actual = seen_container;
      const bool visible =
          actor == who || (where.count(who) && where.at(who) == event_room);
      if (visible && seen_object == object) believed = seen_container;
    }
    return {believed, actual};
  }

  // splits a generated egoview query into (story, agent, object)
  static bool parse_query(const std::string& query, std::string& story, std::string& who,
                          std::string& object) {
    const auto qpos = query.rfind("\nYou are ");
    if (qpos == std::string::npos) return false;
    story = query.substr(0, qpos);
    const std::string question = query.substr(qpos + 1);
    std::istringstream qs(question);
    std::string tok;
    qs >> tok >> tok >> who;
    if (who.empty() || who.back() != '.') return false;
    who.pop_back();
    std::vector<std::string> words;
    while (qs >> tok) words.push_back(tok);
    if (words.empty() || words.back().size() < 2) return false;
    object = words.back().substr(0, words.back().size() - 1);
    return true;
  }
};

struct UncachedDecode {
  std::vector<int> thought_ids, answer_ids;
  std::vector<std::vector<float>> pass1_logits, pass2_logits;
  std::vector<int> final_ctx;
};

inline UncachedDecode uncached_greedy(const methanol::ThinkingTransformer& model,
                                      std::vector<int> ctx, int max_thought_tokens,
                                      int max_answer_tokens) {
  using namespace methanol;
  NoGradGuard no_grad;
  const auto& vocab = Vocabulary::instance();
  UncachedDecode out;
  const int v = model.config.vocab_size;
  auto last_row = [&](const Tensor& logits) {
    const int rows = logits.dim(0);
    return std::vector<float>(logits.values().begin() + std::size_t(rows - 1) * v,
                              logits.values().end());
  };
  for (int step = 0; step < max_thought_tokens; ++step) {
    ForwardResult fr = forward(model, ctx);
    auto row = last_row(fr.logits_k);
    const int next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    out.pass1_logits.push_back(std::move(row));
    if (vocab.is_special(next)) break;
    ctx.push_back(next);
    out.thought_ids.push_back(next);
  }
  ctx.push_back(Vocabulary::kAns);
  for (int step = 0; step < max_answer_tokens; ++step) {
    ForwardResult fr = forward(model, ctx);
    auto row = last_row(fr.logits_K);
    const int next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    out.pass2_logits.push_back(std::move(row));
    if (vocab.is_special(next)) break;
    ctx.push_back(next);
    out.answer_ids.push_back(next);
  }
  out.final_ctx = std::move(ctx);
  return out;
}

}  // namespace oracles
