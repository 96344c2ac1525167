#include "methanol/generators.hpp"

#include <array>
#include <random>
#include <string>

namespace methanol {

std::vector<TripletSample> gen_arith(std::uint64_t seed, int n) {
  if (n < 1) throw ConfigError("gen_arith: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> digit(0, 9);
  std::uniform_int_distribution<int> op(0, 2);
  const char ops[] = {'+', '-', '*'};
  auto apply = [](int lhs, char o, int rhs) {
    switch (o) {
      case '+': return lhs + rhs;
      case '-': return lhs - rhs;
      default: return lhs * rhs;
    }
  };
  std::vector<TripletSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int a = digit(rng), b = digit(rng), c = digit(rng);
    const char o1 = ops[op(rng)], o2 = ops[op(rng)];
    const int x = apply(a, o1, b);
    const int y = apply(x, o2, c);
    TripletSample s;
    s.query_text = std::to_string(a) + " " + o1 + " " + std::to_string(b) + " " + o2 + " " +
                   std::to_string(c) + " =";
    s.thought_text = std::to_string(a) + " " + o1 + " " + std::to_string(b) + " = " +
                     std::to_string(x) + ". " + std::to_string(x) + " " + o2 + " " +
                     std::to_string(c) + " = " + std::to_string(y) + ".";
    s.answer_text = std::to_string(y);
    s.source_id = "arith-" + std::to_string(seed) + "-" + std::to_string(i);
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace {

constexpr std::array<const char*, 2> kRooms = {"hall", "shed"};
constexpr std::array<const char*, 3> kAgents = {"Amy", "Bob", "Cal"};
constexpr std::array<const char*, 3> kObjects = {"hat", "key", "pen"};
constexpr std::array<const char*, 4> kContainers = {"box", "jar", "cup", "bag"};
constexpr std::array<int, 4> kContainerRoom = {0, 0, 1, 1};

struct Event {
  enum Kind { Enter, Exit, Declare, Move } kind;
  int agent = -1;      // Enter/Exit/Move
  int room = -1;       // location the event happens in
  int object = -1;     // Declare/Move
  int container = -1;  // Declare/Move
};

std::string event_line(const Event& e) {
  switch (e.kind) {
    case Event::Enter:
      return std::string(kAgents[e.agent]) + " entered the " + kRooms[e.room] + ".";
    case Event::Exit:
      return std::string(kAgents[e.agent]) + " exited the " + kRooms[e.room] + ".";
    case Event::Declare:
      return std::string("The ") + kObjects[e.object] + " is in the " + kContainers[e.container] +
             ".";
    default:
      return std::string(kAgents[e.agent]) + " moved the " + kObjects[e.object] + " to the " +
             kContainers[e.container] + ".";
  }
}

// Visibility per the perspective-taking rules: an agent knows events they do,
// and events in the room they currently occupy; leaving a room ends their
// knowledge of it until they re-enter.
class WorldReplay {
 public:
  // location per agent, -1 = outside any room
  std::array<int, 3> where{-1, -1, -1};

  bool visible_to(int agent, const Event& e) const {
    if (e.agent == agent) return true;
    return where[static_cast<std::size_t>(agent)] == e.room;
  }

  void apply(const Event& e) {
    if (e.kind == Event::Enter) where[static_cast<std::size_t>(e.agent)] = e.room;
    if (e.kind == Event::Exit) where[static_cast<std::size_t>(e.agent)] = -1;
  }
};

}  // namespace

std::vector<TripletSample> gen_egoview(std::uint64_t seed, int n) {
  if (n < 1) throw ConfigError("gen_egoview: n must be at least 1");
  std::mt19937_64 rng(seed);
  auto pick = [&](int bound) {
    return std::uniform_int_distribution<int>(0, bound - 1)(rng);
  };
  std::vector<TripletSample> samples;
  samples.reserve(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const int room = pick(2);
    const int object = pick(3);
    const int c0 = room * 2 + pick(2);        // containers are fixed per room
    const int c1 = room * 2 + (c0 % 2 == 0);  // the other container in that room
    const int witness = pick(3);
    int mover = pick(3);
    if (mover == witness) mover = (mover + 1) % 3;
    const int bystander = 3 - witness - mover;
    // 0 stay, 1 exit before move, 2 no move, 3 exit then re-enter after move
    const int variant = pick(4);
    const bool distract_front = pick(2) == 1;
    const bool distract_back = pick(2) == 1;

    std::vector<Event> events;
    events.push_back({Event::Enter, witness, room, -1, -1});
    events.push_back({Event::Enter, mover, room, -1, -1});
    if (distract_front) events.push_back({Event::Enter, bystander, 1 - room, -1, -1});
    events.push_back({Event::Declare, -1, room, object, c0});
    switch (variant) {
      case 0:
        events.push_back({Event::Move, mover, room, object, c1});
        break;
      case 1:
        events.push_back({Event::Exit, witness, room, -1, -1});
        events.push_back({Event::Move, mover, room, object, c1});
        break;
      case 2:
        if (pick(2) == 1) events.push_back({Event::Exit, witness, room, -1, -1});
        break;
      default:
        events.push_back({Event::Exit, witness, room, -1, -1});
        events.push_back({Event::Move, mover, room, object, c1});
        events.push_back({Event::Enter, witness, room, -1, -1});
        break;
    }
    if (distract_back) events.push_back({Event::Enter, bystander, 1 - room, -1, -1});

    WorldReplay world;
    std::string story, perspective;
    int believed = -1;
    for (const auto& e : events) {
      const bool seen = world.visible_to(witness, e);
      world.apply(e);
      const std::string line = event_line(e);
      if (!story.empty()) story += "\n";
      story += line;
      if (seen) {
        if (!perspective.empty()) perspective += "\n";
        perspective += line;
        if ((e.kind == Event::Declare || e.kind == Event::Move) && e.object == object) {
          believed = e.container;
        }
      }
    }

    TripletSample s;
    s.query_text = story + "\nYou are " + kAgents[witness] + ". Where will " + kAgents[witness] +
                   " look for the " + kObjects[object] + "?";
    s.thought_text = perspective;
    s.answer_text = kContainers[believed];
    s.source_id = "egoview-" + std::to_string(seed) + "-" + std::to_string(i);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace methanol
