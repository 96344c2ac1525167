#pragma once

#include <cstdint>
#include <vector>

#include "methanol/data.hpp"

namespace methanol {

// Two-step arithmetic with single-digit operands, evaluated left to right:
//   query   "3 + 4 * 2 ="
//   thought "3 + 4 = 7. 7 * 2 = 14."
//   answer  "14"
// Deterministic in (seed, n).
std::vector<TripletSample> gen_arith(std::uint64_t seed, int n);

// False-belief stories over 2 rooms, 3 agents, 3 objects and 4 containers.
// The query names an agent and an object; the thought is the subset of story
// events visible to that agent (own events, events in the agent's current
// room, nothing after leaving); the answer is the container where the agent
// last saw the object. Deterministic in (seed, n).
std::vector<TripletSample> gen_egoview(std::uint64_t seed, int n);

}  // namespace methanol
