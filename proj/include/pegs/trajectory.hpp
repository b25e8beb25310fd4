#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pegs/types.hpp"

namespace pegs {

/// Time-stamped history of states, costates and controls, plus diagnostics.
/// The collocation path fills pursuer costates only; the shooting path fills
/// both players'. `mid_delta_e` holds the per-segment midpoint leader
/// controls of a collocation solution (needed to rebuild the decision vector
/// exactly); it is empty on shooting trajectories.
struct Trajectory {
  std::vector<double> times;
  std::vector<GameState> states;
  std::vector<FollowerCostate> pursuer_costates;
  std::vector<FollowerCostate> evader_costates;  // empty on the solve path
  std::vector<double> delta_p;
  std::vector<double> delta_e;
  std::vector<bool> delta_p_singular;
  std::vector<bool> delta_e_singular;
  std::vector<double> mid_delta_e;  // collocation midpoints, size = segments

  // diagnostics
  std::vector<double> hamiltonian_samples;
  std::vector<double> second_order_values;  // pursuer Legendre-Clebsch values
  double constraint_norm = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return times.size(); }
  double t_f() const {
    if (times.empty()) throw std::logic_error("Trajectory: empty");
    return times.back();
  }
  bool has_evader_costates() const { return !evader_costates.empty(); }

  void validate() const {
    const std::size_t n = times.size();
    if (n < 2) throw std::invalid_argument("Trajectory: needs >= 2 samples");
    for (std::size_t i = 1; i < n; ++i)
      if (!(times[i] > times[i - 1]))
        throw std::invalid_argument("Trajectory: times not strictly increasing");
    auto check = [n](std::size_t got, const char* what) {
      if (got != 0 && got != n)
        throw std::invalid_argument(std::string("Trajectory: bad length of ") +
                                    what);
    };
    if (states.size() != n)
      throw std::invalid_argument("Trajectory: bad length of states");
    check(pursuer_costates.size(), "pursuer_costates");
    check(evader_costates.size(), "evader_costates");
    check(delta_p.size(), "delta_p");
    check(delta_e.size(), "delta_e");
  }
};

}  // namespace pegs
