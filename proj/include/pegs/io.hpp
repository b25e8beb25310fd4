#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pegs/trajectory.hpp"
#include "pegs/types.hpp"

// Trajectory CSV persistence. Fixed column order; doubles are written in
// shortest round-trip form (std::to_chars), so write -> read reproduces
// every value bit-exactly. Columns whose data a path does not produce are
// written as empty cells.

namespace pegs {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<std::string_view, 19> kTrajectoryColumns = {
    "t",       "v_rp",     "v_thp",    "r_p",      "th_p",
    "v_re",    "v_the",    "r_e",      "th_e",     "lam_vrp",
    "lam_vthp", "lam_rp",  "lam_thp",  "lam_vre",  "lam_vthe",
    "lam_re",  "lam_the",  "delta_p",  "delta_e"};

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw IoError("cannot parse number '" + std::string(s) + "' in " + context);
  return v;
}

inline void write_trajectory_csv(const Trajectory& traj,
                                 const std::filesystem::path& path) {
  traj.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < kTrajectoryColumns.size(); ++i)
    out << kTrajectoryColumns[i]
        << (i + 1 < kTrajectoryColumns.size() ? "," : "\n");
  const bool lam_e = traj.has_evader_costates();
  const bool lam_p = !traj.pursuer_costates.empty();
  const bool ctrl = !traj.delta_p.empty();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const GameState& s = traj.states[i];
    out << format_double(traj.times[i]) << ',';
    out << format_double(s.pursuer.v_r) << ',' << format_double(s.pursuer.v_theta)
        << ',' << format_double(s.pursuer.r) << ',' << format_double(s.pursuer.theta)
        << ',';
    out << format_double(s.evader.v_r) << ',' << format_double(s.evader.v_theta)
        << ',' << format_double(s.evader.r) << ',' << format_double(s.evader.theta)
        << ',';
    if (lam_p) {
      const FollowerCostate& l = traj.pursuer_costates[i];
      out << format_double(l.l_vr) << ',' << format_double(l.l_vtheta) << ','
          << format_double(l.l_r) << ',' << format_double(l.l_theta) << ',';
    } else {
      out << ",,,,";
    }
    if (lam_e) {
      const FollowerCostate& l = traj.evader_costates[i];
      out << format_double(l.l_vr) << ',' << format_double(l.l_vtheta) << ','
          << format_double(l.l_r) << ',' << format_double(l.l_theta) << ',';
    } else {
      out << ",,,,";
    }
    if (ctrl) {
      out << format_double(traj.delta_p[i]) << ','
          << format_double(traj.delta_e[i]);
    } else {
      out << ',';
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Reads a trajectory CSV written by write_trajectory_csv (or compatible).
/// Costate and control blocks may be entirely empty; partial blocks are an
/// error. Singular flags are reconstructed from the costate norms.
inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    const auto header = detail::split_csv_line(line);
    if (header.size() != kTrajectoryColumns.size())
      throw IoError("unexpected column count in " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] != kTrajectoryColumns[i])
        throw IoError("unexpected column '" + std::string(header[i]) +
                      "' (want '" + std::string(kTrajectoryColumns[i]) +
                      "') in " + path.string());
  }
  Trajectory traj;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != kTrajectoryColumns.size())
      throw IoError("row " + std::to_string(row) + " of " + path.string() +
                    " has " + std::to_string(cells.size()) + " cells");
    const std::string ctx = path.string() + ":" + std::to_string(row);
    auto cell = [&](int i) { return cells[static_cast<std::size_t>(i)]; };
    auto num = [&](int i) { return parse_double(cell(i), ctx); };
    traj.times.push_back(num(0));
    GameState s;
    s.pursuer = {num(1), num(2), num(3), num(4)};
    s.evader = {num(5), num(6), num(7), num(8)};
    traj.states.push_back(s);
    auto block4 = [&](int i0) -> std::optional<FollowerCostate> {
      const bool any = !cell(i0).empty() || !cell(i0 + 1).empty() ||
                       !cell(i0 + 2).empty() || !cell(i0 + 3).empty();
      if (!any) return std::nullopt;
      return FollowerCostate{num(i0), num(i0 + 1), num(i0 + 2), num(i0 + 3)};
    };
    if (auto lp = block4(9)) {
      traj.pursuer_costates.push_back(*lp);
    } else if (!traj.pursuer_costates.empty()) {
      throw IoError("partial pursuer-costate block in " + ctx);
    }
    if (auto le = block4(13)) {
      traj.evader_costates.push_back(*le);
    } else if (!traj.evader_costates.empty()) {
      throw IoError("partial evader-costate block in " + ctx);
    }
    if (!cell(17).empty() || !cell(18).empty()) {
      traj.delta_p.push_back(num(17));
      traj.delta_e.push_back(num(18));
    } else if (!traj.delta_p.empty()) {
      throw IoError("partial control block in " + ctx);
    }
  }
  if (traj.pursuer_costates.size() != 0 &&
      traj.pursuer_costates.size() != traj.size())
    throw IoError("inconsistent pursuer-costate rows in " + path.string());
  if (traj.evader_costates.size() != 0 &&
      traj.evader_costates.size() != traj.size())
    throw IoError("inconsistent evader-costate rows in " + path.string());
  for (const auto& l : traj.pursuer_costates)
    traj.delta_p_singular.push_back(std::hypot(l.l_vr, l.l_vtheta) <
                                    kSingularCostateNorm);
  for (const auto& l : traj.evader_costates)
    traj.delta_e_singular.push_back(std::hypot(l.l_vr, l.l_vtheta) <
                                    kSingularCostateNorm);
  traj.validate();
  return traj;
}

}  // namespace pegs
