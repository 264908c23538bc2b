#include "atse/trajectory.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "atse/atomic_file.hpp"
#include "atse/errors.hpp"

namespace atse {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view text, const char* column, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(std::string("malformed ") + column + " value '" + std::string(text) + "'", line);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ParseError(std::string("non-finite ") + column, line);
  }
  return value;
}

}  // namespace

std::size_t TrajectorySet::sample_count() const noexcept {
  std::size_t n = 0;
  for (const auto& veh : vehicles) n += veh.samples.size();
  return n;
}

void TrajectorySet::validate() const {
  for (const auto& veh : vehicles) {
    const auto fail = [&](const std::string& what) {
      throw DomainError("vehicle " + std::to_string(veh.id) + ": " + what);
    };
    for (std::size_t k = 0; k < veh.samples.size(); ++k) {
      const auto& s = veh.samples[k];
      if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.v)) fail("non-finite sample");
      if (s.v < 0.0) fail("negative speed");
      if (k > 0) {
        if (!(s.t > veh.samples[k - 1].t)) fail("time not strictly increasing");
        if (s.x < veh.samples[k - 1].x) fail("position decreasing");
      }
    }
  }
}

void write_trajectory_csv(std::ostream& out, const TrajectorySet& set) {
  out << "vehicle_id,t,x,v\n";
  std::array<char, 128> buf;
  for (const auto& veh : set.vehicles) {
    for (const auto& s : veh.samples) {
      const int n = std::snprintf(buf.data(), buf.size(), "%lld,%.6f,%.6f,%.6f\n",
                                  static_cast<long long>(veh.id), s.t, s.x, s.v);
      out.write(buf.data(), n);
    }
  }
}

void write_trajectory_csv(const TrajectorySet& set, const std::filesystem::path& path) {
  write_file_atomically(path, false, [&](std::ostream& out) { write_trajectory_csv(out, set); });
}

TrajectorySet read_trajectory_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError("missing header", line_no == 0 ? 1 : line_no);

  const auto header = split(line);
  std::array<int, 4> col{-1, -1, -1, -1};
  constexpr std::array<std::string_view, 4> names{"vehicle_id", "t", "x", "v"};
  for (std::size_t c = 0; c < header.size(); ++c) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (header[c] == names[k]) col[k] = static_cast<int>(c);
    }
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (col[k] < 0) throw ParseError("missing column '" + std::string(names[k]) + "'", line_no);
  }

  TrajectorySet set;
  std::unordered_map<std::int64_t, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const auto id = parse_number<std::int64_t>(fields[col[0]], "vehicle_id", line_no);
    const TrajectorySample s{parse_number<double>(fields[col[1]], "t", line_no),
                             parse_number<double>(fields[col[2]], "x", line_no),
                             parse_number<double>(fields[col[3]], "v", line_no)};
    if (s.v < 0.0) throw ParseError("negative speed", line_no);

    auto [it, inserted] = index.try_emplace(id, set.vehicles.size());
    if (inserted) set.vehicles.push_back(Trajectory{id, {}});
    auto& samples = set.vehicles[it->second].samples;
    if (!samples.empty()) {
      if (!(s.t > samples.back().t)) {
        throw ParseError("time not strictly increasing for vehicle " + std::to_string(id), line_no);
      }
      if (s.x < samples.back().x) throw ParseError("position decreasing for vehicle " + std::to_string(id), line_no);
    }
    samples.push_back(s);
  }
  return set;
}

TrajectorySet read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_trajectory_csv(in);
}

}  // namespace atse
