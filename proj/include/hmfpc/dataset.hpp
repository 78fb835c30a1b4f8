#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace hmfpc {

struct Subject {
  std::string id;
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return times.size(); }
};

/// Ragged collection of (subject, time, value) observations. Subjects keep
/// the order of their first appearance in the input.
class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;
  explicit LongitudinalDataset(std::vector<Subject> subjects);

  void add_observation(const std::string& subject, double time, double value);

  const std::vector<Subject>& subjects() const { return subjects_; }
  const Subject& subject(std::size_t i) const { return subjects_.at(i); }
  std::size_t size() const { return subjects_.size(); }
  std::size_t observation_count() const;

  std::vector<double> pooled_times() const;
  /// (min, max) of all observation times.
  std::pair<double, double> time_range() const;

  /// Long-format CSV with header `subject,time,value`. Throws ParseError
  /// naming the offending line.
  static LongitudinalDataset read_csv(std::istream& in);
  static LongitudinalDataset read_csv_file(const std::string& path);
  void write_csv(std::ostream& out) const;

 private:
  std::vector<Subject> subjects_;
};

/// Formats a double with the shortest decimal representation that parses
/// back to the identical value.
std::string format_double(double value);

}  // namespace hmfpc
