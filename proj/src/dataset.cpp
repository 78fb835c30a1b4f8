#include "hmfpc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(const std::string& field, std::size_t line,
                    const char* column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(std::string("non-numeric ") + column + " '" + field + "'",
                     line);
  }
  if (!std::isfinite(value)) {
    throw ParseError(std::string("non-finite ") + column + " '" + field + "'",
                     line);
  }
  return value;
}

}  // namespace

LongitudinalDataset::LongitudinalDataset(std::vector<Subject> subjects)
    : subjects_(std::move(subjects)) {}

void LongitudinalDataset::add_observation(const std::string& subject,
                                          double time, double value) {
  auto it = std::find_if(subjects_.rbegin(), subjects_.rend(),
                         [&](const Subject& s) { return s.id == subject; });
  if (it == subjects_.rend()) {
    subjects_.push_back(Subject{subject, {}, {}});
    it = subjects_.rbegin();
  }
  it->times.push_back(time);
  it->values.push_back(value);
}

std::size_t LongitudinalDataset::observation_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects_) n += s.size();
  return n;
}

std::vector<double> LongitudinalDataset::pooled_times() const {
  std::vector<double> out;
  out.reserve(observation_count());
  for (const auto& s : subjects_) out.insert(out.end(), s.times.begin(), s.times.end());
  return out;
}

std::pair<double, double> LongitudinalDataset::time_range() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : subjects_) {
    for (double t : s.times) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  return {lo, hi};
}

LongitudinalDataset LongitudinalDataset::read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 &&
        static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB &&
        static_cast<unsigned char>(line[2]) == 0xBF) {
      line.erase(0, 3);
    }
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3 || fields[0] != "subject" || fields[1] != "time" ||
        fields[2] != "value") {
      throw ParseError("expected header 'subject,time,value'", line_no);
    }
    have_header = true;
    break;
  }
  if (!have_header) throw ParseError("empty input: no header found", 0);

  LongitudinalDataset data;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      throw ParseError("expected 3 fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    if (fields[0].empty()) throw ParseError("empty subject id", line_no);
    const double t = parse_number(fields[1], line_no, "time");
    const double y = parse_number(fields[2], line_no, "value");
    auto [it, inserted] = index.try_emplace(fields[0], data.subjects_.size());
    if (inserted) data.subjects_.push_back(Subject{fields[0], {}, {}});
    auto& s = data.subjects_[it->second];
    s.times.push_back(t);
    s.values.push_back(y);
  }
  if (data.subjects_.empty()) throw ParseError("no observations after header", 0);
  return data;
}

LongitudinalDataset LongitudinalDataset::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return read_csv(in);
}

void LongitudinalDataset::write_csv(std::ostream& out) const {
  out << "subject,time,value\n";
  for (const auto& s : subjects_) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      out << s.id << ',' << format_double(s.times[j]) << ','
          << format_double(s.values[j]) << '\n';
    }
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace hmfpc
