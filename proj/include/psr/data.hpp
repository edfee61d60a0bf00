#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psr/rng.hpp"

namespace psr {

struct Curve {
  std::string subject;
  Eigen::VectorXd timestamps;
  Eigen::VectorXd values;

  int size() const { return static_cast<int>(values.size()); }
};

// Sigmoidal clot-strength-like curve with optional mid-stream parameter
// switch. y(t) = A / (1 + exp(-k (t - t0))) + N(0, noise^2).
struct SyntheticCurveSpec {
  double amplitude = 20.0;
  double rate = 0.1;       // 1/s
  double onset = 60.0;     // s
  double noise_sigma = 0.0;
  int length = 200;
  double sample_interval = 1.0;  // s
  struct Drift {
    int t_star = 0;  // step index of the switch
    double amplitude = 0.0;
    double rate = 0.0;
    double onset = 0.0;
  };
  std::optional<Drift> drift;

  void validate() const {
    if (!(amplitude > 0.0) || !(rate > 0.0)) throw std::invalid_argument("SyntheticCurveSpec: A, k must be positive");
    if (length < 2) throw std::invalid_argument("SyntheticCurveSpec: length too short");
    if (noise_sigma < 0.0) throw std::invalid_argument("SyntheticCurveSpec: negative noise");
    if (!(sample_interval > 0.0)) throw std::invalid_argument("SyntheticCurveSpec: bad sample interval");
  }
};

inline Curve generate_curve(const SyntheticCurveSpec& spec, std::uint64_t seed,
                            const std::string& subject = "synthetic") {
  spec.validate();
  Rng rng(seed);
  Curve c;
  c.subject = subject;
  c.timestamps.resize(spec.length);
  c.values.resize(spec.length);
  for (int i = 0; i < spec.length; ++i) {
    const double t = static_cast<double>(i) * spec.sample_interval;
    double a = spec.amplitude, k = spec.rate, t0 = spec.onset;
    if (spec.drift && i >= spec.drift->t_star) {
      a = spec.drift->amplitude;
      k = spec.drift->rate;
      t0 = spec.drift->onset;
    }
    const double clean = a / (1.0 + std::exp(-k * (t - t0)));
    c.timestamps[i] = t;
    c.values[i] = clean + (spec.noise_sigma > 0.0 ? rng.gaussian(0.0, spec.noise_sigma) : 0.0);
  }
  return c;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

inline double parse_double(const std::string& s, int line_no) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw std::runtime_error("CSV parse error at line " + std::to_string(line_no) + ": '" + s + "'");
  if (!std::isfinite(v))
    throw std::runtime_error("CSV non-finite value at line " + std::to_string(line_no));
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// CSV schema: header "time,value[,subject_id]"; time strictly increasing.
inline Curve load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "time" || header[1] != "value")
    throw std::runtime_error("load_csv: bad header in " + path + " (want time,value[,subject_id])");
  const bool has_subject = header.size() >= 3 && header[2] == "subject_id";
  std::vector<double> ts, vals;
  std::string subject;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() < 2)
      throw std::runtime_error("CSV malformed row at line " + std::to_string(line_no));
    const double t = detail::parse_double(cells[0], line_no);
    const double v = detail::parse_double(cells[1], line_no);
    if (!ts.empty() && t <= ts.back())
      throw std::runtime_error("CSV time not strictly increasing at line " + std::to_string(line_no));
    if (has_subject && cells.size() >= 3) {
      if (subject.empty())
        subject = cells[2];
      else if (subject != cells[2])
        throw std::runtime_error("CSV mixes subject ids at line " + std::to_string(line_no));
    }
    ts.push_back(t);
    vals.push_back(v);
  }
  if (ts.size() < 2) throw std::runtime_error("load_csv: fewer than 2 rows in " + path);
  Curve c;
  c.subject = subject;
  c.timestamps = Eigen::Map<Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  c.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return c;
}

// Values are written with shortest round-trip formatting, so load8save is the
// identity on valid curves.
inline void save_csv(const Curve& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out << (c.subject.empty() ? "time,value" : "time,value,subject_id") << "\n";
  for (int i = 0; i < c.size(); ++i) {
    out << detail::format_double(c.timestamps[i]) << "," << detail::format_double(c.values[i]);
    if (!c.subject.empty()) out << "," << c.subject;
    out << "\n";
  }
}

struct DatasetManifest {
  struct Entry {
    std::string subject;
    std::string path;
  };
  std::vector<Entry> curves;
  std::map<int, std::set<std::string>> folds;  // fold index -> subjects

  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : curves)
      if (seen.insert(e.subject).second) out.push_back(e.subject);
    return out;
  }

  void validate_folds() const {
    std::set<std::string> all;
    for (const auto& s : subjects()) all.insert(s);
    std::set<std::string> assigned;
    for (const auto& [idx, subs] : folds) {
      if (subs.empty()) throw std::invalid_argument("manifest: empty fold " + std::to_string(idx));
      for (const auto& s : subs) {
        if (!assigned.insert(s).second)
          throw std::invalid_argument("manifest: subject in two folds: " + s);
      }
    }
    if (assigned != all) throw std::invalid_argument("manifest: folds must cover every subject exactly once");
  }
};

// Subject-level k-fold assignment; a subject never straddles folds. Explicit
// fold maps take precedence over seeded random assignment.
inline std::map<int, std::set<std::string>> split_folds(const std::vector<std::string>& subjects,
                                                        int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("split_folds: k must be >= 1");
  if (static_cast<int>(subjects.size()) < k)
    throw std::invalid_argument("split_folds: fewer subjects than folds");
  std::vector<std::string> shuffled = subjects;
  Rng rng(seed);
  rng.shuffle(shuffled);
  std::map<int, std::set<std::string>> folds;
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    folds[static_cast<int>(i) % k].insert(shuffled[i]);
  return folds;
}

}  // namespace psr
