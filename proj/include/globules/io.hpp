#pragma once

// Text formats.
//
// Configuration:
//   globules <n> <sigma> <r_minus> <r_plus>
//   <i> <x> <y> <z> <r>                       (n lines)
//
// Trajectory:
//   trajectory n <n> sigma <s> r_minus <a> r_plus <b> ell <l> seed <u> dt <h> T <T> externals <k>
//   external <j> <x> <y> <z> <r>              (k lines)
//   refine <step> <depth>                     (one per refined step)
//   <t> <i> <x> <y> <z> <r>                   (n lines per recorded time)
//   ledger <t>                                (checkpoint, after the records at t)
//   L <i> <j> <v> | Lext <i> <j> <v> | Lplus <i> <v> | Lminus <i> <v>
//
// Report: `key = value` lines; the optional table is CSV with header
//   epsilon,p_hat,stderr,hits,samples,used,flag
//
// Reals are written with 17 significant digits.

#include <globules/core.hpp>
#include <globules/diagnostics.hpp>
#include <globules/dynamics.hpp>
#include <globules/error.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace globules {

/// Malformed input file.
class FormatError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write_globule(std::ostream& os, const Globule& g) {
  os << format_real(g.center.x()) << ' ' << format_real(g.center.y()) << ' '
     << format_real(g.center.z()) << ' ' << format_real(g.radius);
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + path);
  return out;
}

template <class T>
T expect(std::istream& is, const std::string& what) {
  T v{};
  if (!(is >> v)) throw FormatError("expected " + what);
  return v;
}

inline void expect_word(std::istream& is, const std::string& word) {
  std::string w;
  if (!(is >> w) || w != word) throw FormatError("expected '" + word + "', got '" + w + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration files

struct ConfigurationFile {
  Configuration configuration;
  double sigma = 1.0;
  double r_minus = 0.0;
  double r_plus = 0.0;
};

inline void write_configuration(std::ostream& os, const Configuration& c, const ModelParams& params) {
  os << "globules " << c.size() << ' ' << format_real(params.sigma) << ' '
     << format_real(params.r_minus) << ' ' << format_real(params.r_plus) << '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    os << i << ' ';
    detail::write_globule(os, c[i]);
    os << '\n';
  }
}

inline ConfigurationFile read_configuration(std::istream& is) {
  ConfigurationFile f;
  detail::expect_word(is, "globules");
  const auto n = detail::expect<std::size_t>(is, "globule count");
  f.sigma = detail::expect<double>(is, "sigma");
  f.r_minus = detail::expect<double>(is, "r_minus");
  f.r_plus = detail::expect<double>(is, "r_plus");
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = detail::expect<std::size_t>(is, "globule index");
    if (i != k) throw FormatError("globule indices must be 0..n-1 in order");
    Globule g;
    g.center.x() = detail::expect<double>(is, "x");
    g.center.y() = detail::expect<double>(is, "y");
    g.center.z() = detail::expect<double>(is, "z");
    g.radius = detail::expect<double>(is, "r");
    f.configuration.push_back(g);
  }
  return f;
}

inline void save_configuration(const std::string& path, const Configuration& c, const ModelParams& params) {
  auto out = detail::open_out(path);
  write_configuration(out, c, params);
}

inline ConfigurationFile load_configuration(const std::string& path) {
  auto in = detail::open_in(path);
  return read_configuration(in);
}

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectoryWriteOptions {
  std::size_t ledger_stride = 1;  // ledger checkpoint every this many records
};

namespace detail {

inline void write_ledger(std::ostream& os, double t, const LocalTimeLedger& L) {
  os << "ledger " << format_real(t) << '\n';
  for (const auto& [k, v] : L.pair) {
    os << "L " << k.first << ' ' << k.second << ' ' << format_real(v) << '\n';
  }
  for (const auto& [k, v] : L.external) {
    os << "Lext " << k.first << ' ' << k.second << ' ' << format_real(v) << '\n';
  }
  for (std::size_t i = 0; i < L.size(); ++i) {
    os << "Lplus " << i << ' ' << format_real(L.cap_plus[i]) << '\n';
    os << "Lminus " << i << ' ' << format_real(L.cap_minus[i]) << '\n';
  }
}

}  // namespace detail

inline void write_trajectory(std::ostream& os, const TrajectoryRecord& traj,
                             const TrajectoryWriteOptions& opt = {}) {
  if (opt.ledger_stride == 0) throw ParameterError("ledger_stride must be positive");
  const auto& p = traj.params;
  os << "trajectory n " << traj.globule_count() << " sigma " << format_real(p.sigma) << " r_minus "
     << format_real(p.r_minus) << " r_plus " << format_real(p.r_plus) << " ell " << p.ell << " seed "
     << traj.seed << " dt " << format_real(traj.dt) << " T " << format_real(traj.T) << " externals "
     << p.external.size() << '\n';
  for (std::size_t j = 0; j < p.external.size(); ++j) {
    os << "external " << j << ' ';
    detail::write_globule(os, p.external[j]);
    os << '\n';
  }
  for (const auto& r : traj.refinements) {
    os << "refine " << r.step << ' ' << r.depth << '\n';
  }
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const std::string t = format_real(traj.times[k]);
    for (std::size_t i = 0; i < traj.states[k].size(); ++i) {
      os << t << ' ' << i << ' ';
      detail::write_globule(os, traj.states[k][i]);
      os << '\n';
    }
    if (k % opt.ledger_stride == 0 || k + 1 == traj.size()) {
      detail::write_ledger(os, traj.times[k], traj.ledgers[k]);
    }
  }
}

/// Reads a trajectory. Records without a ledger checkpoint carry the most
/// recent checkpoint forward.
inline TrajectoryRecord read_trajectory(std::istream& is) {
  TrajectoryRecord traj;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty trajectory file");
  std::istringstream head(line);
  detail::expect_word(head, "trajectory");
  std::size_t n = 0;
  std::size_t externals = 0;
  std::string key;
  while (head >> key) {
    if (key == "n") n = detail::expect<std::size_t>(head, "n");
    else if (key == "sigma") traj.params.sigma = detail::expect<double>(head, "sigma");
    else if (key == "r_minus") traj.params.r_minus = detail::expect<double>(head, "r_minus");
    else if (key == "r_plus") traj.params.r_plus = detail::expect<double>(head, "r_plus");
    else if (key == "ell") traj.params.ell = detail::expect<int>(head, "ell");
    else if (key == "seed") traj.seed = detail::expect<std::uint64_t>(head, "seed");
    else if (key == "dt") traj.dt = detail::expect<double>(head, "dt");
    else if (key == "T") traj.T = detail::expect<double>(head, "T");
    else if (key == "externals") externals = detail::expect<std::size_t>(head, "externals");
    else throw FormatError("unknown trajectory header key '" + key + "'");
  }
  LocalTimeLedger current(n);
  bool have_pending = false;
  Configuration pending;
  double pending_t = 0.0;
  auto flush = [&]() {
    if (!have_pending) return;
    if (pending.size() != n) throw FormatError("incomplete record block");
    traj.times.push_back(pending_t);
    traj.states.push_back(pending);
    traj.ledgers.push_back(current);
    pending = Configuration{};
    have_pending = false;
  };
  // Index of the record block whose checkpoint is being read.
  std::size_t target = static_cast<std::size_t>(-1);
  auto commit = [&]() {
    if (target != static_cast<std::size_t>(-1)) traj.ledgers[target] = current;
    target = static_cast<std::size_t>(-1);
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    const bool ledger_line = first == "L" || first == "Lext" || first == "Lplus" || first == "Lminus";
    if (!ledger_line) commit();
    if (first == "external") {
      detail::expect<std::size_t>(ls, "external index");
      Globule g;
      g.center.x() = detail::expect<double>(ls, "x");
      g.center.y() = detail::expect<double>(ls, "y");
      g.center.z() = detail::expect<double>(ls, "z");
      g.radius = detail::expect<double>(ls, "r");
      traj.params.external.push_back(g);
    } else if (first == "refine") {
      Refinement r;
      r.step = detail::expect<std::size_t>(ls, "step");
      r.depth = detail::expect<int>(ls, "depth");
      traj.refinements.push_back(r);
    } else if (first == "ledger") {
      flush();
      if (traj.times.empty() ||
          std::abs(traj.times.back() - detail::expect<double>(ls, "ledger time")) > 1e-12) {
        throw FormatError("ledger checkpoint does not follow its record block");
      }
      current = LocalTimeLedger(n);
      target = traj.times.size() - 1;
    } else if (ledger_line && target == static_cast<std::size_t>(-1)) {
      throw FormatError("ledger entry outside a checkpoint block");
    } else if (first == "L") {
      const auto i = detail::expect<std::size_t>(ls, "i");
      const auto j = detail::expect<std::size_t>(ls, "j");
      current.add_pair(i, j, detail::expect<double>(ls, "value"));
    } else if (first == "Lext") {
      const auto i = detail::expect<std::size_t>(ls, "i");
      const auto j = detail::expect<std::size_t>(ls, "j");
      current.external[{i, j}] = detail::expect<double>(ls, "value");
    } else if (first == "Lplus" || first == "Lminus") {
      const auto i = detail::expect<std::size_t>(ls, "i");
      if (i >= n) throw FormatError("ledger index out of range");
      (first == "Lplus" ? current.cap_plus : current.cap_minus)[i] = detail::expect<double>(ls, "value");
    } else {
      const double t = std::stod(first);
      const auto i = detail::expect<std::size_t>(ls, "globule index");
      if (i == 0) {
        flush();
        have_pending = true;
        pending_t = t;
      }
      if (!have_pending || i != pending.size() || t != pending_t) {
        throw FormatError("out-of-order trajectory record at t = " + first);
      }
      Globule g;
      g.center.x() = detail::expect<double>(ls, "x");
      g.center.y() = detail::expect<double>(ls, "y");
      g.center.z() = detail::expect<double>(ls, "z");
      g.radius = detail::expect<double>(ls, "r");
      pending.push_back(g);
    }
  }
  commit();
  flush();
  if (traj.params.external.size() != externals) throw FormatError("external count mismatch");
  return traj;
}

inline void save_trajectory(const std::string& path, const TrajectoryRecord& traj,
                            const TrajectoryWriteOptions& opt = {}) {
  auto out = detail::open_out(path);
  write_trajectory(out, traj, opt);
}

inline TrajectoryRecord load_trajectory(const std::string& path) {
  auto in = detail::open_in(path);
  return read_trajectory(in);
}

// ---------------------------------------------------------------------------
// Reports

inline void write_report(std::ostream& os, const DiagnosticsReport& r) {
  for (const auto& [k, v] : r.entries) os << k << " = " << v << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<ProbabilityPoint>& table) {
  os << "epsilon,p_hat,stderr,hits,samples,used,flag\n";
  for (const auto& p : table) {
    os << format_real(p.x) << ',' << format_real(p.p_hat) << ',' << format_real(p.stderr) << ','
       << p.hits << ',' << p.samples << ',' << (p.used ? 1 : 0) << ',' << p.flag << '\n';
  }
}

inline DiagnosticsReport read_report(std::istream& is) {
  DiagnosticsReport r;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("report line without ' = ': " + line);
    r.set(line.substr(0, eq), line.substr(eq + 3));
  }
  return r;
}

inline std::vector<ProbabilityPoint> read_csv(std::istream& is) {
  std::vector<ProbabilityPoint> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() == 6) cells.emplace_back();
    if (cells.size() != 7) throw FormatError("bad CSV row: " + line);
    ProbabilityPoint p;
    p.x = std::stod(cells[0]);
    p.p_hat = std::stod(cells[1]);
    p.stderr = std::stod(cells[2]);
    p.hits = std::stoull(cells[3]);
    p.samples = std::stoull(cells[4]);
    p.used = cells[5] == "1";
    p.flag = cells[6];
    out.push_back(p);
  }
  return out;
}

}  // namespace globules
