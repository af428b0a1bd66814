#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wtdl/errors.hpp"

namespace wtdl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = std::vector<Eigen::Index>;

/// Observed data {(Y_i, D_i, X_i)}: outcome, binary treatment, covariates.
/// Row i of `x` is the covariate vector of unit i.
struct ObservationSet {
  Vector y;
  Eigen::VectorXi d;
  Matrix x;

  [[nodiscard]] Eigen::Index n() const { return y.size(); }
  [[nodiscard]] Eigen::Index p() const { return x.cols(); }

  [[nodiscard]] Eigen::Index arm_count(int arm) const {
    return (d.array() == arm).count();
  }
};

/// Lists every violated ObservationSet invariant. Empty when the set is
/// usable for estimation.
inline std::vector<std::string> validate(const ObservationSet& obs) {
  std::vector<std::string> out;
  const auto n = obs.y.size();
  if (obs.d.size() != n) {
    out.push_back("length mismatch: d has " + std::to_string(obs.d.size()) +
                  " entries, y has " + std::to_string(n));
  }
  if (obs.x.rows() != n) {
    out.push_back("length mismatch: x has " + std::to_string(obs.x.rows()) +
                  " rows, y has " + std::to_string(n));
  }
  if (obs.x.cols() < 1) out.push_back("x has no columns (p >= 1 required)");
  if (!out.empty()) return out;

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(obs.y(i))) {
      out.push_back("y is not finite at row " + std::to_string(i));
    }
    if (obs.d(i) != 0 && obs.d(i) != 1) {
      out.push_back("d is not binary at row " + std::to_string(i));
    }
    for (Eigen::Index j = 0; j < obs.x.cols(); ++j) {
      if (!std::isfinite(obs.x(i, j))) {
        out.push_back("x is not finite at row " + std::to_string(i) +
                      ", column " + std::to_string(j + 1));
        break;
      }
    }
  }
  if (obs.arm_count(1) == 0) out.push_back("arm 1 absent");
  if (obs.arm_count(0) == 0) out.push_back("arm 0 absent");
  return out;
}

/// Throws DomainError carrying every violation when `obs` cannot be used
/// for estimation.
inline void require_valid(const ObservationSet& obs) {
  const auto violations = validate(obs);
  if (violations.empty()) return;
  std::string msg = "invalid observation set:";
  for (const auto& v : violations) msg += "\n  " + v;
  throw DomainError(msg);
}

namespace detail {

inline std::string expected_header(Eigen::Index p) {
  std::string h = "y,d";
  for (Eigen::Index j = 1; j <= p; ++j) h += ",x" + std::to_string(j);
  return h;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses `y,d,x1,...,xp` CSV text. `source` names the input in messages.
inline ObservationSet parse_csv(std::istream& in, const std::string& source = "<csv>") {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(source + ": empty file, expected header 'y,d,x1,...,xp'");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header_fields = detail::split_commas(line);
  const std::vector<std::string> header(header_fields.begin(), header_fields.end());
  const auto p = static_cast<Eigen::Index>(header.size()) - 2;
  if (p < 1 || line != detail::expected_header(p)) {
    throw FormatError(source + ": malformed header '" + line + "', expected '" +
                      detail::expected_header(std::max<Eigen::Index>(p, 1)) + "'");
  }

  std::vector<double> values;
  Eigen::Index n = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (static_cast<Eigen::Index>(fields.size()) != p + 2) {
      throw FormatError(source + ": data row " + std::to_string(n) + " (line " +
                        std::to_string(line_no) + ") has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(p + 2));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_double(fields[c], v)) {
        throw ParseError(source + ": non-numeric cell '" + std::string(fields[c]) +
                         "' at data row " + std::to_string(n) + ", column " +
                         header[c]);
      }
      if (c == 1 && v != 0.0 && v != 1.0) {
        throw DomainError(source + ": treatment d must be 0 or 1 at data row " +
                          std::to_string(n) + " (got " + std::string(fields[c]) + ")");
      }
      values.push_back(v);
    }
    ++n;
  }

  ObservationSet obs{Vector(n), Eigen::VectorXi(n), Matrix(n, p)};
  const auto stride = static_cast<std::size_t>(p + 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = values.data() + static_cast<std::size_t>(i) * stride;
    obs.y(i) = row[0];
    obs.d(i) = static_cast<int>(row[1]);
    for (Eigen::Index j = 0; j < p; ++j) obs.x(i, j) = row[2 + j];
  }
  return obs;
}

inline ObservationSet read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_csv(in, path);
}

inline void write_csv(const ObservationSet& obs, std::ostream& out) {
  if (obs.d.size() != obs.n() || obs.x.rows() != obs.n() || obs.p() < 1) {
    throw DomainError("write_csv: inconsistent observation set dimensions");
  }
  out << detail::expected_header(obs.p()) << '\n';
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    out << detail::format_double(obs.y(i)) << ',' << obs.d(i);
    for (Eigen::Index j = 0; j < obs.p(); ++j) {
      out << ',' << detail::format_double(obs.x(i, j));
    }
    out << '\n';
  }
}

inline void write_csv(const ObservationSet& obs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(obs, out);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace wtdl
