#pragma once

// Half-cell open-circuit potentials. Bundled graphite/NMC tables are
// interpolated with a monotone (Fritsch-Butland) cubic Hermite scheme; user
// tables loaded from two-column CSV replace either electrode.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "detail/ocp_tables.hpp"
#include "errors.hpp"
#include "parameters.hpp"

namespace qbat {

/// Shape-preserving piecewise cubic through (x_i, y_i). Outside the table
/// range the end values are held constant.
class MonotoneCubic {
public:
  MonotoneCubic() = default;

  MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.empty() || x_.size() != y_.size()) throw InputError("interpolation table needs matching, non-empty columns");
    for (std::size_t i = 1; i < x_.size(); ++i)
      if (!(x_[i] > x_[i - 1])) throw InputError("interpolation abscissae must be strictly increasing");
    const std::size_t n = x_.size();
    uniform_ = n > 2;
    const double h0 = n > 1 ? x_[1] - x_[0] : 1.0;
    for (std::size_t i = 1; i + 1 < n && uniform_; ++i)
      uniform_ = std::abs((x_[i + 1] - x_[i]) - h0) <= 1e-12 * std::max(1.0, std::abs(h0));
    slopes();
  }

  std::size_t size() const { return x_.size(); }
  double lower() const { return x_.front(); }
  double upper() const { return x_.back(); }

  double operator()(double x) const {
    double v, d;
    eval(x, v, d);
    return v;
  }

  double derivative(double x) const {
    double v, d;
    eval(x, v, d);
    return d;
  }

  void eval(double x, double& value, double& deriv) const {
    const std::size_t n = x_.size();
    if (n == 1 || x <= x_.front()) {
      value = y_.front();
      deriv = 0.0;
      if (n > 1 && x == x_.front()) deriv = d_.front();
      return;
    }
    if (x >= x_.back()) {
      value = y_.back();
      deriv = x == x_.back() ? d_.back() : 0.0;
      return;
    }
    std::size_t k;
    if (uniform_) {
      const double h0 = x_[1] - x_[0];
      k = std::min<std::size_t>(static_cast<std::size_t>((x - x_[0]) / h0), n - 2);
      if (x < x_[k]) --k;
      else if (x >= x_[k + 1] && k + 2 < n) ++k;
    } else {
      k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    }
    const double h = x_[k + 1] - x_[k];
    const double t = (x - x_[k]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    value = h00 * y_[k] + h10 * h * d_[k] + h01 * y_[k + 1] + h11 * h * d_[k + 1];
    const double dh00 = 6 * t2 - 6 * t, dh10 = 3 * t2 - 4 * t + 1;
    const double dh01 = -6 * t2 + 6 * t, dh11 = 3 * t2 - 2 * t;
    deriv = (dh00 * y_[k] + dh01 * y_[k + 1]) / h + dh10 * d_[k] + dh11 * d_[k + 1];
  }

private:
  void slopes() {
    const std::size_t n = x_.size();
    d_.assign(n, 0.0);
    if (n < 2) return;
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0.0) continue;
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    auto edge = [](double h0, double h1, double m0, double m1) {
      double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
      if (d * m0 <= 0.0) return 0.0;
      if (m0 * m1 <= 0.0 && std::abs(d) > std::abs(3 * m0)) return 3 * m0;
      return d;
    };
    d_[0] = edge(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  std::vector<double> x_, y_, d_;
  bool uniform_ = false;
};

namespace detail {

template <std::size_t N>
MonotoneCubic uniform_table(const std::array<double, N>& values) {
  std::vector<double> x(N), y(values.begin(), values.end());
  for (std::size_t i = 0; i < N; ++i) x[i] = static_cast<double>(i) / static_cast<double>(N - 1);
  return MonotoneCubic(std::move(x), std::move(y));
}

}  // namespace detail

/// Reads a two-column CSV (stoichiometry, volts). A non-numeric first line is
/// treated as a header.
inline MonotoneCubic load_ocp_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open OCP table '" + path + "'", "missing_path");
  std::vector<double> x, y;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a, b;
    if (!(ss >> a >> b)) {
      if (row == 1) continue;
      throw ParseError(row, "expected two numeric columns in OCP table '" + path + "'");
    }
    if (a < 0.0 || a > 1.0) throw ParseError(row, "stoichiometry outside [0, 1]");
    x.push_back(a);
    y.push_back(b);
  }
  if (x.empty()) throw InputError("OCP table '" + path + "' has no rows");
  return MonotoneCubic(std::move(x), std::move(y));
}

/// Pair of half-cell OCP curves used by a cell model.
class OcpSet {
public:
  OcpSet()
      : pos_(std::make_shared<MonotoneCubic>(detail::uniform_table(detail::kNmcOcp))),
        neg_(std::make_shared<MonotoneCubic>(detail::uniform_table(detail::kGraphiteOcp))) {}

  void override_curve(Electrode e, MonotoneCubic curve) {
    (e == Electrode::Positive ? pos_ : neg_) = std::make_shared<MonotoneCubic>(std::move(curve));
  }

  const MonotoneCubic& curve(Electrode e) const { return e == Electrode::Positive ? *pos_ : *neg_; }

  /// Potential vs Li/Li+ in volts. Throws DomainError outside [0, 1].
  double operator()(Electrode e, double stoichiometry) const {
    check(e, stoichiometry);
    return curve(e)(stoichiometry);
  }

  void eval(Electrode e, double stoichiometry, double& value, double& deriv) const {
    check(e, stoichiometry);
    curve(e).eval(stoichiometry, value, deriv);
  }

private:
  static void check(Electrode e, double s) {
    if (!(s >= 0.0 && s <= 1.0))
      throw DomainError("stoichiometry " + std::to_string(s) + " outside [0, 1] for " +
                        std::string(to_string(e)) + " electrode");
  }

  std::shared_ptr<const MonotoneCubic> pos_, neg_;
};

inline const OcpSet& default_ocp() {
  static const OcpSet set;
  return set;
}

/// Bundled half-cell OCP vs Li/Li+.
inline double ocp(Electrode e, double stoichiometry) { return default_ocp()(e, stoichiometry); }

}  // namespace qbat
