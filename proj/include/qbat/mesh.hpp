#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "parameters.hpp"

namespace qbat {

enum class Region { Negative, Separator, Positive };

/// Control-volume counts. The defaults are the reference discretization.
struct MeshSpec {
  int n_neg = 10;
  int n_sep = 5;
  int n_pos = 10;
  int n_r = 10;

  MeshSpec refined() const { return {2 * n_neg, 2 * n_sep, 2 * n_pos, 2 * n_r}; }
};

/// Uniform finite-volume mesh across the cell sandwich (negative collector at
/// x = 0) plus the radial shell layout used by every particle.
struct Mesh {
  MeshSpec spec;
  std::vector<double> dx;      // control-volume widths, m
  std::vector<double> x;       // centres, m
  std::vector<Region> region;  // per control volume
  double length = 0.0;

  int size() const { return static_cast<int>(dx.size()); }
  int n_electrode() const { return spec.n_neg + spec.n_pos; }
  /// Control-volume index of electrode node k (negative nodes first).
  int node_of_electrode(int k) const { return k < spec.n_neg ? k : k + spec.n_sep; }
  Electrode electrode_of(int k) const { return k < spec.n_neg ? Electrode::Negative : Electrode::Positive; }

  static Mesh build(const MeshSpec& s, const ParameterSet& p) {
    if (s.n_neg < 3 || s.n_sep < 3 || s.n_pos < 3 || s.n_r < 3)
      throw InputError("every mesh count must be at least 3", "invalid_mesh");
    Mesh m;
    m.spec = s;
    auto add = [&](int n, double len, Region r) {
      const double h = len / n;
      for (int i = 0; i < n; ++i) {
        m.x.push_back(m.length + (i + 0.5) * h);
        m.dx.push_back(h);
        m.region.push_back(r);
      }
      m.length += len;
    };
    add(s.n_neg, p.L_n, Region::Negative);
    add(s.n_sep, p.L_sep, Region::Separator);
    add(s.n_pos, p.L_p, Region::Positive);
    return m;
  }
};

/// Equal-width spherical shells for a particle of radius R. Volumes and face
/// areas are divided by 4*pi.
struct ShellGrid {
  int n = 0;
  double radius = 0.0;
  double dr = 0.0;
  std::vector<double> volume;  // (r_{m+1}^3 - r_m^3) / 3
  std::vector<double> face;    // r_m^2 at inner face m, size n + 1

  ShellGrid() = default;
  ShellGrid(int n_shells, double R) : n(n_shells), radius(R), dr(R / n_shells), volume(n_shells), face(n_shells + 1) {
    for (int m = 0; m <= n; ++m) face[m] = (m * dr) * (m * dr);
    for (int m = 0; m < n; ++m) {
      const double r0 = m * dr, r1 = (m + 1) * dr;
      volume[m] = (r1 * r1 * r1 - r0 * r0 * r0) / 3.0;
    }
  }

  double total_volume() const { return radius * radius * radius / 3.0; }

  double mean(const double* c) const {
    double s = 0.0;
    for (int m = 0; m < n; ++m) s += volume[m] * c[m];
    return s / total_volume();
  }
};

}  // namespace qbat
