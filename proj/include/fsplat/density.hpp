#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fsplat/gaussian.hpp"

namespace fsplat {

// Dead gaussians jump onto opacity-weighted donors. A donor with m clones
// shares o_new = 1 - (1-o)^(1/(m+1)) with them and all shrink scales by
// sqrt(m+1), so the blended coverage is roughly preserved and the count is
// exactly preserved. Returns the indices whose parameters changed.
inline std::vector<int> density_control_step(std::vector<GaussianPrimitive>& gs,
                                             std::mt19937_64& rng,
                                             double dead_opacity = 0.005) {
  std::vector<int> dead, alive;
  for (int i = 0; i < static_cast<int>(gs.size()); ++i)
    (gs[i].opacity() < dead_opacity ? dead : alive).push_back(i);
  if (dead.empty() || alive.empty()) return {};

  std::vector<double> cum;
  cum.reserve(alive.size());
  double total = 0.0;
  for (int i : alive) {
    total += gs[i].opacity();
    cum.push_back(total);
  }

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> clones(alive.size(), 0);
  std::vector<int> donor_of(dead.size());
  for (std::size_t d = 0; d < dead.size(); ++d) {
    const double u = u01(rng) * total;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const int a = std::min(static_cast<int>(it - cum.begin()),
                           static_cast<int>(alive.size()) - 1);
    donor_of[d] = a;
    ++clones[a];
  }

  std::vector<int> touched = dead;
  for (std::size_t a = 0; a < alive.size(); ++a) {
    if (clones[a] == 0) continue;
    GaussianPrimitive& donor = gs[alive[a]];
    const double m1 = static_cast<double>(clones[a]) + 1.0;
    const double o_new = 1.0 - std::pow(1.0 - donor.opacity(), 1.0 / m1);
    donor.opacity_logit = logit(o_new);
    donor.log_scales -= Vec3::Constant(0.5 * std::log(m1));
    touched.push_back(alive[a]);
  }
  for (std::size_t d = 0; d < dead.size(); ++d) gs[dead[d]] = gs[alive[donor_of[d]]];

  std::sort(touched.begin(), touched.end());
  return touched;
}

}  // namespace fsplat
