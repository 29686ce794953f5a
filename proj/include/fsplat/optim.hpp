#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fsplat/rasterize.hpp"

namespace fsplat {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

namespace detail {

inline double adam_update(double& m, double& v, double g, double lr, int t,
                          const AdamParams& ap) {
  m = ap.beta1 * m + (1.0 - ap.beta1) * g;
  v = ap.beta2 * v + (1.0 - ap.beta2) * g * g;
  const double mhat = m / (1.0 - std::pow(ap.beta1, t));
  const double vhat = v / (1.0 - std::pow(ap.beta2, t));
  return lr * mhat / (std::sqrt(vhat) + ap.eps);
}

}  // namespace detail

// Adam over a flat parameter vector with one shared learning rate.
struct AdamVec {
  std::vector<double> m, v;
  int t = 0;
  AdamParams params;

  void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
    if (g.size() != x.size())
      throw std::invalid_argument("adam: gradient size mismatch");
    m.resize(x.size(), 0.0);
    v.resize(x.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] -= detail::adam_update(m[i], v[i], g[i], lr, t, params);
  }

  void reset() {
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
  }
};

struct GaussianLearningRates {
  double position = 1.6e-4;  // initial; the caller passes the decayed value per step
  double scaling = 1e-3;
  double rotation = 1e-3;
  double sh = 2.5e-3;
  double opacity = 5e-2;
  // semantic logits and intensity ride the sh rate
};

// Adam over a gaussian set with per-group learning rates; quaternions are
// renormalized after each step.
class GaussianAdam {
 public:
  void step(std::vector<GaussianPrimitive>& gs,
            const std::vector<GaussianGrads>& grads,
            const GaussianLearningRates& rates, double position_lr) {
    if (grads.size() != gs.size())
      throw std::invalid_argument("adam: gradient count mismatch");
    const int classes =
        gs.empty() ? 0 : static_cast<int>(gs[0].semantic_logits.size());
    ensure(gs.size(), classes);
    ++t_;
    const int t = t_;
    parallel_for(gs.size(), [&](std::size_t i) {
      GaussianPrimitive& g = gs[i];
      const GaussianGrads& gg = grads[i];
      for (int c = 0; c < 3; ++c)
        g.mean[c] -= detail::adam_update(m_mean_[i * 3 + c], v_mean_[i * 3 + c],
                                         gg.mean[c], position_lr, t, params);
      for (int c = 0; c < 3; ++c)
        g.log_scales[c] -=
            detail::adam_update(m_scale_[i * 3 + c], v_scale_[i * 3 + c],
                                gg.log_scales[c], rates.scaling, t, params);
      for (int c = 0; c < 4; ++c)
        g.rotation[c] -=
            detail::adam_update(m_rot_[i * 4 + c], v_rot_[i * 4 + c],
                                gg.rotation[c], rates.rotation, t, params);
      g.rotation = g.rotation.normalized();
      for (int k = 0; k < kShCoeffs; ++k)
        for (int c = 0; c < 3; ++c) {
          const std::size_t s = (i * kShCoeffs + k) * 3 + c;
          g.sh(k, c) -= detail::adam_update(m_sh_[s], v_sh_[s], gg.sh(k, c),
                                            rates.sh, t, params);
        }
      g.opacity_logit -= detail::adam_update(m_op_[i], v_op_[i], gg.opacity_logit,
                                             rates.opacity, t, params);
      for (int c = 0; c < classes; ++c) {
        const std::size_t s = i * classes + c;
        g.semantic_logits[c] -= detail::adam_update(
            m_sem_[s], v_sem_[s], gg.semantic_logits[c], rates.sh, t, params);
      }
      g.intensity_logit -= detail::adam_update(m_int_[i], v_int_[i],
                                               gg.intensity_logit, rates.sh, t,
                                               params);
    });
  }

  // wipe the moment estimates of one gaussian (after relocation)
  void reset_entry(std::size_t i) {
    if (i * 3 + 3 > m_mean_.size()) return;
    for (int c = 0; c < 3; ++c) {
      m_mean_[i * 3 + c] = v_mean_[i * 3 + c] = 0.0;
      m_scale_[i * 3 + c] = v_scale_[i * 3 + c] = 0.0;
    }
    for (int c = 0; c < 4; ++c) m_rot_[i * 4 + c] = v_rot_[i * 4 + c] = 0.0;
    for (int k = 0; k < kShCoeffs * 3; ++k)
      m_sh_[i * kShCoeffs * 3 + k] = v_sh_[i * kShCoeffs * 3 + k] = 0.0;
    m_op_[i] = v_op_[i] = 0.0;
    for (int c = 0; c < classes_; ++c)
      m_sem_[i * classes_ + c] = v_sem_[i * classes_ + c] = 0.0;
    m_int_[i] = v_int_[i] = 0.0;
  }

  int steps() const { return t_; }

  AdamParams params;

 private:
  void ensure(std::size_t n, int classes) {
    if (n * 3 == m_mean_.size() && classes == classes_) return;
    classes_ = classes;
    m_mean_.assign(n * 3, 0.0);
    v_mean_.assign(n * 3, 0.0);
    m_scale_.assign(n * 3, 0.0);
    v_scale_.assign(n * 3, 0.0);
    m_rot_.assign(n * 4, 0.0);
    v_rot_.assign(n * 4, 0.0);
    m_sh_.assign(n * kShCoeffs * 3, 0.0);
    v_sh_.assign(n * kShCoeffs * 3, 0.0);
    m_op_.assign(n, 0.0);
    v_op_.assign(n, 0.0);
    m_sem_.assign(n * static_cast<std::size_t>(classes), 0.0);
    v_sem_.assign(n * static_cast<std::size_t>(classes), 0.0);
    m_int_.assign(n, 0.0);
    v_int_.assign(n, 0.0);
  }

  int t_ = 0;
  int classes_ = 0;
  std::vector<double> m_mean_, v_mean_, m_scale_, v_scale_, m_rot_, v_rot_;
  std::vector<double> m_sh_, v_sh_, m_op_, v_op_, m_sem_, v_sem_, m_int_, v_int_;
};

}  // namespace fsplat
