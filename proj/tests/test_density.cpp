#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fsplat/density.hpp"

using namespace fsplat;

namespace {

GaussianPrimitive make_gaussian(double opacity, const Vec3& mean,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  GaussianPrimitive g;
  g.mean = mean;
  g.rotation = Quat{n(rng), n(rng), n(rng), n(rng)}.normalized();
  g.log_scales = Vec3(std::log(0.2), std::log(0.3), std::log(0.25));
  g.opacity_logit = logit(opacity);
  g.sh = ShCoeffs::Zero();
  for (int k = 0; k < kShCoeffs; ++k)
    for (int c = 0; c < 3; ++c) g.sh(k, c) = 0.2 * n(rng);
  g.semantic_logits = {n(rng), n(rng)};
  g.intensity_logit = n(rng);
  return g;
}

bool same_gaussian(const GaussianPrimitive& a, const GaussianPrimitive& b) {
  bool rot = true;
  for (int c = 0; c < 4; ++c) rot = rot && a.rotation[c] == b.rotation[c];
  return a.mean == b.mean && rot && a.log_scales == b.log_scales &&
         a.opacity_logit == b.opacity_logit && a.sh == b.sh &&
         a.semantic_logits == b.semantic_logits &&
         a.intensity_logit == b.intensity_logit;
}

}  // namespace

TEST_CASE("one clone splits the donor opacity by the closed form") {
  std::vector<GaussianPrimitive> gs = {
      make_gaussian(0.75, Vec3(1, 2, 3), 10),
      make_gaussian(0.001, Vec3(-4, 0, 2), 11)};
  const GaussianPrimitive donor_before = gs[0];

  std::mt19937_64 rng(3);
  const auto touched = density_control_step(gs, rng);
  REQUIRE(touched == std::vector<int>{0, 1});

  // 1 - (1 - 0.75)^(1/2) = 0.5 shared by donor and relocated clone
  REQUIRE(gs[0].opacity() == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(gs[1].opacity() == Catch::Approx(0.5).margin(1e-12));
  for (int c = 0; c < 3; ++c)
    REQUIRE(gs[0].log_scales[c] ==
            Catch::Approx(donor_before.log_scales[c] - 0.5 * std::log(2.0))
                .margin(1e-12));

  // the relocated entry is a full copy of the shrunk donor
  REQUIRE(same_gaussian(gs[1], gs[0]));
  REQUIRE(gs[1].mean == donor_before.mean);
  REQUIRE(gs[1].sh == donor_before.sh);
}

TEST_CASE("several clones of one donor preserve the blended coverage") {
  std::vector<GaussianPrimitive> gs = {make_gaussian(0.75, Vec3(0, 0, 5), 20)};
  for (int i = 0; i < 3; ++i)
    gs.push_back(make_gaussian(0.002, Vec3(i, -i, 1), 30 + i));

  std::mt19937_64 rng(7);
  const auto touched = density_control_step(gs, rng);
  REQUIRE(touched == std::vector<int>{0, 1, 2, 3});

  const double o_new = 1.0 - std::pow(0.25, 0.25);
  for (const auto& g : gs) {
    REQUIRE(g.opacity() == Catch::Approx(o_new).margin(1e-12));
    REQUIRE(g.log_scales[0] ==
            Catch::Approx(std::log(0.2) - 0.5 * std::log(4.0)).margin(1e-12));
  }
  // alpha of the stack of four equals the original single donor alpha
  REQUIRE(1.0 - std::pow(1.0 - gs[0].opacity(), 4.0) ==
          Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("density control is a no-op without dead or without alive gaussians") {
  std::mt19937_64 rng(5);

  std::vector<GaussianPrimitive> healthy = {make_gaussian(0.4, Vec3(1, 0, 0), 1),
                                            make_gaussian(0.9, Vec3(0, 1, 0), 2)};
  const auto before = healthy;
  REQUIRE(density_control_step(healthy, rng).empty());
  for (std::size_t i = 0; i < healthy.size(); ++i)
    REQUIRE(same_gaussian(healthy[i], before[i]));

  std::vector<GaussianPrimitive> doomed = {make_gaussian(0.001, Vec3(1, 0, 0), 3),
                                           make_gaussian(0.002, Vec3(0, 1, 0), 4)};
  const auto doomed_before = doomed;
  REQUIRE(density_control_step(doomed, rng).empty());
  for (std::size_t i = 0; i < doomed.size(); ++i)
    REQUIRE(same_gaussian(doomed[i], doomed_before[i]));

  std::vector<GaussianPrimitive> empty;
  REQUIRE(density_control_step(empty, rng).empty());
}

TEST_CASE("density control preserves the gaussian count and relocates every dead entry") {
  std::mt19937_64 make(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GaussianPrimitive> gs;
  std::vector<int> dead_idx;
  for (int i = 0; i < 60; ++i) {
    const double o = u(make) < 0.3 ? 1e-4 + 3e-3 * u(make) : 0.05 + 0.9 * u(make);
    gs.push_back(make_gaussian(o, Vec3(u(make), u(make), 2 + u(make)), 100 + i));
    if (o < 0.005) dead_idx.push_back(i);
  }
  REQUIRE(!dead_idx.empty());
  const auto before = gs;

  std::mt19937_64 rng(9);
  const auto touched = density_control_step(gs, rng);
  REQUIRE(gs.size() == before.size());
  REQUIRE(std::is_sorted(touched.begin(), touched.end()));

  for (int d : dead_idx) {
    // every dead slot now mirrors some donor, at a donor's former position
    REQUIRE(gs[d].opacity() > before[d].opacity());
    bool found = false;
    for (std::size_t j = 0; j < before.size(); ++j)
      if (before[j].opacity() >= 0.005 && gs[d].mean == before[j].mean) {
        found = true;
        REQUIRE(same_gaussian(gs[d], gs[j]));
      }
    REQUIRE(found);
  }

  // untouched gaussians are bitwise intact
  std::size_t ti = 0;
  for (int i = 0; i < static_cast<int>(gs.size()); ++i) {
    if (ti < touched.size() && touched[ti] == i) {
      ++ti;
      continue;
    }
    REQUIRE(same_gaussian(gs[i], before[i]));
  }
}

TEST_CASE("density control is deterministic for a fixed seed") {
  auto build = [] {
    std::vector<GaussianPrimitive> gs;
    for (int i = 0; i < 25; ++i)
      gs.push_back(make_gaussian(i % 4 == 0 ? 0.001 : 0.2 + 0.02 * i,
                                 Vec3(i, -i, 3), 500 + i));
    return gs;
  };
  auto a = build();
  auto b = build();
  std::mt19937_64 ra(77), rb(77);
  const auto ta = density_control_step(a, ra);
  const auto tb = density_control_step(b, rb);
  REQUIRE(ta == tb);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(same_gaussian(a[i], b[i]));
}
