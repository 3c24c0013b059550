#include <gtest/gtest.h>

#include <cmath>

#include "idprobe/synth.hpp"
#include "idprobe/twonn.hpp"

using namespace idprobe;

TEST(Synth, SameSeedSameBytes) {
  const ManifoldSpec spec{ManifoldKind::uniform_cube, 2, 2, 4, 7, 0.0};
  EXPECT_EQ(generate(spec), generate(spec));
  ManifoldSpec other = spec;
  other.seed = 8;
  EXPECT_FALSE(generate(spec) == generate(other));
}

TEST(Synth, CircleLiesOnUnitSphere) {
  const auto s = generate_detailed({ManifoldKind::hypersphere_surface, 1, 16, 500, 3, 0.0});
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    double r2 = 0.0;
    for (std::size_t k = 0; k < 16; ++k) {
      const double v = s.cloud(i, k) - s.embedding.offset[k];
      r2 += v * v;
    }
    EXPECT_NEAR(std::sqrt(r2), 1.0, 1e-9);
  }
}

TEST(Synth, EmbeddingIsAnIsometry) {
  const auto s = generate_detailed({ManifoldKind::uniform_cube, 5, 64, 60, 4, 0.0});
  ASSERT_EQ(s.intrinsic_dims, 5u);
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t j = i + 1; j < 60; ++j) {
      double amb = 0.0, in = 0.0;
      for (std::size_t k = 0; k < 64; ++k) amb += std::pow(s.cloud(i, k) - s.cloud(j, k), 2);
      for (std::size_t k = 0; k < 5; ++k) in += std::pow(s.intrinsic[i * 5 + k] - s.intrinsic[j * 5 + k], 2);
      EXPECT_NEAR(std::sqrt(amb), std::sqrt(in), 1e-9);
    }
}

TEST(Synth, NoiseMovesPointsOffTheManifold) {
  ManifoldSpec spec{ManifoldKind::uniform_cube, 2, 8, 100, 5, 0.0};
  const auto clean = generate(spec);
  spec.noise_sigma = 0.01;
  const auto noisy = generate(spec);
  double max_shift = 0.0;
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t k = 0; k < 8; ++k) max_shift = std::max(max_shift, std::fabs(noisy(i, k) - clean(i, k)));
  EXPECT_GT(max_shift, 0.0);
  EXPECT_LT(max_shift, 0.1);
}

TEST(Synth, InvalidSpecs) {
  EXPECT_THROW(generate({ManifoldKind::uniform_cube, 5, 3, 100, 0, 0.0}), Error);
  EXPECT_THROW(generate({ManifoldKind::hypersphere_surface, 2, 2, 100, 0, 0.0}), Error);
  EXPECT_THROW(generate({ManifoldKind::swiss_roll, 3, 10, 100, 0, 0.0}), Error);
  EXPECT_THROW(generate({ManifoldKind::pareto_mu_quantiles, 2, 2, 100, 0, 0.0}), Error);
  EXPECT_THROW(generate({ManifoldKind::gaussian_blob, 0, 2, 100, 0, 0.0}), Error);
  EXPECT_THROW(generate({ManifoldKind::gaussian_blob, 2, 2, 100, 0, -1.0}), Error);
  try {
    generate({ManifoldKind::uniform_cube, 5, 3, 100, 0, 0.0});
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
  }
}

TEST(Synth, KindNames) {
  EXPECT_EQ(parse_manifold_kind("uniform_cube"), ManifoldKind::uniform_cube);
  EXPECT_EQ(parse_manifold_kind("swiss"), ManifoldKind::swiss_roll);
  EXPECT_FALSE(parse_manifold_kind("torus").has_value());
  for (auto k : {ManifoldKind::uniform_cube, ManifoldKind::hypersphere_surface, ManifoldKind::gaussian_blob,
                 ManifoldKind::swiss_roll, ManifoldKind::pareto_mu_quantiles})
    EXPECT_EQ(parse_manifold_kind(to_string(k)), k);
}

TEST(Pareto, SmallHandValues) {
  const auto mu = pareto_mu_quantiles(1.0, 3);
  ASSERT_EQ(mu.size(), 3u);
  EXPECT_NEAR(mu[0], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(mu[1], 2.0, 1e-15);
  EXPECT_NEAR(mu[2], 4.0, 1e-15);
}

TEST(Pareto, EstimatorRecoversDimension) {
  for (double d : {3.0, 8.0}) {
    const auto mu = pareto_mu_quantiles(d, 1000);
    EXPECT_NEAR(estimate(ratios_from_mu(mu)).d_hat, d, 1e-3);
  }
}
