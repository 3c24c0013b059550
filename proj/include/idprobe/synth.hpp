#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "idprobe/error.hpp"
#include "idprobe/random.hpp"
#include "idprobe/tensor_io.hpp"

namespace idprobe {

enum class ManifoldKind { uniform_cube, hypersphere_surface, gaussian_blob, swiss_roll, pareto_mu_quantiles };

inline std::string_view to_string(ManifoldKind k) {
  switch (k) {
    case ManifoldKind::uniform_cube: return "uniform_cube";
    case ManifoldKind::hypersphere_surface: return "hypersphere_surface";
    case ManifoldKind::gaussian_blob: return "gaussian_blob";
    case ManifoldKind::swiss_roll: return "swiss_roll";
    case ManifoldKind::pareto_mu_quantiles: return "pareto_mu_quantiles";
  }
  return "unknown";
}

// Accepts the canonical names plus the short CLI aliases.
inline std::optional<ManifoldKind> parse_manifold_kind(std::string_view s) {
  if (s == "uniform_cube" || s == "cube") return ManifoldKind::uniform_cube;
  if (s == "hypersphere_surface" || s == "sphere") return ManifoldKind::hypersphere_surface;
  if (s == "gaussian_blob" || s == "gaussian") return ManifoldKind::gaussian_blob;
  if (s == "swiss_roll" || s == "swiss") return ManifoldKind::swiss_roll;
  if (s == "pareto_mu_quantiles" || s == "pareto") return ManifoldKind::pareto_mu_quantiles;
  return std::nullopt;
}

struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::uniform_cube;
  int d = 2;                   // true intrinsic dimension
  std::size_t ambient = 2;     // embedding dimension D
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;    // isotropic ambient Gaussian noise
};

/// Coordinates needed before embedding: d for cubes and blobs, d + 1 for a
/// d-sphere, 3 for the swiss roll.
inline std::size_t intrinsic_coordinates(const ManifoldSpec& spec) {
  switch (spec.kind) {
    case ManifoldKind::hypersphere_surface: return static_cast<std::size_t>(spec.d) + 1;
    case ManifoldKind::swiss_roll: return 3;
    default: return static_cast<std::size_t>(spec.d);
  }
}

inline void validate(const ManifoldSpec& spec) {
  const std::string kind(to_string(spec.kind));
  if (spec.kind == ManifoldKind::pareto_mu_quantiles)
    throw input_error("pareto_mu_quantiles produces ratios, not a point cloud; use pareto_mu_quantiles()");
  if (spec.d < 1) throw input_error(kind + ": intrinsic dimension must be >= 1");
  if (spec.n < 3) throw input_error(kind + ": need at least 3 points");
  if (spec.kind == ManifoldKind::swiss_roll && spec.d != 2)
    throw input_error("swiss_roll has intrinsic dimension 2, got d = " + std::to_string(spec.d));
  if (spec.ambient < intrinsic_coordinates(spec))
    throw input_error(kind + ": ambient dimension " + std::to_string(spec.ambient) + " is smaller than the " +
                      std::to_string(intrinsic_coordinates(spec)) + " coordinates the manifold needs (d = " +
                      std::to_string(spec.d) + ")");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma))
    throw input_error(kind + ": noise sigma must be a finite value >= 0");
}

/// Isometric affine map R^m -> R^D: x = offset + basis * p, basis with orthonormal columns.
struct Embedding {
  std::size_t ambient = 0;
  std::size_t intrinsic = 0;
  std::vector<double> basis;  // column-major: column c is basis[c*ambient .. (c+1)*ambient)
  std::vector<double> offset;
};

/// Orthonormal columns from Gram-Schmidt (two passes) on a seeded Gaussian
/// matrix, i.e. the Q factor of its QR decomposition.
inline Embedding random_embedding(std::size_t ambient, std::size_t intrinsic, std::uint64_t seed) {
  Embedding e{ambient, intrinsic, std::vector<double>(ambient * intrinsic), std::vector<double>(ambient)};
  Rng rng(derive_seed(seed, 1));
  for (std::size_t c = 0; c < intrinsic; ++c) {
    double* col = e.basis.data() + c * ambient;
    for (;;) {
      for (std::size_t k = 0; k < ambient; ++k) col[k] = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t prev = 0; prev < c; ++prev) {
          const double* q = e.basis.data() + prev * ambient;
          double dot = 0.0;
          for (std::size_t k = 0; k < ambient; ++k) dot += q[k] * col[k];
          for (std::size_t k = 0; k < ambient; ++k) col[k] -= dot * q[k];
        }
      }
      double norm = 0.0;
      for (std::size_t k = 0; k < ambient; ++k) norm += col[k] * col[k];
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t k = 0; k < ambient; ++k) col[k] /= norm;
        break;
      }
    }
  }
  Rng shift(derive_seed(seed, 2));
  for (auto& v : e.offset) v = shift.normal();
  return e;
}

struct SynthSample {
  PointCloud cloud;
  std::vector<double> intrinsic;  // n x intrinsic_dims, row-major, before embedding
  std::size_t intrinsic_dims = 0;
  Embedding embedding;
};

/// Samples the manifold and embeds it with optional noise; deterministic in the seed.
inline SynthSample generate_detailed(const ManifoldSpec& spec) {
  validate(spec);
  const std::size_t m = intrinsic_coordinates(spec);
  std::vector<double> coords(spec.n * m);
  Rng rng(derive_seed(spec.seed, 3));
  for (std::size_t i = 0; i < spec.n; ++i) {
    double* p = coords.data() + i * m;
    switch (spec.kind) {
      case ManifoldKind::uniform_cube:
        for (std::size_t k = 0; k < m; ++k) p[k] = rng.uniform();
        break;
      case ManifoldKind::gaussian_blob:
        for (std::size_t k = 0; k < m; ++k) p[k] = rng.normal();
        break;
      case ManifoldKind::hypersphere_surface: {
        double norm = 0.0;
        do {
          norm = 0.0;
          for (std::size_t k = 0; k < m; ++k) {
            p[k] = rng.normal();
            norm += p[k] * p[k];
          }
        } while (norm < 1e-24);
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < m; ++k) p[k] /= norm;
        break;
      }
      case ManifoldKind::swiss_roll: {
        const double t = 1.5 * M_PI * (1.0 + 2.0 * rng.uniform());
        const double h = 21.0 * rng.uniform();
        p[0] = t * std::cos(t);
        p[1] = h;
        p[2] = t * std::sin(t);
        break;
      }
      case ManifoldKind::pareto_mu_quantiles:
        break;  // rejected by validate()
    }
  }

  Embedding emb = random_embedding(spec.ambient, m, spec.seed);
  std::vector<double> data(spec.n * spec.ambient);
  Rng noise(derive_seed(spec.seed, 4));
  for (std::size_t i = 0; i < spec.n; ++i) {
    double* x = data.data() + i * spec.ambient;
    const double* p = coords.data() + i * m;
    for (std::size_t k = 0; k < spec.ambient; ++k) {
      double v = emb.offset[k];
      for (std::size_t c = 0; c < m; ++c) v += emb.basis[c * spec.ambient + k] * p[c];
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise.normal();
      x[k] = v;
    }
  }
  std::string label = std::string(to_string(spec.kind)) + "_d" + std::to_string(spec.d);
  return SynthSample{PointCloud(spec.n, spec.ambient, std::move(data), Dtype::f64, std::move(label)),
                     std::move(coords), m, std::move(emb)};
}

inline PointCloud generate(const ManifoldSpec& spec) { return generate_detailed(spec).cloud; }

/// Exact quantiles of F(mu) = 1 - mu^(-d): mu_i = (1 - i/(n+1))^(-1/d), i = 1..n.
inline std::vector<double> pareto_mu_quantiles(double d, std::size_t n) {
  if (!(d > 0.0) || !std::isfinite(d)) throw input_error("pareto quantiles: d must be positive");
  std::vector<double> mu(n);
  const double denom = static_cast<double>(n + 1);
  for (std::size_t i = 1; i <= n; ++i) mu[i - 1] = std::pow(1.0 - static_cast<double>(i) / denom, -1.0 / d);
  return mu;
}

}  // namespace idprobe
