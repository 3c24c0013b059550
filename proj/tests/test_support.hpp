#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <unistd.h>
#include <vector>

#include "idprobe/tensor_io.hpp"

namespace idprobe::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("idprobe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline PointCloud uniform_cloud(std::size_t n, std::size_t dims, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> v(n * dims);
  for (auto& x : v) x = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return PointCloud(n, dims, std::move(v));
}

// Reference neighbour search: every distance by a plain scalar loop, then a
// full sort by (distance, index).
struct ReferenceNeighbors {
  std::size_t nn1, nn2;
  double r1, r2;
};

inline std::vector<ReferenceNeighbors> reference_two_nearest(const PointCloud& c) {
  std::vector<ReferenceNeighbors> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < c.dims(); ++k) {
        const double d = c(i, k) - c(j, k);
        s += d * d;
      }
      all.emplace_back(s, j);
    }
    std::partial_sort(all.begin(), all.begin() + 2, all.end());
    out.push_back({all[0].second, all[1].second, std::sqrt(all[0].first), std::sqrt(all[1].first)});
  }
  return out;
}

// Student t density integrated by composite Simpson from 0 to |t|.
inline double oracle_student_t_cdf(double t, double dof) {
  const double log_norm = std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2) - 0.5 * std::log(dof * M_PI);
  auto pdf = [&](double x) { return std::exp(log_norm - (dof + 1) / 2 * std::log1p(x * x / dof)); };
  const double a = std::fabs(t);
  const int steps = 200000;
  const double h = a / steps;
  double sum = pdf(0) + pdf(a);
  for (int i = 1; i < steps; ++i) sum += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
  const double half = sum * h / 3.0;
  return t >= 0 ? 0.5 + half : 0.5 - half;
}

}  // namespace idprobe::testing
