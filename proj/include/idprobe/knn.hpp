#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "idprobe/error.hpp"
#include "idprobe/parallel.hpp"
#include "idprobe/tensor_io.hpp"

namespace idprobe {

// Only Euclidean distance is implemented.
enum class Metric { euclidean };

struct NeighborRecord {
  std::size_t index = 0;
  std::size_t nn1_index = 0;
  std::size_t nn2_index = 0;
  double r1 = 0.0;
  double r2 = 0.0;
  double mu = 0.0;  // r2 / r1
};

struct NeighborRatios {
  std::vector<NeighborRecord> records;  // one per point, in point order
  std::vector<std::size_t> excluded;    // ids removed upstream by dedup

  std::vector<double> mus() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.mu);
    return out;
  }
};

struct DedupResult {
  PointCloud cloud;
  std::vector<std::size_t> removed;  // ascending original ids
};

/// Drops exact componentwise duplicates, keeping the first occurrence.
inline DedupResult dedup(const PointCloud& cloud) {
  struct RowLess {
    const PointCloud* c;
    bool operator()(std::size_t a, std::size_t b) const {
      auto ra = c->row(a), rb = c->row(b);
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    }
  };
  std::vector<std::size_t> order(cloud.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Stable sort keeps equal rows in original order, so the first of each run is the survivor.
  std::stable_sort(order.begin(), order.end(), RowLess{&cloud});

  std::vector<bool> drop(cloud.size(), false);
  for (std::size_t k = 1; k < order.size(); ++k) {
    auto prev = cloud.row(order[k - 1]), cur = cloud.row(order[k]);
    // -0.0 == 0.0 counts as equal; it yields a zero distance all the same.
    if (std::equal(prev.begin(), prev.end(), cur.begin())) drop[order[k]] = true;
  }

  std::vector<std::size_t> kept, removed;
  for (std::size_t i = 0; i < cloud.size(); ++i) (drop[i] ? removed : kept).push_back(i);
  if (removed.empty()) return {cloud, {}};
  if (kept.size() < 3)
    throw input_error("point cloud '" + cloud.label() + "' has " + std::to_string(kept.size()) +
                      " distinct points after removing duplicates; at least 3 are required");
  return {cloud.select(kept), std::move(removed)};
}

namespace detail {

inline constexpr std::size_t knn_candidate_block = 4;

}  // namespace detail

/// First and second nearest neighbours of every point by exact scan.
/// Squared distances accumulate in f64 in column order, so each distance is
/// bitwise reproducible; equal distances resolve to the smaller index.
/// `threads` = 0 uses default_thread_count().
inline NeighborRatios two_nearest(const PointCloud& cloud, unsigned threads = 0) {
  const std::size_t n = cloud.size();
  const std::size_t dims = cloud.dims();
  const double* base = cloud.data().data();
  NeighborRatios out;
  out.records.resize(n);

  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = begin; i < end; ++i) {
      const double* q = base + i * dims;
      double best1 = inf, best2 = inf;
      std::size_t idx1 = n, idx2 = n;
      auto offer = [&](double d, std::size_t j) {
        if (d < best1) {
          best2 = best1; idx2 = idx1;
          best1 = d; idx1 = j;
        } else if (d < best2) {
          best2 = d; idx2 = j;
        }
      };
      // Independent accumulators over a block of candidates; each one still
      // sums its own coordinates strictly in order.
      std::size_t j = 0;
      for (; j + detail::knn_candidate_block <= n; j += detail::knn_candidate_block) {
        const double* p0 = base + j * dims;
        const double* p1 = p0 + dims;
        const double* p2 = p1 + dims;
        const double* p3 = p2 + dims;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (std::size_t k = 0; k < dims; ++k) {
          const double qk = q[k];
          const double d0 = qk - p0[k], d1 = qk - p1[k], d2 = qk - p2[k], d3 = qk - p3[k];
          s0 += d0 * d0;
          s1 += d1 * d1;
          s2 += d2 * d2;
          s3 += d3 * d3;
        }
        if (j != i) offer(s0, j);
        if (j + 1 != i) offer(s1, j + 1);
        if (j + 2 != i) offer(s2, j + 2);
        if (j + 3 != i) offer(s3, j + 3);
      }
      for (; j < n; ++j) {
        if (j == i) continue;
        const double* p = base + j * dims;
        double s = 0.0;
        for (std::size_t k = 0; k < dims; ++k) {
          const double d = q[k] - p[k];
          s += d * d;
        }
        offer(s, j);
      }
      if (best1 == 0.0)
        throw estimation_error("points " + std::to_string(i) + " and " + std::to_string(idx1) +
                               " coincide (r1 = 0); deduplicate the cloud first");
      const double r1 = std::sqrt(best1);
      const double r2 = std::sqrt(best2);
      out.records[i] = NeighborRecord{i, idx1, idx2, r1, r2, r2 / r1};
    }
  });
  return out;
}

}  // namespace idprobe
