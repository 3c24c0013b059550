#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <glob.h>

#include "idprobe/error.hpp"
#include "idprobe/profile.hpp"
#include "idprobe/stats.hpp"
#include "idprobe/tensor_io.hpp"
#include "idprobe/twonn.hpp"

namespace idprobe {

/// Estimates every layer of one snapshot. Input problems abort with the layer
/// named; estimation failures are kept in the profile as failed entries.
inline LayerProfile profile_run(const RunManifest& run, const EstimateOptions& opts) {
  std::vector<ProfileEntry> entries;
  for (std::size_t i = 0; i < run.layers.size(); ++i) {
    const auto& ref = run.layers[i];
    ProfileEntry entry{ref.layer_index, ref.layer_name, std::nullopt, {}};
    try {
      const LayerDump dump = run.load_layer(i);
      entry.estimate = estimate_cloud(dump.cloud, opts);
    } catch (const Error& e) {
      const std::string where = "run '" + run.run_id + "' step " + std::to_string(run.step) + " layer " +
                                std::to_string(ref.layer_index) + " ('" + ref.layer_name + "')";
      if (e.kind() != ErrorKind::estimation) throw Error(e.kind(), where + ": " + e.what());
      entry.failure = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return LayerProfile(run.step, std::move(entries));
}

/// Profiles each snapshot whose step lies in `window`.
inline ProfileSeries profile_series(const RunSeries& run, const EstimateOptions& opts,
                                    std::optional<StepRange> window = std::nullopt) {
  ProfileSeries series(run.run_id);
  for (const auto& snap : run.snapshots) {
    if (window && (snap.step < window->first || snap.step > window->last)) continue;
    series.add(profile_run(snap, opts), snap.metadata.train_accuracy, snap.metadata.val_accuracy);
  }
  if (series.empty()) throw input_error("run '" + run.run_id + "' has no snapshot inside the step window");
  return series;
}

/// Expands shell-style patterns to run directories, sorted and deduplicated.
inline std::vector<std::filesystem::path> expand_run_globs(const std::vector<std::string>& patterns) {
  std::vector<std::filesystem::path> out;
  for (const auto& pattern : patterns) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i)
        if (std::filesystem::is_directory(g.gl_pathv[i])) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Sweep record of a run taken at its final snapshot.
inline RunRecord final_run_record(const RunSeries& run, const EstimateOptions& opts) {
  const RunManifest& last = run.snapshots.back();
  return make_run_record(last, profile_run(last, opts));
}

}  // namespace idprobe
