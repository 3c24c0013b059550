#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "idprobe/error.hpp"
#include "idprobe/twonn.hpp"

namespace idprobe {

struct ProfileEntry {
  int layer_index = 0;
  std::string layer_name;
  // Empty when estimation failed for this layer; `failure` then says why.
  std::optional<IdEstimate> estimate;
  std::string failure;
};

/// Per-layer estimates of one model snapshot. Entries are kept sorted by
/// layer index, whatever order they were added in.
class LayerProfile {
 public:
  LayerProfile() = default;
  LayerProfile(std::int64_t step, std::vector<ProfileEntry> entries) : step_(step), entries_(std::move(entries)) {
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const ProfileEntry& a, const ProfileEntry& b) { return a.layer_index < b.layer_index; });
    if (entries_.empty()) throw input_error("profile has no layers");
    validate();
  }

  // Convenience for hand-built profiles: layer i (1-based) gets d_hats[i-1].
  static LayerProfile from_values(const std::vector<double>& d_hats, std::int64_t step = 0) {
    std::vector<ProfileEntry> entries;
    for (std::size_t i = 0; i < d_hats.size(); ++i) {
      IdEstimate e;
      e.d_hat = d_hats[i];
      entries.push_back({static_cast<int>(i) + 1, "layer_" + std::to_string(i + 1), e, {}});
    }
    return LayerProfile(step, std::move(entries));
  }

  void add(ProfileEntry entry) {
    auto pos = std::upper_bound(entries_.begin(), entries_.end(), entry.layer_index,
                                [](int idx, const ProfileEntry& e) { return idx < e.layer_index; });
    entries_.insert(pos, std::move(entry));
    validate();
  }

  std::int64_t step() const noexcept { return step_; }
  const std::vector<ProfileEntry>& entries() const noexcept { return entries_; }

  const ProfileEntry* first_failure() const {
    for (const auto& e : entries_)
      if (!e.estimate) return &e;
    return nullptr;
  }

 private:
  void validate() const {
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (entries_[i].layer_index == entries_[i - 1].layer_index)
        throw input_error("profile has duplicate layer_index " + std::to_string(entries_[i].layer_index));
  }

  std::int64_t step_ = 0;
  std::vector<ProfileEntry> entries_;
};

namespace detail {

inline Error failed_layer_error(const ProfileEntry& e) {
  return estimation_error("layer " + std::to_string(e.layer_index) + " ('" + e.layer_name +
                          "') has no estimate: " + e.failure);
}

inline void require_entries(const LayerProfile& p) {
  if (p.entries().empty()) throw input_error("profile has no layers");
}

}  // namespace detail

/// Last-layer ID: the estimate at the highest layer index.
inline double llid(const LayerProfile& p) {
  detail::require_entries(p);
  const auto& last = p.entries().back();
  if (!last.estimate) throw detail::failed_layer_error(last);
  return last.estimate->d_hat;
}

struct PeakId {
  double value = 0.0;
  int layer_index = 0;
};

/// Peak ID over all layers; ties go to the earliest layer. Any failed layer is an error.
inline PeakId pid(const LayerProfile& p) {
  detail::require_entries(p);
  if (const auto* bad = p.first_failure()) throw detail::failed_layer_error(*bad);
  PeakId best{p.entries().front().estimate->d_hat, p.entries().front().layer_index};
  for (const auto& e : p.entries())
    if (e.estimate->d_hat > best.value) best = {e.estimate->d_hat, e.layer_index};
  return best;
}

inline double pid_llid_ratio(const LayerProfile& p) {
  const PeakId peak = pid(p);
  const double last = llid(p);
  if (!(last > 0.0)) throw estimation_error("LLID is " + std::to_string(last) + "; ratio undefined");
  return peak.value / last;
}

struct SeriesPoint {
  std::int64_t step = 0;
  double llid = 0.0;
  double pid = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

/// Profiles of one run over training steps, with the scalar tracks derived from them.
class ProfileSeries {
 public:
  explicit ProfileSeries(std::string run_id) : run_id_(std::move(run_id)) {}

  void add(LayerProfile profile, double train_accuracy, double val_accuracy) {
    if (!snapshots_.empty() && profile.step() <= snapshots_.back().step())
      throw input_error("series '" + run_id_ + "': step " + std::to_string(profile.step()) +
                        " does not follow step " + std::to_string(snapshots_.back().step()));
    track_.push_back({profile.step(), llid(profile), pid(profile).value, train_accuracy, val_accuracy});
    snapshots_.push_back(std::move(profile));
  }

  const std::string& run_id() const noexcept { return run_id_; }
  const std::vector<LayerProfile>& snapshots() const noexcept { return snapshots_; }
  const std::vector<SeriesPoint>& track() const noexcept { return track_; }
  bool empty() const noexcept { return snapshots_.empty(); }

 private:
  std::string run_id_;
  std::vector<LayerProfile> snapshots_;
  std::vector<SeriesPoint> track_;
};

struct StepRange {
  std::int64_t first = 0;
  std::int64_t last = 0;  // inclusive
};

struct MinLlid {
  double value = 0.0;
  std::int64_t step = 0;
};

/// Minimum LLID over the snapshots inside `window` (all when absent); earliest step on ties.
inline MinLlid min_llid(const ProfileSeries& series, std::optional<StepRange> window = std::nullopt) {
  if (series.empty()) throw input_error("series '" + series.run_id() + "' is empty");
  std::optional<MinLlid> best;
  for (const auto& pt : series.track()) {
    if (window && (pt.step < window->first || pt.step > window->last)) continue;
    if (!best || pt.llid < best->value) best = MinLlid{pt.llid, pt.step};
  }
  if (!best) throw input_error("series '" + series.run_id() + "' has no snapshot inside the step window");
  return *best;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const IdEstimate& e) {
  nlohmann::ordered_json j;
  j["d_hat"] = e.d_hat;
  j["n_total"] = e.n_total;
  j["n_used"] = e.n_used;
  j["n_duplicates"] = e.n_duplicates;
  j["discard_fraction"] = e.discard_fraction;
  j["rmse"] = e.rmse;
  j["ci_low"] = e.ci_low ? nlohmann::ordered_json(*e.ci_low) : nlohmann::ordered_json(nullptr);
  j["ci_high"] = e.ci_high ? nlohmann::ordered_json(*e.ci_high) : nlohmann::ordered_json(nullptr);
  j["seed"] = e.seed;
  return j;
}

inline nlohmann::ordered_json to_json(const LayerProfile& p) {
  nlohmann::ordered_json j;
  j["step"] = p.step();
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : p.entries()) {
    nlohmann::ordered_json row;
    row["layer_index"] = e.layer_index;
    row["layer_name"] = e.layer_name;
    if (e.estimate) row["estimate"] = to_json(*e.estimate);
    else row["error"] = e.failure;
    j["entries"].push_back(row);
  }
  if (!p.first_failure()) {
    const PeakId peak = pid(p);
    j["llid"] = llid(p);
    j["pid"] = peak.value;
    j["pid_layer_index"] = peak.layer_index;
    j["pid_llid_ratio"] = pid_llid_ratio(p);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const ProfileSeries& s) {
  nlohmann::ordered_json j;
  j["run_id"] = s.run_id();
  j["snapshots"] = nlohmann::ordered_json::array();
  for (const auto& p : s.snapshots()) j["snapshots"].push_back(to_json(p));
  nlohmann::ordered_json track = nlohmann::ordered_json::array();
  for (const auto& pt : s.track())
    track.push_back({{"step", pt.step}, {"llid", pt.llid}, {"pid", pt.pid},
                     {"train_accuracy", pt.train_accuracy}, {"val_accuracy", pt.val_accuracy}});
  j["track"] = track;
  if (!s.empty()) {
    const MinLlid m = min_llid(s);
    j["min_llid"] = {{"value", m.value}, {"step", m.step}};
  }
  return j;
}

}  // namespace idprobe
