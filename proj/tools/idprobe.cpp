// idprobe: intrinsic-dimension profiling of activation point clouds.
//
// Exit codes: 0 success, 2 input or configuration error, 3 estimation failure.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idprobe/idprobe.hpp"

namespace fs = std::filesystem;
using idprobe::Error;
using idprobe::ErrorKind;
using json = nlohmann::ordered_json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input = 2;
constexpr int exit_estimation = 3;

struct EstimateFlags {
  double discard_frac = 0.1;
  std::size_t subsample = 10000;  // 0 disables the cap
  std::uint64_t seed = 0;
  std::size_t bootstrap = 0;

  void attach(CLI::App* app) {
    app->add_option("--discard-frac", discard_frac, "Fraction of largest ratios dropped before the fit")
        ->capture_default_str();
    app->add_option("--subsample", subsample, "Cap on points per cloud (0 = no cap)")->capture_default_str();
    app->add_option("--seed", seed, "Seed for subsampling and bootstrap")->capture_default_str();
    app->add_option("--bootstrap", bootstrap, "Bootstrap rounds for a 95% interval (0 = off)")
        ->capture_default_str();
  }

  idprobe::EstimateOptions options() const {
    idprobe::EstimateOptions o;
    o.discard_fraction = discard_frac;
    o.subsample_cap = subsample == 0 ? std::nullopt : std::optional<std::size_t>(subsample);
    o.seed = seed;
    o.bootstrap_rounds = bootstrap;
    return o;
  }
};

void emit(const std::string& destination, const std::string& body) {
  if (destination.empty() || destination == "-") {
    std::cout << body;
    std::cout.flush();
    return;
  }
  idprobe::detail::write_file(destination, body);
}

std::optional<idprobe::StepRange> parse_steps(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw idprobe::input_error("--steps expects a..b, got '" + text + "'");
  auto parse = [&](std::string_view s, std::int64_t fallback) {
    if (s.empty()) return fallback;
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw idprobe::input_error("--steps: cannot parse '" + std::string(s) + "'");
    return v;
  };
  const std::string_view all(text);
  idprobe::StepRange r{parse(all.substr(0, dots), INT64_MIN), parse(all.substr(dots + 2), INT64_MAX)};
  if (r.first > r.last) throw idprobe::input_error("--steps range is empty");
  return r;
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateCmd {
  std::string input;
  std::string format;
  std::string out = "json";
  EstimateFlags flags;

  int run() const {
    idprobe::CloudFormat fmt = idprobe::CloudFormat::idac;
    if (format == "csv" || (format.empty() && fs::path(input).extension() == ".csv")) fmt = idprobe::CloudFormat::csv;
    const auto cloud = idprobe::load_cloud(input, fmt);
    const auto est = idprobe::estimate_cloud(cloud, flags.options());
    if (out == "csv") {
      std::cout << "input,d_hat,n_total,n_used,n_duplicates,discard_fraction,rmse,ci_low,ci_high,seed\n"
                << idprobe::csv_escape(input) << ',' << idprobe::format_number(est.d_hat) << ',' << est.n_total
                << ',' << est.n_used << ',' << est.n_duplicates << ','
                << idprobe::format_number(est.discard_fraction) << ',' << idprobe::format_number(est.rmse) << ','
                << (est.ci_low ? idprobe::format_number(*est.ci_low) : "") << ','
                << (est.ci_high ? idprobe::format_number(*est.ci_high) : "") << ',' << est.seed << '\n';
    } else {
      json j;
      j["input"] = input;
      j["label"] = cloud.label();
      j["n"] = cloud.size();
      j["D"] = cloud.dims();
      j["estimate"] = idprobe::to_json(est);
      std::cout << j.dump(2) << '\n';
    }
    return exit_ok;
  }
};

// ---------------------------------------------------------------------------
// profile

struct ProfileCmd {
  std::string run_dir;
  std::string steps;
  std::string out = "-";
  std::string format = "json";
  EstimateFlags flags;

  int run() const {
    const auto window = parse_steps(steps);
    const auto series_on_disk = idprobe::load_series(run_dir);
    const auto opts = flags.options();

    idprobe::ProfileSeries series(series_on_disk.run_id);
    for (const auto& snap : series_on_disk.snapshots) {
      if (window && (snap.step < window->first || snap.step > window->last)) continue;
      auto profile = idprobe::profile_run(snap, opts);
      if (const auto* bad = profile.first_failure()) {
        std::cerr << "idprobe profile: run '" << snap.run_id << "' step " << snap.step << " layer "
                  << bad->layer_index << " ('" << bad->layer_name << "'): " << bad->failure << '\n';
        std::cerr << idprobe::to_json(profile).dump(2) << '\n';
        return exit_estimation;
      }
      series.add(std::move(profile), snap.metadata.train_accuracy, snap.metadata.val_accuracy);
    }
    if (series.empty()) throw idprobe::input_error("run '" + series_on_disk.run_id + "' has no snapshot in " + steps);

    if (format == "csv") {
      std::string body = "step,layer_index,layer_name,d_hat,n_used\n";
      for (const auto& p : series.snapshots())
        for (const auto& e : p.entries())
          body += std::to_string(p.step()) + ',' + std::to_string(e.layer_index) + ',' +
                  idprobe::csv_escape(e.layer_name) + ',' + idprobe::format_number(e.estimate->d_hat) + ',' +
                  std::to_string(e.estimate->n_used) + '\n';
      emit(out, body);
      return exit_ok;
    }
    json j = idprobe::to_json(series);
    const auto& last = series.snapshots().back();
    const auto peak = idprobe::pid(last);
    j["summary"] = {{"step", last.step()},
                    {"llid", idprobe::llid(last)},
                    {"pid", peak.value},
                    {"pid_layer_index", peak.layer_index},
                    {"pid_llid_ratio", idprobe::pid_llid_ratio(last)}};
    emit(out, j.dump(2) + "\n");
    return exit_ok;
  }
};

// ---------------------------------------------------------------------------
// sweep

std::vector<idprobe::RunRecord> collect_records(const std::vector<std::string>& patterns,
                                                const idprobe::EstimateOptions& opts) {
  const auto dirs = idprobe::expand_run_globs(patterns);
  std::vector<idprobe::RunRecord> records;
  for (const auto& d : dirs) records.push_back(idprobe::final_run_record(idprobe::load_series(d), opts));
  return records;
}

struct SweepCmd {
  std::vector<std::string> runs;
  std::string x_field;
  std::string y_field;
  std::string x_transform = "none";
  std::string out = "-";
  std::string figure;
  EstimateFlags flags;

  int run() const {
    idprobe::FieldTransform tf = idprobe::FieldTransform::none;
    if (x_transform == "log10") tf = idprobe::FieldTransform::log10;
    else if (x_transform != "none") throw idprobe::input_error("unknown --x-transform '" + x_transform + "'");

    const auto records = collect_records(runs, flags.options());
    if (records.size() < 3)
      throw idprobe::input_error("sweep needs at least 3 runs; the patterns matched " + std::to_string(records.size()));
    const auto corr = idprobe::sweep_correlations(records, x_field, y_field, tf);

    json j;
    j["x"] = x_field;
    j["y"] = y_field;
    j["x_transform"] = x_transform;
    j["correlation"] = idprobe::to_json(corr);
    j["runs"] = json::array();
    idprobe::Figure fig;
    fig.title = y_field + " vs " + x_field + " (r = " + idprobe::detail::tick_label(corr.r) +
                ", p = " + idprobe::detail::tick_label(corr.p_value) + ")";
    fig.x_label = tf == idprobe::FieldTransform::log10 ? "log10(" + x_field + ")" : x_field;
    fig.y_label = y_field;
    idprobe::Series s{y_field, {}, idprobe::Mark::points, idprobe::Axis::left};
    for (const auto& r : records) {
      double x = *r.field(x_field);
      if (tf == idprobe::FieldTransform::log10) x = std::log10(x);
      const double y = *r.field(y_field);
      j["runs"].push_back({{"run_id", r.run_id}, {"regularizer_kind", r.regularizer_kind}, {"x", x}, {"y", y}});
      fig.x.push_back(x);
      fig.row_labels.push_back(r.run_id);
      s.y.push_back(y);
    }
    fig.series.push_back(std::move(s));
    if (!figure.empty()) {
      idprobe::detail::write_file(figure + ".svg", idprobe::figure_svg(fig));
      idprobe::detail::write_file(figure + ".csv", idprobe::figure_csv(fig));
    }
    emit(out, j.dump(2) + "\n");
    return exit_ok;
  }
};

// ---------------------------------------------------------------------------
// synth

struct SynthCmd {
  std::string kind = "cube";
  int d = 2;
  std::size_t ambient = 2;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double noise = 0.0;
  std::string dtype = "f64";
  std::string out;

  int run() const {
    const auto k = idprobe::parse_manifold_kind(kind);
    if (!k) throw idprobe::input_error("unknown --kind '" + kind + "'");
    idprobe::ManifoldSpec spec{*k, d, ambient, n, seed, noise};
    auto cloud = idprobe::generate(spec);
    if (dtype == "f32") {
      std::vector<double> narrowed(cloud.data().begin(), cloud.data().end());
      for (double& v : narrowed) v = static_cast<float>(v);
      cloud = idprobe::PointCloud(cloud.size(), cloud.dims(), std::move(narrowed), idprobe::Dtype::f32, cloud.label());
    } else if (dtype != "f64") {
      throw idprobe::input_error("--dtype must be f32 or f64");
    }
    idprobe::save_cloud(cloud, out);
    return exit_ok;
  }
};

// ---------------------------------------------------------------------------
// report

std::optional<json> try_correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
  try {
    return idprobe::to_json(idprobe::pearson(xs, ys));
  } catch (const Error&) {
    return std::nullopt;
  }
}

json correlation_or_null(const std::vector<double>& xs, const std::vector<double>& ys) {
  auto c = try_correlation(xs, ys);
  return c ? *c : json(nullptr);
}

struct ReportCmd {
  std::vector<std::string> runs;
  std::string templ;
  std::string out;
  EstimateFlags flags;

  int run() const {
    if (templ != "reg-sweep" && templ != "grok-series")
      throw idprobe::input_error("unknown --template '" + templ + "' (expected reg-sweep or grok-series)");
    const auto dirs = idprobe::expand_run_globs(runs);
    if (dirs.empty()) throw idprobe::input_error("--runs matched no run directories");
    idprobe::ReportBundle bundle = templ == "reg-sweep" ? reg_sweep(dirs) : grok_series(dirs);
    bundle.write(out);
    return exit_ok;
  }

  idprobe::ReportBundle reg_sweep(const std::vector<fs::path>& dirs) const {
    std::vector<idprobe::RunRecord> records;
    for (const auto& d : dirs) records.push_back(idprobe::final_run_record(idprobe::load_series(d), flags.options()));
    std::sort(records.begin(), records.end(), [](const idprobe::RunRecord& a, const idprobe::RunRecord& b) {
      const double sa = *a.field("regularizer_strength"), sb = *b.field("regularizer_strength");
      if (a.regularizer_kind != b.regularizer_kind) return a.regularizer_kind < b.regularizer_kind;
      if (sa != sb) return sa < sb;
      return a.run_id < b.run_id;
    });

    idprobe::ReportBundle bundle;
    bundle.summary["template"] = "reg-sweep";
    bundle.summary["n_runs"] = records.size();

    // Per-run table.
    const std::vector<std::string> columns = {"regularizer_strength", "train_accuracy", "val_accuracy",
                                              "llid", "pid", "pid_llid_ratio"};
    std::string table = "run_id,regularizer_kind";
    for (const auto& c : columns) table += "," + c;
    table += "\n";
    for (const auto& r : records) {
      table += idprobe::csv_escape(r.run_id) + "," + r.regularizer_kind;
      for (const auto& c : columns) table += "," + idprobe::format_number(*r.field(c));
      table += "\n";
    }
    bundle.tables["runs.csv"] = table;

    std::vector<std::string> kinds;
    for (const auto& r : records)
      if (std::find(kinds.begin(), kinds.end(), r.regularizer_kind) == kinds.end()) kinds.push_back(r.regularizer_kind);

    json correlations = json::object();
    json collapse = json::object();
    // Strength against LLID, and PID with accuracy, per regularizer kind.
    for (const auto& kind : kinds) {
      if (kind == "none") continue;
      std::vector<const idprobe::RunRecord*> rs;
      for (const auto& r : records)
        if (r.regularizer_kind == kind) rs.push_back(&r);
      idprobe::Figure llid_fig;
      llid_fig.title = "LLID vs " + kind + " strength";
      llid_fig.x_label = kind + " strength";
      llid_fig.y_label = "LLID";
      llid_fig.log_x = kind == "weight_decay";
      idprobe::Series llid_s{"llid", {}, idprobe::Mark::points, idprobe::Axis::left};
      idprobe::Figure pid_fig = llid_fig;
      pid_fig.title = "PID and validation accuracy vs " + kind + " strength";
      pid_fig.y_label = "PID";
      pid_fig.y2_label = "validation accuracy";
      idprobe::Series pid_s{"pid", {}, idprobe::Mark::points, idprobe::Axis::left};
      idprobe::Series acc_s{"val_accuracy", {}, idprobe::Mark::points, idprobe::Axis::right};
      for (const auto* r : rs) {
        const double x = *r->field("regularizer_strength");
        llid_fig.x.push_back(x);
        llid_fig.row_labels.push_back(r->run_id);
        llid_s.y.push_back(*r->field("llid"));
        pid_fig.x.push_back(x);
        pid_fig.row_labels.push_back(r->run_id);
        pid_s.y.push_back(*r->field("pid"));
        acc_s.y.push_back(*r->field("val_accuracy"));
      }
      correlations["llid_vs_" + kind + "_strength"] = correlation_or_null(llid_fig.x, llid_s.y);
      llid_fig.series.push_back(std::move(llid_s));
      pid_fig.series.push_back(std::move(pid_s));
      pid_fig.series.push_back(std::move(acc_s));
      bundle.add_figure("llid_vs_" + kind + "_strength", llid_fig);
      bundle.add_figure("pid_vs_" + kind + "_strength", pid_fig);

      // Best-accuracy cell against the strongest cell.
      const auto* best = *std::max_element(rs.begin(), rs.end(), [](auto* a, auto* b) {
        return *a->field("val_accuracy") < *b->field("val_accuracy");
      });
      const auto* strongest = rs.back();
      collapse[kind] = {{"best_run", best->run_id},
                        {"best_strength", *best->field("regularizer_strength")},
                        {"best_val_accuracy", *best->field("val_accuracy")},
                        {"best_pid", *best->field("pid")},
                        {"strongest_run", strongest->run_id},
                        {"strongest_strength", *strongest->field("regularizer_strength")},
                        {"strongest_val_accuracy", *strongest->field("val_accuracy")},
                        {"strongest_pid", *strongest->field("pid")}};
    }

    // Pooled scatter plots against validation accuracy.
    const std::vector<std::pair<std::string, std::string>> pooled = {
        {"pid_llid_ratio", "PID / LLID"}, {"llid", "LLID"}, {"pid", "PID"}};
    for (const auto& [field, label] : pooled) {
      idprobe::Figure fig;
      fig.title = "validation accuracy vs " + label;
      fig.x_label = field;
      fig.y_label = "validation accuracy";
      std::vector<double> all_x, all_y;
      for (const auto& r : records) {
        fig.x.push_back(*r.field(field));
        fig.row_labels.push_back(r.run_id);
        all_x.push_back(*r.field(field));
        all_y.push_back(*r.field("val_accuracy"));
      }
      for (const auto& kind : kinds) {
        idprobe::Series s{kind, {}, idprobe::Mark::points, idprobe::Axis::left};
        for (const auto& r : records)
          s.y.push_back(r.regularizer_kind == kind ? *r.field("val_accuracy") : std::nan(""));
        fig.series.push_back(std::move(s));
      }
      const std::string stem = "val_accuracy_vs_" + field;
      correlations[stem] = correlation_or_null(all_x, all_y);
      bundle.add_figure(stem, fig);
    }
    bundle.summary["correlations"] = correlations;
    bundle.summary["excessive_regularization"] = collapse;
    return bundle;
  }

  idprobe::ReportBundle grok_series(const std::vector<fs::path>& dirs) const {
    idprobe::ReportBundle bundle;
    bundle.summary["template"] = "grok-series";
    json runs_json = json::array();
    std::vector<double> grokked_min, other_min;
    for (const auto& d : dirs) {
      const auto on_disk = idprobe::load_series(d);
      const auto series = idprobe::profile_series(on_disk, flags.options());
      idprobe::Figure fig;
      fig.title = series.run_id() + ": validation accuracy and LLID";
      fig.x_label = "step";
      fig.y_label = "validation accuracy";
      fig.y2_label = "LLID";
      idprobe::Series acc{"val_accuracy", {}, idprobe::Mark::line, idprobe::Axis::left};
      idprobe::Series ll{"llid", {}, idprobe::Mark::line, idprobe::Axis::right};
      double best_acc = 0.0;
      for (const auto& pt : series.track()) {
        fig.x.push_back(static_cast<double>(pt.step));
        acc.y.push_back(pt.val_accuracy);
        ll.y.push_back(pt.llid);
        best_acc = std::max(best_acc, pt.val_accuracy);
      }
      fig.series = {std::move(acc), std::move(ll)};
      bundle.add_figure(file_safe(series.run_id()) + "_series", fig);

      const auto m = idprobe::min_llid(series);
      const bool grokked = best_acc >= 0.99;
      (grokked ? grokked_min : other_min).push_back(m.value);
      const auto& last = on_disk.snapshots.back().metadata;
      runs_json.push_back({{"run_id", series.run_id()},
                           {"data_fraction", last.data_fraction},
                           {"regularizer_strength", last.regularizer_strength},
                           {"snapshots", series.track().size()},
                           {"final_val_accuracy", series.track().back().val_accuracy},
                           {"max_val_accuracy", best_acc},
                           {"grokked", grokked},
                           {"min_llid", m.value},
                           {"min_llid_step", m.step}});
    }
    auto mean_or_null = [](const std::vector<double>& v) {
      if (v.empty()) return json(nullptr);
      double s = 0.0;
      for (double x : v) s += x;
      return json(s / static_cast<double>(v.size()));
    };
    bundle.summary["runs"] = runs_json;
    bundle.summary["mean_min_llid_grokked"] = mean_or_null(grokked_min);
    bundle.summary["mean_min_llid_not_grokked"] = mean_or_null(other_min);
    return bundle;
  }
};

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::estimation ? exit_estimation : exit_input;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"idprobe: intrinsic dimension of activation point clouds"};
  app.require_subcommand(1);

  EstimateCmd estimate;
  auto* est = app.add_subcommand("estimate", "Estimate the intrinsic dimension of one cloud");
  est->add_option("--input", estimate.input, "IDAC or CSV file")->required();
  est->add_option("--format", estimate.format, "idac | csv (default: from the file extension)")
      ->check(CLI::IsMember({"idac", "csv"}));
  est->add_option("--out", estimate.out, "json | csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  estimate.flags.attach(est);

  ProfileCmd profile;
  auto* prof = app.add_subcommand("profile", "Per-layer estimates with LLID and PID for a run");
  prof->add_option("--run", profile.run_dir, "Run directory (manifest.json, or one subdirectory per snapshot)")
      ->required();
  prof->add_option("--steps", profile.steps, "Restrict to snapshots with step in a..b");
  prof->add_option("--out", profile.out, "Output path, - for stdout")->capture_default_str();
  prof->add_option("--format", profile.format, "json | csv")->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  profile.flags.attach(prof);

  SweepCmd sweep;
  auto* sw = app.add_subcommand("sweep", "Correlate two run-level fields across a sweep");
  sw->add_option("--runs", sweep.runs, "Glob(s) matching run directories")->required();
  sw->add_option("--x", sweep.x_field, "x field")->required();
  sw->add_option("--y", sweep.y_field, "y field")->required();
  sw->add_option("--x-transform", sweep.x_transform, "none | log10")->capture_default_str();
  sw->add_option("--out", sweep.out, "Output path, - for stdout")->capture_default_str();
  sw->add_option("--figure", sweep.figure, "Also write <stem>.svg and <stem>.csv");
  sweep.flags.attach(sw);

  SynthCmd synth;
  auto* sy = app.add_subcommand("synth", "Write a synthetic cloud of known intrinsic dimension");
  sy->add_option("--kind", synth.kind, "cube | sphere | gaussian | swiss")->capture_default_str();
  sy->add_option("--d", synth.d, "Intrinsic dimension")->capture_default_str();
  sy->add_option("--ambient", synth.ambient, "Ambient dimension")->capture_default_str();
  sy->add_option("--n", synth.n, "Number of points")->capture_default_str();
  sy->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  sy->add_option("--noise", synth.noise, "Ambient Gaussian noise sigma")->capture_default_str();
  sy->add_option("--dtype", synth.dtype, "Storage precision f32 | f64")->capture_default_str();
  sy->add_option("--out", synth.out, "Destination IDAC file")->required();

  ReportCmd report;
  auto* rep = app.add_subcommand("report", "Write figures with their tables for a set of runs");
  rep->add_option("--runs", report.runs, "Glob(s) matching run directories")->required();
  rep->add_option("--template", report.templ, "reg-sweep | grok-series")->required();
  rep->add_option("--out", report.out, "Output directory")->required();
  report.flags.attach(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_input;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "estimate") return estimate.run();
    if (name == "profile") return profile.run();
    if (name == "sweep") return sweep.run();
    if (name == "synth") return synth.run();
    return report.run();
  } catch (const Error& e) {
    std::cerr << "idprobe " << name << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "idprobe " << name << ": " << e.what() << '\n';
    return exit_input;
  }
}
