// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <tuple>
#include <vector>

#include "idprobe/idprobe.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace idprobe;
using idprobe::testing::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failure notes for one criterion.
struct Check {
  std::vector<std::string> notes;
  void expect(bool ok, const std::string& what) {
    if (!ok) notes.push_back(what);
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, const std::function<std::string(Check&)>& body) {
  Check c;
  std::string detail;
  try {
    detail = body(c);
  } catch (const std::exception& e) {
    c.notes.push_back(std::string("exception: ") + e.what());
  }
  const bool ok = c.notes.empty();
  if (!ok) ++failures;
  std::cout << (ok ? "PASS " : "FAIL ") << name;
  if (!detail.empty()) std::cout << "  (" << detail << ")";
  std::cout << '\n';
  for (const auto& n : c.notes) std::cout << "     - " << n << '\n';
  std::cout.flush();
}

PointCloud embed(const PointCloud& c, const Embedding& e) {
  std::vector<double> out(c.size() * e.ambient);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t k = 0; k < e.ambient; ++k) {
      double v = e.offset[k];
      for (std::size_t col = 0; col < e.intrinsic; ++col) v += e.basis[col * e.ambient + k] * c(i, col);
      out[i * e.ambient + k] = v;
    }
  return PointCloud(c.size(), e.ambient, std::move(out));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI with stdout captured to `out_file`; returns the exit code.
int run_cli(const std::string& env, const std::string& args, const fs::path& out_file) {
  const std::string cmd = env + " '" + std::string(IDPROBE_CLI_PATH) + "' " + args + " >'" + out_file.string() +
                          "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

std::string pareto_recovery(Check& c) {
  const auto t0 = Clock::now();
  std::string detail;
  for (double d : {1.0, 2.0, 3.0, 5.0, 8.0}) {
    std::vector<double> mu;
    for (int i = 1; i <= 1000; ++i) mu.push_back(std::pow(1.0 - i / 1001.0, -1.0 / d));
    const double got = estimate(ratios_from_mu(mu), 0.0).d_hat;
    c.expect(std::fabs(got - d) <= 1e-3, "d = " + fmt(d) + " gave " + fmt(got));
    detail += (detail.empty() ? "" : ", ") + fmt(got);
  }
  const double t = seconds_since(t0);
  c.expect(t < 1.0, "took " + fmt(t) + " s");
  return detail + "; " + fmt(t) + " s";
}

std::string known_manifolds(Check& c) {
  EstimateOptions opts;
  opts.threads = 1;
  struct Case {
    std::string name;
    ManifoldSpec spec;
    double lo, hi;
  };
  const auto cube_band = [](int d) { return std::max(0.2, 0.08 * d); };
  std::vector<Case> cases;
  for (int d : {1, 2, 5})
    cases.push_back({"cube d" + std::to_string(d), {ManifoldKind::uniform_cube, d, 128, 10000, 100u + d, 0.0},
                     d - cube_band(d), d + cube_band(d)});
  cases.push_back({"cube d8", {ManifoldKind::uniform_cube, 8, 128, 10000, 108, 0.0}, 6.8, 8.5});
  cases.push_back({"circle", {ManifoldKind::hypersphere_surface, 1, 16, 10000, 201, 0.0}, 0.9, 1.1});
  cases.push_back({"swiss roll", {ManifoldKind::swiss_roll, 2, 128, 10000, 301, 0.0}, 1.8, 2.3});

  std::string detail;
  for (const auto& k : cases) {
    const auto cloud = generate(k.spec);
    const auto t0 = Clock::now();
    const double d = estimate_cloud(cloud, opts).d_hat;
    const double t = seconds_since(t0);
    c.expect(d >= k.lo && d <= k.hi, k.name + ": d_hat " + fmt(d) + " outside [" + fmt(k.lo) + ", " + fmt(k.hi) + "]");
    c.expect(t < 60.0, k.name + ": took " + fmt(t) + " s");
    detail += (detail.empty() ? "" : ", ") + k.name + " " + fmt(d) + " in " + fmt(t) + " s";
  }
  return detail;
}

std::string knn_equivalence(Check& c) {
  for (std::size_t dims : {2u, 128u, 4096u}) {
    const auto cloud = idprobe::testing::uniform_cloud(1000, dims, 7000 + dims);
    const auto got = two_nearest(cloud);
    const auto want = idprobe::testing::reference_two_nearest(cloud);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& g = got.records[i];
      if (g.nn1_index != want[i].nn1 || g.nn2_index != want[i].nn2 ||
          std::bit_cast<std::uint64_t>(g.r1) != std::bit_cast<std::uint64_t>(want[i].r1) ||
          std::bit_cast<std::uint64_t>(g.r2) != std::bit_cast<std::uint64_t>(want[i].r2))
        ++mismatches;
    }
    c.expect(mismatches == 0, "D = " + std::to_string(dims) + ": " + std::to_string(mismatches) + " points differ");
  }
  return "n 1000, D 2/128/4096";
}

std::string invariance(Check& c) {
  const auto sample = generate_detailed({ManifoldKind::uniform_cube, 4, 4, 3000, 55, 0.0});
  const PointCloud& base = sample.cloud;
  const double ref = estimate_cloud(base).d_hat;

  for (double s : {0.125, 2.0, 1024.0}) {
    std::vector<double> v(base.data().begin(), base.data().end());
    for (double& x : v) x *= s;
    const double d = estimate_cloud(PointCloud(base.size(), base.dims(), v)).d_hat;
    c.expect(d == ref, "scale " + fmt(s) + ": " + fmt(d) + " != " + fmt(ref));
  }

  const double rotated = estimate_cloud(embed(base, random_embedding(4, 4, 77))).d_hat;
  c.expect(std::fabs(rotated - ref) < 1e-9, "isometry moved d_hat by " + fmt(rotated - ref));

  std::vector<double> padded;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto r = base.row(i);
    padded.insert(padded.end(), r.begin(), r.end());
    padded.insert(padded.end(), 9, 0.0);
  }
  const double pad = estimate_cloud(PointCloud(base.size(), base.dims() + 9, padded)).d_hat;
  c.expect(pad == ref, "zero padding: " + fmt(pad) + " != " + fmt(ref));

  auto triples = [](const NeighborRatios& r) {
    std::vector<std::tuple<double, double, double>> t;
    for (const auto& rec : r.records) t.emplace_back(rec.r1, rec.r2, rec.mu);
    std::sort(t.begin(), t.end());
    return t;
  };
  std::vector<std::size_t> perm(base.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 1237 + 11) % perm.size();  // 1237 coprime to 3000
  c.expect(triples(two_nearest(base)) == triples(two_nearest(base.select(perm))), "permutation changed the multiset");
  return "reference d_hat " + fmt(ref);
}

std::string statistics(Check& c) {
  const std::vector<double> xs{1, 2, 3, 4, 5}, ys{2, 1, 4, 3, 5};
  const auto r = pearson(xs, ys);
  const double oracle_p = 2.0 * (1.0 - idprobe::testing::oracle_student_t_cdf(r.t_stat, 3.0));
  c.expect(std::fabs(r.r - 0.8) <= 1e-12, "r = " + fmt(r.r));
  c.expect(std::fabs(r.t_stat - 2.309401) <= 1e-6, "t = " + fmt(r.t_stat));
  c.expect(std::fabs(r.p_value - oracle_p) <= 1e-3, "p = " + fmt(r.p_value) + " vs oracle " + fmt(oracle_p));
  c.expect(std::fabs(r.p_value - 0.1040) <= 1e-3, "p = " + fmt(r.p_value));
  for (int dof = 1; dof <= 1000; ++dof) {
    const double v = student_t_cdf(0.0, dof);
    if (std::fabs(v - 0.5) > 1e-12) c.expect(false, "CDF(0) at dof " + std::to_string(dof) + " = " + fmt(v));
  }
  return "r " + fmt(r.r) + ", t " + fmt(r.t_stat) + ", p " + fmt(r.p_value);
}

std::string profile_summaries(Check& c) {
  const auto a = LayerProfile::from_values({12, 19, 7});
  c.expect(llid(a) == 7.0, "llid [12,19,7]");
  c.expect(pid(a).value == 19.0 && pid(a).layer_index == 2, "pid [12,19,7]");
  c.expect(pid_llid_ratio(a) == 19.0 / 7.0, "ratio [12,19,7]");
  c.expect(llid(LayerProfile::from_values({4.2})) == 4.2, "llid [4.2]");
  c.expect(pid(LayerProfile::from_values({4.2})).value == 4.2, "pid [4.2]");
  c.expect(llid(LayerProfile::from_values({3, 3})) == 3.0, "llid [3,3]");
  const auto tie = pid(LayerProfile::from_values({5, 5}));
  c.expect(tie.value == 5.0 && tie.layer_index == 1, "pid tie [5,5]");
  c.expect(pid_llid_ratio(LayerProfile::from_values({5, 5, 5})) == 1.0, "ratio [5,5,5]");

  auto entries = a.entries();
  entries[1].estimate.reset();
  entries[1].failure = "degenerate";
  bool named = false;
  try {
    pid_llid_ratio(LayerProfile(0, entries));
  } catch (const Error& e) {
    named = std::string(e.what()).find("layer_2") != std::string::npos;
  }
  c.expect(named, "failed layer not named");
  return "";
}

std::string cli_determinism(Check& c) {
  TempDir dir("acceptance_cli");
  const auto root = dir.path();
  // Inputs: one cloud and a three-run sweep with two snapshots each.
  const double strengths[] = {1e-4, 1e-3, 1e-2};
  save_cloud(generate({ManifoldKind::gaussian_blob, 3, 24, 2500, 5, 0.0}), root / "cloud.idac");
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < 2; ++s) {
      RunMetadata md;
      md.regularizer_kind = RegularizerKind::weight_decay;
      md.regularizer_strength = strengths[k];
      md.train_accuracy = 1.0;
      md.val_accuracy = 0.5 + 0.2 * s + 0.1 * k;
      std::vector<LayerDump> layers{
          {"mlp.0", 1, generate({ManifoldKind::uniform_cube, 4, 16, 600, 10u + k, 0.0})},
          {"mlp.1", 2, generate({ManifoldKind::uniform_cube, 6, 16, 600, 20u + k, 0.0})},
          {"head", 3, generate({ManifoldKind::uniform_cube, 4 - k + s, 16, 600, 30u + k, 0.0})}};
      save_run(root / "runs" / ("wd" + std::to_string(k)) / ("step" + std::to_string(s)),
               "wd" + std::to_string(k), 100 * s, md, layers);
    }
  const std::string runs = "'" + (root / "runs" / "*").string() + "'";
  const std::string run0 = "'" + (root / "runs" / "wd0").string() + "'";

  struct Command {
    std::string name;
    std::string args;  // "@OUT" is replaced by a per-invocation output path
  };
  const std::vector<Command> commands{
      {"estimate", "estimate --input '" + (root / "cloud.idac").string() + "' --bootstrap 8 --seed 3"},
      {"profile", "profile --run " + run0 + " --seed 3"},
      {"sweep", "sweep --runs " + runs + " --x regularizer_strength --y llid --x-transform log10 --figure @OUT/fig"},
      {"synth", "synth --kind swiss --d 2 --ambient 9 --n 700 --seed 4 --noise 0.01 --out @OUT/s.idac"},
      {"report reg-sweep", "report --runs " + runs + " --template reg-sweep --out @OUT/rep"},
      {"report grok-series", "report --runs " + runs + " --template grok-series --out @OUT/rep"},
  };
  const std::vector<std::string> envs{"IDPROBE_THREADS=1", "IDPROBE_THREADS=1", "IDPROBE_THREADS=2",
                                      "IDPROBE_THREADS=5", ""};

  std::size_t compared = 0;
  for (const auto& cmd : commands) {
    std::optional<std::pair<std::string, std::map<std::string, std::string>>> first;
    for (std::size_t e = 0; e < envs.size(); ++e) {
      const fs::path out_dir = root / ("out_" + std::to_string(compared) + "_" + std::to_string(e));
      fs::create_directories(out_dir);
      std::string args = cmd.args;
      for (auto pos = args.find("@OUT"); pos != std::string::npos; pos = args.find("@OUT"))
        args.replace(pos, 4, "'" + out_dir.string() + "'");
      const int code = run_cli(envs[e], args, root / "stdout.txt");
      if (code != 0) {
        c.expect(false, cmd.name + " exited " + std::to_string(code) + " with " + envs[e]);
        break;
      }
      auto result = std::make_pair(slurp(root / "stdout.txt"), snapshot_tree(out_dir));
      // Output paths differ per invocation; compare with them blanked out.
      for (auto* text : {&result.first}) {
        for (auto pos = text->find(out_dir.string()); pos != std::string::npos; pos = text->find(out_dir.string()))
          text->replace(pos, out_dir.string().size(), "@OUT");
      }
      if (!first) first = result;
      else
        c.expect(result == *first, cmd.name + " differs under '" + envs[e] + "'");
    }
    ++compared;
  }
  return std::to_string(compared) + " commands x " + std::to_string(envs.size()) + " invocations";
}

}  // namespace

int main() {
  criterion("Pareto-quantile recovery", pareto_recovery);
  criterion("Known-ID manifolds", known_manifolds);
  criterion("k-NN oracle equivalence", knn_equivalence);
  criterion("Invariance suite", invariance);
  criterion("Statistics", statistics);
  criterion("LLID/PID/ratio unit suite", profile_summaries);
  criterion("CLI determinism", cli_determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
