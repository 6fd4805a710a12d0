// Acceptance checks. Usage: acceptance [criterion numbers...]; no arguments
// runs all ten. Prints one PASS/FAIL line per criterion; exit status is the
// number of failures.

#include "bhip/bhip.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace bhip;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes, pinned.
constexpr double kMcseMultiple = 3.0;
constexpr double kRhatMax = 1.05;
constexpr double kReversibilityTol = 1e-8;
constexpr double kEnergyRatioLow = 3.5, kEnergyRatioHigh = 4.5;
constexpr double kFdRelTol = 1e-5;
constexpr double kKsMax = 0.02;
constexpr double kBusSelectRate = 0.80;
constexpr double kBusPoolingMin = 0.90;
constexpr double kBusZParentMin = 0.95, kBusZOtherMax = 0.10;
constexpr double kBusHdiThreshold = 0.85;
constexpr double kPoolingTol = 1e-8;
constexpr double kIcpCoverageMin = 0.90;
constexpr double kTablePaperF1 = 0.6411, kTableBand = 0.15, kTableRatio = 1.5;
constexpr double kSlopeRelTol = 0.30, kBhipGrowthMax = 8.0;
constexpr double kNullEmptyRate = 0.95;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome sampler_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::MatrixXd X(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = std::sin(i);
    X(i, 1) = std::cos(1.7 * i);
    y(i) = 1.2 * X(i, 0) - 0.7 * X(i, 1) + 0.5 * std::sin(3.1 * i + 0.4);
  }
  const double s2 = 0.25, p2 = 4.0;
  const Eigen::Matrix2d cov = (X.transpose() * X / s2 + Eigen::Matrix2d::Identity() / p2).inverse();
  const Eigen::Vector2d mean = cov * X.transpose() * y / s2;
  FunctionDensity d(2, [&](const Eigen::VectorXd& b, Eigen::VectorXd& g) {
    const Eigen::VectorXd r = y - X * b;
    g = X.transpose() * r / s2 - b / p2;
    return -0.5 * r.squaredNorm() / s2 - 0.5 * b.squaredNorm() / p2;
  });
  auto mcse = [](const std::vector<std::vector<double>>& f) {
    std::vector<double> all;
    for (const auto& c : f) all.insert(all.end(), c.begin(), c.end());
    return std::sqrt(detail::sample_var(all) / ess_geyer(f));
  };

  int moment_failures = 0;
  double worst_rhat = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SamplerConfig c;
    c.seed = 1000 + seed;
    const auto s = nuts_sample(d, c);
    worst_rhat = std::max(worst_rhat, diagnostics(s).max_rhat());
    auto check = [&](const std::function<double(std::size_t, std::size_t)>& f, double truth) {
      std::vector<std::vector<double>> per(s.chains);
      std::vector<double> all;
      for (std::size_t ch = 0; ch < s.chains; ++ch)
        for (std::size_t t = 0; t < s.draws; ++t) {
          per[ch].push_back(f(ch, t));
          all.push_back(per[ch].back());
        }
      if (std::abs(detail::mean_of(all) - truth) > kMcseMultiple * mcse(per)) ++moment_failures;
    };
    for (int i = 0; i < 2; ++i) check([&](std::size_t ch, std::size_t t) { return s.at(ch, t, i); }, mean(i));
    for (auto [i, j] : {std::pair{0, 0}, std::pair{1, 1}, std::pair{0, 1}})
      check([&](std::size_t ch, std::size_t t) { return (s.at(ch, t, i) - mean(i)) * (s.at(ch, t, j) - mean(j)); },
            cov(i, j));
  }

  // Leapfrog invariants on an anisotropic Gaussian.
  FunctionDensity g(3, [](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
    const Eigen::Vector3d prec(4.0, 1.0, 0.25);
    grad = -prec.cwiseProduct(v);
    return -0.5 * v.dot(prec.cwiseProduct(v));
  });
  Rng rng(1);
  DiscreteState z;
  detail::NutsKernel k(g, z, rng, 10, 1000.0);
  auto start = [&] {
    detail::PhaseState s;
    s.q = Eigen::Vector3d(0.3, -1.2, 2.0);
    s.p = Eigen::Vector3d(1.0, 0.4, -0.7);
    k.evaluate(s);
    return s;
  };
  auto s = start();
  const auto q0 = s.q;
  for (int i = 0; i < 50; ++i) k.leapfrog(s, 0.1);
  s.p = -s.p;
  for (int i = 0; i < 50; ++i) k.leapfrog(s, 0.1);
  const double rev = (s.q - q0).cwiseAbs().maxCoeff();
  auto drift = [&](double eps) {
    auto st = start();
    const double h0 = k.hamiltonian(st);
    for (int i = 0; i < static_cast<int>(std::lround(1.0 / eps)); ++i) k.leapfrog(st, eps);
    return std::abs(k.hamiltonian(st) - h0);
  };
  const double ratio = drift(0.02) / drift(0.01);
  const double secs = seconds_since(t0);

  Outcome o;
  o.pass = moment_failures == 0 && worst_rhat <= kRhatMax && rev < kReversibilityTol && ratio >= kEnergyRatioLow &&
           ratio <= kEnergyRatioHigh && secs < 60.0;
  o.detail = "moment checks outside 3 MCSE: " + std::to_string(moment_failures) + "/50, max r_hat " + fmt(worst_rhat) +
             ", reversibility " + fmt(rev, 3) + ", energy ratio " + fmt(ratio) + ", " + fmt(secs, 3) + " s";
  return o;
}

Outcome gradients_and_transforms() {
  Rng r(2);
  double worst = 0.0;
  for (Likelihood lik : {Likelihood::gaussian, Likelihood::bernoulli_logit}) {
    const auto kind = lik == Likelihood::gaussian ? TargetKind::continuous : TargetKind::binary;
    EnvironmentDataset ds;
    ds.target_kind = kind;
    ds.predictor_names = {"a", "b", "c"};
    for (int e = 0; e < 3; ++e) {
      Eigen::MatrixXd Xe(40, 3);
      Eigen::VectorXd ye(40);
      for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 3; ++j) Xe(i, j) = r.normal(0.4 * e, 1.0);
        const double eta = Xe(i, 0) - 0.5 * Xe(i, 1);
        ye(i) = kind == TargetKind::continuous ? eta + r.normal() : (r.uniform() < 1 / (1 + std::exp(-eta)) ? 1 : 0);
      }
      ds.environments.push_back({std::to_string(e), Xe, ye});
    }
    for (PriorFamily f : {PriorFamily::hier_normal_noncentered, PriorFamily::horseshoe, PriorFamily::spike_and_slab}) {
      ModelSpec spec;
      spec.prior_family = f;
      spec.likelihood = lik;
      const auto p = build_density(spec, ds);
      for (int t = 0; t < 100; ++t) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(p->dimension()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.uniform(-2.0, 2.0);
        DiscreteState z(p->n_discrete());
        for (auto& zi : z) zi = r.bernoulli(0.5);
        Eigen::VectorXd grad;
        p->log_density_gradient(v, z, grad);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
          const double h = 1e-5 * std::max(1.0, std::abs(v(i)));
          Eigen::VectorXd a = v, b = v;
          a(i) += h;
          b(i) -= h;
          const double fd = (p->log_density(a, z) - p->log_density(b, z)) / (2 * h);
          worst = std::max(worst, std::abs(grad(i) - fd) / std::max(1.0, std::abs(fd)));
        }
      }
    }
  }

  // Half-Cauchy prior pushed through the exp transform used for scales.
  double worst_ks = 0.0;
  for (double scale : {1.0, 2.5}) {
    FunctionDensity d(1, [scale](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
      g.setZero();
      return lpdf::half_cauchy_log_scale(v(0), scale, &g(0));
    });
    SamplerConfig c;
    c.seed = 7;
    c.draws = 25000;
    auto xs = nuts_sample(d, c).column(0);
    for (auto& x : xs) x = std::exp(x);
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double f = 2.0 / std::numbers::pi * std::atan(xs[i] / scale);
      worst_ks = std::max({worst_ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
    }
  }
  return {worst < kFdRelTol && worst_ks < kKsMax,
          "max FD rel. error " + fmt(worst, 3) + " (6 family/likelihood pairs), half-Cauchy KS " + fmt(worst_ks, 3)};
}

Outcome bus_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t runs = 20;
  std::size_t exact = 0, icp_x3 = 0;
  double gamma3 = 0, gamma4 = 0, z[5] = {0, 0, 0, 0, 0};
  std::map<std::string, int> icp_sets;
  for (std::uint64_t seed = 0; seed < runs; ++seed) {
    Rng rng(seed);
    const auto stops = random_bus_stops(2, rng);
    const auto ds = generate_bus_data(stops, 500, rng.stream(99));
    FitOptions opt;
    opt.sampler.seed = seed;
    opt.decision.hdi_threshold = kBusHdiThreshold;
    const auto nc = fit_and_decide(ds, opt);
    if (nc.selected_names() == std::vector<std::string>{"X3", "X4"}) ++exact;
    gamma3 += *nc.predictors[3].pooling_factor / runs;
    gamma4 += *nc.predictors[4].pooling_factor / runs;
    opt.model.prior_family = PriorFamily::spike_and_slab;
    const auto ss = fit_and_decide(ds, opt);
    for (int d = 0; d < 5; ++d) z[d] += *ss.predictors[d].inclusion_prob / runs;
    const auto icp = icp_fit(standardize(ds));
    std::string key = "{";
    for (const auto& n : icp.intersection_names()) key += (key.size() > 1 ? "," : "") + n;
    ++icp_sets[key + "}"];
    if (icp.intersection_names() == std::vector<std::string>{"X3"}) ++icp_x3;
  }
  const double secs = seconds_since(t0);
  const double rate = static_cast<double>(exact) / runs;
  const bool pass = rate >= kBusSelectRate && gamma3 >= kBusPoolingMin && gamma4 >= kBusPoolingMin &&
                    z[3] >= kBusZParentMin && z[4] >= kBusZParentMin && z[0] <= kBusZOtherMax &&
                    z[1] <= kBusZOtherMax && z[2] <= kBusZOtherMax && 2 * icp_x3 > runs && secs <= 600.0;
  std::string sets;
  for (const auto& [k, v] : icp_sets) sets += " " + k + "x" + std::to_string(v);
  return {pass, "exact {X3,X4} " + fmt(rate) + ", mean gamma3 " + fmt(gamma3) + " gamma4 " + fmt(gamma4) +
                    ", mean z " + fmt(z[0], 3) + "/" + fmt(z[1], 3) + "/" + fmt(z[2], 3) + "/" + fmt(z[3], 3) + "/" +
                    fmt(z[4], 3) + ", ICP {X3} in " + std::to_string(icp_x3) + "/20 (" + sets.substr(1) + "), " +
                    fmt(secs, 3) + " s"};
}

Interval window_oracle(const std::vector<double>& x, std::size_t k) {
  Interval best;
  bool found = false;
  for (double a : x)
    for (double b : x) {
      if (b < a) continue;
      std::size_t n = 0;
      for (double v : x) n += v >= a && v <= b;
      if (n < k) continue;
      if (!found || b - a < best.width() || (b - a == best.width() && a < best.lower)) {
        best = {a, b};
        found = true;
      }
    }
  return best;
}

Outcome hdi_equivalence() {
  Rng rng(4);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 10 + rng.index(41);
    std::vector<double> x(n);
    for (auto& v : x) {
      v = t % 2 ? rng.normal() : std::exp(rng.normal());
      if (t % 3 == 0) v = std::round(4.0 * v) / 4.0;
    }
    const std::size_t pct = 50 + rng.index(50);
    const std::size_t k = (n * pct + 99) / 100;
    const auto h = hdi(x, static_cast<double>(pct) / 100.0);
    const auto o = window_oracle(x, k);
    mismatches += h.lower != o.lower || h.upper != o.upper;
  }
  return {mismatches == 0, std::to_string(mismatches) + " endpoint mismatches over 1000 sample sets"};
}

Outcome pooling_algebra() {
  Rng rng(5);
  std::vector<double> mu(300);
  std::vector<std::vector<double>> same(3, std::vector<double>(300));
  for (std::size_t s = 0; s < 300; ++s) {
    mu[s] = rng.normal();
    const double delta = 0.3 * rng.normal();
    for (auto& b : same) b[s] = mu[s] + delta;
  }
  const double one = pooling_factor(mu, same);
  const double a = std::sqrt(0.9);
  std::vector<double> mu2(10);
  std::vector<std::vector<double>> apart(2, std::vector<double>(10));
  for (std::size_t s = 0; s < 10; ++s) {
    mu2[s] = std::cos(static_cast<double>(s));
    const double noise = s % 2 ? -a : a;
    apart[0][s] = mu2[s] + 1.0 + noise;
    apart[1][s] = mu2[s] - 1.0 + noise;
  }
  const double minus_one = pooling_factor(mu2, apart);
  return {std::abs(one - 1.0) < kPoolingTol && std::abs(minus_one + 1.0) < kPoolingTol,
          "identical deviations " + fmt(one, 12) + ", separated environments " + fmt(minus_one, 12)};
}

Outcome icp_coverage() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t covered = 0, property_violations = 0;
  const std::size_t runs = 200;
  for (std::size_t t = 0; t < runs; ++t) {
    const Rng base = Rng(6).stream(t);
    Rng g = base.stream(0), w = base.stream(1), e = base.stream(2);
    const auto dag = random_dag(4, 0.5, g);
    const auto scm = random_lganm(dag, LganmOptions{}, w);
    const std::size_t target = e.index(4);
    const auto specs = random_environment_specs(scm, 2, 500, target, InterventionPolicy{}, e);
    const auto ds = sample_environments(scm, specs, target, base.stream(3));
    const auto r = icp_fit(ds, IcpOptions{0.05});
    const auto truth = parent_positions(dag, target);
    covered += std::includes(truth.begin(), truth.end(), r.intersection.begin(), r.intersection.end());
    for (const auto& s : r.accepted_sets()) {
      const auto m = s.members();
      property_violations += !std::includes(m.begin(), m.end(), r.intersection.begin(), r.intersection.end());
    }
  }
  const double cov = static_cast<double>(covered) / runs;
  const double secs = seconds_since(t0);
  return {cov >= kIcpCoverageMin && property_violations == 0 && secs <= 300.0,
          "P(S_hat in PA(Y)) " + fmt(cov) + ", intersection violations " + std::to_string(property_violations) + ", " +
              fmt(secs, 3) + " s"};
}

Outcome grid_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cell = [](std::size_t n, std::size_t s, std::size_t e) {
    BenchConfig c;
    c.nodes_list = {n};
    c.samples_list = {s};
    c.envs_list = {e};
    c.n_dags = 100;
    c.seed = 0;
    const auto g = run_grid(c);
    double bhip = 0, icp = 0;
    for (const auto& cs : g.summaries) (cs.method == Method::icp ? icp : bhip) = cs.mean.f1;
    return std::pair{bhip, icp};
  };
  const auto [b1, i1] = cell(4, 2000, 3);
  const auto [b2, i2] = cell(5, 500, 2);
  const double secs = seconds_since(t0);
  const bool c1 = b1 > i1 && std::abs(b1 - kTablePaperF1) <= kTableBand;
  const bool c2 = b2 >= kTableRatio * i2;
  return {c1 && c2 && secs <= 7200.0,
          "N4/S2000/E3: BHIP f1 " + fmt(b1) + " vs ICP " + fmt(i1) + (c1 ? " ok" : " FAIL") +
              "; N5/S500/E2: BHIP f1 " + fmt(b2) + " vs ICP " + fmt(i2) + " (ratio " + fmt(b2 / i2, 3) + ")" +
              (c2 ? " ok" : " FAIL") + "; " + fmt(secs, 4) + " s"};
}

Outcome timing_study() {
  const auto t0 = std::chrono::steady_clock::now();
  TimingConfig c;
  const auto t = run_timing(c);
  const double slope = log_time_slope(t, Method::icp);
  double b6 = 0, b14 = 0, i14 = 0;
  for (const auto& s : t.summaries) {
    if (s.method == Method::bhip_noncentered && s.nodes == 6) b6 = s.median;
    if (s.method == Method::bhip_noncentered && s.nodes == 14) b14 = s.median;
    if (s.method == Method::icp && s.nodes == 14) i14 = s.median;
  }
  const double secs = seconds_since(t0);
  const bool ok = std::abs(slope - std::log(2.0)) <= kSlopeRelTol * std::log(2.0) && b14 / b6 <= kBhipGrowthMax;
  return {ok && secs <= 1800.0, "ICP log-time slope " + fmt(slope) + " (ln 2 = 0.6931), BHIP median d=14/d=6 " +
                                    fmt(b14 / b6, 3) + " (" + fmt(b6, 3) + " s -> " + fmt(b14, 3) +
                                    " s), ICP median d=14 " + fmt(i14, 3) + " s, " + fmt(secs, 3) + " s"};
}

Outcome null_safety() {
  std::size_t empty = 0;
  const std::size_t runs = 50;
  for (std::uint64_t seed = 0; seed < runs; ++seed) {
    Rng rng(9000 + seed);
    EnvironmentDataset ds;
    ds.predictor_names = {"a", "b", "c"};
    for (int e = 0; e < 2; ++e) {
      Eigen::MatrixXd Xe(200, 3);
      Eigen::VectorXd ye(200);
      for (int i = 0; i < 200; ++i) {
        for (int j = 0; j < 3; ++j) Xe(i, j) = rng.normal(1.5 * e, 1.0 + e);
        ye(i) = rng.normal();
      }
      ds.environments.push_back({std::to_string(e), Xe, ye});
    }
    FitOptions opt;
    opt.sampler.seed = seed;
    empty += fit_and_decide(ds, opt).selected().empty();
  }
  const double rate = static_cast<double>(empty) / runs;
  return {rate >= kNullEmptyRate, "empty selection in " + std::to_string(empty) + "/50 runs"};
}

// CLI determinism: each command twice with --threads 1 and once with
// --threads 3; outputs must match byte for byte.
int sh(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" BHIP_CLI "' -q " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir, const std::string& skip) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).string();
    if (rel == skip) continue;
    auto text = read_all(e.path());
    if (rel.find("timing") != std::string::npos) {
      // Keep the run plan, drop measured seconds: the last column of the
      // per-run file, everything after the method in the summary.
      const bool per_run = rel.find("runs") != std::string::npos;
      std::istringstream in(text);
      std::string line, kept;
      while (std::getline(in, line))
        kept += line.substr(0, per_run ? line.rfind(',') : line.find(',', line.find(',') + 1)) + "\n";
      text = kept;
    }
    out[rel] = text;
  }
  return out;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "bhip_acceptance_cli";
  fs::remove_all(root);
  const std::vector<std::string> cmds = {
      "generate scm --nodes 5 --samples 200 --envs 3 --out d.csv --truth t.json",
      "generate bus --stops 3 --n 150 --out b.csv --truth bt.json",
      "generate scm --nodes 4 --samples 150 --envs 2 --out s.csv --truth st.json && '" BHIP_CLI
      "' -q --seed 4 --threads {T} fit --in s.csv --target y --env env --chains 3 --warmup 200 --draws 150 --out-dir fnc",
      "generate scm --nodes 4 --samples 150 --envs 2 --out s.csv --truth st.json && '" BHIP_CLI
      "' -q --seed 4 --threads {T} fit --model spikeslab --in s.csv --target y --env env --chains 3 --warmup 200 "
      "--draws 150 --out-dir fss",
      "generate scm --nodes 4 --samples 150 --envs 2 --out s.csv --truth st.json && '" BHIP_CLI
      "' -q --seed 4 --threads {T} fit --model horseshoe --in s.csv --target y --env env --chains 3 --warmup 200 "
      "--draws 150 --out-dir fhs",
      "generate bus --stops 2 --n 200 --out b.csv --truth bt.json && '" BHIP_CLI
      "' -q --seed 4 --threads {T} icp --in b.csv --target Y --env env --all-tests --out icp.json",
      "bench --config grid.json --out-dir bench",
      "timing --nodes 3..5 --reps 2 --out timing.csv --records timing_runs.csv",
  };
  std::size_t mismatches = 0, bad_exit = 0;
  std::string failed;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    std::vector<std::map<std::string, std::string>> snaps;
    for (int variant = 0; variant < 3; ++variant) {
      const fs::path dir = root / (std::to_string(i) + "_" + std::to_string(variant));
      fs::create_directories(dir);
      std::ofstream(dir / "grid.json") << R"({"nodes_list": [3], "samples_list": [80], "envs_list": [2], "n_dags": 3,
        "seed": 5, "methods": ["bhip-noncentered", "bhip-spikeslab", "icp"],
        "sampler": {"chains": 2, "warmup": 80, "draws": 80}})";
      const std::string threads = variant == 2 ? "3" : "1";
      std::string cmd = cmds[i];
      for (auto p = cmd.find("{T}"); p != std::string::npos; p = cmd.find("{T}")) cmd.replace(p, 3, threads);
      const int rc = sh(dir, "--seed 4 --threads " + threads + " " + cmd);
      if (rc != 0 && rc != 2) ++bad_exit;
      snaps.push_back(snapshot(dir, "grid.json"));
    }
    if (snaps[0] != snaps[1] || snaps[0] != snaps[2] || snaps[0].empty()) {
      ++mismatches;
      failed += " #" + std::to_string(i);
    }
  }
  return {mismatches == 0 && bad_exit == 0, std::to_string(cmds.size()) + " commands, " + std::to_string(mismatches) +
                                                " with differing outputs" + failed + ", " + std::to_string(bad_exit) +
                                                " failed to run"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"sampler correctness", sampler_correctness},
      {"gradient and transform checks", gradients_and_transforms},
      {"bus-dwelling reproduction", bus_reproduction},
      {"HDI oracle equivalence", hdi_equivalence},
      {"pooling-factor algebra", pooling_algebra},
      {"ICP coverage", icp_coverage},
      {"parent-recovery grid trend", grid_trend},
      {"timing study", timing_study},
      {"null safety", null_safety},
      {"CLI determinism", cli_determinism},
  };
  std::vector<std::size_t> which;
  for (int i = 1; i < argc; ++i) which.push_back(static_cast<std::size_t>(std::atoi(argv[i])));
  if (which.empty())
    for (std::size_t i = 1; i <= criteria.size(); ++i) which.push_back(i);
  int failures = 0;
  for (auto n : which) {
    if (n < 1 || n > criteria.size()) {
      std::cerr << "unknown criterion " << n << "\n";
      return 64;
    }
    Outcome o;
    try {
      o = criteria[n - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "AC" << n << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << criteria[n - 1].first << ": " << o.detail
              << std::endl;
  }
  return failures;
}
