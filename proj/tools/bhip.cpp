#include "bhip/bhip.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConvergence = 2;
constexpr int kExitRuntime = 3;
constexpr double kRhatLimit = 1.05;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
  const char* s = std::getenv("BHIP_SEED");
  if (!s || !*s) return 0;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("BHIP_SEED is not an unsigned integer: '") + s + "'");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

std::pair<std::size_t, std::size_t> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoul(s);
      return {v, v};
    }
    return {std::stoul(s.substr(0, dots)), std::stoul(s.substr(dots + 2))};
  } catch (const std::exception&) {
    throw UsageError("bad node range '" + s + "', expected a..b");
  }
}

json intervention_json(const bhip::Intervention& iv) {
  if (const auto* c = std::get_if<bhip::DoConstant>(&iv.kind))
    return {{"node", iv.node}, {"type", "do-constant"}, {"value", c->value}};
  const auto& d = std::get<bhip::DoDistribution>(iv.kind);
  return {{"node", iv.node}, {"type", "do-distribution"}, {"mean", d.mean}, {"variance", d.variance}};
}

// ---------------------------------------------------------------------------
// generate

struct ScmArgs {
  std::size_t nodes = 4, samples = 500, envs = 2;
  std::optional<std::size_t> target;
  double edge_prob = 0.5;
  bool positive_effects = false;
  bool intervene_any = false;
  std::string out = "data.csv", truth = "truth.json";
};

int cmd_generate_scm(const ScmArgs& a, std::uint64_t seed) {
  const bhip::Rng base(seed);
  bhip::Rng dag_rng = base.stream(0), scm_rng = base.stream(1), env_rng = base.stream(2);
  const auto dag = bhip::random_dag(a.nodes, a.edge_prob, dag_rng);
  bhip::LganmOptions lo;
  lo.random_signs = !a.positive_effects;
  const auto scm = bhip::random_lganm(dag, lo, scm_rng);
  const std::size_t target = a.target.value_or(dag.topological_order().back());
  if (target >= a.nodes) throw UsageError("--target must be below --nodes");
  bhip::InterventionPolicy policy;
  policy.allow_target = a.intervene_any;
  const auto specs = bhip::random_environment_specs(scm, a.envs, a.samples, target, policy, env_rng);
  const auto ds = bhip::sample_environments(scm, specs, target, base.stream(3));
  {
    auto out = open_out(a.out);
    bhip::write_csv(ds, out);
  }
  json truth;
  truth["scm"] = bhip::to_json(scm);
  truth["target_node"] = target;
  truth["predictor_nodes"] = bhip::predictor_nodes(a.nodes, target);
  const auto pa = bhip::parent_positions(dag, target);
  truth["parent_positions"] = pa;
  std::vector<std::string> pa_names;
  for (auto p : pa) pa_names.push_back(ds.predictor_names[p]);
  truth["parents"] = pa_names;
  auto envs = json::array();
  for (std::size_t e = 0; e < specs.size(); ++e) {
    auto ivs = json::array();
    for (const auto& iv : specs[e].interventions) ivs.push_back(intervention_json(iv));
    envs.push_back({{"label", std::to_string(e)}, {"n_samples", specs[e].n_samples}, {"interventions", ivs}});
  }
  truth["environments"] = envs;
  truth["seed"] = seed;
  write_json(a.truth, truth);
  return kExitOk;
}

struct BusArgs {
  std::size_t stops = 2, n = 500;
  bool per_stop_coefficients = false;
  std::string params;
  std::string out = "bus.csv", truth = "bus_truth.json";
};

int cmd_generate_bus(const BusArgs& a, std::uint64_t seed) {
  bhip::BusStopParams base_params;
  if (!a.params.empty()) {
    try {
      base_params = bhip::bus_stop_from_json(read_json_file(a.params));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  bhip::Rng rng(seed);
  bhip::BusRandomization r;
  r.per_stop_coefficients = a.per_stop_coefficients;
  const auto stops = bhip::random_bus_stops(a.stops, rng, r, base_params);
  const auto ds = bhip::generate_bus_data(stops, a.n, rng.stream(99));
  {
    auto out = open_out(a.out);
    bhip::write_csv(ds, out);
  }
  json truth;
  auto js = json::array();
  for (const auto& s : stops) js.push_back(bhip::to_json(s));
  truth["stops"] = js;
  truth["parents"] = {"X3", "X4"};
  truth["seed"] = seed;
  write_json(a.truth, truth);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

struct DataSource {
  std::string path, target = "y", env = "env";
  std::string target_kind = "auto";
  std::vector<std::string> drop;
};

bhip::LoadOptions load_options(const DataSource& d) {
  bhip::LoadOptions o;
  if (d.target_kind == "auto") o.target_kind = bhip::TargetKindOption::automatic;
  else if (d.target_kind == "continuous") o.target_kind = bhip::TargetKindOption::continuous;
  else if (d.target_kind == "binary") o.target_kind = bhip::TargetKindOption::binary;
  else throw UsageError("target kind must be auto, continuous or binary");
  o.drop_columns = d.drop;
  return o;
}

struct RunConfig {
  bhip::ModelSpec model;
  bhip::SamplerConfig sampler;
  bhip::DecisionConfig decision;
  DataSource data;
  std::string out_dir = "bhip_out";
  bool standardize = true;
  bool write_samples = true;
};

/// Unknown keys anywhere in the document are rejected before any work.
RunConfig run_config_from_json(const json& j, RunConfig c) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "model" && v.is_string()) c.model.prior_family = bhip::parse_prior_family(v.get<std::string>());
      else if (k == "model") c.model = bhip::model_spec_from_json(v);
      else if (k == "sampler") c.sampler = bhip::sampler_config_from_json(v, c.sampler);
      else if (k == "decision") c.decision = bhip::decision_config_from_json(v, c.decision);
      else if (k == "seed") c.sampler.seed = v.get<std::uint64_t>();
      else if (k == "standardize") c.standardize = v.get<bool>();
      else if (k == "data") {
        if (!v.is_object()) throw std::invalid_argument("data must be an object");
        for (auto d = v.begin(); d != v.end(); ++d) {
          if (d.key() == "path") c.data.path = d->get<std::string>();
          else if (d.key() == "target") c.data.target = d->get<std::string>();
          else if (d.key() == "env") c.data.env = d->get<std::string>();
          else if (d.key() == "target_kind") c.data.target_kind = d->get<std::string>();
          else if (d.key() == "drop") c.data.drop = d->get<std::vector<std::string>>();
          else throw std::invalid_argument("unknown data key '" + d.key() + "'");
        }
      } else if (k == "output") {
        if (!v.is_object()) throw std::invalid_argument("output must be an object");
        for (auto o = v.begin(); o != v.end(); ++o) {
          if (o.key() == "dir") c.out_dir = o->get<std::string>();
          else if (o.key() == "samples") c.write_samples = o->get<bool>();
          else throw std::invalid_argument("unknown output key '" + o.key() + "'");
        }
      } else throw std::invalid_argument("unknown config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

json run_config_json(const RunConfig& c) {
  return {{"model", bhip::to_json(c.model)},
          {"sampler", bhip::to_json(c.sampler)},
          {"decision", bhip::to_json(c.decision)},
          {"data",
           {{"path", c.data.path},
            {"target", c.data.target},
            {"env", c.data.env},
            {"target_kind", c.data.target_kind},
            {"drop", c.data.drop}}},
          {"standardize", c.standardize}};
}

int cmd_fit(const RunConfig& c, bool quiet) {
  if (c.data.path.empty()) throw UsageError("fit: --in is required");
  try {
    c.model.validate();
    c.sampler.validate();
    c.decision.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto raw = bhip::load_csv(c.data.path, c.data.target, c.data.env, load_options(c.data));
  bhip::ModelSpec model = c.model;
  model.likelihood =
      raw.target_kind == bhip::TargetKind::binary ? bhip::Likelihood::bernoulli_logit : bhip::Likelihood::gaussian;

  bhip::FitOptions opt{model, c.sampler, c.decision, c.standardize};
  const auto r = bhip::fit_bhip(raw, opt);

  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "summary.csv");
    bhip::write_summary_csv(out, r.summary);
  }
  write_json(dir / "summary.json", bhip::to_json(r.summary));
  json decision = bhip::to_json(r.report);
  decision["sampler"] = bhip::sampler_metadata(r.samples);
  decision["config"] = run_config_json(c);
  decision["config"]["model"]["likelihood"] = bhip::to_string(model.likelihood);
  write_json(dir / "decision.json", decision);
  {
    auto out = open_out(dir / "decision.txt");
    out << bhip::to_table(r.report);
  }
  {
    auto out = open_out(dir / "plot_data.csv");
    bhip::write_plot_data_csv(out, r.samples, r.report, r.data.n_environments());
  }
  if (c.write_samples) {
    auto out = open_out(dir / "samples.csv");
    bhip::write_samples_csv(out, r.samples);
  }
  if (!quiet) std::cout << bhip::to_table(r.report);
  if (r.samples.divergence_warning)
    std::cerr << "warning: " << r.samples.divergences << " divergent transitions after warmup\n";
  const double worst = r.summary.max_rhat();
  if (r.summary.has_rhat && worst > kRhatLimit) {
    std::cerr << "warning: max r_hat " << bhip::format_double(worst) << " exceeds " << kRhatLimit << '\n';
    return kExitConvergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// icp

struct IcpArgs {
  DataSource data;
  double alpha = 0.05;
  std::size_t max_predictors = 20;
  bool standardize = true;
  bool all_tests = false;
  std::string out = "icp.json";
};

int cmd_icp(const IcpArgs& a, std::size_t threads, bool quiet) {
  if (a.data.path.empty()) throw UsageError("icp: --in is required");
  auto ds = bhip::load_csv(a.data.path, a.data.target, a.data.env, load_options(a.data));
  if (a.standardize) ds = bhip::standardize(ds);
  bhip::IcpOptions o;
  o.alpha = a.alpha;
  o.max_predictors = a.max_predictors;
  o.threads = threads;
  const auto r = bhip::icp_fit(ds, o);
  write_json(a.out, bhip::to_json(r, a.all_tests));
  if (!r.warning.empty()) std::cerr << "warning: " << r.warning << '\n';
  if (!quiet) {
    std::cout << "S_hat = {";
    const auto names = r.intersection_names();
    for (std::size_t i = 0; i < names.size(); ++i) std::cout << (i ? ", " : "") << names[i];
    std::cout << "}  (" << r.accepted_sets().size() << " of " << r.tests.size() << " subsets accepted)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench / timing

int cmd_bench(const std::string& config, const std::string& out_dir, std::size_t threads,
              std::optional<std::uint64_t> seed, bool quiet) {
  if (config.empty()) throw UsageError("bench: --config is required");
  bhip::BenchConfig cfg;
  try {
    cfg = bhip::bench_config_from_json(read_json_file(config));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(e.what());
  }
  if (seed) cfg.seed = *seed;
  cfg.threads = threads;
  const auto g = bhip::run_grid(cfg);
  const fs::path dir(out_dir);
  {
    auto out = open_out(dir / "runs.csv");
    bhip::write_records_csv(out, g);
  }
  {
    auto out = open_out(dir / "summary.csv");
    bhip::write_summary_csv(out, g);
  }
  write_json(dir / "summary.json", bhip::summary_json(cfg, g));
  if (!quiet) bhip::write_summary_csv(std::cout, g);
  return kExitOk;
}

struct TimingArgs {
  std::string nodes = "6..14";
  std::size_t samples = 200, envs = 2, reps = 5;
  std::vector<std::string> methods{"bhip-noncentered", "icp"};
  std::string out = "timing.csv";
  std::string records;
};

int cmd_timing(const TimingArgs& a, std::uint64_t seed, bool quiet) {
  bhip::TimingConfig c;
  std::tie(c.nodes_low, c.nodes_high) = parse_range(a.nodes);
  c.samples_per_env = a.samples;
  c.envs = a.envs;
  c.reps = a.reps;
  c.seed = seed;
  c.methods.clear();
  try {
    for (const auto& m : a.methods) c.methods.push_back(bhip::parse_method(m));
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto t = bhip::run_timing(c);
  {
    auto out = open_out(a.out);
    bhip::write_timing_csv(out, t);
  }
  if (!a.records.empty()) {
    auto out = open_out(a.records);
    bhip::write_timing_records_csv(out, t);
  }
  if (!quiet) bhip::write_timing_csv(std::cout, t);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bhip: hierarchical Bayesian invariant predictor discovery"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed_flag;
  std::size_t threads = 0;
  bool quiet = false;
  app.add_option("--seed", seed_flag, "RNG seed (default: $BHIP_SEED, else 0)");
  app.add_option("--threads", threads, "Worker threads, 0 = all cores");
  app.add_flag("-q,--quiet", quiet, "Suppress stdout summaries");

  // generate
  auto* gen = app.add_subcommand("generate", "Simulate a dataset");
  gen->require_subcommand(1);
  ScmArgs scm;
  auto* gscm = gen->add_subcommand("scm", "Random DAG + linear Gaussian SCM, multi-environment");
  gscm->add_option("--nodes", scm.nodes)->check(CLI::Range(2, 64));
  gscm->add_option("--samples", scm.samples, "Rows per environment")->check(CLI::PositiveNumber);
  gscm->add_option("--envs", scm.envs)->check(CLI::PositiveNumber);
  gscm->add_option("--target", scm.target, "Target node (default: last in topological order)");
  gscm->add_option("--edge-prob", scm.edge_prob)->check(CLI::Range(0.0, 1.0));
  gscm->add_flag("--positive-effects", scm.positive_effects, "Edge weights in U(1,5) without random signs");
  gscm->add_flag("--intervene-any", scm.intervene_any, "Allow interventions on the target");
  gscm->add_option("--out", scm.out);
  gscm->add_option("--truth", scm.truth);
  BusArgs bus;
  auto* gbus = gen->add_subcommand("bus", "Bus-stop dwelling scenario");
  gbus->add_option("--stops", bus.stops)->check(CLI::Range(2, 1000));
  gbus->add_option("--n", bus.n, "Rows per stop")->check(CLI::PositiveNumber);
  gbus->add_option("--params", bus.params, "JSON file overriding base stop parameters");
  gbus->add_flag("--per-stop-coefficients", bus.per_stop_coefficients);
  gbus->add_option("--out", bus.out);
  gbus->add_option("--truth", bus.truth);

  // fit
  RunConfig rc;
  std::string fit_config, model_name;
  std::optional<std::size_t> chains, warmup, draws;
  std::optional<double> hdi_threshold, pooling_threshold, rope_multiplier, target_accept;
  bool no_standardize = false, no_samples = false;
  DataSource fit_data;
  std::optional<std::string> out_dir;
  auto* fit = app.add_subcommand("fit", "Fit a hierarchical model and apply the decision rule");
  fit->add_option("--config", fit_config, "RunConfig JSON");
  fit->add_option("--model", model_name, "noncentered | horseshoe | spikeslab");
  fit->add_option("--in", fit_data.path, "Dataset CSV");
  fit->add_option("--target", fit_data.target);
  fit->add_option("--env", fit_data.env);
  fit->add_option("--target-kind", fit_data.target_kind, "auto | continuous | binary");
  fit->add_option("--drop", fit_data.drop, "Columns to ignore");
  fit->add_option("--chains", chains);
  fit->add_option("--warmup", warmup);
  fit->add_option("--draws", draws);
  fit->add_option("--target-accept", target_accept);
  fit->add_option("--hdi-threshold", hdi_threshold);
  fit->add_option("--pooling-threshold", pooling_threshold);
  fit->add_option("--rope-multiplier", rope_multiplier);
  fit->add_flag("--no-standardize", no_standardize);
  fit->add_flag("--no-samples", no_samples, "Skip samples.csv");
  fit->add_option("--out-dir", out_dir);

  // icp
  IcpArgs icp;
  auto* icp_cmd = app.add_subcommand("icp", "Invariant causal prediction baseline");
  icp_cmd->add_option("--in", icp.data.path)->required();
  icp_cmd->add_option("--target", icp.data.target);
  icp_cmd->add_option("--env", icp.data.env);
  icp_cmd->add_option("--drop", icp.data.drop);
  icp_cmd->add_option("--alpha", icp.alpha)->check(CLI::Range(0.0, 1.0));
  icp_cmd->add_option("--max-predictors", icp.max_predictors);
  icp_cmd->add_flag("--all-tests", icp.all_tests, "Include every subset p-value in the JSON");
  bool icp_raw = false;
  icp_cmd->add_flag("--no-standardize", icp_raw);
  icp_cmd->add_option("--out", icp.out);

  // bench
  std::string bench_config, bench_out = "bench_out";
  auto* bench = app.add_subcommand("bench", "Parent-recovery grid, BHIP vs ICP");
  bench->add_option("--config", bench_config, "Grid JSON")->required();
  bench->add_option("--out-dir", bench_out);

  // timing
  TimingArgs timing;
  auto* tim = app.add_subcommand("timing", "Runtime versus node count");
  tim->add_option("--nodes", timing.nodes, "Range a..b");
  tim->add_option("--samples", timing.samples, "Rows per environment");
  tim->add_option("--envs", timing.envs);
  tim->add_option("--reps", timing.reps);
  tim->add_option("--methods", timing.methods);
  tim->add_option("--out", timing.out);
  tim->add_option("--records", timing.records, "Per-run timing CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_exit = app.exit(e);
    return rc_exit == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::uint64_t seed = seed_flag ? *seed_flag : default_seed();
    if (gscm->parsed()) return cmd_generate_scm(scm, seed);
    if (gbus->parsed()) return cmd_generate_bus(bus, seed);
    if (fit->parsed()) {
      RunConfig c = rc;
      c.sampler.seed = seed;
      if (!fit_config.empty()) c = run_config_from_json(read_json_file(fit_config), c);
      if (seed_flag) c.sampler.seed = *seed_flag;
      if (!model_name.empty()) {
        try {
          c.model.prior_family = bhip::parse_prior_family(model_name);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      if (!fit_data.path.empty()) c.data.path = fit_data.path;
      if (fit->count("--target")) c.data.target = fit_data.target;
      if (fit->count("--env")) c.data.env = fit_data.env;
      if (fit->count("--target-kind")) c.data.target_kind = fit_data.target_kind;
      if (!fit_data.drop.empty()) c.data.drop = fit_data.drop;
      if (chains) c.sampler.chains = *chains;
      if (warmup) c.sampler.warmup = *warmup;
      if (draws) c.sampler.draws = *draws;
      if (target_accept) c.sampler.target_accept = *target_accept;
      if (hdi_threshold) c.decision.hdi_threshold = *hdi_threshold;
      if (pooling_threshold) c.decision.pooling_threshold = *pooling_threshold;
      if (rope_multiplier) c.decision.rope_multiplier = *rope_multiplier;
      if (no_standardize) c.standardize = false;
      if (no_samples) c.write_samples = false;
      if (out_dir) c.out_dir = *out_dir;
      if (app.count("--threads")) c.sampler.threads = threads;
      return cmd_fit(c, quiet);
    }
    if (icp_cmd->parsed()) {
      icp.standardize = !icp_raw;
      return cmd_icp(icp, threads, quiet);
    }
    if (bench->parsed()) return cmd_bench(bench_config, bench_out, threads, seed_flag, quiet);
    if (tim->parsed()) return cmd_timing(timing, seed, quiet);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
