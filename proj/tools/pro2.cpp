// pro2: command-line front end for projection, probing, sweeps and the
// synthetic Gaussian experiments.
//
// Exit codes: 0 ok, 1 data error, 2 usage error, 3 numerical degeneracy.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "pro2/pro2.hpp"

namespace {

using namespace pro2;
using cli::OutputSet;
using cli::UsageError;

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Shared {
  std::uint64_t seed = 0;
  std::string out = ".";
  unsigned jobs = 0;
  std::string config;
};

void add_shared(CLI::App* app, Shared& s) {
  app->add_option("--seed", s.seed, "Random seed")->capture_default_str();
  app->add_option("--out", s.out, "Output directory")->capture_default_str();
  app->add_option("--jobs", s.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  app->add_option("--config", s.config, "key=value config file; flags take precedence");
}

Json shared_json(const Shared& s, const std::string& command) {
  return Json{{"command", command}, {"seed", s.seed}, {"out", s.out}, {"jobs", s.jobs},
              {"config", s.config.empty() ? Json(nullptr) : Json(s.config)}};
}

Json digest_entry(const std::string& path) { return Json{{"path", path}, {"sha256", cli::sha256_file(path)}}; }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

/// Basis sidecar: `<stem>.json` next to `<stem>.p2fb`.
std::filesystem::path sidecar_path(const std::filesystem::path& basis) {
  auto p = basis;
  p.replace_extension(".json");
  return p;
}

std::optional<Standardizer> standardizer_from_sidecar(const std::filesystem::path& basis_path) {
  const auto side = sidecar_path(basis_path);
  if (!std::filesystem::exists(side)) return std::nullopt;
  const Json j = Json::parse(detail::read_file(side.string()), nullptr, false);
  if (j.is_discarded()) throw ParseError(side.string() + ": invalid JSON");
  if (!j.contains("standardizer") || j["standardizer"].is_null()) return std::nullopt;
  Standardizer s;
  s.mean = detail::vector_from_json(j["standardizer"]["mean"], "standardizer.mean");
  s.scale = detail::vector_from_json(j["standardizer"]["scale"], "standardizer.scale");
  return s;
}

// --- gen-shog -------------------------------------------------------------

struct GenShogArgs {
  Shared shared;
  std::string suite = "default";
  std::string params;
  Eigen::Index n_source = 10000;
  Eigen::Index n_target = 2000;
  Eigen::Index n_eval = 10000;
  Eigen::Index dim = 20;
  std::string format = "bin";
};

int run_gen_shog(const GenShogArgs& a) {
  if (a.suite != "default" && a.params.empty()) throw UsageError("unknown suite '" + a.suite + "' (available: default)");
  if (a.format != "bin" && a.format != "csv") throw UsageError("--format must be bin or csv");
  if (a.n_source < 1 || a.n_target < 1 || a.n_eval < 1) throw UsageError("sample sizes must be positive");
  if (a.dim < 2) throw UsageError("--d must be at least 2");

  const std::string ext = a.format == "csv" ? ".csv" : ".p2em";
  auto encode = [&](const EmbeddingDataset& ds) { return a.format == "csv" ? encode_csv(ds) : encode_binary(ds); };
  OutputSet out(a.shared.out);
  Json params;
  Json inputs = Json::object();

  if (!a.params.empty()) {
    inputs["params"] = digest_entry(a.params);
    const Json j = Json::parse(detail::read_file(a.params), nullptr, false);
    if (j.is_discarded()) throw ParseError(a.params + ": invalid JSON");
    const ShogParams p = shog_params_from_json(j);
    out.add("source" + ext, encode(sample_shog(p, a.n_source, Domain::source, derive(a.shared.seed, 0, 0))));
    out.add("target_train" + ext, encode(sample_shog(p, a.n_target, Domain::target, derive(a.shared.seed, 0, 1))));
    out.add("target_eval" + ext, encode(sample_shog(p, a.n_eval, Domain::target, derive(a.shared.seed, 0, 2))));
    params = Json{{"suite", "custom"}, {"seed", a.shared.seed}, {"kl", kl_shog(p)}, {"params", to_json(p)}};
  } else {
    const auto suite = default_shog_suite(a.shared.seed, a.dim);
    for (std::size_t i = 0; i < suite.size(); ++i) {
      const auto& dist = suite[i];
      // The ID training split is a source-domain sample and doubles as the projection source.
      if (dist.name == "id")
        out.add("id_train" + ext, encode(sample_shog(dist.params, a.n_source, Domain::source, derive(a.shared.seed, i, 0))));
      else
        out.add(dist.name + "_train" + ext,
                encode(sample_shog(dist.params, a.n_target, Domain::target, derive(a.shared.seed, i, 1))));
      out.add(dist.name + "_eval" + ext,
              encode(sample_shog(dist.params, a.n_eval, Domain::target, derive(a.shared.seed, i, 2))));
    }
    params = Json{{"suite", "default"}, {"seed", a.shared.seed}, {"distributions", to_json(suite)}};
  }
  out.add("params.json", dump(params));

  Json resolved = shared_json(a.shared, "gen-shog");
  resolved["suite"] = a.params.empty() ? a.suite : "custom";
  resolved["params"] = a.params.empty() ? Json(nullptr) : Json(a.params);
  resolved["n_source"] = a.n_source;
  resolved["n_target"] = a.n_target;
  resolved["n_eval"] = a.n_eval;
  resolved["d"] = a.dim;
  resolved["format"] = a.format;
  resolved["inputs"] = inputs;
  resolved["outputs"] = out.names();
  out.add("resolved_config.json", dump(resolved));
  out.commit();
  return 0;
}

// --- project --------------------------------------------------------------

struct ProjectArgs {
  Shared shared;
  std::string source;
  std::string mode = "joint";
  Eigen::Index d = 1;
  double lr = 0.01;
  double weight_decay = 0.01;
  int max_steps = 100;
  bool standardize = false;
};

int run_project(const ProjectArgs& a) {
  if (a.mode != "joint" && a.mode != "sequential" && a.mode != "nc" && a.mode != "random")
    throw UsageError("--mode must be joint, sequential, nc or random");
  if (a.lr <= 0 || a.weight_decay < 0 || a.max_steps < 1) throw UsageError("bad optimizer settings");
  EmbeddingDataset source = load_dataset(a.source);
  if (a.d < 1 || a.d > source.dim())
    throw UsageError("--d " + std::to_string(a.d) + " outside [1, " + std::to_string(source.dim()) + "]");

  std::optional<Standardizer> standardizer;
  if (a.standardize) {
    standardizer = Standardizer::fit(source);
    source = standardizer->apply(source);
  }
  ProjectConfig cfg;
  cfg.d = a.d;
  cfg.lr = a.lr;
  cfg.weight_decay = a.weight_decay;
  cfg.max_steps = a.max_steps;
  cfg.seed = a.shared.seed;

  Json side;
  std::optional<FeatureBasis> basis;
  if (a.mode == "random") {
    basis = random_orthonormal_basis(source.dim(), a.d, a.shared.seed);
    side["method"] = "random";
    side["config"] = Json{{"d", a.d}, {"seed", a.shared.seed}};
  } else {
    cfg.mode = parse_project_mode(a.mode);
    auto trace = fit_projection(source, cfg);
    side["method"] = "pro2";
    side["config"] = to_json(cfg);
    side["retries"] = trace.retries;
    side["initial_loss"] = trace.loss_history.front();
    side["final_loss"] = trace.loss_history.back();
    basis = std::move(trace.basis);
  }
  side["d"] = basis->rank();
  side["D"] = basis->dim();
  side["max_pairwise_cosine"] = basis->max_pairwise_cosine();
  side["source"] = digest_entry(a.source);
  side["standardizer"] = standardizer ? Json{{"mean", detail::vector_json(standardizer->mean)},
                                             {"scale", detail::vector_json(standardizer->scale)}}
                                      : Json(nullptr);

  OutputSet out(a.shared.out);
  out.add("basis.p2fb", encode_basis(*basis));
  out.add("basis.json", dump(side));
  Json resolved = shared_json(a.shared, "project");
  resolved["source"] = a.source;
  resolved["mode"] = a.mode;
  resolved["d"] = a.d;
  resolved["lr"] = a.lr;
  resolved["weight_decay"] = a.weight_decay;
  resolved["max_steps"] = a.max_steps;
  resolved["standardize"] = a.standardize;
  resolved["inputs"] = Json{{"source", digest_entry(a.source)}};
  resolved["outputs"] = out.names();
  out.add("resolved_config.json", dump(resolved));
  out.commit();
  return 0;
}

// --- probe / sweep shared data preparation --------------------------------

struct TargetSplits {
  EmbeddingDataset train;
  EmbeddingDataset val;
  EmbeddingDataset test;
};

/// m per label drawn from the target pool. Without a val file the draw is split
/// half/half per label into train and val; without a test file the rows not
/// drawn are the test set.
TargetSplits prepare_target(const std::string& target_path, const std::string& val_path, const std::string& test_path,
                            Eigen::Index m, std::uint64_t seed, const std::optional<Standardizer>& standardizer) {
  if (m < 1) throw UsageError("--m must be positive");
  if (val_path.empty() && m < 2) throw UsageError("--m must be at least 2 when no --val file is given");
  auto prep = [&](EmbeddingDataset ds) { return standardizer ? standardizer->apply(ds) : ds; };
  const EmbeddingDataset target = load_dataset(target_path);
  const auto draw = balanced_subsample_indices(target, {m, derive(seed, 0x7A)});
  const EmbeddingDataset sample = target.select(draw.train);

  std::optional<EmbeddingDataset> test;
  if (!test_path.empty()) test = load_dataset(test_path);
  else if (draw.remainder.empty()) throw InsufficientDataError("target file has no rows left for testing", -1);
  else test = target.select(draw.remainder);

  if (!val_path.empty()) return {prep(sample), prep(load_dataset(val_path)), prep(*test)};
  const auto halves = balanced_subsample_indices(sample, {(m + 1) / 2, derive(seed, 0x7B)});
  return {prep(sample.select(halves.train)), prep(sample.select(halves.remainder)), prep(*test)};
}

// --- probe ----------------------------------------------------------------

struct ProbeArgs {
  Shared shared;
  std::string basis;
  std::string target;
  std::string val;
  std::string test;
  Eigen::Index m = 32;
  double lr = 0.01;
  double l2 = 0.01;
  int max_steps = 500;
  int eval_every = 1;
};

int run_probe(const ProbeArgs& a) {
  if (a.lr <= 0 || a.l2 < 0 || a.max_steps < 0 || a.eval_every < 1) throw UsageError("bad probe settings");
  const FeatureBasis basis = load_basis(a.basis);
  const auto standardizer = standardizer_from_sidecar(a.basis);
  auto splits = prepare_target(a.target, a.val, a.test, a.m, a.shared.seed, standardizer);
  if (splits.train.dim() != basis.dim())
    throw UsageError("basis dimension " + std::to_string(basis.dim()) + " does not match target dimension " +
                     std::to_string(splits.train.dim()));
  ProbeConfig pc{a.lr, a.l2, a.max_steps, a.eval_every, a.shared.seed};
  const auto fit = train_probe(apply_basis(basis, splits.train), apply_basis(basis, splits.val), pc);
  const auto test = evaluate(fit.model, apply_basis(basis, splits.test));

  Json report{{"command", "probe"},
              {"d", basis.rank()},
              {"D", basis.dim()},
              {"num_classes", splits.train.num_classes()},
              {"m", a.m},
              {"train_size", splits.train.size()},
              {"val_size", splits.val.size()},
              {"test_size", splits.test.size()},
              {"best_step", fit.best_step},
              {"val_acc", fit.best_val_accuracy},
              {"test_acc", test.overall},
              {"per_class_acc", detail::accuracies_json(test.per_class)},
              {"probe_config", to_json(pc)},
              {"model", to_json(fit.model)}};

  OutputSet out(a.shared.out);
  out.add("probe_report.json", dump(report));
  Json resolved = shared_json(a.shared, "probe");
  resolved["basis"] = a.basis;
  resolved["target"] = a.target;
  resolved["val"] = a.val.empty() ? Json(nullptr) : Json(a.val);
  resolved["test"] = a.test.empty() ? Json(nullptr) : Json(a.test);
  resolved["m"] = a.m;
  resolved["lr"] = a.lr;
  resolved["l2"] = a.l2;
  resolved["max_steps"] = a.max_steps;
  resolved["eval_every"] = a.eval_every;
  Json inputs{{"basis", digest_entry(a.basis)}, {"target", digest_entry(a.target)}};
  if (!a.val.empty()) inputs["val"] = digest_entry(a.val);
  if (!a.test.empty()) inputs["test"] = digest_entry(a.test);
  resolved["inputs"] = inputs;
  resolved["outputs"] = out.names();
  out.add("resolved_config.json", dump(resolved));
  out.commit();
  std::cout << "test accuracy " << test.overall << " (val " << fit.best_val_accuracy << ", d=" << basis.rank() << ")\n";
  return 0;
}

// --- sweep ----------------------------------------------------------------

struct SweepArgs {
  Shared shared;
  std::string source;
  std::string target;
  std::string val;
  std::string test;
  Eigen::Index m = 32;
  std::vector<std::string> methods{"pro2"};
  std::vector<double> lrs{0.1, 0.01, 0.001};
  std::vector<double> l2s{0.1, 0.01, 0.001};
  std::vector<Eigen::Index> dims{1, 4, 16, 64, 256, 1024};
  double project_lr = 0.01;
  int project_steps = 100;
  int probe_steps = 500;
  bool standardize = false;
  bool timing = false;
};

int run_sweep(const SweepArgs& a) {
  std::vector<Method> methods;
  for (const auto& m : a.methods) {
    try {
      methods.push_back(parse_method(m));
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  if (methods.empty() || a.lrs.empty() || a.l2s.empty() || a.dims.empty()) throw UsageError("grid lists must be non-empty");
  for (auto d : a.dims)
    if (d < 1) throw UsageError("--dims entries must be positive");
  if (a.project_lr <= 0 || a.project_steps < 1 || a.probe_steps < 0) throw UsageError("bad optimizer settings");

  EmbeddingDataset source = load_dataset(a.source);
  std::optional<Standardizer> standardizer;
  if (a.standardize) {
    standardizer = Standardizer::fit(source);
    source = standardizer->apply(source);
  }
  const auto splits = prepare_target(a.target, a.val, a.test, a.m, a.shared.seed, standardizer);

  SweepGrid grid{a.lrs, a.l2s, a.dims};
  SweepOptions opts;
  opts.project.lr = a.project_lr;
  opts.project.max_steps = a.project_steps;
  opts.probe_max_steps = a.probe_steps;
  opts.jobs = a.shared.jobs;
  opts.record_timing = a.timing;
  const auto report = sweep(source, splits.train, splits.val, splits.test, grid, methods, a.shared.seed, opts);

  OutputSet out(a.shared.out);
  out.add("sweep.json", dump(to_json(report)));
  out.add("sweep.csv", sweep_csv(report));
  Json resolved = shared_json(a.shared, "sweep");
  resolved["source"] = a.source;
  resolved["target"] = a.target;
  resolved["val"] = a.val.empty() ? Json(nullptr) : Json(a.val);
  resolved["test"] = a.test.empty() ? Json(nullptr) : Json(a.test);
  resolved["m"] = a.m;
  resolved["methods"] = a.methods;
  resolved["lrs"] = a.lrs;
  resolved["l2s"] = a.l2s;
  resolved["dims"] = a.dims;
  resolved["project_lr"] = a.project_lr;
  resolved["project_steps"] = a.project_steps;
  resolved["probe_steps"] = a.probe_steps;
  resolved["standardize"] = a.standardize;
  resolved["timing"] = a.timing;
  Json inputs{{"source", digest_entry(a.source)}, {"target", digest_entry(a.target)}};
  if (!a.val.empty()) inputs["val"] = digest_entry(a.val);
  if (!a.test.empty()) inputs["test"] = digest_entry(a.test);
  resolved["inputs"] = inputs;
  resolved["outputs"] = out.names();
  out.add("resolved_config.json", dump(resolved));
  out.commit();
  for (const auto& m : report.methods) {
    const auto& c = m.selected_cell();
    std::cout << to_string(m.method) << ": selected d=" << c.d << " lr=" << c.lr << " l2=" << c.l2
              << " val " << c.val_acc << " test " << c.test_acc << "\n";
  }
  return 0;
}

// --- shog-experiment ------------------------------------------------------

struct ExperimentArgs {
  Shared shared;
  std::string suite = "default";
  Eigen::Index dim = 20;
  int repeats = 20;
  std::vector<Eigen::Index> dims{1, 2, 4, 8, 12, 16, 20};
  std::vector<Eigen::Index> sizes{2, 8, 32, 128};
  Eigen::Index n_source = 10000;
  Eigen::Index n_eval = 10000;
  double project_lr = 0.1;
  int project_steps = 100;
  double probe_lr = 0.01;
  double probe_l2 = 0.01;
  int probe_steps = 500;
};

int run_experiment(const ExperimentArgs& a) {
  if (a.suite != "default") throw UsageError("unknown suite '" + a.suite + "' (available: default)");
  if (a.repeats < 1) throw UsageError("--repeats must be positive");
  if (a.dim < 2) throw UsageError("--d must be at least 2");
  for (auto d : a.dims)
    if (d < 1 || d > a.dim) throw UsageError("--dims entries must lie in [1, " + std::to_string(a.dim) + "]");
  for (auto m : a.sizes)
    if (m < 1) throw UsageError("--sizes entries must be positive");
  if (a.n_source < 1 || a.n_eval < 1) throw UsageError("sample sizes must be positive");

  ExperimentOptions opts;
  opts.n_source = a.n_source;
  opts.n_eval = a.n_eval;
  opts.project.lr = a.project_lr;
  opts.project.max_steps = a.project_steps;
  opts.probe = ProbeConfig{a.probe_lr, a.probe_l2, a.probe_steps, 1, a.shared.seed};
  opts.jobs = a.shared.jobs;
  const auto suite = default_shog_suite(a.shared.seed, a.dim);
  const auto report = run_bias_variance_experiment(suite, a.dims, a.sizes, a.repeats, a.shared.seed, opts);

  OutputSet out(a.shared.out);
  out.add("bias_variance.json", dump(to_json(report)));
  out.add("nullspace.csv", nullspace_csv(report));
  out.add("accuracy.csv", accuracy_csv(report));
  Json resolved = shared_json(a.shared, "shog-experiment");
  resolved["suite"] = a.suite;
  resolved["d"] = a.dim;
  resolved["repeats"] = a.repeats;
  resolved["dims"] = a.dims;
  resolved["sizes"] = a.sizes;
  resolved["n_source"] = a.n_source;
  resolved["n_eval"] = a.n_eval;
  resolved["project_lr"] = a.project_lr;
  resolved["project_steps"] = a.project_steps;
  resolved["probe_lr"] = a.probe_lr;
  resolved["probe_l2"] = a.probe_l2;
  resolved["probe_steps"] = a.probe_steps;
  resolved["inputs"] = Json::object();
  resolved["outputs"] = out.names();
  out.add("resolved_config.json", dump(resolved));
  out.commit();
  return 0;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DegeneracyError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Project-and-probe few-shot adaptation on precomputed embeddings"};
  app.require_subcommand(1);

  GenShogArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-shog", "Sample the shifted Gaussian suite to embedding files");
  add_shared(gen_cmd, gen.shared);
  gen_cmd->add_option("--suite", gen.suite, "Suite name")->capture_default_str();
  gen_cmd->add_option("--params", gen.params, "Explicit SHOG params JSON instead of a suite");
  gen_cmd->add_option("--n-source", gen.n_source, "Source sample size")->capture_default_str();
  gen_cmd->add_option("--n-target", gen.n_target, "Few-shot target pool size")->capture_default_str();
  gen_cmd->add_option("--n-eval", gen.n_eval, "Held-out sample size")->capture_default_str();
  gen_cmd->add_option("--d", gen.dim, "Embedding dimension")->capture_default_str();
  gen_cmd->add_option("--format", gen.format, "bin or csv")->capture_default_str();

  ProjectArgs proj;
  auto* proj_cmd = app.add_subcommand("project", "Learn a feature basis from source embeddings");
  add_shared(proj_cmd, proj.shared);
  proj_cmd->add_option("--source", proj.source, "Source embedding file")->required();
  proj_cmd->add_option("--mode", proj.mode, "joint, sequential, nc or random")->capture_default_str();
  proj_cmd->add_option("--d", proj.d, "Basis rank")->capture_default_str();
  proj_cmd->add_option("--lr", proj.lr, "AdamW learning rate")->capture_default_str();
  proj_cmd->add_option("--weight-decay", proj.weight_decay, "AdamW weight decay")->capture_default_str();
  proj_cmd->add_option("--max-steps", proj.max_steps, "Full-batch steps")->capture_default_str();
  proj_cmd->add_flag("--standardize", proj.standardize, "Standardize dimensions using source statistics");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Fit a linear probe on projected few-shot target data");
  add_shared(probe_cmd, probe.shared);
  probe_cmd->add_option("--basis", probe.basis, "Basis file from `project`")->required();
  probe_cmd->add_option("--target", probe.target, "Target embedding file to draw the few-shot sample from")->required();
  probe_cmd->add_option("--val", probe.val, "Separate validation file");
  probe_cmd->add_option("--test", probe.test, "Separate test file (default: rows not drawn)");
  probe_cmd->add_option("--m", probe.m, "Examples per label")->capture_default_str();
  probe_cmd->add_option("--lr", probe.lr, "AdamW learning rate")->capture_default_str();
  probe_cmd->add_option("--l2", probe.l2, "Weight decay")->capture_default_str();
  probe_cmd->add_option("--max-steps", probe.max_steps, "Full-batch steps")->capture_default_str();
  probe_cmd->add_option("--eval-every", probe.eval_every, "Validation interval")->capture_default_str();

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over dimensions, learning rates and L2 weights");
  add_shared(sweep_cmd, sw.shared);
  sweep_cmd->add_option("--source", sw.source, "Source embedding file")->required();
  sweep_cmd->add_option("--target", sw.target, "Target embedding file")->required();
  sweep_cmd->add_option("--val", sw.val, "Separate validation file");
  sweep_cmd->add_option("--test", sw.test, "Separate test file");
  sweep_cmd->add_option("--m", sw.m, "Examples per label")->capture_default_str();
  sweep_cmd->add_option("--methods", sw.methods, "pro2,pro2_seq,pro2_nc,random,full_probe")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--lrs", sw.lrs, "Probe learning rates")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--l2s", sw.l2s, "Probe L2 weights")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--dims", sw.dims, "Projection dimensions")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--project-lr", sw.project_lr, "Projection learning rate")->capture_default_str();
  sweep_cmd->add_option("--project-steps", sw.project_steps, "Projection steps")->capture_default_str();
  sweep_cmd->add_option("--probe-steps", sw.probe_steps, "Probe steps")->capture_default_str();
  sweep_cmd->add_flag("--standardize", sw.standardize, "Standardize dimensions using source statistics");
  sweep_cmd->add_flag("--timing", sw.timing, "Record per-cell wall time (makes outputs non-reproducible)");

  ExperimentArgs ex;
  auto* ex_cmd = app.add_subcommand("shog-experiment", "Bias-variance experiment on the synthetic suite");
  add_shared(ex_cmd, ex.shared);
  ex_cmd->add_option("--suite", ex.suite, "Suite name")->capture_default_str();
  ex_cmd->add_option("--d", ex.dim, "Embedding dimension")->capture_default_str();
  ex_cmd->add_option("--repeats", ex.repeats, "Independent repeats")->capture_default_str();
  ex_cmd->add_option("--dims", ex.dims, "Projection dimensions")->delimiter(',')->capture_default_str();
  ex_cmd->add_option("--sizes", ex.sizes, "Target examples per label")->delimiter(',')->capture_default_str();
  ex_cmd->add_option("--n-source", ex.n_source, "Source sample size")->capture_default_str();
  ex_cmd->add_option("--n-eval", ex.n_eval, "Held-out sample size")->capture_default_str();
  ex_cmd->add_option("--project-lr", ex.project_lr, "Projection learning rate")->capture_default_str();
  ex_cmd->add_option("--project-steps", ex.project_steps, "Projection steps")->capture_default_str();
  ex_cmd->add_option("--probe-lr", ex.probe_lr, "Probe learning rate")->capture_default_str();
  ex_cmd->add_option("--probe-l2", ex.probe_l2, "Probe weight decay")->capture_default_str();
  ex_cmd->add_option("--probe-steps", ex.probe_steps, "Probe steps")->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = cli::merge_config(std::move(args), {"standardize", "timing"});
  } catch (const pro2::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*gen_cmd) return guarded([&] { return run_gen_shog(gen); });
  if (*proj_cmd) return guarded([&] { return run_project(proj); });
  if (*probe_cmd) return guarded([&] { return run_probe(probe); });
  if (*sweep_cmd) return guarded([&] { return run_sweep(sw); });
  if (*ex_cmd) return guarded([&] { return run_experiment(ex); });
  return kExitUsage;
}
