#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "consmrf/baselines.hpp"
#include "consmrf/checkpoint.hpp"
#include "consmrf/consensus_trainer.hpp"
#include "consmrf/dataset.hpp"
#include "consmrf/errors.hpp"
#include "consmrf/evaluator.hpp"
#include "consmrf/synthetic.hpp"
#include "consmrf/version.hpp"

namespace consmrf::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingData = 3,
  kBadInput = 4,
  kDiverged = 5,
  kSaturated = 6,
  kSplitRejected = 7,
};

inline constexpr const char* kOutputDirEnv = "CONSMRF_OUTPUT_DIR";

struct RunConfig {
  std::string subcommand;
  std::string data_path;
  bool use_synthetic = false;
  SyntheticSpec synthetic;
  ModelKind model = ModelKind::consmrf;
  Hyperparams hp;
  std::size_t n_workers = 1;
  std::string output_dir;
  std::size_t folds = 1;
  bool disjoint_folds = false;
  double test_frac = 0.1;
  double valid_frac = 0.1;
  bool stratified = false;
  std::size_t loss_samples = TrainOptions{}.loss_sample_cap;
  std::optional<std::size_t> dmf_budget_factor;
  bool keep_adagrad = false;
  bool track_validation = false;
  /// Leaves wall-clock columns empty and skips the timing log.
  bool omit_timings = false;
  std::string checkpoint;
  std::vector<double> rho_values;
  std::vector<std::size_t> worker_counts;
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["version"] = std::string(kVersion);
  j["subcommand"] = c.subcommand;
  j["data"] = c.use_synthetic ? nlohmann::json(nullptr) : nlohmann::json(c.data_path);
  if (c.use_synthetic)
    j["synthetic"] = {{"entities", c.synthetic.n_entities},
                      {"relations", c.synthetic.n_relations},
                      {"k", c.synthetic.k},
                      {"top", c.synthetic.top_n},
                      {"seed", c.synthetic.seed}};
  j["model"] = std::string(to_string(c.model));
  j["shape"] = std::string(to_string(c.hp.shape));
  j["k"] = c.hp.k;
  j["lambda"] = c.hp.lambda;
  j["eta"] = c.hp.eta;
  j["rho"] = c.hp.rho;
  j["sigma_init"] = c.hp.sigma_init;
  j["epsilon"] = c.hp.epsilon;
  j["inner_budget"] = c.hp.inner_budget ? nlohmann::json(*c.hp.inner_budget) : nlohmann::json(nullptr);
  j["max_rounds"] = c.hp.max_rounds;
  j["eval_negatives"] = c.hp.eval_negatives;
  j["top_k"] = c.hp.top_k;
  j["alpha"] = c.hp.alpha;
  j["seed"] = c.hp.seed;
  j["adagrad_delta"] = c.hp.adagrad_delta;
  j["workers"] = c.n_workers;
  j["output_dir"] = c.output_dir;
  j["folds"] = c.folds;
  j["disjoint_folds"] = c.disjoint_folds;
  j["test_frac"] = c.test_frac;
  j["valid_frac"] = c.valid_frac;
  j["stratified"] = c.stratified;
  j["loss_samples"] = c.loss_samples;
  j["dmf_budget_factor"] = c.dmf_budget_factor ? nlohmann::json(*c.dmf_budget_factor) : nlohmann::json(nullptr);
  j["keep_adagrad"] = c.keep_adagrad;
  j["track_validation"] = c.track_validation;
  j["omit_timings"] = c.omit_timings;
  if (!c.checkpoint.empty()) j["checkpoint"] = c.checkpoint;
  if (!c.rho_values.empty()) j["rho_values"] = c.rho_values;
  if (!c.worker_counts.empty()) j["worker_counts"] = c.worker_counts;
  return j;
}

namespace detail {

inline std::filesystem::path output_path(const RunConfig& c, const std::string& name) {
  return std::filesystem::path(c.output_dir) / name;
}

inline std::ofstream open_output(const RunConfig& c, const std::string& name) {
  const auto path = output_path(c, name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void prepare_output_dir(const RunConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.output_dir + ": " + ec.message());
  open_output(c, "config.json") << to_json(c).dump(2) << '\n';
}

inline bool is_dataset_cache(const std::string& path) {
  std::ifstream in(path);
  std::string first;
  return in && std::getline(in, first) && first.starts_with(kDatasetCacheMagic);
}

inline MultiRelationalDataset load_dataset(const RunConfig& c) {
  if (c.use_synthetic) return make_synthetic(c.synthetic).dataset;
  if (c.data_path.empty()) throw IoError("no dataset: pass --data PATH or --synthetic");
  if (!std::filesystem::exists(c.data_path)) throw IoError("dataset not found: " + c.data_path);
  if (is_dataset_cache(c.data_path)) {
    std::ifstream in(c.data_path);
    return read_dataset_cache(in);
  }
  return parse_triples(c.data_path);
}

inline SplitDataset split(const RunConfig& c, const MultiRelationalDataset& ds) {
  return split_dataset(ds, c.test_frac, c.valid_frac, c.hp.seed, SplitOptions{c.stratified});
}

inline TrainOptions train_options(const RunConfig& c) {
  TrainOptions opts;
  opts.loss_sample_cap = c.loss_samples;
  opts.dmf_budget_factor = c.dmf_budget_factor;
  opts.reset_adagrad_with_consensus = !c.keep_adagrad;
  opts.track_validation = c.track_validation;
  return opts;
}

struct TrainResult {
  AnyModel model;
  LearningCurve curve;
  std::vector<RelationTiming> timings;
};

inline TrainResult train_any(const RunConfig& c, const SplitDataset& splits, const Hyperparams& hp,
                             std::size_t n_workers) {
  const TrainOptions opts = train_options(c);
  switch (c.model) {
    case ModelKind::consmrf: {
      auto m = train_consmrf(splits.train, hp, n_workers, opts, &splits);
      auto curve = m.curve;
      auto timings = m.timings;
      return {std::move(m), std::move(curve), std::move(timings)};
    }
    case ModelKind::cd: {
      auto m = train_cd(splits.train, hp, n_workers, opts);
      auto curve = m.curve;
      return {std::move(m), std::move(curve), {}};
    }
    case ModelKind::dmf: {
      auto m = train_dmf(splits.train, hp, n_workers, opts);
      auto curve = m.curve;
      auto timings = m.timings;
      return {std::move(m), std::move(curve), std::move(timings)};
    }
  }
  throw std::logic_error("unknown model kind");
}

inline std::uint64_t eval_seed(const Hyperparams& hp) { return derive_seed(hp.seed, {seed_tag::kEval}); }

inline EvalReport evaluate_any(const AnyModel& model, const SplitDataset& splits, const Hyperparams& hp) {
  return evaluate_model(AnyModelScorer{&model}, splits, hp.eval_negatives, hp.top_k, eval_seed(hp));
}

inline void write_report(const RunConfig& c, const std::string& stem, const EvalReport& report,
                         const Vocabulary& vocab) {
  auto csv = open_output(c, stem + ".csv");
  write_report_csv(csv, report, vocab);
  auto txt = open_output(c, stem + ".txt");
  write_report_summary(txt, report);
}

// ---------------------------------------------------------------------------
// Subcommands

inline int run_ingest(const RunConfig& c, std::ostream& out) {
  const auto ds = load_dataset(c);
  prepare_output_dir(c);
  auto cache = open_output(c, "dataset.cache");
  write_dataset_cache(cache, ds);
  auto stats = open_output(c, "stats.csv");
  write_stats_csv(stats, ds);
  out << "ingested " << ds.n_triples() << " triples, " << ds.n_entities() << " entities, " << ds.n_relations()
      << " relations\n";
  return kOk;
}

inline int run_train(const RunConfig& c, std::ostream& out) {
  const auto ds = load_dataset(c);
  const auto splits = split(c, ds);
  prepare_output_dir(c);
  auto result = train_any(c, splits, c.hp, c.n_workers);
  save_checkpoint(output_path(c, "model.ckpt").string(), result.model, c.hp);
  auto curve = open_output(c, "learning_curve.csv");
  write_learning_curve_csv(curve, result.curve, !c.omit_timings);
  if (!c.omit_timings && !result.timings.empty()) {
    auto timing = open_output(c, "timings.csv");
    write_timing_csv(timing, result.timings);
  }
  out << "trained " << to_string(c.model) << " for " << result.curve.size() << " rounds";
  if (!result.curve.empty()) out << ", final loss " << result.curve.back().train_loss;
  out << '\n';
  return kOk;
}

inline void check_compatible(const CheckpointHeader& h, const MultiRelationalDataset& ds) {
  if (h.n_entities != ds.n_entities() || h.n_relations != ds.n_relations())
    throw std::invalid_argument("checkpoint has " + std::to_string(h.n_entities) + " entities and " +
                                std::to_string(h.n_relations) + " relations; dataset has " +
                                std::to_string(ds.n_entities()) + " and " + std::to_string(ds.n_relations()));
}

inline int run_evaluate(const RunConfig& c, std::ostream& out) {
  const auto ds = load_dataset(c);
  const auto& vocab = ds.vocabulary();
  if (!c.checkpoint.empty()) {
    const auto cp = load_checkpoint(c.checkpoint);
    check_compatible(cp.header, ds);
    const auto splits = split(c, ds);
    prepare_output_dir(c);
    const auto report = evaluate_any(cp.model, splits, c.hp);
    write_report(c, "report", report, vocab);
    write_report_summary(out, report);
    return kOk;
  }
  if (c.folds <= 1) {
    const auto splits = split(c, ds);
    prepare_output_dir(c);
    const auto result = train_any(c, splits, c.hp, c.n_workers);
    const auto report = evaluate_any(result.model, splits, c.hp);
    write_report(c, "report", report, vocab);
    write_report_summary(out, report);
    return kOk;
  }
  const auto folds = make_folds(ds, c.folds, c.hp.seed, FoldOptions{c.test_frac, c.valid_frac, c.disjoint_folds});
  prepare_output_dir(c);
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto result = train_any(c, folds[i], c.hp, c.n_workers);
    reports.push_back(evaluate_any(result.model, folds[i], c.hp));
    write_report(c, "report_fold" + std::to_string(i), reports.back(), vocab);
  }
  auto summary = open_output(c, "fold_summary.csv");
  write_fold_summary_csv(summary, reports);
  write_fold_summary_csv(out, reports);
  return kOk;
}

inline int run_sweep_rho(const RunConfig& c, std::ostream& out) {
  if (c.model != ModelKind::consmrf) throw std::invalid_argument("sweep-rho requires --model consmrf");
  const auto ds = load_dataset(c);
  const auto splits = split(c, ds);
  prepare_output_dir(c);
  auto csv = open_output(c, "sweep_rho.csv");
  csv << "rho,rounds,train_loss,consensus_gap,auc,precision_at_k,recall_at_k\n";
  for (double rho : c.rho_values) {
    Hyperparams hp = c.hp;
    hp.rho = rho;
    const auto model = train_consmrf(splits.train, hp, c.n_workers, train_options(c), &splits);
    const auto report = evaluate_model(model, splits, hp.eval_negatives, hp.top_k, eval_seed(hp));
    const double loss = model.curve.empty() ? model.initial_loss : model.curve.back().train_loss;
    csv << csv::number(rho) << ',' << model.rounds_completed << ',' << csv::number(loss) << ','
        << csv::number(model.mean_consensus_gap()) << ',' << csv::number(report.macro.auc) << ','
        << csv::number(report.macro.precision_at_k) << ',' << csv::number(report.macro.recall_at_k) << '\n';
    out << "rho " << rho << ": AUC " << report.macro.auc << '\n';
  }
  return kOk;
}

inline int run_bench_cores(const RunConfig& c, std::ostream& out) {
  if (c.model == ModelKind::cd) throw std::invalid_argument("bench-cores: cd trains single-threaded");
  const auto ds = load_dataset(c);
  const auto splits = split(c, ds);
  prepare_output_dir(c);
  auto csv = open_output(c, "bench_cores.csv");
  csv << "n_workers,wall_seconds\n";
  for (std::size_t w : c.worker_counts) {
    const Stopwatch clock;
    train_any(c, splits, c.hp, w);
    const double seconds = clock.seconds();
    csv << w << ',' << csv::number(seconds) << '\n';
    out << w << " workers: " << seconds << " s\n";
  }
  return kOk;
}

inline void add_common_options(CLI::App& cmd, RunConfig& c, bool with_workers) {
  cmd.add_option("--data", c.data_path, "TSV triple file or dataset cache");
  cmd.add_flag("--synthetic", c.use_synthetic, "Generate the synthetic low-rank dataset in-process");
  cmd.add_option("--synthetic-entities", c.synthetic.n_entities)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--synthetic-relations", c.synthetic.n_relations)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--synthetic-k", c.synthetic.k)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--synthetic-top", c.synthetic.top_n)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--synthetic-seed", c.synthetic.seed)->capture_default_str();
  cmd.add_option("--out", c.output_dir, "Output directory")->capture_default_str();
  cmd.add_option("--test-frac", c.test_frac)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--valid-frac", c.valid_frac)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd.add_flag("--stratified", c.stratified, "Split each relation separately");
  if (with_workers) cmd.add_option("--workers", c.n_workers)->capture_default_str()->check(CLI::PositiveNumber);
}

/// Enum-valued flags are read as text and converted after parsing.
struct NamedChoices {
  std::string model = "consmrf";
  std::string shape = "diagonal";

  void apply(RunConfig& c) const {
    c.model = model == "cd" ? ModelKind::cd : model == "dmf" ? ModelKind::dmf : ModelKind::consmrf;
    c.hp.shape = parse_shape(shape).value_or(RelationWeightShape::diagonal);
  }
};

inline void add_model_options(CLI::App& cmd, RunConfig& c, NamedChoices& names) {
  cmd.add_option("--model", names.model)->check(CLI::IsMember({"consmrf", "cd", "dmf"}))->capture_default_str();
  cmd.add_option("--shape", names.shape)->check(CLI::IsMember({"identity", "diagonal", "full"}))->capture_default_str();
  cmd.add_option("--k", c.hp.k)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--lambda", c.hp.lambda)->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd.add_option("--eta", c.hp.eta)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--rho", c.hp.rho)->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd.add_option("--sigma-init", c.hp.sigma_init)->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd.add_option("--epsilon", c.hp.epsilon)->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd.add_option("--inner-budget", c.hp.inner_budget, "SGD samples per relation per round (default |D_r|)");
  cmd.add_option("--max-rounds", c.hp.max_rounds)->capture_default_str();
  cmd.add_option("--eval-negatives", c.hp.eval_negatives)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--top-k", c.hp.top_k)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--alpha", c.hp.alpha)->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd.add_option("--seed", c.hp.seed)->capture_default_str();
  cmd.add_option("--adagrad-delta", c.hp.adagrad_delta)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--loss-samples", c.loss_samples)->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--dmf-budget-factor", c.dmf_budget_factor, "DMF samples per target = factor x |D_t| (default R)");
  cmd.add_flag("--keep-adagrad", c.keep_adagrad, "Keep A_r ADAGRAD accumulators across consensus resets");
  cmd.add_flag("--track-validation", c.track_validation, "Record validation AUC after every round (consmrf)");
  cmd.add_flag("--omit-timings", c.omit_timings, "Leave wall-clock columns empty for byte-stable output");
}

inline std::string default_output_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "consmrf-out";
}

}  // namespace detail

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig c;
  c.output_dir = detail::default_output_dir();
  detail::NamedChoices names;

  CLI::App app{"Multi-relational factorization with consensus ADMM", "consmrf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  auto* ingest = app.add_subcommand("ingest", "Parse triples into a dataset cache and stats CSV");
  detail::add_common_options(*ingest, c, false);

  auto* train = app.add_subcommand("train", "Train a model; writes a checkpoint and learning curve");
  detail::add_common_options(*train, c, true);
  detail::add_model_options(*train, c, names);

  auto* evaluate = app.add_subcommand("evaluate", "Rank held-out triples; trains first unless --checkpoint");
  detail::add_common_options(*evaluate, c, true);
  detail::add_model_options(*evaluate, c, names);
  evaluate->add_option("--checkpoint", c.checkpoint, "Evaluate a saved model instead of training");
  evaluate->add_option("--folds", c.folds, "Train and evaluate on this many folds")->capture_default_str()
      ->check(CLI::PositiveNumber);
  evaluate->add_flag("--disjoint-folds", c.disjoint_folds, "Partition test triples across folds");

  auto* sweep = app.add_subcommand("sweep-rho", "Train and evaluate ConsMRF for each rho value");
  detail::add_common_options(*sweep, c, true);
  detail::add_model_options(*sweep, c, names);
  sweep->add_option("--values", c.rho_values, "Comma-separated rho values")->delimiter(',')->required()
      ->check(CLI::NonNegativeNumber);

  auto* bench = app.add_subcommand("bench-cores", "Time training for several worker counts");
  detail::add_common_options(*bench, c, false);
  detail::add_model_options(*bench, c, names);
  bench->add_option("--workers", c.worker_counts, "Comma-separated worker counts")->delimiter(',')->required()
      ->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    names.apply(c);
    if (ingest->parsed()) {
      c.subcommand = "ingest";
      return detail::run_ingest(c, out);
    }
    if (train->parsed()) {
      c.subcommand = "train";
      return detail::run_train(c, out);
    }
    if (evaluate->parsed()) {
      c.subcommand = "evaluate";
      return detail::run_evaluate(c, out);
    }
    if (sweep->parsed()) {
      c.subcommand = "sweep-rho";
      return detail::run_sweep_rho(c, out);
    }
    c.subcommand = "bench-cores";
    return detail::run_bench_cores(c, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kMissingData;
  } catch (const EmptyDatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kMissingData;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const SaturationError& e) {
    err << "error: " << e.what() << '\n';
    return kSaturated;
  } catch (const SplitRejectedError& e) {
    err << "error: " << e.what() << '\n';
    return kSplitRejected;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace consmrf::cli
