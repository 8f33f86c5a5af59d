#include "quatrec/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "quatrec/config.hpp"
#include "quatrec/data.hpp"
#include "quatrec/eval.hpp"
#include "quatrec/models.hpp"
#include "quatrec/synthetic.hpp"
#include "quatrec/training.hpp"

namespace quatrec::cli {

namespace fs = std::filesystem;

namespace {

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

struct Common {
  std::size_t threads = 1;
};

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
  std::string input;
  std::string out;
  std::size_t k = 5;
  std::size_t s = 5;
  std::string format = "auto";
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out) {
  FileFormat format = FileFormat::kAuto;
  if (a.format == "csv") format = FileFormat::kCsv;
  else if (a.format == "tsv") format = FileFormat::kTsv;
  else if (a.format != "auto") throw ContractError("unknown format '" + a.format + "'");
  if (a.k == 0) throw ContractError("--k must be at least 1");
  if (a.s == 0) throw ContractError("--s must be at least 1");
  PreparedDataset data = prepare(ingest(a.input, format), a.k, a.s);
  write_processed(data, a.out);
  out << data.manifest.stats_line() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config_file;
  ExperimentConfig cfg;
};

void write_epoch(std::ostream& log, const EpochLog& e, const char* phase) {
  nlohmann::json j = {{"epoch", e.epoch},           {"phase", phase},
                      {"loss", e.loss},             {"val_hit100", e.val_hit100},
                      {"val_ndcg100", e.val_ndcg100}, {"wall_seconds", e.wall_seconds}};
  log << j.dump() << '\n';
  log.flush();
}

ModelConfig model_config(const ExperimentConfig& cfg, const Manifest& m) {
  ModelConfig mc;
  mc.kind = parse_model_kind(cfg.model);
  mc.n_users = m.n_users;
  mc.n_items = m.n_items;
  mc.dim = cfg.dim;
  mc.long_window = m.l;
  mc.short_window = m.s;
  return mc;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  if (cfg.data_dir.empty()) throw ContractError("no dataset: pass --data or set data_dir");
  const PreparedDataset data = load_processed(cfg.data_dir);
  const ModelConfig mc = model_config(cfg, data.manifest);
  mc.validate();

  const fs::path dir = cfg.output_dir.empty()
                           ? output_root() / (cfg.model + "-" + cfg.loss + "-seed" +
                                              std::to_string(cfg.seed))
                           : fs::path(cfg.output_dir);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "config.json");
    f << nlohmann::json(cfg).dump(2) << '\n';
  }
  auto log = open_out(dir / "epochs.jsonl");

  const UserItemSets train_items = user_items(data.split, {Split::kTrain});
  const UserItemSets interacted =
      user_items(data.split, {Split::kTrain, Split::kValidation, Split::kTest});
  TrainingData td{data.instances.train, data.instances.validation, &train_items, &interacted,
                  data.manifest.n_items};
  TrainConfig tc = cfg.train_config();

  auto report = [&](const char* phase) {
    return [&, phase](const EpochLog& e) {
      write_epoch(log, e, phase);
      out << phase << " epoch " << e.epoch << "  loss " << e.loss << "  val HIT@100 "
          << e.val_hit100 << "  val NDCG@100 " << e.val_ndcg100 << "  (" << std::fixed
          << std::setprecision(1) << e.wall_seconds << "s)" << std::defaultfloat
          << std::setprecision(6) << '\n';
    };
  };

  std::optional<Model> model;
  if (tc.loss == LossKind::kQabpr && !cfg.init_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
    if (!(ck.model.config() == mc))
      throw ContractError("init checkpoint " + cfg.init_checkpoint +
                          " does not match the model/dataset of this run");
    model.emplace(std::move(ck.model));
  } else {
    model.emplace(mc, cfg.seed);
    if (tc.loss == LossKind::kQabpr && cfg.pretrain_epochs > 0) {
      TrainConfig pre = tc;
      pre.loss = LossKind::kBpr;
      pre.epochs = cfg.pretrain_epochs;
      train(*model, td, pre, report("pretrain"));
    }
  }
  const TrainResult result = train(*model, td, tc, report("train"));

  nlohmann::json extra = {{"experiment", cfg},
                          {"best_epoch", result.best_epoch},
                          {"best_val_ndcg100", result.best_val_ndcg100}};
  save_checkpoint(*model, dir / "checkpoint.bin", extra);
  out << "best epoch " << result.best_epoch << "  val NDCG@100 " << result.best_val_ndcg100
      << "\ncheckpoint " << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::vector<std::size_t> cutoffs{1, 10, 20, 50, 100};
  std::uint64_t seed = 1;
  std::size_t negatives = 1000;
  std::size_t max_instances = 0;
  std::string baseline;
  std::string out_file;
};

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ContractError("unknown split '" + s + "'");
}

void check_compatible(const Model& model, const Manifest& m) {
  if (model.config().n_users != m.n_users || model.config().n_items != m.n_items)
    throw DataError("checkpoint vocabulary (" + std::to_string(model.config().n_users) +
                    " users, " + std::to_string(model.config().n_items) +
                    " items) does not match the dataset (" + std::to_string(m.n_users) + ", " +
                    std::to_string(m.n_items) + ")");
}

std::string data_dir_of(const std::string& given, const nlohmann::json& extra) {
  if (!given.empty()) return given;
  if (extra.contains("experiment") && extra["experiment"].contains("data_dir"))
    return extra["experiment"]["data_dir"].get<std::string>();
  throw ContractError("no dataset: pass --data");
}

int cmd_eval(const EvalArgs& a, const Common& common, std::ostream& out) {
  const Split split = parse_split(a.split);
  if (a.cutoffs.empty()) throw ContractError("at least one cutoff is required");
  if (!a.baseline.empty() && a.baseline != "popularity")
    throw ContractError("unknown baseline '" + a.baseline + "' (only popularity)");
  if (a.baseline.empty() && a.checkpoint.empty())
    throw ContractError("eval needs --checkpoint or --baseline popularity");

  std::optional<Checkpoint> ck;
  if (a.baseline.empty()) ck.emplace(load_checkpoint(a.checkpoint));
  const PreparedDataset data =
      load_processed(data_dir_of(a.data, ck ? ck->extra : nlohmann::json::object()));
  if (ck) check_compatible(ck->model, data.manifest);

  const UserItemSets interacted =
      user_items(data.split, {Split::kTrain, Split::kValidation, Split::kTest});
  EvalOptions options;
  options.num_negatives = a.negatives;
  options.cutoffs = a.cutoffs;
  options.seed = a.seed;
  options.threads = common.threads;
  options.max_instances = a.max_instances;

  std::unique_ptr<Scorer> scorer;
  if (ck)
    scorer = std::make_unique<ModelScorer>(ck->model);
  else
    scorer = std::make_unique<PopularityScorer>(item_popularity(data.split));
  MetricReport report = evaluate(*scorer, data.instances.of(split), interacted,
                                 data.manifest.n_items, options);
  report.model = ck ? to_string(ck->model.kind()) : "popularity";

  nlohmann::json j = report.to_json();
  j["split"] = to_string(split);
  out << std::left << std::setw(12) << "model" << std::setw(8) << "cutoff" << std::setw(12)
      << "HIT" << std::setw(12) << "NDCG" << "instances\n";
  for (std::size_t i = 0; i < report.cutoffs.size(); ++i)
    out << std::setw(12) << report.model << std::setw(8) << report.cutoffs[i] << std::setw(12)
        << report.hit[i] << std::setw(12) << report.ndcg[i] << report.instances << '\n';
  out << std::right;
  if (report.short_pool_instances > 0)
    out << "warning: " << report.short_pool_instances
        << " instances had fewer eligible negatives than requested\n";
  if (!a.out_file.empty()) open_out(a.out_file) << j.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string mode;
  std::string data;
  std::string checkpoint;
  std::string out_dir;
  std::string unit = "positions";
  double width = 1;
  std::size_t buckets = 20;
  std::size_t bins = 20;
  std::string split = "test";
  std::size_t max_instances = 0;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.mode != "density" && a.mode != "pmi")
    throw ContractError("--mode must be density or pmi");
  std::optional<Checkpoint> ck;
  if (a.mode == "pmi") {
    if (a.checkpoint.empty()) throw ContractError("pmi analysis needs --checkpoint");
    ck.emplace(load_checkpoint(a.checkpoint));
  }
  const PreparedDataset data =
      load_processed(data_dir_of(a.data, ck ? ck->extra : nlohmann::json::object()));
  const fs::path dir = a.out_dir.empty() ? output_root() / ("analysis-" + a.mode) : fs::path(a.out_dir);
  fs::create_directories(dir);

  if (a.mode == "density") {
    DensityOptions opt;
    if (a.unit == "seconds") opt.unit = IntervalUnit::kSeconds;
    else if (a.unit != "positions") throw ContractError("--unit must be positions or seconds");
    opt.interval_width = a.width;
    opt.max_interval_buckets = a.buckets;
    opt.similarity_bins = a.bins;
    std::vector<TimedInteraction> xs;
    for (const auto& r : data.split.log.records) xs.push_back({r.user, r.item, r.timestamp});
    const DensityTable t = similarity_density(xs, opt);
    {
      auto f = open_out(dir / "similarity_points.tsv");
      f << std::setprecision(17);
      for (const auto& [interval, sim] : t.points) f << interval << '\t' << sim << '\n';
    }
    {
      auto f = open_out(dir / "density.tsv");
      f << std::setprecision(17);
      for (std::size_t b = 0; b < t.density.size(); ++b)
        for (std::size_t s = 0; s < t.density[b].size(); ++s)
          f << t.interval_edges[b] << '\t' << t.similarity_edges[s] << '\t' << t.density[b][s]
            << '\n';
    }
    out << "pairs " << t.pairs << "\nwrote " << (dir / "density.tsv").string() << " and "
        << (dir / "similarity_points.tsv").string() << '\n';
    return kExitOk;
  }

  check_compatible(ck->model, data.manifest);
  const PmiTable pmi(user_items(data.split, {Split::kTrain}), data.manifest.n_items);
  auto instances = std::span<const ScoringInstance>(data.instances.of(parse_split(a.split)));
  if (a.max_instances > 0 && instances.size() > a.max_instances)
    instances = instances.subspan(0, a.max_instances);
  const Model& model = ck->model;
  const PmiCorrelation c = pmi_attention_correlation(
      [&](const ScoringInstance& inst) { return model.long_attention(inst); }, instances, pmi);
  {
    auto f = open_out(dir / "pmi_attention.tsv");
    f << std::setprecision(17);
    for (const auto& p : c.points) f << p.pmi << '\t' << p.attention << '\n';
  }
  out << "pearson " << c.rho << "  points " << c.points.size() << "\nwrote "
      << (dir / "pmi_attention.tsv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_stats(const std::string& dir, std::ostream& out) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw DataError("cannot open " + (fs::path(dir) / "manifest.json").string());
  Manifest m;
  try {
    m = Manifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest.json: ") + e.what());
  }
  out << m.stats_line() << '\n' << m.to_json().dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quaternion sequential recommenders: prepare data, train, evaluate, analyze"};
  app.require_subcommand(1);
  app.fallthrough();  // --threads may follow the subcommand
  Common common;
  app.add_option("--threads", common.threads, "Worker threads for evaluation")
      ->check(CLI::PositiveNumber);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Filter, split and window an interaction file");
  p->add_option("--input", prep.input, "CSV/TSV of user,item,timestamp[,rating]")->required();
  p->add_option("--out", prep.out, "Processed dataset directory")->required();
  p->add_option("--k", prep.k, "k-core threshold");
  p->add_option("--s", prep.s, "Short-term window");
  p->add_option("--format", prep.format, "auto, csv or tsv");

  TrainArgs ta;
  ExperimentConfig& c = ta.cfg;
  auto* t = app.add_subcommand("train", "Train a model on a processed dataset");
  t->add_option("--config", ta.config_file, "JSON experiment config; flags override it");
  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> overrides;
  ExperimentConfig flags;
  auto flag = [&]<typename T>(const char* name, T ExperimentConfig::*member, const char* help) {
    CLI::Option* o = t->add_option(name, flags.*member, help);
    overrides.emplace_back(o, [&flags, member](ExperimentConfig& target) {
      target.*member = flags.*member;
    });
  };
  flag("--data", &ExperimentConfig::data_dir, "Processed dataset directory");
  flag("--out", &ExperimentConfig::output_dir, "Run output directory");
  flag("--model", &ExperimentConfig::model, "quale, quase-lstm, quase-gru or qualse");
  flag("--loss", &ExperimentConfig::loss, "bpr or qabpr");
  flag("--dim", &ExperimentConfig::dim, "Quaternion embedding size d (multiple of 4)");
  flag("--lr", &ExperimentConfig::learning_rate, "Adam learning rate");
  flag("--reg", &ExperimentConfig::reg_weight, "Squared-L2 weight on network weights");
  flag("--reg-embedding", &ExperimentConfig::reg_embedding, "Squared-L2 weight on embeddings");
  flag("--epochs", &ExperimentConfig::epochs, "Training epochs");
  flag("--batch-size", &ExperimentConfig::batch_size, "Positive instances per batch");
  flag("--negatives", &ExperimentConfig::negatives, "Negatives per positive");
  flag("--adv-weight", &ExperimentConfig::adv_weight, "Weight of the adversarial term");
  flag("--epsilon", &ExperimentConfig::epsilon, "Noise norm");
  flag("--noise-reg", &ExperimentConfig::noise_reg, "Penalty on the noise in the max step");
  flag("--pretrain-epochs", &ExperimentConfig::pretrain_epochs, "BPR epochs before adversarial training");
  flag("--init-checkpoint", &ExperimentConfig::init_checkpoint, "Start adversarial training from here");
  flag("--seed", &ExperimentConfig::seed, "Random seed");
  flag("--eval-negatives", &ExperimentConfig::eval_negatives, "Negatives per validation instance");
  flag("--val-max-instances", &ExperimentConfig::val_max_instances, "Validation instances per epoch (0 = all)");

  EvalArgs ea;
  auto* e = app.add_subcommand("eval", "Rank held-out interactions against sampled negatives");
  e->add_option("--checkpoint", ea.checkpoint, "Checkpoint written by train");
  e->add_option("--data", ea.data, "Processed dataset (default: the one trained on)");
  e->add_option("--split", ea.split, "test, validation or train");
  e->add_option("--cutoffs", ea.cutoffs, "Ranking cutoffs")->delimiter(',');
  e->add_option("--seed", ea.seed, "Negative sampling seed");
  e->add_option("--negatives", ea.negatives, "Negatives per instance");
  e->add_option("--max-instances", ea.max_instances, "Evaluate only the first n (0 = all)");
  e->add_option("--baseline", ea.baseline, "Score with a baseline instead (popularity)");
  e->add_option("--out", ea.out_file, "Write the JSON report here");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "Similarity density or PMI-vs-attention analysis");
  an->add_option("--mode", aa.mode, "density or pmi")->required();
  an->add_option("--data", aa.data, "Processed dataset");
  an->add_option("--checkpoint", aa.checkpoint, "Model checkpoint (pmi mode)");
  an->add_option("--out", aa.out_dir, "Output directory");
  an->add_option("--unit", aa.unit, "Interval unit: positions or seconds");
  an->add_option("--width", aa.width, "Interval bucket width");
  an->add_option("--buckets", aa.buckets, "Number of interval buckets");
  an->add_option("--bins", aa.bins, "Number of similarity bins");
  an->add_option("--split", aa.split, "Instances for pmi mode");
  an->add_option("--max-instances", aa.max_instances, "Use only the first n instances");

  std::string stats_dir;
  auto* st = app.add_subcommand("stats", "Print the dataset statistics of a processed dataset");
  st->add_option("--data", stats_dir, "Processed dataset directory")->required();

  SyntheticConfig syn;
  std::string syn_out;
  auto* sy = app.add_subcommand("synth", "Write a synthetic interaction log with planted structure");
  sy->add_option("--out", syn_out, "Output CSV")->required();
  sy->add_option("--users", syn.n_users, "Number of users");
  sy->add_option("--items", syn.n_items, "Number of items");
  sy->add_option("--clusters", syn.n_clusters, "Item clusters");
  sy->add_option("--min-length", syn.min_length, "Shortest user sequence");
  sy->add_option("--max-length", syn.max_length, "Longest user sequence");
  sy->add_option("--markov", syn.markov_prob, "Probability of following the successor item");
  sy->add_option("--cluster", syn.cluster_prob, "Probability of staying in the user's cluster");
  sy->add_option("--seed", syn.seed, "Generator seed");

  std::vector<const char*> argv{"quatrec"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (p->parsed()) return cmd_prepare(prep, out);
    if (t->parsed()) {
      if (!ta.config_file.empty()) c = load_experiment_config(ta.config_file);
      for (auto& [opt, apply] : overrides)
        if (opt->count() > 0) apply(c);
      c.threads = common.threads;
      return cmd_train(c, out);
    }
    if (e->parsed()) return cmd_eval(ea, common, out);
    if (an->parsed()) return cmd_analyze(aa, out);
    if (st->parsed()) return cmd_stats(stats_dir, out);
    if (sy->parsed()) {
      const InteractionLog log = generate_synthetic(syn);
      export_csv(log, syn_out);
      out << "wrote " << log.records.size() << " interactions to " << syn_out << '\n';
      return kExitOk;
    }
  } catch (const ContractError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const LookupError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const EmptyHistoryError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace quatrec::cli
