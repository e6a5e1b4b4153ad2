#include "ggcf/run.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ggcf/checkpoint.hpp"
#include "ggcf/error.hpp"

namespace ggcf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string dataset_name(DatasetKind kind) {
  return kind == DatasetKind::kMovieLens ? "movielens" : "lastfm";
}

DatasetKind parse_dataset(const std::string& name) {
  if (name == "movielens") return DatasetKind::kMovieLens;
  if (name == "lastfm") return DatasetKind::kLastFm;
  throw ConfigError("unknown dataset '" + name + "' (expected movielens or lastfm)");
}

fs::path out_dir_of(const RunConfig& c) { return c.out_dir.empty() ? fs::path(default_out_dir()) : c.out_dir; }

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

Split obtain_split(const RunConfig& c) {
  if (!c.split_path.empty()) return read_split(c.split_path);
  if (c.data_path.empty()) throw ConfigError("either a data path or a frozen split file is required");
  return split(load_dataset(c.dataset, c.data_path), c.train_fraction, c.split_seed);
}

json report_json(const EvalReport& r, const std::string& cfg_hash) {
  return {{"k", r.k},
          {"recall", r.recall},
          {"ndcg", r.ndcg},
          {"users_evaluated", r.users_evaluated},
          {"config_hash", cfg_hash}};
}

json history_json(const EpochRecord& rec, const std::string& cfg_hash, bool deterministic, int k) {
  json j;
  j["epoch"] = rec.epoch;
  j["loss"] = rec.loss;
  const std::string rk = "recall@" + std::to_string(k);
  const std::string nk = "ndcg@" + std::to_string(k);
  if (rec.metrics) {
    j[rk] = rec.metrics->recall;
    j[nk] = rec.metrics->ndcg;
  } else {
    j[rk] = nullptr;
    j[nk] = nullptr;
  }
  if (deterministic) {
    j["seconds"] = nullptr;
  } else {
    j["seconds"] = rec.seconds;
  }
  j["config_hash"] = cfg_hash;
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

Checkpoint make_checkpoint(const RunConfig& c, const ParamSet& params, const Split& s,
                           const std::string& cfg_hash, const std::string& sp_hash, int epoch) {
  Checkpoint ckpt;
  ckpt.params = params;
  ckpt.layers = c.train.layers;
  ckpt.flags = c.flags;
  ckpt.user_ids = s.train.user_ids();
  ckpt.item_ids = s.train.item_ids();
  ckpt.config_hash = cfg_hash;
  ckpt.split_hash = sp_hash;
  ckpt.config_json = to_json(c).dump();
  ckpt.epoch = epoch;
  return ckpt;
}

std::string format_metric(const std::optional<EvalReport>& r, bool recall) {
  if (!r) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << (recall ? r->recall : r->ndcg);
  return out.str();
}

void print_cells(const std::vector<CellResult>& cells, int k, std::ostream& out) {
  out << std::left << std::setw(18) << "cell" << std::setw(12) << ("recall@" + std::to_string(k))
      << std::setw(12) << ("ndcg@" + std::to_string(k)) << "status\n";
  for (const auto& c : cells) {
    out << std::left << std::setw(18) << c.label << std::setw(12) << format_metric(c.report, true)
        << std::setw(12) << format_metric(c.report, false)
        << (c.error.empty() ? "ok" : "FAILED: " + c.error) << '\n';
  }
}

json cells_json(const std::vector<CellResult>& cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    json j = {{"cell", c.label},
              {"layers", c.layers},
              {"ablation", c.ablation},
              {"config_hash", c.config_hash},
              {"split_hash", c.split_hash}};
    if (c.report) {
      j["recall"] = c.report->recall;
      j["ndcg"] = c.report->ndcg;
      j["k"] = c.report->k;
      j["users_evaluated"] = c.report->users_evaluated;
    }
    j["error"] = c.error.empty() ? json(nullptr) : json(c.error);
    arr.push_back(j);
  }
  return arr;
}

CellResult run_cell(const RunConfig& cell_cfg, const std::string& label) {
  CellResult cell;
  cell.label = label;
  cell.layers = cell_cfg.train.layers;
  cell.ablation = ablation_name(cell_cfg.flags);
  cell.config_hash = config_hash(cell_cfg);
  try {
    std::ostringstream sink;
    TrainOutcome t = cmd_train(cell_cfg, sink);
    cell.split_hash = t.split_hash;
    for (auto it = t.fit.history.rbegin(); it != t.fit.history.rend(); ++it) {
      if (it->metrics) {
        cell.report = it->metrics;
        break;
      }
    }
    if (!cell.report) cell.error = "no evaluation record";
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

// Freezes the split once so every cell trains on identical data.
RunConfig freeze_split(const RunConfig& c, const fs::path& dir) {
  RunConfig frozen = c;
  if (c.split_path.empty()) {
    ensure_dir(dir);
    frozen.split_path = dir / "split.tsv";
    write_split(frozen.split_path, obtain_split(c));
  }
  return frozen;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  flags.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (!data_path.empty() && !fs::exists(data_path)) {
    throw IoError("data path does not exist: " + data_path.string());
  }
  if (!split_path.empty() && !fs::exists(split_path)) {
    throw IoError("split file does not exist: " + split_path.string());
  }
  for (int k : grid_layers) {
    if (k < 0) throw ConfigError("grid layer counts must be >= 0");
  }
}

json to_json(const RunConfig& c) {
  return {{"dataset", dataset_name(c.dataset)},
          {"data_path", c.data_path.string()},
          {"split_path", c.split_path.string()},
          {"train_fraction", c.train_fraction},
          {"split_seed", c.split_seed},
          {"dim", c.train.dim},
          {"layers", c.train.layers},
          {"lr", c.train.learning_rate},
          {"l2", c.train.l2_weight},
          {"batch", c.train.batch_size},
          {"epochs", c.train.epochs},
          {"seed", c.train.seed},
          {"eval_every", c.train.eval_every},
          {"k", c.train.k},
          {"ablation", ablation_name(c.flags)},
          {"out", c.out_dir.string()},
          {"deterministic", c.deterministic},
          {"grid_layers", c.grid_layers}};
}

RunConfig config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dataset") c.dataset = parse_dataset(v.get<std::string>());
      else if (key == "data_path") c.data_path = v.get<std::string>();
      else if (key == "split_path") c.split_path = v.get<std::string>();
      else if (key == "train_fraction") c.train_fraction = v.get<double>();
      else if (key == "split_seed") c.split_seed = v.get<std::uint64_t>();
      else if (key == "dim") c.train.dim = v.get<std::size_t>();
      else if (key == "layers") c.train.layers = v.get<int>();
      else if (key == "lr") c.train.learning_rate = v.get<double>();
      else if (key == "l2") c.train.l2_weight = v.get<double>();
      else if (key == "batch") c.train.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.train.epochs = v.get<int>();
      else if (key == "seed") c.train.seed = v.get<std::uint64_t>();
      else if (key == "eval_every") c.train.eval_every = v.get<int>();
      else if (key == "k") c.train.k = v.get<int>();
      else if (key == "ablation") c.flags = parse_ablation(v.get<std::string>());
      else if (key == "out") c.out_dir = v.get<std::string>();
      else if (key == "deterministic") c.deterministic = v.get<bool>();
      else if (key == "grid_layers") c.grid_layers = v.get<std::vector<int>>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out");
  return fnv1a_hex(j.dump());
}

std::string split_hash(const Split& s) { return fnv1a_hex(format_split(s)); }

std::string default_out_dir() {
  const char* env = std::getenv("GGCF_OUT_DIR");
  return env && *env ? std::string(env) : std::string("ggcf-out");
}

InteractionSet load_dataset(DatasetKind kind, const fs::path& path) {
  const bool ml = kind == DatasetKind::kMovieLens;
  if (!fs::is_directory(path)) return ml ? load_movielens(path) : load_lastfm(path);
  const InteractionSet data = ml ? load_movielens(path / "ratings.csv") : load_lastfm(path / "user_artists.dat");
  const fs::path catalog = path / (ml ? "movies.csv" : "artists.dat");
  if (!fs::exists(catalog)) return data;
  return with_items(data, load_catalog(catalog, ml ? ',' : '\t'));
}

DatasetSummary cmd_prepare(const RunConfig& c, std::ostream& out) {
  c.validate();
  if (c.data_path.empty()) throw ConfigError("prepare needs --data-path");
  const InteractionSet data = load_dataset(c.dataset, c.data_path);
  const Split s = split(data, c.train_fraction, c.split_seed);
  const fs::path dir = out_dir_of(c);
  ensure_dir(dir);
  write_split(dir / "split.tsv", s);

  DatasetSummary summary{data.user_count(), data.item_count(), data.size(), s.train.size(),
                         s.test.size(),     split_hash(s)};
  const json j = {{"dataset", dataset_name(c.dataset)},
                  {"users", summary.users},
                  {"items", summary.items},
                  {"interactions", summary.interactions},
                  {"train", summary.train},
                  {"test", summary.test},
                  {"split_hash", summary.split_hash},
                  {"config_hash", config_hash(c)}};
  write_text(dir / "summary.json", j.dump(2) + "\n");
  out << "users " << summary.users << "\nitems " << summary.items << "\ninteractions "
      << summary.interactions << "\ntrain " << summary.train << "\ntest " << summary.test
      << "\nsplit " << (dir / "split.tsv").string() << " (" << summary.split_hash << ")\n";
  return summary;
}

TrainOutcome cmd_train(const RunConfig& c, std::ostream& out) {
  c.validate();
  const Split s = obtain_split(c);
  const fs::path dir = out_dir_of(c);
  ensure_dir(dir);

  TrainOutcome outcome;
  outcome.split_hash = split_hash(s);
  outcome.config_hash = config_hash(c);
  outcome.history = dir / "history.jsonl";
  outcome.checkpoint = dir / "checkpoint.ggcf";
  if (c.split_path.empty()) write_split(dir / "split.tsv", s);

  const InteractionGraph graph = build_graph(s.train);
  std::ofstream history(outcome.history, std::ios::binary);
  if (!history) throw IoError("cannot write " + outcome.history.string());
  std::ofstream timing;
  if (c.deterministic) timing.open(dir / "timing.jsonl", std::ios::binary);

  const EpochCallback on_epoch = [&](const EpochRecord& rec, const ParamSet& params) {
    history << history_json(rec, outcome.config_hash, c.deterministic, c.train.k).dump() << '\n';
    history.flush();
    if (timing) timing << json{{"epoch", rec.epoch}, {"seconds", rec.seconds}}.dump() << '\n';
    if (rec.epoch % c.train.eval_every == 0 || rec.epoch == c.train.epochs) {
      save_checkpoint(outcome.checkpoint,
                      make_checkpoint(c, params, s, outcome.config_hash, outcome.split_hash, rec.epoch));
    }
    out << "epoch " << rec.epoch << " loss " << rec.loss;
    if (rec.metrics) {
      out << " recall@" << c.train.k << ' ' << rec.metrics->recall << " ndcg@" << c.train.k << ' '
          << rec.metrics->ndcg;
    }
    out << '\n';
  };
  outcome.fit = fit(graph, s.train, s.test, c.train, c.flags, on_epoch);
  return outcome;
}

EvalReport cmd_evaluate(const fs::path& checkpoint, const fs::path& split_file, int k,
                        const fs::path& out_dir, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Split s = read_split(split_file);
  const std::string sp_hash = split_hash(s);
  if (sp_hash != ckpt.split_hash) {
    throw IncompatibleError("split " + split_file.string() + " (hash " + sp_hash +
                            ") does not match the checkpoint's split (hash " + ckpt.split_hash + ")");
  }
  if (s.train.user_ids() != ckpt.user_ids || s.train.item_ids() != ckpt.item_ids) {
    throw IncompatibleError("checkpoint ID tables do not match the split");
  }
  const InteractionGraph graph = build_graph(s.train);
  const LayerState fin = forward(graph, ckpt.params, ckpt.layers, ckpt.flags);
  const EvalReport report =
      evaluate(fin, s.train, s.test, k, scoring_lambda(ckpt.params, ckpt.flags));
  const json j = report_json(report, ckpt.config_hash);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text(out_dir / "eval.json", j.dump() + "\n");
  }
  out << j.dump() << '\n';
  return report;
}

std::vector<CellResult> cmd_grid(const RunConfig& c, std::ostream& out) {
  c.validate();
  const fs::path dir = out_dir_of(c);
  const RunConfig frozen = freeze_split(c, dir);
  std::vector<CellResult> cells;
  for (int layers : c.grid_layers) {
    RunConfig cell = frozen;
    cell.train.layers = layers;
    cell.out_dir = dir / ("K" + std::to_string(layers));
    cells.push_back(run_cell(cell, "K=" + std::to_string(layers)));
  }
  print_cells(cells, c.train.k, out);
  write_text(dir / "grid.json", cells_json(cells).dump(2) + "\n");
  return cells;
}

std::vector<CellResult> cmd_ablate(const RunConfig& c, std::ostream& out) {
  c.validate();
  const fs::path dir = out_dir_of(c);
  const RunConfig frozen = freeze_split(c, dir);
  std::vector<CellResult> cells;
  for (const char* name : {"full", "no-interaction", "euclidean-only", "hyperbolic-only"}) {
    RunConfig cell = frozen;
    cell.flags = parse_ablation(name);
    cell.out_dir = dir / name;
    cells.push_back(run_cell(cell, name));
  }
  print_cells(cells, c.train.k, out);
  write_text(dir / "ablation.json", cells_json(cells).dump(2) + "\n");
  return cells;
}

namespace {

struct CommonOptions {
  std::string config_file;
  std::string dataset;
  std::string data_path;
  std::string split_file;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.0;
  std::size_t dim = 0;
  int layers = 0;
  double lr = 0.0;
  double l2 = 0.0;
  std::size_t batch = 0;
  int epochs = 0;
  int k = 0;
  std::uint64_t seed = 0;
  int eval_every = 0;
  std::string ablation;
  std::string out;
  bool deterministic = true;
  std::vector<int> layer_list;
  std::vector<CLI::Option*> options;

  void attach(CLI::App* app) {
    options = {
        app->add_option("--config", config_file, "JSON run configuration"),
        app->add_option("--dataset", dataset, "movielens | lastfm"),
        app->add_option("--data-path", data_path, "raw ratings / user_artists file"),
        app->add_option("--split", split_file, "frozen split file (u<TAB>i<TAB>train|test)"),
        app->add_option("--split-seed", split_seed, "seed of the per-user split"),
        app->add_option("--train-fraction", train_fraction, "per-user training fraction"),
        app->add_option("--dim", dim, "embedding dimension"),
        app->add_option("--layers", layers, "number of propagation layers"),
        app->add_option("--lr", lr, "Adam learning rate"),
        app->add_option("--l2", l2, "L2 regularisation weight"),
        app->add_option("--batch", batch, "mini-batch size"),
        app->add_option("--epochs", epochs, "training epochs"),
        app->add_option("--k", k, "cutoff for recall@k / ndcg@k"),
        app->add_option("--seed", seed, "initialisation / sampling seed"),
        app->add_option("--eval-every", eval_every, "epochs between evaluations"),
        app->add_option("--ablation", ablation,
                        "full | no-interaction | euclidean-only | hyperbolic-only"),
        app->add_option("--out", out, "output directory (default $GGCF_OUT_DIR or ./ggcf-out)"),
        app->add_option("--deterministic", deterministic, "sequential mode without timings (true|false)"),
        app->add_option("--layer-list", layer_list, "layer counts for grid")->delimiter(','),
    };
  }

  bool given(std::size_t n) const { return options[n]->count() > 0; }

  RunConfig resolve() const {
    RunConfig c = config_file.empty() ? RunConfig{} : load_config(config_file);
    if (given(1)) c.dataset = parse_dataset(dataset);
    if (given(2)) c.data_path = data_path;
    if (given(3)) c.split_path = split_file;
    if (given(4)) c.split_seed = split_seed;
    if (given(5)) c.train_fraction = train_fraction;
    if (given(6)) c.train.dim = dim;
    if (given(7)) c.train.layers = layers;
    if (given(8)) c.train.learning_rate = lr;
    if (given(9)) c.train.l2_weight = l2;
    if (given(10)) c.train.batch_size = batch;
    if (given(11)) c.train.epochs = epochs;
    if (given(12)) c.train.k = k;
    if (given(13)) c.train.seed = seed;
    if (given(14)) c.train.eval_every = eval_every;
    if (given(15)) c.flags = parse_ablation(ablation);
    if (given(16)) c.out_dir = out;
    if (given(17)) c.deterministic = deterministic;
    if (given(18)) c.grid_layers = layer_list;
    if (c.out_dir.empty()) c.out_dir = default_out_dir();
    return c;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-geometry graph collaborative filtering"};
  app.require_subcommand(1);
  CommonOptions prepare_opts, train_opts, grid_opts, ablate_opts;
  auto* prepare = app.add_subcommand("prepare", "load a dataset, split it, write the split file");
  prepare_opts.attach(prepare);
  auto* train = app.add_subcommand("train", "train a model and write history + checkpoint");
  train_opts.attach(train);
  auto* grid = app.add_subcommand("grid", "train one model per layer count");
  grid_opts.attach(grid);
  auto* ablate = app.add_subcommand("ablate", "train the four ablation variants");
  ablate_opts.attach(ablate);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a frozen split");
  std::string ckpt_path;
  std::string eval_split;
  int eval_k = 20;
  std::string eval_out;
  evaluate_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  evaluate_cmd->add_option("--split", eval_split, "frozen split file")->required();
  evaluate_cmd->add_option("--k", eval_k, "cutoff");
  evaluate_cmd->add_option("--out", eval_out, "directory for eval.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? (app.exit(e, out, err), kExitOk) : (app.exit(e, out, err), kExitUsage);
  }

  try {
    if (*prepare) {
      cmd_prepare(prepare_opts.resolve(), out);
    } else if (*train) {
      const TrainOutcome t = cmd_train(train_opts.resolve(), out);
      out << "checkpoint " << t.checkpoint.string() << "\nhistory " << t.history.string() << '\n';
    } else if (*evaluate_cmd) {
      cmd_evaluate(ckpt_path, eval_split, eval_k, eval_out, out);
    } else if (*grid) {
      const auto cells = cmd_grid(grid_opts.resolve(), out);
      for (const auto& c : cells) {
        if (!c.error.empty()) return kExitNumeric;
      }
    } else if (*ablate) {
      const auto cells = cmd_ablate(ablate_opts.resolve(), out);
      for (const auto& c : cells) {
        if (!c.error.empty()) return kExitNumeric;
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace ggcf
