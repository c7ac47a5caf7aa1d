#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "specfas/config.hpp"
#include "specfas/dataio.hpp"
#include "specfas/metrics.hpp"
#include "specfas/model.hpp"
#include "specfas/strategies.hpp"
#include "specfas/trainer.hpp"

namespace specfas::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string workdir = ".";
  std::optional<std::size_t> workers;

  fs::path at(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : fs::path(workdir) / path;
  }
};

struct GenDataArgs {
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::string out;
  std::size_t height = 64;
  std::size_t width = 64;
};

struct EmbedArgs {
  std::string manifest;
  std::string provider = "random-projection";
  std::string out;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr_max;
};

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  double threshold = 0.5;
  std::string scores_out;
};

struct ScoreArgs {
  std::string scores;
  std::string labels;
  std::optional<double> threshold;
  std::string sweep;
  std::string csv;
};

void echo(std::ostream& out, const std::string& command, const std::vector<std::pair<std::string, std::string>>& kv) {
  out << "# " << command << '\n';
  for (const auto& [k, v] : kv) out << "# " << k << " = " << v << '\n';
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

int gen_data(const Globals& g, const GenDataArgs& a, std::ostream& out) {
  const fs::path dir = g.at(a.out);
  echo(out, "gen-data",
       {{"seed", std::to_string(a.seed)},
        {"scale", num(a.scale)},
        {"out", dir.string()},
        {"height", std::to_string(a.height)},
        {"width", std::to_string(a.width)}});
  const SyntheticDataset ds = generate_synthetic({a.seed, a.scale, a.height, a.width}, dir);
  for (const DatasetManifest* m : {&ds.train, &ds.val}) {
    const ClassCounts c = m->counts();
    out << fmt::format("{}: {} real, {} fake\n", to_string(m->split), c.real, c.fake);
  }
  return kExitOk;
}

int embed(const Globals& g, const EmbedArgs& a, std::ostream& out) {
  const fs::path manifest_path = g.at(a.manifest);
  const fs::path dest = g.at(a.out);
  echo(out, "embed",
       {{"manifest", manifest_path.string()},
        {"provider", a.provider},
        {"out", dest.string()},
        {"dim", std::to_string(a.dim)},
        {"seed", std::to_string(a.seed)}});
  std::unique_ptr<EmbeddingProvider> provider;
  if (a.provider == "random-projection") {
    provider = std::make_unique<RandomProjectionEmbedder>(a.seed, a.dim);
  } else if (a.provider.rfind("file:", 0) == 0) {
    provider = std::make_unique<FileEmbeddingProvider>(g.at(a.provider.substr(5)));
  } else {
    throw CLI::ValidationError("--provider", "expected 'random-projection' or 'file:<path>', got '" + a.provider + "'");
  }
  const DatasetManifest manifest = read_manifest(manifest_path);
  std::vector<EmbeddingRow> rows;
  std::map<std::string, bool> seen;
  for (const auto& e : manifest.entries) {
    if (seen[e.id]) continue;
    seen[e.id] = true;
    rows.push_back({e.id, provider->embed(load_sample(manifest, e))});
  }
  write_embedding_file(dest, rows);
  out << fmt::format("wrote {} embeddings to {}\n", rows.size(), dest.string());
  return kExitOk;
}

int train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  if (!a.config.empty()) cfg.merge_file(g.at(a.config));
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.lr_max) cfg.train.lr_max = *a.lr_max;
  if (g.workers) cfg.train.workers = *g.workers;
  if (!cfg.ror.embeddings.empty()) cfg.ror.embeddings = g.at(cfg.ror.embeddings).string();
  cfg.validate();

  const fs::path data = g.at(a.data);
  const fs::path dest = g.at(a.out);
  auto kv = cfg.entries();
  kv.insert(kv.begin(), {{"data", data.string()}, {"out", dest.string()}});
  echo(out, "train", kv);
  fs::create_directories(dest);
  {
    std::ofstream f(dest / "config.txt", std::ios::trunc);
    f << cfg.to_text();
  }

  const TrainRunResult result = run_training(cfg, data, dest, [&](const EpochReport& r, const MetricsReport& val) {
    err << fmt::format("epoch {}/{}: loss {:.6f} (focal {:.6f}, supcon {:.6f}) lr {:.6g} bank {} val ACER {:.4f}%\n",
                       r.epoch, cfg.train.epochs, r.mean_loss, r.mean_focal, r.mean_supcon, r.lr_trace.back(),
                       r.bank_size, val.acer);
  });
  out << format_table({result.validation.report});
  out << "checkpoint: " << (dest / "model.ckpt").string() << '\n';
  return kExitOk;
}

int eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const fs::path ckpt = g.at(a.checkpoint);
  const fs::path manifest_path = g.at(a.manifest);
  std::vector<std::pair<std::string, std::string>> kv{
      {"checkpoint", ckpt.string()}, {"manifest", manifest_path.string()}, {"threshold", num(a.threshold)}};
  if (!a.scores_out.empty()) kv.emplace_back("scores_out", g.at(a.scores_out).string());
  echo(out, "eval", kv);
  const Checkpoint cp = load_checkpoint(ckpt);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const Evaluation ev = evaluate(cp.params, cp.config, manifest, a.threshold);
  if (!a.scores_out.empty()) write_scores_csv(g.at(a.scores_out), ev.scores);
  out << format_table({ev.report});
  return kExitOk;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::istringstream in(text);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--sweep", "bad threshold '" + part + "'");
    }
  }
  return grid;
}

int score(const Globals& g, const ScoreArgs& a, std::ostream& out) {
  const fs::path scores_path = g.at(a.scores);
  const fs::path labels_path = g.at(a.labels);
  std::vector<std::pair<std::string, std::string>> kv{{"scores", scores_path.string()},
                                                      {"labels", labels_path.string()}};
  const std::vector<double> grid = a.sweep.empty() ? std::vector<double>{a.threshold.value_or(0.5)} : parse_grid(a.sweep);
  kv.emplace_back(a.sweep.empty() ? "threshold" : "sweep", a.sweep.empty() ? num(grid.front()) : a.sweep);
  if (!a.csv.empty()) kv.emplace_back("csv", g.at(a.csv).string());
  echo(out, "score", kv);
  const std::vector<MetricsReport> reports =
      threshold_sweep(read_scores_csv(scores_path), read_labels(labels_path), grid);
  out << format_table(reports);
  if (!a.csv.empty()) {
    std::ofstream f(g.at(a.csv), std::ios::trunc);
    if (!f) throw MetricsError("cannot open " + g.at(a.csv).string());
    f << format_csv(reports);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral face anti-spoofing pipeline", "specfas"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--workdir", g.workdir, "Directory that relative paths are resolved against");
  app.add_option("--workers", g.workers, "Parallel data-loading threads")->check(CLI::PositiveNumber);

  GenDataArgs gd;
  auto* cmd_gen = app.add_subcommand("gen-data", "Write a synthetic dataset and its manifests");
  cmd_gen->add_option("--seed", gd.seed);
  cmd_gen->add_option("--scale", gd.scale, "Fraction of the full dataset size")->check(CLI::PositiveNumber);
  cmd_gen->add_option("--out", gd.out)->required();
  cmd_gen->add_option("--height", gd.height)->check(CLI::PositiveNumber);
  cmd_gen->add_option("--width", gd.width)->check(CLI::PositiveNumber);

  EmbedArgs em;
  auto* cmd_embed = app.add_subcommand("embed", "Write identity embeddings for reweighting");
  cmd_embed->add_option("--manifest", em.manifest)->required();
  cmd_embed->add_option("--provider", em.provider, "random-projection or file:<path>");
  cmd_embed->add_option("--out", em.out)->required();
  cmd_embed->add_option("--dim", em.dim)->check(CLI::PositiveNumber);
  cmd_embed->add_option("--seed", em.seed);

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train a model; flags override the config file");
  cmd_train->add_option("--config", tr.config, "key = value file");
  cmd_train->add_option("--data", tr.data, "Directory holding train.tsv and val.tsv")->required();
  cmd_train->add_option("--out", tr.out)->required();
  cmd_train->add_option("--set", tr.sets, "Override one config key (key=value), repeatable");
  cmd_train->add_option("--epochs", tr.epochs);
  cmd_train->add_option("--batch-size", tr.batch_size);
  cmd_train->add_option("--seed", tr.seed);
  cmd_train->add_option("--lr-max", tr.lr_max);

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "Score a manifest with a checkpoint");
  cmd_eval->add_option("--checkpoint", ev.checkpoint)->required();
  cmd_eval->add_option("--manifest", ev.manifest)->required();
  cmd_eval->add_option("--threshold", ev.threshold)->check(CLI::Range(0.0, 1.0));
  cmd_eval->add_option("--scores-out", ev.scores_out, "Write id,score CSV");

  ScoreArgs sc;
  auto* cmd_score = app.add_subcommand("score", "Metrics from a score file and labels");
  cmd_score->add_option("--scores", sc.scores)->required();
  cmd_score->add_option("--labels", sc.labels)->required();
  auto* thr = cmd_score->add_option("--threshold", sc.threshold);
  cmd_score->add_option("--sweep", sc.sweep, "Comma-separated ascending thresholds")->excludes(thr);
  cmd_score->add_option("--csv", sc.csv, "Also write the report as CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*cmd_gen) return gen_data(g, gd, out);
    if (*cmd_embed) return embed(g, em, out);
    if (*cmd_train) return train(g, tr, out, err);
    if (*cmd_eval) return eval(g, ev, out);
    if (*cmd_score) return score(g, sc, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace specfas::cli
