#include "specfas/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace specfas {

ConfusionCounts confusion(const ScoreMap& scores, const LabelMap& labels, double threshold) {
  std::vector<std::string> missing_labels;
  std::vector<std::string> missing_scores;
  for (const auto& [id, s] : scores) {
    if (!labels.count(id)) missing_labels.push_back(id);
  }
  for (const auto& [id, l] : labels) {
    if (!scores.count(id)) missing_scores.push_back(id);
  }
  if (!missing_labels.empty() || !missing_scores.empty()) {
    throw MetricsError(fmt::format("score/label key mismatch; scored without label: [{}]; labelled without score: [{}]",
                                   fmt::join(missing_labels, ", "), fmt::join(missing_scores, ", ")));
  }
  ConfusionCounts c;
  for (const auto& [id, s] : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw MetricsError(fmt::format("score for '{}' is {}, outside [0, 1]", id, s));
    const bool predicted_fake = s >= threshold;
    if (labels.at(id) == Label::Fake) {
      (predicted_fake ? c.tp : c.fn)++;
    } else {
      (predicted_fake ? c.fp : c.tn)++;
    }
  }
  return c;
}

MetricsReport acer_report(const ConfusionCounts& counts, std::optional<double> threshold) {
  if (counts.fakes() == 0) throw MetricsError("APCER undefined: no attack (fake) samples");
  if (counts.reals() == 0) throw MetricsError("BPCER undefined: no bona fide (real) samples");
  MetricsReport r;
  r.counts = counts;
  r.threshold = threshold;
  r.apcer = 100.0 * static_cast<double>(counts.fn) / static_cast<double>(counts.fakes());
  r.bpcer = 100.0 * static_cast<double>(counts.fp) / static_cast<double>(counts.reals());
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

std::vector<MetricsReport> threshold_sweep(const ScoreMap& scores, const LabelMap& labels,
                                           const std::vector<double>& grid) {
  if (grid.empty()) throw MetricsError("threshold grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw MetricsError("threshold grid must be ascending");
  std::vector<MetricsReport> out;
  out.reserve(grid.size());
  for (double t : grid) out.push_back(acer_report(confusion(scores, labels, t), t));
  return out;
}

std::string format_table(const std::vector<MetricsReport>& reports) {
  std::string out = fmt::format("{:>10} {:>7} {:>7} {:>7} {:>7} {:>10} {:>10} {:>10}\n", "threshold", "TP", "FN", "FP",
                                "TN", "APCER(%)", "BPCER(%)", "ACER(%)");
  for (const auto& r : reports) {
    const std::string thr = r.threshold ? fmt::format("{:.4f}", *r.threshold) : std::string("-");
    out += fmt::format("{:>10} {:>7} {:>7} {:>7} {:>7} {:>10.4f} {:>10.4f} {:>10.4f}\n", thr, r.counts.tp,
                       r.counts.fn, r.counts.fp, r.counts.tn, r.apcer, r.bpcer, r.acer);
  }
  return out;
}

std::string format_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "threshold,tp,fn,fp,tn,apcer,bpcer,acer\n";
  for (const auto& r : reports) {
    const std::string thr = r.threshold ? fmt::format("{:.17g}", *r.threshold) : std::string();
    out += fmt::format("{},{},{},{},{},{:.17g},{:.17g},{:.17g}\n", thr, r.counts.tp, r.counts.fn, r.counts.fp,
                       r.counts.tn, r.apcer, r.bpcer, r.acer);
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MetricsError(fmt::format("cannot open {}", path.string()));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

ScoreMap read_scores_csv(const std::filesystem::path& path) {
  ScoreMap scores;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 2) throw MetricsError(fmt::format("{}:{}: expected id,score", path.string(), i + 1));
    if (i == 0 && f[0] == "id" && f[1] == "score") continue;
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw MetricsError(fmt::format("{}:{}: bad score '{}'", path.string(), i + 1, f[1]));
    }
    if (!scores.emplace(f[0], v).second) {
      throw MetricsError(fmt::format("{}:{}: duplicate id '{}'", path.string(), i + 1, f[0]));
    }
  }
  return scores;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreMap& scores) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MetricsError(fmt::format("cannot open {} for writing", path.string()));
  out << "id,score\n";
  for (const auto& [id, s] : scores) out << id << ',' << fmt::format("{:.17g}", s) << '\n';
}

LabelMap read_labels(const std::filesystem::path& path) {
  LabelMap labels;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool manifest = lines[i].find('\t') != std::string::npos;
    const auto f = split(lines[i], manifest ? '\t' : ',');
    if (manifest ? f.size() != 4 : f.size() != 2) {
      throw MetricsError(fmt::format("{}:{}: expected {}", path.string(), i + 1,
                                     manifest ? "id<TAB>path<TAB>label<TAB>identity" : "id,label"));
    }
    if (!manifest && i == 0 && f[0] == "id" && f[1] == "label") continue;
    Label label;
    try {
      label = parse_label(manifest ? f[2] : f[1]);
    } catch (const std::invalid_argument& e) {
      throw MetricsError(fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
    // Oversampled manifests repeat ids; the label is the same each time.
    const auto [it, inserted] = labels.emplace(f[0], label);
    if (!inserted && it->second != label) {
      throw MetricsError(fmt::format("{}:{}: conflicting labels for '{}'", path.string(), i + 1, f[0]));
    }
  }
  return labels;
}

}  // namespace specfas
