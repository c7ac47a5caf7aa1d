#include "specfas/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace specfas {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_max > lr_min && lr_min >= 0.0)) {
    throw ConfigError(fmt::format("need lr_max > lr_min >= 0, got lr_max={} lr_min={}", lr_max, lr_min));
  }
  // rho = 0 is accepted and collapses the update to plain descent.
  if (!(asam_rho >= 0.0)) throw ConfigError(fmt::format("asam_rho must be >= 0, got {}", asam_rho));
  if (!(asam_eta >= 0.0)) throw ConfigError(fmt::format("asam_eta must be >= 0, got {}", asam_eta));
  if (!(weight_decay >= 0.0)) throw ConfigError(fmt::format("weight_decay must be >= 0, got {}", weight_decay));
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const auto n = std::stoull(v, &used);
      if (used == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::string num(double v) { return fmt::format("{:.17g}", v); }
std::string flag(bool v) { return v ? "true" : "false"; }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  using Setter = std::function<void(const std::string&)>;
  auto d = [&](double& field) -> Setter { return [&field, key](const std::string& v) { field = to_double(key, v); }; };
  auto u = [&](std::size_t& field) -> Setter {
    return [&field, key](const std::string& v) { field = static_cast<std::size_t>(to_uint(key, v)); };
  };
  auto s = [&](std::uint64_t& field) -> Setter { return [&field, key](const std::string& v) { field = to_uint(key, v); }; };
  auto b = [&](bool& field) -> Setter { return [&field, key](const std::string& v) { field = to_bool(key, v); }; };

  const std::map<std::string, Setter> setters{
      {"epochs", u(train.epochs)},
      {"batch_size", u(train.batch_size)},
      {"lr_max", d(train.lr_max)},
      {"lr_min", d(train.lr_min)},
      {"weight_decay", d(train.weight_decay)},
      {"asam_rho", d(train.asam_rho)},
      {"asam_eta", d(train.asam_eta)},
      {"seed", s(train.seed)},
      {"workers", u(train.workers)},
      {"gamma", d(loss.gamma)},
      {"tau", d(loss.tau)},
      {"lambda_scl", d(loss.lambda_scl)},
      {"xbm_capacity", u(loss.xbm_capacity)},
      {"normalize_positives", b(loss.normalize_positives)},
      {"crop_fraction", d(augment.crop_fraction)},
      {"flip_prob", d(augment.flip_prob)},
      {"cutout_prob", d(augment.cutout_prob)},
      {"cutout_side_fraction", d(augment.cutout_side_fraction)},
      {"mask_prob", d(augment.mask_prob)},
      {"mask_variants",
       [this](const std::string& v) {
         augment.mask_variants.clear();
         std::istringstream in(v);
         for (std::string part; std::getline(in, part, ',');) {
           part = trim(part);
           if (part.empty()) continue;
           try {
             augment.mask_variants.push_back(parse_mask_variant(part));
           } catch (const std::invalid_argument& e) {
             throw ConfigError(fmt::format("mask_variants: {}", e.what()));
           }
         }
       }},
      {"augment_seed", s(augment.seed)},
      {"mixup_enabled", b(mixup.enabled)},
      {"mixup_alpha", d(mixup.alpha)},
      {"theta", d(model.theta)},
      {"kernel_size", u(model.kernel_size)},
      {"channels",
       [this, key](const std::string& v) {
         model.channels.clear();
         std::istringstream in(v);
         for (std::string part; std::getline(in, part, ',');) {
           model.channels.push_back(static_cast<std::size_t>(to_uint(key, trim(part))));
         }
       }},
      {"attention_maps", u(model.attention_maps)},
      {"proj_dim", u(model.proj_dim)},
      {"model_seed", s(model.seed)},
      {"ror_enabled", b(ror.enabled)},
      {"ror_embeddings", [this](const std::string& v) { ror.embeddings = v; }},
      {"ror_embed_dim", u(ror.embed_dim)},
      {"ror_seed", s(ror.embed_seed)},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  it->second(trim(value));
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::string> variants;
  for (auto v : augment.mask_variants) variants.push_back(to_string(v));
  return {
      {"epochs", std::to_string(train.epochs)},
      {"batch_size", std::to_string(train.batch_size)},
      {"lr_max", num(train.lr_max)},
      {"lr_min", num(train.lr_min)},
      {"weight_decay", num(train.weight_decay)},
      {"asam_rho", num(train.asam_rho)},
      {"asam_eta", num(train.asam_eta)},
      {"seed", std::to_string(train.seed)},
      {"workers", std::to_string(train.workers)},
      {"gamma", num(loss.gamma)},
      {"tau", num(loss.tau)},
      {"lambda_scl", num(loss.lambda_scl)},
      {"xbm_capacity", std::to_string(loss.xbm_capacity)},
      {"normalize_positives", flag(loss.normalize_positives)},
      {"crop_fraction", num(augment.crop_fraction)},
      {"flip_prob", num(augment.flip_prob)},
      {"cutout_prob", num(augment.cutout_prob)},
      {"cutout_side_fraction", num(augment.cutout_side_fraction)},
      {"mask_prob", num(augment.mask_prob)},
      {"mask_variants", fmt::format("{}", fmt::join(variants, ","))},
      {"augment_seed", std::to_string(augment.seed)},
      {"mixup_enabled", flag(mixup.enabled)},
      {"mixup_alpha", num(mixup.alpha)},
      {"theta", num(model.theta)},
      {"kernel_size", std::to_string(model.kernel_size)},
      {"channels", fmt::format("{}", fmt::join(model.channels, ","))},
      {"attention_maps", std::to_string(model.attention_maps)},
      {"proj_dim", std::to_string(model.proj_dim)},
      {"model_seed", std::to_string(model.seed)},
      {"ror_enabled", flag(ror.enabled)},
      {"ror_embeddings", ror.embeddings},
      {"ror_embed_dim", std::to_string(ror.embed_dim)},
      {"ror_seed", std::to_string(ror.embed_seed)},
  };
}

void RunConfig::validate() const {
  train.validate();
  try {
    loss.validate();
    augment.validate();
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(mixup.alpha > 0.0)) throw ConfigError(fmt::format("mixup_alpha must be > 0, got {}", mixup.alpha));
  if (ror.embed_dim == 0) throw ConfigError("ror_embed_dim must be positive");
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.merge_file(path);
  return cfg;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", path.string(), lineno));
    }
    try {
      set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += fmt::format("{} = {}\n", k, v);
  return out;
}

}  // namespace specfas
