#include "nlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "nlab/ehn.hpp"
#include "nlab/error.hpp"
#include "nlab/nshe.hpp"

namespace nlab {

std::optional<double> ExperimentConfig::known_rho() const {
  switch (rho_mode) {
    case RhoMode::fixed: return rho_fixed;
    case RhoMode::injected: return noise_rho;
    case RhoMode::estimate: return std::nullopt;
  }
  return std::nullopt;
}

double ExperimentConfig::effective_tau_e(double rho) const {
  return tau_e ? *tau_e : easy_ratio(rho);
}

double ExperimentConfig::effective_tau(double rho) const {
  return tau ? *tau : discard_ratio(rho);
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw ConfigError("config key '" + std::string(key) + "': " + std::string(why) + " (got '" +
                    std::string(value) + "')");
}

template <typename T>
T parse_num(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "not a number");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) bad_value(key, value, "must be finite");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "expected true or false");
}

std::vector<std::size_t> parse_dims(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  if (trim(value).empty() || value == "none") return out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const std::string part = trim(value.substr(start, comma == std::string_view::npos
                                                          ? std::string_view::npos
                                                          : comma - start));
    const auto d = parse_num<std::size_t>(key, part);
    if (d == 0) bad_value(key, value, "layer widths must be >= 1");
    out.push_back(d);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string render_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(dims[i]);
  }
  return out;
}

std::string render_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require(bool ok, std::string_view key, std::string_view value, std::string_view why) {
  if (!ok) bad_value(key, value, why);
}

struct KeySpec {
  const char* name;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

double unit_interval(std::string_view key, std::string_view v, bool closed_top) {
  const double x = parse_num<double>(key, v);
  require(x >= 0.0 && (closed_top ? x <= 1.0 : x < 1.0), key, v,
          closed_top ? "must be in [0, 1]" : "must be in [0, 1)");
  return x;
}

int positive_int(std::string_view key, std::string_view v) {
  const int x = parse_num<int>(key, v);
  require(x >= 1, key, v, "must be >= 1");
  return x;
}

const std::vector<KeySpec>& key_table() {
  using C = ExperimentConfig;
  static const std::vector<KeySpec> table = {
      {"seed", [](C& c, auto k, auto v) { c.seed = parse_num<std::uint64_t>(k, v); },
       [](const C& c) { return std::to_string(c.seed); }},
      {"out", [](C& c, auto, auto v) { c.out = std::string(v); },
       [](const C& c) { return c.out; }},
      {"data.path", [](C& c, auto, auto v) { c.data_path = std::string(v); },
       [](const C& c) { return c.data_path; }},
      {"data.test_path", [](C& c, auto, auto v) { c.test_path = std::string(v); },
       [](const C& c) { return c.test_path; }},
      {"data.n_per_class",
       [](C& c, auto k, auto v) { c.n_per_class = static_cast<std::size_t>(positive_int(k, v)); },
       [](const C& c) { return std::to_string(c.n_per_class); }},
      {"data.test_per_class",
       [](C& c, auto k, auto v) { c.test_per_class = static_cast<std::size_t>(positive_int(k, v)); },
       [](const C& c) { return std::to_string(c.test_per_class); }},
      {"data.dims",
       [](C& c, auto k, auto v) { c.dims = static_cast<std::size_t>(positive_int(k, v)); },
       [](const C& c) { return std::to_string(c.dims); }},
      {"data.classes",
       [](C& c, auto k, auto v) {
         c.classes = parse_num<int>(k, v);
         require(c.classes >= 2, k, v, "must be >= 2");
       },
       [](const C& c) { return std::to_string(c.classes); }},
      {"data.overlap",
       [](C& c, auto k, auto v) {
         c.overlap = parse_num<double>(k, v);
         require(c.overlap >= 0.0, k, v, "must be >= 0");
       },
       [](const C& c) { return render_double(c.overlap); }},
      {"noise.kind",
       [](C& c, auto k, auto v) {
         if (v == "symmetric") c.noise_kind = NoiseKind::symmetric;
         else if (v == "asymmetric") c.noise_kind = NoiseKind::asymmetric;
         else bad_value(k, v, "expected symmetric or asymmetric");
       },
       [](const C& c) {
         return std::string(c.noise_kind == NoiseKind::symmetric ? "symmetric" : "asymmetric");
       }},
      {"noise.rho", [](C& c, auto k, auto v) { c.noise_rho = unit_interval(k, v, false); },
       [](const C& c) { return render_double(c.noise_rho); }},
      {"pipeline.rho",
       [](C& c, auto k, auto v) {
         if (v == "injected") c.rho_mode = C::RhoMode::injected;
         else if (v == "estimate") c.rho_mode = C::RhoMode::estimate;
         else {
           c.rho_mode = C::RhoMode::fixed;
           c.rho_fixed = unit_interval(k, v, false);
         }
       },
       [](const C& c) {
         switch (c.rho_mode) {
           case C::RhoMode::injected: return std::string("injected");
           case C::RhoMode::estimate: return std::string("estimate");
           case C::RhoMode::fixed: return render_double(c.rho_fixed);
         }
         return std::string();
       }},
      {"model.hidden", [](C& c, auto k, auto v) { c.hidden = parse_dims(k, v); },
       [](const C& c) { return render_dims(c.hidden); }},
      {"train.batch_size",
       [](C& c, auto k, auto v) { c.batch_size = static_cast<std::size_t>(positive_int(k, v)); },
       [](const C& c) { return std::to_string(c.batch_size); }},
      {"train.lr",
       [](C& c, auto k, auto v) {
         c.learning_rate = parse_num<double>(k, v);
         require(c.learning_rate > 0.0, k, v, "must be > 0");
       },
       [](const C& c) { return render_double(c.learning_rate); }},
      {"train.final_lr",
       [](C& c, auto k, auto v) {
         if (v == "auto") {
           c.final_learning_rate.reset();
           return;
         }
         c.final_learning_rate = parse_num<double>(k, v);
         require(*c.final_learning_rate > 0.0, k, v, "must be > 0");
       },
       [](const C& c) {
         return c.final_learning_rate ? render_double(*c.final_learning_rate) : std::string("auto");
       }},
      {"train.momentum", [](C& c, auto k, auto v) { c.momentum = unit_interval(k, v, false); },
       [](const C& c) { return render_double(c.momentum); }},
      {"train.decay_start",
       [](C& c, auto k, auto v) {
         c.decay_start = parse_num<int>(k, v);
         require(c.decay_start >= 0, k, v, "must be >= 0");
       },
       [](const C& c) { return std::to_string(c.decay_start); }},
      {"ehn.k", [](C& c, auto k, auto v) { c.history_epochs = positive_int(k, v); },
       [](const C& c) { return std::to_string(c.history_epochs); }},
      {"ehn.tau_e",
       [](C& c, auto k, auto v) {
         if (v == "auto") {
           c.tau_e.reset();
           return;
         }
         const double x = parse_num<double>(k, v);
         require(x > 0.0 && x <= 1.0, k, v, "tau_e must be in (0, 1]");
         c.tau_e = x;
       },
       [](const C& c) { return c.tau_e ? render_double(*c.tau_e) : std::string("auto"); }},
      {"ehn.classifier_hidden",
       [](C& c, auto k, auto v) { c.classifier_hidden = parse_dims(k, v); },
       [](const C& c) { return render_dims(c.classifier_hidden); }},
      {"ehn.classifier_epochs",
       [](C& c, auto k, auto v) { c.classifier_epochs = positive_int(k, v); },
       [](const C& c) { return std::to_string(c.classifier_epochs); }},
      {"ehn.classifier_lr",
       [](C& c, auto k, auto v) {
         c.classifier_lr = parse_num<double>(k, v);
         require(c.classifier_lr > 0.0, k, v, "must be > 0");
       },
       [](const C& c) { return render_double(c.classifier_lr); }},
      {"ehn.holdout",
       [](C& c, auto k, auto v) { c.classifier_holdout = unit_interval(k, v, false); },
       [](const C& c) { return render_double(c.classifier_holdout); }},
      {"estimator.epochs", [](C& c, auto k, auto v) { c.estimator_epochs = positive_int(k, v); },
       [](const C& c) { return std::to_string(c.estimator_epochs); }},
      {"estimator.lr",
       [](C& c, auto k, auto v) {
         c.estimator_lr = parse_num<double>(k, v);
         require(c.estimator_lr > 0.0, k, v, "must be > 0");
       },
       [](const C& c) { return render_double(c.estimator_lr); }},
      {"estimator.agreement",
       [](C& c, auto k, auto v) {
         if (v == "hard") c.estimator_agreement = AgreementKind::hard;
         else if (v == "soft") c.estimator_agreement = AgreementKind::soft;
         else bad_value(k, v, "expected hard or soft");
       },
       [](const C& c) {
         return std::string(c.estimator_agreement == AgreementKind::hard ? "hard" : "soft");
       }},
      {"correction.rounds", [](C& c, auto k, auto v) { c.rounds = positive_int(k, v); },
       [](const C& c) { return std::to_string(c.rounds); }},
      {"correction.epochs", [](C& c, auto k, auto v) { c.correction_epochs = positive_int(k, v); },
       [](const C& c) { return std::to_string(c.correction_epochs); }},
      {"nshe.epochs", [](C& c, auto k, auto v) { c.nshe_epochs = positive_int(k, v); },
       [](const C& c) { return std::to_string(c.nshe_epochs); }},
      {"nshe.tau",
       [](C& c, auto k, auto v) {
         if (v == "auto") {
           c.tau.reset();
           return;
         }
         c.tau = unit_interval(k, v, false);
       },
       [](const C& c) { return c.tau ? render_double(*c.tau) : std::string("auto"); }},
      {"nshe.gamma",
       [](C& c, auto k, auto v) {
         c.gamma = parse_num<double>(k, v);
         require(c.gamma >= 0.0, k, v, "gamma must be >= 0");
       },
       [](const C& c) { return render_double(c.gamma); }},
      {"nshe.m", [](C& c, auto k, auto v) { c.m = unit_interval(k, v, false); },
       [](const C& c) { return render_double(c.m); }},
      {"ablation.disable_nshe", [](C& c, auto k, auto v) { c.disable_nshe = parse_bool(k, v); },
       [](const C& c) { return std::string(c.disable_nshe ? "true" : "false"); }},
      {"ablation.disable_ehn", [](C& c, auto k, auto v) { c.disable_ehn = parse_bool(k, v); },
       [](const C& c) { return std::string(c.disable_ehn ? "true" : "false"); }},
      {"ablation.disable_correction",
       [](C& c, auto k, auto v) { c.disable_correction = parse_bool(k, v); },
       [](const C& c) { return std::string(c.disable_correction ? "true" : "false"); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const KeySpec& k : key_table()) out.emplace_back(k.name);
  return out;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  for (const KeySpec& spec : key_table()) {
    if (key == spec.name) {
      spec.set(cfg, key, v);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.data_path.empty() && cfg.dims < 1) throw ConfigError("config key 'data.dims': must be >= 1");
  if (cfg.noise_rho > max_noise_ratio(cfg.noise_kind, cfg.classes)) {
    throw ConfigError("config key 'noise.rho': exceeds the identifiable limit for " +
                      std::to_string(cfg.classes) + " classes");
  }
}

ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base) {
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_config_value(base, trim(std::string_view(stripped).substr(0, eq)),
                     std::string_view(stripped).substr(eq + 1));
    if (end == text.size()) break;
  }
  return base;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::ostringstream buf;
    buf << in.rdbuf();
    cfg = parse_config_text(buf.str(), cfg);
  }
  for (const auto& [key, value] : overrides) set_config_value(cfg, key, value);
  validate_config(cfg);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const KeySpec& spec : key_table()) {
    out += spec.name;
    out += " = ";
    out += spec.get(cfg);
    out += '\n';
  }
  if (const auto rho = cfg.known_rho()) {
    out += "# resolved: tau_e = " + render_double(cfg.effective_tau_e(*rho)) +
           ", tau = " + render_double(cfg.effective_tau(*rho)) + "\n";
  }
  return out;
}

}  // namespace nlab
