#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlab/data.hpp"

namespace nlab {

// Every pipeline hyperparameter. Keys in config files and on the command line
// use the dotted names listed in config.cpp (`noise.rho = 0.3`).
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "runs/default";

  // Synthetic data unless `data_path` is set.
  std::string data_path;
  std::string test_path;
  std::size_t n_per_class = 1000;
  std::size_t test_per_class = 500;
  std::size_t dims = 20;
  int classes = 2;
  double overlap = 2.0;

  NoiseKind noise_kind = NoiseKind::symmetric;
  double noise_rho = 0.3;

  // Noise rate driving tau_e and tau: the injected rate, an estimate, or a
  // fixed value.
  enum class RhoMode { injected, estimate, fixed };
  RhoMode rho_mode = RhoMode::injected;
  double rho_fixed = 0.0;

  std::vector<std::size_t> hidden = {32, 16};
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  std::optional<double> final_learning_rate = 0.05;  // final model only; unset: learning_rate
  double momentum = 0.9;
  int decay_start = 15;

  int history_epochs = 30;  // k
  std::optional<double> tau_e;  // unset: easy_ratio(rho)
  std::vector<std::size_t> classifier_hidden = {64, 32};
  int classifier_epochs = 400;
  double classifier_lr = 0.01;
  double classifier_holdout = 0.2;

  int estimator_epochs = 30;
  double estimator_lr = 0.03;
  AgreementKind estimator_agreement = AgreementKind::hard;

  int rounds = 1;
  int correction_epochs = 10;

  int nshe_epochs = 40;
  std::optional<double> tau;  // unset: discard_ratio(rho)
  double gamma = 2.0;
  double m = 0.99;

  bool disable_nshe = false;
  bool disable_ehn = false;
  bool disable_correction = false;

  // Noise rate known without running the estimator, if any.
  std::optional<double> known_rho() const;
  // tau_e / tau given a noise rate (explicit overrides win).
  double effective_tau_e(double rho) const;
  double effective_tau(double rho) const;
};

std::vector<std::string> config_keys();

// Throws ConfigError naming the key on unknown keys or invalid values.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Checks cross-field constraints.
void validate_config(const ExperimentConfig& cfg);

// `key = value` lines; '#' starts a comment.
ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base = {});

// Optional file, then overrides in order; validated.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

// One `key = value` line per key, re-parseable.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace nlab
