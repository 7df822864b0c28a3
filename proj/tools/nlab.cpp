// Command-line front end: run, sweep, gen-data, eval.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlab/config.hpp"
#include "nlab/data.hpp"
#include "nlab/error.hpp"
#include "nlab/metrics.hpp"
#include "nlab/netcore.hpp"
#include "nlab/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// One `--<key>` option per config key, plus `--config FILE`.
struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key = value file; flags override it")
        ->check(CLI::ExistingFile);
    for (const std::string& key : nlab::config_keys()) {
      options[key] = app.add_option("--" + key, values[key], "config key " + key);
    }
  }

  nlab::ExperimentConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& key : nlab::config_keys()) {
      if (options.at(key)->count() > 0) overrides.emplace_back(key, values.at(key));
    }
    std::optional<std::filesystem::path> file;
    if (!config_file.empty()) file = config_file;
    return nlab::parse_config(file, overrides);
  }
};

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto comma = text.find(',', start);
    const std::string part = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                           : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw nlab::ConfigError("--values: '" + part + "' is not a number");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void print_report(const nlab::RunReport& r) {
  std::printf("ablation          %s\n", r.ablation.c_str());
  std::printf("rho used          %.4f\n", r.rho_used);
  std::printf("tau_e / tau       %.4f / %.4f\n", r.tau_e, r.tau);
  std::printf("easy/hard/noisy   %zu / %zu / %zu\n", r.easy, r.hard, r.noisy);
  std::printf("relabeled/dropped %zu / %zu\n", r.relabeled, r.dropped);
  if (r.injected_noise_ratio) std::printf("noise before      %.4f\n", *r.injected_noise_ratio);
  if (r.final_noise_ratio) std::printf("noise after       %.4f\n", *r.final_noise_ratio);
  std::printf("test accuracy     %.4f\n", r.test.accuracy);
  std::printf("test macro F1     %.4f\n", r.test.macro_f1);
  std::printf("test macro AUC    %.4f\n", r.test.macro_auc);
  for (const auto& t : r.timings) std::printf("time %-12s %.2f s\n", t.phase.c_str(), t.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label learning pipeline"};
  app.require_subcommand(1);

  ConfigOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run the full pipeline once");
  run_opts.attach(*run);

  ConfigOptions sweep_opts;
  std::string axis;
  std::string values_text;
  std::size_t seed_count = 1;
  int jobs = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "run the pipeline over one parameter");
  sweep_opts.attach(*sweep);
  sweep->add_option("--axis", axis, "rho, tau_e, k, m, gamma or tau")->required();
  sweep->add_option("--values", values_text, "comma-separated values")->required();
  sweep->add_option("--seeds", seed_count, "runs per value")->check(CLI::PositiveNumber);
  sweep->add_option("--jobs", jobs, "concurrent pipelines")->check(CLI::PositiveNumber);

  ConfigOptions gen_opts;
  std::string format = "csv";
  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic noisy train/test sets");
  gen_opts.attach(*gen);
  gen->add_option("--format", format, "csv or bin")->check(CLI::IsMember({"csv", "bin"}));

  std::string model_path;
  std::string data_path;
  std::string eval_out;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--model", model_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "dataset file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "directory for metrics.csv and roc.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const nlab::RunReport report = nlab::run_pipeline(run_opts.resolve());
      print_report(report);
    } else if (*sweep) {
      const nlab::ExperimentConfig cfg = sweep_opts.resolve();
      const std::vector<double> values = parse_values(values_text);
      const auto rows = nlab::run_sweep(cfg, axis, values, seed_count, jobs);
      std::filesystem::create_directories(cfg.out);
      nlab::save_sweep_csv(rows, std::filesystem::path(cfg.out) / "sweep.csv");
      std::printf("%-10s %-22s %-10s %s\n", "value", "seed", "test_acc", "final_noise");
      for (const auto& r : rows) {
        std::printf("%-10g %-22llu %-10.4f %s\n", r.value,
                    static_cast<unsigned long long>(r.seed), r.test_accuracy,
                    r.final_noise_ratio ? std::to_string(*r.final_noise_ratio).c_str() : "n/a");
      }
    } else if (*gen) {
      const nlab::ExperimentConfig cfg = gen_opts.resolve();
      const auto [train, test] = nlab::prepare_data(cfg);
      std::filesystem::create_directories(cfg.out);
      const std::string ext = format == "bin" ? ".bin" : ".csv";
      nlab::save_dataset(train, std::filesystem::path(cfg.out) / ("train" + ext));
      nlab::save_dataset(test, std::filesystem::path(cfg.out) / ("test" + ext));
      std::printf("wrote %zu train and %zu test samples to %s\n", train.size(), test.size(),
                  cfg.out.c_str());
    } else if (*eval) {
      const nlab::NetworkParameters model = nlab::load_checkpoint(model_path);
      const nlab::Dataset ds = nlab::load_dataset(data_path);
      if (ds.feature_count() != model.input_dim()) {
        throw nlab::ConfigError("--data: feature count does not match the model input");
      }
      const auto report = nlab::evaluate(nlab::forward(model, ds.features), ds.labels);
      std::printf("accuracy  %.4f\nmacro P   %.4f\nmacro R   %.4f\nmacro F1  %.4f\nmacro AUC %.4f\n",
                  report.accuracy, report.macro_precision, report.macro_recall, report.macro_f1,
                  report.macro_auc);
      if (!eval_out.empty()) {
        std::filesystem::create_directories(eval_out);
        nlab::save_metrics_csv(report, std::filesystem::path(eval_out) / "metrics.csv");
        nlab::save_roc_csv(report, std::filesystem::path(eval_out) / "roc.csv");
      }
    }
  } catch (const nlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
