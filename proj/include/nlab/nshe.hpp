#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nlab/data.hpp"
#include "nlab/netcore.hpp"

// Noise-suppressing, hard-enhancing co-learning: a student trained by SGD on
// focal loss and an EMA teacher that decides, once per epoch, which
// low-confidence samples the student skips.
namespace nlab {

// 0.1 * rho
double discard_ratio(double rho);

// floor(|ds| * tau) positions with the lowest teacher probability of their
// label; ties by ascending id. Returned in that ranking order.
std::vector<std::size_t> select_discard_set(const NetworkParameters& teacher, const Dataset& ds,
                                            double tau);

struct NsheConfig {
  double tau = 0.0;     // discard ratio
  double m = 0.99;      // teacher momentum
  double gamma = 2.0;   // focal exponent
  std::vector<std::size_t> hidden = {32, 16};
  TrainOptions train = [] {
    TrainOptions t;
    t.epochs = 40;
    return t;
  }();
  std::uint64_t seed = 0;  // init and shuffle streams derive from this
};

struct NsheEpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  std::size_t discarded = 0;
  double mean_train_loss = 0.0;
  std::optional<double> student_test_accuracy;
  std::optional<double> teacher_test_accuracy;
};

struct NsheHooks {
  // Dataset rows actually used in each student update (after discarding).
  std::function<void(int epoch, std::span<const std::size_t> rows)> on_batch;
  // Discard set chosen at the start of each epoch (positions).
  std::function<void(int epoch, std::span<const std::size_t> discarded)> on_discard;
  // After each iteration: student, teacher before and after the EMA step.
  std::function<void(const NetworkParameters& student, const NetworkParameters& teacher_before,
                     const NetworkParameters& teacher_after)>
      on_iteration;
  EpochHook on_epoch;  // teacher parameters at the end of each epoch
};

struct NsheResult {
  NetworkParameters teacher;  // final model
  NetworkParameters student;
  std::vector<NsheEpochLog> log;
};

// Initial parameters shared by run_nshe and train_plain for a given config.
NetworkParameters nshe_initial_parameters(const Dataset& ds, const NsheConfig& cfg);
TrainOptions nshe_train_options(const NsheConfig& cfg);

NsheResult run_nshe(const Dataset& ds, const NsheConfig& cfg, const Dataset* test = nullptr,
                    const NsheHooks& hooks = {});

// Single model, cross-entropy, no discarding: the reference the co-learning
// scheme degenerates to at tau = gamma = m = 0.
NetworkParameters train_plain(const Dataset& ds, const NsheConfig& cfg,
                              const EpochHook& on_epoch = {});

// `epoch,lr,discarded,mean_train_loss,test_acc_m1,test_acc_m2`
void save_nshe_log_csv(const std::vector<NsheEpochLog>& log, const std::filesystem::path& path);

}  // namespace nlab
