#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "icl/checkpoint.hpp"
#include "icl/model.hpp"
#include "icl/tasks.hpp"

namespace icl::training {

// Ramp from a small dimension / short prompt to the targets, stepping every
// interval_steps. Values are nondecreasing and capped at the targets.
struct CurriculumSchedule {
  int d_start = 5;
  int points_start = 11;
  int d_increment = 1;
  int points_increment = 2;
  int interval_steps = 2000;
};

std::pair<int, int> curriculum_at(const CurriculumSchedule& schedule,
                                  std::int64_t step, int d_target,
                                  int points_target);

struct TrainConfig {
  model::ModelConfig model;
  int d_target = 20;
  int points_target = 0;  // 0 resolves to 2*d_target + 1
  double sigma_train = 0.0;
  tasks::NoiseKind train_noise = tasks::NoiseKind::kGaussian;
  tasks::FunctionKind task = tasks::FunctionKind::kLinear;
  int poly_degree = 2;  // polynomial tasks only
  int batch_size = 64;
  std::int64_t total_steps = 1000;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  CurriculumSchedule curriculum;
  std::uint64_t seed = 0;
  int loss_log_every = 1;
  bool fresh_sampling = true;  // false: draw batches from a fixed prompt pool
  int dataset_size = 10000;    // pool size when fresh_sampling is false

  int resolved_points_target() const {
    return points_target > 0 ? points_target : 2 * d_target + 1;
  }
  void validate() const;
};

// Per-step training record; columns of the loss CSV.
struct LossHistory {
  std::vector<std::int64_t> steps;
  std::vector<double> losses;
  std::vector<int> d_cur;
  std::vector<int> points_cur;
  double sigma_train = 0.0;
};

// Training aborted on a non-finite loss; carries the diagnostic the CLI
// reports.
struct TrainAbort : Error {
  TrainAbort(std::int64_t step, double lr, double last_loss);
  std::int64_t step;
  double lr;
  double last_loss;
};

// Mean squared error between per-position predictions and targets of one
// prompt (the noisy demonstration labels during training).
double training_loss(std::span<const double> predictions,
                     std::span<const double> targets);

std::pair<model::Checkpoint, LossHistory> train(const TrainConfig& config);

void write_loss_csv(const LossHistory& history, const std::string& path,
                    const std::string& config_hash, std::uint64_t seed);

using model::load_checkpoint;
using model::save_checkpoint;

}  // namespace icl::training
