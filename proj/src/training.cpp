#include "icl/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "icl/adam.hpp"
#include "icl/csvio.hpp"
#include "icl/graph.hpp"
#include "icl/hashing.hpp"

namespace icl {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_hashed_file(const std::filesystem::path& path, const std::string& body,
                       const std::string& config_hash, std::uint64_t seed) {
  std::string content = "# config_hash=" + config_hash +
                        " seed=" + std::to_string(seed) + "\n" + body;
  content += "# sha256=" + sha256_hex(content) + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

void verify_hashed_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  const std::string marker = "# sha256=";
  const auto pos = content.rfind(marker);
  if (pos == std::string::npos) {
    throw IoError("no integrity trailer in " + path.string());
  }
  const std::string recorded = content.substr(pos + marker.size(), 64);
  const std::string actual = sha256_hex(content.substr(0, pos));
  if (recorded != actual) {
    throw IoError("integrity check failed for " + path.string() +
                  " (file was modified)");
  }
}

}  // namespace icl

namespace icl::training {

using model::Checkpoint;
using numerics::Graph;
using numerics::NodeId;
using numerics::Tensor;

std::pair<int, int> curriculum_at(const CurriculumSchedule& schedule,
                                  std::int64_t step, int d_target,
                                  int points_target) {
  if (step < 0) throw ContractError("curriculum_at requires step >= 0");
  const auto ramps = step / schedule.interval_steps;
  const auto d = std::min<std::int64_t>(
      d_target, schedule.d_start + schedule.d_increment * ramps);
  const auto pts = std::min<std::int64_t>(
      points_target, schedule.points_start + schedule.points_increment * ramps);
  return {static_cast<int>(d), static_cast<int>(pts)};
}

void TrainConfig::validate() const {
  model.validate();
  if (sigma_train < 0.0) {
    throw ConfigError("train.sigma_train must be nonnegative, got " +
                      std::to_string(sigma_train));
  }
  if (d_target < 1) throw ConfigError("train.d_target must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (total_steps < 1) throw ConfigError("train.total_steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (loss_log_every < 1) throw ConfigError("train.loss_log_every must be >= 1");
  if (curriculum.interval_steps < 1) {
    throw ConfigError("train.curriculum.interval_steps must be >= 1");
  }
  if (task == tasks::FunctionKind::kPolynomial && poly_degree < 1) {
    throw ConfigError("train.poly_degree must be >= 1");
  }
  const int dim = task == tasks::FunctionKind::kLinear ? d_target : 1;
  if (dim > model.d_max) {
    throw ConfigError("train.d_target exceeds model.d_max");
  }
  if (resolved_points_target() > model.max_points) {
    throw ConfigError("train.points_target exceeds model.max_points");
  }
  if (!fresh_sampling && dataset_size < 1) {
    throw ConfigError("train.dataset_size must be >= 1");
  }
}

TrainAbort::TrainAbort(std::int64_t step_, double lr_, double last_loss_)
    : Error("training aborted: non-finite loss at step " + std::to_string(step_) +
            " (lr=" + format_g17(lr_) + ", last finite loss=" +
            format_g17(last_loss_) + ")"),
      step(step_),
      lr(lr_),
      last_loss(last_loss_) {}

double training_loss(std::span<const double> predictions,
                     std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw ContractError("training_loss: length mismatch");
  }
  double s = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

namespace {

struct Batch {
  Tensor tokens;   // (B * 2k, d_max + 1)
  Tensor targets;  // (B, 2k), noisy label at each x position
  Tensor mask;     // (B, 2k), 1 at x positions
  int k = 0;
};

tasks::PromptInstance sample_train_prompt(const TrainConfig& cfg, int d_cur,
                                          int points_cur, Rng& rng) {
  tasks::FunctionSpec spec =
      cfg.task == tasks::FunctionKind::kLinear
          ? tasks::sample_linear_task(d_cur, rng)
          : tasks::sample_poly_task(cfg.poly_degree, rng);
  const auto noise = tasks::NoiseSpec::make(cfg.train_noise, cfg.sigma_train);
  return tasks::build_prompt(spec, points_cur, noise, rng);
}

Batch assemble_batch(const TrainConfig& cfg,
                     std::span<const tasks::PromptInstance> prompts) {
  const int B = static_cast<int>(prompts.size());
  const int k = prompts[0].k();
  const int width = cfg.model.token_width();
  const int T = 2 * k;
  std::vector<double> tokens(static_cast<size_t>(B) * T * width, 0.0);
  std::vector<double> targets(static_cast<size_t>(B) * T, 0.0);
  std::vector<double> mask(static_cast<size_t>(B) * T, 0.0);
  for (int b = 0; b < B; ++b) {
    const auto& p = prompts[static_cast<size_t>(b)];
    auto rows = model::encode_examples(p.xs, p.ys, p.dim, cfg.model.d_max);
    std::copy(rows.raw(), rows.raw() + rows.size(),
              tokens.begin() + static_cast<size_t>(b) * T * width);
    for (int i = 0; i < k; ++i) {
      targets[static_cast<size_t>(b) * T + 2 * i] = p.ys[static_cast<size_t>(i)];
      mask[static_cast<size_t>(b) * T + 2 * i] = 1.0;
    }
  }
  Batch out;
  out.tokens = Tensor::from({static_cast<std::int64_t>(B) * T, width},
                            std::move(tokens));
  out.targets = Tensor::from({B, T}, std::move(targets));
  out.mask = Tensor::from({B, T}, std::move(mask));
  out.k = k;
  return out;
}

}  // namespace

std::pair<Checkpoint, LossHistory> train(const TrainConfig& config) {
  config.validate();
  Checkpoint ckpt = model::init_checkpoint(config.model, config.seed);
  numerics::AdamState adam = numerics::AdamState::init(
      ckpt.weights, config.lr, config.adam_beta1, config.adam_beta2,
      config.adam_eps);

  const int points_target = config.resolved_points_target();

  // fixed-pool mode samples every prompt at the target scale up front
  std::vector<tasks::PromptInstance> pool;
  if (!config.fresh_sampling) {
    pool.reserve(static_cast<size_t>(config.dataset_size));
    for (int i = 0; i < config.dataset_size; ++i) {
      Rng rng = make_rng(config.seed, "pool", static_cast<std::uint64_t>(i));
      pool.push_back(
          sample_train_prompt(config, config.d_target, points_target, rng));
    }
  }

  LossHistory history;
  history.sigma_train = config.sigma_train;
  double last_loss = std::nan("");

  std::vector<tasks::PromptInstance> prompts(
      static_cast<size_t>(config.batch_size));
  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto [d_cur, points_cur] =
        curriculum_at(config.curriculum, step, config.d_target, points_target);

    if (config.fresh_sampling) {
      Rng rng = make_rng(config.seed, "batch", static_cast<std::uint64_t>(step));
      for (int b = 0; b < config.batch_size; ++b) {
        prompts[static_cast<size_t>(b)] =
            sample_train_prompt(config, d_cur, points_cur, rng);
      }
    } else {
      for (int b = 0; b < config.batch_size; ++b) {
        const auto idx = static_cast<size_t>(
            (step * config.batch_size + b) % config.dataset_size);
        prompts[static_cast<size_t>(b)] = pool[idx];
      }
    }

    double loss_value = 0.0;
    try {
      Batch batch = assemble_batch(config, prompts);
      const int B = config.batch_size;
      const int T = 2 * batch.k;

      Graph g;
      std::vector<NodeId> params;
      params.reserve(ckpt.weights.size());
      for (const auto& w : ckpt.weights) params.push_back(g.parameter(w));
      const NodeId tokens = g.input(batch.tokens);
      NodeId out = model::build_forward(g, config.model, params, tokens, B, T);
      out = g.reshape(out, {B, T});
      NodeId diff =
          g.mul(g.sub(out, g.input(batch.targets)), g.input(batch.mask));
      NodeId loss = g.scale(g.reduce_sum(g.mul(diff, diff)),
                            1.0 / (static_cast<double>(B) * batch.k));
      loss_value = g.value(loss).item();
      if (!std::isfinite(loss_value)) {
        throw TrainAbort(step, config.lr, last_loss);
      }

      auto grads = g.backward(loss);
      std::vector<Tensor> grad_list;
      grad_list.reserve(params.size());
      for (NodeId id : params) grad_list.push_back(grads.at(id));
      ckpt.weights = numerics::adam_step(ckpt.weights, grad_list, adam);
    } catch (const NonFiniteError&) {
      throw TrainAbort(step, config.lr, last_loss);
    }

    last_loss = loss_value;
    if (step % config.loss_log_every == 0 || step == config.total_steps - 1) {
      history.steps.push_back(step);
      history.losses.push_back(loss_value);
      history.d_cur.push_back(d_cur);
      history.points_cur.push_back(points_cur);
    }
  }

  ckpt.train_step = config.total_steps;
  return {std::move(ckpt), std::move(history)};
}

void write_loss_csv(const LossHistory& history, const std::string& path,
                    const std::string& config_hash, std::uint64_t seed) {
  std::ostringstream body;
  body << "step,loss,d_cur,points_cur,sigma_train\n";
  for (size_t i = 0; i < history.steps.size(); ++i) {
    body << history.steps[i] << ',' << format_g17(history.losses[i]) << ','
         << history.d_cur[i] << ',' << history.points_cur[i] << ','
         << format_g17(history.sigma_train) << '\n';
  }
  write_hashed_file(path, body.str(), config_hash, seed);
}

}  // namespace icl::training
