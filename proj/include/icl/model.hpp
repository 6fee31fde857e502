#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icl/graph.hpp"
#include "icl/rng.hpp"
#include "icl/tasks.hpp"

namespace icl::model {

enum class SizeName { kStandard, kSmall, kTiny, kCustom };

std::string size_name_str(SizeName s);
SizeName size_name_from_str(const std::string& s);

// Decoder-only transformer architecture. Named sizes fix
// (n_layers, n_heads, d_embed); d_max bounds the input dimension and
// max_points the number of demonstrations per prompt.
struct ModelConfig {
  int n_layers = 3;
  int n_heads = 2;
  int d_embed = 64;
  int d_max = 20;
  int max_points = 101;
  SizeName size_name = SizeName::kTiny;

  static ModelConfig preset(SizeName size, int d_max = 20, int max_points = 101);
  void validate() const;

  int max_seq_len() const { return 2 * max_points - 1; }
  int token_width() const { return d_max + 1; }
};

// Interleaved prompt encoding: 2k+1 rows of width d_max+1. Even rows hold
// x vectors zero-padded to d_max with a zero label slot; odd rows hold the
// label in the final coordinate. The query occupies the last row.
struct TokenSequence {
  numerics::Tensor tokens;  // (2k+1) x (d_max+1), or 2k x (d_max+1) for training
  int k = 0;
};

struct WeightSpec {
  std::string name;
  numerics::Shape shape;
};

// Ordered list of weight tensors determined by the config; the order is
// the canonical parameter order everywhere (init, checkpoints, training).
std::vector<WeightSpec> weight_spec(const ModelConfig& config);

std::int64_t param_count(const ModelConfig& config);

// Architecture hyperparameters plus trained weights.
struct Checkpoint {
  ModelConfig config;
  std::vector<numerics::Tensor> weights;  // aligned with weight_spec order
  std::int64_t train_step = 0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Fresh GPT-2 style initialization: N(0, 0.02^2) projections and embeddings,
// zero biases, unit layer-norm gains.
Checkpoint init_checkpoint(const ModelConfig& config, std::uint64_t seed);

TokenSequence encode_prompt(const tasks::PromptInstance& prompt, int d_max);

// Training-style encoding without a trailing query token: 2k rows.
numerics::Tensor encode_examples(std::span<const double> xs_flat,
                                 std::span<const double> ys, int dim, int d_max);

// Builds the transformer into g. tokens_in must be a (batch*seq_len) x
// (d_max+1) node; returns the readout node of shape (batch*seq_len, 1).
// params follow weight_spec order.
numerics::NodeId build_forward(numerics::Graph& g, const ModelConfig& config,
                               std::span<const numerics::NodeId> params,
                               numerics::NodeId tokens_in, int batch,
                               int seq_len);

// Scalar predictions at every x position: entry i estimates the label of
// the x token at position 2i given demonstrations 1..i. Length k+1.
std::vector<double> forward(const Checkpoint& ckpt, const TokenSequence& seq);

// Batched variant over same-length sequences; one graph per call.
// Returns one row of k+1 predictions per sequence.
std::vector<std::vector<double>> forward_batch(
    const Checkpoint& ckpt, std::span<const TokenSequence> seqs);

double predict_query(const Checkpoint& ckpt, const tasks::PromptInstance& prompt);

}  // namespace icl::model
