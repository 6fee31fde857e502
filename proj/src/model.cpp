#include "icl/model.hpp"

#include <cmath>

namespace icl::model {

using numerics::Graph;
using numerics::NodeId;
using numerics::Shape;
using numerics::Tensor;

std::string size_name_str(SizeName s) {
  switch (s) {
    case SizeName::kStandard: return "standard";
    case SizeName::kSmall: return "small";
    case SizeName::kTiny: return "tiny";
    case SizeName::kCustom: return "custom";
  }
  throw ContractError("unknown size name");
}

SizeName size_name_from_str(const std::string& s) {
  for (SizeName v : {SizeName::kStandard, SizeName::kSmall, SizeName::kTiny,
                     SizeName::kCustom}) {
    if (size_name_str(v) == s) return v;
  }
  throw ConfigError("unknown model size '" + s + "'");
}

ModelConfig ModelConfig::preset(SizeName size, int d_max, int max_points) {
  ModelConfig c;
  c.size_name = size;
  c.d_max = d_max;
  c.max_points = max_points;
  switch (size) {
    case SizeName::kStandard:
      c.n_layers = 12;
      c.n_heads = 8;
      c.d_embed = 256;
      break;
    case SizeName::kSmall:
      c.n_layers = 6;
      c.n_heads = 4;
      c.d_embed = 128;
      break;
    case SizeName::kTiny:
      c.n_layers = 3;
      c.n_heads = 2;
      c.d_embed = 64;
      break;
    case SizeName::kCustom:
      break;
  }
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_embed < 1) {
    throw ConfigError("model dims must be positive");
  }
  if (d_embed % n_heads != 0) {
    throw ConfigError("model.d_embed must be divisible by model.n_heads");
  }
  if (d_max < 1 || max_points < 1) {
    throw ConfigError("model.d_max and model.max_points must be positive");
  }
  if (size_name != SizeName::kCustom) {
    ModelConfig ref;
    ref.size_name = SizeName::kCustom;
    switch (size_name) {
      case SizeName::kStandard: ref.n_layers = 12; ref.n_heads = 8; ref.d_embed = 256; break;
      case SizeName::kSmall: ref.n_layers = 6; ref.n_heads = 4; ref.d_embed = 128; break;
      case SizeName::kTiny: ref.n_layers = 3; ref.n_heads = 2; ref.d_embed = 64; break;
      case SizeName::kCustom: break;
    }
    if (ref.n_layers != n_layers || ref.n_heads != n_heads ||
        ref.d_embed != d_embed) {
      throw ConfigError("model dims disagree with named size '" +
                        size_name_str(size_name) + "'");
    }
  }
}

std::vector<WeightSpec> weight_spec(const ModelConfig& config) {
  const std::int64_t C = config.d_embed;
  const std::int64_t D = config.token_width();
  const std::int64_t P = config.max_seq_len();
  std::vector<WeightSpec> spec;
  spec.push_back({"read_in.w", {D, C}});
  spec.push_back({"read_in.b", {C}});
  spec.push_back({"pos_emb", {P, C}});
  for (int i = 0; i < config.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    spec.push_back({p + "ln1.g", {C}});
    spec.push_back({p + "ln1.b", {C}});
    spec.push_back({p + "attn.w_qkv", {C, 3 * C}});
    spec.push_back({p + "attn.b_qkv", {3 * C}});
    spec.push_back({p + "attn.w_proj", {C, C}});
    spec.push_back({p + "attn.b_proj", {C}});
    spec.push_back({p + "ln2.g", {C}});
    spec.push_back({p + "ln2.b", {C}});
    spec.push_back({p + "mlp.w_fc", {C, 4 * C}});
    spec.push_back({p + "mlp.b_fc", {4 * C}});
    spec.push_back({p + "mlp.w_proj", {4 * C, C}});
    spec.push_back({p + "mlp.b_proj", {C}});
  }
  spec.push_back({"ln_f.g", {C}});
  spec.push_back({"ln_f.b", {C}});
  spec.push_back({"read_out.w", {C, 1}});
  spec.push_back({"read_out.b", {1}});
  return spec;
}

std::int64_t param_count(const ModelConfig& config) {
  config.validate();
  std::int64_t total = 0;
  for (const auto& w : weight_spec(config)) total += numerics::shape_numel(w.shape);
  return total;
}

void Checkpoint::validate() const {
  config.validate();
  const auto spec = weight_spec(config);
  if (weights.size() != spec.size()) {
    throw IoError("checkpoint holds " + std::to_string(weights.size()) +
                  " tensors, config expects " + std::to_string(spec.size()));
  }
  for (size_t i = 0; i < spec.size(); ++i) {
    if (weights[i].shape() != spec[i].shape) {
      throw IoError("checkpoint tensor '" + spec[i].name + "' has shape " +
                    numerics::shape_str(weights[i].shape()) + ", expected " +
                    numerics::shape_str(spec[i].shape));
    }
  }
}

Checkpoint init_checkpoint(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.rng_seed = seed;
  Rng rng = make_rng(seed, "init");
  std::normal_distribution<double> nd(0.0, 0.02);
  for (const auto& ws : weight_spec(config)) {
    const bool ln_gain = ws.name.ends_with("ln1.g") ||
                         ws.name.ends_with("ln2.g") || ws.name.ends_with("ln_f.g");
    const bool shift_or_bias = ws.name.ends_with(".b");
    if (ln_gain) {
      ckpt.weights.push_back(Tensor::full(ws.shape, 1.0));
    } else if (shift_or_bias) {
      ckpt.weights.push_back(Tensor::zeros(ws.shape));
    } else {
      std::vector<double> data(static_cast<size_t>(numerics::shape_numel(ws.shape)));
      for (auto& v : data) v = nd(rng);
      ckpt.weights.push_back(Tensor::from(ws.shape, std::move(data)));
    }
  }
  return ckpt;
}

TokenSequence encode_prompt(const tasks::PromptInstance& prompt, int d_max) {
  if (prompt.dim > d_max) {
    throw ConfigError("prompt dimension " + std::to_string(prompt.dim) +
                      " exceeds model d_max " + std::to_string(d_max));
  }
  for (double y : prompt.ys) {
    if (!std::isfinite(y)) throw NonFiniteError("non-finite prompt label");
  }
  const int k = prompt.k();
  const int width = d_max + 1;
  std::vector<double> rows(static_cast<size_t>(2 * k + 1) * width, 0.0);
  for (int i = 0; i < k; ++i) {
    auto xi = prompt.x(i);
    std::copy(xi.begin(), xi.end(),
              rows.data() + static_cast<size_t>(2 * i) * width);
    rows[static_cast<size_t>(2 * i + 1) * width + d_max] =
        prompt.ys[static_cast<size_t>(i)];
  }
  std::copy(prompt.x_query.begin(), prompt.x_query.end(),
            rows.data() + static_cast<size_t>(2 * k) * width);
  TokenSequence seq;
  seq.k = k;
  seq.tokens = Tensor::from({2 * k + 1, width}, std::move(rows));
  return seq;
}

numerics::Tensor encode_examples(std::span<const double> xs_flat,
                                 std::span<const double> ys, int dim, int d_max) {
  if (dim > d_max) throw ConfigError("example dimension exceeds d_max");
  const int k = static_cast<int>(ys.size());
  if (xs_flat.size() != static_cast<size_t>(k) * dim) {
    throw ContractError("encode_examples: xs/ys length mismatch");
  }
  const int width = d_max + 1;
  std::vector<double> rows(static_cast<size_t>(2 * k) * width, 0.0);
  for (int i = 0; i < k; ++i) {
    const double* xi = xs_flat.data() + static_cast<size_t>(i) * dim;
    std::copy(xi, xi + dim, rows.data() + static_cast<size_t>(2 * i) * width);
    rows[static_cast<size_t>(2 * i + 1) * width + d_max] = ys[static_cast<size_t>(i)];
  }
  return Tensor::from({2 * k, width}, std::move(rows));
}

numerics::NodeId build_forward(Graph& g, const ModelConfig& config,
                               std::span<const NodeId> params, NodeId tokens_in,
                               int batch, int seq_len) {
  if (seq_len > config.max_seq_len()) {
    throw ConfigError("sequence length " + std::to_string(seq_len) +
                      " exceeds model capacity " +
                      std::to_string(config.max_seq_len()));
  }
  if (params.size() != weight_spec(config).size()) {
    throw ContractError("build_forward: parameter count mismatch");
  }
  const std::int64_t C = config.d_embed;
  const std::int64_t H = config.n_heads;
  const std::int64_t hd = C / H;
  const std::int64_t B = batch;
  const std::int64_t T = seq_len;

  size_t p = 0;
  auto next = [&]() { return params[p++]; };

  const NodeId w_in = next(), b_in = next(), pos = next();
  NodeId h = g.add(g.matmul(tokens_in, w_in), b_in);
  h = g.add_tiled(h, g.slice_rows(pos, 0, T));

  for (int layer = 0; layer < config.n_layers; ++layer) {
    const NodeId ln1g = next(), ln1b = next();
    const NodeId w_qkv = next(), b_qkv = next();
    const NodeId w_proj = next(), b_proj = next();
    const NodeId ln2g = next(), ln2b = next();
    const NodeId w_fc = next(), b_fc = next();
    const NodeId w_proj2 = next(), b_proj2 = next();

    NodeId a = g.layer_norm(h, ln1g, ln1b);
    NodeId qkv = g.add(g.matmul(a, w_qkv), b_qkv);
    auto to_heads = [&](NodeId x) {
      NodeId r = g.reshape(x, {B, T, H, hd});
      r = g.permute(r, {0, 2, 1, 3});
      return g.reshape(r, {B * H, T, hd});
    };
    NodeId q = to_heads(g.slice_cols(qkv, 0, C));
    NodeId kk = to_heads(g.slice_cols(qkv, C, C));
    NodeId v = to_heads(g.slice_cols(qkv, 2 * C, C));

    NodeId scores = g.scale(g.batch_matmul(q, kk, false, true),
                            1.0 / std::sqrt(static_cast<double>(hd)));
    NodeId ctx = g.batch_matmul(g.causal_softmax(scores), v);  // (B*H, T, hd)
    ctx = g.reshape(ctx, {B, H, T, hd});
    ctx = g.permute(ctx, {0, 2, 1, 3});
    ctx = g.reshape(ctx, {B * T, C});
    h = g.add(h, g.add(g.matmul(ctx, w_proj), b_proj));

    NodeId m = g.layer_norm(h, ln2g, ln2b);
    m = g.gelu(g.add(g.matmul(m, w_fc), b_fc));
    m = g.add(g.matmul(m, w_proj2), b_proj2);
    h = g.add(h, m);
  }

  const NodeId lnfg = next(), lnfb = next();
  const NodeId w_out = next(), b_out = next();
  h = g.layer_norm(h, lnfg, lnfb);
  return g.add(g.matmul(h, w_out), b_out);
}

std::vector<std::vector<double>> forward_batch(
    const Checkpoint& ckpt, std::span<const TokenSequence> seqs) {
  if (seqs.empty()) return {};
  ckpt.validate();
  const int k = seqs[0].k;
  const std::int64_t T = seqs[0].tokens.dim(0);
  const std::int64_t W = seqs[0].tokens.dim(1);
  if (W != ckpt.config.token_width()) {
    throw ConfigError("token width disagrees with model d_max");
  }
  const auto B = static_cast<std::int64_t>(seqs.size());
  std::vector<double> stacked(static_cast<size_t>(B * T * W));
  for (std::int64_t i = 0; i < B; ++i) {
    const auto& t = seqs[static_cast<size_t>(i)].tokens;
    if (t.dim(0) != T || t.dim(1) != W || seqs[static_cast<size_t>(i)].k != k) {
      throw ContractError("forward_batch requires same-length sequences");
    }
    std::copy(t.raw(), t.raw() + T * W, stacked.data() + i * T * W);
  }

  Graph g;
  std::vector<NodeId> params;
  params.reserve(ckpt.weights.size());
  for (const auto& w : ckpt.weights) params.push_back(g.input(w));
  const NodeId tokens =
      g.input(numerics::Tensor::from({B * T, W}, std::move(stacked)));
  const NodeId out = build_forward(g, ckpt.config, params, tokens,
                                   static_cast<int>(B), static_cast<int>(T));
  const auto& val = g.value(out);

  std::vector<std::vector<double>> result(static_cast<size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) {
    auto& row = result[static_cast<size_t>(i)];
    row.resize(static_cast<size_t>(k) + 1);
    for (int j = 0; j <= k; ++j) {
      row[static_cast<size_t>(j)] = val.at(i * T + 2 * j);
    }
  }
  return result;
}

std::vector<double> forward(const Checkpoint& ckpt, const TokenSequence& seq) {
  return forward_batch(ckpt, {&seq, 1})[0];
}

double predict_query(const Checkpoint& ckpt, const tasks::PromptInstance& prompt) {
  return forward(ckpt, encode_prompt(prompt, ckpt.config.d_max)).back();
}

}  // namespace icl::model
