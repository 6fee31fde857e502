#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "icl/checkpoint.hpp"
#include "icl/gradcheck.hpp"
#include "icl/model.hpp"
#include "icl/tasks.hpp"

using namespace icl;
using namespace icl::model;
using icl::numerics::Tensor;

namespace {

tasks::PromptInstance make_prompt(int d, int k, std::uint64_t seed,
                                  double sigma = 0.0) {
  Rng rng = make_rng(seed);
  auto spec = tasks::sample_linear_task(d, rng);
  auto noise = sigma > 0
                   ? tasks::NoiseSpec::make(tasks::NoiseKind::kGaussian, sigma)
                   : tasks::NoiseSpec::none();
  return tasks::build_prompt(spec, k, noise, rng);
}

Checkpoint zero_readout(Checkpoint ckpt) {
  const auto spec = weight_spec(ckpt.config);
  for (size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].name == "read_out.w" || spec[i].name == "read_out.b") {
      ckpt.weights[i] = Tensor::zeros(spec[i].shape);
    }
  }
  return ckpt;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("encode_prompt layout") {
  SUBCASE("query only") {
    auto p = make_prompt(3, 0, 1);
    auto seq = encode_prompt(p, 5);
    CHECK(seq.tokens.dim(0) == 1);
    CHECK(seq.tokens.dim(1) == 6);
    for (int j = 0; j < 3; ++j) CHECK(seq.tokens(0, j) == p.x_query[j]);
    CHECK(seq.tokens(0, 3) == 0.0);
    CHECK(seq.tokens(0, 5) == 0.0);  // label slot empty
  }
  SUBCASE("hand-checked k=1, d=2, d_max=3") {
    tasks::PromptInstance p;
    p.dim = 2;
    p.xs = {1, 2};
    p.ys = {5};
    p.x_query = {0, 1};
    p.y_query_clean = 0;
    auto seq = encode_prompt(p, 3);
    const std::vector<double> want{1, 2, 0, 0, 0, 0, 0, 5, 0, 1, 0, 0};
    for (int i = 0; i < 12; ++i) CHECK(seq.tokens.at(i) == want[i]);
  }
  SUBCASE("shape arithmetic at the paper scale") {
    auto p = make_prompt(20, 40, 2);
    auto seq = encode_prompt(p, 20);
    CHECK(seq.tokens.dim(0) == 81);
    CHECK(seq.tokens.dim(1) == 21);
  }
  SUBCASE("dimension above d_max is a configuration error") {
    auto p = make_prompt(6, 2, 3);
    CHECK_THROWS_AS(encode_prompt(p, 5), ConfigError);
  }
}

TEST_CASE("encode_prompt is injective: the prompt decodes back") {
  auto p = make_prompt(4, 7, 9, 0.3);
  auto seq = encode_prompt(p, 6);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 4; ++j) CHECK(seq.tokens(2 * i, j) == p.x(i)[j]);
    for (int j = 4; j < 6; ++j) CHECK(seq.tokens(2 * i, j) == 0.0);
    CHECK(seq.tokens(2 * i + 1, 6) == p.ys[static_cast<size_t>(i)]);
  }
  for (int j = 0; j < 4; ++j) CHECK(seq.tokens(14, j) == p.x_query[j]);
}

TEST_CASE("param_count golden values") {
  auto tiny = ModelConfig::preset(SizeName::kTiny);
  // independent route: sum the layer formulas
  const std::int64_t C = 64, D = 21, P = 201, L = 3;
  const std::int64_t per_layer =
      2 * C + (C * 3 * C + 3 * C) + (C * C + C) + 2 * C + (C * 4 * C + 4 * C) +
      (4 * C * C + C);
  const std::int64_t expect = (D * C + C) + P * C + L * per_layer + 2 * C + (C + 1);
  CHECK(param_count(tiny) == expect);
  CHECK(param_count(tiny) == 164417);  // frozen golden value

  auto small = ModelConfig::preset(SizeName::kSmall);
  auto standard = ModelConfig::preset(SizeName::kStandard);
  CHECK(param_count(standard) > param_count(small));
  CHECK(param_count(small) > param_count(tiny));

  // quadratic terms dominate: doubling d_embed more than doubles the count
  ModelConfig wide;
  wide.size_name = SizeName::kCustom;
  wide.n_layers = 3;
  wide.n_heads = 2;
  wide.d_embed = 128;
  CHECK(param_count(wide) > 2 * param_count(tiny));
}

TEST_CASE("model config validation") {
  ModelConfig bad;
  bad.size_name = SizeName::kCustom;
  bad.n_heads = 3;
  bad.d_embed = 64;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig wrong_dims = ModelConfig::preset(SizeName::kTiny);
  wrong_dims.n_layers = 4;
  CHECK_THROWS_AS(wrong_dims.validate(), ConfigError);
}

TEST_CASE("forward shape contract and zero readout") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 5, 12);
  auto ckpt = init_checkpoint(cfg, 7);

  auto p0 = make_prompt(3, 0, 21);
  CHECK(forward(ckpt, encode_prompt(p0, cfg.d_max)).size() == 1);

  auto zero = zero_readout(ckpt);
  auto p = make_prompt(5, 6, 22, 0.2);
  auto preds = forward(zero, encode_prompt(p, cfg.d_max));
  CHECK(preds.size() == 7);
  for (double v : preds) CHECK(v == 0.0);
  CHECK(predict_query(zero, p) == 0.0);
}

TEST_CASE("predict_query equals the last forward entry bit-exactly") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 4, 10);
  auto ckpt = init_checkpoint(cfg, 8);
  auto p = make_prompt(4, 5, 23, 0.1);
  auto preds = forward(ckpt, encode_prompt(p, cfg.d_max));
  CHECK(predict_query(ckpt, p) == preds.back());
  for (double v : preds) CHECK(std::isfinite(v));
}

TEST_CASE("permuting demonstrations changes values but not shapes") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 4, 10);
  auto ckpt = init_checkpoint(cfg, 9);
  auto p = make_prompt(4, 6, 24, 0.0);
  tasks::PromptInstance q = p;
  // swap demonstrations 0 and 5
  for (int j = 0; j < 4; ++j) std::swap(q.xs[j], q.xs[5 * 4 + j]);
  std::swap(q.ys[0], q.ys[5]);
  auto a = forward(ckpt, encode_prompt(p, cfg.d_max));
  auto b = forward(ckpt, encode_prompt(q, cfg.d_max));
  CHECK(a.size() == b.size());
}

TEST_CASE("causality: later tokens do not affect earlier predictions") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 5, 8);
  auto ckpt = init_checkpoint(cfg, 10);
  auto p = make_prompt(5, 4, 25, 0.2);
  auto seq = encode_prompt(p, cfg.d_max);
  auto base = forward(ckpt, seq);

  // zero every token strictly after position 2i; prediction i must not move
  for (int i = 0; i <= 4; ++i) {
    std::vector<double> rows(seq.tokens.data().begin(), seq.tokens.data().end());
    const auto width = seq.tokens.dim(1);
    for (std::int64_t pos = 2 * i + 1; pos < seq.tokens.dim(0); ++pos) {
      for (std::int64_t j = 0; j < width; ++j) rows[pos * width + j] = 0.0;
    }
    TokenSequence cut;
    cut.k = seq.k;
    cut.tokens = Tensor::from(seq.tokens.shape(), std::move(rows));
    auto out = forward(ckpt, cut);
    CHECK(out[static_cast<size_t>(i)] == base[static_cast<size_t>(i)]);
  }
}

TEST_CASE("sequence longer than the model capacity is rejected") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 5, 4);  // max 7 tokens
  auto ckpt = init_checkpoint(cfg, 11);
  auto p = make_prompt(5, 4, 26);  // 9 tokens
  CHECK_THROWS_AS(forward(ckpt, encode_prompt(p, cfg.d_max)), ConfigError);
}

TEST_CASE("tiny transformer gradients match finite differences") {
  // full architecture at reduced width so the check stays quick
  ModelConfig cfg;
  cfg.size_name = SizeName::kCustom;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_embed = 8;
  cfg.d_max = 3;
  cfg.max_points = 4;
  auto ckpt = init_checkpoint(cfg, 12);
  auto p = make_prompt(3, 3, 27, 0.1);
  auto seq = encode_prompt(p, cfg.d_max);
  const int T = static_cast<int>(seq.tokens.dim(0));

  auto build = [&](numerics::Graph& g, std::span<const numerics::NodeId> ps) {
    auto tokens = g.input(seq.tokens);
    auto out = build_forward(g, cfg, ps, tokens, 1, T);
    return g.reduce_mean(g.mul(out, out));
  };
  double err = numerics::finite_diff_check(build, ckpt.weights, 1e-5, 400);
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 5, 10);
  auto ckpt = init_checkpoint(cfg, 13);
  ckpt.train_step = 777;
  const auto path = std::filesystem::temp_directory_path() / "icl_test_ckpt.bin";
  save_checkpoint(ckpt, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.train_step == 777);
  CHECK(loaded.rng_seed == ckpt.rng_seed);
  for (size_t i = 0; i < ckpt.weights.size(); ++i) {
    CHECK(loaded.weights[i].equals(ckpt.weights[i]));
  }
  auto p = make_prompt(5, 4, 28, 0.3);
  CHECK(predict_query(loaded, p) == predict_query(ckpt, p));
  verify_checkpoint_file(path);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint load failures") {
  auto cfg = ModelConfig::preset(SizeName::kTiny, 5, 10);
  auto ckpt = init_checkpoint(cfg, 14);
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "icl_test_ckpt2.bin";
  save_checkpoint(ckpt, path);

  SUBCASE("truncated file") {
    const auto trunc = dir / "icl_test_ckpt_trunc.bin";
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(trunc, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(trunc), IoError);
    std::filesystem::remove(trunc);
  }
  SUBCASE("flipped payload byte fails the hash") {
    const auto bad = dir / "icl_test_ckpt_bad.bin";
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    bytes[bytes.size() - 5] ^= 0x40;
    std::ofstream out(bad, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
    CHECK_THROWS_AS(verify_checkpoint_file(bad), IoError);
    std::filesystem::remove(bad);
  }
  SUBCASE("size mismatch against an expected config") {
    auto other = ModelConfig::preset(SizeName::kSmall, 5, 10);
    CHECK_THROWS_AS(load_checkpoint(path, &other), IoError);
  }
  std::filesystem::remove(path);
}

}  // TEST_SUITE
