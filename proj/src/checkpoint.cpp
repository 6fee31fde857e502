#include "icl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "icl/hashing.hpp"
#include "icl/json_serde.hpp"

namespace icl::model {

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{{"size_name", size_name_str(c.size_name)},
              {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"d_embed", c.d_embed},
              {"d_max", c.d_max},
              {"max_points", c.max_points}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.size_name = size_name_from_str(j.at("size_name").get<std::string>());
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_embed = j.at("d_embed").get<int>();
  c.d_max = j.at("d_max").get<int>();
  c.max_points = j.at("max_points").get<int>();
  c.validate();
  return c;
}

namespace {

struct RawHeader {
  json meta;
  std::uint64_t payload_offset = 0;
  std::uint64_t payload_bytes = 0;
};

RawHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)) ||
      version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version in " + path.string());
  }
  if (!in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len))) {
    throw IoError("truncated checkpoint header in " + path.string());
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw IoError("truncated checkpoint header in " + path.string());
  }
  RawHeader h;
  try {
    h.meta = json::parse(header);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  h.payload_offset = sizeof(magic) + sizeof(version) + sizeof(header_len) + header_len;
  h.payload_bytes = h.meta.at("payload_bytes").get<std::uint64_t>();
  return h;
}

std::vector<unsigned char> read_payload(std::ifstream& in, const RawHeader& h,
                                        const std::filesystem::path& path) {
  std::vector<unsigned char> payload(h.payload_bytes);
  if (!in.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size())) ||
      in.gcount() != static_cast<std::streamsize>(payload.size())) {
    throw IoError("corrupt checkpoint: truncated payload in " + path.string());
  }
  const std::string digest = sha256_hex(payload);
  if (digest != h.meta.at("payload_sha256").get<std::string>()) {
    throw IoError("corrupt checkpoint: payload hash mismatch in " + path.string());
  }
  return payload;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.validate();
  const auto spec = weight_spec(ckpt.config);

  std::vector<unsigned char> payload;
  std::uint64_t total = 0;
  for (const auto& w : ckpt.weights) total += static_cast<std::uint64_t>(w.size());
  payload.resize(total * sizeof(double));
  std::uint64_t off = 0;
  for (const auto& w : ckpt.weights) {
    std::memcpy(payload.data() + off, w.raw(), static_cast<size_t>(w.size()) * sizeof(double));
    off += static_cast<std::uint64_t>(w.size()) * sizeof(double);
  }

  json tensors = json::array();
  for (const auto& ws : spec) {
    tensors.push_back({{"name", ws.name}, {"shape", ws.shape}});
  }
  json meta{{"config", to_json(ckpt.config)},
            {"train_step", ckpt.train_step},
            {"rng_seed", ckpt.rng_seed},
            {"tensors", tensors},
            {"dtype", "f64"},
            {"payload_bytes", payload.size()},
            {"payload_sha256", sha256_hex(payload)}};
  const std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint to " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t header_len = header.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const RawHeader h = read_header(in, path);

  Checkpoint ckpt;
  ckpt.config = model_config_from_json(h.meta.at("config"));
  ckpt.train_step = h.meta.at("train_step").get<std::int64_t>();
  ckpt.rng_seed = h.meta.at("rng_seed").get<std::uint64_t>();
  if (expect != nullptr) {
    if (to_json(*expect) != to_json(ckpt.config)) {
      throw IoError("checkpoint config mismatch: file holds " +
                    to_json(ckpt.config).dump() + ", expected " +
                    to_json(*expect).dump());
    }
  }

  const auto spec = weight_spec(ckpt.config);
  const auto& tensors = h.meta.at("tensors");
  if (tensors.size() != spec.size()) {
    throw IoError("checkpoint tensor count mismatch in " + path.string());
  }
  std::uint64_t expected_doubles = 0;
  for (size_t i = 0; i < spec.size(); ++i) {
    const auto name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<numerics::Shape>();
    if (name != spec[i].name || shape != spec[i].shape) {
      throw IoError("checkpoint tensor '" + name + "' shape mismatch in " +
                    path.string());
    }
    expected_doubles += static_cast<std::uint64_t>(numerics::shape_numel(shape));
  }
  if (h.payload_bytes != expected_doubles * sizeof(double)) {
    throw IoError("corrupt checkpoint: payload size mismatch in " + path.string());
  }

  const auto payload = read_payload(in, h, path);
  std::uint64_t off = 0;
  for (const auto& ws : spec) {
    const auto n = static_cast<size_t>(numerics::shape_numel(ws.shape));
    std::vector<double> data(n);
    std::memcpy(data.data(), payload.data() + off, n * sizeof(double));
    off += n * sizeof(double);
    ckpt.weights.push_back(numerics::Tensor::from(ws.shape, std::move(data)));
  }
  ckpt.validate();
  return ckpt;
}

void verify_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const RawHeader h = read_header(in, path);
  (void)read_payload(in, h, path);
}

}  // namespace icl::model
