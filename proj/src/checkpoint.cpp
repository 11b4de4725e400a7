#include "msff/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace msff {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "MSFF1\n";
constexpr std::size_t kMagicLen = 6;

json config_to_json(const TrainConfig& c) {
  return json{{"lambda", c.lambda},
              {"mu", c.mu},
              {"gamma", c.gamma},
              {"lr_init", c.lr_init},
              {"lr_final", c.lr_final},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"patch_size", c.patch_size},
              {"patch_stride", c.patch_stride},
              {"channels", c.channels},
              {"seed", c.seed},
              {"numeric_mode", dtype_name(c.numeric_mode)},
              {"checkpoint_interval", c.checkpoint_interval},
              {"target_l_tm", c.target_l_tm}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.lambda = j.at("lambda").get<double>();
  c.mu = j.at("mu").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.lr_init = j.at("lr_init").get<double>();
  c.lr_final = j.at("lr_final").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.patch_stride = j.at("patch_stride").get<int>();
  c.channels = j.at("channels").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.numeric_mode = dtype_from_name(j.at("numeric_mode").get<std::string>());
  c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  c.target_l_tm = j.at("target_l_tm").get<double>();
  return c;
}

std::size_t tensor_nbytes(const Tensor& t) {
  const std::size_t elem = t.dtype() == Dtype::f32 ? 4 : 8;
  return static_cast<std::size_t>(t.numel()) * elem;
}

void write_tensor_bytes(std::ofstream& out, const Tensor& t) {
  dispatch_dtype(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    out.write(reinterpret_cast<const char*>(t.data<T>()),
              static_cast<std::streamsize>(tensor_nbytes(t)));
  });
}

void read_tensor_bytes(std::ifstream& in, Tensor& t) {
  dispatch_dtype(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    in.read(reinterpret_cast<char*>(t.data<T>()),
            static_cast<std::streamsize>(tensor_nbytes(t)));
  });
  if (!in) throw std::runtime_error("checkpoint: truncated tensor payload");
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  const ParamList params = state.net.parameters();
  const auto& m = state.adam.first_moments();
  const auto& v = state.adam.second_moments();
  if (m.size() != params.size() || v.size() != params.size())
    throw std::runtime_error("checkpoint: optimizer state does not match parameters");

  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(params.size() * 3);
  for (const auto& [name, t] : params) entries.emplace_back("param/" + name, t);
  for (std::size_t i = 0; i < params.size(); ++i)
    entries.emplace_back("adam_m/" + params[i].first, m[i]);
  for (std::size_t i = 0; i < params.size(); ++i)
    entries.emplace_back("adam_v/" + params[i].first, v[i]);

  json manifest;
  manifest["format"] = "MSFF1";
  manifest["config"] = config_to_json(state.config);
  manifest["epoch"] = state.epoch;
  manifest["step"] = state.step;
  manifest["adam_t"] = state.adam.step_count();
  // Shuffle order derives from (seed, epoch), so these two fields are the
  // complete RNG state at an epoch boundary.
  manifest["rng"] = json{{"seed", state.config.seed}, {"next_epoch", state.epoch}};
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : entries) {
    const Shape& s = t.shape();
    tensors.push_back(json{{"name", name},
                           {"shape", {s.n, s.c, s.h, s.w}},
                           {"dtype", dtype_name(t.dtype())},
                           {"offset", offset},
                           {"nbytes", tensor_nbytes(t)}});
    offset += tensor_nbytes(t);
  }
  manifest["tensors"] = std::move(tensors);

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, kMagicLen);
  const std::uint64_t len = text.size();
  std::uint8_t lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = static_cast<std::uint8_t>(len >> (8 * i));
  out.write(reinterpret_cast<const char*>(lenb), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : entries) write_tensor_bytes(out, t);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw std::runtime_error("not an MSFF1 checkpoint: " + path);
  std::uint8_t lenb[8];
  in.read(reinterpret_cast<char*>(lenb), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated manifest length");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(lenb[i]) << (8 * i);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated manifest");
  const json manifest = json::parse(text);
  if (manifest.at("format").get<std::string>() != "MSFF1")
    throw std::runtime_error("checkpoint: unexpected format tag");

  TrainState state;
  state.config = config_from_json(manifest.at("config"));
  state.epoch = manifest.at("epoch").get<int>();
  state.step = manifest.at("step").get<std::int64_t>();

  // Rebuild under the checkpoint's numeric mode, then overwrite all values.
  DtypeScope mode(state.config.numeric_mode);
  state.net = MsffNet(state.config.channels, state.config.seed);
  const ParamList params = state.net.parameters();

  std::vector<Tensor> m, v;
  m.reserve(params.size());
  v.reserve(params.size());

  std::size_t next = 0;
  auto read_entry = [&](const std::string& expected_name, Tensor& dst) {
    const json& e = manifest.at("tensors").at(next++);
    if (e.at("name").get<std::string>() != expected_name)
      throw std::runtime_error("checkpoint: unexpected tensor order at " + expected_name);
    const auto sh = e.at("shape");
    const Shape s{sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>(),
                  sh.at(3).get<int>()};
    if (!(s == dst.shape()))
      throw std::runtime_error("checkpoint: shape mismatch for " + expected_name);
    if (dtype_from_name(e.at("dtype").get<std::string>()) != dst.dtype())
      throw std::runtime_error("checkpoint: dtype mismatch for " + expected_name);
    read_tensor_bytes(in, dst);
  };

  for (const auto& [name, t] : params) {
    Tensor dst = t;
    read_entry("param/" + name, dst);
  }
  for (const auto& [name, t] : params) {
    Tensor dst = Tensor::zeros(t.shape(), t.dtype());
    read_entry("adam_m/" + name, dst);
    m.push_back(dst);
  }
  for (const auto& [name, t] : params) {
    Tensor dst = Tensor::zeros(t.shape(), t.dtype());
    read_entry("adam_v/" + name, dst);
    v.push_back(dst);
  }
  state.adam = Adam(params, state.config.beta1, state.config.beta2, state.config.adam_eps);
  state.adam.restore(std::move(m), std::move(v), manifest.at("adam_t").get<std::int64_t>());
  return state;
}

}  // namespace msff
