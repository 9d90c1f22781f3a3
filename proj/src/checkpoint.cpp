#include "lasdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "lasdiff/error.hpp"

namespace lasdiff {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are stored little-endian");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void put_tensor(const torch::Tensor& t_in) {
    auto t = t_in.detach().contiguous().cpu();
    uint8_t code;
    switch (t.scalar_type()) {
      case torch::kFloat32: code = 0; break;
      case torch::kFloat64: code = 1; break;
      case torch::kUInt8: code = 2; break;
      case torch::kInt64: code = 3; break;
      default: throw Error("unsupported-dtype", "cannot store tensor dtype");
    }
    put<uint8_t>(code);
    put<uint32_t>(static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<int64_t>(d);
    const auto* p = static_cast<const uint8_t*>(t.data_ptr());
    bytes.insert(bytes.end(), p, p + t.nbytes());
  }
  std::vector<uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<uint64_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  torch::Tensor get_tensor() {
    const auto code = get<uint8_t>();
    torch::Dtype dtype;
    switch (code) {
      case 0: dtype = torch::kFloat32; break;
      case 1: dtype = torch::kFloat64; break;
      case 2: dtype = torch::kUInt8; break;
      case 3: dtype = torch::kInt64; break;
      default: throw Error("malformed-checkpoint", "unknown dtype code");
    }
    const auto dims = get<uint32_t>();
    if (dims > 8) throw Error("malformed-checkpoint", "tensor rank");
    std::vector<int64_t> shape;
    for (uint32_t i = 0; i < dims; ++i) {
      const auto d = get<int64_t>();
      if (d < 0) throw Error("malformed-checkpoint", "negative dimension");
      shape.push_back(d);
    }
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    need(t.nbytes());
    std::memcpy(t.data_ptr(), b_.data() + pos_, t.nbytes());
    pos_ += t.nbytes();
    return t;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > b_.size()) throw Error("malformed-checkpoint", "truncated");
  }
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

nlohmann::json options_json(const AdamOptions& o) {
  return {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps},
          {"weight_decay", o.weight_decay}, {"decoupled", o.decoupled}};
}

}  // namespace

Checkpoint capture_checkpoint(const torch::nn::Module& module, const nlohmann::json& config, const nlohmann::json& meta,
                              Adam* optimizer, const torch::Generator* gen) {
  Checkpoint c;
  c.config = config;
  c.meta = meta;
  for (const auto& p : module.named_parameters()) c.params.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : module.named_buffers()) c.params.emplace_back(b.key(), b.value().detach().clone());
  if (optimizer) {
    OptimizerState s;
    s.steps = optimizer->steps();
    s.options = options_json(optimizer->options());
    for (auto& m : optimizer->first_moments()) s.first.push_back(m.clone());
    for (auto& v : optimizer->second_moments()) s.second.push_back(v.clone());
    c.optimizer = std::move(s);
  }
  if (gen) c.rng_state = gen->get_state().clone();
  return c;
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes = {'L', 'A', 'S', 'C'};
  w.put<uint32_t>(c.version);
  w.put_string(c.config.dump());
  w.put_string(c.meta.dump());
  w.put<uint32_t>(static_cast<uint32_t>(c.params.size()));
  for (const auto& [name, t] : c.params) {
    w.put_string(name);
    w.put_tensor(t);
  }
  w.put<uint8_t>(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    w.put<int64_t>(c.optimizer->steps);
    w.put_string(c.optimizer->options.dump());
    w.put<uint32_t>(static_cast<uint32_t>(c.optimizer->first.size()));
    for (size_t i = 0; i < c.optimizer->first.size(); ++i) {
      w.put_tensor(c.optimizer->first[i]);
      w.put_tensor(c.optimizer->second[i]);
    }
  }
  w.put<uint8_t>(c.rng_state.defined() ? 1 : 0);
  if (c.rng_state.defined()) w.put_tensor(c.rng_state);
  return w.bytes;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "LASC", 4) != 0) throw Error("malformed-checkpoint", "bad magic");
  std::vector<uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  Checkpoint c;
  c.version = r.get<uint32_t>();
  if (c.version != kCheckpointVersion)
    throw Error("malformed-checkpoint", "unsupported schema version " + std::to_string(c.version));
  try {
    c.config = nlohmann::json::parse(r.get_string());
    c.meta = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed-checkpoint", e.what());
  }
  const auto n = r.get<uint32_t>();
  for (uint32_t i = 0; i < n; ++i) {
    auto name = r.get_string();
    c.params.emplace_back(std::move(name), r.get_tensor());
  }
  if (r.get<uint8_t>()) {
    OptimizerState s;
    s.steps = r.get<int64_t>();
    s.options = nlohmann::json::parse(r.get_string());
    const auto m = r.get<uint32_t>();
    for (uint32_t i = 0; i < m; ++i) {
      s.first.push_back(r.get_tensor());
      s.second.push_back(r.get_tensor());
    }
    c.optimizer = std::move(s);
  }
  if (r.get<uint8_t>()) c.rng_state = r.get_tensor();
  if (!r.done()) throw Error("malformed-checkpoint", "trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("io-error", tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("io-error", tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore_module(torch::nn::Module& module, const Checkpoint& ckpt) {
  torch::NoGradGuard no_grad;
  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : ckpt.params) by_name[name] = &t;
  size_t matched = 0;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint-mismatch", "missing " + name);
    if (!it->second->sizes().equals(dst.sizes())) throw Error("checkpoint-mismatch", "shape of " + name);
    dst.copy_(*it->second);
    ++matched;
  };
  for (auto& p : module.named_parameters()) copy(p.key(), p.value());
  for (auto& b : module.named_buffers()) copy(b.key(), b.value());
  if (matched != by_name.size()) throw Error("checkpoint-mismatch", "checkpoint has extra tensors");
}

void restore_optimizer(Adam& optimizer, const Checkpoint& ckpt) {
  if (!ckpt.optimizer) throw Error("checkpoint-mismatch", "no optimizer state");
  const auto& s = *ckpt.optimizer;
  auto& m = optimizer.first_moments();
  auto& v = optimizer.second_moments();
  if (s.first.size() != m.size()) throw Error("checkpoint-mismatch", "optimizer parameter count");
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < m.size(); ++i) {
    m[i].copy_(s.first[i]);
    v[i].copy_(s.second[i]);
  }
  optimizer.set_steps(s.steps);
}

void restore_generator(torch::Generator& gen, const Checkpoint& ckpt) {
  if (!ckpt.rng_state.defined()) throw Error("checkpoint-mismatch", "no generator state");
  gen.set_state(ckpt.rng_state);
}

}  // namespace lasdiff
