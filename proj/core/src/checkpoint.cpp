#include "oodp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace oodp {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'O', 'O', 'D', 'P', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) throw CheckpointError("checkpoint truncated");
  return v;
}

std::vector<std::pair<std::string, Tensor<float>*>> named_state(OodpModel<float>& model) {
  std::vector<std::pair<std::string, Tensor<float>*>> out;
  for (auto* p : model.parameters()) out.emplace_back(p->name, &p->value);
  for (auto& b : model.buffers()) out.push_back(b);
  return out;
}

}  // namespace

void save_checkpoint(OodpModel<float>& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const ModelConfig& c = model.config();
  for (int v : {c.n_static, c.n_dynamic, c.height, c.width, c.window}) put<std::int32_t>(out, v);
  put<std::uint64_t>(out, c.seed);
  const auto state = named_state(model);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (int d : {t->n(), t->c(), t->h(), t->w()}) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

OodpModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + " is not an OODP checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.n_static = get<std::int32_t>(in);
  cfg.n_dynamic = get<std::int32_t>(in);
  cfg.height = get<std::int32_t>(in);
  cfg.width = get<std::int32_t>(in);
  cfg.window = get<std::int32_t>(in);
  cfg.seed = get<std::uint64_t>(in);
  OodpModel<float> model(cfg);
  std::map<std::string, Tensor<float>*> slots;
  for (auto& [name, t] : named_state(model)) slots[name] = t;
  const auto count = get<std::uint32_t>(in);
  if (count != slots.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw CheckpointError("checkpoint truncated");
    Shape s;
    s.n = get<std::int32_t>(in);
    s.c = get<std::int32_t>(in);
    s.h = get<std::int32_t>(in);
    s.w = get<std::int32_t>(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("unknown tensor '" + name + "' in checkpoint");
    if (!(it->second->shape() == s)) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(s) + ", model expects " +
                            to_string(it->second->shape()));
    }
    if (!in.read(reinterpret_cast<char*>(it->second->data()),
                 static_cast<std::streamsize>(it->second->size() * sizeof(float)))) {
      throw CheckpointError("checkpoint truncated");
    }
  }
  return model;
}

void copy_state(OodpModel<float>& from, OodpModel<float>& to) {
  auto a = named_state(from);
  auto b = named_state(to);
  if (a.size() != b.size()) throw CheckpointError("copy_state: models differ in structure");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_shape(a[i].second->shape(), b[i].second->shape(), "copy_state");
    *b[i].second = *a[i].second;
  }
}

std::uint64_t state_hash(OodpModel<float>& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : named_state(model)) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
    for (std::size_t i = 0; i < t->size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace oodp
