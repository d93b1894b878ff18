#include "recal/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "recal/rng.hpp"

namespace recal {

const char* to_string(ParamKind k) {
  switch (k) {
    case ParamKind::conv_weight: return "conv_weight";
    case ParamKind::conv_bias: return "conv_bias";
    case ParamKind::norm_scale: return "norm_scale";
    case ParamKind::norm_shift: return "norm_shift";
    case ParamKind::running_stat: return "running_stat";
  }
  return "?";
}

Tensor4 ParamStore::declare(std::string name, ParamKind kind, const Shape4& shape) {
  if (index_.count(name)) {
    throw ConfigError(str_cat("parameter slot '", name, "' registered twice"));
  }
  Tensor4 t = Tensor4::zeros(shape, kind != ParamKind::running_stat);
  index_.emplace(name, slots_.size());
  slots_.push_back(ParamSlot{std::move(name), kind, t});
  return t;
}

bool ParamStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

Tensor4 ParamStore::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw UsageError(str_cat("unknown parameter slot '", name, "'"));
  }
  return slots_[it->second].tensor;
}

int64_t ParamStore::weight_census(std::string_view prefix) const {
  int64_t total = 0;
  for (const auto& s : slots_) {
    if (s.kind == ParamKind::conv_weight && s.name.starts_with(prefix)) {
      total += s.tensor.numel();
    }
  }
  return total;
}

int64_t ParamStore::learnable_census(std::string_view prefix) const {
  int64_t total = 0;
  for (const auto& s : slots_) {
    if (s.learnable() && s.name.starts_with(prefix)) total += s.tensor.numel();
  }
  return total;
}

void ParamStore::init_kaiming(uint64_t seed) {
  for (auto& s : slots_) {
    auto v = s.tensor.values_mut();
    switch (s.kind) {
      case ParamKind::conv_weight: {
        Rng rng(mix_seed(seed, fnv1a64(s.name)));
        const Shape4& sh = s.tensor.shape();
        const real std_dev =
            std::sqrt(real(2) / static_cast<real>(sh.c * sh.h * sh.w));
        for (auto& x : v) x = static_cast<real>(rng.normal()) * std_dev;
        break;
      }
      case ParamKind::norm_scale:
        for (auto& x : v) x = real(1);
        break;
      case ParamKind::conv_bias:
      case ParamKind::norm_shift:
        for (auto& x : v) x = real(0);
        break;
      case ParamKind::running_stat:
        break;
    }
  }
}

void ParamStore::zero_grads() {
  for (auto& s : slots_) {
    if (s.learnable()) s.tensor.zero_grad();
  }
}

namespace {

constexpr char kMagic[4] = {'R', 'C', 'A', 'L'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

struct Reader {
  std::ifstream in;
  std::string path;
  uint64_t offset = 0;

  void read(void* dst, size_t bytes, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes) {
      throw IoError(str_cat("checkpoint '", path, "': truncated while reading ", what,
                            " at byte offset ", offset));
    }
    offset += bytes;
  }

  uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  }

  uint64_t u64(const char* what) {
    unsigned char b[8];
    read(b, 8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::string str(uint32_t len, const char* what) {
    std::string s(len, '\0');
    if (len) read(s.data(), len, what);
    return s;
  }
};

Reader open_reader(const std::string& path) {
  Reader r;
  r.path = path;
  r.in.open(path, std::ios::binary);
  if (!r.in) throw IoError(str_cat("checkpoint '", path, "': cannot open for reading"));
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(str_cat("checkpoint '", path, "': bad magic at byte offset 0"));
  }
  return r;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     uint64_t config_digest, std::string_view config_text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(str_cat("checkpoint '", path, "': cannot open for writing"));
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, config_digest);
  put_u32(out, static_cast<uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  put_u32(out, static_cast<uint32_t>(store.slots().size()));
  for (const auto& s : store.slots()) {
    put_u32(out, static_cast<uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put_u32(out, static_cast<uint32_t>(s.kind));
    const Shape4& sh = s.tensor.shape();
    put_u64(out, static_cast<uint64_t>(sh.n));
    put_u64(out, static_cast<uint64_t>(sh.c));
    put_u64(out, static_cast<uint64_t>(sh.h));
    put_u64(out, static_cast<uint64_t>(sh.w));
    for (real v : s.tensor.values()) put_f64(out, static_cast<double>(v));
  }
  if (!out) throw IoError(str_cat("checkpoint '", path, "': write failed"));
}

CheckpointInfo read_checkpoint_header(const std::string& path) {
  Reader r = open_reader(path);
  CheckpointInfo info;
  info.version = r.u32("version");
  if (info.version != kVersion) {
    throw IoError(str_cat("checkpoint '", path, "': unsupported version ", info.version));
  }
  info.config_digest = r.u64("config digest");
  const uint32_t len = r.u32("config length");
  info.config_text = r.str(len, "config text");
  return info;
}

void load_checkpoint(const std::string& path, ParamStore& store,
                     uint64_t expected_digest) {
  Reader r = open_reader(path);
  const uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw IoError(str_cat("checkpoint '", path, "': unsupported version ", version));
  }
  const uint64_t digest = r.u64("config digest");
  if (digest != expected_digest) {
    throw ConfigError(str_cat("checkpoint '", path, "' was written for config digest ",
                              digest, " but the current model digest is ",
                              expected_digest));
  }
  const uint32_t text_len = r.u32("config length");
  r.str(text_len, "config text");
  const uint32_t count = r.u32("slot count");
  if (count != store.slots().size()) {
    throw ConfigError(str_cat("checkpoint '", path, "' holds ", count,
                              " slots but the model declares ", store.slots().size()));
  }
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32("slot name length");
    const std::string name = r.str(name_len, "slot name");
    const uint32_t kind = r.u32("slot kind");
    Shape4 sh;
    sh.n = static_cast<int64_t>(r.u64("slot shape"));
    sh.c = static_cast<int64_t>(r.u64("slot shape"));
    sh.h = static_cast<int64_t>(r.u64("slot shape"));
    sh.w = static_cast<int64_t>(r.u64("slot shape"));
    if (!store.contains(name)) {
      throw ConfigError(str_cat("checkpoint '", path, "' slot '", name,
                                "' does not exist in the model"));
    }
    Tensor4 t = store.at(name);
    if (!(t.shape() == sh)) {
      throw ConfigError(str_cat("checkpoint '", path, "' slot '", name, "' has shape ",
                                to_string(sh), " but the model expects ",
                                to_string(t.shape())));
    }
    (void)kind;
    auto v = t.values_mut();
    for (auto& x : v) x = static_cast<real>(r.f64("slot data"));
  }
}

}  // namespace recal
