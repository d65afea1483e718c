#include "featsharp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "featsharp/upsampler.hpp"

namespace featsharp {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'K', 'P'};

template <typename T>
void write_le(std::ostream& os, T v) {
  // Grids are IEEE doubles and the build targets little-endian hosts; raw
  // byte writes match the declared on-disk layout.
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

const Grid* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, g] : tensors) {
    if (n == name) return &g;
  }
  return nullptr;
}

Checkpoint Checkpoint::from_model(const UpsamplerModel& model,
                                  uint64_t step_count) {
  Checkpoint ck;
  ck.step = step_count;
  ck.config_digest = model.config().digest();
  for (const Parameter& p : model.params().all()) {
    ck.tensors.emplace_back(p.name, p.var.value());
  }
  const DistributionStats& s = model.stats();
  int c = s.channels();
  Grid mean(1, 1, c);
  for (int k = 0; k < c; ++k) mean.at(0, 0, k) = s.mean[k];
  ck.tensors.emplace_back("phi_s.mean", std::move(mean));
  ck.tensors.emplace_back("phi_s.rotation", s.rotation);
  ck.tensors.emplace_back("phi_s.scale", Grid::scalar(s.scale));
  return ck;
}

void Checkpoint::apply_to(UpsamplerModel& model) const {
  for (Parameter& p : model.params().all()) {
    const Grid* g = find(p.name);
    if (!g) {
      throw std::runtime_error("checkpoint: missing tensor " + p.name);
    }
    if (!g->same_shape(p.var.value())) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    }
    p.var.set_value(*g);
  }
  const Grid* mean = find("phi_s.mean");
  const Grid* rot = find("phi_s.rotation");
  const Grid* sc = find("phi_s.scale");
  if (!mean || !rot || !sc) {
    throw std::runtime_error("checkpoint: missing phi_s statistics");
  }
  DistributionStats s;
  s.mean.assign(mean->raw().begin(), mean->raw().end());
  s.rotation = *rot;
  s.scale = sc->scalar_value();
  model.set_stats(std::move(s));
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  write_le<uint32_t>(os, version);
  write_le<uint64_t>(os, step);
  write_le<uint64_t>(os, config_digest);
  write_le<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, g] : tensors) {
    write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<uint32_t>(os, static_cast<uint32_t>(g.height()));
    write_le<uint32_t>(os, static_cast<uint32_t>(g.width()));
    write_le<uint32_t>(os, static_cast<uint32_t>(g.channels()));
    os.write(reinterpret_cast<const char*>(g.data()),
             static_cast<std::streamsize>(g.size() * sizeof(Real)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic bytes");
  }
  Checkpoint ck;
  ck.version = read_le<uint32_t>(is);
  if (ck.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: version mismatch");
  }
  ck.step = read_le<uint64_t>(is);
  ck.config_digest = read_le<uint64_t>(is);
  uint32_t count = read_le<uint32_t>(is);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_le<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t h = read_le<uint32_t>(is);
    uint32_t w = read_le<uint32_t>(is);
    uint32_t c = read_le<uint32_t>(is);
    Grid g(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    is.read(reinterpret_cast<char*>(g.data()),
            static_cast<std::streamsize>(g.size() * sizeof(Real)));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    ck.tensors.emplace_back(std::move(name), std::move(g));
  }
  return ck;
}

}  // namespace featsharp
