#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include "s3cl/config.hpp"
#include "s3cl/error.hpp"
#include "s3cl/trainer.hpp"

namespace s3cl {

// Layout (little-endian host order):
//   "S3CLCKPT" u32 version u32 reserved
//   u64 len + config JSON
//   u64 completed epochs
//   live weights, momentum weights (5 tensors each: u64 rows, u64 cols, f64 data)
//   u8 momentum_projector
//   adam: u64 step, f64 lr beta1 beta2 eps, first moments, second moments
//   u8 has_prototypes [centroids tensor, u64 n, i32 labels]
//   "END."
inline constexpr std::array<char, 8> kCheckpointMagic = {'S', '3', 'C', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void string(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    bytes(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void weights(const Weights& w) {
    for (const Matrix* t : w.tensors()) matrix(*t);
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  template <typename T>
  T pod() {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(name_ + ": truncated file");
  }
  std::string string() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 26)) throw FormatError(name_ + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Matrix matrix() {
    const auto rows = pod<std::uint64_t>();
    const auto cols = pod<std::uint64_t>();
    if (rows > (1u << 30) || cols > (1u << 30) || rows * cols > (1ull << 34)) {
      throw FormatError(name_ + ": implausible tensor shape");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    bytes(reinterpret_cast<char*>(m.data()), sizeof(double) * rows * cols);
    return m;
  }
  Weights weights() {
    Weights w;
    for (Matrix* t : w.tensors()) *t = matrix();
    return w;
  }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const TrainConfig& cfg, const TrainState& s) {
  detail::BinaryWriter w(out);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(0);
  w.string(to_json(cfg).dump());
  w.pod<std::uint64_t>(s.epoch);
  w.weights(s.params.live);
  w.weights(s.params.momentum);
  w.pod<std::uint8_t>(s.params.momentum_projector ? 1 : 0);
  w.pod<std::uint64_t>(s.adam.step);
  w.pod<double>(s.adam.lr);
  w.pod<double>(s.adam.beta1);
  w.pod<double>(s.adam.beta2);
  w.pod<double>(s.adam.eps);
  w.weights(s.adam.first);
  w.weights(s.adam.second);
  w.pod<std::uint8_t>(s.prototypes ? 1 : 0);
  if (s.prototypes) {
    w.matrix(s.prototypes->centroids);
    w.pod<std::uint64_t>(s.prototypes->labels.size());
    for (int z : s.prototypes->labels) w.pod<std::int32_t>(z);
  }
  w.bytes("END.", 4);
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& name = "checkpoint") {
  detail::BinaryReader r(in, name);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw FormatError(name + ": not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(name + ": unsupported checkpoint version " + std::to_string(version));
  }
  r.pod<std::uint32_t>();
  Checkpoint c;
  try {
    c.config = config_from_json(nlohmann::json::parse(r.string()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": corrupt config block: " + e.what());
  }
  c.state.epoch = r.pod<std::uint64_t>();
  c.state.params.live = r.weights();
  c.state.params.momentum = r.weights();
  c.state.params.momentum_projector = r.pod<std::uint8_t>() != 0;
  c.state.adam.step = r.pod<std::uint64_t>();
  c.state.adam.lr = r.pod<double>();
  c.state.adam.beta1 = r.pod<double>();
  c.state.adam.beta2 = r.pod<double>();
  c.state.adam.eps = r.pod<double>();
  c.state.adam.first = r.weights();
  c.state.adam.second = r.weights();
  if (r.pod<std::uint8_t>() != 0) {
    PrototypeState p;
    p.centroids = r.matrix();
    const auto n = r.pod<std::uint64_t>();
    if (n > (1u << 30)) throw FormatError(name + ": implausible label count");
    p.labels.resize(n);
    for (auto& z : p.labels) z = r.pod<std::int32_t>();
    c.state.prototypes = std::move(p);
  }
  std::array<char, 4> tail{};
  r.bytes(tail.data(), tail.size());
  if (std::memcmp(tail.data(), "END.", 4) != 0) throw FormatError(name + ": missing end marker");
  if (!c.state.params.live.same_shape(c.state.adam.first) ||
      !c.state.params.live.same_shape(c.state.adam.second)) {
    throw FormatError(name + ": optimizer state does not match parameter shapes");
  }
  return c;
}

/// Writes to `path` atomically (temporary file, then rename).
inline void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                            const TrainState& s) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    write_checkpoint(out, cfg, s);
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace s3cl
