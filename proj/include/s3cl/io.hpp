#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/matrix.hpp"
#include "s3cl/semantic.hpp"

namespace s3cl {

namespace detail {

// Shortest decimal that round-trips to the same double.
inline std::string format_real(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::ofstream open_output(const std::filesystem::path& path,
                                 std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline void write_rows(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      out << format_real(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace detail

/// `N<TAB>D` header followed by N tab-separated rows. Readable by
/// read_dense_matrix, so embeddings and features share one format.
inline void write_dense_matrix(const std::filesystem::path& path, const Matrix& m) {
  auto out = detail::open_output(path);
  out << m.rows() << '\t' << m.cols() << '\n';
  detail::write_rows(out, m);
  if (!out) throw DataError("write failed for " + path.string());
}

inline void write_edges(const std::filesystem::path& path, std::span<const Edge> edges) {
  auto out = detail::open_output(path);
  for (auto [a, b] : edges) out << a << '\t' << b << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

inline void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
  auto out = detail::open_output(path);
  for (int y : labels) out << y << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

// Binary embeddings: 16-byte header ("S3CLEMB1", u32 version, u32 reserved),
// u64 rows, u64 cols, then row-major f64 values.
inline constexpr std::array<char, 8> kEmbeddingMagic = {'S', '3', 'C', 'L', 'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void write_embedding_binary(const std::filesystem::path& path, const Matrix& m) {
  auto out = detail::open_output(path, std::ios::binary);
  out.write(kEmbeddingMagic.data(), kEmbeddingMagic.size());
  const std::uint32_t header[2] = {kEmbeddingVersion, 0};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()),
                                 static_cast<std::uint64_t>(m.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!out) throw DataError("write failed for " + path.string());
}

inline Matrix read_embedding_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 8> magic{};
  std::uint32_t header[2] = {0, 0};
  std::uint64_t dims[2] = {0, 0};
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw FormatError(path.string() + ": truncated embedding header");
  if (magic != kEmbeddingMagic) throw FormatError(path.string() + ": bad embedding magic");
  if (header[0] != kEmbeddingVersion) throw FormatError(path.string() + ": unsupported version");
  if (dims[0] > (1u << 30) || dims[1] > (1u << 30)) throw FormatError(path.string() + ": bad shape");
  Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  const auto bytes = static_cast<std::streamsize>(sizeof(double) * dims[0] * dims[1]);
  in.read(reinterpret_cast<char*>(m.data()), bytes);
  if (in.gcount() != bytes) throw FormatError(path.string() + ": truncated embedding data");
  return m;
}

/// Loads embeddings in either the text or the binary layout.
inline Matrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("cannot open " + path.string());
  std::array<char, 8> magic{};
  probe.read(magic.data(), magic.size());
  if (probe.gcount() == 8 && magic == kEmbeddingMagic) return read_embedding_binary(path);
  return read_dense_matrix(path);
}

/// Prototype dump: `K<TAB>D`, K centroid rows, then `N`, then N labels.
inline void write_prototypes(const std::filesystem::path& path, const PrototypeState& s) {
  auto out = detail::open_output(path);
  out << s.centroids.rows() << '\t' << s.centroids.cols() << '\n';
  detail::write_rows(out, s.centroids);
  out << s.labels.size() << '\n';
  for (int z : s.labels) out << z << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

inline PrototypeState read_prototypes(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    while (std::getline(in, line)) {
      ++lineno;
      if (!detail::blank_or_comment(line)) return detail::split_fields(line);
    }
    throw ParseError(file, lineno, "unexpected end of file");
  };
  std::size_t k = 0, d = 0, n = 0;
  auto head = next();
  if (head.size() != 2 || !detail::parse_uint(head[0], k) || !detail::parse_uint(head[1], d)) {
    throw ParseError(file, lineno, "expected 'K<TAB>D'");
  }
  PrototypeState s;
  s.centroids.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < k; ++r) {
    auto f = next();
    if (f.size() != d) throw ParseError(file, lineno, "wrong number of prototype values");
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      if (!detail::parse_real(f[c], v)) throw ParseError(file, lineno, "malformed real");
      s.centroids(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  auto count = next();
  if (count.size() != 1 || !detail::parse_uint(count[0], n)) {
    throw ParseError(file, lineno, "expected node count");
  }
  s.labels.resize(n);
  for (auto& z : s.labels) {
    auto f = next();
    if (f.size() != 1 || !detail::parse_uint(f[0], z) || static_cast<std::size_t>(z) >= k) {
      throw ParseError(file, lineno, "expected a pseudo-label in [0, K)");
    }
  }
  return s;
}

}  // namespace s3cl
