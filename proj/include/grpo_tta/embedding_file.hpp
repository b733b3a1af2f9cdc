#pragma once

// GTEB1 embedding container.
//
// Layout (all little-endian):
//   offset  0  char[5]  magic "GTEB1"
//   offset  5  u32      dim D
//   offset  9  u32      num_classes C
//   offset 13  u32      num_samples N
//   offset 17  u32      views_per_sample n (0 = originals only)
//   offset 21  f64      tau
//   offset 29  u8       has_labels (0 or 1)
//   offset 30  f32[C*D] text embeddings
//   then N records of: f32[D] original, f32[n*D] views, [u32 label]

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpo_tta/numerics.hpp"
#include "grpo_tta/pipeline.hpp"
#include "grpo_tta/policy.hpp"

namespace grpo_tta {

inline constexpr std::array<char, 5> kEmbeddingMagic = {'G', 'T', 'E', 'B', '1'};
inline constexpr std::size_t kEmbeddingHeaderBytes = 30;

class FormatError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kDimension, kInvalidValue, kTrailingBytes };

  FormatError(Kind kind, std::uint64_t offset, const std::string& message)
      : std::runtime_error(message + " (at byte offset " + std::to_string(offset) + ")"),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const { return kind_; }
  std::uint64_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

struct EmbeddingFile {
  EmbeddingTable table;
  Dataset data;
};

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  auto bits = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.insert(out.end(), bits.begin(), bits.end());
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::array<std::uint8_t, sizeof(T)> bits;
  std::memcpy(bits.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

inline void put_vec(std::vector<std::uint8_t>& out, const Vec64& v) {
  for (double x : v) put_le(out, static_cast<float>(x));
}

/// Multiplies with overflow detection.
inline bool mul_ok(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  return !__builtin_mul_overflow(a, b, &out);
}

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }

  template <typename T>
  T read() {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw FormatError(FormatError::Kind::kTruncated, pos_,
                        "truncated file: expected " + std::to_string(pos_ + sizeof(T)) +
                            " bytes, got " + std::to_string(bytes_.size()));
    }
    T v = get_le<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }

  Vec64 read_vec(std::size_t dim) {
    std::vector<double> out(dim);
    for (double& x : out) {
      const float f = read<float>();
      if (!std::isfinite(f)) {
        throw FormatError(FormatError::Kind::kInvalidValue, pos_ - sizeof(float),
                          "non-finite embedding value");
      }
      x = f;
    }
    return Vec64(std::move(out));
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::uint64_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFile& file) {
  const auto& table = file.table;
  const auto& data = file.data;
  const std::size_t d = table.dim();
  const std::size_t n_views = data.samples.empty() ? 0 : data.samples.front().views.size();
  check_dimensions(data, table);
  for (const auto& s : data.samples) {
    if (s.views.size() != n_views) {
      throw std::invalid_argument("encode_embedding_file: samples have differing view counts");
    }
  }
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  detail::put_le(out, static_cast<std::uint32_t>(d));
  detail::put_le(out, static_cast<std::uint32_t>(table.num_classes()));
  detail::put_le(out, static_cast<std::uint32_t>(data.size()));
  detail::put_le(out, static_cast<std::uint32_t>(n_views));
  detail::put_le(out, table.temperature());
  detail::put_le(out, static_cast<std::uint8_t>(data.labels ? 1 : 0));
  for (const auto& t : table.texts()) detail::put_vec(out, t);
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::put_vec(out, data.samples[i].original);
    for (const auto& v : data.samples[i].views) detail::put_vec(out, v);
    if (data.labels) detail::put_le(out, static_cast<std::uint32_t>((*data.labels)[i]));
  }
  return out;
}

inline EmbeddingFile decode_embedding_file(const std::vector<std::uint8_t>& bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < kEmbeddingMagic.size() ||
      std::memcmp(bytes.data(), kEmbeddingMagic.data(), kEmbeddingMagic.size()) != 0) {
    throw FormatError(Kind::kBadMagic, 0, "bad magic, expected \"GTEB1\"");
  }
  detail::Cursor cur(bytes);
  for (std::size_t i = 0; i < kEmbeddingMagic.size(); ++i) cur.read<std::uint8_t>();

  auto read_count = [&](const char* name, bool allow_zero) {
    const std::uint64_t at = cur.offset();
    const auto v = cur.read<std::uint32_t>();
    if (v == 0 && !allow_zero) {
      throw FormatError(Kind::kDimension, at, std::string(name) + " must be at least 1");
    }
    return static_cast<std::uint64_t>(v);
  };
  const std::uint64_t dim = read_count("dim", false);
  const std::uint64_t classes = read_count("num_classes", false);
  const std::uint64_t samples = read_count("num_samples", false);
  const std::uint64_t views = read_count("views_per_sample", true);
  const std::uint64_t tau_at = cur.offset();
  const double tau = cur.read<double>();
  if (!std::isfinite(tau) || !(tau > 0.0)) {
    throw FormatError(Kind::kInvalidValue, tau_at, "tau must be positive and finite");
  }
  const std::uint64_t flag_at = cur.offset();
  const auto has_labels = cur.read<std::uint8_t>();
  if (has_labels > 1) throw FormatError(Kind::kInvalidValue, flag_at, "has_labels must be 0 or 1");
  if (classes < 2) throw FormatError(Kind::kDimension, 9, "num_classes must be at least 2");

  // Expected payload size, with every product checked for overflow.
  std::uint64_t text_bytes = 0, record_floats = 0, record_bytes = 0, body = 0;
  bool ok = detail::mul_ok(classes, dim, text_bytes) && detail::mul_ok(text_bytes, 4, text_bytes) &&
            detail::mul_ok(views + 1, dim, record_floats) &&
            detail::mul_ok(record_floats, 4, record_bytes);
  record_bytes += has_labels ? 4 : 0;
  ok = ok && detail::mul_ok(record_bytes, samples, body);
  std::uint64_t expected = 0;
  ok = ok && !__builtin_add_overflow(kEmbeddingHeaderBytes + text_bytes, body, &expected);
  if (!ok) {
    throw FormatError(Kind::kDimension, 5, "header dimensions overflow");
  }
  if (bytes.size() < expected) {
    throw FormatError(Kind::kTruncated, bytes.size(),
                      "truncated file: expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError(Kind::kTrailingBytes, expected,
                      "file has " + std::to_string(bytes.size() - expected) +
                          " bytes beyond the declared payload");
  }

  std::vector<Vec64> texts;
  texts.reserve(classes);
  for (std::uint64_t c = 0; c < classes; ++c) {
    const std::uint64_t at = cur.offset();
    Vec64 t = cur.read_vec(dim);
    const double n = norm(t.span());
    if (std::abs(n - 1.0) > 1e-4) {
      throw FormatError(Kind::kInvalidValue, at,
                        "text embedding " + std::to_string(c) + " is not unit norm");
    }
    for (std::size_t r = 0; r < t.size(); ++r) t[r] /= n;
    texts.push_back(std::move(t));
  }

  Dataset data;
  data.samples.reserve(samples);
  if (has_labels) data.labels.emplace();
  for (std::uint64_t i = 0; i < samples; ++i) {
    SampleViews s{cur.read_vec(dim), {}};
    s.views.reserve(views);
    for (std::uint64_t v = 0; v < views; ++v) s.views.push_back(cur.read_vec(dim));
    if (has_labels) {
      const std::uint64_t at = cur.offset();
      const auto label = cur.read<std::uint32_t>();
      if (label >= classes) {
        throw FormatError(Kind::kInvalidValue, at,
                          "label " + std::to_string(label) + " out of range for " +
                              std::to_string(classes) + " classes");
      }
      data.labels->push_back(label);
    }
    data.samples.push_back(std::move(s));
  }
  return EmbeddingFile{EmbeddingTable::with_default_names(std::move(texts), tau), std::move(data)};
}

inline EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_embedding_file(bytes);
}

/// Writes to a sibling temporary and renames it into place.
inline void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file) {
  const std::vector<std::uint8_t> bytes = encode_embedding_file(file);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatError::Kind::kIo, 0, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace grpo_tta
