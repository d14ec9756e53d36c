#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icr {

// 64-bit FNV-1a. Used for token bucketing and artifact fingerprints, so the
// constants are part of the on-disk contract.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t seed = kFnvOffset) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string hex64(std::uint64_t v);

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Little-endian writer; all multi-byte values are emitted LE regardless of
/// host order.
class BinWriter {
 public:
  explicit BinWriter(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s);
  void str(std::string_view s);  // u32 length prefix
  void f64s(std::span<const double> v);
  void f32s(std::span<const float> v);

 private:
  std::ostream& out_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& in) : in_(in) {}

  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  std::string str();
  void f64s(std::span<double> out);
  void f32s(std::span<float> out);

 private:
  void read(void* dst, std::size_t n);
  std::istream& in_;
};

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace icr
