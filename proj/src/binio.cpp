#include "icr/binio.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace icr {

namespace {

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    std::memcpy(&v, buf, sizeof(T));
  }
  return v;
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void BinWriter::u32(std::uint32_t v) {
  v = to_le(v);
  out_.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void BinWriter::u64(std::uint64_t v) {
  v = to_le(v);
  out_.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void BinWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void BinWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinWriter::bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

void BinWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void BinWriter::f64s(std::span<const double> v) {
  for (double x : v) f64(x);
}

void BinWriter::f32s(std::span<const float> v) {
  for (float x : v) f32(x);
}

void BinReader::read(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("unexpected end of file");
}

std::uint32_t BinReader::u32() {
  std::uint32_t v;
  read(&v, sizeof(v));
  return to_le(v);
}

std::uint64_t BinReader::u64() {
  std::uint64_t v;
  read(&v, sizeof(v));
  return to_le(v);
}

float BinReader::f32() { return std::bit_cast<float>(u32()); }
double BinReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  if (n) read(s.data(), n);
  return s;
}

std::string BinReader::str() { return bytes(u32()); }

void BinReader::f64s(std::span<double> out) {
  for (double& x : out) x = f64();
}

void BinReader::f32s(std::span<float> out) {
  for (float& x : out) x = f32();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

}  // namespace icr
