#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stc/common.hpp"
#include "stc/tensor.hpp"

namespace stc::io {

class FormatError : public RuntimeError {
 public:
  enum class Kind { BadMagic, Truncated, DimOverflow, Invalid };
  FormatError(Kind kind, const std::string& msg) : RuntimeError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Little-endian byte stream helpers shared by all container formats.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, size_t n);
  void str(const std::string& s) { bytes(s.data(), s.size()); }
  const std::vector<uint8_t>& buffer() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  explicit ByteReader(const std::vector<uint8_t>& buf) : ByteReader(buf.data(), buf.size()) {}

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  void bytes(void* out, size_t n);
  std::string str(size_t n);
  size_t remaining() const { return size_ - pos_; }
  bool done() const { return pos_ == size_; }

 private:
  void need(size_t n);
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

// Tensor record: magic "STCT", u8 rank, rank x u32 LE dims, f64 LE payload.
void write_tensor(ByteWriter& w, const Tensor& t);
Tensor read_tensor(ByteReader& r);

// Named record: u32 name length, UTF-8 name, tensor record.
void write_named_tensor(ByteWriter& w, const std::string& name, const Tensor& t);
std::pair<std::string, Tensor> read_named_tensor(ByteReader& r);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace stc::io
