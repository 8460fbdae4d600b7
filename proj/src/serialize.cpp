#include "stc/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace stc::io {

void ByteWriter::u16(uint16_t v) {
  buf_.push_back(v & 0xff);
  buf_.push_back(v >> 8);
}

void ByteWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
}

void ByteWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
}

void ByteWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

void ByteWriter::bytes(const void* data, size_t n) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void ByteReader::need(size_t n) {
  if (size_ - pos_ < n)
    throw FormatError(FormatError::Kind::Truncated,
                      strfmt("truncated: need %zu bytes at offset %zu, have %zu", n, pos_,
                             size_ - pos_));
}

uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

uint16_t ByteReader::u16() {
  need(2);
  uint16_t v = static_cast<uint16_t>(data_[pos_]) | static_cast<uint16_t>(data_[pos_ + 1]) << 8;
  pos_ += 2;
  return v;
}

uint32_t ByteReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t ByteReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::bytes(void* out, size_t n) {
  need(n);
  std::memcpy(out, data_ + pos_, n);
  pos_ += n;
}

std::string ByteReader::str(size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.str("STCT");
  w.u8(static_cast<uint8_t>(t.shape().rank()));
  for (int i = 0; i < t.shape().rank(); ++i) {
    int64_t d = t.shape()[i];
    if (d > 0xffffffffLL)
      throw FormatError(FormatError::Kind::DimOverflow,
                        strfmt("tensor dim %lld exceeds u32", (long long)d));
    w.u32(static_cast<uint32_t>(d));
  }
  for (double v : t.data()) w.f64(v);
}

Tensor read_tensor(ByteReader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "STCT", 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "bad tensor magic, expected STCT");
  int rank = r.u8();
  if (rank < 1 || rank > Shape::kMaxRank)
    throw FormatError(FormatError::Kind::Invalid, strfmt("tensor rank %d outside 1..%d",
                                                         rank, Shape::kMaxRank));
  int64_t dims[Shape::kMaxRank];
  int64_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    dims[i] = r.u32();
    if (dims[i] < 1)
      throw FormatError(FormatError::Kind::Invalid, "tensor dim must be >= 1");
    numel *= dims[i];
  }
  if (static_cast<uint64_t>(numel) * 8 > r.remaining())
    throw FormatError(FormatError::Kind::Truncated,
                      strfmt("tensor payload of %lld doubles exceeds remaining bytes",
                             (long long)numel));
  std::vector<double> data(numel);
  for (auto& v : data) v = r.f64();
  Shape shape;
  switch (rank) {
    case 1: shape = Shape{dims[0]}; break;
    case 2: shape = Shape{dims[0], dims[1]}; break;
    case 3: shape = Shape{dims[0], dims[1], dims[2]}; break;
    case 4: shape = Shape{dims[0], dims[1], dims[2], dims[3]}; break;
    default: shape = Shape{dims[0], dims[1], dims[2], dims[3], dims[4]}; break;
  }
  return Tensor(shape, std::move(data));
}

void write_named_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffffffffULL)
    throw FormatError(FormatError::Kind::DimOverflow, "record name exceeds u32 length");
  w.u32(static_cast<uint32_t>(name.size()));
  w.str(name);
  write_tensor(w, t);
}

std::pair<std::string, Tensor> read_named_tensor(ByteReader& r) {
  uint32_t len = r.u32();
  std::string name = r.str(len);
  return {std::move(name), read_tensor(r)};
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeError(strfmt("cannot open file: %s", path.string().c_str()));
  f.seekg(0, std::ios::end);
  std::vector<uint8_t> buf(static_cast<size_t>(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw RuntimeError(strfmt("failed reading file: %s", path.string().c_str()));
  return buf;
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeError(strfmt("cannot write file: %s", path.string().c_str()));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw RuntimeError(strfmt("failed writing file: %s", path.string().c_str()));
}

}  // namespace stc::io
