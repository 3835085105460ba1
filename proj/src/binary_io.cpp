#include "voxsync/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "voxsync/error.hpp"

namespace voxsync {

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
}

void ByteReader::header(std::string_view magic, std::uint32_t version) {
  need(magic.size());
  if (std::string_view(reinterpret_cast<const char*>(bytes_.data()) + pos_, magic.size()) != magic) {
    throw FormatError(what_ + ": bad magic, expected " + std::string(magic));
  }
  pos_ += magic.size();
  const std::uint32_t v = u32();
  if (v != version) {
    throw FormatError(what_ + ": unsupported version " + std::to_string(v) + " (reader is " +
                      std::to_string(version) + ")");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() { return get<std::uint32_t>(); }
std::uint64_t ByteReader::u64() { return get<std::uint64_t>(); }

float ByteReader::f32() {
  const std::uint32_t b = u32();
  float v;
  std::memcpy(&v, &b, 4);
  return v;
}

double ByteReader::f64() {
  const std::uint64_t b = u64();
  double v;
  std::memcpy(&v, &b, 8);
  return v;
}

std::string ByteReader::string() {
  const std::size_t n = count(1);
  std::string s(reinterpret_cast<const char*>(bytes_.data()) + pos_, n);
  pos_ += n;
  return s;
}

std::size_t ByteReader::count(std::size_t min_bytes_each) {
  const std::uint32_t n = u32();
  if (min_bytes_each > 0 && n > (bytes_.size() - pos_) / min_bytes_each) {
    throw FormatError(what_ + ": count " + std::to_string(n) + " exceeds remaining data");
  }
  return n;
}

void ByteReader::finish() const {
  if (pos_ != bytes_.size()) throw FormatError(what_ + ": trailing bytes after payload");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace voxsync
