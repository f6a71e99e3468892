#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "a2j/data_synth.hpp"

namespace a2j {

namespace {

constexpr char kMagic[4] = {'A', '2', 'J', 'D'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(char(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t begin, std::size_t end, std::string context)
      : data_(data), pos_(begin), end_(end), context_(std::move(context)) {}

  std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  const char* take(std::size_t n) {
    if (end_ - pos_ < n) throw IoError(context_ + ": truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  const std::string& data_;
  std::size_t pos_;
  std::size_t end_;
  std::string context_;
};

void encode_record(Writer& w, const SampleRecord& r, const Dataset& d, std::size_t index) {
  const std::size_t pixels = 3 * d.image_size * d.image_size;
  if (r.image_size != d.image_size || r.image.size() != pixels) {
    throw IoError("record " + std::to_string(index) + ": image size does not match the dataset");
  }
  if (r.targets.size() != d.joint_count) {
    throw IoError("record " + std::to_string(index) + ": joint count does not match the dataset");
  }
  w.u64(r.seed);
  w.u8(r.overlap ? 1 : 0);
  w.u8(r.hand_count);
  w.u32(std::uint32_t(r.targets.hand_roots.size()));
  for (std::size_t root : r.targets.hand_roots) w.u32(std::uint32_t(root));
  for (float v : r.image) {
    const long q = std::lround(double(v) * 255.0);
    w.u8(std::uint8_t(std::clamp(q, 0L, 255L)));
  }
  for (const auto& j : r.targets.joints) {
    w.f32(float(j.x));
    w.f32(float(j.y));
    w.f32(float(j.depth));
    w.u8(j.valid ? 1 : 0);
  }
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kDatasetVersion);
  w.u64(d.records.size());
  w.u32(std::uint32_t(d.image_size));
  w.u32(std::uint32_t(d.joint_count));
  w.u32(std::uint32_t(d.joints_per_hand));
  w.f64(d.mm_per_pixel);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    Writer rec;
    encode_record(rec, d.records[i], d, i);
    w.u64(rec.buffer().size());
    w.bytes(rec.buffer().data(), rec.buffer().size());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), std::streamsize(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader header(data, 0, data.size(), path.string() + ": header");
  if (std::memcmp(header.take(4), kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a dataset file (bad magic)");
  }
  const std::uint32_t version = header.u32();
  if (version != kDatasetVersion) {
    throw IoError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  Dataset d;
  const std::uint64_t count = header.u64();
  d.image_size = header.u32();
  d.joint_count = header.u32();
  d.joints_per_hand = header.u32();
  d.mm_per_pixel = header.f64();
  const std::size_t pixels = 3 * d.image_size * d.image_size;

  std::size_t pos = header.pos();
  // A corrupt count must not trigger a huge allocation.
  d.records.reserve(std::size_t(std::min<std::uint64_t>(count, data.size())));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string ctx = path.string() + ": record " + std::to_string(i);
    Reader len(data, pos, data.size(), ctx);
    const std::uint64_t n = len.u64();
    if (n > len.remaining()) throw IoError(ctx + ": truncated");
    Reader r(data, len.pos(), len.pos() + std::size_t(n), ctx);
    SampleRecord rec;
    rec.image_size = d.image_size;
    rec.seed = r.u64();
    rec.overlap = r.u8() != 0;
    rec.hand_count = r.u8();
    const std::uint32_t roots = r.u32();
    if (roots > d.joint_count) throw IoError(ctx + ": bad root count");
    rec.targets.joints_per_hand = d.joints_per_hand;
    for (std::uint32_t k = 0; k < roots; ++k) rec.targets.hand_roots.push_back(r.u32());
    const char* img = r.take(pixels);
    rec.image.resize(pixels);
    for (std::size_t k = 0; k < pixels; ++k) rec.image[k] = float(std::uint8_t(img[k])) / 255.0f;
    rec.targets.joints.resize(d.joint_count);
    for (auto& j : rec.targets.joints) {
      j.x = r.f32();
      j.y = r.f32();
      j.depth = r.f32();
      j.valid = r.u8() != 0;
    }
    if (r.remaining() != 0) throw IoError(ctx + ": unexpected trailing bytes");
    pos = r.pos();
    d.records.push_back(std::move(rec));
  }
  if (pos != data.size()) throw IoError(path.string() + ": trailing data after last record");
  return d;
}

}  // namespace a2j
