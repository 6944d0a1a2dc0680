#include "lqa/qtk_format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "lqa/error.hpp"
#include "lqa/half.hpp"

namespace lqa::qtk {
namespace {

static_assert(std::endian::native == std::endian::little, "QTK/QFS I/O assumes a little-endian host");

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<uint8_t>& out) : out_(out) {}

  template <typename T>
  void Put(T value) {
    const auto* p = reinterpret_cast<const uint8_t*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }

  void PutBytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

  size_t size() const { return out_.size(); }

 private:
  std::vector<uint8_t>& out_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<uint8_t>& in, const char* truncated_message)
      : in_(in), truncated_(truncated_message) {}

  template <typename T>
  T Get() {
    Require(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void GetBytes(void* dst, size_t n) {
    Require(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void Require(size_t n) const {
    if (n > in_.size() - pos_) throw Error(ErrorCode::kFormat, truncated_);
  }

  const std::vector<uint8_t>& in_;
  const char* truncated_;
  size_t pos_ = 0;
};

std::vector<uint8_t> ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "input not found: " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

uint64_t WriteFile(const std::vector<uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
  return bytes.size();
}

uint64_t CeilDiv(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

}  // namespace

const char* ToString(DType dtype) {
  switch (dtype) {
    case DType::kFP32: return "fp32";
    case DType::kFP16: return "fp16";
    case DType::kQPacked: return "qpacked";
  }
  return "unknown";
}

uint64_t TensorRecord::numel() const {
  uint64_t n = 1;
  for (uint64_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

bool IsSupportedBits(int bits) {
  return bits == 1 || bits == 2 || bits == 3 || bits == 4 || bits == 8;
}

uint64_t GroupCount(const std::vector<uint64_t>& shape, int group_size) {
  if (group_size <= 0 || shape.empty()) return 0;
  const uint64_t cols = shape.back();
  uint64_t rows = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return rows * CeilDiv(cols, static_cast<uint64_t>(group_size));
}

uint64_t PackedCodeBytes(uint64_t count, int bits) {
  return CeilDiv(count * static_cast<uint64_t>(bits), 8);
}

uint64_t QPackedPayloadBytes(const std::vector<uint64_t>& shape, int bits, int group_size) {
  uint64_t n = 1;
  for (uint64_t d : shape) n *= d;
  return PackedCodeBytes(n, bits) + GroupCount(shape, group_size) * 4;
}

uint64_t ExpectedPayloadBytes(const TensorRecord& record) {
  switch (record.dtype) {
    case DType::kFP32: return record.numel() * 4;
    case DType::kFP16: return record.numel() * 2;
    case DType::kQPacked: return QPackedPayloadBytes(record.shape, record.bits, record.group_size);
  }
  return 0;
}

void ValidateRecord(const TensorRecord& record) {
  if (record.name.empty()) throw Error(ErrorCode::kFormat, "empty tensor name");
  if (record.name.size() > 0xffff) throw Error(ErrorCode::kFormat, "tensor name too long: " + record.name);
  if (record.shape.empty() || record.shape.size() > 0xff)
    throw Error(ErrorCode::kFormat, "bad rank for tensor " + record.name);
  for (uint64_t d : record.shape)
    if (d == 0) throw Error(ErrorCode::kFormat, "zero dimension in tensor " + record.name);
  switch (record.dtype) {
    case DType::kFP32:
    case DType::kFP16:
      break;
    case DType::kQPacked:
      if (!IsSupportedBits(record.bits))
        throw Error(ErrorCode::kInvalidArgument,
                    "unsupported bits value " + std::to_string(record.bits) + " for tensor " + record.name);
      if (record.group_size <= 0) throw Error(ErrorCode::kFormat, "bad group size for tensor " + record.name);
      break;
    default:
      throw Error(ErrorCode::kFormat, "unknown dtype for tensor " + record.name);
  }
  if (record.payload.size() != ExpectedPayloadBytes(record))
    throw Error(ErrorCode::kFormat, "payload length mismatch for tensor " + record.name);
}

std::vector<uint8_t> EncodeContainer(const std::vector<TensorRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "empty container");
  std::set<std::string> names;
  for (const auto& r : records) {
    ValidateRecord(r);
    if (!names.insert(r.name).second) throw Error(ErrorCode::kInvalidArgument, "duplicate name: " + r.name);
  }

  uint64_t table_bytes = 4 + 2 + 4;
  for (const auto& r : records) table_bytes += 2 + r.name.size() + 1 + 1 + 4 + 1 + 8 * r.shape.size() + 8 + 8;

  std::vector<uint8_t> out;
  ByteWriter w(out);
  w.PutBytes(kContainerMagic, 4);
  w.Put<uint16_t>(kContainerVersion);
  w.Put<uint32_t>(static_cast<uint32_t>(records.size()));
  uint64_t offset = table_bytes;
  for (const auto& r : records) {
    w.Put<uint16_t>(static_cast<uint16_t>(r.name.size()));
    w.PutBytes(r.name.data(), r.name.size());
    w.Put<uint8_t>(static_cast<uint8_t>(r.dtype));
    uint8_t bits = static_cast<uint8_t>(r.bits);
    if (r.dtype == DType::kQPacked && r.symmetric) bits |= kSymmetricFlag;
    w.Put<uint8_t>(bits);
    w.Put<uint32_t>(static_cast<uint32_t>(r.group_size));
    w.Put<uint8_t>(static_cast<uint8_t>(r.shape.size()));
    for (uint64_t d : r.shape) w.Put<uint64_t>(d);
    w.Put<uint64_t>(offset);
    w.Put<uint64_t>(r.payload.size());
    offset += r.payload.size();
  }
  if (w.size() != table_bytes) throw Error(ErrorCode::kInternal, "container table size mismatch");
  for (const auto& r : records) w.PutBytes(r.payload.data(), r.payload.size());
  return out;
}

std::vector<TensorRecord> DecodeContainer(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes, "truncated header");
  char magic[4];
  r.GetBytes(magic, 4);
  if (std::memcmp(magic, kContainerMagic, 4) != 0) throw Error(ErrorCode::kFormat, "bad magic");
  const auto version = r.Get<uint16_t>();
  if (version != kContainerVersion)
    throw Error(ErrorCode::kFormat, "version mismatch: " + std::to_string(version));
  const auto count = r.Get<uint32_t>();

  struct Span {
    uint64_t offset, length;
  };
  std::vector<TensorRecord> records;
  std::vector<Span> spans;
  std::set<std::string> names;
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    const auto name_len = r.Get<uint16_t>();
    rec.name.resize(name_len);
    r.GetBytes(rec.name.data(), name_len);
    const auto dtype = r.Get<uint8_t>();
    if (dtype > static_cast<uint8_t>(DType::kQPacked)) throw Error(ErrorCode::kFormat, "unknown dtype");
    rec.dtype = static_cast<DType>(dtype);
    const auto bits = r.Get<uint8_t>();
    rec.bits = bits & ~kSymmetricFlag;
    rec.symmetric = (bits & kSymmetricFlag) != 0;
    rec.group_size = static_cast<int>(r.Get<uint32_t>());
    const auto rank = r.Get<uint8_t>();
    rec.shape.resize(rank);
    for (auto& d : rec.shape) d = r.Get<uint64_t>();
    const auto offset = r.Get<uint64_t>();
    const auto length = r.Get<uint64_t>();
    if (!names.insert(rec.name).second) throw Error(ErrorCode::kFormat, "duplicate name: " + rec.name);
    spans.push_back({offset, length});
    records.push_back(std::move(rec));
  }

  uint64_t cursor = r.pos();
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& s = spans[i];
    if (s.offset < cursor) throw Error(ErrorCode::kFormat, "overlapping payload offsets");
    if (s.offset > bytes.size() || s.length > bytes.size() - s.offset)
      throw Error(ErrorCode::kFormat, "truncated payload");
    records[i].payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(s.offset),
                              bytes.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
    cursor = s.offset + s.length;
    ValidateRecord(records[i]);
  }
  return records;
}

uint64_t WriteContainer(const std::vector<TensorRecord>& records, const std::filesystem::path& path) {
  return WriteFile(EncodeContainer(records), path);
}

std::vector<TensorRecord> ReadContainer(const std::filesystem::path& path) {
  return DecodeContainer(ReadFile(path));
}

TensorRecord MakeFP32Record(std::string name, std::vector<uint64_t> shape, const std::vector<float>& values) {
  TensorRecord rec;
  rec.name = std::move(name);
  rec.dtype = DType::kFP32;
  rec.shape = std::move(shape);
  if (values.size() != rec.numel()) throw Error(ErrorCode::kMismatch, "value count does not match shape for " + rec.name);
  rec.payload.resize(values.size() * 4);
  std::memcpy(rec.payload.data(), values.data(), rec.payload.size());
  return rec;
}

std::vector<float> RecordToFloats(const TensorRecord& record) {
  const uint64_t n = record.numel();
  std::vector<float> out(n);
  if (record.dtype == DType::kFP32) {
    if (record.payload.size() != n * 4) throw Error(ErrorCode::kFormat, "payload length mismatch for " + record.name);
    std::memcpy(out.data(), record.payload.data(), n * 4);
  } else if (record.dtype == DType::kFP16) {
    if (record.payload.size() != n * 2) throw Error(ErrorCode::kFormat, "payload length mismatch for " + record.name);
    for (uint64_t i = 0; i < n; ++i) {
      uint16_t h;
      std::memcpy(&h, record.payload.data() + 2 * i, 2);
      out[i] = HalfToFloat(h);
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "tensor " + record.name + " is quantized; dequantize it instead");
  }
  return out;
}

TensorRecord ToFP16Record(const TensorRecord& record) {
  const auto values = RecordToFloats(record);
  TensorRecord out;
  out.name = record.name;
  out.dtype = DType::kFP16;
  out.shape = record.shape;
  out.payload.resize(values.size() * 2);
  for (size_t i = 0; i < values.size(); ++i) {
    const uint16_t h = FloatToHalf(values[i]);
    std::memcpy(out.payload.data() + 2 * i, &h, 2);
  }
  return out;
}

void ValidateStream(const FeatureStream& s) {
  if (s.dim == 0) throw Error(ErrorCode::kInvalidArgument, "stream dim must be positive");
  if (s.class_count == 0) throw Error(ErrorCode::kInvalidArgument, "stream class count must be positive");
  if (s.prototypes.size() != static_cast<uint64_t>(s.class_count) * s.dim)
    throw Error(ErrorCode::kMismatch, "prototype matrix size mismatch");
  if (s.features.size() != s.labels.size() * s.dim)
    throw Error(ErrorCode::kMismatch, "sample count mismatch");
  for (uint32_t label : s.labels)
    if (label >= s.class_count)
      throw Error(ErrorCode::kFormat, "label " + std::to_string(label) + " out of range for " +
                                          std::to_string(s.class_count) + " classes");
}

std::vector<uint8_t> EncodeStream(const FeatureStream& s) {
  ValidateStream(s);
  std::vector<uint8_t> out;
  out.reserve(20 + 4 * s.prototypes.size() + s.labels.size() * (4 * s.dim + 4));
  ByteWriter w(out);
  w.PutBytes(kStreamMagic, 4);
  w.Put<uint32_t>(s.dim);
  w.Put<uint32_t>(s.class_count);
  w.Put<uint64_t>(s.sample_count());
  w.PutBytes(s.prototypes.data(), 4 * s.prototypes.size());
  for (uint64_t i = 0; i < s.sample_count(); ++i) {
    w.PutBytes(s.feature(i), 4ull * s.dim);
    w.Put<uint32_t>(s.labels[i]);
  }
  return out;
}

StreamReadResult DecodeStream(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes, "truncated stream");
  char magic[4];
  r.GetBytes(magic, 4);
  if (std::memcmp(magic, kStreamMagic, 4) != 0) throw Error(ErrorCode::kFormat, "bad magic");
  StreamReadResult result;
  auto& s = result.stream;
  s.dim = r.Get<uint32_t>();
  s.class_count = r.Get<uint32_t>();
  const auto n = r.Get<uint64_t>();
  if (s.dim == 0 || s.class_count == 0) throw Error(ErrorCode::kFormat, "zero stream dimension");
  const uint64_t record_bytes = 4ull * s.dim + 4;
  const uint64_t proto_bytes = 4ull * s.dim * s.class_count;
  if (proto_bytes > r.remaining()) throw Error(ErrorCode::kFormat, "truncated stream");
  if ((r.remaining() - proto_bytes) != n * record_bytes)
    throw Error(ErrorCode::kMismatch, "sample count mismatch: header says " + std::to_string(n));

  s.prototypes.resize(static_cast<uint64_t>(s.dim) * s.class_count);
  r.GetBytes(s.prototypes.data(), proto_bytes);
  s.features.resize(n * s.dim);
  s.labels.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    r.GetBytes(s.features.data() + i * s.dim, 4ull * s.dim);
    s.labels[i] = r.Get<uint32_t>();
  }
  ValidateStream(s);

  for (uint32_t c = 0; c < s.class_count; ++c) {
    float* row = s.prototypes.data() + static_cast<uint64_t>(c) * s.dim;
    double sq = 0.0;
    for (uint32_t j = 0; j < s.dim; ++j) sq += static_cast<double>(row[j]) * row[j];
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw Error(ErrorCode::kFormat, "zero prototype row " + std::to_string(c));
    if (std::abs(norm - 1.0) > 1e-6) {
      for (uint32_t j = 0; j < s.dim; ++j) row[j] = static_cast<float>(row[j] / norm);
      result.prototypes_renormalized = true;
    }
  }
  return result;
}

uint64_t WriteStream(const FeatureStream& stream, const std::filesystem::path& path) {
  return WriteFile(EncodeStream(stream), path);
}

StreamReadResult ReadStream(const std::filesystem::path& path) { return DecodeStream(ReadFile(path)); }

}  // namespace lqa::qtk
