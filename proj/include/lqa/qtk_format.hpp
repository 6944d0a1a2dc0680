#pragma once

// Binary containers:
//   QTK - named weight tensors (fp32, fp16 or bit-packed quantized codes).
//   QFS - feature streams: class prototypes plus labelled feature records.
// Both are little-endian. The exact layouts are documented in README.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lqa::qtk {

inline constexpr char kContainerMagic[4] = {'Q', 'T', 'K', '1'};
inline constexpr char kStreamMagic[4] = {'Q', 'F', 'S', '1'};
inline constexpr uint16_t kContainerVersion = 1;

enum class DType : uint8_t { kFP32 = 0, kFP16 = 1, kQPacked = 2 };

const char* ToString(DType dtype);

// On disk the bits byte carries the code width in its low 7 bits; bit 7 marks
// a symmetric tensor whose codes are stored with a +q_max offset.
inline constexpr uint8_t kSymmetricFlag = 0x80;

struct TensorRecord {
  std::string name;
  DType dtype = DType::kFP32;
  int bits = 0;          // QPACKED only
  int group_size = 0;    // QPACKED only
  bool symmetric = false;  // QPACKED only
  std::vector<uint64_t> shape;
  std::vector<uint8_t> payload;

  uint64_t numel() const;

  bool operator==(const TensorRecord&) const = default;
};

bool IsSupportedBits(int bits);

// Number of quantization groups for a tensor: rows * ceil(cols / group) for
// rank 2, ceil(n / group) for rank 1.
uint64_t GroupCount(const std::vector<uint64_t>& shape, int group_size);

uint64_t PackedCodeBytes(uint64_t count, int bits);

// Packed code bytes plus one fp16 scale and one fp16 zero-point per group.
uint64_t QPackedPayloadBytes(const std::vector<uint64_t>& shape, int bits, int group_size);

// Expected payload length for a record given its dtype and shape.
uint64_t ExpectedPayloadBytes(const TensorRecord& record);

// Throws lqa::Error when the record violates its invariants.
void ValidateRecord(const TensorRecord& record);

std::vector<uint8_t> EncodeContainer(const std::vector<TensorRecord>& records);
std::vector<TensorRecord> DecodeContainer(const std::vector<uint8_t>& bytes);

// Returns the number of bytes written.
uint64_t WriteContainer(const std::vector<TensorRecord>& records, const std::filesystem::path& path);
std::vector<TensorRecord> ReadContainer(const std::filesystem::path& path);

// fp32 <-> record helpers.
TensorRecord MakeFP32Record(std::string name, std::vector<uint64_t> shape, const std::vector<float>& values);
std::vector<float> RecordToFloats(const TensorRecord& record);  // FP32 or FP16 only
TensorRecord ToFP16Record(const TensorRecord& record);

struct FeatureStream {
  uint32_t dim = 0;
  uint32_t class_count = 0;
  std::vector<float> prototypes;  // class_count x dim, row-major
  std::vector<float> features;    // sample_count x dim, row-major
  std::vector<uint32_t> labels;

  uint64_t sample_count() const { return labels.size(); }
  const float* feature(uint64_t i) const { return features.data() + i * dim; }
  const float* prototype(uint32_t c) const { return prototypes.data() + static_cast<uint64_t>(c) * dim; }

  bool operator==(const FeatureStream&) const = default;
};

struct StreamReadResult {
  FeatureStream stream;
  bool prototypes_renormalized = false;
};

void ValidateStream(const FeatureStream& stream);

std::vector<uint8_t> EncodeStream(const FeatureStream& stream);
StreamReadResult DecodeStream(const std::vector<uint8_t>& bytes);

uint64_t WriteStream(const FeatureStream& stream, const std::filesystem::path& path);
StreamReadResult ReadStream(const std::filesystem::path& path);

}  // namespace lqa::qtk
