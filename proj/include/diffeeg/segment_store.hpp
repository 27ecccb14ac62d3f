#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "diffeeg/segment.hpp"

namespace diffeeg {

// Binary segment file, little-endian:
//   "EEGS", version u16, channels u16, sample_rate u32, length u32, count u32,
//   then per segment: label u8, start_s f64, data f32 [channels][length].
// Label bit 0 is the class (1 = preictal), bit 7 marks synthetic segments.
// Samples are stored as f32, so values round-trip exactly only when they are
// representable in single precision.
struct SegmentStore {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::uint32_t sample_rate = 0;
  std::vector<Segment> segments;
};

inline constexpr std::uint16_t kSegmentStoreVersion = 1;

std::string encode_store(const SegmentStore& store);
// Throws FormatError on a bad magic, version, geometry or length.
SegmentStore decode_store(std::string_view bytes);

void write_store(const std::string& path, const SegmentStore& store);
SegmentStore read_store(const std::string& path);

// Whole-file helpers shared by the binary formats.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace diffeeg
