#include "diffeeg/segment_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "diffeeg/errors.hpp"

namespace diffeeg {

namespace {

constexpr unsigned char kPreictalBit = 0x01;
constexpr unsigned char kSyntheticBit = 0x80;
constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 4 + 4 + 4;

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("segment store truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_store(const SegmentStore& store) {
  if (store.channels == 0 || store.channels > std::numeric_limits<std::uint16_t>::max() || store.length == 0 ||
      store.length > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("segment store: channels and length must fit u16/u32 and be positive");
  }
  std::string out;
  out.reserve(kHeaderBytes + store.segments.size() * (9 + 4 * store.channels * store.length));
  out += "EEGS";
  put<std::uint16_t>(out, kSegmentStoreVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(store.channels));
  put<std::uint32_t>(out, store.sample_rate);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.length));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.segments.size()));
  for (const auto& s : store.segments) {
    if (s.data.shape() != ad::Shape{store.channels, store.length}) {
      throw std::invalid_argument("segment store: segment shape " + ad::shape_string(s.data.shape()) +
                                  " differs from the store geometry");
    }
    unsigned char label = s.preictal() ? kPreictalBit : 0;
    if (s.synthetic) label |= kSyntheticBit;
    out.push_back(static_cast<char>(label));
    put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(s.start_s));
    for (double v : s.data.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

SegmentStore decode_store(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kHeaderBytes || r.take(4) != "EEGS") throw FormatError("segment store: bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kSegmentStoreVersion) {
    throw FormatError("segment store: unsupported version " + std::to_string(version));
  }
  SegmentStore store;
  store.channels = r.get<std::uint16_t>();
  store.sample_rate = r.get<std::uint32_t>();
  store.length = r.get<std::uint32_t>();
  const auto count = r.get<std::uint32_t>();
  if (store.channels == 0 || store.length == 0) throw FormatError("segment store: zero channels or length");
  const std::size_t per = 1 + 8 + 4 * store.channels * store.length;
  if (r.remaining() != per * count) {
    throw FormatError("segment store: payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(per * count));
  }
  store.segments.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Segment s;
    const auto label = r.get<std::uint8_t>();
    if (label & ~(kPreictalBit | kSyntheticBit)) {
      throw FormatError("segment store: bad label byte " + std::to_string(label));
    }
    s.label = (label & kPreictalBit) ? Label::kPreictal : Label::kInterictal;
    s.synthetic = (label & kSyntheticBit) != 0;
    s.start_s = std::bit_cast<double>(r.get<std::uint64_t>());
    s.data = ad::Tensor(ad::Shape{store.channels, store.length});
    for (auto& v : s.data.values()) v = std::bit_cast<float>(r.get<std::uint32_t>());
    store.segments.push_back(std::move(s));
  }
  return store;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_store(const std::string& path, const SegmentStore& store) { write_file(path, encode_store(store)); }

SegmentStore read_store(const std::string& path) { return decode_store(read_file(path)); }

}  // namespace diffeeg
