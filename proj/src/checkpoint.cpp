#include "diffeeg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <sstream>

#include "diffeeg/errors.hpp"
#include "diffeeg/segment_store.hpp"

namespace diffeeg {

namespace {

constexpr std::string_view kMagic = "DIFFEEG-CKPT 1";

bool valid_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
  return true;
}

ad::Shape parse_shape(const std::string& text) {
  ad::Shape shape;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = std::min(text.find('x', pos), text.size());
    const std::string part = text.substr(pos, next - pos);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw FormatError("checkpoint: bad shape '" + text + "'");
    }
    const auto d = std::stoull(part);
    if (d == 0) throw FormatError("checkpoint: zero extent in shape '" + text + "'");
    shape.push_back(static_cast<std::size_t>(d));
    pos = next + 1;
  }
  return shape;
}

}  // namespace

bool Checkpoint::has(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return true;
  return false;
}

bool Checkpoint::has_tensor(std::string_view name) const {
  for (const auto& [k, v] : tensors)
    if (k == name) return true;
  return false;
}

const std::string& Checkpoint::get(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw FormatError("checkpoint: missing meta key " + std::string(key));
}

const ad::Tensor& Checkpoint::tensor(std::string_view name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint: missing tensor " + std::string(name));
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  out += '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (!valid_token(k) || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint: meta key/value not representable: " + k);
    }
    out += "meta " + k + " " + v + "\n";
  }
  std::size_t values = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!valid_token(name)) throw std::invalid_argument("checkpoint: tensor name not representable: " + name);
    std::string shape = ad::shape_string(t.shape());
    out += "tensor " + name + " " + shape.substr(1, shape.size() - 2) + "\n";
    values += t.size();
  }
  out += "payload " + std::to_string(8 * values) + "\n";
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("checkpoint: truncated manifest");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != kMagic) throw FormatError("checkpoint: bad magic line");
  Checkpoint ckpt;
  std::vector<ad::Shape> shapes;
  std::size_t declared = 0;
  while (true) {
    const std::string line = next_line();
    const std::size_t sp = line.find(' ');
    const std::string kind = line.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (kind == "meta") {
      const std::size_t sp2 = rest.find(' ');
      if (sp2 == std::string::npos || sp2 == 0) throw FormatError("checkpoint: bad meta line");
      ckpt.meta.emplace_back(rest.substr(0, sp2), rest.substr(sp2 + 1));
    } else if (kind == "tensor") {
      std::istringstream fields(rest);
      std::string name, shape, extra;
      if (!(fields >> name >> shape) || (fields >> extra)) throw FormatError("checkpoint: bad tensor line");
      shapes.push_back(parse_shape(shape));
      ckpt.tensors.emplace_back(name, ad::Tensor());
    } else if (kind == "payload") {
      if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos) {
        throw FormatError("checkpoint: bad payload line");
      }
      declared = std::stoull(rest);
      break;
    } else {
      throw FormatError("checkpoint: unknown manifest line '" + kind + "'");
    }
  }
  std::size_t values = 0;
  for (const auto& s : shapes) values += ad::shape_size(s);
  if (declared != 8 * values || bytes.size() - pos != declared) {
    throw FormatError("checkpoint: payload is " + std::to_string(bytes.size() - pos) + " bytes, manifest implies " +
                      std::to_string(8 * values));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    ad::Tensor t(shapes[i]);
    for (auto& v : t.values()) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
    ckpt.tensors[i].second = std::move(t);
  }
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file(path, encode_checkpoint(ckpt)); }

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace diffeeg
