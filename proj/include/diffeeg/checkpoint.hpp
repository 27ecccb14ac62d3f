#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diffeeg/tensor.hpp"

namespace diffeeg {

// Text manifest followed by a raw payload:
//   DIFFEEG-CKPT 1
//   meta <key> <value>             (any number, value runs to end of line)
//   tensor <name> <d0>x<d1>x...    (payload order)
//   payload <bytes>
// then the tensors as little-endian f64, concatenated. The byte count must
// equal 8 * sum of tensor sizes.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;

  // Throws FormatError if absent.
  const std::string& get(std::string_view key) const;
  const ad::Tensor& tensor(std::string_view name) const;
  bool has(std::string_view key) const;
  bool has_tensor(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace diffeeg
