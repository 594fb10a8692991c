#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedquad/tensor.hpp"

namespace fedquad {

struct ParamEntry {
  std::string name;
  Tensor value;
  bool trainable = true;  // false for batch-norm running buffers
};

// Ordered snapshot of every parameter and buffer of a model; the unit that is
// broadcast, trained and averaged.
struct ModelParams {
  std::vector<ParamEntry> entries;
  std::uint64_t step_count = 0;

  const ParamEntry* find(std::string_view name) const;
  std::size_t total_values() const;
  // Same names, order and shapes.
  bool same_layout(const ModelParams& other) const;
};

// Byte equality of every entry (names, shapes and values); ignores step_count.
bool bitwise_equal(const ModelParams& a, const ModelParams& b);

}  // namespace fedquad
