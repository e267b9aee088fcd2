#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace csf {

using Index = std::int64_t;
using Shape = std::vector<Index>;

// Train: dropout active, batch statistics used and running stats updated.
// Eval: deterministic, running stats used, dropout is identity.
enum class Mode { Train, Eval };

// Non-fatal degenerate conditions (zero-norm embedding, empty positive-pair
// set, dropped trailing samples) are reported here instead of throwing.
// Default sink writes to stderr; tests install a capturing handler.
using WarnHandler = std::function<void(const std::string&)>;
void set_warn_handler(WarnHandler handler);
void reset_warn_handler();
void warn(const std::string& message);

std::string shape_to_string(const Shape& shape);

// Shortest decimal string that round-trips the exact double (std::to_chars);
// used everywhere numbers land in text artifacts so reruns are comparable.
std::string format_double(double v);

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

}  // namespace csf
