#include "csf/common.hpp"

#include <charconv>
#include <iostream>
#include <sstream>

namespace csf {

namespace {
WarnHandler& handler() {
  static WarnHandler h;
  return h;
}
}  // namespace

void set_warn_handler(WarnHandler h) { handler() = std::move(h); }

void reset_warn_handler() { handler() = nullptr; }

void warn(const std::string& message) {
  if (handler()) {
    handler()(message);
  } else {
    std::cerr << "warning: " << message << "\n";
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace csf
