#include "gvf/common/clock.hpp"

#include <chrono>
#include <string>

#include "gvf/common/error.hpp"

namespace gvf {

std::uint64_t Clock::now() const {
  if (mode_ == Mode::logical) return ticks_.load();
  auto since = std::chrono::system_clock::now().time_since_epoch();
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::seconds>(since).count());
}

std::uint64_t Clock::advance(std::uint64_t ticks) {
  if (mode_ != Mode::logical) fail(ErrorCode::badreq, "clock is in wall mode");
  return ticks_.fetch_add(ticks) + ticks;
}

Clock::Mode Clock::parse_mode(std::string_view text) {
  if (text == "logical") return Mode::logical;
  if (text == "wall") return Mode::wall;
  fail(ErrorCode::badreq, "unknown clock mode '" + std::string(text) + "'");
}

}  // namespace gvf
