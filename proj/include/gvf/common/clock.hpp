#pragma once

#include <atomic>
#include <cstdint>
#include <string_view>

namespace gvf {

// Time source for pin, reservation and transfer-token lifetimes. Logical mode
// only moves when advanced explicitly; wall mode reports seconds since epoch.
class Clock {
 public:
  enum class Mode { logical, wall };

  explicit Clock(Mode mode = Mode::logical) : mode_(mode) {}

  Mode mode() const { return mode_; }
  std::uint64_t now() const;
  // Logical mode only; wall mode rejects with E_BADREQ.
  std::uint64_t advance(std::uint64_t ticks);

  static Mode parse_mode(std::string_view text);

 private:
  Mode mode_;
  std::atomic<std::uint64_t> ticks_{0};
};

}  // namespace gvf
