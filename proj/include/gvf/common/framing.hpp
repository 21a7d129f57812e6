#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gvf {

// Every frame is a 4-byte big-endian unsigned length followed by the payload.
// The same framing is used on sockets, in journals, snapshots and state files.
inline constexpr std::size_t kMaxFrameBytes = 16u * 1024u * 1024u;

std::string encode_frame(std::string_view payload);
void append_frame(std::string& out, std::string_view payload);

// Blocking helpers over a file descriptor. read_exact returns false on a clean
// EOF before the first byte and throws on a short read after it.
bool read_exact(int fd, void* buf, std::size_t len);
void write_all(int fd, const void* buf, std::size_t len);

// Reads one frame. Returns nullopt on clean EOF at a frame boundary.
std::optional<std::string> read_frame(int fd);
void write_frame(int fd, std::string_view payload);

// Append-only log of frames. A torn trailing frame (from a crash mid-append)
// is cut off when the log is read back.
class FrameLog {
 public:
  FrameLog() = default;
  FrameLog(const std::string& path, bool sync_each_append);
  ~FrameLog();
  FrameLog(FrameLog&& other) noexcept;
  FrameLog& operator=(FrameLog&& other) noexcept;
  FrameLog(const FrameLog&) = delete;
  FrameLog& operator=(const FrameLog&) = delete;

  void append(std::string_view payload);
  // Drops every record; used after a snapshot has been committed.
  void truncate();
  const std::string& path() const { return path_; }

  // Reads all complete frames; truncates the file past the last complete one.
  static std::vector<std::string> read_all(const std::string& path);

 private:
  std::string path_;
  int fd_ = -1;
  bool sync_ = false;
};

// Writes a single-frame file through a temp file and rename.
void write_frame_file_atomic(const std::string& path, std::string_view payload);
std::optional<std::string> read_frame_file(const std::string& path);

}  // namespace gvf
