#include "gvf/common/framing.hpp"

#include <fcntl.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <utility>

#include "gvf/common/error.hpp"

namespace gvf {

namespace {

void put_u32_be(char* out, std::uint32_t v) {
  out[0] = static_cast<char>((v >> 24) & 0xff);
  out[1] = static_cast<char>((v >> 16) & 0xff);
  out[2] = static_cast<char>((v >> 8) & 0xff);
  out[3] = static_cast<char>(v & 0xff);
}

std::uint32_t get_u32_be(const unsigned char* in) {
  return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) |
         (std::uint32_t{in[2]} << 8) | std::uint32_t{in[3]};
}

std::runtime_error sys_error(const std::string& what) {
  return std::runtime_error(what + ": " + std::strerror(errno));
}

}  // namespace

void append_frame(std::string& out, std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) fail(ErrorCode::badreq, "frame exceeds 16 MiB");
  char hdr[4];
  put_u32_be(hdr, static_cast<std::uint32_t>(payload.size()));
  out.append(hdr, 4);
  out.append(payload);
}

std::string encode_frame(std::string_view payload) {
  std::string out;
  out.reserve(payload.size() + 4);
  append_frame(out, payload);
  return out;
}

bool read_exact(int fd, void* buf, std::size_t len) {
  auto* p = static_cast<char*>(buf);
  std::size_t got = 0;
  while (got < len) {
    ssize_t n = ::read(fd, p + got, len - got);
    if (n == 0) {
      if (got == 0) return false;
      throw std::runtime_error("short read");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw sys_error("read");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

void write_all(int fd, const void* buf, std::size_t len) {
  const auto* p = static_cast<const char*>(buf);
  std::size_t done = 0;
  while (done < len) {
    ssize_t n = ::send(fd, p + done, len - done, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(fd, p + done, len - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw sys_error("write");
    }
    done += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> read_frame(int fd) {
  unsigned char hdr[4];
  if (!read_exact(fd, hdr, 4)) return std::nullopt;
  std::uint32_t len = get_u32_be(hdr);
  if (len > kMaxFrameBytes) fail(ErrorCode::badreq, "frame exceeds 16 MiB");
  std::string payload(len, '\0');
  if (len > 0 && !read_exact(fd, payload.data(), len)) throw std::runtime_error("short frame");
  return payload;
}

void write_frame(int fd, std::string_view payload) {
  std::string buf = encode_frame(payload);
  write_all(fd, buf.data(), buf.size());
}

FrameLog::FrameLog(const std::string& path, bool sync_each_append) : path_(path), sync_(sync_each_append) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw sys_error("open " + path);
}

FrameLog::~FrameLog() {
  if (fd_ >= 0) ::close(fd_);
}

FrameLog::FrameLog(FrameLog&& other) noexcept
    : path_(std::move(other.path_)), fd_(std::exchange(other.fd_, -1)), sync_(other.sync_) {}

FrameLog& FrameLog::operator=(FrameLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    fd_ = std::exchange(other.fd_, -1);
    sync_ = other.sync_;
  }
  return *this;
}

void FrameLog::append(std::string_view payload) {
  if (fd_ < 0) throw std::logic_error("append on closed log");
  // One write per record so a kill can only ever leave a torn tail.
  std::string buf = encode_frame(payload);
  std::size_t done = 0;
  while (done < buf.size()) {
    ssize_t n = ::write(fd_, buf.data() + done, buf.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw sys_error("append " + path_);
    }
    done += static_cast<std::size_t>(n);
  }
  if (sync_ && ::fdatasync(fd_) != 0) throw sys_error("fdatasync " + path_);
}

void FrameLog::truncate() {
  if (fd_ < 0) return;
  if (::ftruncate(fd_, 0) != 0) throw sys_error("truncate " + path_);
  if (sync_) ::fdatasync(fd_);
}

std::vector<std::string> FrameLog::read_all(const std::string& path) {
  std::vector<std::string> out;
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) {
    if (errno == ENOENT) return out;
    throw sys_error("open " + path);
  }
  struct stat st {};
  ::fstat(fd, &st);
  std::string data(static_cast<std::size_t>(st.st_size), '\0');
  std::size_t got = 0;
  while (got < data.size()) {
    ssize_t n = ::read(fd, data.data() + got, data.size() - got);
    if (n <= 0) break;
    got += static_cast<std::size_t>(n);
  }
  ::close(fd);
  data.resize(got);

  std::size_t pos = 0;
  while (pos + 4 <= data.size()) {
    auto len = get_u32_be(reinterpret_cast<const unsigned char*>(data.data() + pos));
    if (len > kMaxFrameBytes || pos + 4 + len > data.size()) break;
    out.emplace_back(data.substr(pos + 4, len));
    pos += 4 + len;
  }
  if (pos != data.size()) {
    // Torn tail: cut it so later appends start at a frame boundary.
    if (::truncate(path.c_str(), static_cast<off_t>(pos)) != 0) throw sys_error("truncate " + path);
  }
  return out;
}

void write_frame_file_atomic(const std::string& path, std::string_view payload) {
  std::string tmp = path + ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw sys_error("open " + tmp);
  std::string buf = encode_frame(payload);
  try {
    write_all(fd, buf.data(), buf.size());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

std::optional<std::string> read_frame_file(const std::string& path) {
  auto frames = FrameLog::read_all(path);
  if (frames.empty()) return std::nullopt;
  return frames.front();
}

}  // namespace gvf
