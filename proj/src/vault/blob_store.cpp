#include "gvf/vault/blob_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <system_error>

#include "gvf/common/digest.hpp"
#include "gvf/common/error.hpp"
#include "gvf/common/framing.hpp"

namespace gvf::vault {

namespace fs = std::filesystem;

namespace {

void require_blob_id(const std::string& blob_id) {
  if (!is_lower_hex(blob_id, kDigestHexLength)) fail(ErrorCode::badreq, "malformed blob id");
}

}  // namespace

BlobStore::BlobStore(std::string root_dir, std::uint64_t capacity) : root_(std::move(root_dir)), capacity_(capacity) {
  if (capacity_ == 0) fail(ErrorCode::badreq, "vault capacity must be positive");
  fs::create_directories(fs::path(root_) / "tmp");
  scan();
}

void BlobStore::scan() {
  // Temp files are leftovers of writes that never completed.
  for (const auto& f : fs::directory_iterator(fs::path(root_) / "tmp")) fs::remove(f.path());
  for (const auto& dir : fs::directory_iterator(root_)) {
    if (!dir.is_directory() || dir.path().filename() == "tmp") continue;
    for (const auto& f : fs::directory_iterator(dir.path())) {
      auto name = f.path().filename().string();
      if (!f.is_regular_file() || !is_lower_hex(name, kDigestHexLength)) continue;
      auto size = static_cast<std::uint64_t>(f.file_size());
      sizes_[name] = size;
      used_ += size;
    }
  }
}

std::string BlobStore::path_for(const std::string& blob_id) const {
  return (fs::path(root_) / blob_id.substr(0, 2) / blob_id).string();
}

WriteResult BlobStore::write_blob(std::string_view bytes, const std::string& declared_digest) {
  if (!is_lower_hex(declared_digest, kDigestHexLength)) fail(ErrorCode::badreq, "malformed declared digest");
  std::string actual = sha256_hex(bytes);
  if (actual != declared_digest) fail(ErrorCode::badreq, "digest mismatch");

  std::string tmp;
  {
    std::lock_guard lock(mu_);
    if (sizes_.contains(actual)) return {actual, false};
    if (used_ + in_flight_ + bytes.size() > capacity_) {
      fail(ErrorCode::nospace, "vault full: " + std::to_string(capacity_ - used_ - in_flight_) + " bytes free");
    }
    in_flight_ += bytes.size();
    tmp = (fs::path(root_) / "tmp" / (actual + "." + std::to_string(++tmp_counter_))).string();
  }

  auto release = [&] {
    std::lock_guard lock(mu_);
    in_flight_ -= bytes.size();
  };
  try {
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) throw std::system_error(errno, std::generic_category(), "open " + tmp);
    try {
      write_all(fd, bytes.data(), bytes.size());
    } catch (...) {
      ::close(fd);
      throw;
    }
    ::close(fd);
    fs::create_directories(fs::path(path_for(actual)).parent_path());
    fs::rename(tmp, path_for(actual));
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    release();
    throw;
  }

  std::lock_guard lock(mu_);
  in_flight_ -= bytes.size();
  bool created = !sizes_.contains(actual);
  if (created) {
    sizes_[actual] = bytes.size();
    used_ += bytes.size();
  }
  return {actual, created};
}

std::string BlobStore::read_blob(const std::string& blob_id, std::optional<ByteRange> range) const {
  require_blob_id(blob_id);
  std::uint64_t size = 0;
  {
    std::lock_guard lock(mu_);
    auto it = sizes_.find(blob_id);
    if (it == sizes_.end()) fail(ErrorCode::noent, "no blob " + blob_id);
    size = it->second;
  }
  ByteRange r = range.value_or(ByteRange{0, size});
  if (r.begin > r.end || r.end > size) fail(ErrorCode::badreq, "range out of bounds");

  std::ifstream in(path_for(blob_id), std::ios::binary);
  if (!in) fail(ErrorCode::noent, "no blob " + blob_id);
  std::string out(r.end - r.begin, '\0');
  in.seekg(static_cast<std::streamoff>(r.begin));
  in.read(out.data(), static_cast<std::streamsize>(out.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != out.size()) fail(ErrorCode::unavail, "short read of " + blob_id);
  return out;
}

bool BlobStore::delete_blob(const std::string& blob_id) {
  require_blob_id(blob_id);
  std::lock_guard lock(mu_);
  auto it = sizes_.find(blob_id);
  if (it == sizes_.end()) return true;
  std::error_code ec;
  fs::remove(path_for(blob_id), ec);
  used_ -= it->second;
  sizes_.erase(it);
  return false;
}

BlobStat BlobStore::stat_blob(const std::string& blob_id) const {
  require_blob_id(blob_id);
  std::lock_guard lock(mu_);
  auto it = sizes_.find(blob_id);
  if (it == sizes_.end()) fail(ErrorCode::noent, "no blob " + blob_id);
  return {it->second, blob_id};
}

Usage BlobStore::usage() const {
  std::lock_guard lock(mu_);
  return {used_, capacity_, sizes_.size()};
}

}  // namespace gvf::vault
