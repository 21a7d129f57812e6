#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace gvf::vault {

struct ByteRange {
  std::uint64_t begin = 0;  // inclusive
  std::uint64_t end = 0;    // exclusive
};

struct WriteResult {
  std::string blob_id;
  bool created = false;  // false when the blob was already present
};

struct BlobStat {
  std::uint64_t size = 0;
  std::string digest;
};

struct Usage {
  std::uint64_t used_bytes = 0;
  std::uint64_t capacity = 0;
  std::size_t blobs = 0;
};

// Content-addressed blob directory. A blob lives at
// root/<first two hex>/<blob_id>, where blob_id is the sha256 of its bytes.
// Writes land in root/tmp first and are renamed into place only after the
// digest checks out, so readers never observe a partial blob.
class BlobStore {
 public:
  BlobStore(std::string root_dir, std::uint64_t capacity);

  WriteResult write_blob(std::string_view bytes, const std::string& declared_digest);
  std::string read_blob(const std::string& blob_id, std::optional<ByteRange> range = std::nullopt) const;
  // Returns true when the blob was already absent.
  bool delete_blob(const std::string& blob_id);
  BlobStat stat_blob(const std::string& blob_id) const;
  Usage usage() const;

  std::string path_for(const std::string& blob_id) const;
  const std::string& root() const { return root_; }

 private:
  void scan();

  std::string root_;
  std::uint64_t capacity_;
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> sizes_;
  std::uint64_t used_ = 0;
  std::uint64_t in_flight_ = 0;
  std::uint64_t tmp_counter_ = 0;
};

}  // namespace gvf::vault
