#pragma once

#include <memory>

#include "gvf/common/auth.hpp"
#include "gvf/vault/blob_store.hpp"
#include "gvf/wire/channel.hpp"

namespace gvf::vault {

// Serves blob.write, blob.read, blob.delete, blob.stat and blob.usage.
// Reads need any authenticated subject; writes and deletes are reserved for
// the federation's service subject (brokers and gateway drivers).
class VaultService : public wire::Handler {
 public:
  VaultService(std::shared_ptr<BlobStore> store, TokenAuthority authority);
  wire::Message handle(const wire::Message& request) override;

  BlobStore& store() { return *store_; }

 private:
  std::shared_ptr<BlobStore> store_;
  TokenAuthority authority_;
};

class VaultClient {
 public:
  VaultClient(std::shared_ptr<wire::Channel> channel, wire::Auth auth);

  WriteResult write(const std::string& bytes, const std::string& digest);
  std::string read(const std::string& blob_id, std::optional<ByteRange> range = std::nullopt);
  bool remove(const std::string& blob_id);
  BlobStat stat(const std::string& blob_id);
  Usage usage();

 private:
  std::shared_ptr<wire::Channel> channel_;
  wire::Auth auth_;
};

}  // namespace gvf::vault
