#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace gvf {

// The artifact-wide content digest. Every component hashes with this one
// algorithm; reports and configs name it through kDigestAlgorithm.
inline constexpr std::string_view kDigestAlgorithm = "sha256";
inline constexpr std::size_t kDigestHexLength = 64;

class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  // Lowercase hex of the final digest. The hasher is unusable afterwards.
  std::string finish_hex();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::string& path);

bool is_lower_hex(std::string_view text, std::size_t length);
std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace gvf
