#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

#include "gvf/common/auth.hpp"
#include "gvf/common/error.hpp"

namespace gvf::wire {

using Json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;
// Body streams are cut into chunks of at most this size.
inline constexpr std::size_t kChunkBytes = 1u << 20;

struct Auth {
  std::string subject;
  std::string token;
};

// One wire message: a structured header frame, optionally followed by a binary
// body sent as length-prefixed chunks and closed by a zero-length chunk. The
// header's "stream" field says whether a body follows.
struct Message {
  Json header = Json::object();
  std::optional<std::string> body;
};

std::string encode(const Message& msg);
// Inverse of encode over an in-memory buffer holding exactly one message.
Message decode(std::string_view bytes);
Message read_message(int fd);  // throws on EOF or malformed input
std::optional<Message> try_read_message(int fd);  // nullopt on clean EOF
void write_message(int fd, const Message& msg);

Message make_request(const std::string& op, Json args, const std::optional<Auth>& auth,
                     std::optional<std::string> body = std::nullopt);
Message ok_reply(const Message& request, Json result, std::optional<std::string> body = std::nullopt);
Message err_reply(const Message& request, ErrorCode code, const std::string& message);

std::string op_of(const Message& request);
std::optional<Auth> auth_of(const Message& request);
const Json& args_of(const Message& request);

// Subject of a request whose token verifies; E_PERM otherwise.
std::string authenticated_subject(const Message& request, const TokenAuthority& authority);

// Throws gvf::Error when the reply carries status "err".
void raise_if_error(const Message& reply);

// Typed accessors over request args; a missing or mistyped field is E_BADREQ.
std::string arg_string(const Json& args, const char* key);
std::optional<std::string> arg_opt_string(const Json& args, const char* key);
std::uint64_t arg_u64(const Json& args, const char* key);
std::optional<std::uint64_t> arg_opt_u64(const Json& args, const char* key);

}  // namespace gvf::wire
