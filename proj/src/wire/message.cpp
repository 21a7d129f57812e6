#include "gvf/wire/message.hpp"

#include <atomic>

#include "gvf/common/framing.hpp"

namespace gvf::wire {

namespace {

std::string next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return "r" + std::to_string(counter.fetch_add(1) + 1);
}

std::string read_body(int fd) {
  std::string body;
  for (;;) {
    auto chunk = read_frame(fd);
    if (!chunk) throw Error(ErrorCode::unavail, "stream closed mid-body");
    if (chunk->empty()) break;
    body += *chunk;
  }
  return body;
}

Message decode_header(std::string_view frame) {
  Message msg;
  try {
    msg.header = Json::parse(frame);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::badreq, std::string("malformed header: ") + e.what());
  }
  if (!msg.header.is_object()) throw Error(ErrorCode::badreq, "header is not an object");
  return msg;
}

}  // namespace

std::string encode(const Message& msg) {
  Json header = msg.header;
  header["stream"] = msg.body.has_value();
  std::string out;
  append_frame(out, header.dump());
  if (msg.body) {
    const std::string& body = *msg.body;
    for (std::size_t pos = 0; pos < body.size(); pos += kChunkBytes) {
      append_frame(out, std::string_view(body).substr(pos, kChunkBytes));
    }
    append_frame(out, {});
  }
  return out;
}

Message decode(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_frame = [&]() -> std::string_view {
    if (pos + 4 > bytes.size()) throw Error(ErrorCode::badreq, "truncated message");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    std::size_t len = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
    if (pos + 4 + len > bytes.size()) throw Error(ErrorCode::badreq, "truncated frame");
    auto out = bytes.substr(pos + 4, len);
    pos += 4 + len;
    return out;
  };
  Message msg = decode_header(next_frame());
  if (msg.header.value("stream", false)) {
    std::string body;
    for (auto chunk = next_frame(); !chunk.empty(); chunk = next_frame()) body.append(chunk);
    msg.body = std::move(body);
  }
  return msg;
}

std::optional<Message> try_read_message(int fd) {
  auto frame = read_frame(fd);
  if (!frame) return std::nullopt;
  Message msg = decode_header(*frame);
  if (msg.header.value("stream", false)) msg.body = read_body(fd);
  return msg;
}

Message read_message(int fd) {
  auto msg = try_read_message(fd);
  if (!msg) throw Error(ErrorCode::unavail, "connection closed");
  return std::move(*msg);
}

void write_message(int fd, const Message& msg) {
  std::string buf = encode(msg);
  write_all(fd, buf.data(), buf.size());
}

Message make_request(const std::string& op, Json args, const std::optional<Auth>& auth,
                     std::optional<std::string> body) {
  Message msg;
  msg.header["v"] = kProtocolVersion;
  msg.header["id"] = next_id();
  msg.header["op"] = op;
  msg.header["args"] = args.is_null() ? Json::object() : std::move(args);
  if (auth) msg.header["auth"] = Json{{"subject", auth->subject}, {"token", auth->token}};
  msg.body = std::move(body);
  return msg;
}

Message ok_reply(const Message& request, Json result, std::optional<std::string> body) {
  Message msg;
  msg.header["v"] = kProtocolVersion;
  msg.header["id"] = request.header.value("id", "");
  msg.header["status"] = "ok";
  msg.header["result"] = result.is_null() ? Json::object() : std::move(result);
  msg.body = std::move(body);
  return msg;
}

Message err_reply(const Message& request, ErrorCode code, const std::string& message) {
  Message msg;
  msg.header["v"] = kProtocolVersion;
  msg.header["id"] = request.header.contains("id") && request.header["id"].is_string()
                         ? request.header["id"].get<std::string>()
                         : std::string();
  msg.header["status"] = "err";
  msg.header["error"] = std::string(to_string(code));
  msg.header["message"] = message;
  return msg;
}

std::string op_of(const Message& request) {
  auto it = request.header.find("op");
  if (it == request.header.end() || !it->is_string()) throw Error(ErrorCode::badreq, "missing op");
  return it->get<std::string>();
}

std::optional<Auth> auth_of(const Message& request) {
  auto it = request.header.find("auth");
  if (it == request.header.end() || !it->is_object()) return std::nullopt;
  Auth a;
  a.subject = it->value("subject", "");
  a.token = it->value("token", "");
  return a;
}

const Json& args_of(const Message& request) {
  static const Json kEmpty = Json::object();
  auto it = request.header.find("args");
  if (it == request.header.end() || !it->is_object()) return kEmpty;
  return *it;
}

std::string authenticated_subject(const Message& request, const TokenAuthority& authority) {
  auto auth = auth_of(request);
  if (!auth || auth->subject.empty()) throw Error(ErrorCode::perm, "request is not authenticated");
  if (!authority.verify(auth->subject, auth->token)) throw Error(ErrorCode::perm, "bad proof token");
  return auth->subject;
}

void raise_if_error(const Message& reply) {
  if (reply.header.value("status", "") == "ok") return;
  auto code = parse_error_code(reply.header.value("error", "E_BADREQ")).value_or(ErrorCode::badreq);
  throw Error(code, reply.header.value("message", "remote error"));
}

std::string arg_string(const Json& args, const char* key) {
  auto it = args.find(key);
  if (it == args.end() || !it->is_string()) {
    throw Error(ErrorCode::badreq, std::string("missing string argument '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> arg_opt_string(const Json& args, const char* key) {
  auto it = args.find(key);
  if (it == args.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::badreq, std::string("argument '") + key + "' must be a string");
  return it->get<std::string>();
}

std::uint64_t arg_u64(const Json& args, const char* key) {
  auto v = arg_opt_u64(args, key);
  if (!v) throw Error(ErrorCode::badreq, std::string("missing integer argument '") + key + "'");
  return *v;
}

std::optional<std::uint64_t> arg_opt_u64(const Json& args, const char* key) {
  auto it = args.find(key);
  if (it == args.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
    throw Error(ErrorCode::badreq, std::string("argument '") + key + "' must be a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

}  // namespace gvf::wire
