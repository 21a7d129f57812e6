#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "gvf/wire/message.hpp"

namespace gvf::wire {

// Service side of the protocol: one request in, one reply out. Implementations
// must be safe to call from many threads.
class Handler {
 public:
  virtual ~Handler() = default;
  virtual Message handle(const Message& request) = 0;
};

// Runs fn and converts thrown errors into an err reply for request.
Message guarded(const Message& request, const std::function<Message()>& fn);

class Channel {
 public:
  virtual ~Channel() = default;
  // Unreachable peers surface as gvf::Error(E_UNAVAIL).
  virtual Message roundtrip(const Message& request) = 0;
};

struct Reply {
  Json result;
  std::optional<std::string> body;
};

// Sends one request and returns the ok reply, or throws the remote error.
Reply call(Channel& channel, const std::string& op, Json args, const std::optional<Auth>& auth,
           std::optional<std::string> body = std::nullopt);

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};
HostPort parse_host_port(const std::string& addr);

class TcpChannel : public Channel {
 public:
  explicit TcpChannel(std::string addr);
  Message roundtrip(const Message& request) override;

 private:
  std::string addr_;
};

using Connector = std::function<std::shared_ptr<Channel>(const std::string& addr)>;
Connector tcp_connector();

// Address registry for in-process federations. Handlers are bound under the
// same host:port strings a deployed federation would use, so configs are
// shared between modes. A downed or unbound address is unreachable.
class Network : public std::enable_shared_from_this<Network> {
 public:
  void bind(const std::string& addr, std::shared_ptr<Handler> handler);
  void unbind(const std::string& addr);
  void set_down(const std::string& addr, bool down);
  bool is_down(const std::string& addr) const;

  std::shared_ptr<Handler> resolve(const std::string& addr) const;
  Connector connector();

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Handler>> handlers_;
  std::set<std::string> down_;
};

// Channel into a Network address. The message is serialized and parsed on
// the way through so in-process calls see exactly what TCP peers see.
class LocalChannel : public Channel {
 public:
  LocalChannel(std::shared_ptr<const Network> net, std::string addr);
  Message roundtrip(const Message& request) override;

 private:
  std::shared_ptr<const Network> net_;
  std::string addr_;
};

}  // namespace gvf::wire
