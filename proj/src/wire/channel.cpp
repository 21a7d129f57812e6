#include "gvf/wire/channel.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace gvf::wire {

Message guarded(const Message& request, const std::function<Message()>& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return err_reply(request, e.code(), e.what());
  } catch (const Json::exception& e) {
    return err_reply(request, ErrorCode::badreq, e.what());
  } catch (const std::exception& e) {
    return err_reply(request, ErrorCode::unavail, e.what());
  }
}

Reply call(Channel& channel, const std::string& op, Json args, const std::optional<Auth>& auth,
           std::optional<std::string> body) {
  Message reply = channel.roundtrip(make_request(op, std::move(args), auth, std::move(body)));
  raise_if_error(reply);
  Reply out;
  out.result = reply.header.value("result", Json::object());
  out.body = std::move(reply.body);
  return out;
}

HostPort parse_host_port(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= addr.size()) {
    throw Error(ErrorCode::badreq, "address must be host:port, got '" + addr + "'");
  }
  HostPort hp;
  hp.host = addr.substr(0, colon);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorCode::badreq, "bad port in '" + addr + "'");
  }
  if (port > 65535) throw Error(ErrorCode::badreq, "bad port in '" + addr + "'");
  hp.port = static_cast<std::uint16_t>(port);
  return hp;
}

namespace {

class FdGuard {
 public:
  explicit FdGuard(int fd) : fd_(fd) {}
  ~FdGuard() {
    if (fd_ >= 0) ::close(fd_);
  }
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

int connect_to(const std::string& addr) {
  HostPort hp = parse_host_port(addr);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port = std::to_string(hp.port);
  if (::getaddrinfo(hp.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorCode::unavail, "cannot resolve " + addr);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorCode::unavail, "cannot connect to " + addr);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  timeval tv{};
  tv.tv_sec = 60;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  return fd;
}

}  // namespace

TcpChannel::TcpChannel(std::string addr) : addr_(std::move(addr)) {}

Message TcpChannel::roundtrip(const Message& request) {
  FdGuard fd(connect_to(addr_));
  try {
    write_message(fd.get(), request);
    return read_message(fd.get());
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::unavail, addr_ + ": " + e.what());
  }
}

Connector tcp_connector() {
  return [](const std::string& addr) -> std::shared_ptr<Channel> { return std::make_shared<TcpChannel>(addr); };
}

void Network::bind(const std::string& addr, std::shared_ptr<Handler> handler) {
  std::lock_guard lock(mu_);
  handlers_[addr] = std::move(handler);
}

void Network::unbind(const std::string& addr) {
  std::lock_guard lock(mu_);
  handlers_.erase(addr);
}

void Network::set_down(const std::string& addr, bool down) {
  std::lock_guard lock(mu_);
  if (down) {
    down_.insert(addr);
  } else {
    down_.erase(addr);
  }
}

bool Network::is_down(const std::string& addr) const {
  std::lock_guard lock(mu_);
  return down_.contains(addr);
}

std::shared_ptr<Handler> Network::resolve(const std::string& addr) const {
  std::lock_guard lock(mu_);
  if (down_.contains(addr)) return nullptr;
  auto it = handlers_.find(addr);
  return it == handlers_.end() ? nullptr : it->second;
}

Connector Network::connector() {
  std::shared_ptr<const Network> self = shared_from_this();
  return [self](const std::string& addr) -> std::shared_ptr<Channel> {
    return std::make_shared<LocalChannel>(self, addr);
  };
}

LocalChannel::LocalChannel(std::shared_ptr<const Network> net, std::string addr)
    : net_(std::move(net)), addr_(std::move(addr)) {}

Message LocalChannel::roundtrip(const Message& request) {
  auto handler = net_->resolve(addr_);
  if (!handler) throw Error(ErrorCode::unavail, "unreachable: " + addr_);
  Message reply = handler->handle(decode(encode(request)));
  // The peer may have been killed while the request was in flight.
  if (net_->resolve(addr_) == nullptr) throw Error(ErrorCode::unavail, "connection lost: " + addr_);
  return decode(encode(reply));
}

}  // namespace gvf::wire
