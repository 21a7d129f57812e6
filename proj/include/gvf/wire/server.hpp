#pragma once

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "gvf/wire/channel.hpp"

namespace gvf::wire {

// TCP front end for a Handler: one thread per connection, requests on a
// connection are served in order until the peer closes it.
class Server {
 public:
  Server(std::shared_ptr<Handler> handler, const std::string& listen_addr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Port actually bound (useful when listening on port 0).
  std::uint16_t port() const { return port_; }
  void stop();

 private:
  struct Connection {
    int fd = -1;
    std::atomic<bool> done{false};
    std::thread thread;
  };

  void accept_loop();
  void serve(Connection* conn);

  std::shared_ptr<Handler> handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  void reap_finished();

  std::mutex mu_;
  std::list<std::unique_ptr<Connection>> connections_;
};

}  // namespace gvf::wire
