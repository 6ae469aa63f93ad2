#include "emap/models.hpp"

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <string>

namespace emap::models {

namespace {

std::string excerpt(const std::string& line) {
  constexpr std::size_t kMax = 200;
  if (line.size() <= kMax) return line;
  return line.substr(0, kMax) + "...";
}

}  // namespace

struct SubprocessModel::Impl {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  std::chrono::milliseconds timeout;
  mutable std::mutex mutex;
  mutable std::uint64_t next_id = 0;
  mutable Index n_classes = 0;
  mutable std::string buffer;

  ~Impl() {
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);
    if (pid > 0) {
      int status = 0;
      // Closing stdin usually ends the child; escalate if it lingers.
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid, &status, WNOHANG) != 0) return;
        ::usleep(10'000);
      }
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
    }
  }

  void write_line(const std::string& line) const {
    std::string payload = line;
    payload.push_back('\n');
    std::size_t written = 0;
    while (written < payload.size()) {
      const ssize_t n = ::write(to_child, payload.data() + written,
                                payload.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SubprocessExitError(std::string("subprocess write failed: ") +
                                  std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() const {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto newline = buffer.find('\n');
      if (newline != std::string::npos) {
        std::string line = buffer.substr(0, newline);
        buffer.erase(0, newline + 1);
        return line;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0)
        throw SubprocessTimeoutError("subprocess response timed out after " +
                                     std::to_string(timeout.count()) + " ms");
      struct pollfd pfd{};
      pfd.fd = from_child;
      pfd.events = POLLIN;
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw SubprocessExitError(std::string("subprocess poll failed: ") +
                                  std::strerror(errno));
      }
      if (ready == 0)
        throw SubprocessTimeoutError("subprocess response timed out after " +
                                     std::to_string(timeout.count()) + " ms");
      char chunk[4096];
      const ssize_t n = ::read(from_child, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SubprocessExitError(std::string("subprocess read failed: ") +
                                  std::strerror(errno));
      }
      if (n == 0)
        throw SubprocessExitError("subprocess exited (stdout closed)");
      buffer.append(chunk, static_cast<std::size_t>(n));
    }
  }
};

SubprocessModel::SubprocessModel(const std::string& command,
                                 std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->timeout = timeout;
  ::signal(SIGPIPE, SIG_IGN);  // broken pipes surface as EPIPE instead

  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
    throw std::runtime_error("subprocess_model: pipe() failed");

  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("subprocess_model: fork() failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  impl_->pid = pid;
  impl_->to_child = to_child[1];
  impl_->from_child = from_child[0];
}

SubprocessModel::~SubprocessModel() = default;

Matrix SubprocessModel::predict(const Matrix& batch) const {
  std::lock_guard<std::mutex> lock(impl_->mutex);

  const std::uint64_t id = impl_->next_id++;
  nlohmann::json request;
  request["id"] = id;
  nlohmann::json points = nlohmann::json::array();
  for (Index r = 0; r < batch.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < batch.cols(); ++c) row.push_back(batch(r, c));
    points.push_back(std::move(row));
  }
  request["points"] = std::move(points);
  impl_->write_line(request.dump());

  const std::string line = impl_->read_line();
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw SubprocessProtocolError("subprocess sent non-JSON line: '" +
                                  excerpt(line) + "'");
  }
  if (!response.contains("id") || !response.contains("probs"))
    throw SubprocessProtocolError("subprocess response missing id/probs: '" +
                                  excerpt(line) + "'");
  if (response["id"].get<std::uint64_t>() != id)
    throw SubprocessProtocolError(
        "subprocess response id " + response["id"].dump() +
        " does not echo request id " + std::to_string(id));

  const auto& probs = response["probs"];
  if (static_cast<Index>(probs.size()) != batch.rows())
    throw SubprocessProtocolError(
        "subprocess returned " + std::to_string(probs.size()) + " rows for " +
        std::to_string(batch.rows()) + " points");
  Index classes = impl_->n_classes;
  if (batch.rows() == 0) return Matrix(0, classes);

  classes = static_cast<Index>(probs.at(0).size());
  if (impl_->n_classes == 0) impl_->n_classes = classes;
  if (classes != impl_->n_classes)
    throw SubprocessProtocolError("subprocess changed class count");

  Matrix out(batch.rows(), classes);
  for (Index r = 0; r < batch.rows(); ++r) {
    const auto& row = probs.at(static_cast<std::size_t>(r));
    if (static_cast<Index>(row.size()) != classes)
      throw SubprocessProtocolError("subprocess sent a ragged probability row");
    for (Index c = 0; c < classes; ++c)
      out(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return out;
}

Index SubprocessModel::n_classes() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->n_classes;
}

}  // namespace emap::models
