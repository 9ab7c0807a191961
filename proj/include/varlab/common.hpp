#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace varlab {

/// Thrown when a computation fails for numerical reasons (conditioning,
/// blow-up, non-convergence) as opposed to a violated precondition.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Runs body(i) for i in [0, count) on up to `workers` threads.
/// Each index writes only to its own output slots, so the result is
/// identical for any worker count.
inline void parallel_for(std::size_t count, int workers,
                         const std::function<void(std::size_t)>& body) {
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const int nw = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nw));
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < count;
           i += static_cast<std::size_t>(nw))
        body(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace varlab
