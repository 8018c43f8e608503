#ifndef GUIDER_PARALLEL_HPP
#define GUIDER_PARALLEL_HPP

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace guider {

// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunking does not
// depend on the worker count, so callers that write results into
// preallocated per-index slots get identical output for any `threads`.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn,
                     std::size_t chunk = 64) {
  if (n == 0) return;
  std::size_t n_chunks = (n + chunk - 1) / chunk;
  if (threads <= 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    }
  };
  std::vector<std::thread> pool;
  int n_workers = std::min<std::size_t>((std::size_t)threads, n_chunks);
  pool.reserve(n_workers);
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace guider

#endif
