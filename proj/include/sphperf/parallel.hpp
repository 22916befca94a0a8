#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace sphperf {

/// Runs fn(t) for t in [0, workers) on `workers` threads (the caller's thread
/// takes t = 0) and joins them. The first exception thrown by any worker is
/// rethrown after all have finished.
template <typename Fn>
void run_workers(int workers, Fn&& fn) {
  if (workers <= 1) {
    fn(0);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  auto guarded = [&](int t) {
    try {
      fn(t);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) pool.emplace_back(guarded, t);
    guarded(0);
  }
  if (error) std::rethrow_exception(error);
}

/// [begin, end) of chunk t when n items are split into `parts` contiguous chunks.
inline std::pair<std::size_t, std::size_t> split_range(std::size_t n, int parts, int t) {
  const std::size_t p = static_cast<std::size_t>(parts);
  const std::size_t base = n / p;
  const std::size_t extra = n % p;
  const std::size_t tt = static_cast<std::size_t>(t);
  const std::size_t begin = tt * base + std::min(tt, extra);
  return {begin, begin + base + (tt < extra ? 1 : 0)};
}

/// Chunked min-reduction of value(i) over [0, n): each chunk is reduced
/// independently (optionally on several threads), then the partials.
template <typename ValueFn>
double chunked_min(std::size_t n, ValueFn&& value, int workers = 1, std::size_t chunk = 4096) {
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  std::vector<double> partial(nchunks, std::numeric_limits<double>::infinity());
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(nchunks, 1))));
  run_workers(w, [&](int t) {
    for (std::size_t c = static_cast<std::size_t>(t); c < nchunks; c += static_cast<std::size_t>(w)) {
      double m = std::numeric_limits<double>::infinity();
      const std::size_t end = std::min(n, (c + 1) * chunk);
      for (std::size_t i = c * chunk; i < end; ++i) m = std::min(m, static_cast<double>(value(i)));
      partial[c] = m;
    }
  });
  double m = std::numeric_limits<double>::infinity();
  for (double p : partial) m = std::min(m, p);
  return m;
}

}  // namespace sphperf
