#pragma once
// Shared numeric substrate: dense complex types, a deterministic seedable RNG,
// a block-deterministic parallel loop (results independent of worker count),
// and composite Gauss-Legendre rules.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qk {

using cxd = std::complex<double>;
using MatC = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecC = Eigen::Matrix<cxd, Eigen::Dynamic, 1>;
using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecR = Eigen::Matrix<double, Eigen::Dynamic, 1>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// ---------------- deterministic rng ----------------
// splitmix64 with an explicit bit-to-double mapping; unlike
// std::uniform_real_distribution the stream is identical on every platform.
struct rng64 {
  std::uint64_t state;
  explicit rng64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double unit() { return double(next() >> 11) * 0x1.0p-53; }  // [0,1)
  double sym() { return 2.0 * unit() - 1.0; }                 // [-1,1)
  cxd csym() {
    double re = sym();
    double im = sym();
    return {re, im};
  }
};

// ---------------- deterministic parallelism ----------------
// Work is cut into blocks whose contents and combination order are fixed by
// the caller; workers only pick *which* block to run next, so results are
// byte-identical for any worker count.
inline int& worker_count() {
  static int n = 1;
  return n;
}

template <class Fn>
inline void parallel_blocks(std::int64_t nblocks, Fn&& fn) {
  const int threads = worker_count();
  if (threads <= 1 || nblocks <= 1) {
    for (std::int64_t b = 0; b < nblocks; ++b) fn(b);
    return;
  }
  std::atomic<std::int64_t> cursor{0};
  auto drain = [&] {
    for (;;) {
      const std::int64_t b = cursor.fetch_add(1, std::memory_order_relaxed);
      if (b >= nblocks) return;
      fn(b);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int i = 0; i + 1 < threads; ++i) pool.emplace_back(drain);
  drain();
  for (auto& t : pool) t.join();
}

// First-failure slot usable from worker threads; keeps the smallest failing
// block id so the reported failure is deterministic.
struct failure_slot {
  std::atomic<std::int64_t> first{-1};
  void note(std::int64_t id) {
    std::int64_t cur = first.load();
    while ((cur < 0 || id < cur) && !first.compare_exchange_weak(cur, id)) {
    }
  }
  bool failed() const { return first.load() >= 0; }
};

// ---------------- Gauss-Legendre ----------------
struct gl_rule {
  std::vector<double> x;  // nodes on [-1, 1]
  std::vector<double> w;
};

inline const gl_rule& gauss_legendre(int q) {
  static std::mutex guard;
  static std::map<int, gl_rule> cache;
  std::lock_guard<std::mutex> lock(guard);
  auto it = cache.find(q);
  if (it != cache.end()) return it->second;
  gl_rule r;
  r.x.resize(q);
  r.w.resize(q);
  for (int i = 0; i < q; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (q + 0.5));  // Newton start
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= q; ++j) {
        double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = q * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    r.x[i] = x;
    r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  auto [pos, ok] = cache.emplace(q, std::move(r));
  (void)ok;
  return pos->second;
}

}  // namespace qk
