#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// Thrown on malformed configs, files and schema violations.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Thread pool with deterministic work splitting.
//
// Chunk boundaries are a function of the problem size only, never of the
// worker count, so per-chunk partial results can be folded in chunk order
// and yield bit-identical totals for any --threads value.
// ---------------------------------------------------------------------------

class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // Number of workers incl. the calling thread. Not thread safe; set once
  // at startup (CLI --threads).
  void set_threads(int n) {
    std::lock_guard<std::mutex> lk(config_mutex_);
    desired_ = n < 1 ? 1 : n;
  }
  int threads() {
    std::lock_guard<std::mutex> lk(config_mutex_);
    return desired_;
  }

  // Runs fn(chunk_index) for chunk_index in [0, n_chunks). fn must only
  // touch state owned by its chunk.
  void run_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& fn) {
    if (n_chunks == 0) return;
    int workers = threads();
    if (workers <= 1 || n_chunks == 1) {
      for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
      return;
    }
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (;;) {
        std::size_t c = cursor.fetch_add(1);
        if (c >= n_chunks) return;
        try {
          fn(c);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    int spawn = static_cast<int>(std::min<std::size_t>(workers, n_chunks)) - 1;
    pool.reserve(spawn);
    for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

 private:
  ThreadPool() = default;
  std::mutex config_mutex_;
  int desired_ = []() {
    unsigned hc = std::thread::hardware_concurrency();
    return static_cast<int>(hc == 0 ? 1 : (hc > 8 ? 8 : hc));
  }();
};

// parallel_for over [0, n): body(i) writes only to slot i (or other
// disjoint state). Chunk grain fixed so scheduling is irrelevant.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t grain = 256) {
  if (n == 0) return;
  std::size_t n_chunks = (n + grain - 1) / grain;
  ThreadPool::instance().run_chunks(n_chunks, [&](std::size_t c) {
    std::size_t lo = c * grain;
    std::size_t hi = std::min(n, lo + grain);
    for (std::size_t i = lo; i < hi; ++i) body(i);
  });
}

// Deterministic parallel reduction: per-chunk partials folded in chunk
// order. fold(acc, partial) must be the same op regardless of threads.
template <typename T, typename ChunkFn, typename Fold>
T parallel_reduce(std::size_t n, T init, ChunkFn&& chunk_fn, Fold&& fold,
                  std::size_t grain = 1024) {
  if (n == 0) return init;
  std::size_t n_chunks = (n + grain - 1) / grain;
  std::vector<T> partials(n_chunks, init);
  ThreadPool::instance().run_chunks(n_chunks, [&](std::size_t c) {
    std::size_t lo = c * grain;
    std::size_t hi = std::min(n, lo + grain);
    partials[c] = chunk_fn(lo, hi);
  });
  T acc = init;
  for (std::size_t c = 0; c < n_chunks; ++c) acc = fold(acc, partials[c]);
  return acc;
}

// FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace fsplat
