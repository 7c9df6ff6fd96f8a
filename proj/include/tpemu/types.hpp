#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tpemu {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Violated precondition or malformed user input; the CLI maps this to exit code 2.
class input_error : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Failed numerical step (singular factor, non-finite result); CLI exit code 1.
class numeric_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw input_error(msg);
}

// splitmix64 finalizer; derives independent sub-stream seeds from (seed, index)
// so fan-out work stays reproducible regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Worker cap: TPRS_EMU_THREADS if set (>= 1), else hardware concurrency.
inline int thread_cap() {
  if (const char* env = std::getenv("TPRS_EMU_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Each task writes only to its own pre-sized slot,
// so results do not depend on how work is scheduled.
template <class Fn>
void parallel_for(int n, Fn&& fn, int max_threads = -1) {
  int cap = max_threads > 0 ? max_threads : thread_cap();
  int workers = std::min(cap, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tpemu
