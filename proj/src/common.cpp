#include "mast/common.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace mast {

namespace {
Precision g_precision = Precision::f64;
bool g_finite_checks = false;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

void round_span_to_mode(std::span<double> xs) {
  if (g_precision == Precision::f64) return;
  for (double& v : xs) v = static_cast<double>(static_cast<float>(v));
}

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool on) { g_finite_checks = on; }

Rng::Rng(std::uint64_t seed) : state_(seed) {
  // Warm up so that small seeds do not produce correlated early draws.
  for (int i = 0; i < 4; ++i) splitmix64(state_);
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw ContractError("uniform_int: empty range");
  std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * M_PI * u2);
  has_spare_ = true;
  return mag * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base ^ (0x632be59bd9b4e019ULL * (stream + 1));
  splitmix64(x);
  splitmix64(x);
  return x;
}

// ---------------------------------------------------------------------------
// Order-invariant summation

namespace {
// Smallest power of two >= n, as an exponent.
int ceil_log2(std::size_t n) {
  int e = 0;
  std::size_t v = 1;
  while (v < n) {
    v <<= 1;
    ++e;
  }
  return e;
}

// Sum of xs quantized to a grid on which all additions are exact.
// max_abs must be max|xs[i]| and > 0.
double quantized_sum(std::span<const double> xs, double max_abs) {
  int em = 0;
  std::frexp(max_abs, &em);  // max_abs in [2^(em-1), 2^em)
  const int shift = ceil_log2(xs.size()) + 1;
  const double grid = std::ldexp(1.0, em - 53 + shift);
  const double inv_grid = 1.0 / grid;
  double acc = 0.0;
  for (double v : xs) acc += std::nearbyint(v * inv_grid);
  return acc * grid;
}
}  // namespace

double stable_sum(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double m = 0.0;
  for (double v : xs) m = std::max(m, std::fabs(v));
  if (m == 0.0) return 0.0;
  if (!std::isfinite(m)) {
    // Fall back to plain order for non-finite data; the result is already
    // poisoned and debug checks will flag it upstream.
    double acc = 0.0;
    for (double v : xs) acc += v;
    return acc;
  }
  return quantized_sum(xs, m);
}

double stable_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("stable_dot: length mismatch");
  if (a.empty()) return 0.0;
  thread_local std::vector<double> scratch;
  scratch.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) scratch[i] = a[i] * b[i];
  return stable_sum(scratch);
}

// ---------------------------------------------------------------------------
// Worker pool

namespace {

int read_worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("MAST_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < hw) hw = cap;
  }
  return hw;
}

class Pool {
 public:
  explicit Pool(int n_workers) {
    for (int i = 0; i < n_workers; ++i)
      threads_.emplace_back([this] { worker(); });
  }

  ~Pool() {
    {
      std::unique_lock lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(int n, const std::function<void(int)>& fn) {
    std::unique_lock lock(mu_);
    fn_ = &fn;
    next_ = 0;
    total_ = n;
    pending_ = n;
    first_error_ = nullptr;
    cv_.notify_all();
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (first_error_) std::rethrow_exception(first_error_);
  }

 private:
  void worker() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [this] { return stopping_ || (fn_ && next_ < total_); });
      if (stopping_) return;
      while (fn_ && next_ < total_) {
        int idx = next_++;
        const std::function<void(int)>* fn = fn_;
        lock.unlock();
        std::exception_ptr err;
        try {
          (*fn)(idx);
        } catch (...) {
          err = std::current_exception();
        }
        lock.lock();
        if (err && !first_error_) first_error_ = err;
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int)>* fn_ = nullptr;
  int next_ = 0, total_ = 0, pending_ = 0;
  bool stopping_ = false;
  std::exception_ptr first_error_;
};

}  // namespace

int worker_count() {
  static int n = read_worker_count();
  return n;
}

void parallel_tasks(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (worker_count() == 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  static Pool pool(worker_count());
  pool.run(n, fn);
}

}  // namespace mast
