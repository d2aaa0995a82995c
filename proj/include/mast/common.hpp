#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mast {

// ---------------------------------------------------------------------------
// Errors

/// Dimension/shape violation in a tensor op. Message names the op and dims.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Text format violation; message carries a line number where applicable.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Procedural generation could not satisfy its constraints.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Global numeric precision.
//
// Tensors always store 64-bit floats. In f32 mode every op output (and every
// optimizer result) is rounded to the nearest 32-bit value, and the matmul /
// conv kernels run their inner loops in single precision for throughput.

enum class Precision { f64, f32 };

Precision precision();
void set_precision(Precision p);

inline double round_to_mode(double v, Precision p) {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

void round_span_to_mode(std::span<double> xs);

// Debug-mode finite checks: when enabled, every forward op output is scanned
// for NaN/Inf and a ContractError is raised naming the op.
bool finite_checks_enabled();
void set_finite_checks(bool on);

// ---------------------------------------------------------------------------
// Deterministic RNG. All stochastic code in the project draws from Rng so
// that runs are reproducible for a fixed seed on a fixed build.

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  /// Standard normal (Box-Muller, cached spare).
  double normal();

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derive an independent stream seed from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Order-invariant summation.
//
// Reductions over map cells must give bitwise-identical results no matter how
// the cells are enumerated (the egocentric map may be presented in any of its
// rotations). Plain floating addition is not associative, so these helpers
// quantize all addends onto a common power-of-two grid sized from max|x| and
// the count; on that grid every partial sum is exact, making the total
// independent of summation order.

double stable_sum(std::span<const double> xs);
/// Order-invariant sum of products a[i]*b[i].
double stable_dot(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Worker pool. Granularity is one task per environment / sequence; outputs
// are combined by the caller in task order, so results never depend on the
// worker count or on scheduling.

/// min(hardware threads, MAST_THREADS) — at least 1.
int worker_count();

/// Run fn(0..n-1), possibly in parallel. Blocks until all tasks finish.
/// Exceptions from tasks are rethrown (first task index wins).
void parallel_tasks(int n, const std::function<void(int)>& fn);

}  // namespace mast
