#pragma once

// Simulated reduced-precision arithmetic. A ChopFormat describes a binary
// floating-point format (exponent and stored-fraction widths); chop() rounds
// an fp64 value to the nearest representable value of that format.
//
// Arith threads the format through kernels explicitly so that concurrent
// runs in different formats never share state.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fipk {

struct ChopFormat {
  int exponent_bits = 11;
  int significand_bits = 52;  // stored fraction bits
  bool subnormals = true;

  constexpr int bias() const { return (1 << (exponent_bits - 1)) - 1; }
  constexpr int emin() const { return 1 - bias(); }
  constexpr int emax() const { return bias(); }
  double max_value() const {
    return (2.0 - std::ldexp(1.0, -significand_bits)) * std::ldexp(1.0, bias());
  }
  double min_normal() const { return std::ldexp(1.0, emin()); }
  double min_subnormal() const { return std::ldexp(1.0, emin() - significand_bits); }

  void validate() const {
    if (exponent_bits < 2 || exponent_bits > 11)
      throw std::invalid_argument("ChopFormat: exponent_bits must be in [2, 11]");
    if (significand_bits < 1 || significand_bits > 52)
      throw std::invalid_argument("ChopFormat: significand_bits must be in [1, 52]");
  }

  static constexpr ChopFormat fp16() { return {5, 10, true}; }
  static constexpr ChopFormat bfloat16() { return {8, 7, true}; }
  static constexpr ChopFormat q43() { return {4, 3, true}; }
  static constexpr ChopFormat fp32() { return {8, 23, true}; }
};

/// Round x to the nearest value representable in fmt (ties to even).
/// Magnitudes beyond the largest finite value become infinite.
inline double chop(double x, const ChopFormat& fmt) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const int t = fmt.significand_bits + 1;  // precision incl. hidden bit
  int e2 = 0;
  std::frexp(x, &e2);  // |x| = f * 2^e2, f in [0.5, 1)
  int e = e2 - 1;
  if (e < fmt.emin()) {
    if (!fmt.subnormals) {
      // flush values below the normal range
      const double r = std::copysign(fmt.min_normal(), x);
      return std::fabs(x) >= 0.5 * fmt.min_normal() ? r : std::copysign(0.0, x);
    }
    e = fmt.emin();
  }
  const int q = e - (t - 1);  // exponent of one unit in the last place
  const double r = std::ldexp(std::nearbyint(std::ldexp(x, -q)), q);
  if (std::fabs(r) > fmt.max_value()) return std::copysign(std::numeric_limits<double>::infinity(), x);
  return r;
}

/// Parse "fp64", "fp32", "fp16", "bf16", "q43" or "custom:E,S".
/// Returns nullopt for fp64 (no rounding).
inline std::optional<ChopFormat> parse_precision(std::string_view name) {
  if (name == "fp64" || name == "double") return std::nullopt;
  if (name == "fp32" || name == "single") return ChopFormat::fp32();
  if (name == "fp16" || name == "half") return ChopFormat::fp16();
  if (name == "bf16") return ChopFormat::bfloat16();
  if (name == "q43") return ChopFormat::q43();
  constexpr std::string_view prefix = "custom:";
  if (name.substr(0, prefix.size()) == prefix) {
    const std::string rest(name.substr(prefix.size()));
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("precision: expected custom:E,S");
    ChopFormat fmt;
    try {
      fmt.exponent_bits = std::stoi(rest.substr(0, comma));
      fmt.significand_bits = std::stoi(rest.substr(comma + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("precision: expected custom:E,S");
    }
    fmt.validate();
    return fmt;
  }
  throw std::invalid_argument("unknown precision '" + std::string(name) + "'");
}

/// Operation counters used to audit solver kernels.
struct KernelCounters {
  std::atomic<std::uint64_t> applies{0};
  std::atomic<std::uint64_t> transpose_applies{0};
  std::atomic<std::uint64_t> dots{0};

  void reset() {
    applies = 0;
    transpose_applies = 0;
    dots = 0;
  }
};

/// Arithmetic context: every add/sub/mul/div/sqrt result is rounded through
/// chop() when a format is set; without a format all operations are plain
/// fp64. Comparisons never round.
class Arith {
 public:
  Arith() = default;
  explicit Arith(std::optional<ChopFormat> fmt, KernelCounters* counters = nullptr)
      : fmt_(fmt), counters_(counters) {
    if (fmt_) fmt_->validate();
  }

  static Arith exact() { return Arith{}; }

  bool chopping() const { return fmt_.has_value(); }
  const std::optional<ChopFormat>& format() const { return fmt_; }
  KernelCounters* counters() const { return counters_; }
  Arith with_counters(KernelCounters* c) const { return Arith(fmt_, c); }

  double round(double x) const { return fmt_ ? chop(x, *fmt_) : x; }
  double add(double a, double b) const { return round(a + b); }
  double sub(double a, double b) const { return round(a - b); }
  double mul(double a, double b) const { return round(a * b); }
  double div(double a, double b) const { return round(a / b); }
  double sqrt(double a) const { return round(std::sqrt(a)); }
  /// a - b*c with both operations rounded.
  double fnms(double a, double b, double c) const { return sub(a, mul(b, c)); }

  void round_inplace(std::span<double> v) const {
    if (!fmt_) return;
    for (double& x : v) x = chop(x, *fmt_);
  }

  /// Inner product with pairwise summation, every product and partial sum
  /// rounded. Counted, since basis construction must never need one.
  /// A left-to-right sum would stall under coarse formats (in q43, 16 + 1
  /// rounds back to 16), hiding the overflow a large norm should produce.
  double dot(std::span<const double> x, std::span<const double> y) const {
    if (counters_) ++counters_->dots;
    if (x.empty()) return 0.0;
    std::vector<double> t(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) t[i] = mul(x[i], y[i]);
    for (std::size_t len = t.size(); len > 1; len = (len + 1) / 2) {
      for (std::size_t i = 0; i < len / 2; ++i) t[i] = add(t[2 * i], t[2 * i + 1]);
      if (len % 2) t[len / 2] = t[len - 1];
    }
    return t[0];
  }
  double norm2(std::span<const double> x) const { return sqrt(dot(x, x)); }

  /// Index of the largest-magnitude entry (first one on ties). No rounding.
  static std::size_t index_amax(std::span<const double> x) {
    std::size_t best = 0;
    double bv = -1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double a = std::fabs(x[i]);
      if (a > bv) {
        bv = a;
        best = i;
      }
    }
    return best;
  }
  static double amax(std::span<const double> x) {
    return x.empty() ? 0.0 : std::fabs(x[index_amax(x)]);
  }

  /// y <- y - alpha * x
  void axpy_neg(double alpha, std::span<const double> x, std::span<double> y) const {
    if (!fmt_) {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] -= alpha * x[i];
      return;
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fnms(y[i], alpha, x[i]);
  }
  /// y <- y + alpha * x
  void axpy(double alpha, std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = add(y[i], mul(alpha, x[i]));
  }
  void scale_div(std::span<double> y, double d) const {
    for (double& v : y) v = div(v, d);
  }

  void count_apply() const {
    if (counters_) ++counters_->applies;
  }
  void count_transpose_apply() const {
    if (counters_) ++counters_->transpose_applies;
  }

 private:
  std::optional<ChopFormat> fmt_;
  KernelCounters* counters_ = nullptr;
};

/// Context whose operations round through fmt.
inline Arith chopped_kernel_context(const ChopFormat& fmt, KernelCounters* counters = nullptr) {
  return Arith(fmt, counters);
}

inline std::string precision_name(const std::optional<ChopFormat>& fmt) {
  if (!fmt) return "fp64";
  if (fmt->exponent_bits == 5 && fmt->significand_bits == 10) return "fp16";
  if (fmt->exponent_bits == 4 && fmt->significand_bits == 3) return "q43";
  if (fmt->exponent_bits == 8 && fmt->significand_bits == 23) return "fp32";
  if (fmt->exponent_bits == 8 && fmt->significand_bits == 7) return "bf16";
  return "custom:" + std::to_string(fmt->exponent_bits) + "," + std::to_string(fmt->significand_bits);
}

}  // namespace fipk
