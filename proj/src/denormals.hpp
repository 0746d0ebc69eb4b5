#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define FELLER_HAS_MXCSR 1
#endif

namespace feller::detail {

/// Flushes subnormal results and operands to zero for the lifetime of the
/// guard, restoring the caller's mode on exit. Gaussian tails underflow into
/// the subnormal range inside dense kernel products, where subnormal
/// arithmetic runs several times slower; the values lost are below 1e-307.
class FlushDenormals {
 public:
#ifdef FELLER_HAS_MXCSR
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFtz | kDaz); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
#else
  FlushDenormals() = default;
#endif
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
#ifdef FELLER_HAS_MXCSR
  static constexpr unsigned kFtz = 0x8000;
  static constexpr unsigned kDaz = 0x0040;
  unsigned saved_;
#endif
};

}  // namespace feller::detail
