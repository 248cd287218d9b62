#ifndef MULTIGAUSS_VARIANT_HPP
#define MULTIGAUSS_VARIANT_HPP

#include <string>
#include <string_view>

#include "multigauss/errors.hpp"
#include "multigauss/gaussian.hpp"

namespace multigauss {

// full: mean + packed lower triangle. independent: mean + one raw standard
// deviation per dimension. mse: mean only, trained as a point estimator.
enum class Variant { full, independent, mse };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::independent: return "independent";
    case Variant::mse: return "mse";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::full;
  if (name == "independent" || name == "indep") return Variant::independent;
  if (name == "mse") return Variant::mse;
  throw InvalidConfig("unknown variant '" + std::string(name) + "' (expected full, independent or mse)");
}

/// Raw head width for a variant over `n` label dimensions: 20 / 10 / 5 at n = 5.
constexpr Index raw_output_dim(Variant v, Index n = kQualityDims) {
  switch (v) {
    case Variant::full: return n + triangle_size(n);
    case Variant::independent: return 2 * n;
    case Variant::mse: return n;
  }
  return 0;
}

}  // namespace multigauss

#endif  // MULTIGAUSS_VARIANT_HPP
