#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spade {

enum class Errc {
  degenerate_side,
  point_outside_rect,
  node_out_of_range,
  dimension_mismatch,
  invalid_argument,
  empty_point_set,
  instance_too_large,
  no_valid_split,
  max_leaves_exceeded,
  zero_normalizer,
  degenerate_denominator,
  no_closed_form,
  missing_variation,
  invalid_shape,
  non_finite,
  parse_error,
  io_error,
};

constexpr std::string_view to_string(Errc e) noexcept {
  switch (e) {
    case Errc::degenerate_side: return "DegenerateSide";
    case Errc::point_outside_rect: return "PointOutsideRect";
    case Errc::node_out_of_range: return "NodeOutOfRange";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::empty_point_set: return "EmptyPointSet";
    case Errc::instance_too_large: return "InstanceTooLarge";
    case Errc::no_valid_split: return "NoValidSplit";
    case Errc::max_leaves_exceeded: return "MaxLeavesExceeded";
    case Errc::zero_normalizer: return "ZeroNormalizer";
    case Errc::degenerate_denominator: return "DegenerateDenominator";
    case Errc::no_closed_form: return "NoClosedForm";
    case Errc::missing_variation: return "MissingVariation";
    case Errc::invalid_shape: return "InvalidShape";
    case Errc::non_finite: return "NonFinite";
    case Errc::parse_error: return "ParseError";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

/// Error raised by every spade operation. The code identifies the failure
/// class; what() carries a human-readable detail message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

inline void require(bool cond, Errc code, const std::string& detail) {
  if (!cond) fail(code, detail);
}

}  // namespace spade
