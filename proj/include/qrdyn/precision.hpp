#pragma once

#include <boost/multiprecision/mpfr.hpp>

namespace qrdyn {

/// MPFR-backed real used to shadow deep backward orbits. Each step of a
/// Zorich backward chain costs about four bits, so 512 bits cover chains of
/// roughly one hundred steps. Link with qrdyn::mpfr.
using HighPrecision = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<512>>;

}  // namespace qrdyn
