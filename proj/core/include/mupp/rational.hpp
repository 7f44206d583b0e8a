#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <optional>
#include <string>

// C++20 rewritten comparison candidates make boost's mixed rational/int
// operator== recurse; exact-match overloads sidestep the templates.
namespace boost {
inline bool operator==(const rational<std::int64_t>& a, int b) { return a == rational<std::int64_t>(b); }
inline bool operator==(int b, const rational<std::int64_t>& a) { return a == rational<std::int64_t>(b); }
}  // namespace boost

namespace mupp {

using Rational = boost::rational<std::int64_t>;

/// Parses "p/q", "p", or a finite decimal such as "-0.25".
/// Throws std::invalid_argument on malformed input.
Rational parse_rational(const std::string& text);

/// "p" for integers, "p/q" otherwise (always reduced, q > 0).
std::string to_string(const Rational& r);

inline double to_double(const Rational& r) {
  return boost::rational_cast<double>(r);
}

inline Rational half() { return Rational(1, 2); }

/// Exponent that may be +infinity (a layer that is never perturbed).
using ExtRational = std::optional<Rational>;

inline ExtRational ext_min(const ExtRational& a, const ExtRational& b) {
  if (!a) return b;
  if (!b) return a;
  return std::min(*a, *b);
}

std::string to_string(const ExtRational& r);

}  // namespace mupp
