#include "mupp/rational.hpp"

#include <cctype>
#include <stdexcept>

namespace mupp {

namespace {

std::int64_t parse_int(const std::string& s, const std::string& whole) {
  if (s.empty()) throw std::invalid_argument("malformed rational: '" + whole + "'");
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) throw std::invalid_argument("malformed rational: '" + whole + "'");
  for (std::size_t k = i; k < s.size(); ++k)
    if (!std::isdigit(static_cast<unsigned char>(s[k])))
      throw std::invalid_argument("malformed rational: '" + whole + "'");
  try {
    return std::stoll(s);
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("rational out of range: '" + whole + "'");
  }
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Rational parse_rational(const std::string& text) {
  const std::string s = trim(text);
  if (auto slash = s.find('/'); slash != std::string::npos) {
    auto num = parse_int(trim(s.substr(0, slash)), text);
    auto den = parse_int(trim(s.substr(slash + 1)), text);
    if (den == 0) throw std::invalid_argument("zero denominator: '" + text + "'");
    return Rational(num, den);
  }
  if (auto dot = s.find('.'); dot != std::string::npos) {
    std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
    bool neg = !ip.empty() && ip[0] == '-';
    if (ip == "-" || ip == "+" || ip.empty()) ip += "0";
    if (fp.empty() || fp.size() > 15) throw std::invalid_argument("malformed rational: '" + text + "'");
    std::int64_t whole = parse_int(ip, text);
    std::int64_t frac = parse_int(fp, text);
    if (fp[0] == '-' || fp[0] == '+') throw std::invalid_argument("malformed rational: '" + text + "'");
    std::int64_t den = 1;
    for (std::size_t k = 0; k < fp.size(); ++k) den *= 10;
    Rational r = Rational(whole) + Rational(neg ? -frac : frac, den);
    return r;
  }
  return Rational(parse_int(s, text));
}

std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

std::string to_string(const ExtRational& r) { return r ? to_string(*r) : std::string("inf"); }

}  // namespace mupp
