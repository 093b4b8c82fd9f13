// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "mpicont/text.hpp"

namespace mpicont {

/// A non-negative decimal exactly as printed: units * 10^-scale. "2.01" is
/// {201, 2} and renders back as "2.01"; "2.010" keeps its three places.
class Decimal {
 public:
  static constexpr int kMaxDigits = 18;

  constexpr Decimal() = default;
  constexpr Decimal(std::int64_t units, int scale) : units_(units), scale_(scale) {}

  static std::optional<Decimal> parse(std::string_view s) {
    if (s.empty() || s.front() == '.' || s.back() == '.') return std::nullopt;
    std::int64_t units = 0;
    int scale = 0, digits = 0;
    bool seen_point = false;
    for (char c : s) {
      if (c == '.') {
        if (seen_point) return std::nullopt;
        seen_point = true;
        continue;
      }
      if (!text::is_digit(c) || ++digits > kMaxDigits) return std::nullopt;
      units = units * 10 + (c - '0');
      if (seen_point) ++scale;
    }
    return Decimal(units, scale);
  }

  std::int64_t units() const { return units_; }
  int scale() const { return scale_; }
  bool is_zero() const { return units_ == 0; }

  double to_double() const {
    long double v = static_cast<long double>(units_);
    for (int i = 0; i < scale_; ++i) v /= 10;
    return static_cast<double>(v);
  }

  std::string to_string() const {
    std::string digits = std::to_string(units_);
    if (scale_ == 0) return digits;
    if (static_cast<int>(digits.size()) <= scale_) {
      digits.insert(0, static_cast<std::size_t>(scale_ - static_cast<int>(digits.size()) + 1), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(scale_), ".");
    return digits;
  }

  /// |a - b| / |a| computed on the exact decimal values; the only rounding is
  /// the final division. Returns nothing when a is zero.
  static std::optional<double> relative_difference(const Decimal& a, const Decimal& b) {
    if (a.is_zero()) return std::nullopt;
    int scale = a.scale_ > b.scale_ ? a.scale_ : b.scale_;
    __int128 x = a.units_, y = b.units_;
    for (int i = a.scale_; i < scale; ++i) x *= 10;
    for (int i = b.scale_; i < scale; ++i) y *= 10;
    __int128 diff = x > y ? x - y : y - x;
    return static_cast<double>(static_cast<long double>(diff) / static_cast<long double>(x));
  }

  /// Same printed representation (value and number of decimal places).
  friend bool operator==(const Decimal&, const Decimal&) = default;

 private:
  std::int64_t units_ = 0;
  int scale_ = 0;
};

}  // namespace mpicont
