#pragma once

#include <cmath>

namespace tsearch {

/// Planar point or vector in meters.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }
  friend constexpr Vec2 operator*(const Vec2& v, double s) { return {s * v.x, s * v.y}; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }
inline double squared_norm(const Vec2& v) { return v.x * v.x + v.y * v.y; }
inline double distance(const Vec2& a, const Vec2& b) { return norm(a - b); }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kPi = 3.14159265358979323846;
  constexpr double kTwoPi = 2.0 * kPi;
  a = std::fmod(a, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  if (a > kPi) a -= kTwoPi;
  return a;
}

}  // namespace tsearch
