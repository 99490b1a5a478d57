#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace flowrecon {

// Error with a machine-readable category; the CLI surfaces the category on
// stderr and maps it to a nonzero exit code.
class FlowError : public std::runtime_error {
public:
    FlowError(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

[[noreturn]] inline void fail(const std::string& category, const std::string& message) {
    throw FlowError(category, message);
}

inline void require(bool cond, const std::string& category, const std::string& message) {
    if (!cond) fail(category, message);
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
};

inline Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
inline Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
inline Vec2 operator*(double s, Vec2 a) { return a *= s; }
inline Vec2 operator*(Vec2 a, double s) { return a *= s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm_sq(const Vec2& a) { return a.x * a.x + a.y * a.y; }
inline double norm(const Vec2& a) { return std::sqrt(norm_sq(a)); }

inline bool is_finite(const Vec2& a) { return std::isfinite(a.x) && std::isfinite(a.y); }

// All randomized operations take an explicit engine so callers own their
// streams; a fixed seed reproduces every draw.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace flowrecon
