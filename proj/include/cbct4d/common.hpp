#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cbct4d {

/// Base class for every error raised by the toolkit.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    constexpr bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct Dims3 {
    int x = 1, y = 1, z = 1;

    constexpr std::size_t count() const {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
    }
    constexpr int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    constexpr bool operator==(const Dims3&) const = default;
};

/// Axis-aligned box in millimetres.
struct Box3 {
    Vec3 lo, hi;
};

namespace detail {

inline std::atomic<int>& thread_count_setting() {
    static std::atomic<int> n{0};
    return n;
}

}  // namespace detail

/// Caps the number of worker threads used by the parallel kernels (0 = hardware concurrency).
inline void set_thread_count(int n) { detail::thread_count_setting().store(std::max(0, n)); }

inline int thread_count() {
    int n = detail::thread_count_setting().load();
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

/// Splits [0, n) into contiguous chunks, one per worker. fn(begin, end, worker).
/// Chunk boundaries depend only on n and the worker count, so results are
/// reproducible for a fixed thread setting.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, int max_workers = 0) {
    int workers = max_workers > 0 ? std::min(max_workers, thread_count()) : thread_count();
    workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        fn(std::size_t{0}, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
    for (int t = 0; t < workers; ++t) {
        const std::size_t b = std::min(n, chunk * static_cast<std::size_t>(t));
        const std::size_t e = std::min(n, b + chunk);
        pool.emplace_back([&fn, b, e, t] { fn(b, e, t); });
    }
    for (auto& th : pool) th.join();
}

/// splitmix64 finaliser; used to derive independent per-view RNG seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace cbct4d
