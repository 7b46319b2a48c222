#pragma once

#include <atomic>
#include <cstdint>
#include <cstddef>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace crwkv {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ParamError : std::runtime_error {
    explicit ParamError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

// ---------------------------------------------------------------------------
// Allocation tracking. Every Tensor buffer goes through TrackingAllocator so
// peak working-set measurements are exact and platform independent.
// ---------------------------------------------------------------------------

namespace memstat {

inline std::atomic<std::int64_t> current_bytes{0};
inline std::atomic<std::int64_t> peak_bytes{0};

inline void on_alloc(std::int64_t n) {
    std::int64_t cur = current_bytes.fetch_add(n) + n;
    std::int64_t peak = peak_bytes.load();
    while (cur > peak && !peak_bytes.compare_exchange_weak(peak, cur)) {}
}

inline void on_free(std::int64_t n) { current_bytes.fetch_sub(n); }

inline void reset_peak() { peak_bytes.store(current_bytes.load()); }

}  // namespace memstat

template <typename T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() = default;
    template <typename U>
    TrackingAllocator(const TrackingAllocator<U>&) {}

    T* allocate(std::size_t n) {
        memstat::on_alloc(static_cast<std::int64_t>(n * sizeof(T)));
        return static_cast<T*>(::operator new(n * sizeof(T)));
    }
    void deallocate(T* p, std::size_t n) {
        memstat::on_free(static_cast<std::int64_t>(n * sizeof(T)));
        ::operator delete(p);
    }
    bool operator==(const TrackingAllocator&) const { return true; }
    bool operator!=(const TrackingAllocator&) const { return false; }
};

// ---------------------------------------------------------------------------
// Deterministic RNG (PCG32 core). std:: distributions are avoided so streams
// are reproducible bit-for-bit across library versions.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 1) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        return (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
    }

    // uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // full state for checkpoint resume
    struct State {
        std::uint64_t state, inc;
        double spare;
        bool has_spare;
    };
    State save() const { return {state_, inc_, spare_, has_spare_}; }
    void restore(const State& s) {
        state_ = s.state;
        inc_ = s.inc;
        spare_ = s.spare;
        has_spare_ = s.has_spare;
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Thread control. Work is split over disjoint output ranges only, so results
// are bit-identical for every thread count; --threads 1 forces serial runs.
// ---------------------------------------------------------------------------

int num_threads();
void set_num_threads(int n);

namespace detail {

template <typename F>
void parallel_for_range(std::int64_t n, F&& body) {
    int nt = num_threads();
    if (nt <= 1 || n < 2) {
        body(std::int64_t{0}, n);
        return;
    }
    std::int64_t chunks = std::min<std::int64_t>(nt, n);
    std::int64_t per = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(chunks));
    for (std::int64_t c = 0; c < chunks; ++c) {
        std::int64_t lo = c * per;
        std::int64_t hi = std::min(n, lo + per);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

// body(i) is called once per index; indices never shared between threads
template <typename F>
void parallel_for(std::int64_t n, F&& body) {
    detail::parallel_for_range(n, [&body](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) body(i);
    });
}

}  // namespace crwkv
