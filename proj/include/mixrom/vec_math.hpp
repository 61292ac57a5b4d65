#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>

// Vector-extension arguments change the ABI only between translation units
// built for different ISAs; everything here is inline.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wpsabi"

namespace mixrom::detail {

/// Eight doubles as a GCC/Clang vector; the compiler lowers it to whatever
/// SIMD width the target offers.
using v8d = double __attribute__((vector_size(64)));
using v8i = std::int64_t __attribute__((vector_size(64)));

inline v8d splat(double v) noexcept { return v8d{v, v, v, v, v, v, v, v}; }

inline v8d load(const double* p) noexcept {
    v8d v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline void store(double* p, v8d v) noexcept { std::memcpy(p, &v, sizeof(v)); }

/// exp for non-positive arguments. Cody-Waite reduction to |r| <= ln2/2 and
/// the degree-13 Taylor polynomial (Estrin order); agrees with std::exp to a
/// few ulp. Results below ~1e-308 flush to 0; positive inputs act as 0.
inline v8d exp_nonpositive(v8d raw) noexcept {
    const v8d lo_limit = splat(-708.0);
    const v8d zero = splat(0.0);
    const v8d shift = splat(0x1.8p52);
    v8d x = raw < lo_limit ? lo_limit : raw;
    x = x > zero ? zero : x;
    const v8d s = x * splat(1.4426950408889634) + shift;
    const v8d k = s - shift;
    v8d r = x - k * splat(0x1.62e42fee00000p-1);
    r = r - k * splat(0x1.a39ef35793c76p-33);
    const v8d r2 = r * r;
    const v8d r4 = r2 * r2;
    const v8d r8 = r4 * r4;
    const v8d p01 = splat(1.0) + r;
    const v8d p23 = splat(0.5) + r * splat(1.0 / 6.0);
    const v8d p45 = splat(1.0 / 24.0) + r * splat(1.0 / 120.0);
    const v8d p67 = splat(1.0 / 720.0) + r * splat(1.0 / 5040.0);
    const v8d p89 = splat(1.0 / 40320.0) + r * splat(1.0 / 362880.0);
    const v8d p1011 = splat(1.0 / 3628800.0) + r * splat(1.0 / 39916800.0);
    const v8d p1213 = splat(1.0 / 479001600.0) + r * splat(1.0 / 6227020800.0);
    const v8d q0 = p01 + r2 * p23;
    const v8d q1 = p45 + r2 * p67;
    const v8d q2 = p89 + r2 * p1011;
    const v8d p = (q0 + r4 * q1) + r8 * (q2 + r4 * p1213);
    // The low mantissa bits of s hold k in two's complement.
    v8i bits;
    std::memcpy(&bits, &s, sizeof(bits));
    v8i shift_bits;
    std::memcpy(&shift_bits, &shift, sizeof(shift_bits));
    bits = (bits - shift_bits + 1023) << 52;
    v8d scale;
    std::memcpy(&scale, &bits, sizeof(scale));
    return raw < lo_limit ? zero : p * scale;
}

inline double horizontal_sum(v8d v) noexcept {
    return ((v[0] + v[4]) + (v[1] + v[5])) + ((v[2] + v[6]) + (v[3] + v[7]));
}

/// In-place exp_nonpositive over an array.
inline void exp_nonpositive_inplace(double* v, std::size_t n) noexcept {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        store(v + i, exp_nonpositive(load(v + i)));
    }
    if (i < n) {
        double tail[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        std::memcpy(tail, v + i, (n - i) * sizeof(double));
        store(tail, exp_nonpositive(load(tail)));
        std::memcpy(v + i, tail, (n - i) * sizeof(double));
    }
}

}  // namespace mixrom::detail

#pragma GCC diagnostic pop
