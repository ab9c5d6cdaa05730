#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include "fpf/errors.hpp"

namespace fpf {

// Order-independent accumulator: every term is truncated to a 128-bit fixed
// point number with 2^-80 resolution, so the result does not depend on the
// order of the terms (and therefore not on particle labels or thread layout).
// Terms must stay below 2^40 in magnitude and the running sum below 2^46.
class ExactSum {
public:
    static constexpr int kFractionBits = 80;

    void add(double v) {
        if (!std::isfinite(v)) throw DomainError("ExactSum: non-finite term");
        const auto bits = std::bit_cast<std::uint64_t>(v);
        const int exponent = static_cast<int>((bits >> 52) & 0x7ff);
        if (exponent == 0) return; // zero or subnormal, far below resolution
        const std::uint64_t mantissa = (bits & ((std::uint64_t{1} << 52) - 1)) | (std::uint64_t{1} << 52);
        const int shift = exponent - 1075 + kFractionBits;
        if (shift > 67) throw DomainError("ExactSum: term magnitude exceeds 2^40");
        __int128 fixed;
        if (shift >= 0) {
            fixed = static_cast<__int128>(mantissa) << shift;
        } else if (shift > -64) {
            fixed = static_cast<__int128>(mantissa >> (-shift));
        } else {
            return;
        }
        acc_ += (bits >> 63) ? -fixed : fixed;
    }

    double value() const {
        return std::ldexp(static_cast<double>(acc_), -kFractionBits);
    }

private:
    __int128 acc_ = 0;
};

} // namespace fpf
