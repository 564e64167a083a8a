#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>

namespace cfgraph {

/// Exact fixed-point accumulator for IEEE-754 double summands.
///
/// The running sum is held as a 2176-bit fixed-point number split into
/// 32-bit chunks stored in int64 slots (carry-save, Neal-style), spanning
/// every finite double from 2^-1074 up to 2^1023 with headroom for 2^60
/// summands. Addition and subtraction are exact, hence order-independent:
/// two accumulators holding the same multiset of contributions are
/// bit-identical after normalize(). This is what makes Gram downdates
/// byte-equal to fresh assembly.
class ExactSum {
public:
    // bit 0 of chunk 0 is 2^-1074; 66 chunks cover all finite doubles,
    // two extra chunks absorb carries.
    static constexpr int kChunks = 68;

    ExactSum() { clear(); }

    void clear() {
        chunks_.fill(0);
        countdown_ = kMaxPending;
    }

    void add(double x) { accumulate(x, /*negate=*/false); }
    void sub(double x) { accumulate(x, /*negate=*/true); }

    /// Canonicalize the carry-save representation. Idempotent; after this,
    /// chunks 0..66 are in [0, 2^32) and chunk 67 carries the sign.
    void normalize() {
        std::int64_t carry = 0;
        for (int i = 0; i + 1 < kChunks; ++i) {
            std::int64_t v = chunks_[i] + carry;
            carry = v >> 32;  // arithmetic shift
            chunks_[i] = v - (carry << 32);
        }
        chunks_[kChunks - 1] += carry;
        countdown_ = kMaxPending;
    }

    bool is_zero() const {
        ExactSum tmp = *this;
        tmp.normalize();
        for (auto c : tmp.chunks_)
            if (c != 0) return false;
        return true;
    }

    /// Round the exact sum to nearest double (ties to even).
    double to_double() const {
        ExactSum tmp = *this;
        tmp.normalize();
        bool negative = tmp.chunks_[kChunks - 1] < 0;
        std::array<std::uint64_t, kChunks> mag{};
        if (negative) {
            std::int64_t borrow = 0;
            for (int i = 0; i < kChunks; ++i) {
                std::int64_t v = -tmp.chunks_[i] - borrow;
                if (i + 1 < kChunks && v < 0) {
                    v += (std::int64_t{1} << 32);
                    borrow = 1;
                } else {
                    borrow = 0;
                }
                mag[i] = static_cast<std::uint64_t>(v);
            }
        } else {
            for (int i = 0; i < kChunks; ++i)
                mag[i] = static_cast<std::uint64_t>(tmp.chunks_[i]);
        }

        int hi = kChunks - 1;
        while (hi >= 0 && mag[hi] == 0) --hi;
        if (hi < 0) return 0.0;

        const int msb_in_chunk = 63 - std::countl_zero(mag[hi]);
        const long pos = 32L * hi + msb_in_chunk;  // global msb bit index

        if (pos <= 52) {
            // Entire value fits below 2^-1022: exact normal/subnormal result.
            std::uint64_t bits = mag[0] | (hi >= 1 ? (mag[1] << 32) : 0);
            double r = std::ldexp(static_cast<double>(bits), -1074);
            return negative ? -r : r;
        }

        // Assemble a 128-bit window whose top bit is the global msb.
        const int base_chunk = hi - 3;
        unsigned __int128 window = 0;
        bool sticky_low = false;
        for (int i = 0; i <= hi; ++i) {
            if (i < base_chunk) {
                sticky_low = sticky_low || (mag[i] != 0);
            } else {
                window |= static_cast<unsigned __int128>(mag[i])
                          << (32 * (i - std::max(base_chunk, 0)));
            }
        }
        const long pos_w = pos - 32L * std::max(base_chunk, 0);
        const long drop = pos_w - 52;  // > 0 here since pos > 52
        std::uint64_t mant = static_cast<std::uint64_t>(window >> drop);
        const bool guard = ((window >> (drop - 1)) & 1) != 0;
        bool sticky = sticky_low;
        if (drop > 1) {
            const unsigned __int128 mask =
                (static_cast<unsigned __int128>(1) << (drop - 1)) - 1;
            sticky = sticky || (window & mask) != 0;
        }
        long exp2 = pos - 52 - 1074;
        if (guard && (sticky || (mant & 1))) {
            ++mant;
            if (mant == (std::uint64_t{1} << 53)) {
                mant >>= 1;
                ++exp2;
            }
        }
        double r = std::ldexp(static_cast<double>(mant), static_cast<int>(exp2));
        return negative ? -r : r;
    }

    /// Bitwise-comparable canonical chunk view (after normalize()).
    const std::array<std::int64_t, kChunks>& raw_chunks() const { return chunks_; }
    std::array<std::int64_t, kChunks>& raw_chunks() { return chunks_; }

    friend bool operator==(const ExactSum& a, const ExactSum& b) {
        ExactSum x = a, y = b;
        x.normalize();
        y.normalize();
        return x.chunks_ == y.chunks_;
    }

private:
    static constexpr std::int32_t kMaxPending = 1 << 30;

    void accumulate(double x, bool negate) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
        const std::uint64_t frac = bits & ((std::uint64_t{1} << 52) - 1);
        const int exp_field = static_cast<int>((bits >> 52) & 0x7FF);
        if (exp_field == 0x7FF)
            throw std::domain_error("ExactSum: non-finite summand");
        std::uint64_t mant = frac;
        if (exp_field != 0) mant |= (std::uint64_t{1} << 52);
        if (mant == 0) return;
        const bool neg = ((bits >> 63) != 0) != negate;
        // value = mant * 2^(bitpos - 1074)
        const int bitpos = (exp_field == 0 ? 1 : exp_field) - 1;
        const int c = bitpos >> 5;
        const int sh = bitpos & 31;
        const unsigned __int128 wide = static_cast<unsigned __int128>(mant) << sh;
        const std::int64_t p0 = static_cast<std::int64_t>(
            static_cast<std::uint64_t>(wide) & 0xFFFFFFFFu);
        const std::int64_t p1 = static_cast<std::int64_t>(
            static_cast<std::uint64_t>(wide >> 32) & 0xFFFFFFFFu);
        const std::int64_t p2 =
            static_cast<std::int64_t>(static_cast<std::uint64_t>(wide >> 64));
        if (neg) {
            chunks_[c] -= p0;
            chunks_[c + 1] -= p1;
            chunks_[c + 2] -= p2;
        } else {
            chunks_[c] += p0;
            chunks_[c + 1] += p1;
            chunks_[c + 2] += p2;
        }
        if (--countdown_ == 0) normalize();
    }

    std::array<std::int64_t, kChunks> chunks_;
    std::int32_t countdown_;
};

/// Exact dot product of two double spans, rounded once at the end.
inline double exact_dot(const double* a, const double* b, std::size_t n) {
    ExactSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(a[i] * b[i]);
    return s.to_double();
}

}  // namespace cfgraph
