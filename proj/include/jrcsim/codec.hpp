#pragma once

#include <bit>
#include <limits>

#include "jrcsim/common.hpp"

namespace jrcsim {

using BitVec = std::vector<std::uint8_t>;

/// Zero-tailed convolutional code with a row-in/column-out block interleaver
/// applied per coded chunk of interleaver_rows * interleaver_cols bits.
struct CodecSpec {
    unsigned constraint_length = 7;
    std::vector<unsigned> generators_octal = {0171, 0133};
    std::size_t interleaver_rows = 0;
    std::size_t interleaver_cols = 0;
    bool zero_tail = true;

    std::size_t rate_denominator() const { return generators_octal.size(); }
    std::size_t chunk_bits() const { return interleaver_rows * interleaver_cols; }

    std::size_t coded_length(std::size_t message_bits) const {
        return rate_denominator() * (message_bits + (zero_tail ? constraint_length - 1 : 0));
    }

    /// Largest message length whose zero-tailed codeword fills exactly
    /// `coded_bits` coded bits.
    std::size_t message_length_for(std::size_t coded_bits) const {
        if (coded_bits % rate_denominator() != 0)
            throw ArgumentError("CodecSpec: coded length not divisible by 1/rate");
        const std::size_t steps = coded_bits / rate_denominator();
        const std::size_t tail = zero_tail ? constraint_length - 1 : 0;
        if (steps <= tail) throw ArgumentError("CodecSpec: coded block too short for tail");
        return steps - tail;
    }

    void validate() const {
        if (constraint_length < 2 || constraint_length > 16)
            throw ConfigError("CodecSpec: constraint length out of range");
        if (generators_octal.empty()) throw ConfigError("CodecSpec: need generator polynomials");
        const unsigned mask = (1u << constraint_length) - 1u;
        for (unsigned g : generators_octal)
            if (g == 0 || g > mask) throw ConfigError("CodecSpec: generator polynomial out of range");
    }
};

namespace detail {

inline std::uint8_t parity(unsigned v) { return static_cast<std::uint8_t>(std::popcount(v) & 1); }

}  // namespace detail

/// Row-in/column-out interleaving of one chunk.
inline void interleave_chunk(const std::uint8_t* in, std::uint8_t* out, std::size_t rows,
                             std::size_t cols) {
    std::size_t j = 0;
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) out[j++] = in[r * cols + c];
}

template <typename T>
inline void deinterleave_chunk(const T* in, T* out, std::size_t rows, std::size_t cols) {
    std::size_t j = 0;
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = in[j++];
}

/// Convolutional encoding (newest bit at the register MSB, so the impulse
/// response reads each generator's octal taps in natural order), zero-tail
/// termination, then block interleaving chunk by chunk.
inline BitVec encode(const BitVec& message, const CodecSpec& spec) {
    spec.validate();
    const unsigned k = spec.constraint_length;
    BitVec input = message;
    if (spec.zero_tail) input.insert(input.end(), k - 1, 0);

    BitVec coded;
    coded.reserve(input.size() * spec.rate_denominator());
    unsigned reg = 0;
    for (std::uint8_t bit : input) {
        reg = (reg >> 1) | (static_cast<unsigned>(bit & 1) << (k - 1));
        for (unsigned g : spec.generators_octal) coded.push_back(detail::parity(reg & g));
    }

    if (spec.chunk_bits() > 0) {
        if (coded.size() % spec.chunk_bits() != 0)
            throw ArgumentError("encode: coded block does not fill the interleaver");
        BitVec out(coded.size());
        for (std::size_t off = 0; off < coded.size(); off += spec.chunk_bits())
            interleave_chunk(coded.data() + off, out.data() + off, spec.interleaver_rows,
                             spec.interleaver_cols);
        return out;
    }
    return coded;
}

/// Soft-input Viterbi decoding (max-log path metric; positive LLR favors
/// bit 0) after deinterleaving; the zero tail pins the final state.
inline BitVec decode(const std::vector<double>& llrs, const CodecSpec& spec) {
    spec.validate();
    std::vector<double> soft = llrs;
    if (spec.chunk_bits() > 0) {
        if (llrs.size() % spec.chunk_bits() != 0)
            throw ArgumentError("decode: LLR count does not fill the interleaver");
        for (std::size_t off = 0; off < llrs.size(); off += spec.chunk_bits())
            deinterleave_chunk(llrs.data() + off, soft.data() + off, spec.interleaver_rows,
                               spec.interleaver_cols);
    }
    const std::size_t n_out = spec.rate_denominator();
    if (soft.size() % n_out != 0) throw ArgumentError("decode: LLR count not divisible by 1/rate");
    const std::size_t n_steps = soft.size() / n_out;
    const unsigned k = spec.constraint_length;
    const unsigned n_states = 1u << (k - 1);

    // Precompute per-(state, input) coded bits and successors.
    std::vector<unsigned> next_state(n_states * 2);
    std::vector<unsigned> out_bits(n_states * 2);  // packed, one bit per generator
    for (unsigned s = 0; s < n_states; ++s) {
        for (unsigned b = 0; b < 2; ++b) {
            const unsigned reg = (b << (k - 1)) | s;
            unsigned packed = 0;
            for (std::size_t g = 0; g < n_out; ++g)
                packed |= static_cast<unsigned>(detail::parity(reg & spec.generators_octal[g])) << g;
            next_state[s * 2 + b] = reg >> 1;
            out_bits[s * 2 + b] = packed;
        }
    }

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    std::vector<double> metric(n_states, kNegInf), metric_next(n_states, kNegInf);
    metric[0] = 0.0;
    std::vector<std::uint16_t> decisions(n_steps * n_states);

    for (std::size_t t = 0; t < n_steps; ++t) {
        std::fill(metric_next.begin(), metric_next.end(), kNegInf);
        const double* step_llr = soft.data() + t * n_out;
        for (unsigned s = 0; s < n_states; ++s) {
            if (metric[s] == kNegInf) continue;
            for (unsigned b = 0; b < 2; ++b) {
                double branch = 0.0;
                const unsigned packed = out_bits[s * 2 + b];
                for (std::size_t g = 0; g < n_out; ++g)
                    branch += ((packed >> g) & 1u) ? -step_llr[g] : step_llr[g];
                const unsigned ns = next_state[s * 2 + b];
                const double cand = metric[s] + branch;
                if (cand > metric_next[ns]) {
                    metric_next[ns] = cand;
                    // Predecessor state and input packed together.
                    decisions[t * n_states + ns] = static_cast<std::uint16_t>((s << 1) | b);
                }
            }
        }
        metric.swap(metric_next);
    }

    // Traceback from the zero state (zero tail) or the best survivor.
    unsigned state = 0;
    if (!spec.zero_tail || metric[0] == kNegInf) {
        state = static_cast<unsigned>(
            std::max_element(metric.begin(), metric.end()) - metric.begin());
    }
    BitVec path(n_steps);
    for (std::size_t t = n_steps; t-- > 0;) {
        const std::uint16_t d = decisions[t * n_states + state];
        path[t] = static_cast<std::uint8_t>(d & 1);
        state = static_cast<unsigned>(d >> 1);
    }
    const std::size_t tail = spec.zero_tail ? k - 1 : 0;
    path.resize(n_steps - tail);
    return path;
}

}  // namespace jrcsim
