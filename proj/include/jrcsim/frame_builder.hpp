#pragma once

#include <cstdint>
#include <numeric>

#include "jrcsim/common.hpp"
#include "jrcsim/fft.hpp"

namespace jrcsim {

/// One linear frequency sweep. The sample count is quantized to the grid,
/// and the effective duration n_samples/Fs is what every downstream stage
/// (CPI slicing, Doppler calibration) uses.
struct ChirpSpec {
    double bandwidth_hz = 0.0;   // beta
    double duration_s = 0.0;     // tau (requested)
    double sample_rate_hz = 0.0; // Fs
    std::size_t n_samples = 0;   // round(tau * Fs)
    double power = 1.0;

    static ChirpSpec make(double bandwidth_hz, double duration_s,
                          double sample_rate_hz, double power = 1.0) {
        ChirpSpec s;
        s.bandwidth_hz = bandwidth_hz;
        s.duration_s = duration_s;
        s.sample_rate_hz = sample_rate_hz;
        s.power = power;
        s.n_samples = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
        s.validate();
        return s;
    }

    double effective_duration_s() const {
        return static_cast<double>(n_samples) / sample_rate_hz;
    }

    void validate() const {
        if (!(bandwidth_hz > 0.0)) throw ConfigError("ChirpSpec: bandwidth must be > 0");
        if (!(duration_s > 0.0)) throw ConfigError("ChirpSpec: duration must be > 0");
        if (!(sample_rate_hz > 0.0)) throw ConfigError("ChirpSpec: sample rate must be > 0");
        if (n_samples < 2) throw ConfigError("ChirpSpec: chirp must span at least 2 samples");
        if (!(power >= 0.0)) throw ConfigError("ChirpSpec: power must be >= 0");
    }
};

struct OfdmSpec {
    std::size_t n_fft = 0;             // N
    double subcarrier_spacing_hz = 0.0; // delta f
    std::size_t n_cp = 0;              // N_g
    std::size_t n_allocated = 0;       // active subcarriers, centered, DC unused
    std::size_t n_symbols = 0;         // M
    double power = 1.0;
    unsigned qam_order = 4;

    double sample_rate_hz() const {
        return static_cast<double>(n_fft) * subcarrier_spacing_hz;
    }
    std::size_t symbol_len() const { return n_fft + n_cp; }

    void validate() const {
        if (n_fft < 2) throw ConfigError("OfdmSpec: n_fft must be >= 2");
        if (!(subcarrier_spacing_hz > 0.0)) throw ConfigError("OfdmSpec: subcarrier spacing must be > 0");
        if (n_cp >= n_fft) throw ConfigError("OfdmSpec: CP length must be < n_fft");
        if (n_allocated == 0 || n_allocated > n_fft)
            throw ConfigError("OfdmSpec: allocated subcarriers must be in [1, n_fft]");
        if (n_symbols == 0) throw ConfigError("OfdmSpec: need at least one OFDM symbol");
        if (qam_order != 4 && qam_order != 16 && qam_order != 64)
            throw ConfigError("OfdmSpec: QAM order must be 4, 16 or 64");
        if (!(power >= 0.0)) throw ConfigError("OfdmSpec: power must be >= 0");
    }
};

/// FFT bin indices of the active subcarriers, in ascending logical frequency
/// (negative band first, then positive). DC stays unused except in the
/// degenerate single-subcarrier case, which maps to DC.
inline std::vector<std::size_t> allocated_bins(const OfdmSpec& spec) {
    std::vector<std::size_t> bins;
    bins.reserve(spec.n_allocated);
    if (spec.n_allocated == 1) {
        bins.push_back(0);
        return bins;
    }
    if (spec.n_allocated >= spec.n_fft)
        throw ConfigError("OfdmSpec: centered allocation needs guard bins (n_allocated < n_fft)");
    const std::size_t n_neg = spec.n_allocated / 2;
    const std::size_t n_pos = spec.n_allocated - n_neg;
    for (std::size_t i = n_neg; i >= 1; --i) bins.push_back(spec.n_fft - i);
    for (std::size_t i = 1; i <= n_pos; ++i) bins.push_back(i);
    return bins;
}

struct FrameSpec {
    ChirpSpec chirp;
    OfdmSpec ofdm;
    std::size_t n_chirps = 0;  // K
    double total_duration_s = 0.0;  // T

    std::size_t n_frame_samples() const {
        return std::max(n_chirps * chirp.n_samples,
                        chirp.n_samples + ofdm.n_symbols * ofdm.symbol_len());
    }

    void validate() const {
        chirp.validate();
        ofdm.validate();
        if (n_chirps < 2) throw ConfigError("FrameSpec: need at least 2 chirps per frame");
        const double fs_ofdm = ofdm.sample_rate_hz();
        if (std::abs(fs_ofdm - chirp.sample_rate_hz) > 1e-6 * chirp.sample_rate_hz)
            throw ConfigError("FrameSpec: Fs mismatch, N*delta_f != chirp sample rate");
        const auto n_total = static_cast<std::size_t>(
            std::llround(total_duration_s * chirp.sample_rate_hz));
        if (n_chirps * chirp.n_samples > n_total)
            throw ConfigError("FrameSpec: K chirps exceed frame duration T");
        if (chirp.n_samples + ofdm.n_symbols * ofdm.symbol_len() > n_total)
            throw ConfigError("FrameSpec: OFDM stream longer than frame");
    }
};

/// Eq.-of-motion of one chirp: sample n is exp(j pi beta (n/Fs)^2 / tau_eff).
inline ComplexFrame synth_chirp(const ChirpSpec& spec) {
    spec.validate();
    const double fs = spec.sample_rate_hz;
    const double tau_eff = spec.effective_duration_s();
    ComplexFrame out;
    out.sample_rate_hz = fs;
    out.samples.resize(spec.n_samples);
    for (std::size_t n = 0; n < spec.n_samples; ++n) {
        const double t = static_cast<double>(n) / fs;
        out.samples[n] = std::polar(1.0, kPi * spec.bandwidth_hz * t * t / tau_eff);
    }
    return out;
}

/// K identical chirps scaled by sqrt(P_FMCW).
inline ComplexFrame synth_fmcw(const FrameSpec& frame) {
    frame.validate();
    const ComplexFrame chirp = synth_chirp(frame.chirp);
    const double amp = std::sqrt(frame.chirp.power);
    ComplexFrame out;
    out.sample_rate_hz = chirp.sample_rate_hz;
    out.samples.reserve(frame.n_chirps * chirp.size());
    for (std::size_t k = 0; k < frame.n_chirps; ++k)
        for (const cplx& s : chirp.samples) out.samples.push_back(amp * s);
    return out;
}

namespace detail {

// Gray-coded PAM levels for b bits/axis, unnormalized: 1 bit {+1,-1},
// 2 bits {+3,+1,-1,-3}, ... adjacent levels differ in exactly one bit.
inline double gray_pam_level(unsigned bits, unsigned n_bits) {
    unsigned binary = bits;
    for (unsigned shift = 1; shift < n_bits; shift <<= 1) binary ^= binary >> shift;
    const double n_levels = static_cast<double>(1u << n_bits);
    return n_levels - 1.0 - 2.0 * static_cast<double>(binary);
}

inline double qam_norm(unsigned order) {
    switch (order) {
        case 4: return std::sqrt(2.0);
        case 16: return std::sqrt(10.0);
        case 64: return std::sqrt(42.0);
        default: throw ArgumentError("map_qam: order must be 4, 16 or 64");
    }
}

}  // namespace detail

/// Gray-mapped unit-average-energy square QAM. Bit layout per symbol: the
/// first half of the bits selects the I level, the second half the Q level;
/// QPSK reduces to (1-2*b1) + j(1-2*b0), scaled 1/sqrt(2).
inline cvec map_qam(const std::vector<std::uint8_t>& bits, unsigned order) {
    const double norm = detail::qam_norm(order);
    const unsigned bits_per_sym = static_cast<unsigned>(std::lround(std::log2(order)));
    const unsigned bits_per_axis = bits_per_sym / 2;
    if (bits.size() % bits_per_sym != 0)
        throw ArgumentError("map_qam: bit count not divisible by log2(order)");
    cvec out;
    out.reserve(bits.size() / bits_per_sym);
    for (std::size_t i = 0; i < bits.size(); i += bits_per_sym) {
        unsigned bi = 0, bq = 0;
        for (unsigned b = 0; b < bits_per_axis; ++b) bi = (bi << 1) | (bits[i + b] & 1);
        for (unsigned b = 0; b < bits_per_axis; ++b) bq = (bq << 1) | (bits[i + bits_per_axis + b] & 1);
        out.emplace_back(detail::gray_pam_level(bi, bits_per_axis) / norm,
                         detail::gray_pam_level(bq, bits_per_axis) / norm);
    }
    return out;
}

/// Constellation points in bit order (index = packed bits), for demapping.
inline cvec qam_constellation(unsigned order) {
    const unsigned bits_per_sym = static_cast<unsigned>(std::lround(std::log2(order)));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(order) * bits_per_sym);
    for (unsigned s = 0; s < order; ++s)
        for (unsigned b = 0; b < bits_per_sym; ++b)
            bits[s * bits_per_sym + b] = (s >> (bits_per_sym - 1 - b)) & 1;
    return map_qam(bits, order);
}

/// One CP-OFDM symbol: inverse DFT over the centered allocation, scaled so a
/// unit-average-energy symbol vector yields mean sample power P_OFDM, with the
/// last N_g time samples prepended as cyclic prefix.
inline ComplexFrame synth_ofdm_symbol(const cvec& data, const OfdmSpec& spec) {
    spec.validate();
    if (data.size() != spec.n_allocated)
        throw ArgumentError("synth_ofdm_symbol: data length must equal n_allocated");
    const auto bins = allocated_bins(spec);
    cvec spectrum(spec.n_fft, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < bins.size(); ++i) spectrum[bins[i]] = data[i];
    cvec body = Fft::inverse(spectrum);
    const double scale = std::sqrt(spec.power / static_cast<double>(spec.n_allocated));
    for (cplx& s : body) s *= scale;

    ComplexFrame out;
    out.sample_rate_hz = spec.sample_rate_hz();
    out.samples.reserve(spec.symbol_len());
    out.samples.insert(out.samples.end(), body.end() - static_cast<std::ptrdiff_t>(spec.n_cp),
                       body.end());
    out.samples.insert(out.samples.end(), body.begin(), body.end());
    return out;
}

/// Concatenation of M CP-OFDM symbols.
inline ComplexFrame synth_ofdm_stream(const cvec& data, const OfdmSpec& spec) {
    if (data.size() != spec.n_symbols * spec.n_allocated)
        throw ArgumentError("synth_ofdm_stream: data length must be M * n_allocated");
    ComplexFrame out;
    out.sample_rate_hz = spec.sample_rate_hz();
    out.samples.reserve(spec.n_symbols * spec.symbol_len());
    for (std::size_t m = 0; m < spec.n_symbols; ++m) {
        cvec sym_data(data.begin() + static_cast<std::ptrdiff_t>(m * spec.n_allocated),
                      data.begin() + static_cast<std::ptrdiff_t>((m + 1) * spec.n_allocated));
        ComplexFrame sym = synth_ofdm_symbol(sym_data, spec);
        out.samples.insert(out.samples.end(), sym.samples.begin(), sym.samples.end());
    }
    return out;
}

/// The transmitted frame: FMCW chirp train from sample 0, OFDM stream added
/// from sample N_chirp onward so the first chirp stays interference-free.
inline ComplexFrame synth_frame(const FrameSpec& frame, const cvec& data) {
    frame.validate();
    ComplexFrame out = synth_fmcw(frame);
    out.samples.resize(frame.n_frame_samples(), cplx{0.0, 0.0});
    if (frame.ofdm.power > 0.0) {
        const ComplexFrame ofdm = synth_ofdm_stream(data, frame.ofdm);
        const std::size_t off = frame.chirp.n_samples;
        for (std::size_t n = 0; n < ofdm.size(); ++n) out.samples[off + n] += ofdm.samples[n];
    }
    return out;
}

}  // namespace jrcsim
