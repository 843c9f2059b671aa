#pragma once

#include <Eigen/Dense>

#include "jrcsim/channel.hpp"
#include "jrcsim/fft.hpp"
#include "jrcsim/frame_builder.hpp"

namespace jrcsim {

/// CP addition/removal operators. A is (N+N_g) x N (prepends the last N_g
/// inputs), B is N x (N+N_g) (drops the first N_g inputs); B*A = I_N exactly.
/// Stored structurally; dense forms are available for small-N oracle checks.
struct CpMatrices {
    std::size_t n_fft = 0;
    std::size_t n_cp = 0;

    cvec add_cp(const cvec& x) const {
        if (x.size() != n_fft) throw ArgumentError("CpMatrices: add_cp input must have N samples");
        cvec out;
        out.reserve(n_fft + n_cp);
        out.insert(out.end(), x.end() - static_cast<std::ptrdiff_t>(n_cp), x.end());
        out.insert(out.end(), x.begin(), x.end());
        return out;
    }

    cvec remove_cp(const cvec& y) const {
        if (y.size() != n_fft + n_cp)
            throw ArgumentError("CpMatrices: remove_cp input must have N+N_g samples");
        return cvec(y.begin() + static_cast<std::ptrdiff_t>(n_cp), y.end());
    }

    Eigen::MatrixXcd dense_a() const {
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_fft + n_cp),
                                                    static_cast<Eigen::Index>(n_fft));
        for (std::size_t i = 0; i < n_cp; ++i)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_fft - n_cp + i)) = 1.0;
        for (std::size_t i = 0; i < n_fft; ++i)
            a(static_cast<Eigen::Index>(n_cp + i), static_cast<Eigen::Index>(i)) = 1.0;
        return a;
    }

    Eigen::MatrixXcd dense_b() const {
        Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_fft),
                                                    static_cast<Eigen::Index>(n_fft + n_cp));
        for (std::size_t i = 0; i < n_fft; ++i)
            b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_cp + i)) = 1.0;
        return b;
    }
};

inline CpMatrices cp_matrices(std::size_t n_fft, std::size_t n_cp) {
    if (n_cp >= n_fft) throw ArgumentError("cp_matrices: require 0 <= N_g < N");
    return CpMatrices{n_fft, n_cp};
}

/// Remove the FMCW component from the received frame using the reconstructed
/// channel operator: y_ofdm = y - H_hat * s_fmcw. The FMCW frame is
/// zero-extended to the received length before the operator is applied.
inline ComplexFrame cancel_fmcw(const ComplexFrame& rx, const ChannelOperator& h_hat,
                                const ComplexFrame& fmcw) {
    if (fmcw.size() > rx.size())
        throw ArgumentError("cancel_fmcw: FMCW frame longer than received frame");
    if (fmcw.start_sample != rx.start_sample)
        throw ArgumentError("cancel_fmcw: frames must share a time origin");
    ComplexFrame padded = fmcw;
    padded.samples.resize(rx.size(), cplx{0.0, 0.0});
    ComplexFrame out = rx;
    if (!h_hat.taps.empty()) {
        ComplexFrame echo = h_hat.apply(padded);
        for (std::size_t n = 0; n < out.size(); ++n) out.samples[n] -= echo.samples[n];
    }
    return out;
}

/// Channel frequency response of one OFDM symbol, Theta = F B H_m A F^H with
/// unitary F. Only the diagonal is materialized; for the sparse operator it
/// follows in closed form per tap:
///   theta_k = sum_p g_p e^{j2pi(n0+N_g)psi_p/Fs} e^{-j2pi k l_p/N} D(psi_p),
/// with D the length-N Dirichlet mean of the in-symbol Doppler ramp. The
/// off-diagonal (ICI) mass is reported as a ratio via the Frobenius identity.
struct CfrMatrix {
    cvec diagonal;        // theta, length N
    double ici_ratio = 0.0;  // off-diagonal energy / diagonal energy
    std::size_t symbol_index = 0;
};

inline CfrMatrix compute_cfr(const ChannelOperator& h_hat, std::size_t symbol_index,
                             std::int64_t symbol_start_sample, std::size_t n_fft,
                             std::size_t n_cp) {
    const double fs = h_hat.sample_rate_hz;
    const auto n = static_cast<double>(n_fft);
    CfrMatrix cfr;
    cfr.symbol_index = symbol_index;
    cfr.diagonal.assign(n_fft, cplx{0.0, 0.0});
    double tap_power = 0.0;
    for (const ChannelTap& tap : h_hat.taps) {
        const double psi_norm = tap.doppler_hz / fs;  // cycles per sample
        // Mean of the Doppler ramp over the symbol body.
        cplx dirichlet{1.0, 0.0};
        if (psi_norm != 0.0) {
            cplx acc{0.0, 0.0};
            cplx w{1.0, 0.0};
            const cplx step = std::polar(1.0, 2.0 * kPi * psi_norm);
            for (std::size_t u = 0; u < n_fft; ++u) {
                acc += w;
                w *= step;
            }
            dirichlet = acc / n;
        }
        const cplx anchor = std::polar(
            1.0, 2.0 * kPi * psi_norm * static_cast<double>(symbol_start_sample + static_cast<std::int64_t>(n_cp)));
        const cplx common = tap.gain * anchor * dirichlet;
        const double phase_step = -2.0 * kPi * static_cast<double>(tap.delay_samples) / n;
        cplx w{1.0, 0.0};
        const cplx step = std::polar(1.0, phase_step);
        for (std::size_t k = 0; k < n_fft; ++k) {
            cfr.diagonal[k] += common * w;
            w *= step;
        }
        tap_power += std::norm(tap.gain);
    }
    const double frob_sq = n * tap_power;  // ||B H_m A||_F^2, distinct delays
    const double diag_sq = energy(cfr.diagonal);
    cfr.ici_ratio = diag_sq > 0.0 ? std::max(0.0, frob_sq - diag_sq) / diag_sq : 0.0;
    return cfr;
}

/// One equalized OFDM symbol on the allocated subcarriers.
struct EqualizedSymbol {
    cvec symbols;              // allocated-subcarrier order
    cvec theta;                // matching per-subcarrier CFR coefficients
    std::vector<bool> erased;  // |theta| below threshold
};

inline constexpr double kErasureEpsilon = 1e-9;

/// One-tap equalization: d_hat = diag(theta theta*)^-1 diag(theta)* F B y_m,
/// normalized back to the mapper's constellation scale.
inline EqualizedSymbol equalize(const cvec& y_m, const cvec& theta, const CpMatrices& cp,
                                const OfdmSpec& spec) {
    if (y_m.size() != cp.n_fft + cp.n_cp)
        throw ArgumentError("equalize: symbol must have N+N_g samples");
    if (theta.size() != cp.n_fft) throw ArgumentError("equalize: theta must have N entries");
    cvec body = cp.remove_cp(y_m);
    cvec spectrum = Fft::forward(body);
    // Undo the unitary-DFT and the modulator's power scaling so a perfect
    // channel returns the constellation points exactly.
    const double alpha = std::sqrt(spec.power / static_cast<double>(spec.n_allocated));
    const double demod_scale = 1.0 / (alpha * static_cast<double>(cp.n_fft));
    const auto bins = allocated_bins(spec);
    EqualizedSymbol out;
    out.symbols.resize(bins.size());
    out.theta.resize(bins.size());
    out.erased.assign(bins.size(), false);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const cplx th = theta[bins[i]];
        out.theta[i] = th;
        if (std::abs(th) < kErasureEpsilon) {
            out.symbols[i] = cplx{0.0, 0.0};
            out.erased[i] = true;
            continue;
        }
        out.symbols[i] = demod_scale * std::conj(th) * spectrum[bins[i]] / std::norm(th);
    }
    return out;
}

/// Max-log LLRs, scaled by the per-subcarrier post-equalization SNR. Sign
/// convention: positive LLR favors bit 0. noise_var_symbol is the noise
/// variance seen at the demodulator output before the one-tap division,
/// i.e. sigma^2 * n_allocated / (P_ofdm * N).
inline std::vector<double> demap(const EqualizedSymbol& eq, double noise_var_symbol,
                                 unsigned order) {
    const unsigned bits_per_sym = static_cast<unsigned>(std::lround(std::log2(order)));
    const cvec constellation = qam_constellation(order);
    std::vector<double> llrs;
    llrs.reserve(eq.symbols.size() * bits_per_sym);
    for (std::size_t i = 0; i < eq.symbols.size(); ++i) {
        if (eq.erased[i]) {
            for (unsigned b = 0; b < bits_per_sym; ++b) llrs.push_back(0.0);
            continue;
        }
        const double noise_eff = noise_var_symbol / std::norm(eq.theta[i]);
        const double inv_noise = noise_eff > 0.0 ? 1.0 / noise_eff : 1e30;
        for (unsigned b = 0; b < bits_per_sym; ++b) {
            double d0 = 1e300, d1 = 1e300;
            for (unsigned s = 0; s < order; ++s) {
                const double d = std::norm(eq.symbols[i] - constellation[s]);
                const bool bit = ((s >> (bits_per_sym - 1 - b)) & 1u) != 0;
                if (bit)
                    d1 = std::min(d1, d);
                else
                    d0 = std::min(d0, d);
            }
            llrs.push_back((d1 - d0) * inv_noise);
        }
    }
    return llrs;
}

}  // namespace jrcsim
