#pragma once

#include <algorithm>
#include <random>

#include "jrcsim/common.hpp"

namespace jrcsim {

/// Ground-truth description of one propagation path (bi-static: range_m is
/// the total tx->target->rx path length).
struct TargetTruth {
    double range_m = 0.0;
    double velocity_mps = 0.0;
    cplx gain{0.0, 0.0};
    double delay_s = 0.0;
    double doppler_hz = 0.0;

    static TargetTruth make(double range_m, double velocity_mps, cplx gain, double carrier_hz) {
        TargetTruth t;
        t.range_m = range_m;
        t.velocity_mps = velocity_mps;
        t.gain = gain;
        t.delay_s = range_m / kSpeedOfLight;
        t.doppler_hz = carrier_hz * velocity_mps / kSpeedOfLight;
        return t;
    }
};

struct ChannelRealization {
    std::vector<TargetTruth> targets;
    double noise_variance = 0.0;  // sigma^2 per complex sample
    double carrier_hz = 0.0;
    std::uint64_t seed = 0;

    void validate(double sample_rate_hz, std::size_t max_delay_samples) const {
        if (targets.empty()) throw ConfigError("ChannelRealization: need at least one target");
        if (!(noise_variance >= 0.0)) throw ConfigError("ChannelRealization: negative noise variance");
        std::vector<std::int64_t> delays;
        for (const auto& t : targets) {
            if (t.delay_s < 0.0) throw ConfigError("ChannelRealization: negative delay");
            const auto l = std::llround(t.delay_s * sample_rate_hz);
            if (static_cast<std::size_t>(l) >= max_delay_samples)
                throw ConfigError("ChannelRealization: target delay exceeds CP length");
            delays.push_back(l);
        }
        std::sort(delays.begin(), delays.end());
        if (std::adjacent_find(delays.begin(), delays.end()) != delays.end())
            throw ConfigError("ChannelRealization: duplicate delay after sample quantization");
    }
};

/// One sparse tap of the discrete time-varying channel.
struct ChannelTap {
    std::int64_t delay_samples = 0;
    double doppler_hz = 0.0;
    cplx gain{0.0, 0.0};
};

/// Sparse time-varying convolution operator. The equivalent dense matrix has
/// H[n, n - l_p] = g_p * exp(j 2 pi n psi_p / Fs) on the global sample index n
/// and zeros elsewhere; it is applied lazily, never materialized.
struct ChannelOperator {
    std::vector<ChannelTap> taps;
    double sample_rate_hz = 0.0;

    /// y[n] = sum_p g_p x[n - l_p] e^{j 2 pi (n0 + n) psi_p / Fs}, with n0 the
    /// frame's global start sample; delayed samples before the start are zero.
    ComplexFrame apply(const ComplexFrame& x) const {
        ComplexFrame y;
        y.sample_rate_hz = x.sample_rate_hz;
        y.start_sample = x.start_sample;
        y.samples.assign(x.size(), cplx{0.0, 0.0});
        const auto n_total = static_cast<std::int64_t>(x.size());
        for (const ChannelTap& tap : taps) {
            if (tap.delay_samples >= n_total)
                throw ConfigError("ChannelOperator: tap delay exceeds frame length");
            const double phase_step = 2.0 * kPi * tap.doppler_hz / sample_rate_hz;
            for (std::int64_t n = tap.delay_samples; n < n_total; ++n) {
                const double global_n = static_cast<double>(x.start_sample + n);
                y.samples[static_cast<std::size_t>(n)] +=
                    tap.gain * x.samples[static_cast<std::size_t>(n - tap.delay_samples)] *
                    std::polar(1.0, phase_step * global_n);
            }
        }
        return y;
    }
};

inline ChannelOperator make_operator(const ChannelRealization& ch, double sample_rate_hz) {
    ChannelOperator op;
    op.sample_rate_hz = sample_rate_hz;
    for (const TargetTruth& t : ch.targets)
        op.taps.push_back({std::llround(t.delay_s * sample_rate_hz), t.doppler_hz, t.gain});
    return op;
}

/// Draw per-path complex gains from the exponentially decaying power delay
/// profile E|h_p|^2 = eta * e^{-gamma p}, normalized so the tap powers sum to
/// one; amplitudes are Rayleigh (circular complex Gaussian draw).
inline std::vector<TargetTruth> draw_targets(double pdp_decay, std::size_t n_targets,
                                             const std::vector<double>& ranges_m,
                                             const std::vector<double>& velocities_mps,
                                             double carrier_hz, std::mt19937_64& rng) {
    if (ranges_m.size() != n_targets || velocities_mps.size() != n_targets)
        throw ArgumentError("draw_targets: ranges/velocities length must equal n_targets");
    if (n_targets == 0) throw ArgumentError("draw_targets: need at least one target");
    double eta = 0.0;
    for (std::size_t p = 0; p < n_targets; ++p) eta += std::exp(-pdp_decay * static_cast<double>(p));
    eta = 1.0 / eta;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<TargetTruth> out;
    out.reserve(n_targets);
    for (std::size_t p = 0; p < n_targets; ++p) {
        const double var = eta * std::exp(-pdp_decay * static_cast<double>(p));
        const double s = std::sqrt(var / 2.0);
        const cplx gain{s * gauss(rng), s * gauss(rng)};
        out.push_back(TargetTruth::make(ranges_m[p], velocities_mps[p], gain, carrier_hz));
    }
    return out;
}

inline std::vector<TargetTruth> draw_targets(double pdp_decay, std::size_t n_targets,
                                             const std::vector<double>& ranges_m,
                                             const std::vector<double>& velocities_mps,
                                             double carrier_hz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return draw_targets(pdp_decay, n_targets, ranges_m, velocities_mps, carrier_hz, rng);
}

/// Pass the frame through the time-varying channel and add AWGN of variance
/// sigma^2 per complex sample.
inline ComplexFrame apply_channel(const ComplexFrame& tx, const ChannelRealization& ch) {
    tx.validate();
    ChannelOperator op = make_operator(ch, tx.sample_rate_hz);
    for (const ChannelTap& tap : op.taps)
        if (tap.delay_samples >= static_cast<std::int64_t>(tx.size()))
            throw ConfigError("apply_channel: delay exceeds frame length");
    ComplexFrame y = op.apply(tx);
    if (ch.noise_variance > 0.0) {
        std::mt19937_64 rng(ch.seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(ch.noise_variance / 2.0));
        for (cplx& s : y.samples) s += cplx{gauss(rng), gauss(rng)};
    }
    return y;
}

/// Free-space-style large-scale gain G = G_tx G_rx lambda^2 / ((4 pi)^2 d^PL).
inline double path_loss(double distance_m, double pl_exponent, double gain_tx, double gain_rx,
                        double wavelength_m) {
    if (!(distance_m > 0.0)) throw ArgumentError("path_loss: distance must be > 0");
    return gain_tx * gain_rx * wavelength_m * wavelength_m /
           (16.0 * kPi * kPi * std::pow(distance_m, pl_exponent));
}

/// sigma^2 = reference_power / 10^(snr_db / 10).
inline double calibrate_noise(double snr_db, double reference_power) {
    if (!(reference_power > 0.0)) throw ArgumentError("calibrate_noise: reference power must be > 0");
    return reference_power / std::pow(10.0, snr_db / 10.0);
}

}  // namespace jrcsim
