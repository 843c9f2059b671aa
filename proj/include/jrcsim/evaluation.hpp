#pragma once

#include <atomic>
#include <mutex>
#include <thread>

#include "jrcsim/codec.hpp"
#include "jrcsim/comm.hpp"
#include "jrcsim/config.hpp"
#include "jrcsim/radar.hpp"

namespace jrcsim {

/// Relative channel MSE over the union support of the two sparse operators,
/// E|H_hat - H|^2 / E|H|^2, evaluated across the sample window
/// [window_start, window_start + window_len).
inline double mse_channel(const ChannelOperator& h_hat, const ChannelOperator& h_true,
                          std::int64_t window_start, std::size_t window_len) {
    double den = 0.0;
    for (const ChannelTap& tap : h_true.taps) den += std::norm(tap.gain);
    if (den == 0.0) throw ArgumentError("mse_channel: true channel is all-zero");
    den *= static_cast<double>(window_len);

    // Union of delay bins; a bin missing from one operator contributes its
    // full energy in the other.
    std::vector<std::int64_t> delays;
    for (const ChannelTap& t : h_hat.taps) delays.push_back(t.delay_samples);
    for (const ChannelTap& t : h_true.taps) delays.push_back(t.delay_samples);
    std::sort(delays.begin(), delays.end());
    delays.erase(std::unique(delays.begin(), delays.end()), delays.end());

    const double fs = h_true.sample_rate_hz;
    double err = 0.0;
    for (std::int64_t l : delays) {
        std::vector<ChannelTap> hat_taps, true_taps;
        for (const ChannelTap& t : h_hat.taps)
            if (t.delay_samples == l) hat_taps.push_back(t);
        for (const ChannelTap& t : h_true.taps)
            if (t.delay_samples == l) true_taps.push_back(t);
        for (std::size_t i = 0; i < window_len; ++i) {
            const double n = static_cast<double>(window_start + static_cast<std::int64_t>(i));
            cplx a{0.0, 0.0}, b{0.0, 0.0};
            for (const ChannelTap& t : hat_taps)
                a += t.gain * std::polar(1.0, 2.0 * kPi * n * t.doppler_hz / fs);
            for (const ChannelTap& t : true_taps)
                b += t.gain * std::polar(1.0, 2.0 * kPi * n * t.doppler_hz / fs);
            err += std::norm(a - b);
        }
    }
    return err / den;
}

struct TrialResult {
    std::uint64_t seed = 0;
    double snr_db = 0.0;
    double mse_h = 0.0;
    double ber = 0.0;
    double perfect_csi_ber = 0.0;
    std::size_t n_bits = 0;
    std::vector<TargetEstimate> detections;
    bool detection_failed = false;
    bool estimation_failed = false;
    double mean_ici_ratio = 0.0;
};

struct TrialOptions {
    bool with_comm = true;  // radar-only trials skip decoding (faster sweeps)
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct CommOutcome {
    double ber = 0.0;
    double mean_ici = 0.0;
};

/// Cancel the FMCW echo with the given operator, equalize every symbol with
/// the operator's CFR, decode, and count message-bit errors.
inline CommOutcome decode_with_operator(const ComplexFrame& rx, const ChannelOperator& op,
                                        const ComplexFrame& fmcw, const ScenarioConfig& cfg,
                                        double noise_var, const BitVec& message,
                                        const CodecSpec& codec) {
    const OfdmSpec ofdm = cfg.ofdm_spec();
    const CpMatrices cp = cp_matrices(ofdm.n_fft, ofdm.n_cp);
    const std::size_t n_chirp = cfg.chirp_spec().n_samples;
    const std::size_t sym_len = ofdm.symbol_len();
    const double noise_var_symbol =
        noise_var * static_cast<double>(ofdm.n_allocated) /
        (std::max(ofdm.power, 1e-300) * static_cast<double>(ofdm.n_fft));

    ComplexFrame y_ofdm = cancel_fmcw(rx, op, fmcw);
    std::vector<double> llrs;
    llrs.reserve(ofdm.n_symbols * ofdm.n_allocated * cfg.bits_per_symbol());
    double ici_acc = 0.0;
    for (std::size_t m = 0; m < ofdm.n_symbols; ++m) {
        const std::size_t off = n_chirp + m * sym_len;
        cvec y_m(y_ofdm.samples.begin() + static_cast<std::ptrdiff_t>(off),
                 y_ofdm.samples.begin() + static_cast<std::ptrdiff_t>(off + sym_len));
        const CfrMatrix cfr =
            compute_cfr(op, m, static_cast<std::int64_t>(off), ofdm.n_fft, ofdm.n_cp);
        ici_acc += cfr.ici_ratio;
        EqualizedSymbol eq = equalize(y_m, cfr.diagonal, cp, ofdm);
        std::vector<double> sym_llrs = demap(eq, noise_var_symbol, ofdm.qam_order);
        llrs.insert(llrs.end(), sym_llrs.begin(), sym_llrs.end());
    }
    const BitVec decoded = decode(llrs, codec);
    std::size_t errors = 0;
    for (std::size_t i = 0; i < message.size(); ++i) errors += (decoded[i] != message[i]) ? 1 : 0;
    CommOutcome out;
    out.ber = static_cast<double>(errors) / static_cast<double>(message.size());
    out.mean_ici = ici_acc / static_cast<double>(ofdm.n_symbols);
    return out;
}

}  // namespace detail

/// One full link-level trial: encode, synthesize, channel, radar pass,
/// channel reconstruction, decode with the estimate, and decode again with
/// the true operator (perfect-CSI baseline).
inline TrialResult run_trial(const ScenarioConfig& cfg, double snr_db, std::uint64_t seed,
                             const TrialOptions& opts = {}) {
    cfg.validate();
    const FrameSpec frame = cfg.frame_spec();
    const OfdmSpec ofdm = frame.ofdm;
    const CodecSpec codec = cfg.codec_spec();

    TrialResult result;
    result.seed = seed;
    result.snr_db = snr_db;

    // Independent deterministic streams for bits, fading and noise.
    std::mt19937_64 bit_rng(detail::mix_seed(seed, 1));
    std::mt19937_64 fade_rng(detail::mix_seed(seed, 2));

    const std::size_t coded_bits = ofdm.n_symbols * ofdm.n_allocated * cfg.bits_per_symbol();
    const std::size_t msg_len = codec.message_length_for(coded_bits);
    BitVec message(msg_len);
    for (auto& b : message) b = static_cast<std::uint8_t>(bit_rng() & 1);
    const BitVec coded = encode(message, codec);
    const cvec data = map_qam(coded, ofdm.qam_order);

    const ComplexFrame tx = synth_frame(frame, data);

    FrameSpec fmcw_only = frame;
    fmcw_only.ofdm.power = 0.0;
    ComplexFrame fmcw = synth_fmcw(fmcw_only);

    ChannelRealization ch;
    ch.carrier_hz = cfg.carrier_hz;
    ch.targets = draw_targets(cfg.pdp_decay, cfg.target_ranges_m.size(), cfg.target_ranges_m,
                              cfg.target_velocities_mps, cfg.carrier_hz, fade_rng);
    ch.noise_variance = calibrate_noise(snr_db, cfg.p_ofdm);
    ch.seed = detail::mix_seed(seed, 3);
    ch.validate(cfg.sample_rate_hz, cfg.n_cp);

    const ComplexFrame rx = apply_channel(tx, ch);
    const ChannelOperator h_true = make_operator(ch, cfg.sample_rate_hz);

    RadarResult radar;
    try {
        radar = radar_receiver_pass(rx, frame, cfg.threshold_db, cfg.effective_max_targets(),
                                    cfg.n_bar, cfg.window);
    } catch (const EstimationError&) {
        result.estimation_failed = true;
        radar.detection_failed = true;
    }
    result.detections = radar.estimates;
    result.detection_failed = radar.detection_failed;

    ChannelOperator h_hat;
    h_hat.sample_rate_hz = cfg.sample_rate_hz;
    if (!radar.detection_failed) h_hat = reconstruct_channel(radar.estimates, cfg.sample_rate_hz);

    // MSE over the channel matrix of the first OFDM symbol.
    const std::size_t n_chirp = frame.chirp.n_samples;
    result.mse_h = mse_channel(h_hat, h_true, static_cast<std::int64_t>(n_chirp),
                               ofdm.symbol_len());

    if (opts.with_comm) {
        result.n_bits = msg_len;
        const detail::CommOutcome perfect = detail::decode_with_operator(
            rx, h_true, fmcw, cfg, ch.noise_variance, message, codec);
        result.perfect_csi_ber = perfect.ber;
        if (radar.detection_failed) {
            result.ber = 0.5;  // convention for a frame with no usable detections
        } else {
            const detail::CommOutcome est = detail::decode_with_operator(
                rx, h_hat, fmcw, cfg, ch.noise_variance, message, codec);
            result.ber = est.ber;
            result.mean_ici_ratio = est.mean_ici;
        }
    }
    return result;
}

struct SweepPoint {
    double snr_db = 0.0;
    double mse_mean = 0.0;
    double mse_ci95 = 0.0;
    double ber_est_mean = 0.0;
    double ber_perfect_mean = 0.0;
    std::size_t trials = 0;
    std::size_t detection_failures = 0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::vector<TrialResult> trial_results;  // ordered by (point, trial)
    std::string config_snapshot;
};

/// Monte-Carlo sweep over the SNR grid. Trials are independent work units;
/// results land in pre-assigned slots, so the outcome is identical for any
/// worker count.
inline SweepResult run_sweep(const ScenarioConfig& cfg, const std::vector<double>& snr_grid_db,
                             std::size_t trials_per_point, const TrialOptions& opts = {}) {
    if (snr_grid_db.empty()) throw ArgumentError("run_sweep: empty SNR grid");
    if (trials_per_point == 0) throw ArgumentError("run_sweep: need at least one trial per point");
    cfg.validate();

    const std::size_t total = snr_grid_db.size() * trials_per_point;
    std::vector<TrialResult> results(total);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= total || failed.load()) break;
            const std::size_t point = i / trials_per_point;
            const std::size_t trial = i % trials_per_point;
            try {
                results[i] = run_trial(cfg, snr_grid_db[point],
                                       cfg.seed + static_cast<std::uint64_t>(i), opts);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                error_message = e.what();
                failed.store(true);
            }
            (void)trial;
        }
    };

    std::size_t n_workers = cfg.workers != 0 ? cfg.workers : std::thread::hardware_concurrency();
    if (n_workers == 0) n_workers = 1;
    n_workers = std::min(n_workers, total);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w + 1 < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failed.load()) throw std::runtime_error("run_sweep: trial failed: " + error_message);

    SweepResult sweep;
    sweep.config_snapshot = config_snapshot(cfg);
    for (std::size_t p = 0; p < snr_grid_db.size(); ++p) {
        SweepPoint pt;
        pt.snr_db = snr_grid_db[p];
        pt.trials = trials_per_point;
        double mse_sum = 0.0, mse_sq = 0.0, ber_sum = 0.0, perfect_sum = 0.0;
        for (std::size_t t = 0; t < trials_per_point; ++t) {
            const TrialResult& r = results[p * trials_per_point + t];
            mse_sum += r.mse_h;
            mse_sq += r.mse_h * r.mse_h;
            ber_sum += r.ber;
            perfect_sum += r.perfect_csi_ber;
            if (r.detection_failed) ++pt.detection_failures;
        }
        const double n = static_cast<double>(trials_per_point);
        pt.mse_mean = mse_sum / n;
        pt.ber_est_mean = ber_sum / n;
        pt.ber_perfect_mean = perfect_sum / n;
        const double var = std::max(0.0, mse_sq / n - pt.mse_mean * pt.mse_mean);
        pt.mse_ci95 = trials_per_point > 1 ? 1.96 * std::sqrt(var / (n - 1.0)) : 0.0;
        sweep.points.push_back(pt);
    }
    sweep.trial_results = std::move(results);
    return sweep;
}

/// Fixed sweep CSV schema:
/// snr_db, mse_mean, mse_ci95, ber_est_mean, ber_perfect_mean, trials
inline std::string sweep_csv(const SweepResult& sweep) {
    std::string out = "snr_db,mse_mean,mse_ci95,ber_est_mean,ber_perfect_mean,trials\n";
    char buf[256];
    for (const SweepPoint& p : sweep.points) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%zu\n", p.snr_db,
                      p.mse_mean, p.mse_ci95, p.ber_est_mean, p.ber_perfect_mean, p.trials);
        out += buf;
    }
    return out;
}

/// Range-Doppler map CSV: row = range bin, columns = Doppler bins, values dB.
inline std::string map_csv(const RangeDopplerMap& map) {
    std::string out = "range_bin";
    char buf[64];
    for (std::size_t i = 0; i < map.n_chirps; ++i) {
        std::snprintf(buf, sizeof(buf), ",doppler_bin_%d", map.doppler_bin(i));
        out += buf;
    }
    out += "\n";
    for (std::size_t l = 0; l < map.n_delay_bins(); ++l) {
        std::snprintf(buf, sizeof(buf), "%zu", l);
        out += buf;
        for (double v : map.grid[l]) {
            std::snprintf(buf, sizeof(buf), ",%.6f", 10.0 * std::log10(std::max(v, 1e-300)));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

inline std::string detections_csv(const std::vector<TargetEstimate>& detections,
                                  double carrier_hz) {
    std::string out =
        "delay_bin,doppler_bin,delay_s,distance_m,doppler_hz,velocity_mps,"
        "gain_re,gain_im,peak_power_db\n";
    char buf[320];
    for (const TargetEstimate& e : detections) {
        const double dist = e.delay_s * kSpeedOfLight;
        const double vel = e.doppler_hz * kSpeedOfLight / carrier_hz;
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      e.delay_bin, e.doppler_bin, e.delay_s, dist, e.doppler_hz, vel,
                      e.gain_hat.real(), e.gain_hat.imag(), e.peak_power_db);
        out += buf;
    }
    return out;
}

}  // namespace jrcsim
