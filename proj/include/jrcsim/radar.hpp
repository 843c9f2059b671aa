#pragma once

#include <algorithm>
#include <optional>

#include <Eigen/Dense>

#include "jrcsim/channel.hpp"
#include "jrcsim/fft.hpp"
#include "jrcsim/frame_builder.hpp"

namespace jrcsim {

enum class Window { None, Hann };

/// Fast-time x slow-time matrix: column k holds the N_chirp dechirped samples
/// of chirp k.
struct CpiMatrix {
    std::vector<cvec> columns;  // columns[k][n']
    double sample_rate_hz = 0.0;
    double chirp_duration_s = 0.0;  // tau_eff

    std::size_t n_fast() const { return columns.empty() ? 0 : columns.front().size(); }
    std::size_t n_slow() const { return columns.size(); }
};

/// 2D magnitude-squared grid. The fast-time axis is evaluated at the beat
/// frequencies of integer sample delays, so row l corresponds directly to a
/// delay of l samples; the Doppler axis is fftshifted (index K/2 = bin 0).
struct RangeDopplerMap {
    std::vector<std::vector<double>> grid;  // grid[l][doppler_index]
    double sample_rate_hz = 0.0;
    double chirp_duration_s = 0.0;
    std::size_t n_chirps = 0;

    std::size_t n_delay_bins() const { return grid.size(); }
    int doppler_bin(std::size_t index) const {
        return static_cast<int>(index) - static_cast<int>(n_chirps / 2);
    }
    std::size_t doppler_index(int bin) const {
        return static_cast<std::size_t>(bin + static_cast<int>(n_chirps / 2));
    }
    double doppler_hz_per_bin() const {
        return 1.0 / (static_cast<double>(n_chirps) * chirp_duration_s);
    }
    double delay_s(std::size_t delay_bin) const {
        return static_cast<double>(delay_bin) / sample_rate_hz;
    }
};

struct Peak {
    std::size_t delay_bin = 0;
    int doppler_bin = 0;  // signed, fftshift convention
    double power = 0.0;
};

struct TargetEstimate {
    std::size_t delay_bin = 0;
    int doppler_bin = 0;
    double delay_s = 0.0;
    double doppler_hz = 0.0;  // refined off-grid estimate
    cplx gain_hat{0.0, 0.0};
    double peak_power_db = 0.0;
};

/// Multiply each chirp interval by the conjugate reference chirp so every
/// target delay becomes a constant-frequency tone (stretch processing).
inline ComplexFrame dechirp(const ComplexFrame& rx, const ChirpSpec& spec, std::size_t n_chirps) {
    const std::size_t n = spec.n_samples;
    if (rx.size() < n_chirps * n)
        throw ArgumentError("dechirp: frame shorter than K chirp intervals");
    const ComplexFrame ref = synth_chirp(spec);
    ComplexFrame out;
    out.sample_rate_hz = rx.sample_rate_hz;
    out.samples.resize(n_chirps * n);
    for (std::size_t k = 0; k < n_chirps; ++k)
        for (std::size_t i = 0; i < n; ++i)
            out.samples[k * n + i] = rx.samples[k * n + i] * std::conj(ref.samples[i]);
    return out;
}

inline CpiMatrix build_cpi(const ComplexFrame& dechirped, std::size_t n_chirps,
                           std::size_t n_chirp_samples) {
    if (dechirped.size() < n_chirps * n_chirp_samples)
        throw ArgumentError("build_cpi: frame shorter than K * N_chirp samples");
    CpiMatrix cpi;
    cpi.sample_rate_hz = dechirped.sample_rate_hz;
    cpi.chirp_duration_s = static_cast<double>(n_chirp_samples) / dechirped.sample_rate_hz;
    cpi.columns.resize(n_chirps);
    for (std::size_t k = 0; k < n_chirps; ++k)
        cpi.columns[k].assign(
            dechirped.samples.begin() + static_cast<std::ptrdiff_t>(k * n_chirp_samples),
            dechirped.samples.begin() + static_cast<std::ptrdiff_t>((k + 1) * n_chirp_samples));
    return cpi;
}

namespace detail {

inline std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

}  // namespace detail

/// Fast-time transform of the CPI: rows[l][k] is chirp k's dechirped interval
/// correlated against the beat tone of an l-sample delay. The per-bin
/// frequency step is beta/(N_chirp*Fs) cycles/sample, so a scatterer delayed
/// by l samples lands exactly in row l.
inline std::vector<cvec> fast_time_transform(const CpiMatrix& cpi, double bandwidth_hz,
                                             Window window = Window::None) {
    const std::size_t n = cpi.n_fast();
    const std::size_t k_chirps = cpi.n_slow();
    const double freq_step = bandwidth_hz / (static_cast<double>(n) * cpi.sample_rate_hz);
    // Steering table: tone[l][i] = e^{+j2pi * l * freq_step * i}.
    std::vector<cvec> tone(n, cvec(n));
    for (std::size_t l = 0; l < n; ++l) {
        const cplx step = std::polar(1.0, 2.0 * kPi * freq_step * static_cast<double>(l));
        cplx w{1.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            tone[l][i] = w;
            w *= step;
        }
    }
    std::vector<double> win;
    if (window == Window::Hann) win = detail::hann(n);

    std::vector<cvec> rows(n, cvec(k_chirps));
    for (std::size_t k = 0; k < k_chirps; ++k) {
        cvec col = cpi.columns[k];
        if (!win.empty())
            for (std::size_t i = 0; i < n; ++i) col[i] *= win[i];
        for (std::size_t l = 0; l < n; ++l) {
            cplx acc{0.0, 0.0};
            const cvec& t = tone[l];
            for (std::size_t i = 0; i < n; ++i) acc += col[i] * t[i];
            rows[l][k] = acc;
        }
    }
    return rows;
}

/// Slow-time DFT (fftshifted) of the fast-time rows; magnitude-squared grid.
inline RangeDopplerMap range_doppler(const CpiMatrix& cpi, double bandwidth_hz,
                                     Window window = Window::None) {
    std::vector<cvec> rows = fast_time_transform(cpi, bandwidth_hz, window);
    const std::size_t k_chirps = cpi.n_slow();
    std::vector<double> win;
    if (window == Window::Hann) win = detail::hann(k_chirps);

    RangeDopplerMap map;
    map.sample_rate_hz = cpi.sample_rate_hz;
    map.chirp_duration_s = cpi.chirp_duration_s;
    map.n_chirps = k_chirps;
    map.grid.resize(rows.size());
    for (std::size_t l = 0; l < rows.size(); ++l) {
        cvec slow = rows[l];
        if (!win.empty())
            for (std::size_t k = 0; k < k_chirps; ++k) slow[k] *= win[k];
        cvec spec = Fft::forward(slow);
        map.grid[l].resize(k_chirps);
        for (std::size_t i = 0; i < k_chirps; ++i) {
            const std::size_t src = (i + k_chirps - k_chirps / 2) % k_chirps;
            map.grid[l][i] = std::norm(spec[src]);
        }
    }
    return map;
}

/// Local maxima (8-neighborhood) above median + threshold_db, strongest first.
inline std::vector<Peak> detect_peaks(const RangeDopplerMap& map, double threshold_db,
                                      std::size_t max_targets) {
    if (threshold_db < 0.0) throw ArgumentError("detect_peaks: threshold must be >= 0 dB");
    std::vector<double> all;
    for (const auto& row : map.grid) all.insert(all.end(), row.begin(), row.end());
    if (all.empty()) return {};
    const std::size_t mid = all.size() / 2;
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mid), all.end());
    const double median = all[mid];
    const double floor = median * std::pow(10.0, threshold_db / 10.0);

    const auto n_rows = static_cast<std::ptrdiff_t>(map.grid.size());
    const auto n_cols = static_cast<std::ptrdiff_t>(map.n_chirps);
    std::vector<Peak> peaks;
    for (std::ptrdiff_t l = 0; l < n_rows; ++l) {
        for (std::ptrdiff_t i = 0; i < n_cols; ++i) {
            const double v = map.grid[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
            if (!(v > floor)) continue;
            bool is_max = true;
            for (std::ptrdiff_t dl = -1; dl <= 1 && is_max; ++dl) {
                for (std::ptrdiff_t di = -1; di <= 1; ++di) {
                    if (dl == 0 && di == 0) continue;
                    const std::ptrdiff_t ll = l + dl, ii = i + di;
                    if (ll < 0 || ll >= n_rows || ii < 0 || ii >= n_cols) continue;
                    if (map.grid[static_cast<std::size_t>(ll)][static_cast<std::size_t>(ii)] > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max)
                peaks.push_back({static_cast<std::size_t>(l),
                                 map.doppler_bin(static_cast<std::size_t>(i)), v});
        }
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.power > b.power; });
    if (peaks.size() > max_targets) peaks.resize(max_targets);
    return peaks;
}

/// Off-grid Doppler refinement: maximize the slow-time DTFT magnitude of the
/// detected range row over a +-1-bin neighborhood of the coarse peak, then
/// polish with a parabolic fit. Doppler-bin quantization alone leaves a phase
/// drift across the frame that dominates both channel MSE and equalization,
/// so the reconstructed operator carries this refined value.
inline double refine_doppler(const cvec& slow_time_row, int coarse_bin, double chirp_duration_s) {
    const std::size_t k_chirps = slow_time_row.size();
    const double bin_hz = 1.0 / (static_cast<double>(k_chirps) * chirp_duration_s);
    const double center = static_cast<double>(coarse_bin) * bin_hz;
    const int n_grid = 129;
    auto objective = [&](double psi) {
        cplx acc{0.0, 0.0};
        for (std::size_t k = 0; k < k_chirps; ++k)
            acc += slow_time_row[k] *
                   std::polar(1.0, -2.0 * kPi * psi * static_cast<double>(k) * chirp_duration_s);
        return std::norm(acc);
    };
    double best_psi = center;
    double best_val = -1.0;
    const double half_span = bin_hz;
    const double step = 2.0 * half_span / static_cast<double>(n_grid - 1);
    for (int i = 0; i < n_grid; ++i) {
        const double psi = center - half_span + step * static_cast<double>(i);
        const double v = objective(psi);
        if (v > best_val) {
            best_val = v;
            best_psi = psi;
        }
    }
    // Parabolic interpolation around the best grid point.
    const double vm = objective(best_psi - step);
    const double vp = objective(best_psi + step);
    const double denom = vm - 2.0 * best_val + vp;
    if (denom < 0.0) {
        const double offset = 0.5 * (vm - vp) / denom;
        if (std::abs(offset) <= 1.0) best_psi += offset * step;
    }
    return best_psi;
}

/// Least-squares estimate of the complex path gains from the interference-free
/// first chirp: regressor column p is the transmitted chirp delayed by the
/// detected delay bin, rows restricted to samples n_bar..N_chirp-1.
inline std::vector<cplx> estimate_gains(const cvec& rx_first_chirp,
                                        const std::vector<std::size_t>& delay_bins,
                                        const ChirpSpec& spec, std::size_t n_bar) {
    if (delay_bins.empty()) throw ArgumentError("estimate_gains: no detections");
    const std::size_t n = spec.n_samples;
    if (rx_first_chirp.size() < n)
        throw ArgumentError("estimate_gains: first chirp slice too short");
    for (std::size_t l : delay_bins)
        if (l > n_bar) throw ArgumentError("estimate_gains: delay bin exceeds offset n_bar");
    {
        std::vector<std::size_t> sorted = delay_bins;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw EstimationError("estimate_gains: duplicate delay bins, singular normal equations");
    }
    const ComplexFrame chirp = synth_chirp(spec);
    const double amp = std::sqrt(spec.power);
    const std::size_t n_rows = n - n_bar;
    const std::size_t n_paths = delay_bins.size();
    Eigen::MatrixXcd B(n_rows, n_paths);
    Eigen::VectorXcd y(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::size_t t = n_bar + r;
        y(static_cast<Eigen::Index>(r)) = rx_first_chirp[t];
        for (std::size_t p = 0; p < n_paths; ++p)
            B(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) =
                amp * chirp.samples[t - delay_bins[p]];
    }
    const Eigen::MatrixXcd gram = B.adjoint() * B;
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(gram);
    if (!lu.isInvertible())
        throw EstimationError("estimate_gains: singular normal equations");
    Eigen::VectorXcd h = lu.solve(B.adjoint() * y);
    return {h.data(), h.data() + h.size()};
}

/// Greedy matching pursuit for delay candidates on the interference-free
/// first chirp. The 2D map's detection floor is set by the superimposed OFDM
/// stream, which buries deeply faded targets; the first chirp carries no OFDM
/// by construction, so its floor is thermal noise only. Each round fits all
/// candidates jointly by LS, subtracts the model, and looks for the strongest
/// remaining beat tone; exact subtraction removes sidelobe masking without a
/// window. Stops when the residual peak drops below median + threshold_db or
/// the candidate budget is exhausted.
inline std::vector<std::size_t> first_chirp_pursuit(const cvec& rx_first_chirp,
                                                    const ChirpSpec& spec, std::size_t n_bar,
                                                    double threshold_db,
                                                    std::size_t max_candidates,
                                                    std::vector<std::size_t> candidates = {}) {
    const std::size_t n = spec.n_samples;
    if (rx_first_chirp.size() < n)
        throw ArgumentError("first_chirp_pursuit: first chirp slice too short");
    const ComplexFrame chirp = synth_chirp(spec);
    const double amp = std::sqrt(spec.power);
    const double freq_step = spec.bandwidth_hz / (static_cast<double>(n) * spec.sample_rate_hz);
    const double factor = std::pow(10.0, threshold_db / 10.0);

    while (candidates.size() < max_candidates) {
        // Residual after removing the joint LS fit of the current candidates.
        cvec residual(rx_first_chirp.begin(),
                      rx_first_chirp.begin() + static_cast<std::ptrdiff_t>(n));
        if (!candidates.empty()) {
            const std::vector<cplx> gains =
                estimate_gains(rx_first_chirp, candidates, spec, n_bar);
            for (std::size_t p = 0; p < candidates.size(); ++p)
                for (std::size_t i = candidates[p]; i < n; ++i)
                    residual[i] -= gains[p] * amp * chirp.samples[i - candidates[p]];
        }
        // Zoomed transform of the dechirped residual over delay bins 0..n_bar.
        std::vector<double> row(n_bar + 1, 0.0);
        cvec de(n);
        for (std::size_t i = 0; i < n; ++i) de[i] = residual[i] * std::conj(chirp.samples[i]);
        for (std::size_t l = 0; l <= n_bar; ++l) {
            const cplx step = std::polar(1.0, 2.0 * kPi * freq_step * static_cast<double>(l));
            cplx w{1.0, 0.0}, acc{0.0, 0.0};
            for (std::size_t i = 0; i < n; ++i) {
                acc += de[i] * w;
                w *= step;
            }
            row[l] = std::norm(acc);
        }
        std::vector<double> sorted = row;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                         sorted.end());
        const double median = sorted[sorted.size() / 2];
        std::size_t best_l = 0;
        double best_v = -1.0;
        for (std::size_t l = 0; l <= n_bar; ++l)
            if (row[l] > best_v &&
                std::find(candidates.begin(), candidates.end(), l) == candidates.end()) {
                best_v = row[l];
                best_l = l;
            }
        if (best_v <= median * factor) break;
        candidates.push_back(best_l);
    }
    return candidates;
}

/// Rebuild the sparse channel operator from the per-target estimates.
inline ChannelOperator reconstruct_channel(const std::vector<TargetEstimate>& estimates,
                                           double sample_rate_hz) {
    if (estimates.empty()) throw ArgumentError("reconstruct_channel: no estimates");
    ChannelOperator op;
    op.sample_rate_hz = sample_rate_hz;
    for (const TargetEstimate& e : estimates)
        op.taps.push_back({static_cast<std::int64_t>(e.delay_bin), e.doppler_hz, e.gain_hat});
    return op;
}

/// Full radar pass over one received frame: dechirp, CPI, range-Doppler map,
/// detection, Doppler refinement, LS gain estimation.
struct RadarResult {
    RangeDopplerMap map;
    std::vector<TargetEstimate> estimates;
    bool detection_failed = false;
};

inline RadarResult radar_receiver_pass(const ComplexFrame& rx, const FrameSpec& frame,
                                       double threshold_db, std::size_t max_targets,
                                       std::size_t n_bar, Window window = Window::None) {
    const std::size_t n_chirp = frame.chirp.n_samples;
    ComplexFrame dechirped = dechirp(rx, frame.chirp, frame.n_chirps);
    CpiMatrix cpi = build_cpi(dechirped, frame.n_chirps, n_chirp);
    std::vector<cvec> rows = fast_time_transform(cpi, frame.chirp.bandwidth_hz, window);

    RangeDopplerMap map;
    map.sample_rate_hz = cpi.sample_rate_hz;
    map.chirp_duration_s = cpi.chirp_duration_s;
    map.n_chirps = frame.n_chirps;
    map.grid.resize(rows.size());
    for (std::size_t l = 0; l < rows.size(); ++l) {
        cvec spec = Fft::forward(rows[l]);
        map.grid[l].resize(frame.n_chirps);
        for (std::size_t i = 0; i < frame.n_chirps; ++i)
            map.grid[l][i] = std::norm(spec[(i + frame.n_chirps - frame.n_chirps / 2) % frame.n_chirps]);
    }

    RadarResult result;
    result.map = std::move(map);
    if (max_targets == 0) {
        result.detection_failed = true;
        return result;
    }

    // Candidate delays from the 2D map (duplicates and bins the LS stage
    // cannot represent are dropped), supplemented by a matching pursuit on the
    // interference-free first chirp: the map's floor is OFDM-interference
    // limited, the first chirp's is noise limited, so together they cover both
    // the low-SNR and the deep-fade regimes.
    std::vector<Peak> peaks = detect_peaks(result.map, threshold_db, max_targets);
    std::vector<std::size_t> bins;
    for (const Peak& p : peaks)
        if (p.delay_bin <= n_bar &&
            std::find(bins.begin(), bins.end(), p.delay_bin) == bins.end())
            bins.push_back(p.delay_bin);
    cvec first_chirp(rx.samples.begin(), rx.samples.begin() + static_cast<std::ptrdiff_t>(n_chirp));
    bins = first_chirp_pursuit(first_chirp, frame.chirp, n_bar, threshold_db, max_targets + 3,
                               std::move(bins));
    if (bins.empty()) {
        result.detection_failed = true;
        return result;
    }

    // Joint LS over all candidates; rank by estimated gain power (an
    // interference-free statistic) and keep the strongest max_targets.
    std::vector<cplx> gains = estimate_gains(first_chirp, bins, frame.chirp, n_bar);
    std::vector<std::size_t> order(bins.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::norm(gains[a]) > std::norm(gains[b]); });
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < order.size() && kept.size() < max_targets; ++i)
        kept.push_back(bins[order[i]]);
    std::sort(kept.begin(), kept.end());
    gains = estimate_gains(first_chirp, kept, frame.chirp, n_bar);

    for (std::size_t p = 0; p < kept.size(); ++p) {
        TargetEstimate e;
        e.delay_bin = kept[p];
        // Coarse Doppler from the map row, then off-grid refinement.
        const auto& row_power = result.map.grid[e.delay_bin];
        const std::size_t coarse = static_cast<std::size_t>(
            std::max_element(row_power.begin(), row_power.end()) - row_power.begin());
        e.doppler_bin = result.map.doppler_bin(coarse);
        e.delay_s = result.map.delay_s(e.delay_bin);
        e.doppler_hz = refine_doppler(rows[e.delay_bin], e.doppler_bin, cpi.chirp_duration_s);
        e.gain_hat = gains[p];
        e.peak_power_db = 10.0 * std::log10(std::max(row_power[coarse], 1e-300));
        result.estimates.push_back(e);
    }
    return result;
}

}  // namespace jrcsim
