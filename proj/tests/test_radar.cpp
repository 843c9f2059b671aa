#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "jrcsim/radar.hpp"
#include "test_util.hpp"

using namespace jrcsim;

namespace {

ChirpSpec table_chirp() { return ChirpSpec::make(100e6, 2.4e-6, 122.88e6, 1.0); }

FrameSpec desk_frame(std::size_t n_chirps = 64, std::size_t n_symbols = 16) {
    ScenarioConfig cfg = jrctest::desk_config();
    cfg.n_chirps = n_chirps;
    cfg.n_symbols = n_symbols;
    return cfg.frame_spec();
}

ComplexFrame desk_tx(const FrameSpec& frame, std::uint64_t seed) {
    const std::size_t n_data = frame.ofdm.n_symbols * frame.ofdm.n_allocated;
    return synth_frame(frame, map_qam(jrctest::random_bits(2 * n_data, seed), 4));
}

}  // namespace

TEST_CASE("dechirp") {
    const ChirpSpec spec = table_chirp();
    SUBCASE("self-cancellation gives a constant 1") {
        const ComplexFrame chirp = synth_chirp(spec);
        const ComplexFrame out = dechirp(chirp, spec, 1);
        for (const cplx& s : out.samples) CHECK(std::abs(s - cplx{1.0, 0.0}) < 1e-12);
    }
    SUBCASE("delayed chirp becomes the expected tone") {
        const std::size_t l = 23;
        const ComplexFrame chirp = synth_chirp(spec);
        ComplexFrame rx;
        rx.sample_rate_hz = spec.sample_rate_hz;
        rx.samples.assign(spec.n_samples, cplx{0.0, 0.0});
        for (std::size_t n = l; n < spec.n_samples; ++n) rx.samples[n] = chirp.samples[n - l];
        const ComplexFrame de = dechirp(rx, spec, 1);
        // Brute-force DTFT peak search over a fine frequency grid.
        const double expected = -spec.bandwidth_hz * static_cast<double>(l) /
                                (spec.effective_duration_s() * spec.sample_rate_hz *
                                 spec.sample_rate_hz);
        double best_f = 0.0, best_v = -1.0;
        for (int i = -4000; i <= 4000; ++i) {
            const double f = static_cast<double>(i) / 8000.0;  // cycles/sample in [-1/2, 1/2)
            cplx acc{0.0, 0.0};
            for (std::size_t n = 0; n < de.size(); ++n)
                acc += de.samples[n] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(n));
            if (std::norm(acc) > best_v) {
                best_v = std::norm(acc);
                best_f = f;
            }
        }
        CHECK(best_f == doctest::Approx(expected).epsilon(0.02));
    }
    SUBCASE("zeros stay zeros") {
        ComplexFrame rx;
        rx.sample_rate_hz = spec.sample_rate_hz;
        rx.samples.assign(2 * spec.n_samples, cplx{0.0, 0.0});
        const ComplexFrame out = dechirp(rx, spec, 2);
        for (const cplx& s : out.samples) CHECK(s == cplx{0.0, 0.0});
    }
    SUBCASE("short frame rejected") {
        ComplexFrame rx;
        rx.sample_rate_hz = spec.sample_rate_hz;
        rx.samples.assign(spec.n_samples, cplx{0.0, 0.0});
        CHECK_THROWS_AS(dechirp(rx, spec, 2), ArgumentError);
    }
}

TEST_CASE("CPI matrix indexing") {
    ComplexFrame de;
    de.sample_rate_hz = 122.88e6;
    de.samples = jrctest::random_cvec(5 * 100, 33);
    const CpiMatrix cpi = build_cpi(de, 5, 100);
    CHECK(cpi.n_fast() == 100);
    CHECK(cpi.n_slow() == 5);
    SUBCASE("element (n', k) is dechirped[k*N + n']") {
        std::mt19937_64 rng(3);
        for (int probe = 0; probe < 50; ++probe) {
            const std::size_t k = rng() % 5, n = rng() % 100;
            CHECK(cpi.columns[k][n] == de.samples[k * 100 + n]);
        }
    }
    SUBCASE("K=1 keeps the first interval") {
        const CpiMatrix one = build_cpi(de, 1, 100);
        for (std::size_t n = 0; n < 100; ++n) CHECK(one.columns[0][n] == de.samples[n]);
    }
    SUBCASE("constant input gives identical columns") {
        ComplexFrame c;
        c.sample_rate_hz = 1.0;
        c.samples.assign(300, cplx{0.5, -0.5});
        const CpiMatrix cc = build_cpi(c, 3, 100);
        CHECK(cc.columns[0] == cc.columns[1]);
        CHECK(cc.columns[1] == cc.columns[2]);
    }
    SUBCASE("short input rejected") {
        CHECK_THROWS_AS(build_cpi(de, 6, 100), ArgumentError);
    }
}

TEST_CASE("range-Doppler map") {
    SUBCASE("single static unit target at delay bin 6 peaks at (6, 0)") {
        FrameSpec frame = desk_frame(16, 2);
        frame.ofdm.power = 0.0;  // radar-only frame keeps the oracle exact
        const ComplexFrame tx = synth_fmcw(frame);
        ChannelOperator op;
        op.sample_rate_hz = frame.chirp.sample_rate_hz;
        op.taps = {{6, 0.0, cplx{1.0, 0.0}}};
        const ComplexFrame rx = op.apply(tx);
        const ComplexFrame de = dechirp(rx, frame.chirp, frame.n_chirps);
        const CpiMatrix cpi = build_cpi(de, frame.n_chirps, frame.chirp.n_samples);
        const RangeDopplerMap map = range_doppler(cpi, frame.chirp.bandwidth_hz);
        std::size_t best_l = 0, best_i = 0;
        double best = -1.0;
        for (std::size_t l = 0; l < map.n_delay_bins(); ++l)
            for (std::size_t i = 0; i < map.n_chirps; ++i)
                if (map.grid[l][i] > best) {
                    best = map.grid[l][i];
                    best_l = l;
                    best_i = i;
                }
        CHECK(best_l == 6);
        CHECK(map.doppler_bin(best_i) == 0);
    }
    SUBCASE("moving target lands in the calibrated Doppler bin") {
        FrameSpec frame = desk_frame(64, 2);
        frame.ofdm.power = 0.0;
        const double doppler_hz = 25000.0;  // ~3.8 bins at K=64
        const ComplexFrame tx = synth_fmcw(frame);
        ChannelOperator op;
        op.sample_rate_hz = frame.chirp.sample_rate_hz;
        op.taps = {{10, doppler_hz, cplx{1.0, 0.0}}};
        const ComplexFrame rx = op.apply(tx);
        const ComplexFrame de = dechirp(rx, frame.chirp, frame.n_chirps);
        const CpiMatrix cpi = build_cpi(de, frame.n_chirps, frame.chirp.n_samples);
        const RangeDopplerMap map = range_doppler(cpi, frame.chirp.bandwidth_hz);
        const auto peaks = detect_peaks(map, 12.0, 1);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].delay_bin == 10);
        const int expected_bin = static_cast<int>(std::lround(
            doppler_hz * static_cast<double>(frame.n_chirps) * cpi.chirp_duration_s));
        CHECK(std::abs(peaks[0].doppler_bin - expected_bin) <= 1);
    }
    SUBCASE("reference-scale Doppler bin arithmetic") {
        const double tau_eff = 295.0 / 122.88e6;
        CHECK(std::lround(2054.8 * 833.0 * tau_eff) == 4);
    }
    SUBCASE("zero input maps to all zeros") {
        ComplexFrame de;
        de.sample_rate_hz = 1.0;
        de.samples.assign(64 * 4, cplx{0.0, 0.0});
        const CpiMatrix cpi = build_cpi(de, 4, 64);
        const RangeDopplerMap map = range_doppler(cpi, 0.5);
        for (const auto& row : map.grid)
            for (double v : row) CHECK(v < 1e-20);
    }
}

TEST_CASE("peak detection") {
    RangeDopplerMap map;
    map.sample_rate_hz = 1.0;
    map.chirp_duration_s = 1.0;
    map.n_chirps = 8;
    map.grid.assign(16, std::vector<double>(8, 0.0));

    SUBCASE("single nonzero cell is returned") {
        map.grid[5][3] = 10.0;
        const auto peaks = detect_peaks(map, 3.0, 4);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].delay_bin == 5);
        CHECK(peaks[0].doppler_bin == map.doppler_bin(3));
    }
    SUBCASE("all-equal map yields nothing") {
        for (auto& row : map.grid) std::fill(row.begin(), row.end(), 2.5);
        CHECK(detect_peaks(map, 3.0, 4).empty());
    }
    SUBCASE("sorted by power and truncated") {
        map.grid[2][1] = 5.0;
        map.grid[9][6] = 50.0;
        map.grid[12][2] = 20.0;
        const auto peaks = detect_peaks(map, 3.0, 2);
        REQUIRE(peaks.size() == 2);
        CHECK(peaks[0].delay_bin == 9);
        CHECK(peaks[1].delay_bin == 12);
    }
    SUBCASE("negative threshold rejected") {
        CHECK_THROWS_AS(detect_peaks(map, -1.0, 4), ArgumentError);
    }
}

TEST_CASE("three-target detection at 20 dB, desk scale") {
    ScenarioConfig cfg = jrctest::desk_config();
    const FrameSpec frame = cfg.frame_spec();
    const ComplexFrame tx = desk_tx(frame, 5);

    ChannelRealization ch;
    ch.carrier_hz = cfg.carrier_hz;
    ch.targets = draw_targets(cfg.pdp_decay, 3, cfg.target_ranges_m, cfg.target_velocities_mps,
                              cfg.carrier_hz, std::uint64_t{12});
    ch.noise_variance = calibrate_noise(20.0, 1.0);
    ch.seed = 77;
    const ComplexFrame rx = apply_channel(tx, ch);

    const RadarResult result =
        radar_receiver_pass(rx, frame, cfg.threshold_db, 3, cfg.n_bar);
    REQUIRE(result.estimates.size() == 3);
    const double tau_eff = frame.chirp.effective_duration_s();
    for (const TargetTruth& truth : ch.targets) {
        const auto true_bin = std::llround(truth.delay_s * cfg.sample_rate_hz);
        const auto true_doppler = std::lround(truth.doppler_hz *
                                              static_cast<double>(cfg.n_chirps) * tau_eff);
        bool matched = false;
        for (const TargetEstimate& e : result.estimates) {
            if (std::llabs(static_cast<long long>(e.delay_bin) - true_bin) <= 1 &&
                std::labs(e.doppler_bin - true_doppler) <= 1)
                matched = true;
        }
        CHECK(matched);
    }
}

TEST_CASE("least-squares gain estimation") {
    const ChirpSpec spec = table_chirp();
    const ComplexFrame chirp = synth_chirp(spec);

    auto synth_rx = [&](const std::vector<std::pair<std::size_t, cplx>>& paths) {
        cvec rx(spec.n_samples, cplx{0.0, 0.0});
        for (const auto& [l, g] : paths)
            for (std::size_t n = l; n < spec.n_samples; ++n) rx[n] += g * chirp.samples[n - l];
        return rx;
    };

    SUBCASE("single path recovered exactly") {
        const cplx g{0.8, -0.45};
        const auto h = estimate_gains(synth_rx({{6, g}}), {6}, spec, 144);
        REQUIRE(h.size() == 1);
        CHECK(std::abs(h[0] - g) < 1e-8);
    }
    SUBCASE("two paths recovered exactly, matches dense solve") {
        const cplx g0{0.8, -0.45}, g1{-0.2, 0.33};
        const cvec rx = synth_rx({{6, g0}, {74, g1}});
        const auto h = estimate_gains(rx, {6, 74}, spec, 144);
        REQUIRE(h.size() == 2);
        CHECK(std::abs(h[0] - g0) < 1e-8);
        CHECK(std::abs(h[1] - g1) < 1e-8);

        // Independent oracle: dense least-squares via QR on the same model.
        const std::size_t rows = spec.n_samples - 144;
        Eigen::MatrixXcd b(rows, 2);
        Eigen::VectorXcd y(rows);
        const std::size_t delays[2] = {6, 74};
        for (std::size_t r = 0; r < rows; ++r) {
            y(static_cast<Eigen::Index>(r)) = rx[144 + r];
            for (int p = 0; p < 2; ++p)
                b(static_cast<Eigen::Index>(r), p) = chirp.samples[144 + r - delays[p]];
        }
        const Eigen::VectorXcd ref = b.colPivHouseholderQr().solve(y);
        CHECK(std::abs(h[0] - ref(0)) < 1e-8);
        CHECK(std::abs(h[1] - ref(1)) < 1e-8);
    }
    SUBCASE("duplicate delay bins flagged") {
        CHECK_THROWS_AS(estimate_gains(synth_rx({{6, cplx{1.0, 0.0}}}), {6, 6}, spec, 144),
                        EstimationError);
    }
    SUBCASE("gain MSE shrinks as SNR grows") {
        const double snrs[] = {0.0, 10.0, 20.0, 30.0};
        double prev = 1e300;
        std::mt19937_64 rng(2024);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (const double snr : snrs) {
            const double sigma = std::sqrt(calibrate_noise(snr, 1.0) / 2.0);
            double mse = 0.0;
            const int trials = 200;
            for (int t = 0; t < trials; ++t) {
                const cplx g{gauss(rng) / std::sqrt(2.0), gauss(rng) / std::sqrt(2.0)};
                cvec rx = synth_rx({{37, g}});
                for (cplx& s : rx) s += cplx{sigma * gauss(rng), sigma * gauss(rng)};
                const auto h = estimate_gains(rx, {37}, spec, 144);
                mse += std::norm(h[0] - g);
            }
            mse /= trials;
            CHECK(mse < prev);
            prev = mse;
        }
    }
}

TEST_CASE("channel reconstruction") {
    SUBCASE("perfect estimates reproduce the noiseless FMCW echo") {
        FrameSpec frame = desk_frame(16, 2);
        const ComplexFrame fmcw = synth_fmcw(frame);
        ChannelOperator truth;
        truth.sample_rate_hz = frame.chirp.sample_rate_hz;
        truth.taps = {{6, 0.0, cplx{0.7, 0.1}}, {37, 2054.8, cplx{-0.3, 0.4}}};
        const ComplexFrame echo = truth.apply(fmcw);

        std::vector<TargetEstimate> est(2);
        est[0].delay_bin = 6;
        est[0].doppler_hz = 0.0;
        est[0].gain_hat = cplx{0.7, 0.1};
        est[1].delay_bin = 37;
        est[1].doppler_hz = 2054.8;
        est[1].gain_hat = cplx{-0.3, 0.4};
        const ChannelOperator rebuilt = reconstruct_channel(est, truth.sample_rate_hz);
        const ComplexFrame echo2 = rebuilt.apply(fmcw);
        double err = 0.0, ref = 0.0;
        for (std::size_t n = 0; n < echo.size(); ++n) {
            err += std::norm(echo.samples[n] - echo2.samples[n]);
            ref += std::norm(echo.samples[n]);
        }
        CHECK(std::sqrt(err / ref) < 1e-10);
    }
    SUBCASE("static unit path at delay 0 is the identity") {
        std::vector<TargetEstimate> est(1);
        est[0].gain_hat = cplx{1.0, 0.0};
        const ChannelOperator op = reconstruct_channel(est, 122.88e6);
        ComplexFrame x;
        x.sample_rate_hz = 122.88e6;
        x.samples = jrctest::random_cvec(64, 4);
        const ComplexFrame y = op.apply(x);
        CHECK(jrctest::max_abs_diff(x.samples, y.samples) == 0.0);
    }
    SUBCASE("gain scaling is linear") {
        std::vector<TargetEstimate> est(1);
        est[0].delay_bin = 3;
        est[0].gain_hat = cplx{0.5, 0.0};
        ComplexFrame x;
        x.sample_rate_hz = 122.88e6;
        x.samples = jrctest::random_cvec(64, 4);
        const ComplexFrame y1 = reconstruct_channel(est, 122.88e6).apply(x);
        est[0].gain_hat *= 3.0;
        const ComplexFrame y3 = reconstruct_channel(est, 122.88e6).apply(x);
        for (std::size_t n = 0; n < x.size(); ++n)
            CHECK(std::abs(y3.samples[n] - 3.0 * y1.samples[n]) < 1e-14);
    }
}
