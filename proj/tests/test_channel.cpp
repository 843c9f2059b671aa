#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>

#include "jrcsim/channel.hpp"
#include "test_util.hpp"

using namespace jrcsim;

TEST_CASE("draw_targets power delay profile") {
    SUBCASE("gamma=1, P=3: expected powers 1 : e^-1 : e^-2, normalized") {
        const double eta = 1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0));
        const std::size_t n_draws = 20000;
        std::array<double, 3> acc{};
        std::mt19937_64 rng(42);
        for (std::size_t i = 0; i < n_draws; ++i) {
            const auto t = draw_targets(1.0, 3, {15.0, 90.0, 180.0}, {0.0, 22.0, -33.0}, 28e9, rng);
            for (std::size_t p = 0; p < 3; ++p) acc[p] += std::norm(t[p].gain);
        }
        double total = 0.0;
        for (std::size_t p = 0; p < 3; ++p) {
            acc[p] /= static_cast<double>(n_draws);
            total += acc[p];
            CHECK(acc[p] == doctest::Approx(eta * std::exp(-static_cast<double>(p))).epsilon(0.05));
        }
        CHECK(total == doctest::Approx(1.0).epsilon(0.05));
    }
    SUBCASE("gamma=0, P=2: flat profile, 0.5 each") {
        std::mt19937_64 rng(1);
        double p0 = 0.0, p1 = 0.0;
        for (std::size_t i = 0; i < 20000; ++i) {
            const auto t = draw_targets(0.0, 2, {10.0, 20.0}, {0.0, 0.0}, 28e9, rng);
            p0 += std::norm(t[0].gain);
            p1 += std::norm(t[1].gain);
        }
        CHECK(p0 / 20000 == doctest::Approx(0.5).epsilon(0.05));
        CHECK(p1 / 20000 == doctest::Approx(0.5).epsilon(0.05));
    }
    SUBCASE("Doppler from velocity and carrier") {
        const auto t = draw_targets(1.0, 1, {90.0}, {22.0}, 28e9, std::uint64_t{5});
        CHECK(t[0].doppler_hz == doctest::Approx(2054.8).epsilon(1e-4));
        CHECK(t[0].delay_s == doctest::Approx(90.0 / kSpeedOfLight).epsilon(1e-12));
    }
    SUBCASE("mismatched lengths rejected") {
        std::mt19937_64 rng(1);
        CHECK_THROWS_AS(draw_targets(1.0, 2, {10.0}, {0.0, 1.0}, 28e9, rng), ArgumentError);
    }
}

TEST_CASE("apply_channel basics") {
    ComplexFrame tx;
    tx.sample_rate_hz = 122.88e6;
    tx.samples = jrctest::random_cvec(512, 9);

    SUBCASE("identity channel") {
        ChannelRealization ch;
        ch.carrier_hz = 28e9;
        ch.targets = {TargetTruth::make(0.0, 0.0, cplx{1.0, 0.0}, 28e9)};
        const ComplexFrame y = apply_channel(tx, ch);
        CHECK(jrctest::max_abs_diff(y.samples, tx.samples) == 0.0);
    }
    SUBCASE("pure delay with gain") {
        const cplx g{0.3, -0.7};
        ChannelRealization ch;
        ch.carrier_hz = 28e9;
        const double delay_s = 12.0 / tx.sample_rate_hz;
        ch.targets = {TargetTruth::make(delay_s * kSpeedOfLight, 0.0, g, 28e9)};
        const ComplexFrame y = apply_channel(tx, ch);
        for (std::size_t n = 0; n < 12; ++n) CHECK(y.samples[n] == cplx{0.0, 0.0});
        for (std::size_t n = 12; n < tx.size(); ++n)
            CHECK(std::abs(y.samples[n] - g * tx.samples[n - 12]) < 1e-14);
    }
    SUBCASE("reference-range delay bin: 90 m quantizes to 37 samples") {
        const double delay_s = 90.0 / kSpeedOfLight;
        CHECK(std::llround(delay_s * 122.88e6) == 37);
    }
    SUBCASE("delay beyond the frame is a configuration error") {
        ChannelRealization ch;
        ch.carrier_hz = 28e9;
        const double delay_s = 600.0 / tx.sample_rate_hz;
        ch.targets = {TargetTruth::make(delay_s * kSpeedOfLight, 0.0, cplx{1.0, 0.0}, 28e9)};
        CHECK_THROWS_AS(apply_channel(tx, ch), ConfigError);
    }
}

TEST_CASE("sparse operator equals the dense matrix oracle") {
    std::mt19937_64 rng(17);
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        const std::size_t n = 128 + 37 * trial;  // up to 461 <= 512
        ChannelOperator op;
        op.sample_rate_hz = 122.88e6;
        std::uniform_int_distribution<std::int64_t> delay(0, 20);
        std::uniform_real_distribution<double> doppler(-4000.0, 4000.0);
        std::normal_distribution<double> g(0.0, 1.0);
        for (int p = 0; p < 3; ++p)
            op.taps.push_back({delay(rng), doppler(rng), cplx{g(rng), g(rng)}});

        ComplexFrame x;
        x.sample_rate_hz = op.sample_rate_hz;
        x.samples = jrctest::random_cvec(n, 100 + trial);
        const ComplexFrame y = op.apply(x);

        const Eigen::MatrixXcd h = jrctest::dense_channel_matrix(op, n);
        Eigen::VectorXcd xv(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) xv(static_cast<Eigen::Index>(i)) = x.samples[i];
        const Eigen::VectorXcd yv = h * xv;
        double err = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            err += std::norm(y.samples[i] - yv(static_cast<Eigen::Index>(i)));
            ref += std::norm(yv(static_cast<Eigen::Index>(i)));
        }
        CHECK(std::sqrt(err / ref) < 1e-10);
    }
}

TEST_CASE("channel linearity and energy") {
    ChannelRealization ch;
    ch.carrier_hz = 28e9;
    ch.targets = {TargetTruth::make(90.0, 22.0, cplx{0.5, 0.2}, 28e9),
                  TargetTruth::make(15.0, -33.0, cplx{-0.1, 0.8}, 28e9)};

    ComplexFrame x, y;
    x.sample_rate_hz = y.sample_rate_hz = 122.88e6;
    x.samples = jrctest::random_cvec(400, 21);
    y.samples = jrctest::random_cvec(400, 22);

    SUBCASE("linearity (noiseless)") {
        const cplx a{1.5, -0.5}, b{0.25, 2.0};
        ComplexFrame mix = x;
        for (std::size_t i = 0; i < x.size(); ++i)
            mix.samples[i] = a * x.samples[i] + b * y.samples[i];
        const ComplexFrame hm = apply_channel(mix, ch);
        const ComplexFrame hx = apply_channel(x, ch);
        const ComplexFrame hy = apply_channel(y, ch);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::abs(hm.samples[i] - (a * hx.samples[i] + b * hy.samples[i])) < 1e-12);
    }
    SUBCASE("unit-gain single path preserves energy") {
        ChannelRealization single;
        single.carrier_hz = 28e9;
        single.targets = {TargetTruth::make(0.0, 100.0, cplx{1.0, 0.0}, 28e9)};
        const ComplexFrame out = apply_channel(x, single);
        CHECK(energy(out.samples) == doctest::Approx(energy(x.samples)).epsilon(1e-12));
    }
}

TEST_CASE("noise calibration") {
    SUBCASE("sigma^2 formula") {
        CHECK(calibrate_noise(0.0, 1.0) == doctest::Approx(1.0));
        CHECK(calibrate_noise(20.0, 1.0) == doctest::Approx(0.01));
        CHECK(calibrate_noise(3.0103, 2.0) == doctest::Approx(1.0).epsilon(1e-4));
        CHECK_THROWS_AS(calibrate_noise(0.0, 0.0), ArgumentError);
    }
    SUBCASE("empirical variance on a zero frame within 3%") {
        ComplexFrame zero;
        zero.sample_rate_hz = 122.88e6;
        zero.samples.assign(100000, cplx{0.0, 0.0});
        ChannelRealization ch;
        ch.carrier_hz = 28e9;
        ch.targets = {TargetTruth::make(0.0, 0.0, cplx{1.0, 0.0}, 28e9)};
        ch.noise_variance = 0.37;
        ch.seed = 99;
        const ComplexFrame out = apply_channel(zero, ch);
        CHECK(mean_power(out.samples) == doctest::Approx(0.37).epsilon(0.03));
    }
}

TEST_CASE("path loss") {
    const double lambda = kSpeedOfLight / 28e9;
    SUBCASE("d = lambda gives 1/(4pi)^2") {
        CHECK(path_loss(lambda, 2.0, 1.0, 1.0, lambda) ==
              doctest::Approx(1.0 / (16.0 * kPi * kPi)).epsilon(1e-12));
    }
    SUBCASE("inverse square") {
        const double g1 = path_loss(10.0, 2.0, 1.0, 1.0, lambda);
        const double g2 = path_loss(20.0, 2.0, 1.0, 1.0, lambda);
        CHECK(g1 / g2 == doctest::Approx(4.0).epsilon(1e-12));
    }
    SUBCASE("28 GHz at 15 m") {
        CHECK(path_loss(15.0, 2.0, 1.0, 1.0, lambda) == doctest::Approx(3.23e-9).epsilon(0.01));
    }
    SUBCASE("nonpositive distance rejected") {
        CHECK_THROWS_AS(path_loss(0.0, 2.0, 1.0, 1.0, lambda), ArgumentError);
    }
}
