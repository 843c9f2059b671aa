#pragma once

#include <complex>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jrcsim {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Thrown when a scenario/spec is internally inconsistent.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown on bad arguments to an individual operation.
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Thrown when an estimation step cannot produce a result (e.g. singular
/// normal equations from duplicate delay bins).
struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A finite sequence of complex baseband samples at rate Fs.
/// start_sample is the global time index of samples[0]; Doppler phase ramps
/// are always evaluated on the global index.
struct ComplexFrame {
    cvec samples;
    double sample_rate_hz = 0.0;
    std::int64_t start_sample = 0;

    std::size_t size() const { return samples.size(); }

    void validate() const {
        if (samples.empty()) throw ArgumentError("ComplexFrame: empty sample vector");
        if (!(sample_rate_hz > 0.0)) throw ArgumentError("ComplexFrame: sample_rate_hz must be > 0");
        for (const cplx& s : samples)
            if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
                throw ArgumentError("ComplexFrame: non-finite sample");
    }
};

inline double energy(const cvec& v) {
    double e = 0.0;
    for (const cplx& s : v) e += std::norm(s);
    return e;
}

inline double mean_power(const cvec& v) {
    return v.empty() ? 0.0 : energy(v) / static_cast<double>(v.size());
}

}  // namespace jrcsim
