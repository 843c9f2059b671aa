#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "jrcsim/codec.hpp"
#include "jrcsim/frame_builder.hpp"
#include "jrcsim/radar.hpp"

namespace jrcsim {

/// Full scenario description. Defaults follow the reference parameter set
/// (28 GHz carrier, 100 MHz sweep, 122.88 MHz sampling, 60 kHz subcarriers,
/// 2048-point FFT with 1666 active subcarriers, three targets) at desk scale
/// (64 chirps, 16 OFDM symbols).
struct ScenarioConfig {
    // radar
    double carrier_hz = 28e9;
    double bandwidth_hz = 100e6;
    double sample_rate_hz = 122.88e6;
    double chirp_duration_s = 2.4e-6;
    double frame_duration_s = 2e-3;
    std::size_t n_chirps = 64;
    double p_fmcw = 1.0;
    double threshold_db = 12.0;
    std::size_t n_bar = 144;
    Window window = Window::None;

    // ofdm
    std::size_t n_fft = 2048;
    double subcarrier_spacing_hz = 60e3;
    std::size_t n_cp = 144;
    std::size_t n_allocated = 1666;
    std::size_t n_symbols = 16;
    unsigned qam_order = 4;
    double p_ofdm = 1.0;

    // targets
    std::vector<double> target_ranges_m = {15.0, 90.0, 180.0};
    std::vector<double> target_velocities_mps = {0.0, 22.0, -33.0};
    double pdp_decay = 1.0;

    // codec
    unsigned codec_constraint_length = 7;
    std::vector<unsigned> codec_generators_octal = {0171, 0133};
    std::size_t interleaver_rows = 0;  // 0 = derive from allocation
    std::size_t interleaver_cols = 0;

    // sim
    std::vector<double> snr_grid_db = {0.0, 10.0, 20.0, 30.0};
    std::size_t trials = 200;
    std::uint64_t seed = 1;
    std::size_t workers = 0;  // 0 = hardware concurrency
    std::size_t max_targets = 0;  // 0 = number of configured targets
    std::string output_dir = "out";

    ChirpSpec chirp_spec() const {
        return ChirpSpec::make(bandwidth_hz, chirp_duration_s, sample_rate_hz, p_fmcw);
    }

    OfdmSpec ofdm_spec() const {
        OfdmSpec o;
        o.n_fft = n_fft;
        o.subcarrier_spacing_hz = subcarrier_spacing_hz;
        o.n_cp = n_cp;
        o.n_allocated = n_allocated;
        o.n_symbols = n_symbols;
        o.power = p_ofdm;
        o.qam_order = qam_order;
        return o;
    }

    FrameSpec frame_spec() const {
        FrameSpec f;
        f.chirp = chirp_spec();
        f.ofdm = ofdm_spec();
        f.n_chirps = n_chirps;
        f.total_duration_s = frame_duration_s;
        return f;
    }

    unsigned bits_per_symbol() const {
        return static_cast<unsigned>(std::lround(std::log2(qam_order)));
    }

    CodecSpec codec_spec() const {
        CodecSpec c;
        c.constraint_length = codec_constraint_length;
        c.generators_octal = codec_generators_octal;
        if (interleaver_rows != 0 && interleaver_cols != 0) {
            c.interleaver_rows = interleaver_rows;
            c.interleaver_cols = interleaver_cols;
        } else {
            // One interleaver chunk spans one OFDM symbol's coded bits.
            const std::size_t b = bits_per_symbol();
            if (n_allocated % b == 0) {
                c.interleaver_rows = n_allocated / b;
                c.interleaver_cols = b * b;
            } else {
                c.interleaver_rows = n_allocated;
                c.interleaver_cols = b;
            }
        }
        return c;
    }

    std::size_t effective_max_targets() const {
        return max_targets != 0 ? max_targets : target_ranges_m.size();
    }

    void validate() const {
        frame_spec().validate();  // also validates chirp/ofdm and Fs = N * delta_f
        codec_spec().validate();
        if (target_ranges_m.size() != target_velocities_mps.size())
            throw ConfigError("config: target ranges and velocities differ in length");
        for (double r : target_ranges_m) {
            const double delay = r / kSpeedOfLight;
            const auto l = std::llround(delay * sample_rate_hz);
            if (static_cast<std::size_t>(l) >= n_cp) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "config: target delay %.4g us (range %.4g m) >= CP %.4g us",
                              delay * 1e6, r, static_cast<double>(n_cp) / sample_rate_hz * 1e6);
                throw ConfigError(buf);
            }
            if (static_cast<std::size_t>(l) > n_bar)
                throw ConfigError("config: target delay exceeds LS offset n_bar");
        }
        if (n_bar >= chirp_spec().n_samples)
            throw ConfigError("config: n_bar must be smaller than the chirp length");
        if (snr_grid_db.empty()) throw ConfigError("config: empty SNR grid");
        if (trials == 0) throw ConfigError("config: trials must be >= 1");
        const std::size_t coded = n_symbols * n_allocated * bits_per_symbol();
        if (coded % codec_spec().chunk_bits() != 0)
            throw ConfigError("config: coded frame does not fill the interleaver");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "' for " + key);
    }
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != std::floor(d)) throw ConfigError("config: expected integer for " + key);
    return static_cast<std::size_t>(d);
}

inline std::vector<double> to_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
    return out;
}

}  // namespace detail

/// Apply one "section.key = value" assignment.
inline void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
    using detail::to_double;
    using detail::to_double_list;
    using detail::to_size;
    if (key == "radar.carrier_hz") cfg.carrier_hz = to_double(key, value);
    else if (key == "radar.bandwidth_hz") cfg.bandwidth_hz = to_double(key, value);
    else if (key == "radar.sample_rate_hz") cfg.sample_rate_hz = to_double(key, value);
    else if (key == "radar.chirp_duration_s") cfg.chirp_duration_s = to_double(key, value);
    else if (key == "radar.frame_duration_s") cfg.frame_duration_s = to_double(key, value);
    else if (key == "radar.n_chirps") cfg.n_chirps = to_size(key, value);
    else if (key == "radar.power") cfg.p_fmcw = to_double(key, value);
    else if (key == "radar.threshold_db") cfg.threshold_db = to_double(key, value);
    else if (key == "radar.n_bar") cfg.n_bar = to_size(key, value);
    else if (key == "radar.window") {
        if (value == "none") cfg.window = Window::None;
        else if (value == "hann") cfg.window = Window::Hann;
        else throw ConfigError("config: radar.window must be 'none' or 'hann'");
    }
    else if (key == "ofdm.n_fft") cfg.n_fft = to_size(key, value);
    else if (key == "ofdm.subcarrier_spacing_hz") cfg.subcarrier_spacing_hz = to_double(key, value);
    else if (key == "ofdm.n_cp") cfg.n_cp = to_size(key, value);
    else if (key == "ofdm.n_allocated") cfg.n_allocated = to_size(key, value);
    else if (key == "ofdm.n_symbols") cfg.n_symbols = to_size(key, value);
    else if (key == "ofdm.qam_order") cfg.qam_order = static_cast<unsigned>(to_size(key, value));
    else if (key == "ofdm.power") cfg.p_ofdm = to_double(key, value);
    else if (key == "targets.ranges_m") cfg.target_ranges_m = to_double_list(key, value);
    else if (key == "targets.velocities_mps") cfg.target_velocities_mps = to_double_list(key, value);
    else if (key == "targets.pdp_decay") cfg.pdp_decay = to_double(key, value);
    else if (key == "codec.constraint_length")
        cfg.codec_constraint_length = static_cast<unsigned>(to_size(key, value));
    else if (key == "codec.generators_octal") {
        cfg.codec_generators_octal.clear();
        for (const auto& item : detail::split_list(value)) {
            try {
                cfg.codec_generators_octal.push_back(
                    static_cast<unsigned>(std::stoul(item, nullptr, 8)));
            } catch (const std::exception&) {
                throw ConfigError("config: bad octal generator '" + item + "'");
            }
        }
    }
    else if (key == "codec.interleaver_rows") cfg.interleaver_rows = to_size(key, value);
    else if (key == "codec.interleaver_cols") cfg.interleaver_cols = to_size(key, value);
    else if (key == "sim.snr_grid_db") cfg.snr_grid_db = to_double_list(key, value);
    else if (key == "sim.trials") cfg.trials = to_size(key, value);
    else if (key == "sim.seed") cfg.seed = to_size(key, value);
    else if (key == "sim.workers") cfg.workers = to_size(key, value);
    else if (key == "sim.max_targets") cfg.max_targets = to_size(key, value);
    else if (key == "sim.output_dir") cfg.output_dir = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

/// Parse a nested key-value config file ([section] headers, key = value lines,
/// '#' comments) on top of the given defaults.
inline ScenarioConfig parse_config_text(std::istream& in, ScenarioConfig cfg = {}) {
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        apply_setting(cfg, section.empty() ? key : section + "." + key, value);
    }
    return cfg;
}

inline ScenarioConfig parse_config_file(const std::string& path, ScenarioConfig cfg = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    return parse_config_text(in, cfg);
}

namespace detail {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt_g(v[i]);
    }
    return out;
}

}  // namespace detail

/// Serialize every field (defaults included) in the config file format, so a
/// snapshot reparses to the identical scenario.
inline std::string config_snapshot(const ScenarioConfig& c) {
    std::ostringstream o;
    o << "[radar]\n";
    o << "carrier_hz = " << detail::fmt_g(c.carrier_hz) << "\n";
    o << "bandwidth_hz = " << detail::fmt_g(c.bandwidth_hz) << "\n";
    o << "sample_rate_hz = " << detail::fmt_g(c.sample_rate_hz) << "\n";
    o << "chirp_duration_s = " << detail::fmt_g(c.chirp_duration_s) << "\n";
    o << "frame_duration_s = " << detail::fmt_g(c.frame_duration_s) << "\n";
    o << "n_chirps = " << c.n_chirps << "\n";
    o << "power = " << detail::fmt_g(c.p_fmcw) << "\n";
    o << "threshold_db = " << detail::fmt_g(c.threshold_db) << "\n";
    o << "n_bar = " << c.n_bar << "\n";
    o << "window = " << (c.window == Window::Hann ? "hann" : "none") << "\n\n";
    o << "[ofdm]\n";
    o << "n_fft = " << c.n_fft << "\n";
    o << "subcarrier_spacing_hz = " << detail::fmt_g(c.subcarrier_spacing_hz) << "\n";
    o << "n_cp = " << c.n_cp << "\n";
    o << "n_allocated = " << c.n_allocated << "\n";
    o << "n_symbols = " << c.n_symbols << "\n";
    o << "qam_order = " << c.qam_order << "\n";
    o << "power = " << detail::fmt_g(c.p_ofdm) << "\n\n";
    o << "[targets]\n";
    o << "ranges_m = " << detail::fmt_list(c.target_ranges_m) << "\n";
    o << "velocities_mps = " << detail::fmt_list(c.target_velocities_mps) << "\n";
    o << "pdp_decay = " << detail::fmt_g(c.pdp_decay) << "\n\n";
    o << "[codec]\n";
    o << "constraint_length = " << c.codec_constraint_length << "\n";
    o << "generators_octal = ";
    for (std::size_t i = 0; i < c.codec_generators_octal.size(); ++i) {
        if (i) o << ", ";
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%o", c.codec_generators_octal[i]);
        o << buf;
    }
    o << "\n";
    o << "interleaver_rows = " << c.interleaver_rows << "\n";
    o << "interleaver_cols = " << c.interleaver_cols << "\n\n";
    o << "[sim]\n";
    o << "snr_grid_db = " << detail::fmt_list(c.snr_grid_db) << "\n";
    o << "trials = " << c.trials << "\n";
    o << "seed = " << c.seed << "\n";
    o << "workers = " << c.workers << "\n";
    o << "max_targets = " << c.max_targets << "\n";
    o << "output_dir = " << c.output_dir << "\n";
    return o.str();
}

}  // namespace jrcsim
