#pragma once

#include <map>
#include <mutex>

#include <fftw3.h>

#include "jrcsim/common.hpp"

namespace jrcsim {

/// Thin wrapper around FFTW for arbitrary-length complex transforms.
/// Plans are cached per (size, direction); planning is serialized because the
/// FFTW planner is not thread-safe, execution via the new-array interface is.
class Fft {
public:
    static void transform(const cvec& in, cvec& out, int sign) {
        const int n = static_cast<int>(in.size());
        out.resize(in.size());
        fftw_plan plan = get_plan(n, sign);
        // FFTW_UNALIGNED plans accept plain vector storage.
        fftw_execute_dft(plan,
                         reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                         reinterpret_cast<fftw_complex*>(out.data()));
    }

    /// Unnormalized forward DFT: X[k] = sum_n x[n] e^{-j2pi kn/N}.
    static cvec forward(const cvec& in) {
        cvec out;
        transform(in, out, FFTW_FORWARD);
        return out;
    }

    /// Unnormalized inverse DFT: x[n] = sum_k X[k] e^{+j2pi kn/N}.
    static cvec inverse(const cvec& in) {
        cvec out;
        transform(in, out, FFTW_BACKWARD);
        return out;
    }

private:
    static fftw_plan get_plan(int n, int sign) {
        static std::mutex mtx;
        static std::map<std::pair<int, int>, fftw_plan> cache;
        std::lock_guard<std::mutex> lock(mtx);
        auto key = std::make_pair(n, sign);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        cvec scratch_in(n), scratch_out(n);
        fftw_plan plan = fftw_plan_dft_1d(
            n, reinterpret_cast<fftw_complex*>(scratch_in.data()),
            reinterpret_cast<fftw_complex*>(scratch_out.data()), sign,
            FFTW_ESTIMATE | FFTW_UNALIGNED);
        cache.emplace(key, plan);
        return plan;
    }
};

}  // namespace jrcsim
