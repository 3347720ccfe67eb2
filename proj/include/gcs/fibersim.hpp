#ifndef GCS_FIBERSIM_HPP
#define GCS_FIBERSIM_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "gcs/airs.hpp"
#include "gcs/common.hpp"
#include "gcs/constellation.hpp"
#include "gcs/io.hpp"

namespace gcs {

// ---------------------------------------------------------------------------
// Physical constants (SI)
// ---------------------------------------------------------------------------
namespace phys {
inline constexpr double kPlanck = 6.62607015e-34;    // J*s
inline constexpr double kSpeedOfLight = 2.99792458e8; // m/s
} // namespace phys

// ---------------------------------------------------------------------------
// Link and transmitter descriptions
// ---------------------------------------------------------------------------

/// Multi-span fiber link with identical spans and (optionally) a lumped
/// amplifier at the end of each span that exactly compensates the span loss.
struct FiberLink {
    double span_length_km = 80.0;
    int n_spans = 1;
    double alpha_db_per_km = 0.21;          // power attenuation
    double dispersion_ps_nm_km = 16.9;      // chromatic dispersion D
    double gamma_per_w_km = 1.31;           // Kerr nonlinearity
    int steps_per_span = 200;               // split-step segments per span
    bool amplifier = true;                  // lumped gain at span end
    double noise_figure_db = 5.0;           // amplifier noise figure
    bool ase = true;                        // inject amplifier noise
    double center_frequency_thz = 193.41;   // optical carrier

    void validate() const {
        if (!(span_length_km > 0.0) || n_spans < 0)
            throw std::invalid_argument("link: span length must be positive, spans >= 0");
        if (alpha_db_per_km < 0.0 || gamma_per_w_km < 0.0)
            throw std::invalid_argument("link: attenuation and nonlinearity must be >= 0");
        if (steps_per_span < 1)
            throw std::invalid_argument("link: steps_per_span must be >= 1");
        if (!(center_frequency_thz > 0.0))
            throw std::invalid_argument("link: center frequency must be positive");
        if (amplifier && noise_figure_db < 0.0)
            throw std::invalid_argument("link: noise figure must be >= 0 dB");
    }

    double total_length_km() const { return span_length_km * n_spans; }

    /// Group-velocity dispersion beta2 in s^2/m from D in ps/(nm*km).
    double beta2_s2_per_m() const {
        const double nu = center_frequency_thz * 1e12;          // Hz
        const double lambda = phys::kSpeedOfLight / nu;          // m
        const double d_si = dispersion_ps_nm_km * 1e-6;          // s/m^2
        return -d_si * lambda * lambda / (2.0 * M_PI * phys::kSpeedOfLight);
    }

    double alpha_per_m() const { return alpha_db_per_km * std::log(10.0) / 10.0 / 1e3; }
    double gamma_per_w_m() const { return gamma_per_w_km * 1e-3; }
    double span_power_gain() const { return std::exp(alpha_per_m() * span_length_km * 1e3); }

    /// Total amplifier-noise power (W) in both polarizations within a
    /// reference bandwidth (Hz), summed over all spans:
    ///   sigma2 = 2 * n_spans * (G - 1) * h * nu * F * B_ref
    double ase_power_w(double bandwidth_hz) const {
        if (!amplifier || !ase || n_spans == 0)
            return 0.0;
        const double g = span_power_gain();
        const double f = db_to_lin(noise_figure_db);
        const double nu = center_frequency_thz * 1e12;
        return 2.0 * n_spans * (g - 1.0) * phys::kPlanck * nu * f * bandwidth_hz;
    }
};

/// Transmitter: root-raised-cosine shaped WDM channels, each carrying
/// independent uniform symbols from one 4-dimensional constellation.
struct TxConfig {
    double symbol_rate_gbd = 45.0;     // per channel
    double rolloff = 0.1;              // RRC excess bandwidth, 0 < r <= 1
    int samples_per_symbol = 2;
    int n_channels = 1;
    double channel_spacing_ghz = 50.0;
    double launch_power_dbm = 0.0;     // per channel, both polarizations
    int dac_bits = 0;                  // 0 disables quantization
    long long n_symbols = 1 << 14;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(symbol_rate_gbd > 0.0))
            throw std::invalid_argument("tx: symbol rate must be positive");
        if (!(rolloff > 0.0) || rolloff > 1.0)
            throw std::invalid_argument("tx: rolloff must satisfy 0 < r <= 1");
        if (samples_per_symbol < 2)
            throw std::invalid_argument("tx: samples_per_symbol must be >= 2");
        if (n_channels < 1)
            throw std::invalid_argument("tx: n_channels must be >= 1");
        if (n_channels > 1 && !(channel_spacing_ghz > 0.0))
            throw std::invalid_argument("tx: channel spacing must be positive");
        if (dac_bits < 0 || dac_bits > 24)
            throw std::invalid_argument("tx: dac_bits must be in [0, 24]");
        if (n_symbols < 2)
            throw std::invalid_argument("tx: n_symbols must be >= 2");
    }

    double sample_rate_ghz() const { return symbol_rate_gbd * samples_per_symbol; }

    /// Total occupied optical bandwidth of the WDM comb (GHz).
    double occupied_bandwidth_ghz() const {
        return (n_channels - 1) * channel_spacing_ghz + (1.0 + rolloff) * symbol_rate_gbd;
    }

    int center_channel() const { return (n_channels - 1) / 2; }
};

/// Dual-polarization complex baseband waveform on a uniform time grid.
struct DualPolWaveform {
    double sample_rate_ghz = 0.0;
    int samples_per_symbol = 0;
    std::vector<std::complex<double>> x; // one polarization
    std::vector<std::complex<double>> y; // the other

    std::size_t size() const { return x.size(); }

    double mean_power_w() const {
        double acc = 0.0;
        for (std::size_t t = 0; t < x.size(); ++t)
            acc += std::norm(x[t]) + std::norm(y[t]);
        return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
    }
};

/// Waveform plus everything the receiver needs to line back up with the
/// transmitted data of the channel under test.
struct ModulatedSignal {
    DualPolWaveform wave;
    std::vector<std::uint32_t> tx_indices; // symbol indices of the center channel
    double occupied_bandwidth_ghz = 0.0;
    long long center_bin_offset = 0;       // FFT-bin frequency shift of center channel
};

/// Receiver output.
struct SimResult {
    double effective_snr_db = 0.0;
    GmiEstimate gmi;
    std::vector<double> received;          // equalized 4-D symbols, row-major
    std::vector<std::uint32_t> tx_indices; // aligned transmitted symbol indices
    double noise_sigma2 = 0.0;             // residual variance per complex dim
};

// ---------------------------------------------------------------------------
// FFT helper (FFTW, plans cached per size, unnormalized forward / normalized
// inverse)
// ---------------------------------------------------------------------------
namespace detail {

class FftPlan {
  public:
    explicit FftPlan(std::size_t n) : n_(n) {
        std::vector<std::complex<double>> probe(n);
        auto* p = reinterpret_cast<fftw_complex*>(probe.data());
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), p, p, FFTW_FORWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(n), p, p, FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!fwd_ || !bwd_)
            throw std::runtime_error("fft: plan creation failed");
    }
    ~FftPlan() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    void forward(std::complex<double>* data) const {
        auto* p = reinterpret_cast<fftw_complex*>(data);
        fftw_execute_dft(fwd_, p, p);
    }
    void inverse(std::complex<double>* data) const {
        auto* p = reinterpret_cast<fftw_complex*>(data);
        fftw_execute_dft(bwd_, p, p);
        const double s = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i)
            data[i] *= s;
    }

  private:
    std::size_t n_;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

inline const FftPlan& fft_plan(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end())
        it = cache.emplace(n, std::make_unique<FftPlan>(n)).first;
    return *it->second;
}

/// Signed FFT frequency of bin k on an n-point grid with sample rate fs.
inline double fft_freq(std::size_t k, std::size_t n, double fs) {
    const auto half = n / 2;
    const double idx = (k < half) ? static_cast<double>(k)
                                  : static_cast<double>(k) - static_cast<double>(n);
    return idx * fs / static_cast<double>(n);
}

/// Root-raised-cosine amplitude response, unity in the passband.
inline double rrc_amplitude(double f_hz, double symbol_rate_hz, double rolloff) {
    const double af = std::abs(f_hz);
    const double half = symbol_rate_hz / 2.0;
    const double lo = (1.0 - rolloff) * half;
    const double hi = (1.0 + rolloff) * half;
    if (af <= lo)
        return 1.0;
    if (af >= hi)
        return 0.0;
    const double arg = M_PI * (af - lo) / (2.0 * rolloff * half);
    return std::sqrt(0.5 * (1.0 + std::cos(arg)));
}

/// In-place multiply of a spectrum by the dispersion (and optional loss)
/// transfer over length_m of fiber: exp(i * beta2/2 * w^2 * L) * exp(-a*L/2).
inline void apply_linear_spectrum(std::vector<std::complex<double>>& spec, double fs_hz,
                                  double beta2, double alpha_per_m, double length_m) {
    const std::size_t n = spec.size();
    const double field_gain = std::exp(-0.5 * alpha_per_m * length_m);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = 2.0 * M_PI * fft_freq(k, n, fs_hz);
        const double phase = 0.5 * beta2 * w * w * length_m;
        spec[k] *= std::polar(field_gain, phase);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Transmitter
// ---------------------------------------------------------------------------

/// Mid-rise uniform quantizer applied independently to the real and imaginary
/// rails of both polarizations. `bits` levels = 2^bits. When fixed_range <= 0
/// each rail uses its own measured peak as full scale; otherwise all rails
/// share [-fixed_range, +fixed_range].
inline void quantize_dac(DualPolWaveform& wave, int bits, double fixed_range = 0.0) {
    if (bits < 1 || bits > 24)
        throw std::invalid_argument("quantize_dac: bits must be in [1, 24]");
    const double levels = static_cast<double>(1u << bits);
    auto rail = [&](auto getter, auto setter, std::vector<std::complex<double>>& v) {
        double peak = fixed_range;
        if (peak <= 0.0) {
            for (const auto& s : v)
                peak = std::max(peak, std::abs(getter(s)));
        }
        if (peak <= 0.0)
            return;
        const double delta = 2.0 * peak / levels;
        const double top = peak - 0.5 * delta;
        for (auto& s : v) {
            double q = delta * (std::floor(getter(s) / delta) + 0.5);
            q = std::clamp(q, -top, top);
            setter(s, q);
        }
    };
    auto get_re = [](const std::complex<double>& s) { return s.real(); };
    auto get_im = [](const std::complex<double>& s) { return s.imag(); };
    auto set_re = [](std::complex<double>& s, double v) { s.real(v); };
    auto set_im = [](std::complex<double>& s, double v) { s.imag(v); };
    rail(get_re, set_re, wave.x);
    rail(get_im, set_im, wave.x);
    rail(get_re, set_re, wave.y);
    rail(get_im, set_im, wave.y);
}

/// Build the WDM waveform: per channel, draw uniform symbols, shape with an
/// exact frequency-domain root-raised-cosine, scale to the configured launch
/// power, shift to the channel's grid-aligned offset, and sum. Requires a
/// 4-dimensional (dual-polarization) constellation.
inline ModulatedSignal modulate(const LabeledConstellation& c, const TxConfig& tx) {
    tx.validate();
    c.validate();
    if (c.dims != 4)
        throw std::invalid_argument("modulate: constellation must have 4 dimensions");
    const double fs_ghz = tx.sample_rate_ghz();
    if (fs_ghz < 1.2 * tx.occupied_bandwidth_ghz())
        throw std::invalid_argument(
            "modulate: sample rate below 1.2x occupied bandwidth; raise "
            "samples_per_symbol or reduce channel count/spacing");

    const std::size_t ns = static_cast<std::size_t>(tx.n_symbols);
    const std::size_t sps = static_cast<std::size_t>(tx.samples_per_symbol);
    const std::size_t n = ns * sps;
    const double fs_hz = fs_ghz * 1e9;
    const double rs_hz = tx.symbol_rate_gbd * 1e9;
    const double df = fs_hz / static_cast<double>(n);
    const auto& fft = detail::fft_plan(n);

    // RRC transfer on the grid and its energy (sets the analytic power scale).
    std::vector<double> h(n);
    double h2_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        h[k] = detail::rrc_amplitude(detail::fft_freq(k, n, fs_hz), rs_hz, tx.rolloff);
        h2_sum += h[k] * h[k];
    }
    // Mean sample power of a unit-gain channel carrying symbols of mean
    // 4-D energy E: E * Ns * sum|H|^2 / n^2 (Parseval over the circular grid).
    const double unit_power =
        c.mean_energy() * static_cast<double>(ns) * h2_sum / (static_cast<double>(n) * static_cast<double>(n));
    const double p_launch_w = dbm_to_watt(tx.launch_power_dbm);
    const double gain = std::sqrt(p_launch_w / unit_power);

    ModulatedSignal out;
    out.occupied_bandwidth_ghz = tx.occupied_bandwidth_ghz();
    out.wave.sample_rate_ghz = fs_ghz;
    out.wave.samples_per_symbol = tx.samples_per_symbol;

    std::vector<std::complex<double>> acc_x(n, 0.0), acc_y(n, 0.0);
    std::vector<std::complex<double>> sym_x(ns), sym_y(ns);
    std::vector<std::complex<double>> spec_x(n), spec_y(n);

    for (int ch = 0; ch < tx.n_channels; ++ch) {
        Rng rng(child_seed(tx.seed, static_cast<std::uint64_t>(ch)));
        std::vector<std::uint32_t> idx(ns);
        for (std::size_t t = 0; t < ns; ++t)
            idx[t] = static_cast<std::uint32_t>(rng.bits(static_cast<unsigned>(c.bits)));
        if (ch == tx.center_channel())
            out.tx_indices = idx;

        for (std::size_t t = 0; t < ns; ++t) {
            const double* p = c.point(idx[t]);
            sym_x[t] = {p[0], p[1]};
            sym_y[t] = {p[2], p[3]};
        }
        // Symbol spectrum (length Ns), periodically extended to the sample
        // grid and windowed by the RRC response: exact circular shaping.
        std::vector<std::complex<double>> sx(sym_x), sy(sym_y);
        detail::fft_plan(ns).forward(sx.data());
        detail::fft_plan(ns).forward(sy.data());
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t km = k % ns;
            spec_x[k] = sx[km] * (gain * h[k]);
            spec_y[k] = sy[km] * (gain * h[k]);
        }
        // Shift to the channel's carrier offset, snapped to an FFT bin.
        const double f_off_hz =
            (static_cast<double>(ch) - 0.5 * (tx.n_channels - 1)) * tx.channel_spacing_ghz * 1e9;
        const long long k_off = std::llround(f_off_hz / df);
        if (ch == tx.center_channel())
            out.center_bin_offset = k_off;
        const long long nn = static_cast<long long>(n);
        for (long long k = 0; k < nn; ++k) {
            const std::size_t src = static_cast<std::size_t>(((k - k_off) % nn + nn) % nn);
            acc_x[static_cast<std::size_t>(k)] += spec_x[src];
            acc_y[static_cast<std::size_t>(k)] += spec_y[src];
        }
    }

    fft.inverse(acc_x.data());
    fft.inverse(acc_y.data());
    out.wave.x = std::move(acc_x);
    out.wave.y = std::move(acc_y);
    if (tx.dac_bits > 0)
        quantize_dac(out.wave, tx.dac_bits);
    return out;
}

// ---------------------------------------------------------------------------
// Channel
// ---------------------------------------------------------------------------

/// Symmetric split-step solution of the Manakov equation over the link.
/// Each span runs `steps_per_span` segments of [half linear, full nonlinear,
/// half linear] with adjacent half steps merged; if the link has amplifiers,
/// every span ends with flat gain exactly compensating the span loss plus
/// optional white circular-Gaussian amplifier noise.
inline DualPolWaveform propagate(const DualPolWaveform& input, const FiberLink& link,
                                 std::uint64_t noise_seed = 1,
                                 double occupied_bandwidth_ghz = 0.0) {
    link.validate();
    if (input.x.size() != input.y.size() || input.x.empty())
        throw std::invalid_argument("propagate: empty or mismatched waveform");
    if (occupied_bandwidth_ghz > 0.0 &&
        input.sample_rate_ghz < 1.2 * occupied_bandwidth_ghz)
        throw std::invalid_argument(
            "propagate: sample rate below 1.2x occupied bandwidth");

    DualPolWaveform w = input;
    if (link.n_spans == 0)
        return w;

    const std::size_t n = w.size();
    const auto& fft = detail::fft_plan(n);
    const double fs_hz = w.sample_rate_ghz * 1e9;
    const double beta2 = link.beta2_s2_per_m();
    const double alpha = link.alpha_per_m();
    const double gamma = link.gamma_per_w_m();
    const double span_m = link.span_length_km * 1e3;
    const double h_m = span_m / link.steps_per_span;

    // Precomputed half- and full-step linear transfer factors.
    std::vector<std::complex<double>> lin_half(n), lin_full(n);
    {
        const double gh = std::exp(-0.25 * alpha * h_m); // field, half step
        const double gf = std::exp(-0.50 * alpha * h_m); // field, full step
        for (std::size_t k = 0; k < n; ++k) {
            const double wk = 2.0 * M_PI * detail::fft_freq(k, n, fs_hz);
            const double ph = 0.5 * beta2 * wk * wk;
            lin_half[k] = std::polar(gh, ph * 0.5 * h_m);
            lin_full[k] = std::polar(gf, ph * h_m);
        }
    }

    const double g_span = link.span_power_gain();
    const double field_gain = std::sqrt(g_span);
    const double sigma2_ase_pol =
        link.amplifier && link.ase
            ? (g_span - 1.0) * phys::kPlanck * (link.center_frequency_thz * 1e12) *
                  db_to_lin(link.noise_figure_db) * fs_hz
            : 0.0;

    auto linear = [&](const std::vector<std::complex<double>>& factor) {
        fft.forward(w.x.data());
        fft.forward(w.y.data());
        for (std::size_t k = 0; k < n; ++k) {
            w.x[k] *= factor[k];
            w.y[k] *= factor[k];
        }
        fft.inverse(w.x.data());
        fft.inverse(w.y.data());
    };
    const double nl_coef = (8.0 / 9.0) * gamma * h_m;
    auto nonlinear = [&]() {
        for (std::size_t t = 0; t < n; ++t) {
            const double p = std::norm(w.x[t]) + std::norm(w.y[t]);
            const std::complex<double> rot = std::polar(1.0, nl_coef * p);
            w.x[t] *= rot;
            w.y[t] *= rot;
        }
    };

    for (int span = 0; span < link.n_spans; ++span) {
        linear(lin_half);
        for (int s = 0; s < link.steps_per_span - 1; ++s) {
            nonlinear();
            linear(lin_full);
        }
        nonlinear();
        linear(lin_half);

        if (link.amplifier) {
            for (std::size_t t = 0; t < n; ++t) {
                w.x[t] *= field_gain;
                w.y[t] *= field_gain;
            }
            if (sigma2_ase_pol > 0.0) {
                Rng rng(child_seed(noise_seed, static_cast<std::uint64_t>(span)));
                const double s = std::sqrt(0.5 * sigma2_ase_pol);
                for (std::size_t t = 0; t < n; ++t)
                    w.x[t] += std::complex<double>(s * rng.normal(), s * rng.normal());
                for (std::size_t t = 0; t < n; ++t)
                    w.y[t] += std::complex<double>(s * rng.normal(), s * rng.normal());
            }
        }
    }
    return w;
}

/// Add white circular-Gaussian noise calibrated so the post-matched-filter
/// symbol-domain SNR per complex dimension equals `snr_db`. Used for
/// back-to-back studies (quantizer penalties, receiver calibration).
inline void add_awgn_symbol_snr(DualPolWaveform& wave, double snr_db, std::uint64_t seed) {
    if (wave.x.empty() || wave.samples_per_symbol < 1)
        throw std::invalid_argument("add_awgn_symbol_snr: invalid waveform");
    const double snr = db_to_lin(snr_db);
    const std::size_t n = wave.size();
    Rng rng(seed);
    auto pol = [&](std::vector<std::complex<double>>& v) {
        double p = 0.0;
        for (const auto& s : v)
            p += std::norm(s);
        p /= static_cast<double>(n);
        // Matched filtering confines white noise to the symbol band, so the
        // per-sample variance maps to symbol-domain variance / sps.
        const double sigma2 = p * wave.samples_per_symbol / snr;
        const double s = std::sqrt(0.5 * sigma2);
        for (auto& smp : v)
            smp += std::complex<double>(s * rng.normal(), s * rng.normal());
    };
    pol(wave.x);
    pol(wave.y);
}

// ---------------------------------------------------------------------------
// Receiver
// ---------------------------------------------------------------------------

/// Ideal chromatic-dispersion compensation: conjugate of the accumulated
/// dispersion phase over the whole link (no amplitude change).
inline void compensate_dispersion(DualPolWaveform& wave, const FiberLink& link) {
    const std::size_t n = wave.size();
    if (n == 0)
        return;
    const auto& fft = detail::fft_plan(n);
    const double fs_hz = wave.sample_rate_ghz * 1e9;
    const double beta2 = link.beta2_s2_per_m();
    const double total_m = link.total_length_km() * 1e3;
    if (total_m == 0.0)
        return;
    std::vector<std::complex<double>> factor(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double wk = 2.0 * M_PI * detail::fft_freq(k, n, fs_hz);
        factor[k] = std::polar(1.0, -0.5 * beta2 * wk * wk * total_m);
    }
    fft.forward(wave.x.data());
    fft.forward(wave.y.data());
    for (std::size_t k = 0; k < n; ++k) {
        wave.x[k] *= factor[k];
        wave.y[k] *= factor[k];
    }
    fft.inverse(wave.x.data());
    fft.inverse(wave.y.data());
}

namespace detail {

/// Complex least-squares scalar a minimizing ||z - a*x||^2.
inline std::complex<double> ls_scalar(const std::vector<std::complex<double>>& x,
                                      const std::vector<std::complex<double>>& z) {
    std::complex<double> num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        num += std::conj(x[t]) * z[t];
        den += std::norm(x[t]);
    }
    if (den == 0.0 || num == std::complex<double>(0.0, 0.0))
        throw std::runtime_error("receive: degenerate equalizer fit");
    return num / den;
}

} // namespace detail

/// Matched-filter receiver for the center channel: de-shift, CDC, matched
/// RRC, best-phase downsampling, per-polarization complex least-squares
/// equalization, then effective SNR and a Monte-Carlo GMI on the residual
/// cloud. The transmitted data is regenerated from the TxConfig seed.
inline SimResult receive(const DualPolWaveform& input, const FiberLink& link,
                         const TxConfig& tx, const LabeledConstellation& c,
                         bool want_gmi = true) {
    tx.validate();
    c.validate();
    if (c.dims != 4)
        throw std::invalid_argument("receive: constellation must have 4 dimensions");
    const std::size_t ns = static_cast<std::size_t>(tx.n_symbols);
    const std::size_t sps = static_cast<std::size_t>(tx.samples_per_symbol);
    const std::size_t n = ns * sps;
    if (input.x.size() != n || input.y.size() != n)
        throw std::invalid_argument("receive: waveform length does not match tx config");

    DualPolWaveform w = input;
    const double fs_hz = w.sample_rate_ghz * 1e9;
    const double rs_hz = tx.symbol_rate_gbd * 1e9;
    const double df = fs_hz / static_cast<double>(n);
    const auto& fft = detail::fft_plan(n);

    // Regenerate the center channel's transmitted symbols.
    const int ch = tx.center_channel();
    Rng rng(child_seed(tx.seed, static_cast<std::uint64_t>(ch)));
    std::vector<std::uint32_t> idx(ns);
    for (std::size_t t = 0; t < ns; ++t)
        idx[t] = static_cast<std::uint32_t>(rng.bits(static_cast<unsigned>(c.bits)));
    std::vector<std::complex<double>> ref_x(ns), ref_y(ns);
    for (std::size_t t = 0; t < ns; ++t) {
        const double* p = c.point(idx[t]);
        ref_x[t] = {p[0], p[1]};
        ref_y[t] = {p[2], p[3]};
    }

    // Frequency domain: shift the channel under test back to baseband,
    // compensate dispersion, and apply the matched RRC filter.
    const double f_off_hz =
        (static_cast<double>(ch) - 0.5 * (tx.n_channels - 1)) * tx.channel_spacing_ghz * 1e9;
    const long long k_off = std::llround(f_off_hz / df);
    const double beta2 = link.beta2_s2_per_m();
    const double total_m = link.total_length_km() * 1e3;

    fft.forward(w.x.data());
    fft.forward(w.y.data());
    if (k_off != 0) {
        const long long nn = static_cast<long long>(n);
        std::vector<std::complex<double>> tmp(n);
        auto shift_back = [&](std::vector<std::complex<double>>& v) {
            for (long long k = 0; k < nn; ++k)
                tmp[static_cast<std::size_t>(k)] =
                    v[static_cast<std::size_t>(((k + k_off) % nn + nn) % nn)];
            v.swap(tmp);
        };
        shift_back(w.x);
        shift_back(w.y);
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double f = detail::fft_freq(k, n, fs_hz);
        const double wk = 2.0 * M_PI * f;
        const double cdc_phase = -0.5 * beta2 * wk * wk * total_m;
        const double mf = detail::rrc_amplitude(f, rs_hz, tx.rolloff);
        const std::complex<double> g = std::polar(mf, cdc_phase);
        w.x[k] *= g;
        w.y[k] *= g;
    }
    fft.inverse(w.x.data());
    fft.inverse(w.y.data());

    // Downsample at the sampling phase best correlated with the known data.
    std::size_t best_phase = 0;
    double best_score = -1.0;
    for (std::size_t ph = 0; ph < sps; ++ph) {
        std::complex<double> cx = 0.0, cy = 0.0;
        for (std::size_t t = 0; t < ns; ++t) {
            cx += std::conj(ref_x[t]) * w.x[t * sps + ph];
            cy += std::conj(ref_y[t]) * w.y[t * sps + ph];
        }
        const double score = std::abs(cx) + std::abs(cy);
        if (score > best_score) {
            best_score = score;
            best_phase = ph;
        }
    }
    std::vector<std::complex<double>> zx(ns), zy(ns);
    for (std::size_t t = 0; t < ns; ++t) {
        zx[t] = w.x[t * sps + best_phase];
        zy[t] = w.y[t * sps + best_phase];
    }

    // One complex scalar per polarization (mean gain and phase).
    const std::complex<double> ax = detail::ls_scalar(ref_x, zx);
    const std::complex<double> ay = detail::ls_scalar(ref_y, zy);
    for (std::size_t t = 0; t < ns; ++t) {
        zx[t] /= ax;
        zy[t] /= ay;
    }

    SimResult res;
    res.tx_indices = idx;
    res.received.resize(ns * 4);
    double sig = 0.0, err = 0.0;
    for (std::size_t t = 0; t < ns; ++t) {
        res.received[4 * t + 0] = zx[t].real();
        res.received[4 * t + 1] = zx[t].imag();
        res.received[4 * t + 2] = zy[t].real();
        res.received[4 * t + 3] = zy[t].imag();
        sig += std::norm(ref_x[t]) + std::norm(ref_y[t]);
        err += std::norm(zx[t] - ref_x[t]) + std::norm(zy[t] - ref_y[t]);
    }
    if (err <= 0.0)
        err = sig * 1e-300; // noiseless loopback: report a huge, finite SNR
    res.effective_snr_db = 10.0 * std::log10(sig / err);
    res.noise_sigma2 = err / static_cast<double>(ns) / (c.dims / 2.0);
    if (want_gmi)
        res.gmi = gmi_from_cloud(c, res.tx_indices, res.received, res.noise_sigma2);
    return res;
}

/// modulate -> propagate -> receive in one call.
inline SimResult simulate(const LabeledConstellation& c, const FiberLink& link,
                          const TxConfig& tx, std::uint64_t noise_seed = 1,
                          bool want_gmi = true) {
    const ModulatedSignal sig = modulate(c, tx);
    const DualPolWaveform rx =
        propagate(sig.wave, link, noise_seed, sig.occupied_bandwidth_ghz);
    return receive(rx, link, tx, c, want_gmi);
}

// ---------------------------------------------------------------------------
// Config file mapping (`key = value`, units in key names)
// ---------------------------------------------------------------------------

inline FiberLink link_from_config(KeyValueConfig& cfg) {
    FiberLink link;
    link.span_length_km = cfg.get_double("span_length_km", link.span_length_km);
    link.n_spans = static_cast<int>(cfg.get_int("n_spans", link.n_spans));
    link.alpha_db_per_km = cfg.get_double("alpha_db_per_km", link.alpha_db_per_km);
    link.dispersion_ps_nm_km = cfg.get_double("dispersion_ps_nm_km", link.dispersion_ps_nm_km);
    link.gamma_per_w_km = cfg.get_double("gamma_per_w_km", link.gamma_per_w_km);
    link.steps_per_span = static_cast<int>(cfg.get_int("steps_per_span", link.steps_per_span));
    link.amplifier = cfg.get_bool("amplifier", link.amplifier);
    link.noise_figure_db = cfg.get_double("noise_figure_db", link.noise_figure_db);
    link.ase = cfg.get_bool("ase", link.ase);
    link.center_frequency_thz = cfg.get_double("center_frequency_thz", link.center_frequency_thz);
    link.validate();
    return link;
}

inline TxConfig tx_from_config(KeyValueConfig& cfg) {
    TxConfig tx;
    tx.symbol_rate_gbd = cfg.get_double("symbol_rate_gbd", tx.symbol_rate_gbd);
    tx.rolloff = cfg.get_double("rolloff", tx.rolloff);
    tx.samples_per_symbol =
        static_cast<int>(cfg.get_int("samples_per_symbol", tx.samples_per_symbol));
    tx.n_channels = static_cast<int>(cfg.get_int("n_channels", tx.n_channels));
    tx.channel_spacing_ghz = cfg.get_double("channel_spacing_ghz", tx.channel_spacing_ghz);
    tx.launch_power_dbm = cfg.get_double("launch_power_dbm", tx.launch_power_dbm);
    tx.dac_bits = static_cast<int>(cfg.get_int("dac_bits", tx.dac_bits));
    tx.n_symbols = cfg.get_int("n_symbols", tx.n_symbols);
    tx.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(tx.seed)));
    tx.validate();
    return tx;
}

} // namespace gcs

#endif
