#ifndef GCS_NLI_HPP
#define GCS_NLI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gcs/airs.hpp"
#include "gcs/common.hpp"
#include "gcs/constellation.hpp"
#include "gcs/fibersim.hpp"
#include "gcs/io.hpp"

namespace gcs {

// ---------------------------------------------------------------------------
// Effective-SNR algebra for links limited by amplifier noise plus a cubic
// nonlinear-interference term:  Gamma(P) = P / (sigma2_ase + eta * P^3)
// ---------------------------------------------------------------------------

struct NliState {
    double sigma2_ase = 1.0;   // total dual-pol amplifier noise power, W
    double eta_x = 0.0;        // NLI coefficient, one polarization, 1/W^2
    double eta_y = 0.0;        // NLI coefficient, other polarization, 1/W^2
    double launch_power_w = 1e-3;

    double eta_total() const { return eta_x + eta_y; }

    void validate() const {
        if (!(sigma2_ase > 0.0))
            throw std::invalid_argument("nli: sigma2_ase must be positive");
        if (eta_total() < 0.0)
            throw std::invalid_argument("nli: total eta must be >= 0");
        if (!(launch_power_w > 0.0))
            throw std::invalid_argument("nli: launch power must be positive");
    }
};

/// Post-DSP effective SNR (linear).
inline double effective_snr(const NliState& state) {
    state.validate();
    const double p = state.launch_power_w;
    return p / (state.sigma2_ase + state.eta_total() * p * p * p);
}

/// Launch power maximizing the effective SNR.
inline double optimal_launch_power(double sigma2_ase, double eta_total) {
    if (!(sigma2_ase > 0.0))
        throw std::invalid_argument("nli: sigma2_ase must be positive");
    if (!(eta_total > 0.0))
        throw std::invalid_argument(
            "nli: optimal launch power is unbounded when eta is zero");
    return std::cbrt(sigma2_ase / (2.0 * eta_total));
}

/// Effective SNR at the optimal launch power (closed form).
inline double gamma_opt(double sigma2_ase, double eta_total) {
    if (!(sigma2_ase > 0.0))
        throw std::invalid_argument("nli: sigma2_ase must be positive");
    if (!(eta_total > 0.0))
        throw std::invalid_argument("nli: gamma_opt requires eta > 0");
    return (2.0 / (3.0 * std::cbrt(2.0))) /
           (std::pow(sigma2_ase, 2.0 / 3.0) * std::cbrt(eta_total));
}

// ---------------------------------------------------------------------------
// Empirical eta from simulation sweeps
// ---------------------------------------------------------------------------

struct EtaFit {
    double eta = 0.0;   // total (both polarizations), 1/W^2
    double r2 = 0.0;    // goodness of the log-domain cubic fit
    bool floored = false; // non-positive variance samples were discarded
};

/// Single-parameter least squares of sigma2_nli = eta * P^3 in the log
/// domain. Points with non-positive measured variance are dropped with the
/// `floored` flag set; if too few usable points remain the fit reports
/// eta = 0 (flagged) rather than inventing a slope.
inline EtaFit fit_eta(const std::vector<std::pair<double, double>>& sweep) {
    if (sweep.size() < 3)
        throw std::invalid_argument("fit_eta: need at least 3 sweep points");
    double pmin = 1e300, pmax = 0.0;
    for (const auto& [p, s2] : sweep) {
        if (!(p > 0.0))
            throw std::invalid_argument("fit_eta: launch powers must be positive");
        pmin = std::min(pmin, p);
        pmax = std::max(pmax, p);
    }
    if (pmax / pmin < db_to_lin(6.0) * (1.0 - 1e-12))
        throw std::invalid_argument("fit_eta: sweep must span at least 6 dB of power");

    EtaFit fit;
    std::vector<double> lp, ls;
    for (const auto& [p, s2] : sweep) {
        if (s2 > 0.0) {
            lp.push_back(std::log(p));
            ls.push_back(std::log(s2));
        } else {
            fit.floored = true;
        }
    }
    if (lp.size() < 3) {
        fit.floored = true;
        return fit; // eta = 0: no usable nonlinear signal in the sweep
    }

    double acc = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i)
        acc += ls[i] - 3.0 * lp[i];
    const double log_eta = acc / static_cast<double>(lp.size());
    fit.eta = std::exp(log_eta);

    double mean_y = 0.0;
    for (double y : ls)
        mean_y += y;
    mean_y /= static_cast<double>(ls.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
        const double pred = log_eta + 3.0 * lp[i];
        ss_res += (ls[i] - pred) * (ls[i] - pred);
        ss_tot += (ls[i] - mean_y) * (ls[i] - mean_y);
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return fit;
}

/// One noise-free-sweep measurement: simulate with amplifier noise disabled
/// and attribute the whole residual to nonlinear interference.
/// Returns (launch power W, total NLI variance W in the symbol band).
inline std::pair<double, double> measure_nli_point(const LabeledConstellation& c,
                                                   FiberLink link, TxConfig tx) {
    link.ase = false;
    const ModulatedSignal sig = modulate(c, tx);
    const DualPolWaveform rx = propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz);
    const SimResult res = receive(rx, link, tx, c, /*want_gmi=*/false);
    const double p_w = dbm_to_watt(tx.launch_power_dbm);
    return {p_w, p_w / db_to_lin(res.effective_snr_db)};
}

/// NLI variance sweep over launch powers (dBm), for fit_eta.
inline std::vector<std::pair<double, double>>
nli_power_sweep(const LabeledConstellation& c, const FiberLink& link, const TxConfig& tx,
                const std::vector<double>& powers_dbm) {
    std::vector<std::pair<double, double>> out;
    out.reserve(powers_dbm.size());
    for (double p : powers_dbm) {
        TxConfig t = tx;
        t.launch_power_dbm = p;
        out.push_back(measure_nli_point(c, link, t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Moment-based eta surrogate for in-loop optimization
// ---------------------------------------------------------------------------

/// Canonical fingerprint of the physical link and transmitter parameters a
/// surrogate was calibrated for. Launch power, symbol count, seed and DAC
/// setting are measurement knobs, not link identity, and are excluded.
inline std::uint64_t link_tx_fingerprint(const FiberLink& link, const TxConfig& tx) {
    std::ostringstream os;
    os.precision(17);
    os << link.span_length_km << '|' << link.n_spans << '|' << link.alpha_db_per_km
       << '|' << link.dispersion_ps_nm_km << '|' << link.gamma_per_w_km << '|'
       << link.steps_per_span << '|' << link.amplifier << '|' << link.noise_figure_db
       << '|' << link.center_frequency_thz << '|' << tx.symbol_rate_gbd << '|'
       << tx.rolloff << '|' << tx.samples_per_symbol << '|' << tx.n_channels << '|'
       << tx.channel_spacing_ghz;
    return fnv1a(os.str());
}

/// eta_hat(c) = c0 + c1*(Phi4 - 1) + c2*(mean Phi2 - 1): an affine map from
/// excess-kurtosis shaping moments to the total NLI coefficient.
struct EtaSurrogate {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    std::uint64_t fingerprint = 0;
    int n_formats = 0;
    int design_rank = 3;       // 2 = regressors collinear over the fit set
    double fit_r2 = 0.0;
    double max_rel_residual = 0.0;
    double power_min_dbm = 0.0;
    double power_max_dbm = 0.0;

    static double mean_phi2(const ShapingMetrics& m) {
        double acc = 0.0;
        for (double v : m.phi2)
            acc += v;
        return m.phi2.empty() ? 1.0 : acc / static_cast<double>(m.phi2.size());
    }

    /// Predicted total eta; clamped away from zero so the downstream
    /// closed-form launch-power optimum stays defined even for iterates far
    /// outside the calibration cloud.
    double eta_hat(const LabeledConstellation& c) const {
        const ShapingMetrics m = metrics(c);
        const double raw = c0 + c1 * (m.phi4 - 1.0) + c2 * (mean_phi2(m) - 1.0);
        return std::max(raw, 1e-6 * c0);
    }

    void save(const std::string& path) const {
        std::ostringstream os;
        os.precision(17);
        os << "c0 = " << c0 << "\nc1 = " << c1 << "\nc2 = " << c2
           << "\nlink_fingerprint = " << fingerprint << "\nn_formats = " << n_formats
           << "\ndesign_rank = " << design_rank << "\nfit_r2 = " << fit_r2
           << "\nmax_rel_residual = " << max_rel_residual
           << "\npower_min_dbm = " << power_min_dbm
           << "\npower_max_dbm = " << power_max_dbm << '\n';
        write_text_atomic(path, os.str());
    }

    static EtaSurrogate load(const std::string& path) {
        KeyValueConfig cfg = KeyValueConfig::load(path);
        EtaSurrogate s;
        s.c0 = cfg.get_double("c0");
        s.c1 = cfg.get_double("c1");
        s.c2 = cfg.get_double("c2");
        s.fingerprint = std::stoull(cfg.get_string("link_fingerprint"));
        s.n_formats = static_cast<int>(cfg.get_int("n_formats"));
        s.design_rank = static_cast<int>(cfg.get_int("design_rank"));
        s.fit_r2 = cfg.get_double("fit_r2");
        s.max_rel_residual = cfg.get_double("max_rel_residual");
        s.power_min_dbm = cfg.get_double("power_min_dbm");
        s.power_max_dbm = cfg.get_double("power_max_dbm");
        cfg.ensure_all_used();
        if (!(s.c0 > 0.0))
            throw std::invalid_argument("surrogate: c0 must be positive");
        return s;
    }
};

/// A surrogate is only valid for the exact link/transmitter it was fitted
/// on; using it elsewhere is an error, not a warning.
inline void require_fresh(const EtaSurrogate& s, const FiberLink& link,
                          const TxConfig& tx) {
    if (s.fingerprint != link_tx_fingerprint(link, tx))
        throw std::runtime_error(
            "surrogate: calibration is stale for this link/transmitter; re-run "
            "the calibration");
}

/// Fit the affine moment surrogate over noise-free-sweep eta measurements of
/// several formats. Requires >= 4 formats with non-degenerate moment spread.
inline EtaSurrogate calibrate_surrogate(const std::vector<LabeledConstellation>& formats,
                                        const FiberLink& link, const TxConfig& tx,
                                        const std::vector<double>& powers_dbm) {
    if (formats.size() < 4)
        throw std::invalid_argument("calibrate_surrogate: need at least 4 formats");
    if (powers_dbm.size() < 3)
        throw std::invalid_argument("calibrate_surrogate: need at least 3 powers");

    const int nf = static_cast<int>(formats.size());
    Eigen::MatrixXd a(nf, 3);
    Eigen::VectorXd b(nf);
    for (int i = 0; i < nf; ++i) {
        const EtaFit fit = fit_eta(nli_power_sweep(formats[i], link, tx, powers_dbm));
        const ShapingMetrics m = metrics(formats[i]);
        a(i, 0) = 1.0;
        a(i, 1) = m.phi4 - 1.0;
        a(i, 2) = EtaSurrogate::mean_phi2(m) - 1.0;
        b(i) = fit.eta;
    }

    // Product formats and their set-partitioned subsets satisfy
    // Phi4 - 1 = (mean Phi2 - 1) / 2 exactly, so the two kurtosis regressors
    // are often collinear over standard calibration sets. A minimum-norm
    // least-squares solve keeps predictions on that line well defined (and
    // exact), while sets with no moment spread at all are rejected. The rank
    // threshold must be in force before the decomposition is computed: it
    // controls how the factorization is truncated, not just the reported rank.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-8);
    cod.compute(a);
    const int rank = static_cast<int>(cod.rank());
    if (rank < 2)
        throw std::invalid_argument(
            "calibrate_surrogate: formats have degenerate (Phi4, Phi2) spread");
    const Eigen::Vector3d coef = cod.solve(b);

    EtaSurrogate s;
    s.c0 = coef(0);
    s.c1 = coef(1);
    s.c2 = coef(2);
    s.design_rank = rank;
    s.fingerprint = link_tx_fingerprint(link, tx);
    s.n_formats = nf;
    const Eigen::VectorXd pred = a * coef;
    double ss_res = 0.0, ss_tot = 0.0;
    const double mean_b = b.mean();
    for (int i = 0; i < nf; ++i) {
        ss_res += (b(i) - pred(i)) * (b(i) - pred(i));
        ss_tot += (b(i) - mean_b) * (b(i) - mean_b);
        if (b(i) > 0.0)
            s.max_rel_residual =
                std::max(s.max_rel_residual, std::abs(pred(i) - b(i)) / b(i));
    }
    s.fit_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    auto [mn, mx] = std::minmax_element(powers_dbm.begin(), powers_dbm.end());
    s.power_min_dbm = *mn;
    s.power_max_dbm = *mx;
    if (!(s.c0 > 0.0))
        throw std::runtime_error(
            "calibrate_surrogate: fitted c0 <= 0 (no Gaussian-independent NLI "
            "floor); calibration data is unusable");
    return s;
}

/// Physical amplifier-noise power for the nli objective: total over both
/// polarizations in the symbol band, regardless of whether noise injection
/// is currently enabled for simulation runs.
inline double ase_variance_w(const FiberLink& link, const TxConfig& tx) {
    if (!link.amplifier || link.n_spans < 1)
        throw std::invalid_argument(
            "nli objective: link must have at least one amplified span");
    FiberLink l = link;
    l.ase = true;
    return l.ase_power_w(tx.symbol_rate_gbd * 1e9);
}

// ---------------------------------------------------------------------------
// NLI-aware GMI objective
// ---------------------------------------------------------------------------

struct NliObjectiveValue {
    double gmi = 0.0;        // bit per 4-D symbol at the optimal launch power
    double gamma_opt = 0.0;  // linear effective SNR at that power
    double eta_hat = 0.0;    // surrogate NLI coefficient
    double sigma2_z = 0.0;   // Gaussian law variance used for the GMI
};

/// GMI evaluated at the closed-form optimal launch power implied by the
/// surrogate: eta_hat(c) -> Gamma_opt -> Gaussian law -> GMI. No explicit
/// launch-power parameter remains.
inline NliObjectiveValue nli_objective(const LabeledConstellation& c, double sigma2_ase,
                                       const EtaSurrogate& s, int j = 10,
                                       unsigned threads = 1) {
    NliObjectiveValue out;
    out.eta_hat = s.eta_hat(c);
    out.gamma_opt = gamma_opt(sigma2_ase, out.eta_hat);
    out.sigma2_z = c.mean_energy() / ((c.dims / 2.0) * out.gamma_opt);
    out.gmi = gmi_gh(c, GaussianLaw{out.sigma2_z}, j, threads).value;
    return out;
}

/// eta_hat plus its gradient with respect to every coordinate (analytic
/// moment derivatives), for chaining through the optimizer.
struct EtaHatGradient {
    double eta_hat = 0.0;
    bool clamped = false;
    std::vector<double> grad; // M x N, row-major
};

inline EtaHatGradient eta_hat_gradient(const EtaSurrogate& s,
                                       const LabeledConstellation& c) {
    const int m = c.order();
    const int n = c.dims;
    const int pairs = n / 2;
    EtaHatGradient out;
    out.grad.assign(static_cast<std::size_t>(m) * n, 0.0);

    // 4-D energies and per-pair energies.
    std::vector<double> e4(m);
    std::vector<double> ep(static_cast<std::size_t>(m) * pairs);
    double sum_e4 = 0.0, sum_e4sq = 0.0;
    std::vector<double> sum_p(pairs, 0.0), sum_psq(pairs, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* x = c.point(i);
        double e = 0.0;
        for (int d = 0; d < n; ++d)
            e += x[d] * x[d];
        e4[i] = e;
        sum_e4 += e;
        sum_e4sq += e * e;
        for (int j2 = 0; j2 < pairs; ++j2) {
            const double p = x[2 * j2] * x[2 * j2] + x[2 * j2 + 1] * x[2 * j2 + 1];
            ep[static_cast<std::size_t>(i) * pairs + j2] = p;
            sum_p[j2] += p;
            sum_psq[j2] += p * p;
        }
    }

    const double phi4 = static_cast<double>(m) * sum_e4sq / (sum_e4 * sum_e4);
    double mean_phi2 = 0.0;
    for (int j2 = 0; j2 < pairs; ++j2)
        mean_phi2 += static_cast<double>(m) * sum_psq[j2] / (sum_p[j2] * sum_p[j2]);
    mean_phi2 /= pairs;

    const double raw = s.c0 + s.c1 * (phi4 - 1.0) + s.c2 * (mean_phi2 - 1.0);
    const double floor = 1e-6 * s.c0;
    if (raw <= floor) {
        out.eta_hat = floor;
        out.clamped = true;
        return out; // gradient is zero on the clamp
    }
    out.eta_hat = raw;

    // dPhi4/dx_{i,d} = 4M x_{i,d} (e4_i - sum_e4sq/sum_e4) / sum_e4^2
    // dPhi2_j/dx    = 4M x (p_ij - sum_psq_j/sum_p_j) / sum_p_j^2
    for (int i = 0; i < m; ++i) {
        const double* x = c.point(i);
        const double f4 = 4.0 * m * (e4[i] - sum_e4sq / sum_e4) / (sum_e4 * sum_e4);
        for (int d = 0; d < n; ++d) {
            const int j2 = d / 2;
            const double p = ep[static_cast<std::size_t>(i) * pairs + j2];
            const double f2 =
                4.0 * m * (p - sum_psq[j2] / sum_p[j2]) / (sum_p[j2] * sum_p[j2]);
            out.grad[static_cast<std::size_t>(i) * n + d] =
                x[d] * (s.c1 * f4 + s.c2 * f2 / pairs);
        }
    }
    return out;
}

} // namespace gcs

#endif
