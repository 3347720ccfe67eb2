#pragma once

// Gradient-based geometric shaping: maximize GMI over constellation
// coordinates under a mean-power constraint, optionally restricted to
// orthant-symmetric families, against either a fixed-SNR Gaussian law or the
// nonlinear-interference-aware objective that evaluates every candidate at
// its own optimal launch power.
//
// Labels are fixed by the initializer and never permuted during descent; the
// search is over coordinates only. Updates use adaptive-moment gradient
// ascent (first/second moment decay 0.9/0.999, eps 1e-8) with the iterate
// renormalized to the power target after every step. Restarts perturb the
// initializer and run independently; the best iterate ever evaluated wins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gcs/airs.hpp"
#include "gcs/common.hpp"
#include "gcs/constellation.hpp"
#include "gcs/io.hpp"
#include "gcs/nli.hpp"
#include "gcs/quadrature.hpp"

namespace gcs {

enum class ShapingObjective { awgn_gmi, nli_gmi };
enum class ShapingConstraint { none, orthant_symmetry };
enum class GradientMethod { analytic, central_difference };

/// What to maximize, over which family, at which operating point.
struct ShapingProblem {
    ShapingObjective objective = ShapingObjective::awgn_gmi;
    ShapingConstraint constraint = ShapingConstraint::none;

    // awgn_gmi: fixed channel SNR (per complex dimension).
    double snr_db = 10.0;

    // nli_gmi: amplified link + transmitter band (for the amplifier noise
    // power) and a calibrated moment surrogate for the NLI coefficient.
    FiberLink link;
    TxConfig tx;
    EtaSurrogate surrogate;

    double power = 1.0;  // target E[||X||^2]
    int dims = 2;
    int bits = 2;

    void validate() const {
        if (!(power > 0.0))
            throw std::invalid_argument("shaping problem: power must be positive");
        if (dims < 2 || dims % 2 != 0 || dims > 16)
            throw std::invalid_argument(
                "shaping problem: dims must be a small even count of real dimensions");
        if (bits < 1 || bits > 20)
            throw std::invalid_argument("shaping problem: bits out of range");
        if (objective == ShapingObjective::nli_gmi) {
            if (!(surrogate.c0 > 0.0))
                throw std::invalid_argument(
                    "shaping problem: nli objective needs a calibrated surrogate");
            link.validate();
            tx.validate();
            ase_variance_w(link, tx);  // throws unless the link is amplified
        }
    }

    double sigma2_ase() const { return ase_variance_w(link, tx); }
};

struct OptimizerConfig {
    double learning_rate = 0.01;
    int max_iterations = 2000;
    int restarts = 5;
    std::uint64_t seed = 1;
    double tolerance_bit = 1e-4;  // stop when the best objective improves
    int tolerance_window = 50;    // less than this over this many iterations
    GradientMethod gradient = GradientMethod::analytic;
    double fd_step = 1e-4;  // central-difference step on free coordinates
    int quad_j = 10;        // quadrature order used during the descent
    unsigned threads = 1;   // restarts run independently in parallel
    double jitter = 0.05;   // restart perturbation std, relative to coord RMS

    void validate() const {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("optimizer: learning rate must be positive");
        if (max_iterations < 1)
            throw std::invalid_argument("optimizer: need at least one iteration");
        if (restarts < 1)
            throw std::invalid_argument("optimizer: need at least one restart");
        if (!(tolerance_bit >= 0.0))
            throw std::invalid_argument("optimizer: tolerance must be non-negative");
        if (tolerance_window < 1)
            throw std::invalid_argument("optimizer: tolerance window must be positive");
        if (gradient == GradientMethod::central_difference && !(fd_step > 0.0))
            throw std::invalid_argument("optimizer: finite-difference step must be positive");
        if (quad_j < 2 || quad_j > 64)
            throw std::invalid_argument("optimizer: quadrature order out of range");
        if (!(jitter >= 0.0))
            throw std::invalid_argument("optimizer: jitter must be non-negative");
    }
};

/// One evaluated iterate. effective_snr_db and eta_hat are NaN for the
/// fixed-SNR objective, where they are not defined.
struct TracePoint {
    int restart = 0;
    int iteration = 0;
    double objective = 0.0;
    double best_objective = 0.0;  // best over this restart so far
    double effective_snr_db = std::numeric_limits<double>::quiet_NaN();
    double papr = 0.0;
    double phi2 = 0.0;  // mean over complex dimensions
    double phi4 = 0.0;
    double psi = 0.0;
    double eta_hat = std::numeric_limits<double>::quiet_NaN();
};

struct OptimizationTrace {
    std::vector<TracePoint> points;  // all restarts, (restart, iteration) order
    std::vector<std::string> notes;  // aborted restarts and other incidents
    int best_restart = -1;
    double initial_objective = 0.0;  // restart 0, iteration 0
    double best_objective = 0.0;

    std::vector<TracePoint> restart_points(int r) const {
        std::vector<TracePoint> out;
        for (const auto& p : points)
            if (p.restart == r)
                out.push_back(p);
        return out;
    }

    /// Per-iteration table of the winning restart for plotting.
    std::string csv() const {
        CsvTable t({"iteration", "objective", "effective_snr_db", "papr", "phi2",
                    "phi4", "psi", "eta_hat"});
        for (const auto& p : points)
            if (p.restart == best_restart)
                t.add_row({static_cast<double>(p.iteration), p.objective,
                           p.effective_snr_db, p.papr, p.phi2, p.phi4, p.psi,
                           p.eta_hat});
        return t.str();
    }
};

struct ShapingResult {
    LabeledConstellation constellation;
    OptimizationTrace trace;
};

/// Objective value plus the operating-point diagnostics that the trace records.
struct ObjectiveValue {
    double objective = 0.0;
    double effective_snr_db = std::numeric_limits<double>::quiet_NaN();
    double eta_hat = std::numeric_limits<double>::quiet_NaN();
    double sigma2_z = 0.0;
};

namespace detail {

/// The free parameters of the search: all coordinates, or the first-orthant
/// generator coordinates when the family is constrained to orthant symmetry.
/// `u` always mirrors the most recently built (feasible) constellation so
/// that constraint projections can be taken at the evaluation point.
struct FreeParams {
    bool orthant = false;
    int dims = 0;
    int full_bits = 0;
    std::vector<double> u;
    std::vector<std::uint32_t> labels;  // full labels, or generator labels

    int count() const { return static_cast<int>(labels.size()); }
};

inline FreeParams free_params_from(const LabeledConstellation& c,
                                   ShapingConstraint constraint) {
    FreeParams p;
    p.dims = c.dims;
    p.full_bits = c.bits;
    if (constraint == ShapingConstraint::orthant_symmetry) {
        if (c.os_sign_bits != c.dims)
            throw std::invalid_argument(
                "optimize: orthant-symmetry constraint requires an orthant-expanded "
                "initializer (sign bits in the last label positions)");
        const FirstOrthantSet s1 = first_orthant(c);
        p.orthant = true;
        p.u = s1.pts;
        p.labels = s1.labels;
    } else {
        p.u = c.pts;
        p.labels = c.labels;
    }
    return p;
}

/// Map free parameters to a feasible constellation: clamp (orthant mode),
/// expand, renormalize to the power target, and absorb the normalization
/// scale back into `u` so the parameters always sit on the feasible manifold.
inline LabeledConstellation rebuild(FreeParams& p, double power) {
    LabeledConstellation c;
    if (p.orthant) {
        FirstOrthantSet s1;
        s1.dims = p.dims;
        s1.bits = p.full_bits - p.dims;
        for (double& v : p.u)
            v = std::max(v, 1e-6);  // keep the generator strictly positive
        s1.pts = p.u;
        s1.labels = p.labels;
        c = expand_orthant(s1);
    } else {
        c.dims = p.dims;
        c.bits = p.full_bits;
        c.pts = p.u;
        c.labels = p.labels;
    }
    c = normalize(std::move(c), power);
    if (p.orthant)
        p.u = first_orthant(c).pts;
    else
        p.u = c.pts;
    return c;
}

inline GaussianLaw law_for(const ShapingProblem& pb, const LabeledConstellation& c,
                           ObjectiveValue& diag) {
    GaussianLaw law;
    if (pb.objective == ShapingObjective::awgn_gmi) {
        law.sigma2_z = pb.power / ((c.dims / 2.0) * db_to_lin(pb.snr_db));
    } else {
        const double s2a = pb.sigma2_ase();
        const double eta = pb.surrogate.eta_hat(c);
        const double gopt = gamma_opt(s2a, eta);
        law.sigma2_z = pb.power / ((c.dims / 2.0) * gopt);
        diag.effective_snr_db = lin_to_db(gopt);
        diag.eta_hat = eta;
    }
    diag.sigma2_z = law.sigma2_z;
    return law;
}

inline ObjectiveValue eval_value(const ShapingProblem& pb, const LabeledConstellation& c,
                                 const QuadratureRule& rule) {
    ObjectiveValue out;
    const GaussianLaw law = law_for(pb, c, out);
    out.objective = gmi_gh(c, law, rule).value;
    return out;
}

struct ObjectiveGrad {
    ObjectiveValue value;
    std::vector<double> grad;  // ambient, M x N row-major
};

/// Fused objective + ambient coordinate gradient. For the NLI objective the
/// noise law itself depends on the coordinates through the surrogate, so the
/// chain d(GMI)/dx = dGMI/dx|_sigma + dGMI/dsigma2 * dsigma2/deta * deta/dx
/// is added; dsigma2/deta = sigma2 / (3 eta) from the cube-root power law.
inline ObjectiveGrad eval_grad(const ShapingProblem& pb, const LabeledConstellation& c,
                               const QuadratureRule& rule) {
    ObjectiveGrad out;
    const GaussianLaw law = law_for(pb, c, out.value);
    const bool nli = pb.objective == ShapingObjective::nli_gmi;
    GhGradient g = gmi_gh_gradient(c, law, rule, /*want_sigma_grad=*/nli);
    out.value.objective = g.value;
    out.grad = std::move(g.grad);
    if (nli) {
        const EtaHatGradient eg = eta_hat_gradient(pb.surrogate, c);
        if (!eg.clamped && eg.eta_hat > 0.0) {
            const double chain =
                g.dvalue_dsigma2 * out.value.sigma2_z / (3.0 * eg.eta_hat);
            for (std::size_t i = 0; i < out.grad.size(); ++i)
                out.grad[i] += chain * eg.grad[i];
        }
    }
    return out;
}

/// Fold an ambient gradient onto the free parameters (transpose of the
/// orthant expansion, which maps generator k to points k*2^N .. k*2^N+2^N-1
/// with the sign of dimension d given by label bit N-1-d of the pattern).
inline void fold_gradient(const FreeParams& p, const std::vector<double>& ambient,
                          std::vector<double>& out) {
    if (!p.orthant) {
        out = ambient;
        return;
    }
    const int n = p.dims;
    const int pats = 1 << n;
    out.assign(p.u.size(), 0.0);
    for (int k = 0; k < p.count(); ++k) {
        for (int pat = 0; pat < pats; ++pat) {
            const double* src =
                &ambient[(static_cast<std::size_t>(k) * pats + pat) * n];
            double* dst = &out[static_cast<std::size_t>(k) * n];
            for (int d = 0; d < n; ++d) {
                const bool neg = (pat >> (n - 1 - d)) & 1;
                dst[d] += neg ? -src[d] : src[d];
            }
        }
    }
}

/// Remove the component along the scaling direction: renormalization makes
/// the objective constant along u -> a*u, so feasible ascent directions are
/// orthogonal to u.
inline void project_gradient(const std::vector<double>& u, std::vector<double>& g) {
    double gu = 0.0, uu = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        gu += g[i] * u[i];
        uu += u[i] * u[i];
    }
    if (!(uu > 0.0))
        throw std::runtime_error("optimize: degenerate zero-power parameters");
    const double a = gu / uu;
    for (std::size_t i = 0; i < u.size(); ++i)
        g[i] -= a * u[i];
}

/// Central differences on the free coordinates, differentiating through the
/// clamp/expand/renormalize map itself (no separate projection needed).
inline std::vector<double> fd_gradient(const ShapingProblem& pb, const FreeParams& p,
                                       const QuadratureRule& rule, double h) {
    std::vector<double> grad(p.u.size());
    FreeParams pp = p;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
        pp.u = p.u;
        pp.u[i] = p.u[i] + h;
        const double fp = eval_value(pb, rebuild(pp, pb.power), rule).objective;
        pp.u = p.u;
        pp.u[i] = p.u[i] - h;
        const double fm = eval_value(pb, rebuild(pp, pb.power), rule).objective;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace detail

/// Evaluate the problem objective on a constellation (no optimization).
inline ObjectiveValue evaluate_objective(const ShapingProblem& problem,
                                         const LabeledConstellation& c,
                                         int quad_j = 10) {
    problem.validate();
    c.validate();
    return detail::eval_value(problem, c, gauss_hermite(quad_j));
}

/// Partial derivatives of the objective with respect to the free coordinates
/// (all coordinates, or the first-orthant generator under the
/// orthant-symmetry constraint), projected onto the power-feasible manifold.
inline std::vector<double> gradient(const ShapingProblem& problem,
                                    const LabeledConstellation& c,
                                    GradientMethod method = GradientMethod::analytic,
                                    double fd_step = 1e-4, int quad_j = 10) {
    problem.validate();
    c.validate();
    if (std::fabs(c.mean_energy() - problem.power) > 1e-6 * problem.power)
        throw std::invalid_argument(
            "gradient: constellation does not meet the power constraint");
    detail::FreeParams p = detail::free_params_from(c, problem.constraint);
    const QuadratureRule rule = gauss_hermite(quad_j);
    std::vector<double> g;
    if (method == GradientMethod::central_difference) {
        if (!(fd_step > 0.0))
            throw std::invalid_argument("gradient: finite-difference step must be positive");
        g = detail::fd_gradient(problem, p, rule, fd_step);
    } else {
        detail::ObjectiveGrad eg = detail::eval_grad(problem, c, rule);
        if (!std::isfinite(eg.value.objective))
            throw std::runtime_error("gradient: non-finite objective");
        detail::fold_gradient(p, eg.grad, g);
        detail::project_gradient(p.u, g);
    }
    for (double v : g)
        if (!std::isfinite(v))
            throw std::runtime_error("gradient: non-finite gradient");
    return g;
}

/// Minimum SNR (dB) at which the quadrature GMI reaches target_gmi, by
/// bisection to 0.01 dB. The target must be bracketed by [lo_db, hi_db].
inline double required_snr(const LabeledConstellation& c, double target_gmi,
                           double lo_db, double hi_db, int quad_j = 10) {
    c.validate();
    if (!(target_gmi > 0.0) || !(target_gmi < c.bits))
        throw std::invalid_argument(
            "required_snr: target must lie strictly between 0 and the label entropy");
    if (!(lo_db < hi_db))
        throw std::invalid_argument("required_snr: empty bracket");
    const QuadratureRule rule = gauss_hermite(quad_j);
    const double energy = c.mean_energy();
    const auto gmi_at = [&](double snr_db) {
        GaussianLaw law;
        law.sigma2_z = energy / ((c.dims / 2.0) * db_to_lin(snr_db));
        return gmi_gh(c, law, rule).value;
    };
    if (!(gmi_at(lo_db) <= target_gmi && target_gmi <= gmi_at(hi_db)))
        throw std::invalid_argument("required_snr: target not bracketed");
    double lo = lo_db, hi = hi_db;
    while (hi - lo > 0.01) {
        const double mid = 0.5 * (lo + hi);
        (gmi_at(mid) < target_gmi ? lo : hi) = mid;
    }
    return hi;  // smallest SNR known to reach the target (within 0.01 dB)
}

namespace detail {

struct RestartOutcome {
    double best_obj = -std::numeric_limits<double>::infinity();
    LabeledConstellation best_c;
    std::vector<TracePoint> points;
    std::vector<std::string> notes;
};

inline RestartOutcome run_restart(const ShapingProblem& pb, FreeParams p,
                                  const OptimizerConfig& cfg, const QuadratureRule& rule,
                                  int restart) {
    RestartOutcome out;
    if (restart > 0) {
        // Jitter: Gaussian perturbation, std = cfg.jitter x coordinate RMS.
        Rng rng(child_seed(cfg.seed, static_cast<std::uint64_t>(restart)));
        double rms = 0.0;
        for (double v : p.u)
            rms += v * v;
        rms = std::sqrt(rms / static_cast<double>(p.u.size()));
        for (double& v : p.u)
            v += cfg.jitter * rms * rng.normal();
    }
    LabeledConstellation c = rebuild(p, pb.power);

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> madam(p.u.size(), 0.0), vadam(p.u.size(), 0.0);
    std::vector<double> best_hist;
    best_hist.reserve(cfg.max_iterations);

    for (int it = 0; it < cfg.max_iterations; ++it) {
        ObjectiveGrad eg;
        ObjectiveValue ev;
        const bool analytic = cfg.gradient == GradientMethod::analytic;
        if (analytic) {
            eg = eval_grad(pb, c, rule);
            ev = eg.value;
        } else {
            ev = eval_value(pb, c, rule);
        }
        if (!std::isfinite(ev.objective)) {
            out.notes.push_back("restart " + std::to_string(restart) +
                                " aborted: non-finite objective at iteration " +
                                std::to_string(it));
            break;
        }
        if (ev.objective > out.best_obj) {
            out.best_obj = ev.objective;
            out.best_c = c;
        }
        best_hist.push_back(out.best_obj);

        const ShapingMetrics sm = metrics(c);
        double phi2_mean = 0.0;
        for (double v : sm.phi2)
            phi2_mean += v;
        phi2_mean /= static_cast<double>(sm.phi2.size());
        TracePoint tp;
        tp.restart = restart;
        tp.iteration = it;
        tp.objective = ev.objective;
        tp.best_objective = out.best_obj;
        tp.effective_snr_db = ev.effective_snr_db;
        tp.papr = sm.papr;
        tp.phi2 = phi2_mean;
        tp.phi4 = sm.phi4;
        tp.psi = sm.psi;
        tp.eta_hat = ev.eta_hat;
        out.points.push_back(tp);

        if (it >= cfg.tolerance_window &&
            best_hist[it] - best_hist[it - cfg.tolerance_window] < cfg.tolerance_bit)
            break;
        if (it + 1 == cfg.max_iterations)
            break;

        std::vector<double> g;
        if (analytic) {
            fold_gradient(p, eg.grad, g);
            project_gradient(p.u, g);
        } else {
            g = fd_gradient(pb, p, rule, cfg.fd_step);
        }
        bool finite = true;
        for (double v : g)
            finite = finite && std::isfinite(v);
        if (!finite) {
            out.notes.push_back("restart " + std::to_string(restart) +
                                " aborted: non-finite gradient at iteration " +
                                std::to_string(it));
            break;
        }

        const int t = it + 1;
        const double bc1 = 1.0 - std::pow(b1, t);
        const double bc2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < p.u.size(); ++i) {
            madam[i] = b1 * madam[i] + (1.0 - b1) * g[i];
            vadam[i] = b2 * vadam[i] + (1.0 - b2) * g[i] * g[i];
            const double mh = madam[i] / bc1;
            const double vh = vadam[i] / bc2;
            p.u[i] += cfg.learning_rate * mh / (std::sqrt(vh) + eps);
        }
        c = rebuild(p, pb.power);
    }
    return out;
}

}  // namespace detail

/// Best-of-restarts coordinate ascent. The initializer fixes the labeling and
/// the family; it is renormalized to the power target before the descent, and
/// its objective is the guaranteed floor of the result.
inline ShapingResult optimize(const ShapingProblem& problem,
                              const LabeledConstellation& init,
                              const OptimizerConfig& cfg) {
    problem.validate();
    cfg.validate();
    init.validate();
    if (init.dims != problem.dims || init.bits != problem.bits)
        throw std::invalid_argument(
            "optimize: initializer does not match the problem dimensions");

    const QuadratureRule rule = gauss_hermite(cfg.quad_j);
    const LabeledConstellation start = normalize(init, problem.power);
    const detail::FreeParams p0 = detail::free_params_from(start, problem.constraint);

    std::vector<detail::RestartOutcome> outs(cfg.restarts);
    parallel_for(static_cast<std::size_t>(cfg.restarts), cfg.threads,
                 [&](std::size_t r) {
                     outs[r] = detail::run_restart(problem, p0, cfg, rule,
                                                   static_cast<int>(r));
                 });

    ShapingResult res;
    int best = -1;
    double bobj = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        for (const auto& tp : outs[r].points)
            res.trace.points.push_back(tp);
        for (const auto& n : outs[r].notes)
            res.trace.notes.push_back(n);
        if (outs[r].best_obj > bobj) {  // ties keep the lowest restart index
            bobj = outs[r].best_obj;
            best = r;
        }
    }
    if (best < 0 || !std::isfinite(bobj))
        throw std::runtime_error("optimize: no restart produced a finite objective");

    res.trace.best_restart = best;
    res.trace.best_objective = bobj;
    if (!outs.empty() && !outs[0].points.empty())
        res.trace.initial_objective = outs[0].points.front().objective;
    res.constellation = std::move(outs[best].best_c);
    return res;
}

}  // namespace gcs
