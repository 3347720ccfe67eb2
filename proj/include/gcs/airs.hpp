#ifndef GCS_AIRS_HPP
#define GCS_AIRS_HPP

#include <gcs/common.hpp>
#include <gcs/constellation.hpp>
#include <gcs/quadrature.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gcs {

/// Memoryless Gaussian channel law: noise variance per complex dimension
/// (two real dimensions), i.e. each real dimension carries sigma2_z / 2.
struct GaussianLaw {
    double sigma2_z = 1.0;
};

/// SNR convention: E[||X||^2] / ((N/2) * sigma2_z), i.e. signal power per
/// complex dimension over noise power per complex dimension.
inline GaussianLaw law_from_snr_db(const LabeledConstellation& c, double snr_db) {
    return GaussianLaw{c.mean_energy() / ((c.dims / 2.0) * db_to_lin(snr_db))};
}

inline double snr_db_from_law(const LabeledConstellation& c, const GaussianLaw& law) {
    return lin_to_db(c.mean_energy() / ((c.dims / 2.0) * law.sigma2_z));
}

enum class AirMethod { gauss_hermite, monte_carlo };

struct GmiEstimate {
    double value = 0.0;       // bit per N-dim symbol
    AirMethod method = AirMethod::gauss_hermite;
    long long samples_or_j = 0;
    double std_error = 0.0;   // Monte-Carlo only
};

namespace detail {

/// Per-point result of one Gauss-Hermite transmit-symbol evaluation:
/// the value partial plus (optionally) packed gradient contributions.
struct GhPointPartial {
    double value = 0.0;
    double dvalue_dsigma = 0.0;
    std::vector<int> touched;      // survivor point indices (excluding i)
    std::vector<double> gvals;     // touched.size() * N entries of G_n
};

/// Factorized evaluation of the bit-metric log-ratio sums for transmit
/// point i. The integrand term for candidate p at node vector xi is
///   e_p = exp(-(||d||^2 + 2*sigma*<xi, d>)/sigma^2),   d = s_i - s_p,
/// which factorizes as exp(A_ip) * prod_n T_p[n][xi_n]; the transmitted
/// point contributes e_i = 1 exactly, anchoring all sums at >= 1.
/// Pairs whose maximal term exp(U_ip) would stay below exp(-50) relative
/// to that anchor are dropped: invisible at double precision and the
/// bound also keeps every partial product inside floating-point range.
template <bool GRAD>
inline GhPointPartial gh_point_eval(const LabeledConstellation& c, int i,
                                    double sigma, const QuadratureRule& rule) {
    const int M = c.order();
    const int N = c.dims;
    const int m = c.bits;
    const int J = rule.J();
    const double sigma2 = sigma * sigma;
    const double ximax = std::max(std::fabs(rule.nodes.front()), std::fabs(rule.nodes.back()));

    // --- survivor collection -------------------------------------------
    std::vector<int> sv;
    std::vector<double> expA, dvec, ddsq, trow; // trow: [s][n][l]
    sv.reserve(64);
    for (int p = 0; p < M; ++p) {
        double dd = 0.0, l1 = 0.0;
        const double* si = c.point(i);
        const double* sp = c.point(p);
        double d[16];
        for (int n = 0; n < N; ++n) {
            d[n] = si[n] - sp[n];
            dd += d[n] * d[n];
            l1 += std::fabs(d[n]);
        }
        const double a = -dd / sigma2;
        if (a + 2.0 * ximax * l1 / sigma < -50.0)
            continue;
        sv.push_back(p);
        expA.push_back(std::exp(a));
        ddsq.push_back(dd);
        for (int n = 0; n < N; ++n)
            dvec.push_back(d[n]);
        for (int n = 0; n < N; ++n)
            for (int l = 0; l < J; ++l)
                trow.push_back(std::exp(-2.0 * rule.nodes[l] * d[n] / sigma));
    }
    const int nsv = static_cast<int>(sv.size());

    std::vector<std::uint32_t> eqmask(nsv); // bit (m-1-k) set <=> labels agree at k
    for (int s = 0; s < nsv; ++s)
        eqmask[s] = ~(c.labels[sv[s]] ^ c.labels[i]);
    std::vector<int> bik(m);
    for (int k = 0; k < m; ++k)
        bik[k] = c.label_bit(i, k);

    // --- accumulators ---------------------------------------------------
    std::vector<double> acc(static_cast<std::size_t>(m) * 2 * J);
    std::vector<double> row(static_cast<std::size_t>(nsv) * J);
    std::vector<double> invd(J), wl(J), gam(J), invn;
    std::vector<double> vacc, wacc;
    if (GRAD) {
        invn.resize(static_cast<std::size_t>(m) * J);
        vacc.assign(nsv, 0.0);
        wacc.assign(static_cast<std::size_t>(nsv) * N, 0.0);
    }

    GhPointPartial out;
    std::vector<int> lev(std::max(N - 1, 1), 0); // odometer over leading dims

    for (;;) {
        double wpre = 1.0;
        for (int n = 0; n < N - 1; ++n)
            wpre *= rule.weights[lev[n]];

        std::fill(acc.begin(), acc.end(), 0.0);
        for (int s = 0; s < nsv; ++s) {
            double ppre = expA[s];
            const double* t = &trow[static_cast<std::size_t>(s) * N * J];
            for (int n = 0; n < N - 1; ++n)
                ppre *= t[n * J + lev[n]];
            const double* tl = t + (N - 1) * J;
            double* r = &row[static_cast<std::size_t>(s) * J];
            for (int l = 0; l < J; ++l)
                r[l] = ppre * tl[l];
            const std::uint32_t lab = c.labels[sv[s]];
            for (int k = 0; k < m; ++k) {
                const int b = (lab >> (m - 1 - k)) & 1u;
                double* a = &acc[(static_cast<std::size_t>(k) * 2 + b) * J];
                for (int l = 0; l < J; ++l)
                    a[l] += r[l];
            }
        }

        for (int l = 0; l < J; ++l) {
            invd[l] = 1.0 / (acc[l] + acc[J + l]); // D = N_0(b=0) + N_0(b=1)
            wl[l] = wpre * rule.weights[l];
        }

        // value: sum_k log2(N_k / D) as a flushed product of ratios
        for (int l = 0; l < J; ++l) {
            double prod = 1.0, logs = 0.0;
            for (int k = 0; k < m; ++k) {
                prod *= acc[(static_cast<std::size_t>(k) * 2 + bik[k]) * J + l] * invd[l];
                if (prod < 1e-280) {
                    logs += std::log2(prod);
                    prod = 1.0;
                }
            }
            out.value += wl[l] * (logs + std::log2(prod));
        }

        if (GRAD) {
            for (int k = 0; k < m; ++k)
                for (int l = 0; l < J; ++l)
                    invn[static_cast<std::size_t>(k) * J + l] =
                        1.0 / acc[(static_cast<std::size_t>(k) * 2 + bik[k]) * J + l];
            for (int s = 0; s < nsv; ++s) {
                if (sv[s] == i)
                    continue; // e_i == 1 identically: no dependence on coordinates
                for (int l = 0; l < J; ++l)
                    gam[l] = -static_cast<double>(m) * invd[l];
                const std::uint32_t eq = eqmask[s];
                for (int k = 0; k < m; ++k) {
                    if (!((eq >> (m - 1 - k)) & 1u))
                        continue;
                    const double* nk = &invn[static_cast<std::size_t>(k) * J];
                    for (int l = 0; l < J; ++l)
                        gam[l] += nk[l];
                }
                const double* r = &row[static_cast<std::size_t>(s) * J];
                double gsum = 0.0, glast = 0.0;
                for (int l = 0; l < J; ++l) {
                    const double g = wl[l] * gam[l] * r[l];
                    gsum += g;
                    glast += g * rule.nodes[l];
                }
                vacc[s] += gsum;
                double* w = &wacc[static_cast<std::size_t>(s) * N];
                for (int n = 0; n < N - 1; ++n)
                    w[n] += rule.nodes[lev[n]] * gsum;
                w[N - 1] += glast;
            }
        }

        // advance odometer over the leading N-1 node dimensions
        int n = 0;
        for (; n < N - 1; ++n) {
            if (++lev[n] < J)
                break;
            lev[n] = 0;
        }
        if (n == N - 1)
            break;
    }

    if (GRAD) {
        out.touched.reserve(nsv);
        out.gvals.reserve(static_cast<std::size_t>(nsv) * N);
        for (int s = 0; s < nsv; ++s) {
            if (sv[s] == i)
                continue;
            out.touched.push_back(sv[s]);
            const double* d = &dvec[static_cast<std::size_t>(s) * N];
            const double* w = &wacc[static_cast<std::size_t>(s) * N];
            double ddot = 0.0;
            for (int n = 0; n < N; ++n) {
                out.gvals.push_back((2.0 / sigma2) * d[n] * vacc[s] + (2.0 / sigma) * w[n]);
                ddot += d[n] * w[n];
            }
            out.dvalue_dsigma +=
                (2.0 * ddsq[s] / (sigma2 * sigma)) * vacc[s] + (2.0 / sigma2) * ddot;
        }
    }
    return out;
}

inline void gh_check_inputs(const LabeledConstellation& c, const GaussianLaw& law,
                            const QuadratureRule& rule) {
    if (!(law.sigma2_z > 0.0))
        throw std::invalid_argument("gauss-hermite rate: noise variance must be positive");
    if (c.dims % 2 != 0)
        throw std::invalid_argument("gauss-hermite rate: dimension count must be even");
    if (rule.J() < 6)
        throw std::invalid_argument("gauss-hermite rate: at least 6 quadrature nodes required");
    if (c.dims > 16)
        throw std::invalid_argument("gauss-hermite rate: more than 16 dimensions unsupported");
    double s = 0.0;
    for (double w : rule.weights)
        s += w;
    if (std::fabs(s - std::sqrt(M_PI)) > 1e-10)
        throw std::invalid_argument("gauss-hermite rate: quadrature weights do not sum to sqrt(pi)");
    if (c.order() < 2)
        throw std::invalid_argument("gauss-hermite rate: empty constellation");
}

} // namespace detail

/// GMI of a labeled constellation over the Gaussian law, by separable
/// Gauss-Hermite quadrature (one node axis per real dimension).
/// Deterministic; bit-identical for any thread count (per-point partials
/// are reduced in fixed index order).
inline GmiEstimate gmi_gh(const LabeledConstellation& c, const GaussianLaw& law,
                          const QuadratureRule& rule, unsigned threads = 1) {
    detail::gh_check_inputs(c, law, rule);
    const int M = c.order();
    const double sigma = std::sqrt(law.sigma2_z);
    std::vector<double> partial(M);
    parallel_for(M, threads, [&](std::size_t i) {
        partial[i] =
            detail::gh_point_eval<false>(c, static_cast<int>(i), sigma, rule).value;
    });
    double s = 0.0;
    for (int i = 0; i < M; ++i)
        s += partial[i];
    const double c0 = 1.0 / (M * std::pow(M_PI, c.dims / 2.0));
    GmiEstimate est;
    est.value = std::clamp(c.bits + c0 * s, 0.0, static_cast<double>(c.bits));
    est.method = AirMethod::gauss_hermite;
    est.samples_or_j = rule.J();
    return est;
}

inline GmiEstimate gmi_gh(const LabeledConstellation& c, const GaussianLaw& law,
                          int j_nodes = 10, unsigned threads = 1) {
    return gmi_gh(c, law, gauss_hermite(j_nodes), threads);
}

/// Fused GMI value + analytic gradient (d gmi / d coordinate, row-major
/// M x N) and optionally d gmi / d sigma2_z. Same determinism contract.
struct GhGradient {
    double value = 0.0;
    std::vector<double> grad;      // M*N
    double dvalue_dsigma2 = 0.0;
};

inline GhGradient gmi_gh_gradient(const LabeledConstellation& c, const GaussianLaw& law,
                                  const QuadratureRule& rule, bool want_sigma_grad = false,
                                  unsigned threads = 1) {
    detail::gh_check_inputs(c, law, rule);
    const int M = c.order();
    const int N = c.dims;
    const double sigma = std::sqrt(law.sigma2_z);
    std::vector<detail::GhPointPartial> parts(M);
    parallel_for(M, threads, [&](std::size_t i) {
        parts[i] = detail::gh_point_eval<true>(c, static_cast<int>(i), sigma, rule);
    });
    const double c0 = 1.0 / (M * std::pow(M_PI, N / 2.0));
    const double cg = c0 / std::log(2.0);
    GhGradient out;
    out.grad.assign(static_cast<std::size_t>(M) * N, 0.0);
    double vsum = 0.0, ssum = 0.0;
    for (int i = 0; i < M; ++i) {
        vsum += parts[i].value;
        ssum += parts[i].dvalue_dsigma;
        const auto& t = parts[i].touched;
        for (std::size_t s = 0; s < t.size(); ++s)
            for (int n = 0; n < N; ++n) {
                const double g = cg * parts[i].gvals[s * N + n];
                out.grad[static_cast<std::size_t>(i) * N + n] -= g;
                out.grad[static_cast<std::size_t>(t[s]) * N + n] += g;
            }
    }
    out.value = c.bits + c0 * vsum;
    if (want_sigma_grad)
        out.dvalue_dsigma2 = cg * ssum / (2.0 * sigma);
    return out;
}

// ---- Monte-Carlo estimators ------------------------------------------------

namespace detail {

struct McSums {
    double gmi = 0.0;
    double mi = 0.0;
    long long count = 0;
};

/// One reproducible chunk: draws its own generator from (seed, chunk) and
/// processes `count` samples in batches via dense kernels. Accumulation
/// order inside a chunk is fixed, so any assignment of chunks to threads
/// produces identical totals.
inline McSums mc_chunk(const LabeledConstellation& c, double sigma2, long long count,
                       std::uint64_t chunk_seed, bool want_gmi,
                       const Eigen::MatrixXd& smat, const Eigen::VectorXd& es,
                       const Eigen::MatrixXd& bmat) {
    const int M = c.order();
    const int N = c.dims;
    const int m = c.bits;
    const double srd = std::sqrt(sigma2 / 2.0); // per-real-dimension std
    const double inv_ln2 = 1.0 / std::log(2.0);
    Rng rng(chunk_seed);
    McSums out;
    const int B = 256;
    Eigen::MatrixXd y(B, N), g, tk;
    Eigen::ArrayXXd e;
    std::vector<int> idx(B);
    long long done = 0;
    while (done < count) {
        const int b = static_cast<int>(std::min<long long>(B, count - done));
        for (int t = 0; t < b; ++t) {
            idx[t] = static_cast<int>(rng.bits(static_cast<unsigned>(m)));
            for (int n = 0; n < N; ++n)
                y(t, n) = smat(idx[t], n) + srd * rng.normal();
        }
        g.noalias() = y.topRows(b) * smat.transpose(); // b x M
        // exponent(t,p) = (2 g - ||y||^2 - ||s_p||^2) / sigma2
        Eigen::VectorXd yy = y.topRows(b).rowwise().squaredNorm();
        e = (((2.0 * g).colwise() - yy).rowwise() - es.transpose()).array() / sigma2;
        Eigen::VectorXd rowmax = e.rowwise().maxCoeff();
        e.colwise() -= rowmax.array();
        e = e.exp();
        if (want_gmi) {
            tk.noalias() = e.matrix() * bmat; // b x 2m
            for (int t = 0; t < b; ++t) {
                const double d = tk(t, 0) + tk(t, 1);
                const double invd = 1.0 / d;
                const std::uint32_t lab = c.labels[idx[t]];
                double prod = 1.0, logs = 0.0;
                for (int k = 0; k < m; ++k) {
                    const int bit = (lab >> (m - 1 - k)) & 1u;
                    double nk = tk(t, 2 * k + bit);
                    if (nk <= 0.0)
                        nk = 5e-324; // all same-bit terms underflowed
                    prod *= nk * invd;
                    if (prod < 1e-280) {
                        logs += std::log2(prod);
                        prod = 1.0;
                    }
                }
                out.gmi += logs + std::log2(prod);
                out.mi += (std::log(std::max(e(t, idx[t]), 5e-324)) - std::log(d)) * inv_ln2;
            }
        } else {
            for (int t = 0; t < b; ++t) {
                const double d = e.row(t).sum();
                out.mi += (std::log(std::max(e(t, idx[t]), 5e-324)) - std::log(d)) * inv_ln2;
            }
        }
        done += b;
    }
    out.count = count;
    return out;
}

struct McResult {
    GmiEstimate gmi;
    GmiEstimate mi;
};

inline McResult mc_run(const LabeledConstellation& c, const GaussianLaw& law,
                       long long n_samples, std::uint64_t seed, unsigned threads,
                       bool want_gmi) {
    if (!(law.sigma2_z > 0.0))
        throw std::invalid_argument("monte-carlo rate: noise variance must be positive");
    if (n_samples < 10000)
        throw std::invalid_argument("monte-carlo rate: at least 10^4 samples required");
    const int M = c.order();
    const int N = c.dims;
    const int m = c.bits;

    Eigen::MatrixXd smat(M, N);
    for (int p = 0; p < M; ++p)
        for (int n = 0; n < N; ++n)
            smat(p, n) = c.point(p)[n];
    Eigen::VectorXd es = smat.rowwise().squaredNorm();
    Eigen::MatrixXd bmat(M, 2 * m);
    bmat.setZero();
    for (int p = 0; p < M; ++p)
        for (int k = 0; k < m; ++k)
            bmat(p, 2 * k + c.label_bit(p, k)) = 1.0;

    constexpr int kChunks = 80;  // fixed work split: thread-count invariant
    constexpr int kBatches = 20; // std-error batches (4 chunks each)
    std::vector<McSums> sums(kChunks);
    std::vector<long long> counts(kChunks);
    for (int ch = 0; ch < kChunks; ++ch)
        counts[ch] = n_samples / kChunks + (ch < n_samples % kChunks ? 1 : 0);
    parallel_for(kChunks, threads, [&](std::size_t ch) {
        sums[ch] = mc_chunk(c, law.sigma2_z, counts[ch], child_seed(seed, ch), want_gmi,
                            smat, es, bmat);
    });

    auto finalize = [&](bool use_gmi) {
        double total = 0.0;
        for (int ch = 0; ch < kChunks; ++ch)
            total += use_gmi ? sums[ch].gmi : sums[ch].mi;
        const double base = use_gmi ? m : std::log2(static_cast<double>(M));
        double bm[kBatches], bmean = 0.0;
        for (int b = 0; b < kBatches; ++b) {
            double s = 0.0;
            long long n = 0;
            for (int ch = 4 * b; ch < 4 * b + 4; ++ch) {
                s += use_gmi ? sums[ch].gmi : sums[ch].mi;
                n += counts[ch];
            }
            bm[b] = base + s / n;
            bmean += bm[b];
        }
        bmean /= kBatches;
        double var = 0.0;
        for (int b = 0; b < kBatches; ++b)
            var += (bm[b] - bmean) * (bm[b] - bmean);
        GmiEstimate est;
        est.value = std::clamp(base + total / n_samples, 0.0, static_cast<double>(m));
        est.method = AirMethod::monte_carlo;
        est.samples_or_j = n_samples;
        est.std_error = std::sqrt(var / (kBatches - 1.0) / kBatches);
        return est;
    };

    McResult out;
    if (want_gmi)
        out.gmi = finalize(true);
    out.mi = finalize(false);
    return out;
}

} // namespace detail

/// Monte-Carlo GMI: uniform symbols, Gaussian noise from the law; standard
/// error over 20 equal batches; reproducible for a fixed seed and invariant
/// to the thread count.
inline GmiEstimate gmi_mc(const LabeledConstellation& c, const GaussianLaw& law,
                          long long n_samples, std::uint64_t seed, unsigned threads = 1) {
    return detail::mc_run(c, law, n_samples, seed, threads, true).gmi;
}

/// Monte-Carlo symbol-wise mutual information (labeling-invariant).
inline GmiEstimate mi_mc(const LabeledConstellation& c, const GaussianLaw& law,
                         long long n_samples, std::uint64_t seed, unsigned threads = 1) {
    return detail::mc_run(c, law, n_samples, seed, threads, false).mi;
}

/// GMI of a measured cloud of (transmitted index, received point) pairs
/// under a Gaussian law with the supplied variance; used on simulator
/// output where the effective noise is estimated rather than drawn.
inline GmiEstimate gmi_from_cloud(const LabeledConstellation& c,
                                  const std::vector<std::uint32_t>& tx,
                                  const std::vector<double>& y, double sigma2) {
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("cloud rate: noise variance must be positive");
    const int M = c.order();
    const int N = c.dims;
    const int m = c.bits;
    const long long n = static_cast<long long>(tx.size());
    if (n < 100 || y.size() != static_cast<std::size_t>(n) * N)
        throw std::invalid_argument("cloud rate: need >= 100 (index, point) pairs");

    Eigen::MatrixXd smat(M, N);
    for (int p = 0; p < M; ++p)
        for (int nn = 0; nn < N; ++nn)
            smat(p, nn) = c.point(p)[nn];
    Eigen::VectorXd es = smat.rowwise().squaredNorm();

    constexpr int kBatches = 20;
    double bsum[kBatches] = {0.0};
    long long bcount[kBatches] = {0};
    const int B = 256;
    Eigen::MatrixXd ymat(B, N), g;
    Eigen::ArrayXXd e;
    long long done = 0;
    while (done < n) {
        const int b = static_cast<int>(std::min<long long>(B, n - done));
        for (int t = 0; t < b; ++t)
            for (int nn = 0; nn < N; ++nn)
                ymat(t, nn) = y[(done + t) * N + nn];
        g.noalias() = ymat.topRows(b) * smat.transpose();
        Eigen::VectorXd yy = ymat.topRows(b).rowwise().squaredNorm();
        e = (((2.0 * g).colwise() - yy).rowwise() - es.transpose()).array() / sigma2;
        Eigen::VectorXd rowmax = e.rowwise().maxCoeff();
        e.colwise() -= rowmax.array();
        e = e.exp();
        for (int t = 0; t < b; ++t) {
            double tk[2 * 32];
            for (int k = 0; k < 2 * m; ++k)
                tk[k] = 0.0;
            for (int p = 0; p < M; ++p) {
                const double v = e(t, p);
                const std::uint32_t lab = c.labels[p];
                for (int k = 0; k < m; ++k)
                    tk[2 * k + ((lab >> (m - 1 - k)) & 1u)] += v;
            }
            const double invd = 1.0 / (tk[0] + tk[1]);
            const std::uint32_t lab = c.labels[tx[done + t]];
            double prod = 1.0, logs = 0.0;
            for (int k = 0; k < m; ++k) {
                double nk = tk[2 * k + ((lab >> (m - 1 - k)) & 1u)];
                if (nk <= 0.0)
                    nk = 5e-324;
                prod *= nk * invd;
                if (prod < 1e-280) {
                    logs += std::log2(prod);
                    prod = 1.0;
                }
            }
            const int batch = static_cast<int>((done + t) * kBatches / n);
            bsum[batch] += logs + std::log2(prod);
            ++bcount[batch];
        }
        done += b;
    }
    double total = 0.0, bmean = 0.0;
    double bm[kBatches];
    for (int b = 0; b < kBatches; ++b) {
        total += bsum[b];
        bm[b] = m + bsum[b] / std::max<long long>(bcount[b], 1);
        bmean += bm[b];
    }
    bmean /= kBatches;
    double var = 0.0;
    for (int b = 0; b < kBatches; ++b)
        var += (bm[b] - bmean) * (bm[b] - bmean);
    GmiEstimate est;
    est.value = std::clamp(m + total / n, 0.0, static_cast<double>(m));
    est.method = AirMethod::monte_carlo;
    est.samples_or_j = n;
    est.std_error = std::sqrt(var / (kBatches - 1.0) / kBatches);
    return est;
}

// ---- Demapping ---------------------------------------------------------

/// Max-log LLRs with the N/sigma2_z prefactor; positive values favor bit 1.
/// Uses the per-real-dimension search when the labeling decomposes into
/// independent Gray-coded groups per axis (the `axes` certificate), since
/// the other dimensions' minima cancel in the difference; otherwise a full
/// search over all 2^m points.
inline std::vector<double> maxlog_llr(const LabeledConstellation& c, const double* y,
                                      const GaussianLaw& law) {
    if (!(law.sigma2_z > 0.0))
        throw std::invalid_argument("maxlog_llr: noise variance must be positive");
    const int N = c.dims;
    const int m = c.bits;
    const double scale = static_cast<double>(N) / law.sigma2_z;
    std::vector<double> llr(m);

    if (!c.axes.empty()) {
        for (const auto& ax : c.axes) {
            if (ax.bit_count == 0)
                continue;
            const int dim = static_cast<int>(&ax - c.axes.data());
            const int L = static_cast<int>(ax.levels.size());
            double dist[64];
            for (int l = 0; l < L; ++l) {
                const double t = y[dim] - ax.levels[l];
                dist[l] = t * t;
            }
            for (int kb = 0; kb < ax.bit_count; ++kb) {
                double best[2] = {std::numeric_limits<double>::infinity(),
                                  std::numeric_limits<double>::infinity()};
                for (int l = 0; l < L; ++l) {
                    const int b = (ax.codes[l] >> (ax.bit_count - 1 - kb)) & 1u;
                    best[b] = std::min(best[b], dist[l]);
                }
                llr[ax.bit_offset + kb] = scale * (best[0] - best[1]);
            }
        }
        return llr;
    }

    std::vector<double> best0(m, std::numeric_limits<double>::infinity());
    std::vector<double> best1(m, std::numeric_limits<double>::infinity());
    for (int p = 0; p < c.order(); ++p) {
        double d = 0.0;
        const double* sp = c.point(p);
        for (int n = 0; n < N; ++n) {
            const double t = y[n] - sp[n];
            d += t * t;
        }
        const std::uint32_t lab = c.labels[p];
        for (int k = 0; k < m; ++k) {
            if ((lab >> (m - 1 - k)) & 1u)
                best1[k] = std::min(best1[k], d);
            else
                best0[k] = std::min(best0[k], d);
        }
    }
    for (int k = 0; k < m; ++k)
        llr[k] = scale * (best0[k] - best1[k]);
    return llr;
}

/// Index of the nearest constellation point; ties break to the lowest index.
inline int hard_decide(const LabeledConstellation& c, const double* y) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int p = 0; p < c.order(); ++p) {
        double d = 0.0;
        const double* sp = c.point(p);
        for (int n = 0; n < c.dims; ++n) {
            const double t = y[n] - sp[n];
            d += t * t;
        }
        if (d < bd) {
            bd = d;
            best = p;
        }
    }
    return best;
}

} // namespace gcs

#endif
