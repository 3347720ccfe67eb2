#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <gcs/nli.hpp>

using namespace gcs;

namespace {

LabeledConstellation pm(int bits_per_pol) {
    return cartesian_product(make_qam(bits_per_pol), make_qam(bits_per_pol));
}

FiberLink test_link() {
    FiberLink link;
    link.span_length_km = 80.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.21;
    link.dispersion_ps_nm_km = 16.9;
    link.gamma_per_w_km = 1.31;
    link.steps_per_span = 50;
    link.amplifier = true;
    link.noise_figure_db = 5.0;
    return link;
}

TxConfig test_tx(long long n_symbols = 1 << 12) {
    TxConfig tx;
    tx.symbol_rate_gbd = 45.0;
    tx.rolloff = 0.1;
    tx.samples_per_symbol = 2;
    tx.n_symbols = n_symbols;
    tx.seed = 31;
    return tx;
}

} // namespace

TEST_CASE("effective-snr algebra closed forms") {
    SECTION("linear regime and direct substitution") {
        REQUIRE(effective_snr({2.0, 0.0, 0.0, 1.0}) == Catch::Approx(0.5).epsilon(1e-15));
        REQUIRE(effective_snr({2.0, 0.6, 0.4, 1.0}) ==
                Catch::Approx(1.0 / 3.0).epsilon(1e-15));
        REQUIRE(effective_snr({2.0, 0.6, 0.4, 100.0}) < 1e-3); // cubic dominance
        REQUIRE(optimal_launch_power(2.0, 1.0) == Catch::Approx(1.0).epsilon(1e-15));
        REQUIRE(gamma_opt(2.0, 1.0) == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
    }

    SECTION("identity, optimality, and scaling over random draws") {
        Rng rng(404);
        for (int trial = 0; trial < 1000; ++trial) {
            const double s2 = std::pow(10.0, -6.0 + 7.0 * rng.uniform());
            const double eta = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
            const double popt = optimal_launch_power(s2, eta);
            const double gopt = gamma_opt(s2, eta);
            REQUIRE(effective_snr({s2, eta, 0.0, popt}) ==
                    Catch::Approx(gopt).epsilon(1e-12));
            REQUIRE(effective_snr({s2, eta, 0.0, popt * 1.01}) < gopt);
            REQUIRE(effective_snr({s2, eta, 0.0, popt * 0.99}) < gopt);
            REQUIRE(gamma_opt(s2, 2.0 * eta) ==
                    Catch::Approx(gopt * std::pow(2.0, -1.0 / 3.0)).epsilon(1e-12));
            REQUIRE(gamma_opt(2.0 * s2, eta) ==
                    Catch::Approx(gopt * std::pow(2.0, -2.0 / 3.0)).epsilon(1e-12));
        }
    }

    SECTION("strict unimodality on a log grid") {
        const double s2 = 3.7e-5, eta = 220.0;
        const double popt = optimal_launch_power(s2, eta);
        const double gopt = gamma_opt(s2, eta);
        for (int k = -10; k <= 10; ++k) {
            if (k == 0)
                continue;
            const double p = popt * std::pow(10.0, 0.1 * k);
            REQUIRE(effective_snr({s2, eta, 0.0, p}) < gopt);
        }
    }

    SECTION("input validation") {
        REQUIRE_THROWS_AS(optimal_launch_power(2.0, 0.0), std::invalid_argument);
        REQUIRE_THROWS_AS(gamma_opt(0.0, 1.0), std::invalid_argument);
        REQUIRE_THROWS_AS(effective_snr({-1.0, 0.0, 0.0, 1.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(effective_snr({1.0, -0.5, 0.2, 1.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(effective_snr({1.0, 0.0, 0.0, 0.0}), std::invalid_argument);
    }
}

TEST_CASE("cubic fit recovers synthetic data exactly") {
    SECTION("noiseless cubic") {
        auto cube = [](double p) { return 0.5 * p * p * p; };
        std::vector<std::pair<double, double>> sweep;
        for (double p : {1e-3, 2e-3, 4e-3, 7e-3, 1.3e-2})
            sweep.push_back({p, cube(p)});
        const EtaFit fit = fit_eta(sweep);
        REQUIRE(fit.eta == Catch::Approx(0.5).epsilon(1e-12));
        REQUIRE(fit.r2 >= 1.0 - 1e-12);
        REQUIRE_FALSE(fit.floored);
    }

    SECTION("preconditions") {
        REQUIRE_THROWS_AS(fit_eta({{1e-3, 1e-9}, {4e-3, 6.4e-8}}),
                          std::invalid_argument);
        // Only 4 dB of span.
        REQUIRE_THROWS_AS(
            fit_eta({{1e-3, 1e-9}, {2e-3, 8e-9}, {2.5e-3, 1.6e-8}}),
            std::invalid_argument);
        REQUIRE_THROWS_AS(fit_eta({{-1e-3, 1e-9}, {2e-3, 8e-9}, {4e-3, 6.4e-8}}),
                          std::invalid_argument);
    }

    SECTION("non-positive variance points are floored out") {
        const EtaFit fit = fit_eta(
            {{1e-3, 2e-9}, {2e-3, -1e-9}, {4e-3, 1.28e-7}, {8e-3, 1.024e-6}});
        REQUIRE(fit.floored);
        REQUIRE(fit.eta == Catch::Approx(2.0).epsilon(1e-12));

        const EtaFit dead = fit_eta({{1e-3, -1.0}, {2e-3, 0.0}, {4e-3, -2.0}});
        REQUIRE(dead.floored);
        REQUIRE(dead.eta == 0.0);
    }
}

TEST_CASE("ssfm sweep follows the cubic law") {
    const auto c = pm(4);
    const auto sweep =
        nli_power_sweep(c, test_link(), test_tx(), {-2.0, 0.0, 2.0, 4.0, 6.0, 8.0});
    const EtaFit fit = fit_eta(sweep);
    REQUIRE(fit.r2 > 0.99);
    REQUIRE(fit.eta > 0.0);
    REQUIRE_FALSE(fit.floored);
}

TEST_CASE("constant-modulus formats generate less nli") {
    const std::vector<double> powers = {0.0, 3.0, 6.0, 9.0};
    const EtaFit qpsk = fit_eta(nli_power_sweep(pm(2), test_link(), test_tx(), powers));
    const EtaFit qam16 = fit_eta(nli_power_sweep(pm(4), test_link(), test_tx(), powers));
    REQUIRE(qpsk.eta < qam16.eta);
}

TEST_CASE("surrogate calibration, persistence, and freshness") {
    const FiberLink link = test_link();
    const TxConfig tx = test_tx();
    const std::vector<LabeledConstellation> formats = {pm(2), pm(4), pm(6),
                                                       make_sp_qam(7)};
    const std::vector<double> powers = {0.0, 3.0, 6.0, 9.0};
    const EtaSurrogate s = calibrate_surrogate(formats, link, tx, powers);

    REQUIRE(s.c0 > 0.0);
    REQUIRE(s.n_formats == 4);
    // Product formats and their set-partitioned subsets are exactly collinear
    // in (Phi4 - 1, mean Phi2 - 1); the minimum-norm fit records that.
    REQUIRE(s.design_rank == 2);
    REQUIRE(s.fit_r2 > 0.9);
    REQUIRE(s.max_rel_residual < 0.5);

    // Constant-modulus format: both excess-kurtosis regressors vanish.
    REQUIRE(s.eta_hat(pm(2)) == Catch::Approx(s.c0).epsilon(1e-12));

    SECTION("save / load round trip") {
        const std::string path = "surrogate_test.txt";
        s.save(path);
        const EtaSurrogate r = EtaSurrogate::load(path);
        REQUIRE(r.c0 == s.c0);
        REQUIRE(r.c1 == s.c1);
        REQUIRE(r.c2 == s.c2);
        REQUIRE(r.fingerprint == s.fingerprint);
        REQUIRE(r.fit_r2 == s.fit_r2);
        std::remove(path.c_str());
    }

    SECTION("stale calibration is an error") {
        REQUIRE_NOTHROW(require_fresh(s, link, tx));
        FiberLink other = link;
        other.span_length_km = 81.0;
        REQUIRE_THROWS_AS(require_fresh(s, other, tx), std::runtime_error);
        TxConfig tx2 = tx;
        tx2.symbol_rate_gbd = 64.0;
        REQUIRE_THROWS_AS(require_fresh(s, link, tx2), std::runtime_error);
        // Measurement knobs do not invalidate the calibration.
        TxConfig tx3 = tx;
        tx3.launch_power_dbm = 3.0;
        tx3.n_symbols *= 2;
        tx3.seed = 999;
        REQUIRE_NOTHROW(require_fresh(s, link, tx3));
    }

    SECTION("degenerate inputs") {
        REQUIRE_THROWS_AS(calibrate_surrogate({pm(2), pm(4), pm(6)}, link, tx, powers),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(
            calibrate_surrogate({pm(2), pm(2), pm(2), pm(2)}, link, tx, powers),
            std::invalid_argument);
    }
}

TEST_CASE("energy-truncated subsets break the product-moment collinearity") {
    // Keep the 64 lowest-energy points of PM-16QAM: selecting on total energy
    // couples the two polarizations, moving the format off the
    // Phi4 - 1 = (mean Phi2 - 1)/2 line that all product/set-partitioned
    // formats satisfy exactly. Such formats are what the second regressor
    // exists for.
    const auto parent = pm(4);
    std::vector<int> order(parent.order());
    for (int i = 0; i < parent.order(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return parent.energy(a) < parent.energy(b);
    });
    LabeledConstellation sub;
    sub.dims = 4;
    sub.bits = 6;
    for (int r = 0; r < 64; ++r) {
        const double* p = parent.point(order[r]);
        sub.pts.insert(sub.pts.end(), p, p + 4);
        sub.labels.push_back(static_cast<std::uint32_t>(r));
    }
    normalize(sub);
    const auto m = metrics(sub);
    const double ratio = (m.phi4 - 1.0) / (EtaSurrogate::mean_phi2(m) - 1.0);
    REQUIRE(std::abs(ratio - 0.5) > 0.02);
}

TEST_CASE("surrogate gradient matches central differences") {
    // Random normalized 16-point 4-D constellation.
    Rng rng(77);
    LabeledConstellation c;
    c.dims = 4;
    c.bits = 4;
    c.pts.resize(16 * 4);
    for (auto& v : c.pts)
        v = rng.normal();
    for (int i = 0; i < 16; ++i)
        c.labels.push_back(static_cast<std::uint32_t>(i));
    normalize(c);

    EtaSurrogate s;
    s.c0 = 2.0;
    s.c1 = 1.5;
    s.c2 = 0.7;
    s.fingerprint = 1;
    s.n_formats = 4;

    const EtaHatGradient g = eta_hat_gradient(s, c);
    REQUIRE(g.eta_hat == Catch::Approx(s.eta_hat(c)).epsilon(1e-14));
    REQUIRE_FALSE(g.clamped);

    const double h = 1e-6;
    for (int i = 0; i < 16; ++i) {
        for (int d = 0; d < 4; ++d) {
            LabeledConstellation cp = c, cm = c;
            cp.pts[4 * i + d] += h;
            cm.pts[4 * i + d] -= h;
            const double num = (s.eta_hat(cp) - s.eta_hat(cm)) / (2.0 * h);
            REQUIRE(g.grad[4 * i + d] == Catch::Approx(num).margin(1e-6));
        }
    }

    SECTION("clamp zeroes the gradient") {
        EtaSurrogate neg = s;
        neg.c1 = -100.0; // drives the affine form below the floor
        const EtaHatGradient gc = eta_hat_gradient(neg, c);
        REQUIRE(gc.clamped);
        REQUIRE(gc.eta_hat == Catch::Approx(1e-6 * neg.c0));
        for (double v : gc.grad)
            REQUIRE(v == 0.0);
        REQUIRE(neg.eta_hat(c) == Catch::Approx(1e-6 * neg.c0));
    }
}

TEST_CASE("nli objective wiring") {
    const auto c = pm(4);
    EtaSurrogate s;
    s.c0 = 100.0;
    s.c1 = 0.0;
    s.c2 = 0.0;
    const double sigma2_ase = 2e-5;

    SECTION("objective equals the gmi at the closed-form optimum") {
        const NliObjectiveValue v = nli_objective(c, sigma2_ase, s);
        REQUIRE(v.eta_hat == Catch::Approx(100.0));
        REQUIRE(v.gamma_opt == Catch::Approx(gamma_opt(sigma2_ase, 100.0)).epsilon(1e-14));
        const GaussianLaw law{c.mean_energy() / (2.0 * v.gamma_opt)};
        REQUIRE(v.gmi == Catch::Approx(gmi_gh(c, law, 10).value).epsilon(1e-14));
    }

    SECTION("larger surrogate eta lowers the objective") {
        EtaSurrogate s2 = s;
        s2.c0 = 300.0;
        REQUIRE(nli_objective(c, sigma2_ase, s2).gmi < nli_objective(c, sigma2_ase, s).gmi);
    }

    SECTION("invariant under axis reflection and label-bit permutation") {
        EtaSurrogate moments = s;
        moments.c1 = 40.0;
        moments.c2 = 15.0;
        const NliObjectiveValue base = nli_objective(c, sigma2_ase, moments);

        LabeledConstellation flipped = c;
        for (int i = 0; i < flipped.order(); ++i)
            flipped.pts[static_cast<std::size_t>(i) * 4 + 2] *= -1.0;
        flipped.axes.clear(); // reflection invalidates the per-axis shortcut table
        const NliObjectiveValue f = nli_objective(flipped, sigma2_ase, moments);
        REQUIRE(f.eta_hat == Catch::Approx(base.eta_hat).epsilon(1e-13));
        REQUIRE(f.gmi == Catch::Approx(base.gmi).epsilon(1e-12));

        LabeledConstellation permuted = c;
        for (auto& lab : permuted.labels) {
            const std::uint32_t b0 = (lab >> 0) & 1u, b7 = (lab >> 7) & 1u;
            lab = (lab & ~((1u << 0) | (1u << 7))) | (b0 << 7) | (b7 << 0);
        }
        permuted.axes.clear();
        const NliObjectiveValue p = nli_objective(permuted, sigma2_ase, moments);
        REQUIRE(p.gmi == Catch::Approx(base.gmi).epsilon(1e-12));
    }

    SECTION("ase variance helper") {
        const FiberLink link = test_link();
        const TxConfig tx = test_tx();
        FiberLink noiseless = link;
        noiseless.ase = false; // physical ASE still exists for the objective
        REQUIRE(ase_variance_w(noiseless, tx) == Catch::Approx([&] {
                    FiberLink l = link;
                    l.ase = true;
                    return l.ase_power_w(tx.symbol_rate_gbd * 1e9);
                }()).epsilon(1e-15));
        FiberLink unamplified = link;
        unamplified.amplifier = false;
        REQUIRE_THROWS_AS(ase_variance_w(unamplified, tx), std::invalid_argument);
    }
}
