#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <set>
#include <sstream>

#include "gcs/fibersim.hpp"

using namespace gcs;

namespace {

LabeledConstellation pm16() {
    return cartesian_product(make_qam(4), make_qam(4));
}

LabeledConstellation pmqpsk() {
    return cartesian_product(make_qam(2), make_qam(2));
}

TxConfig small_tx(long long n_symbols = 1 << 10, std::uint64_t seed = 7) {
    TxConfig tx;
    tx.symbol_rate_gbd = 45.0;
    tx.rolloff = 0.1;
    tx.samples_per_symbol = 2;
    tx.n_channels = 1;
    tx.launch_power_dbm = 0.0;
    tx.n_symbols = n_symbols;
    tx.seed = seed;
    return tx;
}

FiberLink null_link() {
    FiberLink link;
    link.n_spans = 0;
    link.amplifier = false;
    return link;
}

/// Error-vector magnitude of the equalized symbols against the transmitted
/// constellation points.
double evm(const LabeledConstellation& c, const SimResult& res) {
    double sig = 0.0, err = 0.0;
    const std::size_t ns = res.tx_indices.size();
    for (std::size_t t = 0; t < ns; ++t) {
        const double* p = c.point(res.tx_indices[t]);
        for (int d = 0; d < 4; ++d) {
            const double e = res.received[4 * t + d] - p[d];
            err += e * e;
            sig += p[d] * p[d];
        }
    }
    return std::sqrt(err / sig);
}

double total_energy(const DualPolWaveform& w) {
    double acc = 0.0;
    for (std::size_t t = 0; t < w.size(); ++t)
        acc += std::norm(w.x[t]) + std::norm(w.y[t]);
    return acc;
}

} // namespace

TEST_CASE("modulation is band-limited at the configured launch power") {
    const auto c = pm16();
    TxConfig tx = small_tx(1 << 14, 11);
    tx.launch_power_dbm = 0.0;
    const auto sig = modulate(c, tx);

    REQUIRE(sig.tx_indices.size() == static_cast<std::size_t>(tx.n_symbols));
    REQUIRE(sig.wave.size() == static_cast<std::size_t>(tx.n_symbols * tx.samples_per_symbol));

    // Mean waveform power vs configured launch power (statistical over the
    // random symbol draw; 2^14 symbols keeps the fluctuation well under
    // 0.05 dB).
    const double p_mw = sig.wave.mean_power_w() * 1e3;
    REQUIRE(std::abs(10.0 * std::log10(p_mw)) < 0.05);

    // Spectral occupancy: nothing outside (1 + rolloff) * Rs.
    const std::size_t n = sig.wave.size();
    auto spec = sig.wave.x;
    detail::fft_plan(n).forward(spec.data());
    const double fs_hz = sig.wave.sample_rate_ghz * 1e9;
    const double edge_hz = 0.5 * (1.0 + tx.rolloff) * tx.symbol_rate_gbd * 1e9;
    double inside = 0.0, outside = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double f = std::abs(detail::fft_freq(k, n, fs_hz));
        (f <= edge_hz * (1.0 + 1e-12) ? inside : outside) += std::norm(spec[k]);
    }
    REQUIRE(outside <= inside * 1e-20);

    // Determinism of the transmitter.
    const auto sig2 = modulate(c, tx);
    REQUIRE(sig2.wave.x == sig.wave.x);
    REQUIRE(sig2.wave.y == sig.wave.y);
    TxConfig other = tx;
    other.seed = 12;
    REQUIRE(modulate(c, other).wave.x != sig.wave.x);
}

TEST_CASE("back-to-back loopback is transparent") {
    const auto c = pm16();
    const TxConfig tx = small_tx();
    const auto sig = modulate(c, tx);
    const auto res = receive(sig.wave, null_link(), tx, c);

    REQUIRE(evm(c, res) < 1e-10);
    REQUIRE(res.effective_snr_db > 200.0);
    REQUIRE(res.gmi.value == Catch::Approx(8.0).margin(1e-6));
    REQUIRE(res.tx_indices == sig.tx_indices);
}

TEST_CASE("attenuation-only span matches closed-form loss") {
    const auto c = pmqpsk();
    const TxConfig tx = small_tx();
    const auto sig = modulate(c, tx);

    FiberLink link;
    link.span_length_km = 80.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.21;
    link.dispersion_ps_nm_km = 0.0;
    link.gamma_per_w_km = 0.0;
    link.steps_per_span = 10;
    link.amplifier = false;

    const auto out = propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz);
    const double loss_db =
        10.0 * std::log10(total_energy(out) / total_energy(sig.wave));
    REQUIRE(loss_db == Catch::Approx(-16.8).margin(1e-9));
}

TEST_CASE("dispersion-only propagation is undone by compensation") {
    const auto c = pm16();
    const TxConfig tx = small_tx(1 << 10, 3);
    const auto sig = modulate(c, tx);

    FiberLink link;
    link.span_length_km = 80.0;
    link.n_spans = 2;
    link.alpha_db_per_km = 0.21;
    link.dispersion_ps_nm_km = 16.9;
    link.gamma_per_w_km = 0.0;
    link.steps_per_span = 4;
    link.amplifier = true;   // gain restores the loss exactly
    link.ase = false;

    auto out = propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz);
    compensate_dispersion(out, link);

    double diff = 0.0, ref = 0.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
        diff += std::norm(out.x[t] - sig.wave.x[t]) + std::norm(out.y[t] - sig.wave.y[t]);
        ref += std::norm(sig.wave.x[t]) + std::norm(sig.wave.y[t]);
    }
    REQUIRE(std::sqrt(diff / ref) < 1e-8);

    // The full receiver also sees an essentially noiseless channel.
    const auto res = receive(propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz),
                             link, tx, c);
    REQUIRE(res.effective_snr_db > 160.0);
}

TEST_CASE("lossless nonlinear propagation conserves energy") {
    const auto c = pm16();
    TxConfig tx = small_tx();
    tx.launch_power_dbm = 10.0; // strong nonlinearity
    const auto sig = modulate(c, tx);

    FiberLink link;
    link.span_length_km = 40.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.0;
    link.dispersion_ps_nm_km = 16.9;
    link.gamma_per_w_km = 1.31;
    link.steps_per_span = 25;
    link.amplifier = false;

    const auto out = propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz);
    const double ein = total_energy(sig.wave);
    const double eout = total_energy(out);
    REQUIRE(std::abs(eout - ein) <= 1e-9 * ein);
}

TEST_CASE("dispersionless lossless fiber reduces to exact self-phase rotation") {
    const auto c = pm16();
    TxConfig tx = small_tx(1 << 9, 5);
    tx.launch_power_dbm = 6.0;
    const auto sig = modulate(c, tx);

    FiberLink link;
    link.span_length_km = 30.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.0;
    link.dispersion_ps_nm_km = 0.0;
    link.gamma_per_w_km = 1.31;
    link.steps_per_span = 8;
    link.amplifier = false;

    const auto out = propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz);

    // Closed form: each sample rotates by (8/9) * gamma * P(t) * L.
    const double coef = (8.0 / 9.0) * link.gamma_per_w_m() * link.span_length_km * 1e3;
    double diff = 0.0, ref = 0.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double p = std::norm(sig.wave.x[t]) + std::norm(sig.wave.y[t]);
        const auto rot = std::polar(1.0, coef * p);
        diff += std::norm(out.x[t] - sig.wave.x[t] * rot);
        diff += std::norm(out.y[t] - sig.wave.y[t] * rot);
        ref += p;
    }
    REQUIRE(std::sqrt(diff / ref) < 1e-10);
}

TEST_CASE("amplifier noise follows the configured noise figure") {
    const auto c = pm16();
    TxConfig tx = small_tx(1 << 14, 21);
    tx.launch_power_dbm = -10.0; // deep linear regime
    const auto sig = modulate(c, tx);

    FiberLink link;
    link.span_length_km = 80.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.21;
    link.dispersion_ps_nm_km = 0.0;
    link.gamma_per_w_km = 0.0;
    link.steps_per_span = 1;
    link.amplifier = true;
    link.noise_figure_db = 5.0;
    link.ase = true;

    const auto out = propagate(sig.wave, link, 99, sig.occupied_bandwidth_ghz);
    const auto res = receive(out, link, tx, c);

    const double p_w = dbm_to_watt(tx.launch_power_dbm);
    const double rs_hz = tx.symbol_rate_gbd * 1e9;
    const double predicted_db = lin_to_db(p_w / link.ase_power_w(rs_hz));
    REQUIRE(res.effective_snr_db == Catch::Approx(predicted_db).margin(0.1));

    // GMI on the received cloud agrees with the same-SNR Gaussian analysis.
    const auto analytic = gmi_gh(c, law_from_snr_db(c, predicted_db), 10);
    REQUIRE(res.gmi.value == Catch::Approx(analytic.value).margin(0.05));
}

TEST_CASE("received symbol noise matches injected channel noise") {
    const auto c = pm16();
    const TxConfig tx = small_tx(1 << 14, 33);
    auto sig = modulate(c, tx);
    add_awgn_symbol_snr(sig.wave, 15.0, 4242);
    const auto res = receive(sig.wave, null_link(), tx, c);
    REQUIRE(res.effective_snr_db == Catch::Approx(15.0).margin(0.05));
}

TEST_CASE("mid-rise quantizer granularity") {
    const auto c = pm16();
    const TxConfig tx = small_tx(1 << 10, 9);
    const auto clean = modulate(c, tx);

    SECTION("one bit leaves exactly two levels per rail") {
        auto w = clean.wave;
        quantize_dac(w, 1);
        std::set<double> re, im;
        for (const auto& s : w.x) {
            re.insert(s.real());
            im.insert(s.imag());
        }
        REQUIRE(re.size() == 2);
        REQUIRE(im.size() == 2);
        REQUIRE(*re.begin() == Catch::Approx(-*re.rbegin()));
        // Mid-rise: zero is never an output level.
        for (double v : re)
            REQUIRE(v != 0.0);
    }

    SECTION("sixteen bits are transparent to 1e-4") {
        auto w = clean.wave;
        quantize_dac(w, 16);
        double diff = 0.0, ref = 0.0;
        for (std::size_t t = 0; t < w.size(); ++t) {
            diff += std::norm(w.x[t] - clean.wave.x[t]) + std::norm(w.y[t] - clean.wave.y[t]);
            ref += std::norm(clean.wave.x[t]) + std::norm(clean.wave.y[t]);
        }
        REQUIRE(std::sqrt(diff / ref) < 1e-4);

        const auto res = receive(w, null_link(), tx, c);
        REQUIRE(res.effective_snr_db > 80.0);
    }

    SECTION("fixed range clips to the requested full scale") {
        auto w = clean.wave;
        double peak = 0.0;
        for (const auto& s : w.x)
            peak = std::max({peak, std::abs(s.real()), std::abs(s.imag())});
        const double range = 0.5 * peak;
        quantize_dac(w, 4, range);
        for (const auto& s : w.x) {
            REQUIRE(std::abs(s.real()) <= range);
            REQUIRE(std::abs(s.imag()) <= range);
        }
    }

    SECTION("configured transmitter quantization matches the standalone op") {
        TxConfig qtx = tx;
        qtx.dac_bits = 4;
        const auto qsig = modulate(c, qtx);
        auto w = clean.wave;
        quantize_dac(w, 4);
        REQUIRE(qsig.wave.x == w.x);
        REQUIRE(qsig.wave.y == w.y);
    }

    REQUIRE_THROWS_AS(
        [&] {
            auto w = clean.wave;
            quantize_dac(w, 0);
        }(),
        std::invalid_argument);
}

TEST_CASE("wdm neighbors leave a linear center channel clean") {
    const auto c = pm16();
    TxConfig tx = small_tx(1 << 10, 13);
    tx.n_channels = 3;
    tx.channel_spacing_ghz = 60.0;
    tx.samples_per_symbol = 5; // fs = 225 GHz >= 1.2 * 169.5 GHz
    const auto sig = modulate(c, tx);

    FiberLink link;
    link.span_length_km = 80.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.21;
    link.dispersion_ps_nm_km = 16.9;
    link.gamma_per_w_km = 0.0;
    link.steps_per_span = 4;
    link.amplifier = true;
    link.ase = false;

    const auto out = propagate(sig.wave, link, 1, sig.occupied_bandwidth_ghz);
    const auto res = receive(out, link, tx, c);
    REQUIRE(res.effective_snr_db > 140.0);
    REQUIRE(res.tx_indices == sig.tx_indices);
}

TEST_CASE("self-phase modulation noise scales with the cube of launch power") {
    const auto c = pm16();
    FiberLink link;
    link.span_length_km = 80.0;
    link.n_spans = 1;
    link.alpha_db_per_km = 0.21;
    link.dispersion_ps_nm_km = 16.9;
    link.gamma_per_w_km = 1.31;
    link.steps_per_span = 50;
    link.amplifier = true;
    link.ase = false; // isolate the nonlinear distortion

    std::vector<double> powers_dbm = {-2.0, 2.0, 6.0};
    std::vector<double> sigma2;
    for (double p : powers_dbm) {
        TxConfig tx = small_tx(1 << 12, 17);
        tx.launch_power_dbm = p;
        const auto res = simulate(c, link, tx, 1);
        // Residual variance back at waveform scale: sigma2 is reported on the
        // normalized constellation; multiply by launch power / mean energy.
        sigma2.push_back(res.noise_sigma2 * dbm_to_watt(p) / c.mean_energy());
    }
    REQUIRE(sigma2[0] < sigma2[1]);
    REQUIRE(sigma2[1] < sigma2[2]);
    const double slope =
        10.0 * std::log10(sigma2[2] / sigma2[0]) / (powers_dbm[2] - powers_dbm[0]);
    REQUIRE(slope == Catch::Approx(3.0).margin(0.2));
}

TEST_CASE("deterministic under fixed seeds") {
    const auto c = pm16();
    TxConfig tx = small_tx(1 << 9, 19);
    tx.launch_power_dbm = 2.0;

    FiberLink link;
    link.span_length_km = 20.0;
    link.n_spans = 2;
    link.steps_per_span = 10;
    link.amplifier = true;
    link.ase = true;

    const auto a = simulate(c, link, tx, 5);
    const auto b = simulate(c, link, tx, 5);
    REQUIRE(a.received == b.received);
    REQUIRE(a.effective_snr_db == b.effective_snr_db);
    REQUIRE(a.gmi.value == b.gmi.value);

    const auto d = simulate(c, link, tx, 6);
    REQUIRE(a.received != d.received);
}

TEST_CASE("sampling guard rejects undersampled configurations") {
    const auto c = pm16();

    TxConfig tx = small_tx();
    tx.n_channels = 3;
    tx.channel_spacing_ghz = 50.0; // occupied 149.5 GHz, fs only 90 GHz
    REQUIRE_THROWS_AS(modulate(c, tx), std::invalid_argument);

    const TxConfig ok = small_tx(1 << 8);
    const auto sig = modulate(c, ok);
    FiberLink link;
    REQUIRE_THROWS_AS(propagate(sig.wave, link, 1, /*occupied bw*/ 80.0),
                      std::invalid_argument);

    TxConfig bad = small_tx();
    bad.rolloff = 1.5;
    REQUIRE_THROWS_AS(modulate(c, bad), std::invalid_argument);
    bad = small_tx();
    bad.samples_per_symbol = 1;
    REQUIRE_THROWS_AS(modulate(c, bad), std::invalid_argument);

    // Dual-polarization transmitter needs a 4-D format.
    REQUIRE_THROWS_AS(modulate(make_qam(4), small_tx()), std::invalid_argument);
}

TEST_CASE("link and transmitter config files parse strictly") {
    const std::string text =
        "# desk-scale link\n"
        "span_length_km = 78\n"
        "n_spans = 3\n"
        "alpha_db_per_km = 0.2\n"
        "dispersion_ps_nm_km = 17.0\n"
        "gamma_per_w_km = 1.3\n"
        "steps_per_span = 100\n"
        "amplifier = true\n"
        "noise_figure_db = 4.5\n"
        "ase = on\n"
        "center_frequency_thz = 193.41\n";
    std::istringstream in(text);
    auto cfg = KeyValueConfig::parse(in, "test");
    const FiberLink link = link_from_config(cfg);
    cfg.ensure_all_used();
    REQUIRE(link.span_length_km == 78.0);
    REQUIRE(link.n_spans == 3);
    REQUIRE(link.noise_figure_db == 4.5);
    REQUIRE(link.ase);

    std::istringstream in2("symbol_rate_gbd = 45\nn_symbols = 4096\nbogus_key = 1\n");
    auto cfg2 = KeyValueConfig::parse(in2, "test2");
    const TxConfig tx = tx_from_config(cfg2);
    REQUIRE(tx.symbol_rate_gbd == 45.0);
    REQUIRE(tx.n_symbols == 4096);
    REQUIRE_THROWS_AS(cfg2.ensure_all_used(), std::invalid_argument);

    std::istringstream dup("a = 1\na = 2\n");
    REQUIRE_THROWS_AS(KeyValueConfig::parse(dup, "dup"), std::invalid_argument);
    std::istringstream noeq("just some words\n");
    REQUIRE_THROWS_AS(KeyValueConfig::parse(noeq, "noeq"), std::invalid_argument);

    std::istringstream notnum("span_length_km = fast\n");
    auto cfg3 = KeyValueConfig::parse(notnum, "notnum");
    REQUIRE_THROWS_AS(link_from_config(cfg3), std::invalid_argument);
}
