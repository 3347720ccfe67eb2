#ifndef GCS_CLI_HPP
#define GCS_CLI_HPP

// Subcommand implementations behind the command-line front end. Each command
// is a plain function taking an argument struct, so tests can drive the full
// command path in-process; the binary in tools/ only maps flags onto these
// structs. Every command resolves its configuration (flag > config file >
// built-in default), writes its outputs atomically under the run directory,
// and records a manifest describing exactly what ran.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <gcs/airs.hpp>
#include <gcs/common.hpp>
#include <gcs/constellation.hpp>
#include <gcs/fibersim.hpp>
#include <gcs/io.hpp>
#include <gcs/nli.hpp>
#include <gcs/optimizer.hpp>
#include <gcs/version.hpp>

namespace gcs::cli {

// ---------------------------------------------------------------------------
// Run plumbing: global options, sweeps, manifests
// ---------------------------------------------------------------------------

struct GlobalOptions {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out_dir = ".";
    bool seed_given = false; // true when --seed was passed explicitly
};

/// Join a file name onto the run directory unless it is already absolute,
/// creating the run directory on first use.
inline std::string under_dir(const std::string& dir, const std::string& name) {
    if (name.empty())
        throw std::invalid_argument("output file name must not be empty");
    if (name.front() == '/')
        return name;
    if (dir.empty() || dir == ".")
        return name;
    std::filesystem::create_directories(dir);
    return dir.back() == '/' ? dir + name : dir + "/" + name;
}

/// Inclusive numeric sweep written as "lo:hi:step".
struct Sweep {
    double lo = 0.0;
    double hi = 0.0;
    double step = 1.0;

    static Sweep parse(const std::string& text) {
        Sweep s;
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::invalid_argument("sweep '" + text + "': expected lo:hi:step");
        try {
            std::size_t p1 = 0, p2 = 0, p3 = 0;
            const std::string a = text.substr(0, c1);
            const std::string b = text.substr(c1 + 1, c2 - c1 - 1);
            const std::string c = text.substr(c2 + 1);
            s.lo = std::stod(a, &p1);
            s.hi = std::stod(b, &p2);
            s.step = std::stod(c, &p3);
            if (p1 != a.size() || p2 != b.size() || p3 != c.size())
                throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw std::invalid_argument("sweep '" + text + "': expected lo:hi:step");
        }
        if (!(s.step > 0.0) || s.hi < s.lo)
            throw std::invalid_argument("sweep '" + text +
                                        "': need step > 0 and hi >= lo");
        return s;
    }

    std::vector<double> points() const {
        std::vector<double> out;
        const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
        out.reserve(static_cast<std::size_t>(n) + 1);
        for (int i = 0; i <= n; ++i)
            out.push_back(lo + step * i);
        return out;
    }
};

/// Wall-clock stopwatch for the manifest.
class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

/// Every command writes one of these next to its outputs; an identical
/// manifest under the same library version reproduces the outputs bit for
/// bit.
inline void write_manifest(const GlobalOptions& g, const std::string& command,
                           const nlohmann::json& resolved_config,
                           const std::vector<std::string>& outputs,
                           double wall_seconds) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = resolved_config;
    j["seeds"] = {{"global", g.seed}};
    j["library_version"] = std::string(version);
    j["outputs"] = outputs;
    j["wall_seconds"] = wall_seconds;
    write_text_atomic(under_dir(g.out_dir, command + "-manifest.json"),
                      j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Link / transmitter resolution (flag > config file > default)
// ---------------------------------------------------------------------------

/// CLI-level overrides for the most commonly swept link/transmitter knobs.
struct LinkTxOverrides {
    std::optional<double> launch_power_dbm;
    std::optional<double> span_km;
    std::optional<int> n_spans;
    std::optional<int> steps_per_span;
    std::optional<long long> n_symbols;
    std::optional<int> dac_bits;
};

inline FiberLink resolve_link(const std::string& link_path,
                              const LinkTxOverrides& ov) {
    FiberLink link;
    if (!link_path.empty()) {
        KeyValueConfig cfg = KeyValueConfig::load(link_path);
        link = link_from_config(cfg);
        cfg.ensure_all_used();
    }
    if (ov.span_km)
        link.span_length_km = *ov.span_km;
    if (ov.n_spans)
        link.n_spans = *ov.n_spans;
    if (ov.steps_per_span)
        link.steps_per_span = *ov.steps_per_span;
    link.validate();
    return link;
}

inline TxConfig resolve_tx(const std::string& tx_path, const LinkTxOverrides& ov,
                           const GlobalOptions& g) {
    TxConfig tx;
    bool file_seed = false;
    if (!tx_path.empty()) {
        KeyValueConfig cfg = KeyValueConfig::load(tx_path);
        file_seed = cfg.has("seed");
        tx = tx_from_config(cfg);
        cfg.ensure_all_used();
    }
    // The global seed is the default data/noise seed; a seed key in the
    // transmitter file is more specific, and an explicit --seed flag beats
    // both.
    if (!file_seed || g.seed_given)
        tx.seed = g.seed;
    if (ov.launch_power_dbm)
        tx.launch_power_dbm = *ov.launch_power_dbm;
    if (ov.n_symbols)
        tx.n_symbols = *ov.n_symbols;
    if (ov.dac_bits)
        tx.dac_bits = *ov.dac_bits;
    tx.validate();
    return tx;
}

inline nlohmann::json link_json(const FiberLink& link) {
    return {{"span_length_km", link.span_length_km},
            {"n_spans", link.n_spans},
            {"alpha_db_per_km", link.alpha_db_per_km},
            {"dispersion_ps_nm_km", link.dispersion_ps_nm_km},
            {"gamma_per_w_km", link.gamma_per_w_km},
            {"steps_per_span", link.steps_per_span},
            {"amplifier", link.amplifier},
            {"noise_figure_db", link.noise_figure_db},
            {"ase", link.ase},
            {"center_frequency_thz", link.center_frequency_thz}};
}

inline nlohmann::json tx_json(const TxConfig& tx) {
    return {{"symbol_rate_gbd", tx.symbol_rate_gbd},
            {"rolloff", tx.rolloff},
            {"samples_per_symbol", tx.samples_per_symbol},
            {"n_channels", tx.n_channels},
            {"channel_spacing_ghz", tx.channel_spacing_ghz},
            {"launch_power_dbm", tx.launch_power_dbm},
            {"dac_bits", tx.dac_bits},
            {"n_symbols", tx.n_symbols},
            {"seed", tx.seed}};
}

// ---------------------------------------------------------------------------
// Shared numeric helpers
// ---------------------------------------------------------------------------

/// Smallest channel SNR whose quadrature rate reaches the target when an
/// extra noise floor (e.g. quantization distortion) rides on top of the
/// channel noise. Bisection to 0.01 dB; returns the bracket endpoint known
/// to reach the target.
inline double required_snr_with_floor(const LabeledConstellation& c, double target_bit,
                                      double sigma2_floor, int quad_j,
                                      double lo_db = -5.0, double hi_db = 40.0) {
    if (!(target_bit > 0.0) || target_bit >= static_cast<double>(c.bits))
        throw std::invalid_argument("required snr: target must be inside (0, bits)");
    if (sigma2_floor < 0.0)
        throw std::invalid_argument("required snr: noise floor must be >= 0");
    const double power = c.mean_energy();
    const auto rate = [&](double snr_db) {
        const double sigma2 =
            power / ((c.dims / 2.0) * db_to_lin(snr_db)) + sigma2_floor;
        return gmi_gh(c, GaussianLaw{sigma2}, quad_j).value;
    };
    double lo = lo_db, hi = hi_db;
    if (rate(hi) < target_bit)
        throw std::runtime_error("required snr: target " + std::to_string(target_bit) +
                                 " bit not achievable below " + std::to_string(hi_db) +
                                 " dB with the given noise floor");
    if (rate(lo) >= target_bit)
        return lo;
    while (hi - lo > 0.01) {
        const double mid = 0.5 * (lo + hi);
        (rate(mid) >= target_bit ? hi : lo) = mid;
    }
    return hi;
}

/// Random strictly positive first-orthant generator, expanded to a full
/// orthant-symmetric constellation.
inline LabeledConstellation random_orthant_format(int dims, int total_bits,
                                                  std::uint64_t seed, double power) {
    if (dims < 2 || dims % 2 != 0)
        throw std::invalid_argument("random-orthant: dims must be even and >= 2");
    if (total_bits < dims || total_bits - dims > 20)
        throw std::invalid_argument(
            "random-orthant: bits must be >= dims (sign bits) and leave at most "
            "20 generator bits");
    Rng rng(seed);
    FirstOrthantSet s1;
    s1.dims = dims;
    s1.bits = total_bits - dims;
    const int k = 1 << s1.bits;
    for (int i = 0; i < k; ++i) {
        for (int d = 0; d < dims; ++d)
            s1.pts.push_back(std::fabs(rng.normal()) + 0.1);
        s1.labels.push_back(static_cast<std::uint32_t>(i));
    }
    return normalize(expand_orthant(s1), power);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string kind;     // qam | psk | pm-product | sp-qam | os-expand | random-orthant
    int bits = 4;         // label bits of the construction
    int dims = 4;         // random-orthant only
    double power = -1.0;  // target mean energy; < 0 keeps the construction default
    std::string in_path;  // pm-product (optional base) and os-expand (generator)
    std::string out_name; // defaults to "<kind>.txt"
};

inline LabeledConstellation build_generate(const GenerateArgs& a,
                                           const GlobalOptions& g) {
    LabeledConstellation c;
    if (a.kind == "qam") {
        c = make_qam(a.bits);
    } else if (a.kind == "psk") {
        c = make_psk(a.bits);
    } else if (a.kind == "pm-product") {
        if (!a.in_path.empty()) {
            const LabeledConstellation base = read_constellation(a.in_path);
            c = cartesian_product(base, base);
        } else {
            if (a.bits % 2 != 0)
                throw std::invalid_argument(
                    "pm-product: bits must be even (half per polarization), or "
                    "pass --in with a 2D base format");
            const LabeledConstellation base = make_qam(a.bits / 2);
            c = cartesian_product(base, base);
        }
    } else if (a.kind == "sp-qam") {
        c = make_sp_qam(a.bits);
    } else if (a.kind == "os-expand") {
        if (a.in_path.empty())
            throw std::invalid_argument("os-expand: --in generator file required");
        const LabeledConstellation gen = read_constellation(a.in_path);
        FirstOrthantSet s1;
        s1.dims = gen.dims;
        s1.bits = gen.bits;
        s1.pts = gen.pts;
        s1.labels = gen.labels;
        c = expand_orthant(s1);
    } else if (a.kind == "random-orthant") {
        const double p = a.power > 0.0 ? a.power : a.dims / 2.0;
        c = random_orthant_format(a.dims, a.bits, g.seed, p);
    } else {
        throw std::invalid_argument(
            "generate: kind must be one of qam, psk, pm-product, sp-qam, "
            "os-expand, random-orthant");
    }
    if (a.power > 0.0)
        c = normalize(std::move(c), a.power);
    return c;
}

inline int cmd_generate(const GlobalOptions& g, const GenerateArgs& a,
                        std::ostream& info) {
    Stopwatch clock;
    const LabeledConstellation c = build_generate(a, g);
    const std::string out_name = a.out_name.empty() ? a.kind + ".txt" : a.out_name;
    const std::string out_path = under_dir(g.out_dir, out_name);
    write_constellation(c, out_path);

    const ShapingMetrics m = metrics(c);
    info << "wrote " << out_path << ": " << c.order() << " points, " << c.dims
         << "D, " << c.bits << " bit\n";
    info << "papr = " << m.papr << "\n";
    info << "phi2 =";
    for (double v : m.phi2)
        info << ' ' << v;
    info << "\nphi4 = " << m.phi4 << "\npsi = " << m.psi
         << "\ndmin2 = " << m.dmin2 << "\n";

    nlohmann::json cfg{{"kind", a.kind},   {"bits", a.bits},
                       {"dims", a.dims},   {"power", a.power},
                       {"in", a.in_path},  {"out", out_name}};
    write_manifest(g, "generate", cfg, {out_name}, clock.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string in_path;
    std::vector<double> snr_db; // explicit points, kept in the given order
    std::string snr_sweep;      // "lo:hi:step", appended after explicit points
    std::string method = "gh";  // gh | mc | both
    int quad_j = 10;
    long long mc_samples = 1000000;
    bool with_mi = false; // adds a Monte-Carlo symbol-wise rate column
    std::string out_name = "evaluate.csv";
};

inline int cmd_evaluate(const GlobalOptions& g, const EvaluateArgs& a,
                        std::ostream& info) {
    Stopwatch clock;
    if (a.method != "gh" && a.method != "mc" && a.method != "both")
        throw std::invalid_argument("evaluate: method must be gh, mc or both");
    const LabeledConstellation c = read_constellation(a.in_path);

    std::vector<double> snrs = a.snr_db;
    if (!a.snr_sweep.empty()) {
        const auto pts = Sweep::parse(a.snr_sweep).points();
        snrs.insert(snrs.end(), pts.begin(), pts.end());
    }
    if (snrs.empty())
        throw std::invalid_argument("evaluate: need --snr-db or --snr-sweep");

    const bool gh = a.method != "mc";
    const bool mc = a.method != "gh";
    std::vector<std::string> header{"snr_db"};
    if (gh)
        header.push_back("gmi_gh_bit");
    if (mc) {
        header.push_back("gmi_mc_bit");
        header.push_back("gmi_mc_stderr_bit");
    }
    if (a.with_mi) {
        header.push_back("mi_mc_bit");
        header.push_back("mi_mc_stderr_bit");
    }
    CsvTable table(header);
    for (std::size_t i = 0; i < snrs.size(); ++i) {
        const GaussianLaw law = law_from_snr_db(c, snrs[i]);
        std::vector<double> row{snrs[i]};
        if (gh)
            row.push_back(gmi_gh(c, law, a.quad_j).value);
        if (mc) {
            const GmiEstimate e =
                gmi_mc(c, law, a.mc_samples, child_seed(g.seed, i), g.threads);
            row.push_back(e.value);
            row.push_back(e.std_error);
        }
        if (a.with_mi) {
            const GmiEstimate e =
                mi_mc(c, law, a.mc_samples, child_seed(g.seed, i) ^ 0x4d49ULL,
                      g.threads);
            row.push_back(e.value);
            row.push_back(e.std_error);
        }
        table.add_row(row);
    }
    const std::string out_path = under_dir(g.out_dir, a.out_name);
    table.save(out_path);
    info << "wrote " << out_path << " (" << table.rows() << " rows)\n";

    nlohmann::json cfg{{"in", a.in_path},        {"snr_db", snrs},
                       {"method", a.method},     {"quad_j", a.quad_j},
                       {"mc_samples", a.mc_samples}, {"with_mi", a.with_mi},
                       {"out", a.out_name},      {"threads", g.threads}};
    write_manifest(g, "evaluate", cfg, {a.out_name}, clock.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

struct OptimizeArgs {
    std::string objective = "awgn"; // awgn | nli
    std::string constraint = "none"; // none | os
    double snr_db = 10.0;            // awgn objective operating point
    std::string init = "qam";        // qam | random-orthant | a constellation file
    int bits = 4;
    int dims = 2;
    double power = -1.0; // < 0 -> dims / 2
    std::string surrogate_path; // required for nli
    std::string link_path;      // nli noise accounting
    std::string tx_path;
    // optimizer knobs
    double learning_rate = 0.01;
    int max_iterations = 2000;
    int restarts = 5;
    double jitter = 0.05;
    int quad_j = 10;
    double tolerance_bit = 1e-4;
    bool finite_difference = false;
    std::string out_name = "optimized.txt";
    std::string trace_name = "trace.csv";
};

inline int cmd_optimize(const GlobalOptions& g, const OptimizeArgs& a,
                        std::ostream& info) {
    Stopwatch clock;
    ShapingProblem pb;
    if (a.objective == "awgn")
        pb.objective = ShapingObjective::awgn_gmi;
    else if (a.objective == "nli")
        pb.objective = ShapingObjective::nli_gmi;
    else
        throw std::invalid_argument("optimize: objective must be awgn or nli");
    if (a.constraint == "none")
        pb.constraint = ShapingConstraint::none;
    else if (a.constraint == "os")
        pb.constraint = ShapingConstraint::orthant_symmetry;
    else
        throw std::invalid_argument("optimize: constraint must be none or os");

    LabeledConstellation init;
    const double power = a.power > 0.0 ? a.power : a.dims / 2.0;
    if (a.init == "qam") {
        if (a.dims != 2)
            throw std::invalid_argument(
                "optimize: init qam is 2D; use a file or random-orthant for 4D+");
        init = normalize(make_qam(a.bits), power);
    } else if (a.init == "random-orthant") {
        init = random_orthant_format(a.dims, a.bits, g.seed, power);
    } else {
        init = normalize(read_constellation(a.init), power);
    }
    pb.dims = init.dims;
    pb.bits = init.bits;
    pb.power = power;
    pb.snr_db = a.snr_db;

    if (pb.objective == ShapingObjective::nli_gmi) {
        if (a.surrogate_path.empty())
            throw std::invalid_argument(
                "optimize: nli objective requires --surrogate from "
                "calibrate-surrogate");
        pb.surrogate = EtaSurrogate::load(a.surrogate_path);
        pb.link = resolve_link(a.link_path, {});
        pb.tx = resolve_tx(a.tx_path, {}, g);
        require_fresh(pb.surrogate, pb.link, pb.tx);
    }

    OptimizerConfig cfg;
    cfg.learning_rate = a.learning_rate;
    cfg.max_iterations = a.max_iterations;
    cfg.restarts = a.restarts;
    cfg.jitter = a.jitter;
    cfg.quad_j = a.quad_j;
    cfg.tolerance_bit = a.tolerance_bit;
    cfg.gradient = a.finite_difference ? GradientMethod::central_difference
                                       : GradientMethod::analytic;
    cfg.seed = g.seed;
    cfg.threads = g.threads;

    const ShapingResult r = optimize(pb, init, cfg);

    const std::string out_path = under_dir(g.out_dir, a.out_name);
    const std::string trace_path = under_dir(g.out_dir, a.trace_name);
    write_constellation(r.constellation, out_path);
    write_text_atomic(trace_path, r.trace.csv());
    info << "objective: initial " << r.trace.initial_objective << " -> best "
         << r.trace.best_objective << " bit (restart " << r.trace.best_restart
         << ")\n";
    for (const auto& note : r.trace.notes)
        info << "note: " << note << "\n";
    info << "wrote " << out_path << " and " << trace_path << "\n";

    nlohmann::json cfg_json{{"objective", a.objective},
                            {"constraint", a.constraint},
                            {"snr_db", a.snr_db},
                            {"init", a.init},
                            {"bits", pb.bits},
                            {"dims", pb.dims},
                            {"power", power},
                            {"surrogate", a.surrogate_path},
                            {"link", link_json(pb.link)},
                            {"tx", tx_json(pb.tx)},
                            {"learning_rate", cfg.learning_rate},
                            {"max_iterations", cfg.max_iterations},
                            {"restarts", cfg.restarts},
                            {"jitter", cfg.jitter},
                            {"quad_j", cfg.quad_j},
                            {"tolerance_bit", cfg.tolerance_bit},
                            {"gradient", a.finite_difference ? "central_difference"
                                                             : "analytic"},
                            {"threads", g.threads},
                            {"out", a.out_name},
                            {"trace", a.trace_name}};
    write_manifest(g, "optimize", cfg_json, {a.out_name, a.trace_name},
                   clock.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string in_path;
    std::string link_path;
    std::string tx_path;
    std::string power_sweep;    // dBm, "lo:hi:step"
    std::string distance_sweep; // spans, "lo:hi:step" (integers)
    LinkTxOverrides overrides;
    std::string out_name = "simulate.csv";
};

inline int cmd_simulate(const GlobalOptions& g, const SimulateArgs& a,
                        std::ostream& info) {
    Stopwatch clock;
    if (!a.power_sweep.empty() && !a.distance_sweep.empty())
        throw std::invalid_argument(
            "simulate: choose one of --power-sweep and --distance-sweep");
    const LabeledConstellation c = read_constellation(a.in_path);
    const FiberLink link = resolve_link(a.link_path, a.overrides);
    const TxConfig tx = resolve_tx(a.tx_path, a.overrides, g);

    std::vector<double> sweep_values;
    std::string sweep_col;
    if (!a.power_sweep.empty()) {
        sweep_values = Sweep::parse(a.power_sweep).points();
        sweep_col = "power_dbm";
    } else if (!a.distance_sweep.empty()) {
        const auto pts = Sweep::parse(a.distance_sweep).points();
        for (double v : pts) {
            if (std::fabs(v - std::llround(v)) > 1e-9 || v < 0.0)
                throw std::invalid_argument(
                    "simulate: distance sweep counts spans and must be "
                    "non-negative integers");
            sweep_values.push_back(v);
        }
        sweep_col = "distance_km";
    } else {
        sweep_values = {tx.launch_power_dbm};
        sweep_col = "power_dbm";
    }

    // Worker pool over sweep points; rows land in sweep order regardless of
    // completion order. Each point reuses the same data/noise seed so sweep
    // rows differ only in the swept knob.
    struct Row {
        double x = 0.0, snr = 0.0, gmi = 0.0;
    };
    std::vector<Row> rows(sweep_values.size());
    std::exception_ptr first_error;
    std::mutex error_mu;
    parallel_for(sweep_values.size(), g.threads, [&](std::size_t i) {
        try {
            FiberLink l = link;
            TxConfig t = tx;
            double x = sweep_values[i];
            if (sweep_col == "power_dbm")
                t.launch_power_dbm = x;
            else {
                l.n_spans = static_cast<int>(std::llround(x));
                x = l.total_length_km();
            }
            const SimResult res = simulate(c, l, t);
            rows[i] = {x, res.effective_snr_db, res.gmi.value};
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error)
                first_error = std::current_exception();
        }
    });
    if (first_error)
        std::rethrow_exception(first_error);

    CsvTable table({sweep_col, "effective_snr_db", "gmi_bit_per_4d"});
    for (const Row& r : rows)
        table.add_row({r.x, r.snr, r.gmi});
    const std::string out_path = under_dir(g.out_dir, a.out_name);
    table.save(out_path);
    info << "wrote " << out_path << " (" << table.rows() << " rows)\n";

    nlohmann::json cfg{{"in", a.in_path},
                       {"link", link_json(link)},
                       {"tx", tx_json(tx)},
                       {"power_sweep", a.power_sweep},
                       {"distance_sweep", a.distance_sweep},
                       {"threads", g.threads},
                       {"out", a.out_name}};
    write_manifest(g, "simulate", cfg, {a.out_name}, clock.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// quantize-sweep
// ---------------------------------------------------------------------------

struct QuantizeSweepArgs {
    std::vector<std::string> in_paths;
    double target_gmi = 0.0;
    int bits_lo = 1;
    int bits_hi = 8;
    std::string tx_path;
    LinkTxOverrides overrides;
    int quad_j = 10;
    std::string out_name = "quantize-sweep.csv";
};

/// Back-to-back transceiver distortion of the DAC at the given resolution,
/// reported as residual variance per complex dimension (0 for a transparent
/// converter).
inline double dac_distortion_sigma2(const LabeledConstellation& c, const TxConfig& tx,
                                    int dac_bits) {
    TxConfig t = tx;
    t.dac_bits = dac_bits;
    FiberLink b2b;
    b2b.n_spans = 0;
    b2b.amplifier = false;
    const ModulatedSignal sig = modulate(c, t);
    const SimResult res = receive(sig.wave, b2b, t, c, /*want_gmi=*/false);
    return res.noise_sigma2;
}

inline int cmd_quantize_sweep(const GlobalOptions& g, const QuantizeSweepArgs& a,
                              std::ostream& info) {
    Stopwatch clock;
    if (a.in_paths.empty())
        throw std::invalid_argument("quantize-sweep: need at least one --in format");
    if (!(a.target_gmi > 0.0))
        throw std::invalid_argument("quantize-sweep: --target-gmi must be positive");
    if (a.bits_lo < 1 || a.bits_hi < a.bits_lo || a.bits_hi > 24)
        throw std::invalid_argument("quantize-sweep: bits range must satisfy "
                                    "1 <= lo <= hi <= 24");

    const TxConfig tx = resolve_tx(a.tx_path, a.overrides, g);
    CsvTable table({"format", "dac_bits", "required_snr_db"});
    for (std::size_t f = 0; f < a.in_paths.size(); ++f) {
        const LabeledConstellation c = read_constellation(a.in_paths[f]);
        // The received cloud is scaled to unit mean energy by the equalizer,
        // so the measured distortion floor applies to the unit-power format.
        const LabeledConstellation cn = normalize(c, 1.0);
        for (int b = a.bits_lo; b <= a.bits_hi; ++b) {
            const double floor2 = dac_distortion_sigma2(cn, tx, b);
            double snr;
            try {
                snr = required_snr_with_floor(cn, a.target_gmi, floor2, a.quad_j);
            } catch (const std::runtime_error&) {
                throw std::runtime_error(
                    "quantize-sweep: target " + std::to_string(a.target_gmi) +
                    " bit not achievable for format " + a.in_paths[f] + " at " +
                    std::to_string(b) + " DAC bits");
            }
            table.add_row({static_cast<double>(f), static_cast<double>(b), snr});
        }
    }
    const std::string out_path = under_dir(g.out_dir, a.out_name);
    table.save(out_path);
    info << "wrote " << out_path << " (" << table.rows() << " rows)\n";

    nlohmann::json cfg{{"in", a.in_paths},     {"target_gmi", a.target_gmi},
                       {"bits_lo", a.bits_lo}, {"bits_hi", a.bits_hi},
                       {"tx", tx_json(tx)},    {"quad_j", a.quad_j},
                       {"out", a.out_name}};
    write_manifest(g, "quantize-sweep", cfg, {a.out_name}, clock.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// fit-eta
// ---------------------------------------------------------------------------

struct FitEtaArgs {
    std::string in_path;
    std::string link_path;
    std::string tx_path;
    std::string power_sweep = "-2:8:1"; // dBm
    LinkTxOverrides overrides;
    std::string out_name = "fit-eta.csv";
    std::string result_name = "eta.txt";
};

inline int cmd_fit_eta(const GlobalOptions& g, const FitEtaArgs& a,
                       std::ostream& info) {
    Stopwatch clock;
    const LabeledConstellation c = read_constellation(a.in_path);
    const FiberLink link = resolve_link(a.link_path, a.overrides);
    const TxConfig tx = resolve_tx(a.tx_path, a.overrides, g);
    const std::vector<double> powers = Sweep::parse(a.power_sweep).points();

    std::vector<std::pair<double, double>> sweep(powers.size());
    std::exception_ptr first_error;
    std::mutex error_mu;
    parallel_for(powers.size(), g.threads, [&](std::size_t i) {
        try {
            TxConfig t = tx;
            t.launch_power_dbm = powers[i];
            sweep[i] = measure_nli_point(c, link, t);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error)
                first_error = std::current_exception();
        }
    });
    if (first_error)
        std::rethrow_exception(first_error);

    const EtaFit fit = fit_eta(sweep);
    CsvTable table({"power_dbm", "power_w", "sigma2_nli_w"});
    for (std::size_t i = 0; i < powers.size(); ++i)
        table.add_row({powers[i], sweep[i].first, sweep[i].second});
    const std::string out_path = under_dir(g.out_dir, a.out_name);
    const std::string result_path = under_dir(g.out_dir, a.result_name);
    table.save(out_path);
    {
        std::ostringstream os;
        os.precision(17);
        os << "eta_per_w2 = " << fit.eta << "\nr2 = " << fit.r2
           << "\nn_points = " << powers.size() << '\n';
        write_text_atomic(result_path, os.str());
    }
    info << "eta = " << fit.eta << " 1/W^2, r2 = " << fit.r2 << "\n";
    info << "wrote " << out_path << " and " << result_path << "\n";

    nlohmann::json cfg{{"in", a.in_path},
                       {"link", link_json(link)},
                       {"tx", tx_json(tx)},
                       {"power_sweep", a.power_sweep},
                       {"threads", g.threads},
                       {"out", a.out_name},
                       {"result", a.result_name}};
    write_manifest(g, "fit-eta", cfg, {a.out_name, a.result_name}, clock.seconds());
    return 0;
}

// ---------------------------------------------------------------------------
// calibrate-surrogate
// ---------------------------------------------------------------------------

struct CalibrateSurrogateArgs {
    std::vector<std::string> in_paths; // >= 4 formats
    std::string link_path;
    std::string tx_path;
    std::string power_sweep = "0:6:2"; // dBm measurement powers
    LinkTxOverrides overrides;
    std::string out_name = "surrogate.txt";
};

inline int cmd_calibrate_surrogate(const GlobalOptions& g,
                                   const CalibrateSurrogateArgs& a,
                                   std::ostream& info) {
    Stopwatch clock;
    const FiberLink link = resolve_link(a.link_path, a.overrides);
    const TxConfig tx = resolve_tx(a.tx_path, a.overrides, g);
    std::vector<LabeledConstellation> formats;
    formats.reserve(a.in_paths.size());
    for (const auto& p : a.in_paths)
        formats.push_back(read_constellation(p));
    const std::vector<double> powers = Sweep::parse(a.power_sweep).points();

    const EtaSurrogate s = calibrate_surrogate(formats, link, tx, powers);
    const std::string out_path = under_dir(g.out_dir, a.out_name);
    s.save(out_path);
    info << "surrogate: c0 = " << s.c0 << ", c1 = " << s.c1 << ", c2 = " << s.c2
         << ", design rank " << s.design_rank << ", fit r2 = " << s.fit_r2 << "\n";
    info << "wrote " << out_path << "\n";

    nlohmann::json cfg{{"in", a.in_paths},
                       {"link", link_json(link)},
                       {"tx", tx_json(tx)},
                       {"power_sweep", a.power_sweep},
                       {"out", a.out_name}};
    write_manifest(g, "calibrate-surrogate", cfg, {a.out_name}, clock.seconds());
    return 0;
}

} // namespace gcs::cli

#endif
