// Command-line front end: maps flags onto the subcommand argument structs
// and dispatches. All real work lives in the library so it stays testable
// in-process.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <gcs/cli.hpp>

namespace {

gcs::cli::LinkTxOverrides* add_override_flags(CLI::App* cmd,
                                              gcs::cli::LinkTxOverrides& ov,
                                              bool with_link = true) {
    cmd->add_option("--launch-power-dbm", ov.launch_power_dbm,
                    "Per-channel launch power override (dBm)");
    cmd->add_option("--n-symbols", ov.n_symbols, "Symbols per run override");
    cmd->add_option("--dac-bits", ov.dac_bits,
                    "Transmitter DAC resolution override (0 disables)");
    if (with_link) {
        cmd->add_option("--span-km", ov.span_km, "Span length override (km)");
        cmd->add_option("--n-spans", ov.n_spans, "Span count override");
        cmd->add_option("--steps-per-span", ov.steps_per_span,
                        "Split-step count override");
    }
    return &ov;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Design, optimize and evaluate multi-dimensional "
                 "geometrically-shaped modulation formats"};
    app.require_subcommand(1);

    gcs::cli::GlobalOptions g;
    auto* seed_opt =
        app.add_option("--seed", g.seed, "Run seed for all randomized steps")
            ->capture_default_str();
    app.add_option("--threads", g.threads,
                   "Worker threads (results are thread-count invariant)")
        ->envname("GCS_THREADS")
        ->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Directory for outputs and manifest")
        ->capture_default_str();

    // generate ---------------------------------------------------------------
    gcs::cli::GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Construct a labeled format");
    c_gen->add_option("kind", gen.kind,
                      "qam | psk | pm-product | sp-qam | os-expand | random-orthant")
        ->required();
    c_gen->add_option("--bits", gen.bits, "Label bits of the construction")
        ->capture_default_str();
    c_gen->add_option("--dims", gen.dims, "Dimensions (random-orthant)")
        ->capture_default_str();
    c_gen->add_option("--power", gen.power,
                      "Target mean symbol energy (< 0 keeps the default)");
    c_gen->add_option("--in", gen.in_path,
                      "Input file (pm-product base, os-expand generator)");
    c_gen->add_option("--out", gen.out_name, "Output file name");

    // evaluate ---------------------------------------------------------------
    gcs::cli::EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Tabulate achievable rates");
    c_ev->add_option("--in", ev.in_path, "Constellation file")->required();
    c_ev->add_option("--snr-db", ev.snr_db, "Explicit SNR points (dB)");
    c_ev->add_option("--snr-sweep", ev.snr_sweep, "SNR sweep lo:hi:step (dB)");
    c_ev->add_option("--method", ev.method, "gh | mc | both")
        ->capture_default_str();
    c_ev->add_option("--quad-j", ev.quad_j, "Quadrature nodes per dimension")
        ->capture_default_str();
    c_ev->add_option("--mc-samples", ev.mc_samples, "Monte-Carlo sample count")
        ->capture_default_str();
    c_ev->add_flag("--with-mi", ev.with_mi,
                   "Also tabulate the symbol-wise rate (Monte-Carlo)");
    c_ev->add_option("--out", ev.out_name, "Output CSV name")
        ->capture_default_str();

    // optimize ---------------------------------------------------------------
    gcs::cli::OptimizeArgs op;
    auto* c_op = app.add_subcommand("optimize", "Shape a format by gradient ascent");
    c_op->add_option("--objective", op.objective, "awgn | nli")
        ->capture_default_str();
    c_op->add_option("--constraint", op.constraint, "none | os")
        ->capture_default_str();
    c_op->add_option("--snr-db", op.snr_db, "Operating SNR (awgn objective)")
        ->capture_default_str();
    c_op->add_option("--init", op.init,
                     "qam | random-orthant | a constellation file")
        ->capture_default_str();
    c_op->add_option("--bits", op.bits, "Label bits (factory inits)")
        ->capture_default_str();
    c_op->add_option("--dims", op.dims, "Dimensions (factory inits)")
        ->capture_default_str();
    c_op->add_option("--power", op.power, "Mean-energy constraint (< 0 -> dims/2)");
    c_op->add_option("--surrogate", op.surrogate_path,
                     "Calibrated surrogate file (nli objective)");
    c_op->add_option("--link", op.link_path, "Link config file (nli objective)");
    c_op->add_option("--tx", op.tx_path, "Transmitter config file (nli objective)");
    c_op->add_option("--lr", op.learning_rate, "Ascent step size")
        ->capture_default_str();
    c_op->add_option("--iters", op.max_iterations, "Iteration cap per restart")
        ->capture_default_str();
    c_op->add_option("--restarts", op.restarts, "Restart count")
        ->capture_default_str();
    c_op->add_option("--jitter", op.jitter, "Restart jitter, fraction of RMS")
        ->capture_default_str();
    c_op->add_option("--quad-j", op.quad_j, "Quadrature nodes per dimension")
        ->capture_default_str();
    c_op->add_option("--tol-bit", op.tolerance_bit, "Convergence window tolerance")
        ->capture_default_str();
    c_op->add_flag("--fd", op.finite_difference,
                   "Use central differences instead of the analytic gradient");
    c_op->add_option("--out", op.out_name, "Optimized constellation file name")
        ->capture_default_str();
    c_op->add_option("--trace", op.trace_name, "Trace CSV name")
        ->capture_default_str();

    // simulate ---------------------------------------------------------------
    gcs::cli::SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Run the fiber simulator");
    c_sim->add_option("--in", sim.in_path, "4D constellation file")->required();
    c_sim->add_option("--link", sim.link_path, "Link config file");
    c_sim->add_option("--tx", sim.tx_path, "Transmitter config file");
    c_sim->add_option("--power-sweep", sim.power_sweep,
                      "Launch power sweep lo:hi:step (dBm)");
    c_sim->add_option("--distance-sweep", sim.distance_sweep,
                      "Span count sweep lo:hi:step");
    add_override_flags(c_sim, sim.overrides);
    c_sim->add_option("--out", sim.out_name, "Output CSV name")
        ->capture_default_str();

    // quantize-sweep ----------------------------------------------------------
    gcs::cli::QuantizeSweepArgs qs;
    auto* c_qs = app.add_subcommand(
        "quantize-sweep", "Required SNR at a rate target vs DAC resolution");
    c_qs->add_option("--in", qs.in_paths, "Constellation file(s)")->required();
    c_qs->add_option("--target-gmi", qs.target_gmi, "Rate target (bit/symbol)")
        ->required();
    c_qs->add_option("--bits-lo", qs.bits_lo, "Lowest DAC resolution")
        ->capture_default_str();
    c_qs->add_option("--bits-hi", qs.bits_hi, "Highest DAC resolution")
        ->capture_default_str();
    c_qs->add_option("--tx", qs.tx_path, "Transmitter config file");
    add_override_flags(c_qs, qs.overrides, /*with_link=*/false);
    c_qs->add_option("--quad-j", qs.quad_j, "Quadrature nodes per dimension")
        ->capture_default_str();
    c_qs->add_option("--out", qs.out_name, "Output CSV name")
        ->capture_default_str();

    // fit-eta ----------------------------------------------------------------
    gcs::cli::FitEtaArgs fe;
    auto* c_fe = app.add_subcommand(
        "fit-eta", "Fit the cubic nonlinear-interference law from a power sweep");
    c_fe->add_option("--in", fe.in_path, "4D constellation file")->required();
    c_fe->add_option("--link", fe.link_path, "Link config file");
    c_fe->add_option("--tx", fe.tx_path, "Transmitter config file");
    c_fe->add_option("--power-sweep", fe.power_sweep, "Launch powers lo:hi:step (dBm)")
        ->capture_default_str();
    add_override_flags(c_fe, fe.overrides);
    c_fe->add_option("--out", fe.out_name, "Sweep CSV name")->capture_default_str();
    c_fe->add_option("--result", fe.result_name, "Fit result file name")
        ->capture_default_str();

    // calibrate-surrogate ------------------------------------------------------
    gcs::cli::CalibrateSurrogateArgs cs;
    auto* c_cs = app.add_subcommand(
        "calibrate-surrogate",
        "Fit the moment-based nonlinearity surrogate over reference formats");
    c_cs->add_option("--in", cs.in_paths, "Constellation files (>= 4)")->required();
    c_cs->add_option("--link", cs.link_path, "Link config file");
    c_cs->add_option("--tx", cs.tx_path, "Transmitter config file");
    c_cs->add_option("--power-sweep", cs.power_sweep,
                     "Measurement powers lo:hi:step (dBm)")
        ->capture_default_str();
    add_override_flags(c_cs, cs.overrides);
    c_cs->add_option("--out", cs.out_name, "Surrogate file name")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    g.seed_given = seed_opt->count() > 0;

    try {
        if (c_gen->parsed())
            return gcs::cli::cmd_generate(g, gen, std::cout);
        if (c_ev->parsed())
            return gcs::cli::cmd_evaluate(g, ev, std::cout);
        if (c_op->parsed())
            return gcs::cli::cmd_optimize(g, op, std::cout);
        if (c_sim->parsed())
            return gcs::cli::cmd_simulate(g, sim, std::cout);
        if (c_qs->parsed())
            return gcs::cli::cmd_quantize_sweep(g, qs, std::cout);
        if (c_fe->parsed())
            return gcs::cli::cmd_fit_eta(g, fe, std::cout);
        if (c_cs->parsed())
            return gcs::cli::cmd_calibrate_surrogate(g, cs, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
