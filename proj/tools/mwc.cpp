// mwc: correlation analysis of time-tagged interference events.
//
// Subcommands: simulate, correlate, fit, reconstruct, spectrum, attenuation.
// Exit codes: 0 ok, 2 usage error, 3 format error, 4 numerical failure,
// 5 cost guard tripped, 1 anything else.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mwc/config.hpp"
#include "mwc/io.hpp"
#include "mwc/reconstruct.hpp"
#include "mwc/spectrum.hpp"
#include "mwc/theory.hpp"

namespace {

using namespace mwc;

struct Common {
    std::string config_path;
    int threads = 0;  // 0 = all cores
};

// "freq_hz:phi_rad[:phase_rad]" -> component
PerturbationComponent parse_component(const std::string& text) {
    PerturbationComponent c;
    std::istringstream in(text);
    std::string field;
    if (!std::getline(in, field, ':'))
        throw UsageError("bad --component '" + text + "', want freq_hz:phi_rad[:phase_rad]");
    c.omega = two_pi * std::stod(field);
    if (!std::getline(in, field, ':'))
        throw UsageError("bad --component '" + text + "', want freq_hz:phi_rad[:phase_rad]");
    c.phi_peak = std::stod(field);
    if (std::getline(in, field, ':')) c.phase = std::stod(field);
    return c;
}

int cmd_simulate(const Common& common, const std::string& scenario, double rate,
                 double duration, double window, double contrast, double wavelength,
                 const std::vector<std::string>& component_specs, std::uint64_t seed,
                 const std::string& out_path) {
    RunConfig cfg = resolve_config(common.config_path);

    SimConfig sim;
    if (!scenario.empty()) {
        sim = scenario_preset(scenario, seed);
        if (duration >= 0.0) sim.duration = duration;
        if (rate > 0.0) sim.rate = rate;
    } else {
        sim = cfg.sim;
        if (rate > 0.0) sim.rate = rate;
        if (duration >= 0.0) sim.duration = duration;
        if (window > 0.0) sim.window = window;
        if (contrast >= 0.0) sim.model.contrast = contrast;
        if (wavelength > 0.0) sim.model.wave_number = two_pi / wavelength;
        sim.seed = seed;
        for (const auto& spec : component_specs)
            sim.spectrum.components.push_back(parse_component(spec));
        sim.spectrum.validate();
    }

    if (sim.duration == 0.0) {
        std::cerr << "warning: duration is 0, writing an empty event file\n";
        EventSet empty;
        io::write_events_csv(out_path, empty);
        return 0;
    }

    sim.validate();
    if (sim.undersampled())
        std::cerr << "warning: a perturbation frequency reaches the count rate; "
                     "it will not be resolvable\n";

    EventSet events = sample_events(sim);
    io::write_events_csv(out_path, events);
    io::write_truth_sidecar(out_path + ".truth", sim);
    std::cout << "wrote " << events.size() << " events to " << out_path << "\n";
    return 0;
}

int cmd_correlate(const Common& common, const std::string& events_path, GridSpec flags,
                  bool flags_set[5], const std::string& out_path) {
    RunConfig cfg = resolve_config(common.config_path);
    GridSpec spec = cfg.grid;
    if (flags_set[0]) spec.u_min = flags.u_min;
    if (flags_set[1]) spec.u_max = flags.u_max;
    if (flags_set[2]) spec.du = flags.du;
    if (flags_set[3]) spec.tau_max = flags.tau_max;
    if (flags_set[4]) spec.dtau = flags.dtau;
    spec.validate();

    EventSet events = io::read_events_csv(events_path);
    PairHistogram hist = pair_histogram(events, spec, common.threads);
    CorrelationGrid grid = normalize(hist, events.size(), events.t_acq, events.window);
    io::write_grid(out_path, grid);
    std::cout << "wrote " << spec.n_tau() << "x" << spec.n_u() << " grid ("
              << hist.total() << " pairs, " << hist.dropped_outside_u
              << " outside u range) to " << out_path << "\n";
    return 0;
}

int cmd_fit(const Common& common, const std::string& grid_path, int n_components,
            const std::string& mode, const std::string& out_path) {
    RunConfig cfg = resolve_config(common.config_path);

    FitProblem problem;
    problem.grid = io::read_grid(grid_path);
    problem.n_components = n_components;
    problem.mode = mode.empty() ? cfg.fit_mode
                                : (mode == "exact" ? FitMode::exact : FitMode::approx);
    if (!mode.empty() && mode != "exact" && mode != "approx")
        throw UsageError("--mode must be approx or exact");
    problem.multi_start = cfg.fit_multi_start;
    problem.max_iterations = cfg.fit_max_iterations;
    problem.snap_tol = cfg.fit_snap_tol;
    problem.prune_tol = cfg.fit_prune_tol;
    problem.bound = cfg.fit_bound;

    FitResult result = fit_correlation(problem);
    io::write_fit_report(out_path, result);

    std::cout << "contrast " << result.model.contrast << ", wavelength "
              << result.model.wavelength() << " mm, rms " << result.residual_rms << "\n";
    for (const auto& c : result.spectrum.components) {
        std::cout << "  " << c.omega / two_pi << " Hz  phi " << c.phi_peak / pi << " pi";
        if (result.phases_reported)
            std::cout << "  phase " << c.phase / pi << " pi";
        std::cout << "\n";
    }
    return result.converged ? 0 : 4;
}

int cmd_reconstruct(const Common& common, const std::string& events_path,
                    const std::string& report_path, bool scan_phases,
                    const std::string& out_path, const std::string& hist_path) {
    RunConfig cfg = resolve_config(common.config_path);

    EventSet events = io::read_events_csv(events_path);
    FitResult fit = io::read_fit_report(report_path);

    ReconstructionPlan plan;
    plan.lambda = fit.model.wavelength();
    plan.components = fit.spectrum;
    plan.phase_resolution = cfg.phase_resolution;
    bool need_scan = scan_phases || !fit.phases_reported;
    if (need_scan) plan.phase_free.assign(plan.components.size(), true);

    ContrastEstimate before = contrast_of(events, fit.model.wave_number);

    EventSet corrected;
    ContrastEstimate after;
    if (need_scan) {
        PhaseScanResult scan = phase_scan(events, plan, fit.model.wave_number,
                                          common.threads);
        corrected = shift_positions(events, scan.plan);
        after = scan.best;
        for (std::size_t j = 0; j < scan.plan.components.size(); ++j)
            std::cout << "  phase[" << j << "] = "
                      << scan.plan.components.components[j].phase / pi << " pi\n";
    } else {
        corrected = shift_positions(events, plan);
        // restrict to the uniformly exposed core, as the scan path does
        after = phase_scan(events, plan, fit.model.wave_number, common.threads).best;
    }

    io::write_events_csv(out_path, corrected);
    if (!hist_path.empty())
        io::write_position_histogram(hist_path, corrected,
                                     fit.model.wavelength() / 32.0);

    std::cout << "contrast before " << before.contrast << " after " << after.contrast
              << "\n";
    return 0;
}

int cmd_spectrum(const Common& common, const std::string& waveform_path,
                 const std::string& attenuation_path, double coupling,
                 const std::string& out_path, const std::string& predict_path) {
    RunConfig cfg = resolve_config(common.config_path);
    if (coupling <= 0.0) coupling = cfg.spectrum_coupling;

    Waveform w = io::read_waveform_csv(waveform_path);
    FourierResult fourier = fourier_components(w, cfg.spectrum_threshold);
    std::vector<SpectralComponent> components = fourier.components;

    std::string att_path = attenuation_path.empty() ? cfg.attenuation_path
                                                    : attenuation_path;
    if (!att_path.empty()) {
        AttenuationCurve curve = io::read_attenuation(att_path);
        components = apply_attenuation(components, curve);
    }

    PerturbationSpectrum spectrum = to_phase_deviations(components, coupling);
    io::write_spectrum_file(out_path, spectrum);
    std::cout << "wrote " << spectrum.size() << " components (Parseval residual "
              << fourier.parseval_residual << ") to " << out_path << "\n";

    if (!predict_path.empty()) {
        FringeModel model = cfg.sim.model;
        CorrelationGrid grid;
        grid.spec = cfg.grid;
        grid.total_events = 1;
        grid.t_acq = cfg.sim.duration;
        grid.window = cfg.sim.window;
        grid.g2.resize(grid.spec.n_tau() * grid.spec.n_u());
        for (std::size_t it = 0; it < grid.spec.n_tau(); ++it)
            for (std::size_t iu = 0; iu < grid.spec.n_u(); ++iu)
                grid.at(it, iu) = g2_approx(model, spectrum, grid.spec.u_center(iu),
                                            grid.spec.tau_center(it));
        io::write_grid(predict_path, grid);
    }
    return 0;
}

int cmd_attenuation(const Common& common, const std::string& reference_path,
                    const std::vector<std::string>& report_paths,
                    const std::string& out_path) {
    (void)common;
    FitResult reference = io::read_fit_report(reference_path);
    if (reference.spectrum.size() != 1)
        throw UsageError("reference fit report must contain exactly one component");
    double reference_phi = reference.spectrum.components[0].phi_peak;

    std::vector<std::pair<double, FitResult>> fits;
    for (const auto& path : report_paths) {
        FitResult fit = io::read_fit_report(path);
        if (fit.spectrum.size() != 1)
            throw UsageError("fit report '" + path + "' must contain exactly one component");
        fits.emplace_back(fit.spectrum.components[0].omega, fit);
    }

    AttenuationCurve curve = fit_attenuation(attenuation_points(fits, reference_phi));
    io::write_attenuation(out_path, curve);
    std::cout << "wrote " << curve.samples.size() << " attenuation points to " << out_path
              << (curve.fitted ? " (sigmoid fitted)" : "")
              << (curve.monotone_flag ? "" : " [non-monotone]") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-tagged interference correlation analysis"};
    app.require_subcommand(1);
    app.fallthrough();  // --config / --threads may follow the subcommand

    Common common;
    app.add_option("--config", common.config_path, "config file (or MWC_CONFIG)");
    app.add_option("--threads", common.threads, "worker threads (0 = all cores)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "draw an event stream from the model");
    std::string scenario, sim_out = "events.csv";
    double rate = -1.0, duration = -1.0, window = -1.0, contrast = -1.0, wavelength = -1.0;
    std::uint64_t seed = 1;
    std::vector<std::string> component_specs;
    sim->add_option("--scenario", scenario, "preset: fig2, fig4, fig5, fig6");
    sim->add_option("--rate", rate, "mean events/s");
    sim->add_option("--duration", duration, "acquisition time, s");
    sim->add_option("--window", window, "detector window, mm");
    sim->add_option("--contrast", contrast, "fringe contrast K");
    sim->add_option("--wavelength", wavelength, "fringe wavelength, mm");
    sim->add_option("--component", component_specs,
                    "perturbation freq_hz:phi_rad[:phase_rad], repeatable");
    sim->add_option("--seed", seed, "RNG seed");
    sim->add_option("--out", sim_out, "output event CSV");

    // correlate
    auto* cor = app.add_subcommand("correlate", "pair histogram + normalized g2 grid");
    std::string cor_events, cor_out = "grid.txt";
    GridSpec cor_spec;
    cor->add_option("--events", cor_events, "event CSV")->required();
    auto* o_umin = cor->add_option("--u-min", cor_spec.u_min, "mm");
    auto* o_umax = cor->add_option("--u-max", cor_spec.u_max, "mm");
    auto* o_du = cor->add_option("--du", cor_spec.du, "mm");
    auto* o_tmax = cor->add_option("--tau-max", cor_spec.tau_max, "s");
    auto* o_dtau = cor->add_option("--dtau", cor_spec.dtau, "s");
    cor->add_option("--out", cor_out, "output grid file");

    // fit
    auto* fit = app.add_subcommand("fit", "fit the correlation theory to a grid");
    std::string fit_grid, fit_mode, fit_out = "fit.txt";
    int fit_n = 1;
    fit->add_option("--grid", fit_grid, "grid file")->required();
    fit->add_option("--n", fit_n, "number of perturbation components")->required();
    fit->add_option("--mode", fit_mode, "approx or exact");
    fit->add_option("--out", fit_out, "output fit report");

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "undo the dephasing event by event");
    std::string rec_events, rec_report, rec_out = "corrected.csv", rec_hist;
    bool rec_scan = false;
    rec->add_option("--events", rec_events, "event CSV")->required();
    rec->add_option("--report", rec_report, "fit report")->required();
    rec->add_flag("--scan-phases", rec_scan, "scan all phases even if the fit reports them");
    rec->add_option("--out", rec_out, "corrected event CSV");
    rec->add_option("--histogram", rec_hist, "corrected position histogram");

    // spectrum
    auto* spc = app.add_subcommand("spectrum", "waveform -> phase-deviation spectrum");
    std::string spc_wave, spc_att, spc_out = "spectrum.txt", spc_predict;
    double spc_coupling = -1.0;
    spc->add_option("--waveform", spc_wave, "waveform CSV")->required();
    spc->add_option("--attenuation", spc_att, "attenuation curve file");
    spc->add_option("--coupling", spc_coupling, "rad of phase per waveform unit");
    spc->add_option("--out", spc_out, "output spectrum file");
    spc->add_option("--predict", spc_predict, "also write the predicted g2 grid here");

    // attenuation
    auto* att = app.add_subcommand("attenuation", "attenuation curve from a fit ladder");
    std::string att_ref, att_out = "attenuation.txt";
    std::vector<std::string> att_reports;
    att->add_option("--reference", att_ref, "unshielded (0 Hz) fit report")->required();
    att->add_option("reports", att_reports, "single-frequency fit reports")->required();
    att->add_option("--out", att_out, "output curve file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string command;
    for (int i = 1; i < argc; ++i) command += std::string(i > 1 ? " " : "") + argv[i];

    int code = 0;
    std::string detail = "ok";
    try {
        if (sim->parsed()) {
            code = cmd_simulate(common, scenario, rate, duration, window, contrast,
                                wavelength, component_specs, seed, sim_out);
        } else if (cor->parsed()) {
            bool set[5] = {o_umin->count() > 0, o_umax->count() > 0, o_du->count() > 0,
                           o_tmax->count() > 0, o_dtau->count() > 0};
            code = cmd_correlate(common, cor_events, cor_spec, set, cor_out);
        } else if (fit->parsed()) {
            code = cmd_fit(common, fit_grid, fit_n, fit_mode, fit_out);
        } else if (rec->parsed()) {
            code = cmd_reconstruct(common, rec_events, rec_report, rec_scan, rec_out,
                                   rec_hist);
        } else if (spc->parsed()) {
            code = cmd_spectrum(common, spc_wave, spc_att, spc_coupling, spc_out,
                                spc_predict);
        } else if (att->parsed()) {
            code = cmd_attenuation(common, att_ref, att_reports, att_out);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        code = 2;
        detail = e.what();
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        code = 3;
        detail = e.what();
    } catch (const CostGuardError& e) {
        std::cerr << "cost guard: " << e.what() << "\n";
        code = 5;
        detail = e.what();
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        code = 4;
        detail = e.what();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = 1;
        detail = e.what();
    }

    try {
        RunConfig cfg = resolve_config(common.config_path);
        if (!cfg.log_path.empty()) io::append_run_log(cfg.log_path, command, code, detail);
    } catch (const std::exception&) {
        // the log is best-effort; the command result stands
    }
    return code;
}
