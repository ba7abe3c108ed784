// Batch front end: phantom generation, prior fitting, segmentation,
// evaluation, and a hidden discrete-oracle probe. Every command is
// deterministic given (config, seed, inputs); outputs are write-once unless
// --force is passed. Validation failures exit 1, I/O failures exit 2, both
// as a single stderr line `ERROR: <module>: <message>`.

#include "CLI11.hpp"

#include "cmfseg/kvfile.hpp"
#include "cmfseg/metrics.hpp"
#include "cmfseg/mincut.hpp"
#include "cmfseg/phantom.hpp"
#include "cmfseg/prior.hpp"
#include "cmfseg/render.hpp"
#include "cmfseg/shape.hpp"
#include "cmfseg/solver.hpp"
#include "cmfseg/volume.hpp"

#include <omp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cmfseg;

namespace {

void cli_error(const std::string& msg) { throw ValidationError("cli", msg); }

void ensure_fresh(const fs::path& p, bool force) {
    if (!force && fs::exists(p))
        cli_error("output exists: " + p.string() + " (pass --force to overwrite)");
}

// Volumes are a header plus a sibling .raw payload; guard both.
void ensure_fresh_volume(const fs::path& header, bool force) {
    ensure_fresh(header, force);
    fs::path raw = header;
    raw.replace_extension(".raw");
    ensure_fresh(raw, force);
}

void make_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cli", "cannot create directory " + dir.string());
}

KvFile load_config_or_empty(const std::string& path) {
    if (path.empty()) return KvFile{};
    return KvFile::load(path);
}

// `--set key=value` overrides, applied after the config file in argument
// order, so the last writer wins.
void apply_overrides(KvFile& kv, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            cli_error("--set expects key=value, got '" + s + "'");
        std::string key = s.substr(0, eq);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        std::string value = s.substr(eq + 1);
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        kv.set(key, value);
    }
}

void reject_unknown_keys(const KvFile& kv, const std::set<std::string>& known,
                         const std::string& what) {
    for (const auto& entry : kv.entries())
        if (!known.count(entry.first))
            cli_error("unknown " + what + " config key '" + entry.first + "'");
}

void print_resolved(const KvFile& kv) {
    std::cout << "# resolved config\n" << kv.serialize() << "\n";
}

void set_threads(int threads) {
    if (threads < 1) cli_error("--threads must be at least 1");
    omp_set_num_threads(threads);
}

// ---------------------------------------------------------------- phantom

int run_phantom(const std::string& config_path,
                const std::vector<std::string>& sets,
                std::optional<std::uint64_t> seed, const std::string& out_dir,
                bool force) {
    KvFile kv = load_config_or_empty(config_path);
    apply_overrides(kv, sets);
    if (seed) kv.set("seed", std::to_string(*seed));

    // `gain` belongs to the probability-map step, not the phantom geometry;
    // strip it before the strict geometry parse.
    const double gain = kv.get_double_or("gain", 8.0);
    KvFile geometry;
    for (const auto& entry : kv.entries())
        if (entry.first != "gain") geometry.set(entry.first, entry.second);
    const PhantomConfig cfg = phantom_config_from_kv(geometry);
    if (!(gain > 0.0)) throw ValidationError("phantom", "gain must be positive");

    KvFile resolved = phantom_config_to_kv(cfg);
    resolved.set_double("gain", gain);
    print_resolved(resolved);

    if (out_dir.empty()) cli_error("phantom needs --out");
    make_out_dir(out_dir);
    const fs::path dir(out_dir);
    const fs::path mask_p = dir / "gt_mask.mhd";
    const fs::path act_p = dir / "activity.mhd";
    const fs::path noisy_p = dir / "noisy.mhd";
    const fs::path prob_p = dir / "probability.mhd";
    const fs::path cfg_p = dir / "config.kv";
    for (const fs::path* p : {&mask_p, &act_p, &noisy_p, &prob_p})
        ensure_fresh_volume(*p, force);
    ensure_fresh(cfg_p, force);

    auto [gt_mask, activity] = generate_lv_phantom(cfg);
    const Volume3D noisy = simulate_acquisition(activity, cfg);
    const Volume3D prob = probability_from_volume(noisy, gain);

    save_mask(gt_mask, mask_p.string());
    save_volume(activity, act_p.string());
    save_volume(noisy, noisy_p.string());
    save_volume(prob, prob_p.string());
    resolved.save(cfg_p.string());
    std::cout << "wrote " << dir.string() << ": gt_mask, activity, noisy, "
              << "probability, config\n";
    return 0;
}

// --------------------------------------------------------------- fit-prior

int run_fit_prior(const std::string& config_path,
                  const std::vector<std::string>& sets,
                  const std::vector<std::string>& mask_paths,
                  const std::string& out_path, bool force) {
    KvFile kv = load_config_or_empty(config_path);
    apply_overrides(kv, sets);
    reject_unknown_keys(
        kv, {"kind", "modes", "canonical", "volume_fraction", "lambda_perp", "sigma"},
        "fit-prior");

    const std::string kind = kv.get_or("kind", "gaussian");
    if (kind != "gaussian" && kind != "kde")
        cli_error("kind must be 'gaussian' or 'kde', got '" + kind + "'");
    const int modes = int(kv.get_int_or("modes", 5));
    const int canonical = int(kv.get_int_or("canonical", 32));
    const double volume_fraction = kv.get_double_or("volume_fraction", 0.05);
    std::optional<double> lambda_perp, sigma;
    if (kv.has("lambda_perp")) lambda_perp = kv.get_double("lambda_perp");
    if (kv.has("sigma")) sigma = kv.get_double("sigma");
    if (canonical < 2) cli_error("canonical grid edge must be at least 2");

    KvFile resolved;
    resolved.set("kind", kind);
    resolved.set_int("modes", modes);
    resolved.set_int("canonical", canonical);
    resolved.set_double("volume_fraction", volume_fraction);
    if (lambda_perp) resolved.set_double("lambda_perp", *lambda_perp);
    if (sigma) resolved.set_double("sigma", *sigma);
    print_resolved(resolved);

    if (mask_paths.empty()) cli_error("fit-prior needs at least one training mask");
    if (out_path.empty()) cli_error("fit-prior needs --out");
    ensure_fresh(out_path, force);

    const Dims canon{canonical, canonical, canonical};
    std::vector<ShapeSample> samples;
    samples.reserve(mask_paths.size());
    for (const std::string& path : mask_paths) {
        const Volume3D mask = load_volume(path);
        samples.push_back(align_shape(mask_to_sdf(mask), canon, volume_fraction));
    }

    // The fit rejects mode counts beyond the covariance rank bound N - 1;
    // clamp the request here and report the shrinkage below.
    const std::int64_t dim = std::int64_t(samples.front().z.size());
    const int fit_modes = int(std::min<std::int64_t>(
        modes, std::min<std::int64_t>(std::int64_t(samples.size()) - 1, dim)));

    const ShapeModel model =
        kind == "kde" ? fit_kde_prior(samples, fit_modes, lambda_perp, sigma)
                      : fit_gaussian_prior(samples, fit_modes, lambda_perp);
    save_model(model, out_path);

    std::cout << "samples = " << samples.size() << "\n";
    std::cout << "modes = " << model.mode_count();
    if (model.mode_count() < modes)
        std::cout << " (truncated from " << modes
                  << ": covariance rank exhausted)";
    std::cout << "\n";
    std::cout << "eigenvalues =";
    for (double ev : model.eigenvalues)
        std::cout << " " << KvFile::format_double(ev);
    std::cout << "\n";
    std::cout << "lambda_perp = " << KvFile::format_double(model.lambda_perp)
              << "\n";
    if (model.kind == PriorKind::kde)
        std::cout << "sigma = " << KvFile::format_double(model.sigma) << "\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ----------------------------------------------------------------- segment

struct RenderSpec {
    Axis axis;
    int slice;
};

RenderSpec parse_render_spec(const std::string& s) {
    const auto colon = s.find(':');
    if (s.size() < 3 || colon != 1)
        cli_error("--render expects AXIS:SLICE (e.g. z:24), got '" + s + "'");
    RenderSpec spec{};
    switch (s[0]) {
    case 'x': spec.axis = Axis::X; break;
    case 'y': spec.axis = Axis::Y; break;
    case 'z': spec.axis = Axis::Z; break;
    default: cli_error("--render axis must be x, y, or z, got '" + s + "'");
    }
    try {
        spec.slice = std::stoi(s.substr(2));
    } catch (const std::exception&) {
        cli_error("--render slice is not an integer in '" + s + "'");
    }
    return spec;
}

int run_segment(const std::string& config_path,
                const std::vector<std::string>& sets,
                const std::string& prob_path, const std::string& model_path,
                const std::string& edges_path, const std::string& out_dir,
                const std::vector<std::string>& render_specs, bool force) {
    KvFile kv = load_config_or_empty(config_path);
    apply_overrides(kv, sets);
    reject_unknown_keys(kv,
                        {"c", "gamma", "max_iters", "tol", "threshold", "alpha0",
                         "beta", "outer_iters", "width", "volume_fraction",
                         "contrast"},
                        "segment");

    PriorCmfConfig cfg;
    cfg.cmf.c = kv.get_double_or("c", cfg.cmf.c);
    cfg.cmf.gamma = kv.get_double_or("gamma", cfg.cmf.gamma);
    cfg.cmf.max_iters = int(kv.get_int_or("max_iters", cfg.cmf.max_iters));
    cfg.cmf.tol = kv.get_double_or("tol", cfg.cmf.tol);
    cfg.cmf.threshold = kv.get_double_or("threshold", cfg.cmf.threshold);
    cfg.alpha0 = kv.get_double_or("alpha0", cfg.alpha0);
    cfg.beta = kv.get_double_or("beta", cfg.beta);
    cfg.outer_iters = int(kv.get_int_or("outer_iters", cfg.outer_iters));
    cfg.width = kv.get_double_or("width", cfg.width);
    cfg.volume_fraction = kv.get_double_or("volume_fraction", cfg.volume_fraction);
    const double contrast = kv.get_double_or("contrast", 1.0);
    validate_prior_config(cfg);

    KvFile resolved;
    resolved.set_double("c", cfg.cmf.c);
    resolved.set_double("gamma", cfg.cmf.gamma);
    resolved.set_int("max_iters", cfg.cmf.max_iters);
    resolved.set_double("tol", cfg.cmf.tol);
    resolved.set_double("threshold", cfg.cmf.threshold);
    resolved.set_double("alpha0", cfg.alpha0);
    resolved.set_double("beta", cfg.beta);
    resolved.set_int("outer_iters", cfg.outer_iters);
    resolved.set_double("width", cfg.width);
    resolved.set_double("volume_fraction", cfg.volume_fraction);
    if (!edges_path.empty()) resolved.set_double("contrast", contrast);
    print_resolved(resolved);

    if (prob_path.empty()) cli_error("segment needs --prob");
    if (out_dir.empty()) cli_error("segment needs --out");

    std::vector<RenderSpec> renders;
    for (const std::string& s : render_specs)
        renders.push_back(parse_render_spec(s));

    make_out_dir(out_dir);
    const fs::path dir(out_dir);
    const fs::path mask_p = dir / "mask.mhd";
    const fs::path log_p = dir / "run.log";
    const fs::path cfg_p = dir / "config.kv";
    const fs::path trace_p = dir / "trace.tsv";
    ensure_fresh_volume(mask_p, force);
    ensure_fresh(log_p, force);
    ensure_fresh(cfg_p, force);
    if (!model_path.empty()) ensure_fresh(trace_p, force);
    std::vector<fs::path> render_paths;
    for (const RenderSpec& r : renders) {
        const char axis_name = r.axis == Axis::X ? 'x' : r.axis == Axis::Y ? 'y' : 'z';
        fs::path p = dir / ("overlay_" + std::string(1, axis_name) +
                            std::to_string(r.slice) + ".ppm");
        ensure_fresh(p, force);
        render_paths.push_back(p);
    }

    const Volume3D prob = load_volume(prob_path);
    Volume3D edges_vol;
    EdgeWeighting edges;
    const EdgeWeighting* edges_ptr = nullptr;
    if (!edges_path.empty()) {
        edges_vol = load_volume(edges_path);
        edges.intensity = &edges_vol;
        edges.contrast = contrast;
        edges_ptr = &edges;
    }

    Volume3D mask, plain_mask;
    SolveReport report;
    std::vector<PriorTraceEntry> trace;
    if (model_path.empty()) {
        const CapacityField caps = build_capacities(prob, cfg.alpha0, edges_ptr);
        auto [lambda, rep] = solve_cmf(caps, cfg.cmf);
        mask = threshold_mask(lambda, cfg.cmf.threshold);
        plain_mask = mask;
        report = std::move(rep);
    } else {
        const ShapeModel model = load_model(model_path);
        PriorResult res = segment_with_prior(prob, model, cfg, edges_ptr);
        mask = std::move(res.mask);
        plain_mask = std::move(res.plain_mask);
        report = std::move(res.last_report);
        trace = std::move(res.trace);
    }

    save_mask(mask, mask_p.string());
    {
        // The log covers the final inner solve; earlier outer iterations are
        // summarized by the trace file.
        std::ofstream log(log_p);
        if (!log) throw IoError("cli", "cannot write " + log_p.string());
        log << format_run_log(report);
    }
    resolved.save(cfg_p.string());
    if (!model_path.empty()) {
        std::ofstream ts(trace_p);
        if (!ts) throw IoError("cli", "cannot write " + trace_p.string());
        ts << "iteration\tcut_energy\tshape_energy\n";
        for (std::size_t i = 0; i < trace.size(); ++i)
            ts << i << "\t" << KvFile::format_double(trace[i].cut_energy) << "\t"
               << KvFile::format_double(trace[i].shape_energy) << "\n";
    }

    for (std::size_t i = 0; i < renders.size(); ++i) {
        const Volume3D empty(prob.dims, prob.spacing, 0.0);
        const Image8 panel = hstack(
            {render_overlay(prob, empty, renders[i].axis, renders[i].slice),
             render_overlay(prob, plain_mask, renders[i].axis, renders[i].slice),
             render_overlay(prob, mask, renders[i].axis, renders[i].slice)});
        write_ppm(panel, render_paths[i].string());
    }

    std::cout << "iterations = " << report.iters << "\n";
    std::cout << "converged = " << (report.converged ? "yes" : "no") << "\n";
    std::cout << "final_residual = "
              << KvFile::format_double(report.final_residual) << "\n";
    std::cout << "energy = " << KvFile::format_double(report.primal_energy)
              << "\n";
    std::cout << "wrote " << mask_p.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int run_evaluate(const std::vector<std::string>& pred_paths,
                 const std::vector<std::string>& gt_paths,
                 const std::string& out_path, bool force) {
    if (pred_paths.empty()) cli_error("evaluate needs at least one --pred");
    if (pred_paths.size() != gt_paths.size())
        cli_error("got " + std::to_string(pred_paths.size()) + " --pred but " +
                  std::to_string(gt_paths.size()) + " --gt paths");
    if (out_path.empty()) cli_error("evaluate needs --out");
    ensure_fresh(out_path, force);

    // Deterministic report order regardless of argument order.
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < pred_paths.size(); ++i)
        pairs.emplace_back(pred_paths[i], gt_paths[i]);
    std::sort(pairs.begin(), pairs.end());

    std::vector<Volume3D> preds, gts;
    preds.reserve(pairs.size());
    gts.reserve(pairs.size());
    for (const auto& [pred_path, gt_path] : pairs) {
        preds.push_back(load_volume(pred_path));
        gts.push_back(load_volume(gt_path));
    }
    std::vector<EvalCase> cases;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        cases.push_back(EvalCase{pairs[i].first, &preds[i], &gts[i]});

    const BatchReport report = evaluate_batch(cases);
    const std::string text = format_batch_report(report);
    std::ofstream out(out_path);
    if (!out) throw IoError("cli", "cannot write " + out_path);
    out << text;
    std::cout << text;
    return 0;
}

// ------------------------------------------------------------------ oracle

// Debugging probe: random capacity field, exact min cut vs. the continuous
// solver's thresholded mask.
int run_oracle(std::uint64_t seed, int size, double alpha, int iters,
               double tol) {
    if (size < 1 || size > 16) cli_error("oracle size must lie in [1, 16]");
    if (alpha < 0.0) cli_error("oracle alpha must be non-negative");
    const Dims dims{size, size, size};
    CapacityField caps{Volume3D(dims, Spacing{}), Volume3D(dims, Spacing{}),
                       Volume3D(dims, Spacing{}, alpha)};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (auto& v : caps.cs.data) v = u(rng);
    for (auto& v : caps.ct.data) v = u(rng);

    CmfConfig cfg;
    cfg.max_iters = iters;
    cfg.tol = tol;
    const CutResult cut = min_cut(discretize(caps));
    auto [lambda, report] = solve_cmf(caps, cfg);
    const Volume3D mask = threshold_mask(lambda, 0.5);

    std::int64_t agree = 0;
    for (std::int64_t i = 0; i < dims.count(); ++i)
        agree += (mask.data[std::size_t(i)] != 0.0) == (cut.labels[std::size_t(i)] != 0);

    std::cout << "min_cut = " << KvFile::format_double(cut.value) << "\n";
    std::cout << "max_flow = " << KvFile::format_double(cut.flow) << "\n";
    std::cout << "cmf_energy = " << KvFile::format_double(report.primal_energy)
              << "\n";
    std::cout << "cmf_iters = " << report.iters << "\n";
    std::cout << "agreement = "
              << KvFile::format_double(double(agree) / double(dims.count()))
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous max-flow segmentation with statistical shape priors"};
    app.require_subcommand(1);

    std::string config_path, out_path, prob_path, model_path, edges_path;
    std::vector<std::string> sets, mask_paths, render_specs, pred_paths, gt_paths;
    std::optional<std::uint64_t> seed_opt;
    std::uint64_t oracle_seed = 1;
    int threads = 0;
    int oracle_size = 4;
    int oracle_iters = 300;
    double oracle_alpha = 0.5;
    double oracle_tol = 1e-4;
    bool force = false;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) {
            sub->add_option("--config", config_path, "key = value config file");
            // One value per occurrence, so positional arguments can follow.
            sub->add_option("--set", sets,
                            "override a config key (key=value, repeatable)")
                ->type_size(1)->allow_extra_args(false);
        }
        sub->add_option("--out", out_path, "output path");
        sub->add_flag("--force", force, "allow overwriting existing outputs");
        sub->add_option("--threads", threads, "worker thread count")
            ->check(CLI::PositiveNumber);
    };

    CLI::App* cmd_phantom =
        app.add_subcommand("phantom", "generate a synthetic LV phantom study");
    add_common(cmd_phantom, true);
    cmd_phantom->add_option("--seed", seed_opt, "noise seed (overrides config)");

    CLI::App* cmd_fit =
        app.add_subcommand("fit-prior", "fit a shape model to training masks");
    add_common(cmd_fit, true);
    cmd_fit->add_option("masks", mask_paths, "training mask volumes (.mhd)");

    CLI::App* cmd_segment =
        app.add_subcommand("segment", "segment a probability map");
    add_common(cmd_segment, true);
    cmd_segment->add_option("--prob", prob_path, "foreground probability volume");
    cmd_segment->add_option("--model", model_path,
                            "shape model file (omit for plain max-flow)");
    cmd_segment->add_option("--edges", edges_path,
                            "intensity volume for edge-stopping alpha");
    cmd_segment->add_option("--render", render_specs,
                            "write an overlay panel (AXIS:SLICE, repeatable)")
        ->type_size(1)->allow_extra_args(false);

    CLI::App* cmd_eval =
        app.add_subcommand("evaluate", "score predicted masks against ground truth");
    add_common(cmd_eval, false);
    cmd_eval->add_option("--pred", pred_paths, "predicted mask (repeatable)")
        ->type_size(1)->allow_extra_args(false);
    cmd_eval->add_option("--gt", gt_paths, "ground-truth mask (repeatable)")
        ->type_size(1)->allow_extra_args(false);

    CLI::App* cmd_oracle = app.add_subcommand("oracle", "discrete-oracle probe");
    cmd_oracle->group(""); // hidden
    cmd_oracle->add_option("--seed", oracle_seed, "instance seed");
    cmd_oracle->add_option("--size", oracle_size, "grid edge length");
    cmd_oracle->add_option("--alpha", oracle_alpha, "flow bound");
    cmd_oracle->add_option("--iters", oracle_iters, "solver iteration cap");
    cmd_oracle->add_option("--tol", oracle_tol, "solver tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (threads > 0) set_threads(threads);
        if (app.got_subcommand(cmd_phantom))
            return run_phantom(config_path, sets, seed_opt, out_path, force);
        if (app.got_subcommand(cmd_fit))
            return run_fit_prior(config_path, sets, mask_paths, out_path, force);
        if (app.got_subcommand(cmd_segment))
            return run_segment(config_path, sets, prob_path, model_path,
                               edges_path, out_path, render_specs, force);
        if (app.got_subcommand(cmd_eval))
            return run_evaluate(pred_paths, gt_paths, out_path, force);
        if (app.got_subcommand(cmd_oracle))
            return run_oracle(oracle_seed, oracle_size, oracle_alpha,
                              oracle_iters, oracle_tol);
    } catch (const Error& e) {
        std::cerr << "ERROR: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "ERROR: cli: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
