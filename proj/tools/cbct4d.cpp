// cbct4d: gated 4D CBCT simulation, reconstruction and refinement.
//
//   cbct4d simulate    --config c.json --out dir
//   cbct4d reconstruct --config c.json --out dir --method ossart|ossart_ttv
//   cbct4d register    --config c.json --out dir [--input ossart_ttv]
//   cbct4d refine      --config c.json --out dir --dvf zero|gt|est [--init ossart] [--name dvf_gt]
//   cbct4d evaluate    --config c.json --out dir [--methods ossart,dvf_gt]
//   cbct4d run         --config c.json --out dir
//
// Stages read and write the directory layout described in cbct4d/pipeline.hpp.

#include <CLI11.hpp>

#include <cbct4d.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace cbct4d;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "pipeline configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "output directory (overrides the config)");
    sub->add_option("--seed", c.seed, "noise seed (overrides the config)");
    sub->add_option("--threads", c.threads, "worker thread cap, 0 = all cores")->check(CLI::NonNegativeNumber);
    sub->add_flag("-v,--verbose", c.verbose, "print stage timings");
}

PipelineConfig load(const Common& c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : read_pipeline_config(c.config);
    if (!c.out.empty()) cfg.out = c.out;
    if (c.seed) cfg.seed = *c.seed;
    cfg.verbose = cfg.verbose || c.verbose;
    set_thread_count(c.threads);
    return cfg;
}

std::vector<Volume3> load_method(const PipelineConfig& cfg, const std::string& name) {
    if (name == "gt") return read_phases(cfg.out / "gt", cfg.n_phases);
    return read_phases(cfg.out / "recon" / name, cfg.n_phases);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gated 4D cone-beam CT simulation and reconstruction"};
    app.require_subcommand(1);

    Common common;
    std::string method, input = "ossart_ttv", dvf_kind, init, name;
    std::vector<std::string> methods;

    auto* sim = app.add_subcommand("simulate", "render phases and simulate the gated acquisition");
    auto* rec = app.add_subcommand("reconstruct", "OSSART or OSSART-TTV from the acquisition");
    auto* reg = app.add_subcommand("register", "pairwise demons between reconstructed phases");
    auto* ref = app.add_subcommand("refine", "DVF-based refinement of reconstructed phases");
    auto* eva = app.add_subcommand("evaluate", "PSNR / SSIM against ground truth");
    auto* run = app.add_subcommand("run", "full pipeline");
    for (auto* s : {sim, rec, reg, ref, eva, run}) add_common(s, common);

    rec->add_option("--method", method, "ossart or ossart_ttv")->required()->check(CLI::IsMember({"ossart", "ossart_ttv"}));
    reg->add_option("--input", input, "reconstruction to register")->capture_default_str();
    ref->add_option("--dvf", dvf_kind, "zero, gt or est")->required()->check(CLI::IsMember({"zero", "gt", "est"}));
    ref->add_option("--init", init, "initial reconstruction (default from the config)");
    ref->add_option("--name", name, "output method name (default dvf_<kind>)");
    eva->add_option("--methods", methods, "methods to score (default: config methods)")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    std::string stage = app.get_subcommands().front()->get_name();
    try {
        stage = "config";
        const PipelineConfig cfg = load(common);
        stage = app.get_subcommands().front()->get_name();

        if (*sim) {
            write_simulation(simulate(cfg), cfg.out);
        } else if (*rec) {
            const auto acq = read_acquisition(cfg.out / "acquisition");
            const auto vols = reconstruct(cfg, method, acq);
            write_phases(vols, cfg.out / "recon" / method);
        } else if (*reg) {
            const auto dvfs = estimate_dvfs(cfg, load_method(cfg, input));
            write_dvfs(dvfs, cfg.out / "dvf" / "est");
        } else if (*ref) {
            const auto acq = read_acquisition(cfg.out / "acquisition");
            std::vector<DvfMap> dvfs;
            if (dvf_kind == "zero") dvfs = zero_dvfs(cfg);
            else if (dvf_kind == "gt") dvfs = ground_truth_dvfs(cfg);
            else dvfs = read_dvfs(cfg.out / "dvf" / "est", cfg.n_phases);
            if (init.empty()) init = dvf_kind == "est" ? cfg.dvf_est_init : cfg.dvf_gt_init;
            if (name.empty()) name = "dvf_" + dvf_kind;
            const auto inits = load_method(cfg, init);
            std::optional<std::vector<Volume3>> gts;
            if (fs::exists(cfg.out / "gt")) gts = read_phases(cfg.out / "gt", cfg.n_phases);
            std::vector<RefineLog> logs;
            const auto vols = refine(cfg, inits, dvfs, acq, &logs, gts ? &*gts : nullptr);
            write_phases(vols, cfg.out / "recon" / name);
            for (std::size_t i = 0; i < logs.size(); ++i)
                write_refine_log_csv(logs[i], cfg.out / "refine" / name / ("phase_" + std::to_string(i) + ".csv"));
        } else if (*eva) {
            if (methods.empty()) methods = cfg.methods;
            const auto gts = read_phases(cfg.out / "gt", cfg.n_phases);
            std::vector<std::pair<std::string, MetricReport>> reports;
            for (const auto& m : methods) reports.emplace_back(m, evaluate(load_method(cfg, m), gts));
            write_metrics_csv(reports, cfg.out / "metrics.csv");
            const std::string table = format_metrics_table(reports);
            std::ofstream(cfg.out / "table.txt") << table;
            std::cout << table;
        } else if (*run) {
            const auto res = run_pipeline(cfg);
            std::cout << format_metrics_table(res.reports);
        }
    } catch (const stage_error& e) {
        std::cerr << "cbct4d: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "cbct4d: " << stage << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
