#pragma once

// End-to-end experiment: render the breathing phantom, simulate a gated scan,
// reconstruct with each method and score the results against ground truth.
//
// Output layout under cfg.out:
//   config.json                 the resolved configuration
//   gt/phase_I.vol              ground-truth phases
//   acquisition/                geometry.json, binning.json, views/
//   recon/<method>/phase_I.vol  reconstructions
//   dvf/<gt|est>/dvf_I_J        D_{I->J} used by the refinement methods
//   refine/<method>/phase_I.csv objective log
//   slices/<method>_phase_I.pgm mid-axial slices
//   metrics.csv, table.txt

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cbct4d/acquisition.hpp"
#include "cbct4d/demons.hpp"
#include "cbct4d/gating.hpp"
#include "cbct4d/io.hpp"
#include "cbct4d/metrics.hpp"
#include "cbct4d/phantom.hpp"
#include "cbct4d/recon.hpp"
#include "cbct4d/refine.hpp"

namespace cbct4d {

/// Error raised by a pipeline stage; what() is prefixed with the stage name.
class stage_error : public error {
public:
    stage_error(std::string stage, const std::string& msg) : error(stage + ": " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

inline const std::array<std::string, 4>& known_methods() {
    static const std::array<std::string, 4> m{"ossart", "ossart_ttv", "dvf_gt", "dvf_est"};
    return m;
}

struct PipelineConfig {
    Phantom4D phantom;

    Dims3 grid_dims{64, 64, 64};
    Vec3 grid_spacing{3.0, 3.0, 3.0};

    /// Detector, source distances and angles. The default desk scan is a
    /// 96 x 80 detector of 4 mm pixels and 120 views over a full turn.
    ConeBeamGeometry geometry = default_geometry();

    int n_phases = 4;
    /// Breathing period measured in views.
    double period_views = 20.0;
    double phase_shift = 0.0;

    int steps = 128;
    double noise_sigma = 0.0;

    ReconConfig ossart = default_ossart();
    ReconConfig ossart_ttv = default_ossart_ttv();
    RefineConfig refine = default_refine();
    DemonsConfig demons = default_demons();

    /// Initial volumes for the refinement methods.
    std::string dvf_gt_init = "ossart";
    std::string dvf_est_init = "ossart_ttv";

    std::vector<std::string> methods{known_methods().begin(), known_methods().end()};
    std::uint64_t seed = 0;
    fs::path out = "cbct4d_out";
    bool write_slices = true;
    bool verbose = false;

    static ConeBeamGeometry default_geometry() {
        ConeBeamGeometry g;
        g.det_w = 96;
        g.det_h = 80;
        g.det_spacing_u = 4.0;
        g.det_spacing_v = 4.0;
        g.angles = ConeBeamGeometry::uniform_angles(120);
        return g;
    }

    // Tuned on the desk phantom.
    static ReconConfig default_ossart() {
        ReconConfig c;
        c.tv_weight = 0.0;
        c.ttv_weight = 0.0;
        return c;
    }
    static ReconConfig default_ossart_ttv() {
        ReconConfig c;
        c.tv_weight = 0.0;
        c.ttv_weight = 0.01;
        return c;
    }
    static RefineConfig default_refine() {
        RefineConfig c;
        c.n_iters = 25;
        return c;
    }

    // Stronger field smoothing: streaky phase images otherwise yield
    // spurious displacements in static anatomy.
    static DemonsConfig default_demons() {
        DemonsConfig c;
        c.sigma_diffusion = 3.0;
        return c;
    }

    GridShape grid() const { return centered_grid(grid_dims, grid_spacing); }

    bool wants(const std::string& m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

    void validate() const {
        Phantom4D ph = phantom;
        ph.n_phases = n_phases;
        ph.validate();
        grid().validate();
        geometry.validate();
        if (n_phases < 1) throw error("config: n_phases must be >= 1");
        if (steps < 1) throw error("config: S must be >= 1");
        if (noise_sigma < 0.0) throw error("config: noise_sigma must be >= 0");
        ossart.validate();
        ossart_ttv.validate();
        refine.validate();
        if (methods.empty()) throw error("config: methods list is empty");
        for (const auto& m : methods)
            if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
                throw error("config: unknown method '" + m + "'");
        for (const auto* init : {&dvf_gt_init, &dvf_est_init})
            if (*init != "ossart" && *init != "ossart_ttv") throw error("config: refinement init must be ossart or ossart_ttv");
    }

    Phantom4D resolved_phantom() const {
        Phantom4D ph = phantom;
        ph.n_phases = n_phases;
        return ph;
    }
};

inline json pipeline_config_to_json(const PipelineConfig& c) {
    const auto& p = c.phantom;
    json g = geometry_to_json(c.geometry);
    return {{"seed", c.seed},
            {"out", c.out.string()},
            {"methods", c.methods},
            {"write_slices", c.write_slices},
            {"phantom",
             {{"tumor_amplitude", p.tumor_amplitude},
              {"tumor_radius", p.tumor_radius},
              {"tumor_center", detail::vec3_json(p.tumor_center)},
              {"edge_half_width", p.edge_half_width}}},
            {"grid", {{"dims", json::array({c.grid_dims.x, c.grid_dims.y, c.grid_dims.z})}, {"spacing", detail::vec3_json(c.grid_spacing)}}},
            {"geometry", g},
            {"gating", {{"n_phases", c.n_phases}, {"period_views", c.period_views}, {"phase_shift", c.phase_shift}}},
            {"acquisition", {{"S", c.steps}, {"noise_sigma", c.noise_sigma}}},
            {"ossart", recon_config_to_json(c.ossart)},
            {"ossart_ttv", recon_config_to_json(c.ossart_ttv)},
            {"refine", refine_config_to_json(c.refine)},
            {"demons", demons_config_to_json(c.demons)},
            {"dvf_gt_init", c.dvf_gt_init},
            {"dvf_est_init", c.dvf_est_init}};
}

/// Missing keys keep their defaults. "geometry" may give either an explicit
/// "angles" list or "n_views" with optional "angle_span" / "angle_start" (radians).
inline PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    try {
        detail::get_if(j, "seed", c.seed);
        if (j.contains("out")) c.out = j["out"].get<std::string>();
        detail::get_if(j, "methods", c.methods);
        detail::get_if(j, "write_slices", c.write_slices);
        detail::get_if(j, "verbose", c.verbose);
        if (j.contains("phantom")) {
            const auto& p = j["phantom"];
            detail::get_if(p, "tumor_amplitude", c.phantom.tumor_amplitude);
            detail::get_if(p, "tumor_radius", c.phantom.tumor_radius);
            detail::get_if(p, "edge_half_width", c.phantom.edge_half_width);
            if (p.contains("tumor_center")) c.phantom.tumor_center = detail::vec3_from(p, "tumor_center");
        }
        if (j.contains("grid")) {
            const auto& g = j["grid"];
            if (g.contains("dims")) {
                const auto d = g["dims"];
                if (d.is_number()) c.grid_dims = {d.get<int>(), d.get<int>(), d.get<int>()};
                else c.grid_dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
            }
            if (g.contains("spacing")) {
                const auto s = g["spacing"];
                if (s.is_number()) c.grid_spacing = {s.get<double>(), s.get<double>(), s.get<double>()};
                else c.grid_spacing = detail::vec3_from(g, "spacing");
            }
        }
        if (j.contains("geometry")) {
            const auto& g = j["geometry"];
            json base = geometry_to_json(c.geometry);
            base.update(g);
            if (!g.contains("angles")) {
                const int n = g.value("n_views", c.geometry.n_views());
                base["angles"] = ConeBeamGeometry::uniform_angles(n, g.value("angle_span", 2.0 * std::numbers::pi),
                                                                  g.value("angle_start", 0.0));
            }
            base.erase("n_views");
            base.erase("angle_span");
            base.erase("angle_start");
            c.geometry = geometry_from_json(base);
        }
        if (j.contains("gating")) {
            const auto& g = j["gating"];
            detail::get_if(g, "n_phases", c.n_phases);
            detail::get_if(g, "period_views", c.period_views);
            detail::get_if(g, "phase_shift", c.phase_shift);
        }
        if (j.contains("acquisition")) {
            detail::get_if(j["acquisition"], "S", c.steps);
            detail::get_if(j["acquisition"], "noise_sigma", c.noise_sigma);
        }
        if (j.contains("ossart")) c.ossart = recon_config_from_json(j["ossart"], c.ossart);
        if (j.contains("ossart_ttv")) c.ossart_ttv = recon_config_from_json(j["ossart_ttv"], c.ossart_ttv);
        if (j.contains("refine")) c.refine = refine_config_from_json(j["refine"], c.refine);
        if (j.contains("demons")) c.demons = demons_config_from_json(j["demons"], c.demons);
        detail::get_if(j, "dvf_gt_init", c.dvf_gt_init);
        detail::get_if(j, "dvf_est_init", c.dvf_est_init);
    } catch (const json::exception& e) {
        throw error(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline PipelineConfig read_pipeline_config(const fs::path& p) {
    return pipeline_config_from_json(detail::read_json_file(p));
}

namespace detail {

template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const stage_error&) {
        throw;
    } catch (const std::exception& e) {
        throw stage_error(stage, e.what());
    }
}

inline std::string phase_file(int i) { return "phase_" + std::to_string(i) + ".vol"; }

inline fs::path dvf_prefix(const fs::path& dir, int i, int j) {
    return dir / ("dvf_" + std::to_string(i) + "_" + std::to_string(j));
}

class StageTimer {
public:
    StageTimer(const PipelineConfig& cfg, std::string name) : on_(cfg.verbose), name_(std::move(name)) {}
    ~StageTimer() {
        if (!on_) return;
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        std::cerr << "[cbct4d] " << name_ << " " << std::fixed << std::setprecision(1) << s << " s\n";
    }

private:
    bool on_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace detail

inline void write_phases(const std::vector<Volume3>& vols, const fs::path& dir) {
    for (std::size_t i = 0; i < vols.size(); ++i) write_volume(vols[i], dir / detail::phase_file(static_cast<int>(i)));
}

inline std::vector<Volume3> read_phases(const fs::path& dir, int n_phases) {
    std::vector<Volume3> out;
    for (int i = 0; i < n_phases; ++i) out.push_back(read_volume(dir / detail::phase_file(i)));
    return out;
}

struct Simulation {
    std::vector<Volume3> gts;
    AcquisitionSet acq;
};

/// Renders every phase and simulates the amplitude-gated scan.
inline Simulation simulate(const PipelineConfig& cfg) {
    return detail::run_stage("simulate", [&] {
        cfg.validate();
        const Phantom4D ph = cfg.resolved_phantom();
        const GridShape grid = cfg.grid();
        Simulation sim;
        for (int i = 0; i < cfg.n_phases; ++i) sim.gts.push_back(render_phantom(ph, i, grid));
        const PhaseBinning bins =
            breathing_phase_assignment(cfg.n_phases, cfg.geometry.n_views(), cfg.period_views, cfg.phase_shift);
        sim.acq = simulate_acquisition(ph, cfg.geometry, bins, grid, cfg.steps, cfg.noise_sigma, cfg.seed);
        return sim;
    });
}

inline void write_simulation(const Simulation& sim, const fs::path& out) {
    detail::run_stage("simulate", [&] {
        write_phases(sim.gts, out / "gt");
        write_acquisition(sim.acq, out / "acquisition");
    });
}

/// "ossart": each phase from its own bin; "ossart_ttv": all phases jointly.
inline std::vector<Volume3> reconstruct(const PipelineConfig& cfg, const std::string& method, const AcquisitionSet& acq) {
    return detail::run_stage("reconstruct", [&] {
        if (method == "ossart") return ossart_per_phase(acq, cfg.ossart, cfg.grid());
        if (method == "ossart_ttv") return ossart_ttv(acq, cfg.ossart_ttv, cfg.grid());
        throw error("unknown reconstruction method '" + method + "'");
    });
}

/// Analytic D_{i->j} for every ordered pair i != j.
inline std::vector<DvfMap> ground_truth_dvfs(const PipelineConfig& cfg) {
    const Phantom4D ph = cfg.resolved_phantom();
    std::vector<DvfMap> out(static_cast<std::size_t>(cfg.n_phases));
    for (int i = 0; i < cfg.n_phases; ++i)
        for (int j = 0; j < cfg.n_phases; ++j)
            if (i != j) out[static_cast<std::size_t>(i)].emplace(j, ground_truth_dvf(ph, i, j, cfg.grid()));
    return out;
}

/// Zero fields for every ordered pair: refinement then fits one static volume to all views.
inline std::vector<DvfMap> zero_dvfs(const PipelineConfig& cfg) {
    std::vector<DvfMap> out(static_cast<std::size_t>(cfg.n_phases));
    for (int i = 0; i < cfg.n_phases; ++i)
        for (int j = 0; j < cfg.n_phases; ++j)
            if (i != j) out[static_cast<std::size_t>(i)].emplace(j, Dvf::zeros(cfg.grid()));
    return out;
}

/// Pairwise demons: D_{i->j} = register(moving = V_i, fixed = V_j).
inline std::vector<DvfMap> estimate_dvfs(const PipelineConfig& cfg, const std::vector<Volume3>& vols) {
    return detail::run_stage("register", [&] {
        if (static_cast<int>(vols.size()) != cfg.n_phases) throw error("need one volume per phase");
        std::vector<DvfMap> out(vols.size());
        for (std::size_t i = 0; i < vols.size(); ++i)
            for (std::size_t j = 0; j < vols.size(); ++j)
                if (i != j) out[i].emplace(static_cast<int>(j), demons_register(vols[i], vols[j], cfg.demons));
        return out;
    });
}

inline void write_dvfs(const std::vector<DvfMap>& dvfs, const fs::path& dir) {
    for (std::size_t i = 0; i < dvfs.size(); ++i)
        for (const auto& [j, d] : dvfs[i]) write_dvf(d, detail::dvf_prefix(dir, static_cast<int>(i), j));
}

inline std::vector<DvfMap> read_dvfs(const fs::path& dir, int n_phases) {
    std::vector<DvfMap> out(static_cast<std::size_t>(n_phases));
    for (int i = 0; i < n_phases; ++i)
        for (int j = 0; j < n_phases; ++j)
            if (i != j) out[static_cast<std::size_t>(i)].emplace(j, read_dvf(detail::dvf_prefix(dir, i, j)));
    return out;
}

inline std::vector<Volume3> refine(const PipelineConfig& cfg, const std::vector<Volume3>& inits,
                                   const std::vector<DvfMap>& dvfs, const AcquisitionSet& acq,
                                   std::vector<RefineLog>* logs = nullptr, const std::vector<Volume3>* gts = nullptr) {
    return detail::run_stage("refine", [&] { return refine_all_phases(inits, dvfs, acq, cfg.refine, logs, gts); });
}

inline MetricReport evaluate(const std::vector<Volume3>& recons, const std::vector<Volume3>& gts) {
    return detail::run_stage("evaluate", [&] { return evaluate_phases(recons, gts); });
}

struct PipelineResult {
    std::vector<std::pair<std::string, MetricReport>> reports;
    std::vector<Volume3> gts;
    std::map<std::string, std::vector<Volume3>> recons;

    const MetricReport* report(const std::string& method) const {
        for (const auto& [name, r] : reports)
            if (name == method) return &r;
        return nullptr;
    }
};

/// Runs every requested method, writing artifacts as each stage completes so
/// that a failure leaves the earlier outputs in place.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
    detail::run_stage("config", [&] {
        cfg.validate();
        fs::create_directories(cfg.out);
        detail::write_json_file(cfg.out / "config.json", pipeline_config_to_json(cfg));
    });

    PipelineResult res;
    Simulation sim;
    {
        detail::StageTimer t(cfg, "simulate");
        sim = simulate(cfg);
        write_simulation(sim, cfg.out);
    }
    res.gts = sim.gts;

    const bool need_ossart = cfg.wants("ossart") || (cfg.wants("dvf_gt") && cfg.dvf_gt_init == "ossart") ||
                             (cfg.wants("dvf_est") && cfg.dvf_est_init == "ossart");
    const bool need_ttv = cfg.wants("ossart_ttv") || cfg.wants("dvf_est") ||
                          (cfg.wants("dvf_gt") && cfg.dvf_gt_init == "ossart_ttv");

    auto finish = [&](const std::string& method, std::vector<Volume3> vols) {
        detail::run_stage("write", [&] { write_phases(vols, cfg.out / "recon" / method); });
        res.recons[method] = std::move(vols);
    };

    if (need_ossart) {
        detail::StageTimer t(cfg, "reconstruct ossart");
        finish("ossart", reconstruct(cfg, "ossart", sim.acq));
    }
    if (need_ttv) {
        detail::StageTimer t(cfg, "reconstruct ossart_ttv");
        finish("ossart_ttv", reconstruct(cfg, "ossart_ttv", sim.acq));
    }

    auto refine_method = [&](const std::string& method, const std::string& init, const std::vector<DvfMap>& dvfs) {
        detail::StageTimer t(cfg, "refine " + method);
        std::vector<RefineLog> logs;
        auto vols = refine(cfg, res.recons.at(init), dvfs, sim.acq, &logs, &res.gts);
        detail::run_stage("write", [&] {
            for (std::size_t i = 0; i < logs.size(); ++i)
                write_refine_log_csv(logs[i], cfg.out / "refine" / method / ("phase_" + std::to_string(i) + ".csv"));
        });
        finish(method, std::move(vols));
    };

    if (cfg.wants("dvf_gt")) {
        const auto dvfs = detail::run_stage("register", [&] { return ground_truth_dvfs(cfg); });
        detail::run_stage("write", [&] { write_dvfs(dvfs, cfg.out / "dvf" / "gt"); });
        refine_method("dvf_gt", cfg.dvf_gt_init, dvfs);
    }
    if (cfg.wants("dvf_est")) {
        std::vector<DvfMap> dvfs;
        {
            detail::StageTimer t(cfg, "register demons");
            dvfs = estimate_dvfs(cfg, res.recons.at("ossart_ttv"));
        }
        detail::run_stage("write", [&] { write_dvfs(dvfs, cfg.out / "dvf" / "est"); });
        refine_method("dvf_est", cfg.dvf_est_init, dvfs);
    }

    for (const auto& m : known_methods()) {
        if (!cfg.wants(m)) continue;
        res.reports.emplace_back(m, evaluate(res.recons.at(m), res.gts));
    }

    detail::run_stage("write", [&] {
        write_metrics_csv(res.reports, cfg.out / "metrics.csv");
        auto table = detail::open_text(cfg.out / "table.txt");
        table << format_metrics_table(res.reports);
        if (cfg.write_slices) {
            const double hi = 0.6;
            for (std::size_t i = 0; i < res.gts.size(); ++i)
                write_mid_slice_pgm(res.gts[i], cfg.out / "slices" / ("gt_phase_" + std::to_string(i) + ".pgm"), 0.0, hi);
            for (const auto& [m, vols] : res.recons) {
                if (!cfg.wants(m)) continue;
                for (std::size_t i = 0; i < vols.size(); ++i)
                    write_mid_slice_pgm(vols[i], cfg.out / "slices" / (m + "_phase_" + std::to_string(i) + ".pgm"), 0.0, hi);
            }
        }
    });
    return res;
}

}  // namespace cbct4d
