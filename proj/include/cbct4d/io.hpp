#pragma once

// File formats:
//   <name>.vol        raw little-endian float32 payload, x-fastest
//   <name>.vol.json   sidecar {"dims": [X,Y,Z], "spacing": [..], "origin": [..]}
// Views are stored as W x H x 1 volumes; ray volumes as W x H x S with the
// sample axis fastest. A DVF is three component payloads sharing one sidecar.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbct4d/acquisition.hpp"
#include "cbct4d/demons.hpp"
#include "cbct4d/dvf.hpp"
#include "cbct4d/gating.hpp"
#include "cbct4d/geometry.hpp"
#include "cbct4d/metrics.hpp"
#include "cbct4d/recon.hpp"
#include "cbct4d/refine.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline std::string sidecar_path(const fs::path& payload) { return payload.string() + ".json"; }

inline json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw error("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw error("ill-formed JSON in " + p.string() + ": " + e.what());
    }
}

inline void write_json_file(const fs::path& p, const json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw error("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

inline std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

inline void write_f32(const fs::path& p, std::span<const float> data) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::vector<std::uint32_t> words(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) words[i] = to_little(std::bit_cast<std::uint32_t>(data[i]));
    std::ofstream out(p, std::ios::binary);
    if (!out) throw error("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!out) throw error("short write to " + p.string());
}

inline std::vector<float> read_f32(const fs::path& p, std::size_t expected) {
    std::error_code ec;
    const auto bytes = fs::file_size(p, ec);
    if (ec) throw error("cannot open " + p.string());
    if (bytes != expected * 4)
        throw error("size mismatch in " + p.string() + ": header expects " + std::to_string(expected * 4) +
                    " bytes, payload has " + std::to_string(bytes));
    std::vector<std::uint32_t> words(expected);
    std::ifstream in(p, std::ios::binary);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected * 4));
    if (!in) throw error("short read from " + p.string());
    std::vector<float> out(expected);
    for (std::size_t i = 0; i < expected; ++i) out[i] = std::bit_cast<float>(to_little(words[i]));
    return out;
}

inline json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) throw error(std::string("sidecar: bad '") + key + "'");
    return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

inline GridShape grid_from_sidecar(const json& j) {
    try {
        if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3) throw error("sidecar: bad 'dims'");
        GridShape s;
        s.dims = {j["dims"][0].get<int>(), j["dims"][1].get<int>(), j["dims"][2].get<int>()};
        s.spacing = j.contains("spacing") ? vec3_from(j, "spacing") : Vec3{1.0, 1.0, 1.0};
        s.origin = j.contains("origin") ? vec3_from(j, "origin") : Vec3{};
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw error(std::string("sidecar: ") + e.what());
    }
}

inline json sidecar_for(const GridShape& s) {
    return {{"dims", json::array({s.dims.x, s.dims.y, s.dims.z})},
            {"spacing", vec3_json(s.spacing)},
            {"origin", vec3_json(s.origin)}};
}

template <class T>
void get_if(const json& j, const char* key, T& value) {
    if (j.contains(key)) value = j[key].get<T>();
}

}  // namespace detail

inline void write_volume(const Volume3& vol, const fs::path& path) {
    detail::write_f32(path, vol.data());
    json side = detail::sidecar_for(vol.shape());
    detail::write_json_file(detail::sidecar_path(path), side);
}

inline Volume3 read_volume(const fs::path& path) {
    const GridShape s = detail::grid_from_sidecar(detail::read_json_file(detail::sidecar_path(path)));
    Volume3 v(s, detail::read_f32(path, s.count()));
    check_finite<float>(v.data(), path.string().c_str());
    return v;
}

inline void write_view(const View& view, const fs::path& path, double spacing_u = 1.0, double spacing_v = 1.0) {
    detail::write_f32(path, view.data());
    const GridShape s{{view.width(), view.height(), 1}, {spacing_u, spacing_v, 1.0}, {}};
    detail::write_json_file(detail::sidecar_path(path), detail::sidecar_for(s));
}

inline View read_view(const fs::path& path) {
    const GridShape s = detail::grid_from_sidecar(detail::read_json_file(detail::sidecar_path(path)));
    if (s.dims.z != 1) throw error("view file " + path.string() + " must have dims W x H x 1");
    View v(s.dims.x, s.dims.y, detail::read_f32(path, s.count()));
    check_finite<float>(v.data(), path.string().c_str());
    return v;
}

inline void write_ray_volume(const RayVolume& r, const fs::path& path) {
    std::vector<float> f(r.data().begin(), r.data().end());
    detail::write_f32(path, f);
    json side = {{"dims", json::array({r.width(), r.height(), r.steps()})},
                 {"step_len", r.step_len()},
                 {"layout", "s-fastest"}};
    detail::write_json_file(detail::sidecar_path(path), side);
}

inline RayVolume read_ray_volume(const fs::path& path) {
    const json side = detail::read_json_file(detail::sidecar_path(path));
    const GridShape s = detail::grid_from_sidecar(side);
    double step_len = 1.0;
    detail::get_if(side, "step_len", step_len);
    if (!(step_len >= 0.0) || !std::isfinite(step_len)) throw error("ray volume " + path.string() + ": bad step_len");
    const auto f = detail::read_f32(path, s.count());
    RayVolume r(s.dims.x, s.dims.y, s.dims.z, step_len);
    std::copy(f.begin(), f.end(), r.data().begin());
    check_finite<double>(r.data(), path.string().c_str());
    return r;
}

/// Writes <prefix>.x.vol, <prefix>.y.vol, <prefix>.z.vol and the shared <prefix>.dvf.json.
inline void write_dvf(const Dvf& d, const fs::path& prefix) {
    const std::string base = prefix.string();
    detail::write_f32(base + ".x.vol", d.dx);
    detail::write_f32(base + ".y.vol", d.dy);
    detail::write_f32(base + ".z.vol", d.dz);
    json side = detail::sidecar_for(d.shape);
    side["units"] = "voxel";
    const std::string stem = prefix.filename().string();
    side["components"] = json::array({stem + ".x.vol", stem + ".y.vol", stem + ".z.vol"});
    detail::write_json_file(base + ".dvf.json", side);
}

inline Dvf read_dvf(const fs::path& prefix) {
    const std::string base = prefix.string();
    const GridShape s = detail::grid_from_sidecar(detail::read_json_file(base + ".dvf.json"));
    Dvf d(s);
    d.dx = detail::read_f32(base + ".x.vol", s.count());
    d.dy = detail::read_f32(base + ".y.vol", s.count());
    d.dz = detail::read_f32(base + ".z.vol", s.count());
    d.validate();
    return d;
}

inline json geometry_to_json(const ConeBeamGeometry& g) {
    return {{"sad", g.sad},
            {"sdd", g.sdd},
            {"det_w", g.det_w},
            {"det_h", g.det_h},
            {"det_spacing_u", g.det_spacing_u},
            {"det_spacing_v", g.det_spacing_v},
            {"det_offset_u", g.det_offset_u},
            {"det_offset_v", g.det_offset_v},
            {"angles", g.angles}};
}

inline ConeBeamGeometry geometry_from_json(const json& j) {
    ConeBeamGeometry g;
    try {
        detail::get_if(j, "sad", g.sad);
        detail::get_if(j, "sdd", g.sdd);
        detail::get_if(j, "det_w", g.det_w);
        detail::get_if(j, "det_h", g.det_h);
        detail::get_if(j, "det_spacing_u", g.det_spacing_u);
        detail::get_if(j, "det_spacing_v", g.det_spacing_v);
        detail::get_if(j, "det_offset_u", g.det_offset_u);
        detail::get_if(j, "det_offset_v", g.det_offset_v);
        detail::get_if(j, "angles", g.angles);
    } catch (const json::exception& e) {
        throw error(std::string("geometry JSON: ") + e.what());
    }
    g.validate();
    return g;
}

inline json binning_to_json(const PhaseBinning& b) {
    return {{"n_phases", b.n_phases}, {"phase_of_view", b.phase_of_view}, {"bins", b.bins}, {"degenerate", b.degenerate}};
}

inline PhaseBinning binning_from_json(const json& j) {
    PhaseBinning b;
    try {
        b.n_phases = j.at("n_phases").get<int>();
        b.phase_of_view = j.at("phase_of_view").get<std::vector<int>>();
        detail::get_if(j, "degenerate", b.degenerate);
        if (j.contains("bins")) b.bins = j["bins"].get<std::vector<std::vector<int>>>();
        else b.rebuild_bins();
    } catch (const json::exception& e) {
        throw error(std::string("binning JSON: ") + e.what());
    }
    b.validate();
    return b;
}

inline json recon_config_to_json(const ReconConfig& c) {
    return {{"n_iters", c.n_iters},       {"n_subsets", c.n_subsets},   {"relaxation", c.relaxation},
            {"tv_weight", c.tv_weight},   {"ttv_weight", c.ttv_weight}, {"nonneg", c.nonneg},
            {"S", c.steps}};
}

inline ReconConfig recon_config_from_json(const json& j, ReconConfig c = {}) {
    try {
        detail::get_if(j, "n_iters", c.n_iters);
        detail::get_if(j, "n_subsets", c.n_subsets);
        detail::get_if(j, "relaxation", c.relaxation);
        detail::get_if(j, "tv_weight", c.tv_weight);
        detail::get_if(j, "ttv_weight", c.ttv_weight);
        detail::get_if(j, "nonneg", c.nonneg);
        detail::get_if(j, "S", c.steps);
    } catch (const json::exception& e) {
        throw error(std::string("recon config: ") + e.what());
    }
    c.validate();
    return c;
}

inline json refine_config_to_json(const RefineConfig& c) {
    return {{"n_iters", c.n_iters},
            {"step", c.step},
            {"use_all_phases", c.use_all_phases},
            {"tv_weight", c.tv_weight},
            {"S", c.steps}};
}

inline RefineConfig refine_config_from_json(const json& j, RefineConfig c = {}) {
    try {
        detail::get_if(j, "n_iters", c.n_iters);
        detail::get_if(j, "step", c.step);
        detail::get_if(j, "use_all_phases", c.use_all_phases);
        detail::get_if(j, "tv_weight", c.tv_weight);
        detail::get_if(j, "S", c.steps);
    } catch (const json::exception& e) {
        throw error(std::string("refine config: ") + e.what());
    }
    c.validate();
    return c;
}

inline std::string view_file_name(int k) {
    std::ostringstream s;
    s << "view_" << std::setw(4) << std::setfill('0') << k << ".vol";
    return s.str();
}

/// Directory layout: geometry.json, binning.json, views/view_NNNN.vol (+ sidecars).
inline void write_acquisition(const AcquisitionSet& acq, const fs::path& dir) {
    acq.validate();
    fs::create_directories(dir / "views");
    detail::write_json_file(dir / "geometry.json", geometry_to_json(acq.geom));
    detail::write_json_file(dir / "binning.json", binning_to_json(acq.binning));
    for (int k = 0; k < acq.n_views(); ++k)
        write_view(acq.views[static_cast<std::size_t>(k)], dir / "views" / view_file_name(k), acq.geom.det_spacing_u,
                   acq.geom.det_spacing_v);
}

inline AcquisitionSet read_acquisition(const fs::path& dir) {
    AcquisitionSet acq;
    acq.geom = geometry_from_json(detail::read_json_file(dir / "geometry.json"));
    acq.binning = binning_from_json(detail::read_json_file(dir / "binning.json"));
    for (int k = 0; k < acq.geom.n_views(); ++k) acq.views.push_back(read_view(dir / "views" / view_file_name(k)));
    acq.validate();
    return acq;
}

inline json demons_config_to_json(const DemonsConfig& c) {
    return {{"levels", c.levels}, {"iters", c.iters}, {"sigma_fluid", c.sigma_fluid}, {"sigma_diffusion", c.sigma_diffusion}};
}

inline DemonsConfig demons_config_from_json(const json& j, DemonsConfig c = {}) {
    try {
        detail::get_if(j, "levels", c.levels);
        detail::get_if(j, "iters", c.iters);
        detail::get_if(j, "sigma_fluid", c.sigma_fluid);
        detail::get_if(j, "sigma_diffusion", c.sigma_diffusion);
    } catch (const json::exception& e) {
        throw error(std::string("demons config: ") + e.what());
    }
    if (c.levels < 1 || c.iters < 0 || c.sigma_fluid < 0.0 || c.sigma_diffusion < 0.0)
        throw error("demons config: levels >= 1, iters >= 0 and sigmas >= 0 required");
    return c;
}

namespace detail {

/// Fixed 6-decimal formatting so that equal runs give byte-identical files.
inline std::string fmt6(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << v;
    return s.str();
}

inline std::ofstream open_text(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw error("cannot write " + p.string());
    return out;
}

}  // namespace detail

/// Rows: method, phase (index or "mean"), psnr, ssim.
inline void write_metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& reports, const fs::path& path) {
    auto out = detail::open_text(path);
    out << "method,phase,psnr,ssim\n";
    for (const auto& [name, r] : reports) {
        for (std::size_t i = 0; i < r.per_phase.size(); ++i)
            out << name << ',' << i << ',' << detail::fmt6(r.per_phase[i].psnr) << ',' << detail::fmt6(r.per_phase[i].ssim)
                << '\n';
        out << name << ",mean," << detail::fmt6(r.mean_psnr) << ',' << detail::fmt6(r.mean_ssim) << '\n';
    }
}

/// Methods as rows, phases then "Average" as columns; each cell is "PSNR / SSIM".
inline std::string format_metrics_table(const std::vector<std::pair<std::string, MetricReport>>& reports) {
    std::size_t n_phases = 0, name_w = 6;
    for (const auto& [name, r] : reports) {
        n_phases = std::max(n_phases, r.per_phase.size());
        name_w = std::max(name_w, name.size());
    }
    auto cell = [](double p, double s) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(2) << p << " / " << std::setprecision(4) << s;
        return c.str();
    };
    constexpr int cell_w = 17;
    std::ostringstream t;
    t << std::left << std::setw(static_cast<int>(name_w)) << "Method";
    for (std::size_t i = 0; i < n_phases; ++i) t << " | " << std::setw(cell_w) << ("Phase " + std::to_string(i));
    t << " | " << std::setw(cell_w) << "Average" << '\n';
    t << std::string(name_w + (n_phases + 1) * (cell_w + 3), '-') << '\n';
    for (const auto& [name, r] : reports) {
        t << std::setw(static_cast<int>(name_w)) << name;
        for (std::size_t i = 0; i < n_phases; ++i)
            t << " | " << std::setw(cell_w) << (i < r.per_phase.size() ? cell(r.per_phase[i].psnr, r.per_phase[i].ssim) : "");
        t << " | " << std::setw(cell_w) << cell(r.mean_psnr, r.mean_ssim) << '\n';
    }
    return t.str();
}

inline void write_refine_log_csv(const RefineLog& log, const fs::path& path) {
    auto out = detail::open_text(path);
    out << "iter,objective,psnr\n";
    for (const auto& row : log.rows) {
        std::ostringstream obj;
        obj << std::setprecision(17) << row.objective;
        out << row.iter << ',' << obj.str() << ',' << (std::isnan(row.psnr) ? std::string() : detail::fmt6(row.psnr)) << '\n';
    }
}

/// Mid-axial slice as an 8-bit binary PGM, values mapped linearly from [lo, hi].
inline void write_mid_slice_pgm(const Volume3& vol, const fs::path& path, double lo, double hi) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const Dims3 d = vol.dims();
    const int z = d.z / 2;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write " + path.string());
    out << "P5\n" << d.x << ' ' << d.y << "\n255\n";
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = d.y - 1; y >= 0; --y)
        for (int x = 0; x < d.x; ++x) {
            const double t = std::clamp((static_cast<double>(vol(x, y, z)) - lo) / span, 0.0, 1.0);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
        }
}

}  // namespace cbct4d
