#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "magdda/constants.hpp"
#include "magdda/emission.hpp"
#include "magdda/errors.hpp"
#include "magdda/geometry.hpp"
#include "magdda/material.hpp"
#include "magdda/mie.hpp"
#include "magdda/multipole.hpp"
#include "magdda/optimizer.hpp"
#include "magdda/quadrature.hpp"
#include "magdda/scene.hpp"
#include "magdda/solver.hpp"
#include "magdda/source.hpp"
#include "magdda/stats.hpp"
#include "magdda/surrogate.hpp"

namespace magdda {

struct DriverOptions {
    std::string out_dir = ".";
    int jobs = 0;                 // 0 = all logical cores
    std::uint64_t seed = 1;
    double tolerance = 1e-6;      // iterative solver residual target
    double spacing_um = 0.0;      // > 0 overrides the scene grid block
    std::optional<double> b_override; // tesla, replaces the scene's b list
    bool strict = false;          // mie-check: nonzero exit on delta breach
    int dense_threshold = 3000;   // direct solve when 3*active <= this
    std::string dataset_path;     // optimize: reuse or write the sample CSV
    int dataset_count = 220;      // optimize: latin hypercube sample count
    double gap_um = 3.0;          // optimize: offset-surface coupling distance
    GAConfig ga;
    int train_epochs = 500;
};

struct RunManifest {
    std::uint64_t scene_hash = 0;
    std::string engine = engine_version;
    std::uint64_t seed = 0;
    std::string started_utc, finished_utc;
    std::vector<std::pair<std::string, std::uint64_t>> outputs; // file, checksum
};

namespace detail_driver {

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("checksum: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

/// Run fn(0..n-1) on a bounded worker pool; first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, const Fn& fn) {
    int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n)
                    return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error)
                        first_error = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw ConfigError("cannot open output file '" + path + "'");
    out.precision(12);
    return out;
}

} // namespace detail_driver

/// Scene materialized for solving: voxel grid, material table, sweep axes.
struct PreparedScene {
    Scene scene;
    VoxelGrid grid;               // empty when the shape has no voxels requested
    std::vector<Material> materials;
    std::vector<double> axis;     // sweep-axis values in file units
    std::vector<double> omegas;   // absolute angular frequencies per axis value
    std::vector<double> b_values;
    double spacing = 0.0;         // m
    double max_validity = 0.0;
};

inline PreparedScene prepare_scene(const Scene& sc, const DriverOptions& opt) {
    PreparedScene ps;
    ps.scene = sc;
    ps.materials = sc.grid_materials();
    ps.b_values = opt.b_override ? std::vector<double>{*opt.b_override} : sc.b_values;

    // sweep axes
    ps.axis.resize(static_cast<std::size_t>(sc.sweep.points));
    for (int i = 0; i < sc.sweep.points; ++i) {
        const double f = static_cast<double>(i) / (sc.sweep.points - 1);
        if (sc.sweep.axis == SweepSpec::Axis::distance) {
            // geometric spacing covers near and far zones evenly in log d
            ps.axis[static_cast<std::size_t>(i)] =
                sc.sweep.min * std::pow(sc.sweep.max / sc.sweep.min, f);
        } else {
            ps.axis[static_cast<std::size_t>(i)] = sc.sweep.min + f * (sc.sweep.max - sc.sweep.min);
        }
    }
    if (sc.sweep.axis == SweepSpec::Axis::frequency) {
        ps.omegas.reserve(ps.axis.size());
        for (const double a : ps.axis)
            ps.omegas.push_back(sc.to_omega(a));
    } else {
        ps.omegas.assign(ps.axis.size(), sc.to_omega(sc.sweep.fixed));
    }

    // spacing: flag override, scene value, or validity-driven default
    double spacing = opt.spacing_um > 0.0 ? opt.spacing_um * 1e-6 : sc.spacing_si();
    const double omega_top = *std::max_element(ps.omegas.begin(), ps.omegas.end());
    if (spacing <= 0.0) {
        double max_m = 1.0;
        for (const auto& m : ps.materials)
            for (const double b : ps.b_values)
                for (const double w : ps.omegas) {
                    const Eigen::Matrix3cd eps = m.permittivity(w, b);
                    for (int d = 0; d < 3; ++d)
                        max_m = std::max(max_m, std::sqrt(std::abs(eps(d, d))));
                }
        const Eigen::Vector3d he = std::visit(
            [](const auto& s) { return detail::half_extent(s); }, sc.shape_si());
        const double min_feature = he.minCoeff();
        spacing = auto_spacing(max_m, omega_top / constants::c0, min_feature);
    }
    ps.spacing = spacing;
    ps.grid = voxelize(sc.shape_si(), spacing);

    // validity scan over the sweep; warn > 0.5, refuse > 1.0
    for (const auto& m : ps.materials)
        for (const double b : ps.b_values)
            for (const double w : ps.omegas)
                ps.max_validity =
                    std::max(ps.max_validity, validity_metric(m.permittivity(w, b), w, spacing));
    if (ps.max_validity > 1.0)
        throw GridError("grid spacing too coarse: validity metric " +
                        std::to_string(ps.max_validity) +
                        " exceeds 1.0; reduce spacing_um");
    if (ps.max_validity > 0.5)
        std::cerr << "warning: validity metric reaches " << ps.max_validity
                  << " (> 0.5); results are qualitative at this spacing\n";

    // point sources must not sit inside any voxel cube
    for (const auto& scfg : sc.sources)
        if (const auto* p = std::get_if<PointSourceConfig>(&scfg)) {
            const Eigen::Vector3d r0 = p->position_um * 1e-6;
            for (const auto& c : ps.grid.centers)
                if ((r0 - c).cwiseAbs().maxCoeff() <= 0.5 * spacing)
                    throw ConfigError("scene.sources: point source at (" +
                                      std::to_string(p->position_um.x()) + ", " +
                                      std::to_string(p->position_um.y()) + ", " +
                                      std::to_string(p->position_um.z()) +
                                      ") um lies inside a voxel");
        }
    return ps;
}

inline PlaneWave scene_plane_wave(const Scene& sc) {
    const PlaneWaveConfig* found = nullptr;
    for (const auto& s : sc.sources)
        if (const auto* pw = std::get_if<PlaneWaveConfig>(&s)) {
            if (found)
                throw ConfigError("scene.sources: several plane waves; keep one");
            found = pw;
        }
    if (!found)
        throw ConfigError("this subcommand needs a plane-wave source in the scene");
    return std::get<PlaneWave>(to_source_spec(*found));
}

inline SourceSpec scene_point_source(const Scene& sc) {
    const PointSourceConfig* found = nullptr;
    for (const auto& s : sc.sources)
        if (const auto* p = std::get_if<PointSourceConfig>(&s)) {
            if (found)
                throw ConfigError("scene.sources: several point sources; keep one");
            found = p;
        }
    if (!found)
        throw ConfigError("this subcommand needs a point source in the scene");
    return to_source_spec(*found);
}

namespace detail_driver {

inline SolverOptions solver_options(const DriverOptions& opt) {
    SolverOptions so;
    so.tolerance = opt.tolerance;
    so.dense_threshold = opt.dense_threshold;
    return so;
}

inline void write_manifest(const std::string& out_dir, RunManifest& man) {
    man.finished_utc = utc_now();
    nlohmann::json j;
    j["schema"] = "magdda-manifest/1";
    j["scene_hash"] = hex64(man.scene_hash);
    j["engine"] = man.engine;
    j["seed"] = man.seed;
    j["started_utc"] = man.started_utc;
    j["finished_utc"] = man.finished_utc;
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& [file, sum] : man.outputs)
        outs.push_back({{"file", file}, {"fnv1a64", hex64(sum)}});
    j["outputs"] = outs;
    std::ofstream out(out_dir + "/manifest.json");
    if (!out)
        throw ConfigError("cannot write manifest in '" + out_dir + "'");
    out << j.dump(2) << '\n';
}

inline void add_output(RunManifest& man, const std::string& out_dir, const std::string& name) {
    man.outputs.emplace_back(name, file_checksum(out_dir + "/" + name));
}

inline RunManifest begin_run(const Scene& sc, const DriverOptions& opt) {
    std::filesystem::create_directories(opt.out_dir);
    RunManifest man;
    man.scene_hash = scene_hash(sc);
    man.seed = opt.seed;
    man.started_utc = utc_now();
    return man;
}

} // namespace detail_driver

// ---- scatter ---------------------------------------------------------------

struct ScatterRow {
    PartialCrossSections partials;
    double farfield = 0.0;
};

/// Multipole cross sections over the sweep for one bias value; sequential
/// runs reuse the previous solution as the Krylov warm start.
inline std::vector<ScatterRow> scatter_rows(const PreparedScene& ps, const PlaneWave& pw,
                                            double b_z, const DriverOptions& opt,
                                            const SphereQuadrature& quad) {
    std::vector<ScatterRow> rows(ps.omegas.size());
    const SolverOptions so = detail_driver::solver_options(opt);
    const auto compute = [&](std::size_t i, const FieldSolution* warm) {
        CdmSystem system(ps.grid, ps.materials, ps.omegas[i], b_z, so);
        const FieldSolution sol = system.solve(pw, warm);
        const MultipoleSpectrum sp = moments(sol, ps.grid);
        rows[i].partials = cross_sections(sp, pw.amplitude).csca;
        rows[i].farfield = far_field_csca(sol, ps.grid, pw.amplitude, quad);
        return sol;
    };
    if (opt.jobs == 1 || std::thread::hardware_concurrency() <= 1) {
        FieldSolution prev;
        bool have_prev = false;
        for (std::size_t i = 0; i < ps.omegas.size(); ++i) {
            prev = compute(i, have_prev ? &prev : nullptr);
            have_prev = true;
        }
    } else {
        detail_driver::parallel_for(ps.omegas.size(), opt.jobs,
                                    [&](std::size_t i) { compute(i, nullptr); });
    }
    return rows;
}

inline RunManifest run_scatter(const Scene& sc, const DriverOptions& opt) {
    RunManifest man = detail_driver::begin_run(sc, opt);
    const PreparedScene ps = prepare_scene(sc, opt);
    const PlaneWave pw = scene_plane_wave(sc);
    const SphereQuadrature quad = default_sphere_quadrature();

    std::vector<std::vector<ScatterRow>> per_b;
    for (const double b : ps.b_values)
        per_b.push_back(scatter_rows(ps, pw, b, opt, quad));

    auto out = detail_driver::open_csv(opt.out_dir + "/scatter.csv");
    out << "omega_over_omega_p,f_thz";
    const char* names[] = {"ed", "md", "eq", "mq", "eo", "mo", "total", "farfield_total"};
    for (std::size_t bi = 0; bi < ps.b_values.size(); ++bi) {
        const std::string suffix = bi == 0 ? "" : "_b" + std::to_string(bi);
        for (const char* n : names)
            out << ',' << n << suffix;
    }
    out << '\n';
    const double wp = sc.omega_p();
    for (std::size_t i = 0; i < ps.omegas.size(); ++i) {
        out << ps.omegas[i] / wp << ',' << ps.omegas[i] / (2.0 * constants::pi * 1e12);
        for (std::size_t bi = 0; bi < ps.b_values.size(); ++bi) {
            const ScatterRow& r = per_b[bi][i];
            out << ',' << r.partials.ed << ',' << r.partials.md << ',' << r.partials.eq << ','
                << r.partials.mq << ',' << r.partials.eo << ',' << r.partials.mo << ','
                << r.partials.total() << ',' << r.farfield;
        }
        out << '\n';
    }
    out.close();
    detail_driver::add_output(man, opt.out_dir, "scatter.csv");
    detail_driver::write_manifest(opt.out_dir, man);
    return man;
}

// ---- decay -----------------------------------------------------------------

struct DecayRow {
    DecayRates rates;
    double gamma_green = 1.0;
};

/// Re-place a point source at surface gap `d` along the ray through its
/// configured position (used by distance sweeps).
inline SourceSpec place_at_gap(const SourceSpec& src, const Shape& shape_si, double d) {
    const Eigen::Vector3d r0 = std::visit(
        [](const auto& s) -> Eigen::Vector3d {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, PlaneWave>)
                throw ConfigError("distance sweep needs a point source");
            else
                return s.r0;
        },
        src);
    if (r0.norm() <= 0.0)
        throw ConfigError("distance sweep: source must sit away from the origin");
    const Eigen::Vector3d u = r0.normalized();
    // surface crossing along the ray by bisection on containment
    double lo = 0.0, hi = r0.norm();
    while (std::visit([&](const auto& s) { return detail::contains(s, hi * u); }, shape_si))
        hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (std::visit([&](const auto& s) { return detail::contains(s, mid * u); }, shape_si))
            lo = mid;
        else
            hi = mid;
    }
    const double t_surface = 0.5 * (lo + hi);
    SourceSpec moved = src;
    std::visit(
        [&](auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (!std::is_same_v<T, PlaneWave>)
                s.r0 = (t_surface + d) * u;
        },
        moved);
    return moved;
}

inline std::vector<DecayRow> decay_rows(const PreparedScene& ps, const SourceSpec& src,
                                        double b_z, const DriverOptions& opt,
                                        const SphereQuadrature& quad) {
    std::vector<DecayRow> rows(ps.axis.size());
    const SolverOptions so = detail_driver::solver_options(opt);
    const bool distance = ps.scene.sweep.axis == SweepSpec::Axis::distance;
    const Shape shape = ps.scene.shape_si();
    const auto compute = [&](std::size_t i, const FieldSolution* warm) {
        const SourceSpec local =
            distance ? place_at_gap(src, shape, ps.axis[i] * 1e-6) : src;
        CdmSystem system(ps.grid, ps.materials, ps.omegas[i], b_z, so);
        const FieldSolution sol = system.solve(local, warm);
        rows[i].rates = decay_rates(system, sol, local, quad);
        rows[i].gamma_green = gamma_total_via_green(sol, ps.grid, local, ps.omegas[i]);
        return sol;
    };
    if (opt.jobs == 1 || std::thread::hardware_concurrency() <= 1) {
        FieldSolution prev;
        bool have_prev = false;
        for (std::size_t i = 0; i < ps.axis.size(); ++i) {
            prev = compute(i, have_prev && !distance ? &prev : nullptr);
            have_prev = true;
        }
    } else {
        detail_driver::parallel_for(ps.axis.size(), opt.jobs,
                                    [&](std::size_t i) { compute(i, nullptr); });
    }
    return rows;
}

inline RunManifest run_decay(const Scene& sc, const DriverOptions& opt) {
    RunManifest man = detail_driver::begin_run(sc, opt);
    const PreparedScene ps = prepare_scene(sc, opt);
    const SourceSpec src = scene_point_source(sc);
    const SphereQuadrature quad = default_sphere_quadrature();

    std::vector<std::vector<DecayRow>> per_b;
    for (const double b : ps.b_values)
        per_b.push_back(decay_rows(ps, src, b, opt, quad));

    const bool distance = sc.sweep.axis == SweepSpec::Axis::distance;
    auto out = detail_driver::open_csv(opt.out_dir + "/decay.csv");
    out << (distance ? "d_um" : "omega_over_omega_p,f_thz");
    const char* names[] = {"gamma_r", "gamma_nr", "gamma_tot", "eta", "gamma_green"};
    for (std::size_t bi = 0; bi < ps.b_values.size(); ++bi) {
        const std::string suffix = bi == 0 ? "" : "_b" + std::to_string(bi);
        for (const char* n : names)
            out << ',' << n << suffix;
    }
    out << '\n';
    const double wp = sc.omega_p();
    for (std::size_t i = 0; i < ps.axis.size(); ++i) {
        if (distance)
            out << ps.axis[i];
        else
            out << ps.omegas[i] / wp << ',' << ps.omegas[i] / (2.0 * constants::pi * 1e12);
        for (std::size_t bi = 0; bi < ps.b_values.size(); ++bi) {
            const DecayRow& r = per_b[bi][i];
            out << ',' << r.rates.gamma_r << ',' << r.rates.gamma_nr << ',' << r.rates.gamma_tot
                << ',' << r.rates.eta << ',' << r.gamma_green;
        }
        out << '\n';
    }
    out.close();
    detail_driver::add_output(man, opt.out_dir, "decay.csv");

    // far-field pattern dump on request (first bias value)
    if (sc.pattern) {
        const double omega = sc.to_omega(sc.pattern->omega);
        CdmSystem system(ps.grid, ps.materials, omega, ps.b_values.front(),
                         detail_driver::solver_options(opt));
        const FieldSolution sol = system.solve(src);
        auto pat = detail_driver::open_csv(opt.out_dir + "/pattern.csv");
        pat << "theta_rad,phi_rad,intensity\n";
        std::vector<double> vals;
        std::vector<std::pair<double, double>> dirs;
        for (int it = 0; it < sc.pattern->n_theta; ++it)
            for (int ip = 0; ip < sc.pattern->n_phi; ++ip) {
                const double th = (it + 0.5) * constants::pi / sc.pattern->n_theta;
                const double ph = 2.0 * constants::pi * ip / sc.pattern->n_phi;
                const Eigen::Vector3d n(std::sin(th) * std::cos(ph),
                                        std::sin(th) * std::sin(ph), std::cos(th));
                const Eigen::Vector3cd f =
                    source_far_field(src, n, omega) + scattered_far_field(sol, ps.grid, n);
                dirs.emplace_back(th, ph);
                vals.push_back(f.squaredNorm());
            }
        const double peak = *std::max_element(vals.begin(), vals.end());
        for (std::size_t q = 0; q < vals.size(); ++q)
            pat << dirs[q].first << ',' << dirs[q].second << ','
                << (peak > 0.0 ? vals[q] / peak : 0.0) << '\n';
        pat.close();
        detail_driver::add_output(man, opt.out_dir, "pattern.csv");
    }
    detail_driver::write_manifest(opt.out_dir, man);
    return man;
}

// ---- sweep (long format over frequency x bias) -----------------------------

inline RunManifest run_sweep(const Scene& sc, const DriverOptions& opt) {
    RunManifest man = detail_driver::begin_run(sc, opt);
    const PreparedScene ps = prepare_scene(sc, opt);
    const SphereQuadrature quad = default_sphere_quadrature();

    const bool have_pw = std::any_of(sc.sources.begin(), sc.sources.end(), [](const auto& s) {
        return std::holds_alternative<PlaneWaveConfig>(s);
    });
    auto out = detail_driver::open_csv(opt.out_dir + "/sweep.csv");
    const double wp = sc.omega_p();
    if (have_pw) {
        const PlaneWave pw = scene_plane_wave(sc);
        out << "omega_over_omega_p,f_thz,b_z,ed,md,eq,mq,eo,mo,total,farfield_total\n";
        for (const double b : ps.b_values) {
            const auto rows = scatter_rows(ps, pw, b, opt, quad);
            for (std::size_t i = 0; i < rows.size(); ++i)
                out << ps.omegas[i] / wp << ',' << ps.omegas[i] / (2.0 * constants::pi * 1e12)
                    << ',' << b << ',' << rows[i].partials.ed << ',' << rows[i].partials.md
                    << ',' << rows[i].partials.eq << ',' << rows[i].partials.mq << ','
                    << rows[i].partials.eo << ',' << rows[i].partials.mo << ','
                    << rows[i].partials.total() << ',' << rows[i].farfield << '\n';
        }
    } else {
        const SourceSpec src = scene_point_source(sc);
        out << "omega_over_omega_p,f_thz,b_z,gamma_r,gamma_nr,gamma_tot,eta,gamma_green\n";
        for (const double b : ps.b_values) {
            const auto rows = decay_rows(ps, src, b, opt, quad);
            for (std::size_t i = 0; i < rows.size(); ++i)
                out << ps.omegas[i] / wp << ',' << ps.omegas[i] / (2.0 * constants::pi * 1e12)
                    << ',' << b << ',' << rows[i].rates.gamma_r << ',' << rows[i].rates.gamma_nr
                    << ',' << rows[i].rates.gamma_tot << ',' << rows[i].rates.eta << ','
                    << rows[i].gamma_green << '\n';
        }
    }
    out.close();
    detail_driver::add_output(man, opt.out_dir, "sweep.csv");
    detail_driver::write_manifest(opt.out_dir, man);
    return man;
}

// ---- grid dump -------------------------------------------------------------

inline RunManifest run_grid_dump(const Scene& sc, const DriverOptions& opt) {
    RunManifest man = detail_driver::begin_run(sc, opt);
    const PreparedScene ps = prepare_scene(sc, opt);
    auto out = detail_driver::open_csv(opt.out_dir + "/grid.csv");
    out << "x_m,y_m,z_m,material\n";
    for (std::size_t i = 0; i < ps.grid.size(); ++i) {
        const auto& c = ps.grid.centers[i];
        const int id = ps.grid.material[i];
        out << c.x() << ',' << c.y() << ',' << c.z() << ','
            << ps.scene.shape_materials.at(static_cast<std::size_t>(id)) << '\n';
    }
    out.close();
    detail_driver::add_output(man, opt.out_dir, "grid.csv");
    detail_driver::write_manifest(opt.out_dir, man);
    return man;
}

// ---- mie-check -------------------------------------------------------------

struct MieCheckResult {
    RunManifest manifest;
    double max_delta_csca = 0.0;
    double max_delta_rates = 0.0;
    bool rates_checked = false;
};

inline MieCheckResult run_mie_check(const Scene& sc, const DriverOptions& opt) {
    MieCheckResult result;
    result.manifest = detail_driver::begin_run(sc, opt);
    const auto* sphere = std::get_if<Sphere>(&sc.shape_um);
    if (!sphere)
        throw ConfigError("mie-check: the scene shape must be a single sphere");
    const PreparedScene ps = prepare_scene(sc, opt);
    const double radius = sphere->radius * 1e-6;
    const double b = ps.b_values.front();
    const Material& mat = ps.materials.front();

    // isotropy gate (constant epsilon, or unbiased Drude which is scalar)
    const auto scalar_eps = [&](double omega) {
        const Eigen::Matrix3cd eps = mat.permittivity(omega, b);
        const double off = std::abs(eps(0, 1)) + std::abs(eps(0, 2)) + std::abs(eps(1, 0)) +
                           std::abs(eps(1, 2)) + std::abs(eps(2, 0)) + std::abs(eps(2, 1));
        const double diag_spread = std::abs(eps(0, 0) - eps(2, 2)) + std::abs(eps(1, 1) - eps(2, 2));
        const double scale = std::max(1.0, std::abs(eps(2, 2)));
        if (off > 1e-10 * scale || diag_spread > 1e-10 * scale)
            throw ConfigError("mie-check: material is not isotropic at this bias; "
                              "the oracle covers isotropic spheres only");
        return eps(2, 2);
    };

    const PlaneWave pw = [&]() {
        for (const auto& s : sc.sources)
            if (std::holds_alternative<PlaneWaveConfig>(s))
                return scene_plane_wave(sc);
        return PlaneWave{};
    }();
    const PointSourceConfig* point_cfg = nullptr;
    for (const auto& s : sc.sources)
        if (const auto* p = std::get_if<PointSourceConfig>(&s))
            point_cfg = p;

    const SphereQuadrature quad = default_sphere_quadrature();
    const SolverOptions so = detail_driver::solver_options(opt);
    const double wp = sc.omega_p();

    auto out = detail_driver::open_csv(opt.out_dir + "/mie_check.csv");
    out << "omega_over_omega_p,f_thz,kr,validity,csca_solver,csca_oracle,delta_csca_rel";
    if (point_cfg)
        out << ",gamma_r_solver,gamma_r_oracle,delta_gamma_r_rel,"
               "gamma_tot_solver,gamma_tot_oracle,delta_gamma_tot_rel";
    out << '\n';
    auto coef = detail_driver::open_csv(opt.out_dir + "/mie_coefficients.csv");
    coef << "omega_over_omega_p,f_thz,n,re_an,im_an,re_bn,im_bn\n";

    const auto rel_delta = [](double a, double oracle) {
        const double scale = std::abs(oracle);
        if (scale <= 1e-300)
            return std::abs(a) <= 1e-300 ? 0.0 : std::numeric_limits<double>::infinity();
        return std::abs(a - oracle) / scale;
    };

    for (std::size_t i = 0; i < ps.omegas.size(); ++i) {
        const double omega = ps.omegas[i];
        const std::complex<double> eps = scalar_eps(omega);
        const double k = omega / constants::c0;
        const MieCoefficients mc = mie_coefficients(eps, radius, omega);
        const double csca_oracle = mie_csca(mc);
        for (int n = 1; n <= mc.L; ++n)
            coef << omega / wp << ',' << omega / (2.0 * constants::pi * 1e12) << ',' << n << ','
                 << mc.a[static_cast<std::size_t>(n)].real() << ','
                 << mc.a[static_cast<std::size_t>(n)].imag() << ','
                 << mc.b[static_cast<std::size_t>(n)].real() << ','
                 << mc.b[static_cast<std::size_t>(n)].imag() << '\n';

        CdmSystem system(ps.grid, ps.materials, omega, b, so);
        const FieldSolution sol = system.solve(pw);
        const double csca_solver = far_field_csca(sol, ps.grid, pw.amplitude, quad);
        const double d_csca = rel_delta(csca_solver, csca_oracle);
        result.max_delta_csca = std::max(result.max_delta_csca, d_csca);
        const double validity = validity_metric(mat.permittivity(omega, b), omega, ps.spacing);

        out << omega / wp << ',' << omega / (2.0 * constants::pi * 1e12) << ',' << k * radius
            << ',' << validity << ',' << csca_solver << ',' << csca_oracle << ',' << d_csca;
        if (point_cfg) {
            const SourceSpec src = to_source_spec(*point_cfg);
            const Eigen::Vector3d r0 = point_cfg->position_um * 1e-6;
            const double gap = r0.norm() - radius;
            if (gap <= 0.0)
                throw ConfigError("mie-check: point source must sit outside the sphere");
            const Eigen::Vector3d rhat = r0.normalized();
            const Eigen::Vector3d axis = point_cfg->orientation.normalized();
            const double along = std::abs(axis.dot(rhat));
            EmitterOrientation orientation;
            if (along > 1.0 - 1e-9)
                orientation = EmitterOrientation::radial;
            else if (along < 1e-9)
                orientation = EmitterOrientation::tangential;
            else
                throw ConfigError("mie-check: emitter must be radial or tangential to the "
                                  "sphere for the oracle comparison");
            const MieEmitterRates oracle = emitter_rates_near_sphere(
                eps, radius, gap, orientation,
                point_cfg->magnetic ? EmitterKind::magnetic_dipole
                                    : EmitterKind::electric_dipole,
                omega);
            const FieldSolution esol = system.solve(src);
            const DecayRates rates = decay_rates(system, esol, src, quad);
            const double d_gr = rel_delta(rates.gamma_r, oracle.gamma_r);
            const double d_gt = rel_delta(rates.gamma_tot, oracle.gamma_tot);
            result.max_delta_rates = std::max({result.max_delta_rates, d_gr, d_gt});
            result.rates_checked = true;
            out << ',' << rates.gamma_r << ',' << oracle.gamma_r << ',' << d_gr << ','
                << rates.gamma_tot << ',' << oracle.gamma_tot << ',' << d_gt;
        }
        out << '\n';
    }
    out.close();
    coef.close();
    detail_driver::add_output(result.manifest, opt.out_dir, "mie_check.csv");
    detail_driver::add_output(result.manifest, opt.out_dir, "mie_coefficients.csv");
    detail_driver::write_manifest(opt.out_dir, result.manifest);

    if (ps.max_validity > 0.5)
        std::cerr << "warning: oracle deltas computed at validity " << ps.max_validity
                  << "; treat them as diagnostics, not accuracy statements\n";
    std::cout << "mie-check: max |delta C_sca| = " << result.max_delta_csca;
    if (result.rates_checked)
        std::cout << ", max emitter-rate delta = " << result.max_delta_rates;
    std::cout << '\n';
    return result;
}

// ---- optimize --------------------------------------------------------------

struct OptimizeOutcome {
    RunManifest manifest;
    PlacementResult placement;
    double heldout_rank_correlation = 0.0;
    double dataset_best = 0.0;
    Eigen::Vector3d dataset_best_position{0.0, 0.0, 0.0};
};

inline OptimizeOutcome run_optimize(const Scene& sc, const DriverOptions& opt) {
    OptimizeOutcome oc;
    oc.manifest = detail_driver::begin_run(sc, opt);
    const PreparedScene ps = prepare_scene(sc, opt);
    const Shape shape = sc.shape_si();
    const double gap = opt.gap_um * 1e-6;
    const double b = ps.b_values.front();
    const SphereQuadrature quad = default_sphere_quadrature();

    // emitter kind from the scene's point source
    EmitterKind6 kind = EmitterKind6::MDx;
    for (const auto& s : sc.sources)
        if (const auto* p = std::get_if<PointSourceConfig>(&s)) {
            const Eigen::Vector3d a = p->orientation.normalized();
            int axis = 0;
            a.cwiseAbs().maxCoeff(&axis);
            kind = static_cast<EmitterKind6>((p->magnetic ? 3 : 0) + axis);
        }

    const double omega_min = sc.to_omega(sc.sweep.min);
    const double omega_max = sc.to_omega(sc.sweep.max);

    SolverOptions so = detail_driver::solver_options(opt);
    // raise the direct-solve cutoff so repeated source positions at one
    // frequency reuse a single factorization
    so.dense_threshold = std::max(so.dense_threshold, opt.dense_threshold);

    const auto evaluate = [&](const SampleRecord& rec) {
        SourceSpec src;
        if (emitter_kind_magnetic(rec.kind)) {
            PointMD s;
            s.r0 = rec.position;
            s.m = 1e-25 * emitter_kind_axis(rec.kind).cast<std::complex<double>>();
            src = s;
        } else {
            PointED s;
            s.r0 = rec.position;
            s.p = 1e-30 * emitter_kind_axis(rec.kind).cast<std::complex<double>>();
            src = s;
        }
        CdmSystem system(ps.grid, ps.materials, rec.omega, rec.b_z, so);
        const FieldSolution sol = system.solve(src);
        return decay_rates(system, sol, src, quad).gamma_r;
    };

    // dataset: reuse when the file exists, generate and persist otherwise
    const std::string dataset_file =
        opt.dataset_path.empty() ? opt.out_dir + "/dataset.csv" : opt.dataset_path;
    std::vector<SampleRecord> data;
    if (std::filesystem::exists(dataset_file)) {
        data = read_dataset_csv(dataset_file);
    } else {
        SamplingSpec sp;
        sp.kind = SamplingSpec::Kind::latin_hypercube;
        sp.count = opt.dataset_count;
        sp.omega_min = omega_min;
        sp.omega_max = omega_max;
        sp.b_values = {b};
        sp.emitter = kind;
        sp.gap = gap;
        sp.seed = opt.seed;
        data = design_samples(shape, sp);
        std::size_t failed = 0;
        // group records by frequency so each factorization serves many sources
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t bb) {
            return data[a].omega < data[bb].omega;
        });
        std::optional<double> cached_omega;
        std::optional<CdmSystem> cached_system;
        for (const std::size_t idx : order) {
            SampleRecord& rec = data[idx];
            try {
                if (!cached_omega || *cached_omega != rec.omega) {
                    cached_system.emplace(ps.grid, ps.materials, rec.omega, rec.b_z, so);
                    cached_omega = rec.omega;
                }
                SourceSpec src;
                if (emitter_kind_magnetic(rec.kind)) {
                    PointMD s;
                    s.r0 = rec.position;
                    s.m = 1e-25 * emitter_kind_axis(rec.kind).cast<std::complex<double>>();
                    src = s;
                } else {
                    PointED s;
                    s.r0 = rec.position;
                    s.p = 1e-30 * emitter_kind_axis(rec.kind).cast<std::complex<double>>();
                    src = s;
                }
                const FieldSolution sol = cached_system->solve(src);
                rec.target = decay_rates(*cached_system, sol, src, quad).gamma_r;
            } catch (const Error& e) {
                std::cerr << "sample skipped: " << e.what() << '\n';
                rec.target = std::numeric_limits<double>::quiet_NaN();
                ++failed;
            }
        }
        data.erase(std::remove_if(data.begin(), data.end(),
                                  [](const SampleRecord& r) { return !std::isfinite(r.target); }),
                   data.end());
        if (failed > 0)
            std::cerr << failed << " sample(s) skipped after solver failures\n";
        write_dataset_csv(dataset_file, data);
    }
    if (data.size() < 20)
        throw ConfigError("optimize: dataset too small (" + std::to_string(data.size()) + ")");

    // features and surrogate
    const FeatureSpec fs = feature_spec_from_data(data, FeatureSpec::Encoding::continuous);
    std::vector<Eigen::VectorXd> features;
    std::vector<double> targets;
    for (const auto& r : data) {
        features.push_back(encode_features(r, fs));
        targets.push_back(r.target);
    }

    // held-out split for the rank-correlation property
    std::mt19937_64 rng(opt.seed ^ 0xa5a5a5a5deadbeefull);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_hold = std::max<std::size_t>(1, data.size() / 5);
    std::vector<Eigen::VectorXd> x_train, x_hold;
    std::vector<double> y_train, y_hold;
    for (std::size_t q = 0; q < order.size(); ++q) {
        if (q < n_hold) {
            x_hold.push_back(features[order[q]]);
            y_hold.push_back(targets[order[q]]);
        } else {
            x_train.push_back(features[order[q]]);
            y_train.push_back(targets[order[q]]);
        }
    }

    SurrogateConfig cfg;
    cfg.input_dim = feature_length(fs);
    cfg.log_target = true;
    SurrogateModel model = make_surrogate(cfg, opt.seed);
    TrainOptions to;
    to.epochs = opt.train_epochs;
    to.seed = opt.seed;
    const TrainReport report = train(model, x_train, y_train, to);

    std::vector<double> pred_hold;
    for (const auto& x : x_hold)
        pred_hold.push_back(predict(model, x));
    oc.heldout_rank_correlation = spearman_rank_correlation(pred_hold, y_hold);

    // feature-selection GA (reduced epochs per fitness evaluation)
    TrainOptions fsopts = to;
    fsopts.epochs = std::max(40, opt.train_epochs / 5);
    GAConfig fsga = opt.ga;
    fsga.seed = opt.seed;
    const FeatureSelectResult fsel =
        ga_feature_select(features, targets, fsga, cfg, fsopts);

    // placement GA seeded with the best training samples
    std::vector<SampleRecord> best_seeds = data;
    std::stable_sort(best_seeds.begin(), best_seeds.end(),
                     [](const SampleRecord& a, const SampleRecord& bb) {
                         return a.target > bb.target;
                     });
    if (best_seeds.size() > 3)
        best_seeds.resize(3);
    GAConfig pga = opt.ga;
    pga.seed = opt.seed + 1;
    oc.placement = optimize_placement(shape, gap, model, fs, kind, b, omega_min, omega_max, pga,
                                      best_seeds, evaluate);

    oc.dataset_best = best_seeds.front().target;
    oc.dataset_best_position = best_seeds.front().position;
    // the optimizer must not regress below seen data: fall back to the best
    // dataset sample when its solver value beats the verified GA optimum
    if (oc.placement.verified && *oc.placement.verified < oc.dataset_best) {
        oc.placement.position = best_seeds.front().position;
        oc.placement.omega = best_seeds.front().omega;
        oc.placement.verified = best_seeds.front().target;
    }

    // artifacts
    save_checkpoint(model, opt.out_dir + "/model.bin");
    {
        auto out = detail_driver::open_csv(opt.out_dir + "/loss_curve.csv");
        out << "epoch,mse\n";
        for (std::size_t e = 0; e < report.loss_history.size(); ++e)
            out << e << ',' << report.loss_history[e] << '\n';
    }
    {
        auto out = detail_driver::open_csv(opt.out_dir + "/ga_trace.csv");
        out << "generation,feature_select_mse,placement_best_gamma\n";
        const std::size_t n = std::max(fsel.trace.size(), oc.placement.trace.size());
        for (std::size_t g = 0; g < n; ++g) {
            out << g << ',';
            if (g < fsel.trace.size())
                out << fsel.trace[g];
            out << ',';
            if (g < oc.placement.trace.size())
                out << oc.placement.trace[g];
            out << '\n';
        }
    }
    {
        nlohmann::json rep;
        rep["schema"] = "magdda-optimize-report/1";
        rep["dataset"] = {{"file", dataset_file},
                          {"count", data.size()},
                          {"target_min", *std::min_element(targets.begin(), targets.end())},
                          {"target_max", *std::max_element(targets.begin(), targets.end())},
                          {"best_position_m",
                           {oc.dataset_best_position.x(), oc.dataset_best_position.y(),
                            oc.dataset_best_position.z()}}};
        rep["training"] = {{"epochs", to.epochs},
                           {"final_mse", report.loss_history.back()},
                           {"heldout_rank_correlation", oc.heldout_rank_correlation}};
        rep["feature_select"] = {{"mask", fsel.mask}, {"validation_mse", fsel.validation_mse}};
        rep["placement"] = {
            {"position_m",
             {oc.placement.position.x(), oc.placement.position.y(), oc.placement.position.z()}},
            {"omega_rad_s", oc.placement.omega},
            {"predicted_gamma_r", oc.placement.predicted},
            {"verified_gamma_r", oc.placement.verified ? *oc.placement.verified : 0.0},
            {"profile_t", oc.placement.t},
            {"azimuth_rad", oc.placement.phi}};
        std::ofstream out(opt.out_dir + "/report.json");
        if (!out)
            throw ConfigError("cannot write optimizer report");
        out << rep.dump(2) << '\n';
    }
    oc.manifest.outputs.emplace_back(dataset_file, detail_driver::file_checksum(dataset_file));
    detail_driver::add_output(oc.manifest, opt.out_dir, "model.bin");
    detail_driver::add_output(oc.manifest, opt.out_dir, "loss_curve.csv");
    detail_driver::add_output(oc.manifest, opt.out_dir, "ga_trace.csv");
    detail_driver::add_output(oc.manifest, opt.out_dir, "report.json");
    detail_driver::write_manifest(opt.out_dir, oc.manifest);
    return oc;
}

} // namespace magdda
