#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"
#include "magdda/geometry.hpp"
#include "magdda/material.hpp"
#include "magdda/source.hpp"

namespace magdda {

using json = nlohmann::json;

/// Plane-wave block as written in the scene file. `pol_token` keeps the
/// "rcp"/"lcp" shorthand when one was used so serialization round-trips.
struct PlaneWaveConfig {
    Eigen::Vector3d k_dir{0.0, 1.0, 0.0};
    Eigen::Vector3cd pol{std::complex<double>(1.0, 0.0), 0.0, 0.0};
    std::string pol_token; // "", "rcp" or "lcp"
};

struct PointSourceConfig {
    bool magnetic = false;          // false: electric dipole, true: magnetic
    Eigen::Vector3d position_um{0.0, 0.0, 0.0};
    Eigen::Vector3d orientation{1.0, 0.0, 0.0};
};

using SourceConfig = std::variant<PlaneWaveConfig, PointSourceConfig>;

struct SweepSpec {
    enum class Axis { frequency, distance };
    enum class Units { omega_p, thz };
    Axis axis = Axis::frequency;
    Units units = Units::omega_p;
    double min = 0.0; // frequency in sweep units, or gap in um for distance
    double max = 0.0;
    int points = 0;
    double fixed = 1.0; // frequency of a distance sweep, in sweep units
};

/// Far-field angular dump request (theta x phi grid at one frequency).
struct PatternSpec {
    double omega = 1.0; // in sweep units
    int n_theta = 64;
    int n_phi = 128;
};

/// Parsed scene file. Lengths are kept in the file's micron units so that
/// parse -> serialize -> parse is value-exact; SI accessors convert on use.
struct Scene {
    std::string name = "scene";
    std::vector<Material> materials;    // file order
    Shape shape_um;                     // lengths in um
    std::vector<std::string> shape_materials; // one name, or {lower, upper}
    std::vector<double> b_values;       // tesla
    bool b_scalar = true;               // wrote a single number, not a list
    std::vector<SourceConfig> sources;
    SweepSpec sweep;
    double spacing_um = 0.0;            // 0 = choose automatically
    std::optional<std::string> norm_material; // normalization omega_p source
    std::optional<double> norm_omega_p;       // explicit value [rad/s]
    std::vector<std::string> outputs;   // extra artifacts, e.g. "pattern"
    std::optional<PatternSpec> pattern;

    const Material& material(const std::string& nm) const {
        for (const auto& m : materials)
            if (m.name == nm)
                return m;
        throw ConfigError("scene: unknown material '" + nm + "'");
    }

    /// Normalization frequency [rad/s]: explicit value, named material, or
    /// the unique Drude plasma frequency.
    double omega_p() const {
        if (norm_omega_p)
            return *norm_omega_p;
        if (norm_material) {
            const Material& m = material(*norm_material);
            if (const auto* d = std::get_if<DrudeParams>(&m.model))
                return d->omega_p;
            throw ConfigError("scene.normalization: material '" + *norm_material +
                              "' is not dispersive");
        }
        std::optional<double> wp;
        for (const auto& m : materials)
            if (const auto* d = std::get_if<DrudeParams>(&m.model)) {
                if (wp && *wp != d->omega_p)
                    throw ConfigError("scene: several Drude plasma frequencies; add a "
                                      "normalization block naming one");
                wp = d->omega_p;
            }
        if (!wp)
            throw ConfigError("scene: no Drude material; add a normalization block with "
                              "an explicit omega_p");
        return *wp;
    }

    /// Sweep-units value -> absolute angular frequency [rad/s].
    double to_omega(double value) const {
        if (sweep.units == SweepSpec::Units::thz)
            return 2.0 * constants::pi * value * 1e12;
        return value * omega_p();
    }

    Shape shape_si() const {
        constexpr double u = 1e-6;
        if (const auto* s = std::get_if<Sphere>(&shape_um))
            return Sphere{s->radius * u};
        if (const auto* c = std::get_if<Cylinder>(&shape_um))
            return Cylinder{c->radius * u, c->height * u};
        const auto& h = std::get<HybridCylinder>(shape_um);
        return HybridCylinder{h.radius * u, h.h_lower * u, h.h_upper * u};
    }

    double spacing_si() const { return spacing_um * 1e-6; }

    /// Materials in voxel-id order (hybrid: 0 = lower, 1 = upper).
    std::vector<Material> grid_materials() const {
        std::vector<Material> out;
        for (const auto& nm : shape_materials)
            out.push_back(material(nm));
        return out;
    }
};

inline SourceSpec to_source_spec(const SourceConfig& cfg) {
    if (const auto* pw = std::get_if<PlaneWaveConfig>(&cfg)) {
        PlaneWave s;
        s.k_dir = pw->k_dir.normalized();
        s.pol = pw->pol;
        const double n = std::sqrt(std::abs(s.pol.squaredNorm()));
        if (n <= 0.0)
            throw ConfigError("scene.sources: zero polarization vector");
        s.pol /= n;
        validate(s);
        return s;
    }
    const auto& ps = std::get<PointSourceConfig>(cfg);
    if (ps.orientation.norm() <= 0.0)
        throw ConfigError("scene.sources: zero orientation vector");
    const Eigen::Vector3d u = ps.orientation.normalized();
    if (ps.magnetic) {
        PointMD s;
        s.r0 = ps.position_um * 1e-6;
        s.m = 1e-25 * u.cast<std::complex<double>>();
        return s;
    }
    PointED s;
    s.r0 = ps.position_um * 1e-6;
    s.p = 1e-30 * u.cast<std::complex<double>>();
    return s;
}

namespace detail_scene {

inline const json& member(const json& j, const std::string& path, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("scene." + path + ": missing field '" + key + "'");
    return j.at(key);
}

inline double num(const json& j, const std::string& path, const char* key) {
    const json& v = member(j, path, key);
    if (!v.is_number())
        throw ConfigError("scene." + path + "." + key + ": expected a number");
    return v.get<double>();
}

inline double num_or(const json& j, const std::string& path, const char* key, double fallback) {
    if (!j.is_object() || !j.contains(key))
        return fallback;
    return num(j, path, key);
}

inline int integer(const json& j, const std::string& path, const char* key) {
    const json& v = member(j, path, key);
    if (!v.is_number_integer())
        throw ConfigError("scene." + path + "." + key + ": expected an integer");
    return v.get<int>();
}

inline std::string str(const json& j, const std::string& path, const char* key) {
    const json& v = member(j, path, key);
    if (!v.is_string())
        throw ConfigError("scene." + path + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline Eigen::Vector3d vec3(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
        !v[2].is_number())
        throw ConfigError("scene." + where + ": expected [x, y, z]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

/// Right-handed transverse pair (e1, e2, k_hat) used to spell out the
/// circular polarization tokens.
inline void transverse_pair(const Eigen::Vector3d& k_hat, Eigen::Vector3d& e1,
                            Eigen::Vector3d& e2) {
    const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
    Eigen::Vector3d c = z.cross(k_hat);
    if (c.norm() < 1e-9)
        c = Eigen::Vector3d::UnitX();
    e1 = c.normalized();
    e2 = k_hat.cross(e1);
}

inline Eigen::Vector3cd circular_pol(const Eigen::Vector3d& k_hat, bool rcp) {
    Eigen::Vector3d e1, e2;
    transverse_pair(k_hat.normalized(), e1, e2);
    const std::complex<double> i1(0.0, 1.0);
    const double s = 1.0 / std::sqrt(2.0);
    const Eigen::Vector3cd ce1 = e1.cast<std::complex<double>>();
    const Eigen::Vector3cd ce2 = e2.cast<std::complex<double>>();
    return rcp ? Eigen::Vector3cd(s * (ce1 - i1 * ce2)) : Eigen::Vector3cd(s * (ce1 + i1 * ce2));
}

inline json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

} // namespace detail_scene

inline Scene parse_scene(const json& j) {
    using namespace detail_scene;
    Scene sc;
    if (str(j, "", "schema") != "magdda-scene/1")
        throw ConfigError("scene.schema: expected \"magdda-scene/1\"");
    if (j.contains("name"))
        sc.name = str(j, "", "name");

    // materials
    const json& mats = member(j, "", "materials");
    if (!mats.is_object() || mats.empty())
        throw ConfigError("scene.materials: expected a non-empty object");
    for (const auto& [nm, body] : mats.items()) {
        Material m;
        m.name = nm;
        const std::string path = "materials." + nm;
        if (body.contains("drude")) {
            const json& d = body.at("drude");
            DrudeParams p;
            p.eps_inf = num(d, path + ".drude", "eps_inf");
            p.omega_p = num(d, path + ".drude", "omega_p");
            p.gamma_p = num(d, path + ".drude", "gamma_p");
            p.mass_ratio = num(d, path + ".drude", "m_eff_ratio");
            const std::string conv = d.contains("convention")
                                         ? str(d, path + ".drude", "convention")
                                         : std::string("screened");
            if (conv == "screened")
                p.form = DrudeForm::screened;
            else if (conv == "bare")
                p.form = DrudeForm::bare;
            else
                throw ConfigError("scene." + path +
                                  ".drude.convention: expected \"screened\" or \"bare\"");
            if (p.omega_p <= 0.0 || p.gamma_p < 0.0 || p.mass_ratio <= 0.0)
                throw ConfigError("scene." + path +
                                  ".drude: omega_p > 0, gamma_p >= 0, m_eff_ratio > 0 required");
            m.model = p;
        } else if (body.contains("const")) {
            const json& c = body.at("const");
            ConstEps ce;
            ce.eps = {num(c, path + ".const", "eps_re"), num_or(c, path + ".const", "eps_im", 0.0)};
            m.model = ce;
        } else {
            throw ConfigError("scene." + path + ": expected a 'drude' or 'const' block");
        }
        sc.materials.push_back(std::move(m));
    }

    // shapes (single shape supported)
    const json& shapes = member(j, "", "shapes");
    if (!shapes.is_array() || shapes.size() != 1)
        throw ConfigError("scene.shapes: expected a list with exactly one shape");
    {
        const json& s = shapes[0];
        const std::string path = "shapes[0]";
        if (s.contains("sphere")) {
            const json& b = s.at("sphere");
            Sphere sp{num(b, path + ".sphere", "radius_um")};
            if (sp.radius <= 0.0)
                throw ConfigError("scene." + path + ".sphere.radius_um: must be positive");
            sc.shape_um = sp;
            sc.shape_materials = {str(s, path, "material")};
        } else if (s.contains("cylinder")) {
            const json& b = s.at("cylinder");
            Cylinder cy{num(b, path + ".cylinder", "radius_um"),
                        num(b, path + ".cylinder", "height_um")};
            if (cy.radius <= 0.0 || cy.height <= 0.0)
                throw ConfigError("scene." + path + ".cylinder: lengths must be positive");
            sc.shape_um = cy;
            sc.shape_materials = {str(s, path, "material")};
        } else if (s.contains("hybrid_cylinder")) {
            const json& b = s.at("hybrid_cylinder");
            HybridCylinder hc{num(b, path + ".hybrid_cylinder", "radius_um"),
                              num(b, path + ".hybrid_cylinder", "h_lower_um"),
                              num(b, path + ".hybrid_cylinder", "h_upper_um")};
            if (hc.radius <= 0.0 || hc.h_lower <= 0.0 || hc.h_upper <= 0.0)
                throw ConfigError("scene." + path + ".hybrid_cylinder: lengths must be positive");
            sc.shape_um = hc;
            sc.shape_materials = {str(s, path, "material_lower"), str(s, path, "material_upper")};
        } else {
            throw ConfigError("scene." + path +
                              ": expected 'sphere', 'cylinder' or 'hybrid_cylinder'");
        }
        for (const auto& nm : sc.shape_materials)
            sc.material(nm); // resolve or throw
    }

    // bias field
    {
        const json& b = member(j, "", "b_z");
        if (b.is_number()) {
            sc.b_values = {b.get<double>()};
            sc.b_scalar = true;
        } else if (b.is_array() && !b.empty()) {
            sc.b_scalar = false;
            for (const auto& v : b) {
                if (!v.is_number())
                    throw ConfigError("scene.b_z: expected numbers");
                sc.b_values.push_back(v.get<double>());
            }
        } else {
            throw ConfigError("scene.b_z: expected a number or a non-empty list");
        }
    }

    // sources
    const json& srcs = member(j, "", "sources");
    if (!srcs.is_array() || srcs.empty())
        throw ConfigError("scene.sources: expected a non-empty list");
    for (std::size_t q = 0; q < srcs.size(); ++q) {
        const json& s = srcs[q];
        const std::string path = "sources[" + std::to_string(q) + "]";
        if (s.contains("plane_wave")) {
            const json& b = s.at("plane_wave");
            PlaneWaveConfig pw;
            if (b.contains("k_dir"))
                pw.k_dir = vec3(b.at("k_dir"), path + ".plane_wave.k_dir");
            if (b.contains("polarization")) {
                const json& p = b.at("polarization");
                if (p.is_string()) {
                    pw.pol_token = p.get<std::string>();
                    if (pw.pol_token != "rcp" && pw.pol_token != "lcp")
                        throw ConfigError("scene." + path +
                                          ".plane_wave.polarization: expected \"rcp\", \"lcp\", "
                                          "[x,y,z] or {re, im}");
                    pw.pol = detail_scene::circular_pol(pw.k_dir, pw.pol_token == "rcp");
                } else if (p.is_array()) {
                    pw.pol = vec3(p, path + ".plane_wave.polarization")
                                 .cast<std::complex<double>>();
                } else if (p.is_object()) {
                    const Eigen::Vector3d re =
                        vec3(member(p, path + ".plane_wave.polarization", "re"),
                             path + ".plane_wave.polarization.re");
                    const Eigen::Vector3d im =
                        vec3(member(p, path + ".plane_wave.polarization", "im"),
                             path + ".plane_wave.polarization.im");
                    pw.pol = re.cast<std::complex<double>>() +
                             std::complex<double>(0.0, 1.0) * im.cast<std::complex<double>>();
                } else {
                    throw ConfigError("scene." + path + ".plane_wave.polarization: bad type");
                }
            }
            sc.sources.emplace_back(pw);
        } else if (s.contains("point_ed") || s.contains("point_md")) {
            const bool magnetic = s.contains("point_md");
            const json& b = s.at(magnetic ? "point_md" : "point_ed");
            const std::string bp = path + (magnetic ? ".point_md" : ".point_ed");
            PointSourceConfig ps;
            ps.magnetic = magnetic;
            ps.position_um = vec3(member(b, bp, "position_um"), bp + ".position_um");
            ps.orientation = vec3(member(b, bp, "orientation"), bp + ".orientation");
            sc.sources.emplace_back(ps);
        } else {
            throw ConfigError("scene." + path +
                              ": expected 'plane_wave', 'point_ed' or 'point_md'");
        }
        to_source_spec(sc.sources.back()); // validate
    }

    // sweep
    {
        const json& sw = member(j, "", "sweep");
        const std::string path = "sweep";
        const std::string axis =
            sw.contains("axis") ? str(sw, path, "axis") : std::string("frequency");
        if (axis == "frequency")
            sc.sweep.axis = SweepSpec::Axis::frequency;
        else if (axis == "distance")
            sc.sweep.axis = SweepSpec::Axis::distance;
        else
            throw ConfigError("scene.sweep.axis: expected \"frequency\" or \"distance\"");
        const std::string units =
            sw.contains("units") ? str(sw, path, "units") : std::string("omega_p");
        if (units == "omega_p")
            sc.sweep.units = SweepSpec::Units::omega_p;
        else if (units == "thz")
            sc.sweep.units = SweepSpec::Units::thz;
        else
            throw ConfigError("scene.sweep.units: expected \"omega_p\" or \"thz\"");
        if (sc.sweep.axis == SweepSpec::Axis::frequency) {
            sc.sweep.min = num(sw, path, "min");
            sc.sweep.max = num(sw, path, "max");
            if (sc.sweep.min <= 0.0 || sc.sweep.max <= sc.sweep.min)
                throw ConfigError("scene.sweep: need 0 < min < max");
        } else {
            sc.sweep.min = num(sw, path, "min_um");
            sc.sweep.max = num(sw, path, "max_um");
            sc.sweep.fixed = num(sw, path, "omega");
            if (sc.sweep.min <= 0.0 || sc.sweep.max <= sc.sweep.min || sc.sweep.fixed <= 0.0)
                throw ConfigError("scene.sweep: need 0 < min_um < max_um and omega > 0");
        }
        sc.sweep.points = integer(sw, path, "points");
        if (sc.sweep.points < 2)
            throw ConfigError("scene.sweep.points: must be at least 2");
    }

    // grid
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        if (g.contains("spacing_um")) {
            sc.spacing_um = num(g, "grid", "spacing_um");
            if (sc.spacing_um <= 0.0)
                throw ConfigError("scene.grid.spacing_um: must be positive");
        } else if (!(g.contains("auto") && g.at("auto").is_boolean() &&
                     g.at("auto").get<bool>())) {
            throw ConfigError("scene.grid: expected {\"spacing_um\": h} or {\"auto\": true}");
        }
    }

    // normalization
    if (j.contains("normalization")) {
        const json& n = j.at("normalization");
        if (n.contains("omega_p_of"))
            sc.norm_material = str(n, "normalization", "omega_p_of");
        else if (n.contains("omega_p"))
            sc.norm_omega_p = num(n, "normalization", "omega_p");
        else
            throw ConfigError("scene.normalization: expected 'omega_p_of' or 'omega_p'");
        if (sc.norm_material)
            sc.material(*sc.norm_material);
    }

    // outputs + pattern request
    if (j.contains("outputs")) {
        const json& o = j.at("outputs");
        if (!o.is_array())
            throw ConfigError("scene.outputs: expected a list of strings");
        for (const auto& v : o) {
            if (!v.is_string())
                throw ConfigError("scene.outputs: expected a list of strings");
            sc.outputs.push_back(v.get<std::string>());
        }
    }
    if (j.contains("pattern")) {
        const json& p = j.at("pattern");
        PatternSpec ps;
        ps.omega = num(p, "pattern", "omega");
        ps.n_theta = p.contains("n_theta") ? integer(p, "pattern", "n_theta") : ps.n_theta;
        ps.n_phi = p.contains("n_phi") ? integer(p, "pattern", "n_phi") : ps.n_phi;
        if (ps.omega <= 0.0 || ps.n_theta < 2 || ps.n_phi < 2)
            throw ConfigError("scene.pattern: need omega > 0 and at least a 2x2 grid");
        sc.pattern = ps;
    }

    if (sc.sweep.units == SweepSpec::Units::omega_p)
        sc.omega_p(); // must resolve
    return sc;
}

inline Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open scene file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("scene file '" + path + "': " + e.what());
    }
    return parse_scene(j);
}

inline json scene_to_json(const Scene& sc) {
    using detail_scene::vec3_json;
    json j;
    j["schema"] = "magdda-scene/1";
    j["name"] = sc.name;
    json mats = json::object();
    for (const auto& m : sc.materials) {
        json body;
        if (const auto* d = std::get_if<DrudeParams>(&m.model)) {
            body["drude"] = {{"eps_inf", d->eps_inf},
                             {"omega_p", d->omega_p},
                             {"gamma_p", d->gamma_p},
                             {"m_eff_ratio", d->mass_ratio},
                             {"convention",
                              d->form == DrudeForm::screened ? "screened" : "bare"}};
        } else {
            const auto& c = std::get<ConstEps>(m.model);
            body["const"] = {{"eps_re", c.eps.real()}, {"eps_im", c.eps.imag()}};
        }
        mats[m.name] = body;
    }
    j["materials"] = mats;

    json shape;
    if (const auto* s = std::get_if<Sphere>(&sc.shape_um)) {
        shape["sphere"] = {{"radius_um", s->radius}};
        shape["material"] = sc.shape_materials.at(0);
    } else if (const auto* c = std::get_if<Cylinder>(&sc.shape_um)) {
        shape["cylinder"] = {{"radius_um", c->radius}, {"height_um", c->height}};
        shape["material"] = sc.shape_materials.at(0);
    } else {
        const auto& h = std::get<HybridCylinder>(sc.shape_um);
        shape["hybrid_cylinder"] = {{"radius_um", h.radius},
                                    {"h_lower_um", h.h_lower},
                                    {"h_upper_um", h.h_upper}};
        shape["material_lower"] = sc.shape_materials.at(0);
        shape["material_upper"] = sc.shape_materials.at(1);
    }
    j["shapes"] = json::array({shape});

    if (sc.b_scalar)
        j["b_z"] = sc.b_values.at(0);
    else
        j["b_z"] = sc.b_values;

    json srcs = json::array();
    for (const auto& s : sc.sources) {
        json body;
        if (const auto* pw = std::get_if<PlaneWaveConfig>(&s)) {
            json b;
            b["k_dir"] = vec3_json(pw->k_dir);
            if (!pw->pol_token.empty()) {
                b["polarization"] = pw->pol_token;
            } else if (pw->pol.imag().isZero(0.0)) {
                b["polarization"] = vec3_json(pw->pol.real());
            } else {
                b["polarization"] = {{"re", vec3_json(pw->pol.real())},
                                     {"im", vec3_json(pw->pol.imag())}};
            }
            body["plane_wave"] = b;
        } else {
            const auto& ps = std::get<PointSourceConfig>(s);
            json b;
            b["position_um"] = vec3_json(ps.position_um);
            b["orientation"] = vec3_json(ps.orientation);
            body[ps.magnetic ? "point_md" : "point_ed"] = b;
        }
        srcs.push_back(body);
    }
    j["sources"] = srcs;

    json sw;
    sw["axis"] = sc.sweep.axis == SweepSpec::Axis::frequency ? "frequency" : "distance";
    sw["units"] = sc.sweep.units == SweepSpec::Units::omega_p ? "omega_p" : "thz";
    if (sc.sweep.axis == SweepSpec::Axis::frequency) {
        sw["min"] = sc.sweep.min;
        sw["max"] = sc.sweep.max;
    } else {
        sw["min_um"] = sc.sweep.min;
        sw["max_um"] = sc.sweep.max;
        sw["omega"] = sc.sweep.fixed;
    }
    sw["points"] = sc.sweep.points;
    j["sweep"] = sw;

    if (sc.spacing_um > 0.0)
        j["grid"] = {{"spacing_um", sc.spacing_um}};
    else
        j["grid"] = {{"auto", true}};

    if (sc.norm_material)
        j["normalization"] = {{"omega_p_of", *sc.norm_material}};
    else if (sc.norm_omega_p)
        j["normalization"] = {{"omega_p", *sc.norm_omega_p}};

    if (!sc.outputs.empty())
        j["outputs"] = sc.outputs;
    if (sc.pattern)
        j["pattern"] = {{"omega", sc.pattern->omega},
                        {"n_theta", sc.pattern->n_theta},
                        {"n_phi", sc.pattern->n_phi}};
    return j;
}

/// FNV-1a 64-bit over a byte string.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Stable content hash of a scene (canonical serialization, sorted keys).
inline std::uint64_t scene_hash(const Scene& sc) { return fnv1a64(scene_to_json(sc).dump()); }

inline bool scene_equal(const Scene& a, const Scene& b) {
    return scene_to_json(a) == scene_to_json(b);
}

} // namespace magdda
