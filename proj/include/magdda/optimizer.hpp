#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "magdda/constants.hpp"
#include "magdda/errors.hpp"
#include "magdda/genetic.hpp"
#include "magdda/geometry.hpp"
#include "magdda/surrogate.hpp"

namespace magdda {

enum class EmitterKind6 { EDx, EDy, EDz, MDx, MDy, MDz };

inline const char* emitter_kind_name(EmitterKind6 k) {
    switch (k) {
    case EmitterKind6::EDx: return "EDx";
    case EmitterKind6::EDy: return "EDy";
    case EmitterKind6::EDz: return "EDz";
    case EmitterKind6::MDx: return "MDx";
    case EmitterKind6::MDy: return "MDy";
    case EmitterKind6::MDz: return "MDz";
    }
    return "EDx";
}

inline EmitterKind6 emitter_kind_from_name(const std::string& s) {
    for (const EmitterKind6 k : {EmitterKind6::EDx, EmitterKind6::EDy, EmitterKind6::EDz,
                                 EmitterKind6::MDx, EmitterKind6::MDy, EmitterKind6::MDz})
        if (s == emitter_kind_name(k))
            return k;
    throw ConfigError("unknown emitter kind '" + s + "'");
}

inline bool emitter_kind_magnetic(EmitterKind6 k) {
    return k == EmitterKind6::MDx || k == EmitterKind6::MDy || k == EmitterKind6::MDz;
}

inline Eigen::Vector3d emitter_kind_axis(EmitterKind6 k) {
    switch (k) {
    case EmitterKind6::EDx:
    case EmitterKind6::MDx: return Eigen::Vector3d::UnitX();
    case EmitterKind6::EDy:
    case EmitterKind6::MDy: return Eigen::Vector3d::UnitY();
    default: return Eigen::Vector3d::UnitZ();
    }
}

struct SampleRecord {
    Eigen::Vector3d position{0.0, 0.0, 0.0}; // m
    double omega = 0.0;                      // rad/s
    double b_z = 0.0;                        // T
    EmitterKind6 kind = EmitterKind6::MDx;
    double target = 0.0;                     // gamma_r or gamma_nr
};

// ---- constant-gap offset surface -------------------------------------------

/// Surface at distance `gap` outside the shape, parameterized by profile
/// fraction t in [0,1] (pole-to-pole / top-axis-to-bottom-axis) and azimuth
/// phi in [0, 2pi). Cylinder profiles include quarter-circle edge arcs so the
/// distance to the body stays exactly `gap`.
class OffsetSurface {
public:
    OffsetSurface(const Shape& shape_si, double gap) : shape_(shape_si), gap_(gap) {
        if (gap <= 0.0)
            throw ConfigError("OffsetSurface: gap must be positive");
        if (const auto* s = std::get_if<Sphere>(&shape_)) {
            radius_ = s->radius;
            height_ = 0.0;
            spherical_ = true;
        } else if (const auto* c = std::get_if<Cylinder>(&shape_)) {
            radius_ = c->radius;
            height_ = c->height;
            spherical_ = false;
        } else {
            const auto& h = std::get<HybridCylinder>(shape_);
            radius_ = h.radius;
            height_ = h.h_lower + h.h_upper;
            spherical_ = false;
        }
        if (spherical_) {
            arclength_ = constants::pi * (radius_ + gap_);
        } else {
            arclength_ = 2.0 * radius_ + constants::pi * gap_ + height_;
        }
    }

    double profile_arclength() const { return arclength_; }

    /// Largest pairwise distance between surface points (normalizes
    /// "fraction of the surface diameter" tolerances).
    double diameter() const {
        if (spherical_)
            return 2.0 * (radius_ + gap_);
        return std::sqrt(std::pow(2.0 * (radius_ + gap_), 2) + std::pow(height_, 2));
    }

    Eigen::Vector3d point(double t, double phi) const {
        t = std::clamp(t, 0.0, 1.0);
        double rho, z;
        if (spherical_) {
            const double theta = t * constants::pi;
            rho = (radius_ + gap_) * std::sin(theta);
            z = (radius_ + gap_) * std::cos(theta);
        } else {
            profile(t, rho, z);
        }
        return {rho * std::cos(phi), rho * std::sin(phi), z};
    }

    /// True when (t, phi) lies on the straight side-wall section.
    bool on_side_wall(double t) const {
        if (spherical_)
            return false;
        const double s = std::clamp(t, 0.0, 1.0) * arclength_;
        const double wall_start = radius_ + 0.5 * constants::pi * gap_;
        return s >= wall_start && s <= wall_start + height_;
    }

private:
    // cylinder profile in the (rho, z) half-plane by arclength: top disc,
    // top edge arc, side wall, bottom edge arc, bottom disc
    void profile(double t, double& rho, double& z) const {
        const double s = t * arclength_;
        const double a_top = radius_;
        const double a_arc = 0.5 * constants::pi * gap_; // quarter circle of radius gap
        const double zt = 0.5 * height_;
        if (s <= a_top) {
            rho = s;
            z = zt + gap_;
            return;
        }
        if (s <= a_top + a_arc) {
            const double ang = (s - a_top) / gap_; // 0..pi/2 around the top rim
            rho = radius_ + gap_ * std::sin(ang);
            z = zt + gap_ * std::cos(ang);
            return;
        }
        if (s <= a_top + a_arc + height_) {
            rho = radius_ + gap_;
            z = zt - (s - a_top - a_arc);
            return;
        }
        if (s <= a_top + 2.0 * a_arc + height_) {
            const double ang = (s - a_top - a_arc - height_) / gap_;
            rho = radius_ + gap_ * std::cos(ang);
            z = -zt - gap_ * std::sin(ang);
            return;
        }
        rho = std::max(0.0, radius_ - (s - a_top - 2.0 * a_arc - height_));
        z = -zt - gap_;
    }

    Shape shape_;
    double gap_ = 0.0;
    double radius_ = 0.0;
    double height_ = 0.0;
    double arclength_ = 0.0;
    bool spherical_ = false;
};

// ---- sampling designs ------------------------------------------------------

struct SamplingSpec {
    enum class Kind { grid, latin_hypercube };
    Kind kind = Kind::grid;
    int n_profile = 4; // grid: profile subdivisions
    int n_azimuth = 4; // grid: azimuth subdivisions
    int count = 0;     // latin hypercube sample count
    double omega_min = 0.0, omega_max = 0.0; // rad/s; equal = single frequency
    int n_omega = 1;                          // grid frequency subdivisions
    std::vector<double> b_values{0.0};
    EmitterKind6 emitter = EmitterKind6::MDx;
    double gap = 3e-6; // m
    std::uint64_t seed = 1;
};

/// Sample positions/frequencies/bias combinations on the offset surface.
/// Targets are left at zero for the caller to fill with solver results.
inline std::vector<SampleRecord> design_samples(const Shape& shape_si, const SamplingSpec& sp) {
    if (sp.omega_min <= 0.0 || sp.omega_max < sp.omega_min)
        throw ConfigError("design_samples: need 0 < omega_min <= omega_max");
    if (sp.b_values.empty())
        throw ConfigError("design_samples: b_values must be non-empty");
    const OffsetSurface surf(shape_si, sp.gap);
    std::vector<SampleRecord> out;

    const auto omega_at = [&](double frac) {
        return sp.omega_min + frac * (sp.omega_max - sp.omega_min);
    };

    if (sp.kind == SamplingSpec::Kind::grid) {
        if (sp.n_profile < 1 || sp.n_azimuth < 1 || sp.n_omega < 1)
            throw ConfigError("design_samples: grid subdivisions must be positive");
        for (int io = 0; io < sp.n_omega; ++io) {
            const double of = sp.n_omega == 1 ? 0.0
                                              : static_cast<double>(io) / (sp.n_omega - 1);
            for (const double b : sp.b_values)
                for (int it = 0; it < sp.n_profile; ++it)
                    for (int ip = 0; ip < sp.n_azimuth; ++ip) {
                        SampleRecord r;
                        r.position = surf.point((it + 0.5) / sp.n_profile,
                                                2.0 * constants::pi * ip / sp.n_azimuth);
                        r.omega = omega_at(of);
                        r.b_z = b;
                        r.kind = sp.emitter;
                        out.push_back(r);
                    }
        }
        return out;
    }

    if (sp.count < 1)
        throw ConfigError("design_samples: latin hypercube count must be positive");
    std::mt19937_64 rng(sp.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    // one stratified permutation per axis
    const auto strata = [&](int n) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            v[static_cast<std::size_t>(i)] = (i + uni(rng)) / n;
        std::shuffle(v.begin(), v.end(), rng);
        return v;
    };
    const auto ts = strata(sp.count);
    const auto ps = strata(sp.count);
    const auto os = strata(sp.count);
    std::vector<std::size_t> border(static_cast<std::size_t>(sp.count));
    for (int i = 0; i < sp.count; ++i)
        border[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i) % sp.b_values.size();
    std::shuffle(border.begin(), border.end(), rng);
    for (int i = 0; i < sp.count; ++i) {
        SampleRecord r;
        r.position = surf.point(ts[static_cast<std::size_t>(i)],
                                2.0 * constants::pi * ps[static_cast<std::size_t>(i)]);
        r.omega = omega_at(sp.omega_max > sp.omega_min ? os[static_cast<std::size_t>(i)] : 0.0);
        r.b_z = sp.b_values[border[static_cast<std::size_t>(i)]];
        r.kind = sp.emitter;
        out.push_back(r);
    }
    return out;
}

// ---- dataset CSV -----------------------------------------------------------

inline void write_dataset_csv(const std::string& path, const std::vector<SampleRecord>& rows) {
    std::ofstream out(path);
    if (!out)
        throw ConfigError("write_dataset_csv: cannot open '" + path + "'");
    out << "x_m,y_m,z_m,omega_rad_s,b_z_t,emitter_kind,target\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.position.x() << ',' << r.position.y() << ',' << r.position.z() << ','
            << r.omega << ',' << r.b_z << ',' << emitter_kind_name(r.kind) << ',' << r.target
            << '\n';
    if (!out)
        throw ConfigError("write_dataset_csv: write failed for '" + path + "'");
}

inline std::vector<SampleRecord> read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("read_dataset_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("read_dataset_csv: empty file '" + path + "'");
    std::vector<SampleRecord> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string field;
        std::array<std::string, 7> f;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!std::getline(ss, field, ','))
                throw ConfigError("read_dataset_csv: line " + std::to_string(line_no) +
                                  ": expected 7 fields");
            f[i] = field;
        }
        SampleRecord r;
        try {
            r.position = {std::stod(f[0]), std::stod(f[1]), std::stod(f[2])};
            r.omega = std::stod(f[3]);
            r.b_z = std::stod(f[4]);
            r.kind = emitter_kind_from_name(f[5]);
            r.target = std::stod(f[6]);
        } catch (const std::exception&) {
            throw ConfigError("read_dataset_csv: line " + std::to_string(line_no) +
                              ": bad field value");
        }
        rows.push_back(r);
    }
    return rows;
}

// ---- feature encoding ------------------------------------------------------

struct FeatureSpec {
    enum class Encoding { continuous, binned };
    Encoding encoding = Encoding::continuous;
    int bins = 8;              // binned: one-hot bins for omega and b
    double omega_min = 0.0, omega_max = 0.0; // bin edges source
    double b_min = 0.0, b_max = 0.0;
};

inline int feature_length(const FeatureSpec& fs) {
    return fs.encoding == FeatureSpec::Encoding::continuous ? 11 : 3 + 2 * fs.bins + 6;
}

inline FeatureSpec feature_spec_from_data(const std::vector<SampleRecord>& rows,
                                          FeatureSpec::Encoding enc, int bins = 8) {
    FeatureSpec fs;
    fs.encoding = enc;
    fs.bins = bins;
    if (!rows.empty()) {
        fs.omega_min = fs.omega_max = rows[0].omega;
        fs.b_min = fs.b_max = rows[0].b_z;
        for (const auto& r : rows) {
            fs.omega_min = std::min(fs.omega_min, r.omega);
            fs.omega_max = std::max(fs.omega_max, r.omega);
            fs.b_min = std::min(fs.b_min, r.b_z);
            fs.b_max = std::max(fs.b_max, r.b_z);
        }
    }
    return fs;
}

namespace detail_opt {

inline int bin_index(double v, double lo, double hi, int bins) {
    if (hi <= lo)
        return 0;
    const int i = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    return std::clamp(i, 0, bins - 1);
}

} // namespace detail_opt

/// Raw feature row: [x, y, z, omega, b, one-hot emitter kind] in the
/// continuous encoding; binned replaces the omega and b scalars by bin
/// one-hots. Scaling to [0,1] happens inside the surrogate.
inline Eigen::VectorXd encode_features(const SampleRecord& r, const FeatureSpec& fs) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(feature_length(fs));
    x(0) = r.position.x();
    x(1) = r.position.y();
    x(2) = r.position.z();
    int k = 3;
    if (fs.encoding == FeatureSpec::Encoding::continuous) {
        x(3) = r.omega;
        x(4) = r.b_z;
        k = 5;
    } else {
        x(k + detail_opt::bin_index(r.omega, fs.omega_min, fs.omega_max, fs.bins)) = 1.0;
        k += fs.bins;
        x(k + detail_opt::bin_index(r.b_z, fs.b_min, fs.b_max, fs.bins)) = 1.0;
        k += fs.bins;
    }
    x(k + static_cast<int>(r.kind)) = 1.0;
    return x;
}

inline Eigen::VectorXd apply_mask(const Eigen::VectorXd& x, const std::vector<std::uint8_t>& mask) {
    if (static_cast<int>(mask.size()) != x.size())
        throw ConfigError("apply_mask: mask length mismatch");
    std::vector<double> kept;
    for (int i = 0; i < x.size(); ++i)
        if (mask[static_cast<std::size_t>(i)])
            kept.push_back(x(i));
    return Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
}

// ---- feature-selection GA --------------------------------------------------

struct FeatureSelectResult {
    std::vector<std::uint8_t> mask;
    double validation_mse = 0.0;
    std::vector<double> trace;
};

/// GA over feature bitmasks; fitness of a mask is the validation MSE of a
/// surrogate retrained on the masked features. Deterministic per seed;
/// fitness values are cached by mask.
inline FeatureSelectResult
ga_feature_select(const std::vector<Eigen::VectorXd>& features, const std::vector<double>& targets,
                  const GAConfig& ga, const SurrogateConfig& base_cfg,
                  const TrainOptions& train_opts, double validation_fraction = 0.2) {
    if (features.size() != targets.size() || features.size() < 5)
        throw ConfigError("ga_feature_select: need at least 5 samples");
    const int n_feat = static_cast<int>(features[0].size());
    if (n_feat < 2)
        throw ConfigError("ga_feature_select: need at least 2 features");

    // deterministic split
    std::mt19937_64 rng(ga.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(validation_fraction * static_cast<double>(order.size())));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

    std::map<std::vector<std::uint8_t>, double> cache;
    const auto fitness = [&](const std::vector<std::uint8_t>& mask) {
        if (const auto it = cache.find(mask); it != cache.end())
            return it->second;
        int kept = 0;
        for (const auto b : mask)
            kept += b ? 1 : 0;
        double mse;
        const int min_len = base_cfg.use_conv
                                ? 1 + base_cfg.conv_layers * (base_cfg.kernel - 1)
                                : 1;
        if (kept < min_len) {
            mse = std::numeric_limits<double>::infinity();
        } else {
            SurrogateConfig cfg = base_cfg;
            cfg.input_dim = kept;
            SurrogateModel model = make_surrogate(cfg, ga.seed);
            std::vector<Eigen::VectorXd> xt;
            std::vector<double> yt;
            for (const std::size_t i : train_idx) {
                xt.push_back(apply_mask(features[i], mask));
                yt.push_back(targets[i]);
            }
            TrainOptions to = train_opts;
            to.seed = ga.seed;
            train(model, xt, yt, to);
            mse = 0.0;
            for (const std::size_t i : val_idx) {
                const double err = predict_normalized(model, apply_mask(features[i], mask)) -
                                   target_transform(model, targets[i]);
                mse += err * err;
            }
            mse /= static_cast<double>(val_idx.size());
        }
        cache.emplace(mask, mse);
        return mse;
    };

    // seed the all-ones mask so the GA starts from the full feature set
    std::vector<std::vector<std::uint8_t>> seeds{
        std::vector<std::uint8_t>(static_cast<std::size_t>(n_feat), 1)};
    const auto res = ga_binary(n_feat, fitness, ga, seeds);
    return {res.best, res.best_fitness, res.trace};
}

// ---- placement search ------------------------------------------------------

struct PlacementResult {
    Eigen::Vector3d position{0.0, 0.0, 0.0}; // m
    double omega = 0.0;                      // rad/s
    double predicted = 0.0;                  // surrogate gamma
    std::optional<double> verified;          // solver gamma when requested
    std::vector<double> trace;               // best predicted gamma per generation
    double t = 0.0, phi = 0.0;               // surface coordinates of the optimum
};

/// GA over offset-surface coordinates (and optionally frequency) maximizing
/// the surrogate prediction. `seed_records` (e.g. the best training samples)
/// are mapped into the initial population. `verify` re-evaluates the optimum
/// with the full solver when provided.
inline PlacementResult optimize_placement(
    const Shape& shape_si, double gap, const SurrogateModel& surrogate, const FeatureSpec& fs,
    EmitterKind6 kind, double b_z, double omega_min, double omega_max, const GAConfig& ga,
    const std::vector<SampleRecord>& seed_records = {},
    const std::function<double(const SampleRecord&)>& verify = nullptr) {
    if (omega_min <= 0.0 || omega_max < omega_min)
        throw ConfigError("optimize_placement: need 0 < omega_min <= omega_max");
    const OffsetSurface surf(shape_si, gap);
    const bool sweep_omega = omega_max > omega_min;
    const int dim = sweep_omega ? 3 : 2;

    const auto decode = [&](const Eigen::VectorXd& g) {
        SampleRecord r;
        r.position = surf.point(g(0), 2.0 * constants::pi * g(1));
        r.omega = sweep_omega ? omega_min + g(2) * (omega_max - omega_min) : omega_min;
        r.b_z = b_z;
        r.kind = kind;
        return r;
    };
    const auto fitness = [&](const Eigen::VectorXd& g) {
        return -predict(surrogate, encode_features(decode(g), fs));
    };

    // map seed records back to surface coordinates by nearest profile search
    std::vector<Eigen::VectorXd> seeds;
    for (const auto& rec : seed_records) {
        Eigen::VectorXd g(dim);
        const double phi = std::atan2(rec.position.y(), rec.position.x());
        double best_t = 0.5, best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 400; ++i) {
            const double t = i / 400.0;
            const double d = (surf.point(t, phi) - rec.position).norm();
            if (d < best_d) {
                best_d = d;
                best_t = t;
            }
        }
        g(0) = best_t;
        g(1) = phi < 0.0 ? (phi + 2.0 * constants::pi) / (2.0 * constants::pi)
                         : phi / (2.0 * constants::pi);
        if (sweep_omega)
            g(2) = std::clamp((rec.omega - omega_min) / (omega_max - omega_min), 0.0, 1.0);
        seeds.push_back(g);
    }

    const auto res = ga_real(dim, fitness, ga, seeds);
    PlacementResult out;
    const SampleRecord best = decode(res.best);
    out.position = best.position;
    out.omega = best.omega;
    out.predicted = -res.best_fitness;
    out.t = res.best(0);
    out.phi = 2.0 * constants::pi * res.best(1);
    out.trace.reserve(res.trace.size());
    for (const double f : res.trace)
        out.trace.push_back(-f);
    if (verify)
        out.verified = verify(best);
    return out;
}

} // namespace magdda
