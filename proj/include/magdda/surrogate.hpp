#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "magdda/errors.hpp"

namespace magdda {

/// One valid-padding 1-D convolution layer over the feature axis.
/// weights[f] is (in_channels x kernel) for output channel f.
struct Conv1dLayer {
    std::vector<Eigen::MatrixXd> weights;
    Eigen::VectorXd bias;
    int kernel = 3;

    int out_channels() const { return static_cast<int>(weights.size()); }
    int in_channels() const { return weights.empty() ? 0 : static_cast<int>(weights[0].rows()); }
};

struct SurrogateConfig {
    int input_dim = 11;
    bool use_conv = true; // false: features feed the dense stage directly
    int conv_layers = 2;
    int conv_filters = 8;
    int kernel = 3;
    int dense_units = 32;
    bool log_target = false; // train on log10(target), invert on prediction
};

/// Small convolutional/dense regression network. All passes are written out
/// explicitly so the gradients can be validated against finite differences.
struct SurrogateModel {
    SurrogateConfig cfg;
    std::vector<Conv1dLayer> conv;
    Eigen::MatrixXd w_fc;
    Eigen::VectorXd b_fc;
    Eigen::RowVectorXd w_out;
    double b_out = 0.0;
    Eigen::VectorXd feat_min, feat_max; // per-feature affine stats

    int flat_len() const {
        if (!cfg.use_conv)
            return cfg.input_dim;
        int len = cfg.input_dim;
        for (int l = 0; l < cfg.conv_layers; ++l)
            len -= cfg.kernel - 1;
        return cfg.conv_filters * len;
    }
};

namespace detail_nn {

struct Activations {
    // conv[l]: pre-activation (channels x positions); a[l]: post-ReLU
    std::vector<Eigen::MatrixXd> z, a;
    Eigen::VectorXd flat;
    Eigen::VectorXd z_fc, a_fc;
    double y = 0.0;
};

inline Eigen::MatrixXd conv_forward(const Conv1dLayer& layer, const Eigen::MatrixXd& x) {
    const int out_len = static_cast<int>(x.cols()) - layer.kernel + 1;
    if (out_len <= 0)
        throw TrainingError("conv layer: input shorter than kernel");
    Eigen::MatrixXd z(layer.out_channels(), out_len);
    for (int f = 0; f < layer.out_channels(); ++f)
        for (int p = 0; p < out_len; ++p)
            z(f, p) = layer.bias(f) +
                      (layer.weights[static_cast<std::size_t>(f)].array() *
                       x.middleCols(p, layer.kernel).array())
                          .sum();
    return z;
}

inline Activations forward(const SurrogateModel& m, const Eigen::VectorXd& x) {
    Activations act;
    Eigen::MatrixXd cur = x.transpose(); // 1 channel x input_dim
    if (m.cfg.use_conv) {
        for (const auto& layer : m.conv) {
            Eigen::MatrixXd z = conv_forward(layer, cur);
            act.z.push_back(z);
            cur = z.cwiseMax(0.0);
            act.a.push_back(cur);
        }
        act.flat = Eigen::Map<const Eigen::VectorXd>(cur.data(), cur.size());
    } else {
        act.flat = x;
    }
    act.z_fc = m.w_fc * act.flat + m.b_fc;
    act.a_fc = act.z_fc.cwiseMax(0.0);
    act.y = m.w_out * act.a_fc + m.b_out;
    return act;
}

} // namespace detail_nn

inline SurrogateModel make_surrogate(const SurrogateConfig& cfg, std::uint64_t seed) {
    if (cfg.input_dim < 1)
        throw TrainingError("make_surrogate: input_dim must be positive");
    SurrogateModel m;
    m.cfg = cfg;
    std::mt19937_64 rng(seed);
    const auto xavier = [&rng](int fan_in, int fan_out) {
        const double s = std::sqrt(6.0 / (fan_in + fan_out));
        return std::uniform_real_distribution<double>(-s, s)(rng);
    };
    if (cfg.use_conv) {
        int in_ch = 1;
        int len = cfg.input_dim;
        for (int l = 0; l < cfg.conv_layers; ++l) {
            if (len < cfg.kernel)
                throw TrainingError("make_surrogate: feature axis shorter than kernel");
            Conv1dLayer layer;
            layer.kernel = cfg.kernel;
            layer.bias = Eigen::VectorXd::Zero(cfg.conv_filters);
            const int fi = in_ch * cfg.kernel, fo = cfg.conv_filters * cfg.kernel;
            for (int f = 0; f < cfg.conv_filters; ++f) {
                Eigen::MatrixXd w(in_ch, cfg.kernel);
                for (int c = 0; c < in_ch; ++c)
                    for (int q = 0; q < cfg.kernel; ++q)
                        w(c, q) = xavier(fi, fo);
                layer.weights.push_back(w);
            }
            m.conv.push_back(std::move(layer));
            in_ch = cfg.conv_filters;
            len -= cfg.kernel - 1;
        }
    }
    const int flat = m.flat_len();
    m.w_fc.resize(cfg.dense_units, flat);
    for (int r = 0; r < m.w_fc.rows(); ++r)
        for (int c = 0; c < m.w_fc.cols(); ++c)
            m.w_fc(r, c) = xavier(flat, cfg.dense_units);
    m.b_fc = Eigen::VectorXd::Zero(cfg.dense_units);
    m.w_out.resize(cfg.dense_units);
    for (int c = 0; c < m.w_out.cols(); ++c)
        m.w_out(c) = xavier(cfg.dense_units, 1);
    m.b_out = 0.0;
    m.feat_min = Eigen::VectorXd::Zero(cfg.input_dim);
    m.feat_max = Eigen::VectorXd::Ones(cfg.input_dim);
    return m;
}

/// Min-max stats from the raw feature rows; constant columns get unit span.
inline void fit_normalization(SurrogateModel& m, const std::vector<Eigen::VectorXd>& rows) {
    if (rows.empty())
        throw TrainingError("fit_normalization: empty data");
    m.feat_min = rows[0];
    m.feat_max = rows[0];
    for (const auto& r : rows) {
        if (r.size() != m.cfg.input_dim)
            throw TrainingError("fit_normalization: feature length mismatch");
        m.feat_min = m.feat_min.cwiseMin(r);
        m.feat_max = m.feat_max.cwiseMax(r);
    }
}

inline Eigen::VectorXd normalize_features(const SurrogateModel& m, const Eigen::VectorXd& x) {
    Eigen::VectorXd z(x.size());
    for (int i = 0; i < x.size(); ++i) {
        const double span = m.feat_max(i) - m.feat_min(i);
        z(i) = span > 0.0 ? (x(i) - m.feat_min(i)) / span : 0.0;
    }
    return z;
}

/// Model output in training space (log10 space when cfg.log_target).
inline double predict_normalized(const SurrogateModel& m, const Eigen::VectorXd& raw_features) {
    return detail_nn::forward(m, normalize_features(m, raw_features)).y;
}

/// Model output mapped back to the physical target.
inline double predict(const SurrogateModel& m, const Eigen::VectorXd& raw_features) {
    const double y = predict_normalized(m, raw_features);
    return m.cfg.log_target ? std::pow(10.0, y) : y;
}

inline double target_transform(const SurrogateModel& m, double target) {
    if (!m.cfg.log_target)
        return target;
    return std::log10(std::max(target, 1e-12));
}

// ---- flat parameter view (shared by SGD and the finite-difference check) ----

inline Eigen::VectorXd get_params(const SurrogateModel& m) {
    std::vector<double> p;
    for (const auto& layer : m.conv) {
        for (const auto& w : layer.weights)
            p.insert(p.end(), w.data(), w.data() + w.size());
        p.insert(p.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    p.insert(p.end(), m.w_fc.data(), m.w_fc.data() + m.w_fc.size());
    p.insert(p.end(), m.b_fc.data(), m.b_fc.data() + m.b_fc.size());
    p.insert(p.end(), m.w_out.data(), m.w_out.data() + m.w_out.size());
    p.push_back(m.b_out);
    return Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
}

inline void set_params(SurrogateModel& m, const Eigen::VectorXd& p) {
    Eigen::Index k = 0;
    const auto take = [&](double* dst, Eigen::Index n) {
        if (k + n > p.size())
            throw TrainingError("set_params: parameter vector too short");
        std::copy(p.data() + k, p.data() + k + n, dst);
        k += n;
    };
    for (auto& layer : m.conv) {
        for (auto& w : layer.weights)
            take(w.data(), w.size());
        take(layer.bias.data(), layer.bias.size());
    }
    take(m.w_fc.data(), m.w_fc.size());
    take(m.b_fc.data(), m.b_fc.size());
    take(m.w_out.data(), m.w_out.size());
    double b = 0.0;
    take(&b, 1);
    m.b_out = b;
    if (k != p.size())
        throw TrainingError("set_params: parameter vector too long");
}

/// Mean squared error over (normalized-feature, transformed-target) pairs and
/// its gradient with respect to the flat parameter vector.
inline double loss_and_gradient(const SurrogateModel& m, const std::vector<Eigen::VectorXd>& x,
                                const std::vector<double>& y, Eigen::VectorXd& grad) {
    using detail_nn::Activations;
    if (x.empty() || x.size() != y.size())
        throw TrainingError("loss_and_gradient: bad batch");
    const double inv_n = 1.0 / static_cast<double>(x.size());

    std::vector<Eigen::MatrixXd> g_conv_w;
    std::vector<Eigen::VectorXd> g_conv_b;
    for (const auto& layer : m.conv) {
        for (const auto& w : layer.weights)
            g_conv_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        g_conv_b.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    Eigen::MatrixXd g_wfc = Eigen::MatrixXd::Zero(m.w_fc.rows(), m.w_fc.cols());
    Eigen::VectorXd g_bfc = Eigen::VectorXd::Zero(m.b_fc.size());
    Eigen::RowVectorXd g_wout = Eigen::RowVectorXd::Zero(m.w_out.cols());
    double g_bout = 0.0;

    double loss = 0.0;
    for (std::size_t s = 0; s < x.size(); ++s) {
        const Activations act = detail_nn::forward(m, x[s]);
        const double err = act.y - y[s];
        loss += err * err * inv_n;
        const double dy = 2.0 * err * inv_n;

        g_wout += dy * act.a_fc.transpose();
        g_bout += dy;
        Eigen::VectorXd d_afc = dy * m.w_out.transpose();
        Eigen::VectorXd d_zfc =
            d_afc.array() * (act.z_fc.array() > 0.0).cast<double>();
        g_wfc += d_zfc * act.flat.transpose();
        g_bfc += d_zfc;

        if (!m.cfg.use_conv)
            continue;
        Eigen::VectorXd d_flat = m.w_fc.transpose() * d_zfc;
        const auto& last = m.conv.back();
        Eigen::MatrixXd d_a = Eigen::Map<const Eigen::MatrixXd>(
            d_flat.data(), last.out_channels(),
            d_flat.size() / last.out_channels());

        std::size_t w_base = g_conv_w.size();
        for (int l = static_cast<int>(m.conv.size()) - 1; l >= 0; --l) {
            const auto& layer = m.conv[static_cast<std::size_t>(l)];
            w_base -= static_cast<std::size_t>(layer.out_channels());
            const Eigen::MatrixXd d_z =
                d_a.array() * (act.z[static_cast<std::size_t>(l)].array() > 0.0).cast<double>();
            const Eigen::MatrixXd input =
                l == 0 ? Eigen::MatrixXd(x[s].transpose())
                       : act.a[static_cast<std::size_t>(l) - 1];
            for (int f = 0; f < layer.out_channels(); ++f) {
                for (int p = 0; p < d_z.cols(); ++p)
                    g_conv_w[w_base + static_cast<std::size_t>(f)] +=
                        d_z(f, p) * input.middleCols(p, layer.kernel);
                g_conv_b[static_cast<std::size_t>(l)](f) += d_z.row(f).sum();
            }
            if (l > 0) {
                Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(input.rows(), input.cols());
                for (int f = 0; f < layer.out_channels(); ++f)
                    for (int p = 0; p < d_z.cols(); ++p)
                        d_in.middleCols(p, layer.kernel) +=
                            d_z(f, p) * layer.weights[static_cast<std::size_t>(f)];
                d_a = d_in;
            }
        }
    }

    // flat layout matches get_params: per layer all filter weights then bias
    std::vector<double> g;
    {
        std::size_t wi = 0;
        for (std::size_t l = 0; l < m.conv.size(); ++l) {
            for (int f = 0; f < m.conv[l].out_channels(); ++f, ++wi)
                g.insert(g.end(), g_conv_w[wi].data(), g_conv_w[wi].data() + g_conv_w[wi].size());
            g.insert(g.end(), g_conv_b[l].data(), g_conv_b[l].data() + g_conv_b[l].size());
        }
    }
    g.insert(g.end(), g_wfc.data(), g_wfc.data() + g_wfc.size());
    g.insert(g.end(), g_bfc.data(), g_bfc.data() + g_bfc.size());
    g.insert(g.end(), g_wout.data(), g_wout.data() + g_wout.size());
    g.push_back(g_bout);
    grad = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    return loss;
}

struct TrainOptions {
    int epochs = 500;
    double learning_rate = 1e-2;
    double momentum = 0.9;
    int batch = 16;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> loss_history; // full-data MSE after each epoch
};

/// Mini-batch SGD on (raw features, raw targets). Features are normalized by
/// the stats fitted here; targets pass through the model's transform.
inline TrainReport train(SurrogateModel& m, const std::vector<Eigen::VectorXd>& features,
                         const std::vector<double>& targets, const TrainOptions& opt = {}) {
    if (features.empty() || features.size() != targets.size())
        throw TrainingError("train: empty or mismatched data");
    fit_normalization(m, features);
    std::vector<Eigen::VectorXd> xn(features.size());
    std::vector<double> yn(targets.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        xn[i] = normalize_features(m, features[i]);
        yn[i] = target_transform(m, targets[i]);
    }

    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> order(xn.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainReport report;
    Eigen::VectorXd params = get_params(m);
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
    Eigen::VectorXd grad;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
            std::vector<Eigen::VectorXd> bx;
            std::vector<double> by;
            for (std::size_t q = start; q < stop; ++q) {
                bx.push_back(xn[order[q]]);
                by.push_back(yn[order[q]]);
            }
            loss_and_gradient(m, bx, by, grad);
            velocity = opt.momentum * velocity - opt.learning_rate * grad;
            params += velocity;
            set_params(m, params);
        }
        double mse = 0.0;
        for (std::size_t i = 0; i < xn.size(); ++i) {
            const double err = detail_nn::forward(m, xn[i]).y - yn[i];
            mse += err * err;
        }
        mse /= static_cast<double>(xn.size());
        if (!std::isfinite(mse))
            throw TrainingError("train: loss diverged (non-finite) at epoch " +
                                std::to_string(epoch));
        report.loss_history.push_back(mse);
    }
    return report;
}

// ---- checkpoint: JSON header line + flat little-endian double payload ----

inline void save_checkpoint(const SurrogateModel& m, const std::string& path) {
    const Eigen::VectorXd p = get_params(m);
    nlohmann::json h;
    h["schema"] = "magdda-model/1";
    h["input_dim"] = m.cfg.input_dim;
    h["use_conv"] = m.cfg.use_conv;
    h["conv_layers"] = m.cfg.conv_layers;
    h["conv_filters"] = m.cfg.conv_filters;
    h["kernel"] = m.cfg.kernel;
    h["dense_units"] = m.cfg.dense_units;
    h["log_target"] = m.cfg.log_target;
    h["param_count"] = p.size();
    h["feat_min"] = std::vector<double>(m.feat_min.data(), m.feat_min.data() + m.feat_min.size());
    h["feat_max"] = std::vector<double>(m.feat_max.data(), m.feat_max.data() + m.feat_max.size());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("save_checkpoint: cannot open '" + path + "'");
    out << h.dump() << '\n';
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(sizeof(double)) * p.size());
    if (!out)
        throw ConfigError("save_checkpoint: write failed for '" + path + "'");
}

inline SurrogateModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("load_checkpoint: cannot open '" + path + "'");
    std::string header;
    std::getline(in, header);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("load_checkpoint: bad header: ") + e.what());
    }
    if (h.value("schema", "") != std::string("magdda-model/1"))
        throw ConfigError("load_checkpoint: unsupported schema");
    SurrogateConfig cfg;
    cfg.input_dim = h.at("input_dim").get<int>();
    cfg.use_conv = h.at("use_conv").get<bool>();
    cfg.conv_layers = h.at("conv_layers").get<int>();
    cfg.conv_filters = h.at("conv_filters").get<int>();
    cfg.kernel = h.at("kernel").get<int>();
    cfg.dense_units = h.at("dense_units").get<int>();
    cfg.log_target = h.at("log_target").get<bool>();
    SurrogateModel m = make_surrogate(cfg, 0);
    const auto fmin = h.at("feat_min").get<std::vector<double>>();
    const auto fmax = h.at("feat_max").get<std::vector<double>>();
    if (static_cast<int>(fmin.size()) != cfg.input_dim ||
        static_cast<int>(fmax.size()) != cfg.input_dim)
        throw ConfigError("load_checkpoint: normalization stats length mismatch");
    m.feat_min = Eigen::Map<const Eigen::VectorXd>(fmin.data(), cfg.input_dim);
    m.feat_max = Eigen::Map<const Eigen::VectorXd>(fmax.data(), cfg.input_dim);
    const Eigen::Index count = h.at("param_count").get<Eigen::Index>();
    Eigen::VectorXd p(count);
    in.read(reinterpret_cast<char*>(p.data()),
            static_cast<std::streamsize>(sizeof(double)) * count);
    if (!in)
        throw ConfigError("load_checkpoint: truncated parameter payload");
    set_params(m, p);
    return m;
}

} // namespace magdda
