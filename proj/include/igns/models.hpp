#pragma once

// Simulators composed from the port-Hamiltonian core:
//   igns      time-varying Hamiltonian weights, damping, geometric forcing
//   igns_ti   static Hamiltonian weights, damping, geometric forcing
//   graphcon  oscillatory baseline  p+ = p + dt (s(R(q)) - gamma q - alpha p),
//             q+ = q + dt p+,  with R the same edge-level stack as the forcing
//   gcn       first-order residual baseline x+ = x + dt g(X) with a
//             layer-normalized graph convolution stack
//
// Encoder and decoder are two-layer perceptrons with relu. The encoder reads
// normalized state, velocity and static channels (plus mesh positions when
// configured); the decoder reads both latent halves and emits physical-unit
// state and velocity after unnormalization.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "igns/autodiff.hpp"
#include "igns/dataset.hpp"
#include "igns/graph.hpp"
#include "igns/matrix.hpp"
#include "igns/phcore.hpp"
#include "igns/rng.hpp"

namespace igns {

using ad::Tape;
using ad::VarId;

enum class Variant { igns, igns_ti, graphcon, gcn };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::igns: return "igns";
        case Variant::igns_ti: return "igns_ti";
        case Variant::graphcon: return "graphcon";
        case Variant::gcn: return "gcn";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "igns") return Variant::igns;
    if (s == "igns_ti") return Variant::igns_ti;
    if (s == "graphcon") return Variant::graphcon;
    if (s == "gcn") return Variant::gcn;
    throw std::invalid_argument("unknown variant: " + s);
}

struct ModelConfig {
    Variant variant = Variant::igns;
    int latent_dim = 128;  // d, even
    int hidden_dim = 128;
    int forcing_layers = 1;  // L; also the conv depth of the baseline stacks
    int warmup_steps = 0;    // l
    double dt = 0.1;
    bool damping = true;
    double alpha = 1.0;  // graphcon damping scalar
    double gamma = 1.0;  // graphcon stiffness scalar
    int time_embed_dim = 16;
    int coeff_hidden = 16;
    bool include_initial_position = false;

    void validate() const {
        if (latent_dim < 2 || latent_dim % 2 != 0)
            throw std::invalid_argument("model config: latent_dim must be even and >= 2");
        if (hidden_dim < 1) throw std::invalid_argument("model config: hidden_dim must be positive");
        if (forcing_layers < 0) throw std::invalid_argument("model config: forcing_layers < 0");
        if (warmup_steps < 0) throw std::invalid_argument("model config: warmup_steps < 0");
        if (dt < 0) throw std::invalid_argument("model config: dt < 0");
        if (alpha < 0 || gamma < 0) throw std::invalid_argument("model config: alpha/gamma < 0");
        if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
            throw std::invalid_argument("model config: time_embed_dim must be even and >= 2");
    }
};

inline json to_json(const ModelConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"latent_dim", c.latent_dim},
                {"hidden_dim", c.hidden_dim},
                {"forcing_layers", c.forcing_layers},
                {"warmup_steps", c.warmup_steps},
                {"dt", c.dt},
                {"damping", c.damping},
                {"alpha", c.alpha},
                {"gamma", c.gamma},
                {"time_embed_dim", c.time_embed_dim},
                {"coeff_hidden", c.coeff_hidden},
                {"include_initial_position", c.include_initial_position}};
}

// Strict: unknown keys are errors so config typos never pass silently.
inline ModelConfig model_config_from_json(const json& j) {
    static const std::vector<std::string> known = {
        "variant",        "latent_dim", "hidden_dim", "forcing_layers",
        "warmup_steps",   "dt",         "damping",    "alpha",
        "gamma",          "time_embed_dim", "coeff_hidden", "include_initial_position"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == it.key();
        if (!ok) throw std::invalid_argument("model config: unknown key '" + it.key() + "'");
    }
    ModelConfig c;
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("latent_dim")) c.latent_dim = j.at("latent_dim").get<int>();
    if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").get<int>();
    if (j.contains("forcing_layers")) c.forcing_layers = j.at("forcing_layers").get<int>();
    if (j.contains("warmup_steps")) c.warmup_steps = j.at("warmup_steps").get<int>();
    if (j.contains("dt")) c.dt = j.at("dt").get<double>();
    if (j.contains("damping")) c.damping = j.at("damping").get<bool>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("time_embed_dim")) c.time_embed_dim = j.at("time_embed_dim").get<int>();
    if (j.contains("coeff_hidden")) c.coeff_hidden = j.at("coeff_hidden").get<int>();
    if (j.contains("include_initial_position"))
        c.include_initial_position = j.at("include_initial_position").get<bool>();
    c.validate();
    return c;
}

// What the model reads from and writes to a dataset.
struct ChannelSpec {
    int state_dim = 0;
    int velocity_dim = 0;
    int static_dim = 0;
    int spatial_dim = 0;
    int horizon = 1;  // normalizes the time embedding
    Normalization norm;

    static ChannelSpec from_manifest(const DatasetManifest& m) {
        ChannelSpec s;
        s.state_dim = m.state_dim;
        s.velocity_dim = m.velocity_dim;
        s.static_dim = m.static_dim;
        s.spatial_dim = m.spatial_dim;
        s.horizon = m.horizon;
        s.norm = m.norm;
        return s;
    }
};

// Per-tape constants derived from a graph.
struct GraphConsts {
    VarId edge_feats = -1;
    VarId invdeg_tiled = -1;  // [m x latent_dim], 1/in-degree of each slot's destination
};

template <typename Real>
struct LatentState {
    VarId q = -1;
    VarId p = -1;  // unused (-1) for the first-order gcn variant
    int t_index = 0;
};

template <typename Real>
struct DecodedFrame {
    VarId state = -1;     // [n x state_dim], physical units
    VarId velocity = -1;  // [n x velocity_dim], physical units (-1 when velocity_dim = 0)
};

template <typename Real>
struct RolloutResult {
    std::vector<DecodedFrame<Real>> frames;
    std::vector<Real> latent_energy;  // conservative-core H per step when recorded
    LatentState<Real> final_state;
};

template <typename Real>
class Model {
public:
    Model(ModelConfig cfg, ChannelSpec spec) : cfg_(cfg), spec_(spec) {
        cfg_.validate();
        define_layout();
    }

    const ModelConfig& config() const { return cfg_; }
    const ChannelSpec& channels() const { return spec_; }
    int half_dim() const { return cfg_.latent_dim / 2; }
    int encoder_inputs() const {
        return spec_.state_dim + spec_.velocity_dim + spec_.static_dim +
               (cfg_.include_initial_position ? spec_.spatial_dim : 0);
    }
    int decoder_outputs() const { return spec_.state_dim + spec_.velocity_dim; }

    int n_params() const { return static_cast<int>(params_.size()); }
    size_t n_scalars() const {
        size_t s = 0;
        for (const auto& p : params_) s += p.size();
        return s;
    }
    const std::vector<Matrix<Real>>& params() const { return params_; }
    std::vector<Matrix<Real>>& params() { return params_; }
    const std::string& param_name(int i) const { return names_[static_cast<size_t>(i)]; }
    int param_index(const std::string& name) const {
        for (size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return static_cast<int>(i);
        throw std::invalid_argument("no parameter named " + name);
    }

    void init_params(uint64_t seed) {
        Rng rng(seed);
        for (size_t i = 0; i < params_.size(); ++i) init_one(names_[i], params_[i], rng);
    }

    // Parameters as tape leaves, in layout order. trainable=false binds them
    // as constants for plain evaluation.
    std::vector<VarId> bind(Tape<Real>& t, bool trainable) const {
        std::vector<VarId> ids;
        ids.reserve(params_.size());
        for (size_t i = 0; i < params_.size(); ++i)
            ids.push_back(trainable ? t.param(params_[i], static_cast<int>(i)) : t.constant(params_[i]));
        return ids;
    }

    GraphConsts make_graph_consts(Tape<Real>& t, const Graph& g) const {
        GraphConsts gc;
        gc.edge_feats = t.constant(edge_feature_matrix<Real>(g));
        if (cfg_.variant == Variant::gcn) {
            Matrix<Real> inv(g.n_edges(), cfg_.latent_dim);
            for (int s = 0; s < g.n_edges(); ++s) {
                const int dst = g.in_dir.plan.row_of_slot[static_cast<size_t>(s)];
                const int deg = g.in_dir.plan.offsets[static_cast<size_t>(dst) + 1] -
                                g.in_dir.plan.offsets[static_cast<size_t>(dst)];
                for (int c = 0; c < cfg_.latent_dim; ++c)
                    inv(s, c) = Real(1) / static_cast<Real>(deg);
            }
            gc.invdeg_tiled = t.constant(inv);
        }
        return gc;
    }

    // ---- encode -----------------------------------------------------------

    // Inputs are physical-unit matrices; normalization happens on tape with
    // constants from the dataset statistics. Optional noise (already scaled)
    // lands on the dynamic channels only.
    LatentState<Real> encode(Tape<Real>& t, const std::vector<VarId>& ids, const Graph& g,
                             const Matrix<Real>& state0, const Matrix<Real>& velocity0,
                             const Matrix<Real>& static_attrs,
                             const Matrix<Real>* dynamic_noise = nullptr) const {
        if (state0.cols != spec_.state_dim)
            throw std::invalid_argument("encode: state channel mismatch vs manifest");
        if (spec_.velocity_dim > 0 && velocity0.cols != spec_.velocity_dim)
            throw std::invalid_argument("encode: velocity channel mismatch vs manifest");
        if (static_attrs.cols != spec_.static_dim)
            throw std::invalid_argument("encode: static channel mismatch vs manifest");

        VarId x = normalized(t, state0, spec_.norm.state_mean, spec_.norm.state_std);
        if (spec_.velocity_dim > 0)
            x = t.concat_cols(x, normalized(t, velocity0, spec_.norm.velocity_mean,
                                            spec_.norm.velocity_std));
        if (dynamic_noise != nullptr) x = t.add(x, t.constant(*dynamic_noise));
        if (spec_.static_dim > 0)
            x = t.concat_cols(x, normalized(t, static_attrs, spec_.norm.static_mean,
                                            spec_.norm.static_std));
        if (cfg_.include_initial_position) {
            auto pos = position_matrix<Real>(g);
            std::vector<double> mean(static_cast<size_t>(g.spatial_dim), 0.0),
                stdev(static_cast<size_t>(g.spatial_dim), 1.0);
            position_stats(g, mean, stdev);
            x = t.concat_cols(x, normalized(t, pos, mean, stdev));
        }

        VarId lat = mlp2(t, x, ids, "enc");
        LatentState<Real> s;
        if (cfg_.variant == Variant::gcn) {
            s.q = lat;
        } else {
            s.q = t.slice_cols(lat, 0, half_dim());
            s.p = t.slice_cols(lat, half_dim(), cfg_.latent_dim);
        }
        return s;
    }

    // ---- latent step ------------------------------------------------------

    LatentState<Real> step(Tape<Real>& t, const std::vector<VarId>& ids, const Graph& g,
                           const GraphConsts& gc, const LatentState<Real>& s, int time_index,
                           bool advance_counter = true) const {
        LatentState<Real> out;
        out.t_index = s.t_index + (advance_counter ? 1 : 0);
        switch (cfg_.variant) {
            case Variant::igns:
            case Variant::igns_ti: {
                auto grad = hamiltonian_provider(t, ids, g, time_index);
                std::optional<VarId> damp;
                if (cfg_.damping) damp = t.softplus_fn(ids[static_cast<size_t>(at("damp_raw"))]);
                std::optional<VarId> force;
                if (cfg_.forcing_layers > 0)
                    force = ph::forcing(t, s.q, g, gc.edge_feats, forcing_layers(ids));
                auto [q1, p1] =
                    ph::symplectic_step(t, grad, damp, force, s.q, s.p, static_cast<Real>(cfg_.dt));
                out.q = q1;
                out.p = p1;
                break;
            }
            case Variant::graphcon: {
                VarId r = t.tanh_fn(ph::forcing(t, s.q, g, gc.edge_feats, forcing_layers(ids)));
                auto [q1, p1] = graphcon_step(t, s.q, s.p, r, static_cast<Real>(cfg_.dt),
                                              static_cast<Real>(cfg_.alpha),
                                              static_cast<Real>(cfg_.gamma));
                out.q = q1;
                out.p = p1;
                break;
            }
            case Variant::gcn: {
                out.q = gcn_step(t, ids, g, gc, s.q);
                break;
            }
        }
        return out;
    }

    // Oscillatory baseline update; mirrors the symplectic step's arithmetic
    // term by term so the quadratic-Hamiltonian reduction is bit-exact.
    static std::pair<VarId, VarId> graphcon_step(Tape<Real>& t, VarId q, VarId p, VarId r, Real dt,
                                                 Real alpha, Real gamma) {
        VarId acc = t.scale(t.scale(q, gamma), Real(-1));
        acc = t.sub(acc, t.scale(p, alpha));
        acc = t.add(acc, r);
        VarId p_next = t.add(p, t.scale(acc, dt));
        VarId q_next = t.add(q, t.scale(p_next, dt));
        return {q_next, p_next};
    }

    // ---- decode -----------------------------------------------------------

    DecodedFrame<Real> decode(Tape<Real>& t, const std::vector<VarId>& ids,
                              const LatentState<Real>& s) const {
        VarId lat = cfg_.variant == Variant::gcn ? s.q : t.concat_cols(s.q, s.p);
        VarId out = mlp2(t, lat, ids, "dec");
        DecodedFrame<Real> f;
        VarId qn = t.slice_cols(out, 0, spec_.state_dim);
        f.state = unnormalized(t, qn, spec_.norm.state_mean, spec_.norm.state_std);
        if (spec_.velocity_dim > 0) {
            VarId pn = t.slice_cols(out, spec_.state_dim, decoder_outputs());
            f.velocity = unnormalized(t, pn, spec_.norm.velocity_mean, spec_.norm.velocity_std);
        }
        return f;
    }

    // ---- rollout ----------------------------------------------------------

    // encode -> warmup (time frozen at t0, counter not advanced) -> T steps,
    // decoding every step to physical units. warmup_override = -1 keeps the
    // configured length.
    RolloutResult<Real> rollout(Tape<Real>& t, const std::vector<VarId>& ids, const Graph& g,
                                const GraphConsts& gc, const Matrix<Real>& state0,
                                const Matrix<Real>& velocity0, const Matrix<Real>& static_attrs,
                                int t0, int T, int warmup_override = -1,
                                const Matrix<Real>* dynamic_noise = nullptr,
                                bool record_energy = false) const {
        if (T < 0) throw std::invalid_argument("rollout: negative horizon");
        RolloutResult<Real> rr;
        auto s = encode(t, ids, g, state0, velocity0, static_attrs, dynamic_noise);
        s.t_index = t0;

        const int l = warmup_override >= 0 ? warmup_override : cfg_.warmup_steps;
        if (cfg_.variant == Variant::gcn) {
            for (int i = 0; i < l; ++i) s = step(t, ids, g, gc, s, t0, /*advance=*/false);
        } else {
            for (int i = 0; i < l; ++i) {
                auto next = step(t, ids, g, gc, s, t0, /*advance=*/false);
                s.q = next.q;
                s.p = next.p;
            }
        }

        if (record_energy) rr.latent_energy.push_back(latent_energy(t, ids, g, s, t0));
        for (int tau = 1; tau <= T; ++tau) {
            s = step(t, ids, g, gc, s, t0 + tau - 1);
            s.t_index = t0 + tau;
            rr.frames.push_back(decode(t, ids, s));
            if (record_energy) rr.latent_energy.push_back(latent_energy(t, ids, g, s, t0 + tau));
        }
        rr.final_state = s;
        return rr;
    }

    // ---- checkpoints ------------------------------------------------------

    void save_checkpoint(const std::filesystem::path& path, int64_t step_count,
                         double val_loss) const {
        json header{{"config", igns::to_json(cfg_)},
                    {"channels",
                     json{{"state_dim", spec_.state_dim},
                          {"velocity_dim", spec_.velocity_dim},
                          {"static_dim", spec_.static_dim},
                          {"spatial_dim", spec_.spatial_dim},
                          {"horizon", spec_.horizon},
                          {"normalization", igns::to_json(spec_.norm)}}},
                    {"dtype", sizeof(Real) == 4 ? "float32" : "float64"},
                    {"step_count", step_count},
                    {"val_loss", val_loss},
                    {"params", json::array()}};
        for (size_t i = 0; i < params_.size(); ++i)
            header["params"].push_back(
                json{{"name", names_[i]}, {"rows", params_[i].rows}, {"cols", params_[i].cols}});
        const std::string hs = header.dump();

        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
        out.write("IGNSCKPT", 8);
        const uint64_t hlen = hs.size();
        out.write(reinterpret_cast<const char*>(&hlen), 8);
        out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& p : params_)
            out.write(reinterpret_cast<const char*>(p.data()),
                      static_cast<std::streamsize>(p.size() * sizeof(Real)));
    }

    static Model load_checkpoint(const std::filesystem::path& path, int64_t* step_count = nullptr,
                                 double* val_loss = nullptr) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, "IGNSCKPT", 8) != 0)
            throw std::runtime_error("not a checkpoint file: " + path.string());
        uint64_t hlen = 0;
        in.read(reinterpret_cast<char*>(&hlen), 8);
        std::string hs(hlen, '\0');
        in.read(hs.data(), static_cast<std::streamsize>(hlen));
        if (!in) throw std::runtime_error("checkpoint header truncated");
        json header = json::parse(hs);

        const std::string dtype = header.at("dtype").get<std::string>();
        if ((sizeof(Real) == 4) != (dtype == "float32"))
            throw std::runtime_error("checkpoint dtype " + dtype + " does not match requested precision");

        ChannelSpec spec;
        const auto& ch = header.at("channels");
        spec.state_dim = ch.at("state_dim").get<int>();
        spec.velocity_dim = ch.at("velocity_dim").get<int>();
        spec.static_dim = ch.at("static_dim").get<int>();
        spec.spatial_dim = ch.at("spatial_dim").get<int>();
        spec.horizon = ch.at("horizon").get<int>();
        spec.norm = normalization_from_json(ch.at("normalization"));

        Model m(model_config_from_json(header.at("config")), spec);
        const auto& plist = header.at("params");
        if (plist.size() != m.params_.size())
            throw std::runtime_error("checkpoint parameter list does not match config");
        for (size_t i = 0; i < m.params_.size(); ++i) {
            if (plist[i].at("name").get<std::string>() != m.names_[i] ||
                plist[i].at("rows").get<int>() != m.params_[i].rows ||
                plist[i].at("cols").get<int>() != m.params_[i].cols)
                throw std::runtime_error("checkpoint parameter mismatch at " + m.names_[i]);
            in.read(reinterpret_cast<char*>(m.params_[i].data()),
                    static_cast<std::streamsize>(m.params_[i].size() * sizeof(Real)));
        }
        if (!in) throw std::runtime_error("checkpoint payload truncated");
        if (step_count) *step_count = header.at("step_count").get<int64_t>();
        if (val_loss) *val_loss = header.at("val_loss").get<double>();
        return m;
    }

    // Conservative-core energy of a latent state (igns variants only).
    Real latent_energy(Tape<Real>& t, const std::vector<VarId>& ids, const Graph& g,
                       const LatentState<Real>& s, int time_index) const {
        if (cfg_.variant == Variant::gcn || cfg_.variant == Variant::graphcon) return Real(0);
        auto [qw, pw] = hamiltonian_weights(t, ids, g, time_index);
        return t.val(ph::hamiltonian(t, s.q, s.p, g, qw, pw))(0, 0);
    }

private:
    ModelConfig cfg_;
    ChannelSpec spec_;
    std::vector<std::string> names_;
    std::vector<Matrix<Real>> params_;

    int at(const std::string& name) const { return param_index(name); }

    void add(const std::string& name, int rows, int cols) {
        names_.push_back(name);
        params_.emplace_back(rows, cols);
    }

    void define_layout() {
        const int d = cfg_.latent_dim;
        const int k = half_dim();
        const int in_ch = encoder_inputs();
        const int out_ch = decoder_outputs();
        const int edge_dim = spec_.spatial_dim + 1;

        add("enc_w1", cfg_.hidden_dim, in_ch);
        add("enc_b1", 1, cfg_.hidden_dim);
        add("enc_w2", d, cfg_.hidden_dim);
        add("enc_b2", 1, d);
        add("dec_w1", cfg_.hidden_dim, d);
        add("dec_b1", 1, cfg_.hidden_dim);
        add("dec_w2", out_ch, cfg_.hidden_dim);
        add("dec_b2", 1, out_ch);

        if (cfg_.variant == Variant::igns_ti) {
            for (const char* blk : {"wq", "wp", "vq", "vp"}) add(std::string("h_") + blk, k, k);
            add("h_bq", 1, k);
            add("h_bp", 1, k);
        } else if (cfg_.variant == Variant::igns) {
            for (const char* blk : {"wq", "wp", "vq", "vp"}) {
                const std::string b = std::string("tv_") + blk;
                add(b + "_us", k, k);
                add(b + "_ua", k, k);
                add(b + "_pa", k, k);
                for (const char* net : {"_gamma", "_tau"}) {
                    add(b + net + "_w1", cfg_.coeff_hidden, cfg_.time_embed_dim);
                    add(b + net + "_b1", 1, cfg_.coeff_hidden);
                    add(b + net + "_w2", k, cfg_.coeff_hidden);
                    add(b + net + "_b2", 1, k);
                }
            }
            add("h_bq", 1, k);
            add("h_bp", 1, k);
        }
        if (cfg_.variant == Variant::igns || cfg_.variant == Variant::igns_ti) {
            if (cfg_.damping) add("damp_raw", 1, k);
        }
        if (cfg_.variant != Variant::gcn) {
            for (int l = 0; l < cfg_.forcing_layers; ++l) {
                const std::string b = "f" + std::to_string(l);
                add(b + "_node", k, k);
                add(b + "_diff", k, k);
                add(b + "_edge", k, edge_dim);
            }
        } else {
            const int depth = std::max(1, cfg_.forcing_layers);
            for (int l = 0; l < depth; ++l) {
                const std::string b = "g" + std::to_string(l);
                add(b + "_self", d, d);
                add(b + "_nb", d, d);
                add(b + "_b", 1, d);
                add(b + "_ln_gain", 1, d);
                add(b + "_ln_bias", 1, d);
            }
            add("g_head", d, d);
            add("g_head_b", 1, d);
        }
    }

    void init_one(const std::string& name, Matrix<Real>& m, Rng& rng) const {
        auto fill_normal = [&](double scale) {
            for (auto& x : m.v) x = static_cast<Real>(scale * rng.normal());
        };
        auto fill_glorot = [&] {
            const double a = std::sqrt(6.0 / (m.rows + m.cols));
            for (auto& x : m.v) x = static_cast<Real>(rng.uniform(-a, a));
        };
        const int k = half_dim();
        if (name.ends_with("_b") || name.ends_with("_b1") || name.ends_with("_b2") ||
            name.ends_with("_bias") || name == "h_bq" || name == "h_bp" || name == "enc_b1" ||
            name == "enc_b2" || name == "dec_b1" || name == "dec_b2" || name == "g_head_b") {
            for (auto& x : m.v) x = Real(0);
            // coefficient-net output biases seed the assembled weights
            if (name.find("_gamma_b2") != std::string::npos)
                for (auto& x : m.v) x = Real(0.4);
            if (name.find("_tau_b2") != std::string::npos)
                for (auto& x : m.v) x = Real(0.2);
        } else if (name == "damp_raw") {
            for (auto& x : m.v) x = Real(-2.0);  // softplus(-2) ~ 0.13
        } else if (name.ends_with("_ln_gain")) {
            for (auto& x : m.v) x = Real(1);
        } else if (name.starts_with("h_w")) {
            fill_normal(0.8 / std::sqrt(static_cast<double>(k)));
        } else if (name.starts_with("h_v")) {
            fill_normal(0.3 / std::sqrt(static_cast<double>(k)));
        } else if (name.starts_with("tv_") &&
                   (name.ends_with("_us") || name.ends_with("_ua") || name.ends_with("_pa"))) {
            fill_normal(1.0 / std::sqrt(static_cast<double>(k)));
        } else if (name.find("_gamma_w2") != std::string::npos ||
                   name.find("_tau_w2") != std::string::npos) {
            fill_normal(0.05);  // coefficients start near their bias values
        } else if (name.ends_with("_edge")) {
            fill_normal(0.5 / std::sqrt(static_cast<double>(m.cols)));
        } else if (name.starts_with("f") && (name.ends_with("_node") || name.ends_with("_diff"))) {
            fill_normal(0.5 / std::sqrt(static_cast<double>(k)));
        } else {
            fill_glorot();
        }
    }

    // normalized(x) = (x - mean) / std as tape ops with constant rows
    VarId normalized(Tape<Real>& t, const Matrix<Real>& x, const std::vector<double>& mean,
                     const std::vector<double>& stdev) const {
        if (x.cols != static_cast<int>(mean.size()))
            throw std::invalid_argument("normalization: channel mismatch vs manifest");
        Matrix<Real> mu(1, x.cols), inv(1, x.cols);
        for (int c = 0; c < x.cols; ++c) {
            mu(0, c) = static_cast<Real>(mean[static_cast<size_t>(c)]);
            inv(0, c) = static_cast<Real>(1.0 / stdev[static_cast<size_t>(c)]);
        }
        return t.mul(t.sub(t.constant(x), t.constant(mu)), t.constant(inv));
    }

    VarId unnormalized(Tape<Real>& t, VarId x, const std::vector<double>& mean,
                       const std::vector<double>& stdev) const {
        const int cols = t.val(x).cols;
        Matrix<Real> mu(1, cols), sd(1, cols);
        for (int c = 0; c < cols; ++c) {
            mu(0, c) = static_cast<Real>(mean[static_cast<size_t>(c)]);
            sd(0, c) = static_cast<Real>(stdev[static_cast<size_t>(c)]);
        }
        return t.add(t.mul(x, t.constant(sd)), t.constant(mu));
    }

    static void position_stats(const Graph& g, std::vector<double>& mean,
                               std::vector<double>& stdev) {
        for (int d = 0; d < g.spatial_dim; ++d) {
            double s = 0, s2 = 0;
            for (int i = 0; i < g.n_nodes; ++i) {
                s += g.pos(i, d);
                s2 += g.pos(i, d) * g.pos(i, d);
            }
            const double m = s / g.n_nodes;
            double sd = std::sqrt(std::max(s2 / g.n_nodes - m * m, 0.0));
            if (sd < 1e-8) sd = 1.0;
            mean[static_cast<size_t>(d)] = m;
            stdev[static_cast<size_t>(d)] = sd;
        }
    }

    VarId linear(Tape<Real>& t, VarId x, VarId w, VarId b) const {
        return t.add(t.matmul(x, t.transpose(w)), b);
    }

    VarId mlp2(Tape<Real>& t, VarId x, const std::vector<VarId>& ids,
               const std::string& prefix) const {
        VarId h = t.relu(linear(t, x, ids[static_cast<size_t>(at(prefix + "_w1"))],
                                ids[static_cast<size_t>(at(prefix + "_b1"))]));
        return linear(t, h, ids[static_cast<size_t>(at(prefix + "_w2"))],
                      ids[static_cast<size_t>(at(prefix + "_b2"))]);
    }

    std::vector<ph::ForcingLayer> forcing_layers(const std::vector<VarId>& ids) const {
        std::vector<ph::ForcingLayer> layers;
        for (int l = 0; l < cfg_.forcing_layers; ++l) {
            const std::string b = "f" + std::to_string(l);
            layers.push_back({ids[static_cast<size_t>(at(b + "_node"))],
                              ids[static_cast<size_t>(at(b + "_diff"))],
                              ids[static_cast<size_t>(at(b + "_edge"))]});
        }
        return layers;
    }

    std::pair<ph::BlockWeights, ph::BlockWeights> hamiltonian_weights(Tape<Real>& t,
                                                                      const std::vector<VarId>& ids,
                                                                      const Graph& g,
                                                                      int time_index) const {
        (void)g;
        ph::BlockWeights qw, pw;
        qw.b = ids[static_cast<size_t>(at("h_bq"))];
        pw.b = ids[static_cast<size_t>(at("h_bp"))];
        if (cfg_.variant == Variant::igns_ti) {
            qw.w = ids[static_cast<size_t>(at("h_wq"))];
            qw.v = ids[static_cast<size_t>(at("h_vq"))];
            pw.w = ids[static_cast<size_t>(at("h_wp"))];
            pw.v = ids[static_cast<size_t>(at("h_vp"))];
        } else {
            VarId embed = t.constant(
                ph::time_embedding<Real>(time_index, spec_.horizon, cfg_.time_embed_dim));
            auto block = [&](const std::string& b) {
                ph::TimeVaryingBlock blk;
                blk.u_sym = ids[static_cast<size_t>(at(b + "_us"))];
                blk.u_skew = ids[static_cast<size_t>(at(b + "_ua"))];
                blk.p_skew = ids[static_cast<size_t>(at(b + "_pa"))];
                blk.gamma = {ids[static_cast<size_t>(at(b + "_gamma_w1"))],
                             ids[static_cast<size_t>(at(b + "_gamma_b1"))],
                             ids[static_cast<size_t>(at(b + "_gamma_w2"))],
                             ids[static_cast<size_t>(at(b + "_gamma_b2"))]};
                blk.tau = {ids[static_cast<size_t>(at(b + "_tau_w1"))],
                           ids[static_cast<size_t>(at(b + "_tau_b1"))],
                           ids[static_cast<size_t>(at(b + "_tau_w2"))],
                           ids[static_cast<size_t>(at(b + "_tau_b2"))]};
                return ph::assemble_time_varying(t, blk, embed);
            };
            qw.w = block("tv_wq");
            qw.v = block("tv_vq");
            pw.w = block("tv_wp");
            pw.v = block("tv_vp");
        }
        return {qw, pw};
    }

    ph::GradProvider<Real> hamiltonian_provider(Tape<Real>& t, const std::vector<VarId>& ids,
                                                const Graph& g, int time_index) const {
        auto [qw, pw] = hamiltonian_weights(t, ids, g, time_index);
        return ph::make_hamiltonian_grad<Real>(g, qw, pw);
    }

    // one first-order residual update through the layer-normalized conv stack
    VarId gcn_step(Tape<Real>& t, const std::vector<VarId>& ids, const Graph& g,
                   const GraphConsts& gc, VarId x) const {
        const int d = cfg_.latent_dim;
        const int depth = std::max(1, cfg_.forcing_layers);
        Matrix<Real> ones_col(d, 1, Real(1) / static_cast<Real>(d));
        Matrix<Real> ones_row(1, d, Real(1));
        Matrix<Real> eps(t.val(x).rows, 1, Real(1e-5));
        VarId ones_col_c = t.constant(ones_col);
        VarId ones_row_c = t.constant(ones_row);
        VarId eps_c = t.constant(eps);

        VarId h = x;
        for (int l = 0; l < depth; ++l) {
            const std::string b = "g" + std::to_string(l);
            VarId self = t.matmul(h, t.transpose(ids[static_cast<size_t>(at(b + "_self"))]));
            VarId msgs = t.gather_rows(t.matmul(h, t.transpose(ids[static_cast<size_t>(at(b + "_nb"))])),
                                       g.in_dir.gather);
            VarId agg = t.scatter_sum(t.mul(msgs, gc.invdeg_tiled), g.in_dir.plan);
            VarId pre = t.add(t.add(self, agg), ids[static_cast<size_t>(at(b + "_b"))]);
            // layer norm across channels, then the nonlinearity
            VarId mean = t.matmul(pre, ones_col_c);                       // [n x 1]
            VarId centered = t.sub(pre, t.matmul(mean, ones_row_c));      // [n x d]
            VarId var = t.matmul(t.square(centered), ones_col_c);         // [n x 1]
            VarId rstd = t.rsqrt(t.add(var, eps_c));
            VarId normed = t.mul(centered, t.matmul(rstd, ones_row_c));
            VarId scaled = t.add(t.mul(normed, ids[static_cast<size_t>(at(b + "_ln_gain"))]),
                                 ids[static_cast<size_t>(at(b + "_ln_bias"))]);
            h = t.relu(scaled);
        }
        VarId gout = t.add(t.matmul(h, t.transpose(ids[static_cast<size_t>(at("g_head"))])),
                           ids[static_cast<size_t>(at("g_head_b"))]);
        return t.add(x, t.scale(gout, static_cast<Real>(cfg_.dt)));
    }
};

}  // namespace igns
