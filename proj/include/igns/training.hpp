#pragma once

// Multi-step training: window sampling over trajectories, rollout through the
// model, the summed squared-error objective on states and momenta in physical
// units, bias-corrected Adam, and best-validation checkpointing.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "igns/dataset.hpp"
#include "igns/models.hpp"
#include "igns/rng.hpp"

namespace igns {

struct TrainConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int window = 10;  // K; clamped to the horizon when larger
    int batch_size = 4;
    int iterations = 1000;
    int eval_interval = 100;
    double noise_std = 0.0;
    uint64_t seed = 0;
    double clip_norm = 1.0;  // applied only when exceeded; <= 0 disables
    double p_weight = 1.0;   // weight of the momentum term in the objective
    std::string momenta = "auto";  // stored | finite_difference | auto

    void validate() const {
        if (learning_rate < 0) throw std::invalid_argument("train config: negative learning rate");
        if (window < 1) throw std::invalid_argument("train config: window must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (iterations < 0) throw std::invalid_argument("train config: negative iterations");
        if (eval_interval < 1) throw std::invalid_argument("train config: eval_interval must be >= 1");
        if (noise_std < 0) throw std::invalid_argument("train config: negative noise std");
        if (p_weight < 0) throw std::invalid_argument("train config: negative p weight");
        if (momenta != "auto" && momenta != "stored" && momenta != "finite_difference")
            throw std::invalid_argument("train config: momenta must be auto|stored|finite_difference");
    }
};

inline json to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"epsilon", c.epsilon},
                {"window", c.window},
                {"batch_size", c.batch_size},
                {"iterations", c.iterations},
                {"eval_interval", c.eval_interval},
                {"noise_std", c.noise_std},
                {"seed", c.seed},
                {"clip_norm", c.clip_norm},
                {"p_weight", c.p_weight},
                {"momenta", c.momenta}};
}

inline TrainConfig train_config_from_json(const json& j) {
    static const std::vector<std::string> known = {
        "learning_rate", "beta1",         "beta2",     "epsilon",  "window",
        "batch_size",    "iterations",    "eval_interval", "noise_std", "seed",
        "clip_norm",     "p_weight",      "momenta"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == it.key();
        if (!ok) throw std::invalid_argument("train config: unknown key '" + it.key() + "'");
    }
    TrainConfig c;
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("window")) c.window = j.at("window").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("iterations")) c.iterations = j.at("iterations").get<int>();
    if (j.contains("eval_interval")) c.eval_interval = j.at("eval_interval").get<int>();
    if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("clip_norm")) c.clip_norm = j.at("clip_norm").get<double>();
    if (j.contains("p_weight")) c.p_weight = j.at("p_weight").get<double>();
    if (j.contains("momenta")) c.momenta = j.at("momenta").get<std::string>();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// momenta targets

// Backward differences p(t) = (q(t) - q(t-1)) / dt; the first frame uses the
// forward difference so it stays exact on linear signals too.
template <typename Real>
std::vector<Matrix<Real>> finite_difference_momenta(const std::vector<Matrix<Real>>& q_frames,
                                                    double dt) {
    if (dt <= 0) throw std::invalid_argument("finite differences: dt must be positive");
    if (q_frames.size() < 2) throw std::invalid_argument("finite differences: need >= 2 frames");
    std::vector<Matrix<Real>> p(q_frames.size());
    const Real inv = static_cast<Real>(1.0 / dt);
    for (size_t t = 1; t < q_frames.size(); ++t) {
        p[t] = Matrix<Real>(q_frames[t].rows, q_frames[t].cols);
        for (size_t i = 0; i < p[t].v.size(); ++i)
            p[t].v[i] = (q_frames[t].v[i] - q_frames[t - 1].v[i]) * inv;
    }
    p[0] = Matrix<Real>(q_frames[0].rows, q_frames[0].cols);
    for (size_t i = 0; i < p[0].v.size(); ++i)
        p[0].v[i] = (q_frames[1].v[i] - q_frames[0].v[i]) * inv;
    return p;
}

// ---------------------------------------------------------------------------
// objective

// sum_tau ( ||q_hat - q||^2 + w ||p_hat - p||^2 ), summed over nodes and
// channels; the caller averages over the batch.
template <typename Real>
VarId multi_step_loss(Tape<Real>& t, const std::vector<DecodedFrame<Real>>& frames,
                      const std::vector<Matrix<Real>>& q_targets,
                      const std::vector<Matrix<Real>>& p_targets, double p_weight) {
    if (frames.empty()) throw std::invalid_argument("multi-step loss: no frames");
    if (frames.size() != q_targets.size())
        throw std::invalid_argument("multi-step loss: frame/target length mismatch");
    const bool with_p = frames.front().velocity >= 0;
    if (with_p && p_targets.size() != frames.size())
        throw std::invalid_argument("multi-step loss: momentum target length mismatch");
    VarId loss = -1;
    for (size_t tau = 0; tau < frames.size(); ++tau) {
        VarId term = t.sum(t.square(t.sub(frames[tau].state, t.constant(q_targets[tau]))));
        if (with_p) {
            VarId pterm = t.sum(t.square(t.sub(frames[tau].velocity, t.constant(p_targets[tau]))));
            term = t.add(term, t.scale(pterm, static_cast<Real>(p_weight)));
        }
        loss = tau == 0 ? term : t.add(loss, term);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// optimizer

template <typename Real>
struct AdamState {
    std::vector<Matrix<Real>> m, v;
    int64_t t = 0;

    static AdamState shaped_like(const std::vector<Matrix<Real>>& params) {
        AdamState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.rows, p.cols);
            s.v.emplace_back(p.rows, p.cols);
        }
        return s;
    }
};

// Global-norm clipping, applied only when the norm exceeds the limit.
template <typename Real>
double clip_gradients(std::vector<Matrix<Real>>& grads, double max_norm) {
    double sq = 0;
    for (const auto& g : grads)
        for (Real x : g.v) sq += static_cast<double>(x) * static_cast<double>(x);
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const Real s = static_cast<Real>(max_norm / norm);
        for (auto& g : grads)
            for (auto& x : g.v) x *= s;
    }
    return norm;
}

template <typename Real>
void adam_step(std::vector<Matrix<Real>>& params, const std::vector<Matrix<Real>>& grads,
               AdamState<Real>& state, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam: shape mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i])) throw std::invalid_argument("adam: grad shape mismatch");
        for (size_t j = 0; j < params[i].v.size(); ++j) {
            const double g = static_cast<double>(grads[i].v[j]);
            if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient");
            double m = static_cast<double>(state.m[i].v[j]);
            double v = static_cast<double>(state.v[i].v[j]);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            state.m[i].v[j] = static_cast<Real>(m);
            state.v[i].v[j] = static_cast<Real>(v);
            const double update = cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
            params[i].v[j] = static_cast<Real>(static_cast<double>(params[i].v[j]) - update);
        }
    }
}

// ---------------------------------------------------------------------------
// window sampling

// Every valid (trajectory, start) pair is visited exactly once per epoch, in
// an order reshuffled from the seed at each epoch boundary.
class WindowSampler {
public:
    WindowSampler(const std::vector<int>& traj_ids, int horizon, int window, uint64_t seed)
        : seed_(seed) {
        const int max_start = horizon - window;
        if (max_start < 0) throw std::invalid_argument("window sampler: window exceeds horizon");
        for (int id : traj_ids)
            for (int s = 0; s <= max_start; ++s) order_.push_back({id, s});
        if (order_.empty()) throw std::invalid_argument("window sampler: empty training split");
        reshuffle();
    }

    std::pair<int, int> next() {
        if (cursor_ == order_.size()) {
            ++epoch_;
            reshuffle();
        }
        return order_[cursor_++];
    }

    size_t windows_per_epoch() const { return order_.size(); }
    int epoch() const { return epoch_; }

private:
    std::vector<std::pair<int, int>> order_;
    size_t cursor_ = 0;
    int epoch_ = 0;
    uint64_t seed_;

    void reshuffle() {
        Rng rng(seed_ + 0x9e37ull * static_cast<uint64_t>(epoch_));
        rng.shuffle(order_);
        cursor_ = 0;
    }
};

// ---------------------------------------------------------------------------
// training loop

struct TrainResult {
    double first_train_loss = 0;
    double final_train_loss = 0;   // last single iteration (noisy across window mixes)
    double tail_train_loss = 0;    // mean over the final tenth of iterations
    double best_val_loss = 0;
    int iterations = 0;
    size_t parameter_count = 0;
    std::filesystem::path checkpoint;
    std::filesystem::path metrics;
};

namespace detail {

template <typename Real>
std::vector<Matrix<Real>> window_momenta(const Trajectory<Real>& tr, int t0, int count,
                                         const std::string& mode, double dt) {
    const bool stored = mode == "stored" || (mode == "auto" && tr.velocity_dim > 0);
    if (stored) {
        if (tr.velocity_dim == 0)
            throw std::invalid_argument("momenta: stored requested but dataset has none");
        std::vector<Matrix<Real>> out;
        for (int i = 0; i < count; ++i) out.push_back(tr.velocity_frame(t0 + i));
        return out;
    }
    std::vector<Matrix<Real>> q_frames;
    for (int t = 0; t < tr.frames; ++t) q_frames.push_back(tr.state_frame(t));
    auto p = finite_difference_momenta(q_frames, dt);
    return {p.begin() + t0, p.begin() + t0 + count};
}

}  // namespace detail

// Mean multi-step loss per frame over the given split, full-horizon rollouts.
template <typename Real>
double evaluate_split_loss(const Model<Real>& model, const Dataset<Real>& ds,
                           const std::vector<int>& ids, const TrainConfig& cfg,
                           int warmup_override = -1) {
    if (ids.empty()) throw std::invalid_argument("evaluate: empty split");
    double total = 0;
    for (int id : ids) {
        const auto& tr = ds.trajectories.at(static_cast<size_t>(id));
        Tape<Real> t;
        auto bound = model.bind(t, false);
        auto gc = model.make_graph_consts(t, ds.graph);
        Matrix<Real> attrs(tr.n_nodes, ds.manifest.static_dim);
        for (size_t i = 0; i < tr.node_static.size(); ++i)
            attrs.v[i] = static_cast<Real>(tr.node_static[i]);
        auto rr = model.rollout(t, bound, ds.graph, gc, tr.state_frame(0), tr.velocity_frame(0),
                                attrs, 0, ds.manifest.horizon, warmup_override);
        std::vector<Matrix<Real>> q_targets, p_targets;
        for (int tau = 1; tau <= ds.manifest.horizon; ++tau) q_targets.push_back(tr.state_frame(tau));
        p_targets = detail::window_momenta(tr, 1, ds.manifest.horizon, cfg.momenta, ds.manifest.dt);
        VarId loss = multi_step_loss(t, rr.frames, q_targets, p_targets, cfg.p_weight);
        total += static_cast<double>(t.val(loss)(0, 0)) / ds.manifest.horizon;
    }
    return total / static_cast<double>(ids.size());
}

template <typename Real>
TrainResult train(const Dataset<Real>& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::filesystem::path& out_dir) {
    tcfg.validate();
    if (ds.manifest.train_ids.empty()) throw std::invalid_argument("train: empty training split");
    if (ds.manifest.val_ids.empty()) throw std::invalid_argument("train: empty validation split");
    std::filesystem::create_directories(out_dir);

    Model<Real> model(mcfg, ChannelSpec::from_manifest(ds.manifest));
    model.init_params(tcfg.seed);
    auto adam = AdamState<Real>::shaped_like(model.params());

    const int K = std::min(tcfg.window, ds.manifest.horizon);
    WindowSampler sampler(ds.manifest.train_ids, ds.manifest.horizon, K, tcfg.seed);
    Rng noise_rng(tcfg.seed ^ 0x5eedull);

    TrainResult result;
    result.parameter_count = model.n_scalars();
    result.checkpoint = out_dir / "best.ckpt";
    result.metrics = out_dir / "metrics.jsonl";
    std::ofstream metrics(result.metrics);
    if (!metrics) throw std::runtime_error("cannot write metrics log");

    double best_val = std::numeric_limits<double>::infinity();
    int tail_count = 0;
    const auto t_begin = std::chrono::steady_clock::now();
    const int n = ds.manifest.n_nodes;
    const int dyn_ch = ds.manifest.state_dim + ds.manifest.velocity_dim;

    for (int iter = 1; iter <= tcfg.iterations; ++iter) {
        std::vector<Matrix<Real>> grads;
        double batch_loss = 0;
        for (int b = 0; b < tcfg.batch_size; ++b) {
            auto [traj_id, start] = sampler.next();
            const auto& tr = ds.trajectories.at(static_cast<size_t>(traj_id));

            Matrix<Real> noise;
            const Matrix<Real>* noise_ptr = nullptr;
            if (tcfg.noise_std > 0) {
                noise = Matrix<Real>(n, dyn_ch);
                for (auto& x : noise.v) x = static_cast<Real>(tcfg.noise_std * noise_rng.normal());
                noise_ptr = &noise;
            }

            Tape<Real> t;
            auto bound = model.bind(t, true);
            auto gc = model.make_graph_consts(t, ds.graph);
            Matrix<Real> attrs(tr.n_nodes, ds.manifest.static_dim);
            for (size_t i = 0; i < tr.node_static.size(); ++i)
                attrs.v[i] = static_cast<Real>(tr.node_static[i]);
            auto rr = model.rollout(t, bound, ds.graph, gc, tr.state_frame(start),
                                    tr.velocity_frame(start), attrs, start, K, -1, noise_ptr);
            std::vector<Matrix<Real>> q_targets;
            for (int tau = 1; tau <= K; ++tau) q_targets.push_back(tr.state_frame(start + tau));
            auto p_targets =
                detail::window_momenta(tr, start + 1, K, tcfg.momenta, ds.manifest.dt);
            VarId loss = multi_step_loss(t, rr.frames, q_targets, p_targets, tcfg.p_weight);
            const double lv = static_cast<double>(t.val(loss)(0, 0));
            if (!std::isfinite(lv))
                throw std::runtime_error("training diverged at iteration " + std::to_string(iter));
            batch_loss += lv;

            t.backward(loss);
            auto g = t.param_grads(model.n_params());
            if (grads.empty()) {
                grads = std::move(g);
            } else {
                for (size_t i = 0; i < grads.size(); ++i)
                    for (size_t j = 0; j < grads[i].v.size(); ++j) grads[i].v[j] += g[i].v[j];
            }
        }
        const Real inv_b = static_cast<Real>(1.0 / tcfg.batch_size);
        for (auto& g : grads)
            for (auto& x : g.v) x *= inv_b;
        batch_loss /= tcfg.batch_size;
        if (iter == 1) result.first_train_loss = batch_loss;
        result.final_train_loss = batch_loss;
        if (iter > tcfg.iterations - std::max(1, tcfg.iterations / 10)) {
            result.tail_train_loss += batch_loss;
            ++tail_count;
        }

        clip_gradients(grads, tcfg.clip_norm);
        adam_step(model.params(), grads, adam, tcfg);

        if (iter % tcfg.eval_interval == 0 || iter == tcfg.iterations) {
            const double val = evaluate_split_loss(model, ds, ds.manifest.val_ids, tcfg);
            if (!std::isfinite(val))
                throw std::runtime_error("validation diverged at iteration " + std::to_string(iter));
            const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - t_begin)
                                  .count();
            metrics << json{{"iter", iter},
                            {"train_loss", batch_loss},
                            {"val_loss", val},
                            {"wall_ms", wall}}
                           .dump()
                    << "\n";
            metrics.flush();
            if (val < best_val) {
                best_val = val;
                model.save_checkpoint(result.checkpoint, iter, val);
            }
        }
    }
    result.best_val_loss = best_val;
    result.iterations = tcfg.iterations;
    if (tail_count > 0) result.tail_train_loss /= tail_count;
    if (!std::filesystem::exists(result.checkpoint))
        model.save_checkpoint(result.checkpoint, tcfg.iterations, best_val);
    return result;
}

}  // namespace igns
