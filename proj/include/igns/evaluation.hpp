#pragma once

// Rollout evaluation: test MSE in physical units, the cumulative early-horizon
// metric (MSE over the first 10 frames), per-step error curves, latent energy
// traces, and rollout dumps in the dataset binary format.

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "igns/dataset.hpp"
#include "igns/models.hpp"

namespace igns {

struct EvalMetrics {
    double mse = 0;        // mean over trajectories, frames, nodes, output channels
    double mse10 = 0;      // same mean restricted to the first min(10, T) frames
    double state_mse = 0;
    double velocity_mse = 0;
    std::vector<double> per_step_mse;  // length horizon
    std::vector<double> energy_trace;  // mean latent H per step (igns cores)
    int n_trajectories = 0;
};

inline json to_json(const EvalMetrics& m) {
    return json{{"mse", m.mse},
                {"mse10", m.mse10},
                {"state_mse", m.state_mse},
                {"velocity_mse", m.velocity_mse},
                {"per_step_mse", m.per_step_mse},
                {"energy_trace", m.energy_trace},
                {"n_trajectories", m.n_trajectories}};
}

namespace detail {

template <typename Real>
Matrix<Real> attrs_matrix(const Trajectory<Real>& tr, int static_dim) {
    Matrix<Real> attrs(tr.n_nodes, static_dim);
    for (size_t i = 0; i < tr.node_static.size(); ++i)
        attrs.v[i] = static_cast<Real>(tr.node_static[i]);
    return attrs;
}

}  // namespace detail

// Evaluates full-horizon rollouts over the given split. oracle = true swaps
// predictions for the ground truth itself (a plumbing check: MSE must be 0).
template <typename Real>
EvalMetrics evaluate_rollouts(const Model<Real>& model, const Dataset<Real>& ds,
                              const std::vector<int>& ids, int warmup_override = -1,
                              bool oracle = false, bool record_energy = true) {
    if (ids.empty()) throw std::invalid_argument("evaluate: empty split");
    const auto& m = ds.manifest;
    const int T = m.horizon;
    EvalMetrics out;
    out.n_trajectories = static_cast<int>(ids.size());
    out.per_step_mse.assign(static_cast<size_t>(T), 0.0);
    if (record_energy) out.energy_trace.assign(static_cast<size_t>(T) + 1, 0.0);

    double total_sq = 0, state_sq = 0, vel_sq = 0, early_sq = 0;
    const double denom_per_frame =
        static_cast<double>(m.n_nodes) * (m.state_dim + m.velocity_dim);
    const int early = std::min(10, T);

    for (int id : ids) {
        const auto& tr = ds.trajectories.at(static_cast<size_t>(id));
        Tape<Real> t;
        auto bound = model.bind(t, false);
        auto gc = model.make_graph_consts(t, ds.graph);
        auto rr = model.rollout(t, bound, ds.graph, gc, tr.state_frame(0), tr.velocity_frame(0),
                                detail::attrs_matrix(tr, m.static_dim), 0, T, warmup_override,
                                nullptr, record_energy);
        for (int tau = 1; tau <= T; ++tau) {
            const auto target_q = tr.state_frame(tau);
            const auto target_p = tr.velocity_frame(tau);
            Matrix<Real> pred_q = oracle ? target_q : t.val(rr.frames[static_cast<size_t>(tau - 1)].state);
            double frame_sq = 0;
            for (size_t i = 0; i < target_q.v.size(); ++i) {
                const double d = static_cast<double>(pred_q.v[i]) - static_cast<double>(target_q.v[i]);
                frame_sq += d * d;
                state_sq += d * d;
            }
            if (m.velocity_dim > 0) {
                Matrix<Real> pred_p =
                    oracle ? target_p : t.val(rr.frames[static_cast<size_t>(tau - 1)].velocity);
                for (size_t i = 0; i < target_p.v.size(); ++i) {
                    const double d =
                        static_cast<double>(pred_p.v[i]) - static_cast<double>(target_p.v[i]);
                    frame_sq += d * d;
                    vel_sq += d * d;
                }
            }
            total_sq += frame_sq;
            if (tau <= early) early_sq += frame_sq;
            out.per_step_mse[static_cast<size_t>(tau - 1)] += frame_sq / denom_per_frame;
        }
        if (record_energy)
            for (size_t s = 0; s < rr.latent_energy.size(); ++s)
                out.energy_trace[s] += static_cast<double>(rr.latent_energy[s]);
    }

    const double n_traj = static_cast<double>(ids.size());
    for (auto& x : out.per_step_mse) x /= n_traj;
    if (record_energy)
        for (auto& x : out.energy_trace) x /= n_traj;
    out.mse = total_sq / (n_traj * T * denom_per_frame);
    out.mse10 = early_sq / (n_traj * early * denom_per_frame);
    const double state_denom = n_traj * T * m.n_nodes * m.state_dim;
    out.state_mse = state_sq / state_denom;
    out.velocity_mse = m.velocity_dim > 0 ? vel_sq / (n_traj * T * m.n_nodes * m.velocity_dim) : 0.0;
    return out;
}

// Writes predicted rollouts for the given split as a dataset-format directory
// so external tools can decode them with the ordinary reader.
template <typename Real>
void dump_rollouts(const Model<Real>& model, const Dataset<Real>& ds, const std::vector<int>& ids,
                   const std::filesystem::path& out_dir, int warmup_override = -1) {
    Dataset<Real> dump;
    dump.graph = ds.graph;
    dump.manifest = ds.manifest;
    dump.manifest.name = ds.manifest.name + "_rollout";
    dump.manifest.dtype = sizeof(Real) == 4 ? "float32" : "float64";  // lossless dump
    dump.manifest.n_trajectories = static_cast<int>(ids.size());
    dump.manifest.train_ids.clear();
    dump.manifest.val_ids.clear();
    dump.manifest.test_ids.clear();
    dump.manifest.generator =
        json{{"kind", "rollout_dump"}, {"source", ds.manifest.name}, {"split_size", ids.size()}};
    const int T = ds.manifest.horizon;

    for (size_t k = 0; k < ids.size(); ++k) {
        const auto& tr = ds.trajectories.at(static_cast<size_t>(ids[k]));
        Tape<Real> t;
        auto bound = model.bind(t, false);
        auto gc = model.make_graph_consts(t, ds.graph);
        auto rr = model.rollout(t, bound, ds.graph, gc, tr.state_frame(0), tr.velocity_frame(0),
                                detail::attrs_matrix(tr, ds.manifest.static_dim), 0, T,
                                warmup_override);
        Trajectory<Real> pred;
        pred.frames = T + 1;
        pred.n_nodes = tr.n_nodes;
        pred.state_dim = tr.state_dim;
        pred.velocity_dim = tr.velocity_dim;
        pred.dt = tr.dt;
        pred.node_static = tr.node_static;
        pred.states.resize(tr.states.size());
        pred.velocities.resize(tr.velocities.size());
        for (int i = 0; i < tr.n_nodes; ++i) {
            for (int c = 0; c < tr.state_dim; ++c) pred.state(0, i, c) = tr.state(0, i, c);
            for (int c = 0; c < tr.velocity_dim; ++c) pred.velocity(0, i, c) = tr.velocity(0, i, c);
        }
        for (int tau = 1; tau <= T; ++tau) {
            const auto& f = rr.frames[static_cast<size_t>(tau - 1)];
            const auto& qs = t.val(f.state);
            for (int i = 0; i < tr.n_nodes; ++i)
                for (int c = 0; c < tr.state_dim; ++c) pred.state(tau, i, c) = qs(i, c);
            if (tr.velocity_dim > 0) {
                const auto& ps = t.val(f.velocity);
                for (int i = 0; i < tr.n_nodes; ++i)
                    for (int c = 0; c < tr.velocity_dim; ++c) pred.velocity(tau, i, c) = ps(i, c);
            }
        }
        dump.manifest.test_ids.push_back(static_cast<int>(k));
        dump.trajectories.push_back(std::move(pred));
    }
    write_dataset(out_dir, dump);
}

}  // namespace igns
