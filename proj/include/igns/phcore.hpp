#pragma once

// Port-Hamiltonian latent dynamics.
//
// Latent state is split per node into coordinates q and momenta p, each
// [n_nodes x k] with k = d/2. The Hamiltonian
//     H(X) = sum_i 1' lncosh(z_i),   z_i = W x_i + sum_{j in N_i} V x_j + b
// uses block-diagonal W = diag(W_q, W_p), V = diag(V_q, V_p), so H separates
// into a q part and a p part. Its state gradient has the closed form
//     grad_{x_k} H = W' s(z_k) + sum_{i: k in N_i} V' s(z_i),   s = tanh,
// which is itself built from taped ops so training differentiates through it.
//
// The symplectic Euler step updates momenta first, then coordinates using the
// gradient at the *updated* momenta:
//     p+ = p + dt (-grad_q H(q, p) - D grad_p H(q, p) + r)
//     q+ = q + dt grad_p H(q, p+)
// Damping enters as a positive diagonal (softplus-realized), forcing only in
// the momentum update.

#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "igns/autodiff.hpp"
#include "igns/graph.hpp"
#include "igns/matrix.hpp"

namespace igns::ph {

using ad::Tape;
using ad::VarId;

// One side (q or p) of the block-diagonal Hamiltonian weights, as tape ids.
struct BlockWeights {
    VarId w = -1;  // [k x k]
    VarId v = -1;  // [k x k]
    VarId b = -1;  // [1 x k]
};

// z = X W' + A (X V') + b over the graph's in-direction.
template <typename Real>
VarId hamiltonian_preactivation(Tape<Real>& t, VarId x, const Graph& g, const BlockWeights& wb) {
    VarId z = t.matmul(x, t.transpose(wb.w));
    VarId msgs = t.gather_rows(t.matmul(x, t.transpose(wb.v)), g.in_dir.gather);
    z = t.add(z, t.scatter_sum(msgs, g.in_dir.plan));
    return t.add(z, wb.b);
}

template <typename Real>
VarId hamiltonian_from_preactivations(Tape<Real>& t, VarId zq, VarId zp) {
    return t.add(t.sum(t.ln_cosh_fn(zq)), t.sum(t.ln_cosh_fn(zp)));
}

// Scalar H for a given state.
template <typename Real>
VarId hamiltonian(Tape<Real>& t, VarId q, VarId p, const Graph& g, const BlockWeights& qw,
                  const BlockWeights& pw) {
    return hamiltonian_from_preactivations(t, hamiltonian_preactivation(t, q, g, qw),
                                           hamiltonian_preactivation(t, p, g, pw));
}

// Closed-form gradient of one separable block:
//   row_k = s(z_k)' W + sum over out-edges (k -> i) of s(z_i)' V.
template <typename Real>
VarId hamiltonian_gradient_block(Tape<Real>& t, VarId z, const Graph& g, const BlockWeights& wb) {
    VarId s = t.tanh_fn(z);
    VarId own = t.matmul(s, wb.w);
    VarId sv = t.matmul(s, wb.v);
    VarId pulled = t.gather_rows(sv, g.out_dir.gather);
    return t.add(own, t.scatter_sum(pulled, g.out_dir.plan));
}

// Supplies (grad_q H, grad_p H); the momentum_only path exists because the
// coordinate update needs just grad_p at the refreshed momenta.
template <typename Real>
struct GradProvider {
    std::function<std::pair<VarId, VarId>(Tape<Real>&, VarId q, VarId p)> both;
    std::function<VarId(Tape<Real>&, VarId q, VarId p)> momentum_only;
};

template <typename Real>
GradProvider<Real> make_hamiltonian_grad(const Graph& g, BlockWeights qw, BlockWeights pw) {
    GradProvider<Real> gp;
    gp.both = [&g, qw, pw](Tape<Real>& t, VarId q, VarId p) {
        VarId zq = hamiltonian_preactivation(t, q, g, qw);
        VarId zp = hamiltonian_preactivation(t, p, g, pw);
        return std::make_pair(hamiltonian_gradient_block(t, zq, g, qw),
                              hamiltonian_gradient_block(t, zp, g, pw));
    };
    gp.momentum_only = [&g, pw](Tape<Real>& t, VarId q, VarId p) {
        (void)q;  // separable H: the p-block never reads q
        VarId zp = hamiltonian_preactivation(t, p, g, pw);
        return hamiltonian_gradient_block(t, zp, g, pw);
    };
    return gp;
}

// ---------------------------------------------------------------------------
// geometric forcing (edge-level message passing on static edge features)

struct ForcingLayer {
    VarId w_node = -1;  // [k x k]
    VarId w_diff = -1;  // [k x k], applied to latent differences q_j - q_i
    VarId w_edge = -1;  // [k x edge_dim], projects static edge features
};

template <typename Real>
VarId forcing(Tape<Real>& t, VarId q, const Graph& g, VarId edge_feats,
              const std::vector<ForcingLayer>& layers) {
    if (!layers.empty() && edge_feats < 0)
        throw std::invalid_argument("forcing: layers configured but edge features missing");
    VarId h = q;
    for (const auto& layer : layers) {
        VarId hs = t.gather_rows(h, g.in_dir.gather);           // q_j per slot
        VarId hd = t.gather_rows(h, g.in_dir.plan.row_of_slot); // q_i per slot
        VarId e = t.matmul(t.sub(hs, hd), t.transpose(layer.w_diff));
        e = t.add(e, t.matmul(edge_feats, t.transpose(layer.w_edge)));
        VarId agg = t.scatter_sum(e, g.in_dir.plan);
        h = t.tanh_fn(t.add(t.matmul(h, t.transpose(layer.w_node)), agg));
    }
    return h;
}

// ---------------------------------------------------------------------------
// integrators

// Symplectic Euler per the update rule above. damping_row, if present, is the
// realized positive diagonal as a [1 x k] row; forcing_value is pre-computed.
template <typename Real>
std::pair<VarId, VarId> symplectic_step(Tape<Real>& t, const GradProvider<Real>& grad,
                                        std::optional<VarId> damping_row,
                                        std::optional<VarId> forcing_value, VarId q, VarId p,
                                        Real dt) {
    if (dt < Real(0)) throw std::invalid_argument("symplectic_step: negative dt");
    auto [gq, gp] = grad.both(t, q, p);
    VarId acc = t.scale(gq, Real(-1));
    if (damping_row) acc = t.sub(acc, t.mul(gp, *damping_row));
    if (forcing_value) acc = t.add(acc, *forcing_value);
    VarId p_next = t.add(p, t.scale(acc, dt));
    VarId gp_next = grad.momentum_only(t, q, p_next);
    VarId q_next = t.add(q, t.scale(gp_next, dt));
    return {q_next, p_next};
}

// Explicit Euler control: both updates read the old state. Not symplectic;
// used to contrast energy behavior.
template <typename Real>
std::pair<VarId, VarId> explicit_euler_step(Tape<Real>& t, const GradProvider<Real>& grad,
                                            std::optional<VarId> damping_row,
                                            std::optional<VarId> forcing_value, VarId q, VarId p,
                                            Real dt) {
    auto [gq, gp] = grad.both(t, q, p);
    VarId acc = t.scale(gq, Real(-1));
    if (damping_row) acc = t.sub(acc, t.mul(gp, *damping_row));
    if (forcing_value) acc = t.add(acc, *forcing_value);
    VarId p_next = t.add(p, t.scale(acc, dt));
    VarId q_next = t.add(q, t.scale(gp, dt));
    return {q_next, p_next};
}

// l applications of a step closure with time held fixed; the caller freezes
// its time embedding and must not advance the step counter.
template <typename StepFn>
std::pair<VarId, VarId> warmup(int l, StepFn&& step, VarId q, VarId p) {
    if (l < 0) throw std::invalid_argument("warmup: negative length");
    for (int i = 0; i < l; ++i) {
        auto next = step(q, p);
        q = next.first;
        p = next.second;
    }
    return {q, p};
}

// Receptive radius of one latent update, in graph hops: the coordinate update
// reads refreshed momenta two hops out (closed-form grad spans two hops), on
// top of the momentum update whose own radius is max(grad span, forcing depth).
inline int step_receptive_radius(int forcing_layers) {
    return 2 + std::max(2, forcing_layers);
}

// ---------------------------------------------------------------------------
// time-varying weights W(t) = S(t) + A(t) assembled from learned bases and
// time-coefficient networks:
//   S(t) = U_s diag(g(t)) U_s',  A(t) = U_a diag(tau(t)) P_a' - P_a diag(tau(t)) U_a'

struct CoeffMlp {
    VarId w1 = -1;  // [h x d_t]
    VarId b1 = -1;  // [1 x h]
    VarId w2 = -1;  // [k x h]
    VarId b2 = -1;  // [1 x k]
};

struct TimeVaryingBlock {
    VarId u_sym = -1;   // [k x k]
    VarId u_skew = -1;  // [k x k]
    VarId p_skew = -1;  // [k x k]
    CoeffMlp gamma;     // symmetric-part coefficients
    CoeffMlp tau;       // skew-part coefficients
};

template <typename Real>
VarId coeff_mlp(Tape<Real>& t, const CoeffMlp& net, VarId time_embed) {
    VarId h = t.tanh_fn(t.add(t.matmul(time_embed, t.transpose(net.w1)), net.b1));
    return t.add(t.matmul(h, t.transpose(net.w2)), net.b2);
}

template <typename Real>
VarId assemble_time_varying(Tape<Real>& t, const TimeVaryingBlock& blk, VarId time_embed) {
    VarId gamma = coeff_mlp(t, blk.gamma, time_embed);  // [1 x k]
    VarId tau = coeff_mlp(t, blk.tau, time_embed);
    VarId sym = t.matmul(t.mul(blk.u_sym, gamma), t.transpose(blk.u_sym));
    VarId skew = t.sub(t.matmul(t.mul(blk.u_skew, tau), t.transpose(blk.p_skew)),
                       t.matmul(t.mul(blk.p_skew, tau), t.transpose(blk.u_skew)));
    return t.add(sym, skew);
}

// Sinusoidal features of normalized time, d_t values (d_t/2 geometric
// frequencies, sin and cos each).
template <typename Real>
Matrix<Real> time_embedding(int t_index, int horizon, int d_t) {
    if (d_t % 2 != 0) throw std::invalid_argument("time embedding dim must be even");
    const double s = static_cast<double>(t_index) / static_cast<double>(std::max(1, horizon));
    Matrix<Real> e(1, d_t);
    constexpr double pi = 3.14159265358979323846;
    for (int k = 0; k < d_t / 2; ++k) {
        const double freq = pi * static_cast<double>(1 << k);
        e(0, 2 * k) = static_cast<Real>(std::sin(freq * s));
        e(0, 2 * k + 1) = static_cast<Real>(std::cos(freq * s));
    }
    return e;
}

}  // namespace igns::ph
