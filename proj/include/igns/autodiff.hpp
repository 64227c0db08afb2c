#pragma once

// Reverse-mode differentiation over dense matrices and graph scatter/gather.
// The op set is fixed and every backward rule is hand-written; there is no
// general closure mechanism because the simulator architecture is fixed.
//
// Conventions:
//   - Values are row-major matrices; per-node features use rows = n_nodes.
//   - add/sub/mul accept a [1 x c] right operand broadcast across rows.
//   - scatter_sum accumulates each destination run in ascending numeric order
//     per channel, so node relabeling cannot change results through float
//     reassociation (message-passing stays exactly permutation-equivariant).
//   - Strict mode (default) checks every op output for NaN/Inf and throws.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "igns/matrix.hpp"

namespace igns::ad {

using VarId = int;

enum class Op {
    leaf,
    matmul,
    add,
    sub,
    mul,
    scale,
    tanh_fn,
    ln_cosh,
    softplus,
    relu,
    square,
    rsqrt,
    sum,
    concat_cols,
    slice_cols,
    transpose,
    scatter_sum,
    gather_rows,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "elementwise-mul";
        case Op::scale: return "scalar-scale";
        case Op::tanh_fn: return "tanh";
        case Op::ln_cosh: return "ln-cosh";
        case Op::softplus: return "softplus";
        case Op::relu: return "relu";
        case Op::square: return "square";
        case Op::rsqrt: return "rsqrt";
        case Op::sum: return "sum";
        case Op::concat_cols: return "concat";
        case Op::slice_cols: return "slice";
        case Op::transpose: return "transpose";
        case Op::scatter_sum: return "scatter-sum-over-edges";
        case Op::gather_rows: return "gather-by-index";
    }
    return "?";
}

// Slot layout for scatter-sum: slots are grouped into contiguous runs, one run
// per output row. row_of_slot is the inverse map used by the backward rule.
struct ScatterPlan {
    std::vector<int> offsets;      // size out_rows + 1
    std::vector<int> row_of_slot;  // size n_slots
    int out_rows() const { return static_cast<int>(offsets.size()) - 1; }
    int n_slots() const { return static_cast<int>(row_of_slot.size()); }
};

// Overflow-safe ln cosh(x) = |x| + log1p(exp(-2|x|)) - log 2.
template <typename Real>
Real ln_cosh(Real x) {
    const Real ax = std::abs(x);
    return ax + std::log1p(std::exp(Real(-2) * ax)) - Real(0.6931471805599453094172321214581766);
}

template <typename Real>
Real softplus(Real x) {
    return std::max(x, Real(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Real>
Real sigmoid(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

template <typename Real>
class Tape {
public:
    explicit Tape(bool strict_nonfinite = true) : strict_(strict_nonfinite) {}

    // ---- leaves -----------------------------------------------------------

    VarId constant(Matrix<Real> m) { return push_leaf(std::move(m), false, -1); }

    VarId param(Matrix<Real> m, int param_id = -1) { return push_leaf(std::move(m), true, param_id); }

    // ---- recorded ops -----------------------------------------------------

    VarId matmul(VarId a, VarId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.cols != B.rows) fail_shape(Op::matmul, A, B);
        return push(Op::matmul, a, b, igns::matmul(A, B));
    }

    VarId add(VarId a, VarId b) { return add_sub(a, b, /*subtract=*/false); }
    VarId sub(VarId a, VarId b) { return add_sub(a, b, /*subtract=*/true); }

    VarId mul(VarId a, VarId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        const bool bcast = B.rows == 1 && A.rows != 1;
        if (!bcast && !A.same_shape(B)) fail_shape(Op::mul, A, B);
        if (bcast && B.cols != A.cols) fail_shape(Op::mul, A, B);
        Matrix<Real> out(A.rows, A.cols);
        for (int r = 0; r < A.rows; ++r)
            for (int c = 0; c < A.cols; ++c) out(r, c) = A(r, c) * B(bcast ? 0 : r, c);
        return push(Op::mul, a, b, std::move(out));
    }

    VarId scale(VarId a, Real s) {
        const auto& A = val(a);
        Matrix<Real> out(A.rows, A.cols);
        for (size_t i = 0; i < A.v.size(); ++i) out.v[i] = s * A.v[i];
        VarId id = push(Op::scale, a, -1, std::move(out));
        nodes_[id].scalar = s;
        return id;
    }

    VarId tanh_fn(VarId a) {
        return unary(Op::tanh_fn, a, [](Real x) { return std::tanh(x); });
    }
    VarId ln_cosh_fn(VarId a) {
        return unary(Op::ln_cosh, a, [](Real x) { return ln_cosh(x); });
    }
    VarId softplus_fn(VarId a) {
        return unary(Op::softplus, a, [](Real x) { return softplus(x); });
    }
    VarId relu(VarId a) {
        return unary(Op::relu, a, [](Real x) { return x > Real(0) ? x : Real(0); });
    }
    VarId square(VarId a) {
        return unary(Op::square, a, [](Real x) { return x * x; });
    }
    VarId rsqrt(VarId a) {
        return unary(Op::rsqrt, a, [](Real x) { return Real(1) / std::sqrt(x); });
    }

    VarId sum(VarId a) {
        const auto& A = val(a);
        Real s = 0;
        for (Real x : A.v) s += x;
        Matrix<Real> out(1, 1);
        out(0, 0) = s;
        return push(Op::sum, a, -1, std::move(out));
    }

    VarId concat_cols(VarId a, VarId b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.rows != B.rows) fail_shape(Op::concat_cols, A, B);
        Matrix<Real> out(A.rows, A.cols + B.cols);
        for (int r = 0; r < A.rows; ++r) {
            for (int c = 0; c < A.cols; ++c) out(r, c) = A(r, c);
            for (int c = 0; c < B.cols; ++c) out(r, A.cols + c) = B(r, c);
        }
        VarId id = push(Op::concat_cols, a, b, std::move(out));
        nodes_[id].col0 = A.cols;
        return id;
    }

    // Columns [c0, c1).
    VarId slice_cols(VarId a, int c0, int c1) {
        const auto& A = val(a);
        if (c0 < 0 || c1 > A.cols || c0 >= c1)
            throw std::invalid_argument("slice: bad column range [" + std::to_string(c0) + ", " +
                                        std::to_string(c1) + ") of " + std::to_string(A.cols));
        Matrix<Real> out(A.rows, c1 - c0);
        for (int r = 0; r < A.rows; ++r)
            for (int c = c0; c < c1; ++c) out(r, c - c0) = A(r, c);
        VarId id = push(Op::slice_cols, a, -1, std::move(out));
        nodes_[id].col0 = c0;
        nodes_[id].col1 = c1;
        return id;
    }

    VarId transpose(VarId a) { return push(Op::transpose, a, -1, val(a).transposed()); }

    VarId gather_rows(VarId a, std::vector<int> rows) {
        const auto& A = val(a);
        Matrix<Real> out(static_cast<int>(rows.size()), A.cols);
        for (size_t s = 0; s < rows.size(); ++s) {
            const int r = rows[s];
            if (r < 0 || r >= A.rows) throw std::invalid_argument("gather: row index out of range");
            for (int c = 0; c < A.cols; ++c) out(static_cast<int>(s), c) = A(r, c);
        }
        VarId id = push(Op::gather_rows, a, -1, std::move(out));
        nodes_[id].index = std::move(rows);
        return id;
    }

    VarId scatter_sum(VarId a, const ScatterPlan& plan) {
        const auto& A = val(a);
        if (A.rows != plan.n_slots())
            throw std::invalid_argument("scatter-sum: value rows != plan slots");
        Matrix<Real> out(plan.out_rows(), A.cols);
        Real buf[kMaxRun];
        for (int r = 0; r < plan.out_rows(); ++r) {
            const int s0 = plan.offsets[r], s1 = plan.offsets[r + 1];
            const int len = s1 - s0;
            if (len == 0) continue;
            if (len > kMaxRun) throw std::invalid_argument("scatter-sum: run too long");
            for (int c = 0; c < A.cols; ++c) {
                for (int s = 0; s < len; ++s) buf[s] = A(s0 + s, c);
                // ascending insertion sort; sums become label-independent
                for (int i = 1; i < len; ++i) {
                    Real x = buf[i];
                    int j = i - 1;
                    while (j >= 0 && buf[j] > x) {
                        buf[j + 1] = buf[j];
                        --j;
                    }
                    buf[j + 1] = x;
                }
                Real acc = buf[0];
                for (int s = 1; s < len; ++s) acc += buf[s];
                out(r, c) = acc;
            }
        }
        VarId id = push(Op::scatter_sum, a, -1, std::move(out));
        nodes_[id].index = plan.row_of_slot;
        return id;
    }

    // ---- access -----------------------------------------------------------

    // Stable across later recordings (nodes live in a deque).
    const Matrix<Real>& val(VarId id) const { return nodes_.at(static_cast<size_t>(id)).value; }

    bool requires_grad(VarId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    // Gradient accumulated by the last backward(); zeros if the value never
    // received one.
    Matrix<Real> grad(VarId id) const {
        const auto& n = nodes_.at(static_cast<size_t>(id));
        if (n.grad.rows == 0) return Matrix<Real>(n.value.rows, n.value.cols);
        return n.grad;
    }

    // Gradients keyed by the param_id passed to param(); missing entries are
    // zero matrices shaped like the parameter.
    std::vector<Matrix<Real>> param_grads(int n_params) const {
        std::vector<Matrix<Real>> out(static_cast<size_t>(n_params));
        for (const auto& n : nodes_) {
            if (n.op != Op::leaf || n.param_id < 0) continue;
            if (n.param_id >= n_params) throw std::invalid_argument("param_grads: id out of range");
            out[static_cast<size_t>(n.param_id)] =
                n.grad.rows ? n.grad : Matrix<Real>(n.value.rows, n.value.cols);
        }
        return out;
    }

    size_t n_nodes() const { return nodes_.size(); }
    void set_strict(bool s) { strict_ = s; }

    // ---- backward ---------------------------------------------------------

    void backward(VarId loss) {
        auto& ln = nodes_.at(static_cast<size_t>(loss));
        if (ln.value.rows != 1 || ln.value.cols != 1)
            throw std::invalid_argument("backward: loss must be 1x1");
        if (nodes_.empty()) throw std::invalid_argument("backward: empty tape");
        for (auto& n : nodes_) n.grad = Matrix<Real>();
        ln.grad = Matrix<Real>(1, 1);
        ln.grad(0, 0) = Real(1);

        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.op == Op::leaf || !n.requires_grad || n.grad.rows == 0) continue;
            step_backward(n);
        }
    }

private:
    static constexpr int kMaxRun = 128;

    struct Node {
        Op op = Op::leaf;
        VarId a = -1, b = -1;
        Matrix<Real> value;
        Matrix<Real> grad;
        bool requires_grad = false;
        Real scalar = 0;
        int col0 = 0, col1 = 0;
        std::vector<int> index;
        int param_id = -1;
    };

    std::deque<Node> nodes_;
    bool strict_;

    VarId push_leaf(Matrix<Real> m, bool req, int param_id) {
        check_finite(m, Op::leaf);
        Node n;
        n.op = Op::leaf;
        n.value = std::move(m);
        n.requires_grad = req;
        n.param_id = param_id;
        nodes_.push_back(std::move(n));
        return static_cast<VarId>(nodes_.size() - 1);
    }

    VarId push(Op op, VarId a, VarId b, Matrix<Real> value) {
        check_finite(value, op);
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(value);
        n.requires_grad = (a >= 0 && nodes_[static_cast<size_t>(a)].requires_grad) ||
                          (b >= 0 && nodes_[static_cast<size_t>(b)].requires_grad);
        nodes_.push_back(std::move(n));
        return static_cast<VarId>(nodes_.size() - 1);
    }

    template <typename F>
    VarId unary(Op op, VarId a, F&& f) {
        const auto& A = val(a);
        Matrix<Real> out(A.rows, A.cols);
        for (size_t i = 0; i < A.v.size(); ++i) out.v[i] = f(A.v[i]);
        return push(op, a, -1, std::move(out));
    }

    VarId add_sub(VarId a, VarId b, bool subtract) {
        const auto& A = val(a);
        const auto& B = val(b);
        const bool bcast = B.rows == 1 && A.rows != 1;
        if (!bcast && !A.same_shape(B)) fail_shape(subtract ? Op::sub : Op::add, A, B);
        if (bcast && B.cols != A.cols) fail_shape(subtract ? Op::sub : Op::add, A, B);
        Matrix<Real> out(A.rows, A.cols);
        const Real sgn = subtract ? Real(-1) : Real(1);
        for (int r = 0; r < A.rows; ++r)
            for (int c = 0; c < A.cols; ++c) out(r, c) = A(r, c) + sgn * B(bcast ? 0 : r, c);
        return push(subtract ? Op::sub : Op::add, a, b, std::move(out));
    }

    void check_finite(const Matrix<Real>& m, Op op) const {
        if (strict_ && !m.all_finite())
            throw std::runtime_error(std::string("non-finite value out of op ") + op_name(op));
    }

    [[noreturn]] void fail_shape(Op op, const Matrix<Real>& a, const Matrix<Real>& b) const {
        throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch (" +
                                    std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                    std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
    }

    Matrix<Real>& grad_buf(VarId id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.rows == 0) n.grad = Matrix<Real>(n.value.rows, n.value.cols);
        return n.grad;
    }

    bool wants(VarId id) const { return id >= 0 && nodes_[static_cast<size_t>(id)].requires_grad; }

    void step_backward(Node& n) {
        const Matrix<Real>& g = n.grad;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::matmul: {
                // dA += g * B^T ; dB += A^T * g
                if (wants(n.a)) {
                    const auto& B = val(n.b);
                    auto& da = grad_buf(n.a);
                    for (int i = 0; i < g.rows; ++i)
                        for (int k = 0; k < B.rows; ++k) {
                            Real acc = 0;
                            for (int j = 0; j < g.cols; ++j) acc += g(i, j) * B(k, j);
                            da(i, k) += acc;
                        }
                }
                if (wants(n.b)) {
                    const auto& A = val(n.a);
                    auto& db = grad_buf(n.b);
                    for (int i = 0; i < A.rows; ++i)
                        for (int k = 0; k < A.cols; ++k) {
                            const Real aik = A(i, k);
                            if (aik == Real(0)) continue;
                            for (int j = 0; j < g.cols; ++j) db(k, j) += aik * g(i, j);
                        }
                }
                break;
            }
            case Op::add:
            case Op::sub: {
                const Real sgn = n.op == Op::sub ? Real(-1) : Real(1);
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) da.v[i] += g.v[i];
                }
                if (wants(n.b)) {
                    auto& db = grad_buf(n.b);
                    if (db.rows == 1 && g.rows != 1) {
                        for (int r = 0; r < g.rows; ++r)
                            for (int c = 0; c < g.cols; ++c) db(0, c) += sgn * g(r, c);
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i) db.v[i] += sgn * g.v[i];
                    }
                }
                break;
            }
            case Op::mul: {
                const auto& A = val(n.a);
                const auto& B = val(n.b);
                const bool bcast = B.rows == 1 && A.rows != 1;
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) da(r, c) += g(r, c) * B(bcast ? 0 : r, c);
                }
                if (wants(n.b)) {
                    auto& db = grad_buf(n.b);
                    if (bcast) {
                        for (int r = 0; r < g.rows; ++r)
                            for (int c = 0; c < g.cols; ++c) db(0, c) += g(r, c) * A(r, c);
                    } else {
                        for (size_t i = 0; i < g.v.size(); ++i) db.v[i] += g.v[i] * A.v[i];
                    }
                }
                break;
            }
            case Op::scale: {
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) da.v[i] += n.scalar * g.v[i];
                }
                break;
            }
            case Op::tanh_fn: {
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) {
                        const Real y = n.value.v[i];
                        da.v[i] += g.v[i] * (Real(1) - y * y);
                    }
                }
                break;
            }
            case Op::ln_cosh: {
                if (wants(n.a)) {
                    const auto& A = val(n.a);
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) da.v[i] += g.v[i] * std::tanh(A.v[i]);
                }
                break;
            }
            case Op::softplus: {
                if (wants(n.a)) {
                    const auto& A = val(n.a);
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) da.v[i] += g.v[i] * sigmoid(A.v[i]);
                }
                break;
            }
            case Op::relu: {
                if (wants(n.a)) {
                    const auto& A = val(n.a);
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i)
                        if (A.v[i] > Real(0)) da.v[i] += g.v[i];
                }
                break;
            }
            case Op::square: {
                if (wants(n.a)) {
                    const auto& A = val(n.a);
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) da.v[i] += Real(2) * g.v[i] * A.v[i];
                }
                break;
            }
            case Op::rsqrt: {
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (size_t i = 0; i < g.v.size(); ++i) {
                        const Real y = n.value.v[i];
                        da.v[i] += g.v[i] * Real(-0.5) * y * y * y;
                    }
                }
                break;
            }
            case Op::sum: {
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    const Real gs = g(0, 0);
                    for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += gs;
                }
                break;
            }
            case Op::concat_cols: {
                const int split = n.col0;
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < split; ++c) da(r, c) += g(r, c);
                }
                if (wants(n.b)) {
                    auto& db = grad_buf(n.b);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = split; c < g.cols; ++c) db(r, c - split) += g(r, c);
                }
                break;
            }
            case Op::slice_cols: {
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) da(r, n.col0 + c) += g(r, c);
                }
                break;
            }
            case Op::transpose: {
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) da(c, r) += g(r, c);
                }
                break;
            }
            case Op::scatter_sum: {
                // adjoint of scatter is gather by row_of_slot
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (size_t s = 0; s < n.index.size(); ++s) {
                        const int r = n.index[s];
                        for (int c = 0; c < g.cols; ++c) da(static_cast<int>(s), c) += g(r, c);
                    }
                }
                break;
            }
            case Op::gather_rows: {
                // adjoint of gather is scatter-add
                if (wants(n.a)) {
                    auto& da = grad_buf(n.a);
                    for (size_t s = 0; s < n.index.size(); ++s) {
                        const int r = n.index[s];
                        for (int c = 0; c < g.cols; ++c) da(r, c) += g(static_cast<int>(s), c);
                    }
                }
                break;
            }
        }
    }
};

// Dense Jacobian of taped outputs with respect to taped leaves, one backward
// pass per output entry. Rows flatten `outputs` in order (row-major within
// each), columns flatten `inputs` likewise.
template <typename Real>
Matrix<Real> jacobian(Tape<Real>& t, const std::vector<VarId>& outputs,
                      const std::vector<VarId>& inputs) {
    int n_rows = 0, n_cols = 0;
    for (VarId o : outputs) n_rows += static_cast<int>(t.val(o).size());
    for (VarId i : inputs) n_cols += static_cast<int>(t.val(i).size());
    Matrix<Real> jac(n_rows, n_cols);
    int row = 0;
    for (VarId o : outputs) {
        const auto& ov = t.val(o);
        for (int r = 0; r < ov.rows; ++r)
            for (int c = 0; c < ov.cols; ++c) {
                Matrix<Real> onehot(ov.rows, ov.cols);
                onehot(r, c) = Real(1);
                const VarId pick = t.sum(t.mul(o, t.constant(onehot)));
                t.backward(pick);
                int col = 0;
                for (VarId in : inputs) {
                    const auto g = t.grad(in);
                    for (Real x : g.v) jac(row, col++) = x;
                }
                ++row;
            }
    }
    return jac;
}

// Central-difference verification of a taped scalar function of parameters.
// build_loss must construct the loss from the param VarIds handed to it, in
// the same order as `params`. Returns
//   max over parameter entries of |analytic - central| / max(1, |central|).
template <typename Real, typename BuildLoss>
Real gradient_check(const std::vector<Matrix<Real>>& params, BuildLoss&& build_loss, Real h) {
    auto eval = [&](const std::vector<Matrix<Real>>& ps) {
        Tape<Real> t;
        std::vector<VarId> ids;
        ids.reserve(ps.size());
        for (const auto& p : ps) ids.push_back(t.constant(p));
        const VarId loss = build_loss(t, ids);
        const auto& lv = t.val(loss);
        if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("gradient_check: loss not scalar");
        return lv(0, 0);
    };

    Tape<Real> t;
    std::vector<VarId> ids;
    for (size_t i = 0; i < params.size(); ++i) ids.push_back(t.param(params[i], static_cast<int>(i)));
    const VarId loss = build_loss(t, ids);
    if (t.val(loss).rows != 1 || t.val(loss).cols != 1)
        throw std::invalid_argument("gradient_check: loss not scalar");
    t.backward(loss);
    auto grads = t.param_grads(static_cast<int>(params.size()));

    Real worst = 0;
    std::vector<Matrix<Real>> work = params;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t k = 0; k < params[pi].v.size(); ++k) {
            const Real orig = work[pi].v[k];
            work[pi].v[k] = orig + h;
            const Real fp = eval(work);
            work[pi].v[k] = orig - h;
            const Real fm = eval(work);
            work[pi].v[k] = orig;
            const Real numeric = (fp - fm) / (Real(2) * h);
            const Real analytic = grads[pi].v[k];
            const Real err = std::abs(analytic - numeric) / std::max(Real(1), std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace igns::ad
