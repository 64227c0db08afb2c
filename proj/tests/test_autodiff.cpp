#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "igns/autodiff.hpp"
#include "igns/graph.hpp"
#include "igns/rng.hpp"

using igns::Matrix;
using igns::Rng;
namespace ad = igns::ad;
using ad::Tape;
using ad::VarId;

namespace {

Matrix<double> random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
    Matrix<double> m(r, c);
    for (auto& x : m.v) x = scale * rng.normal();
    return m;
}

// Central-difference check for a single-input op: builds loss = sum(f(x))
// optionally through a weighting matrix so non-scalar outputs get mixed.
template <typename BuildOp>
double op_fd_error(const Matrix<double>& x, BuildOp&& build, double h = 1e-6) {
    std::vector<Matrix<double>> params{x};
    return ad::gradient_check<double>(
        params, [&](Tape<double>& t, const std::vector<VarId>& ps) { return build(t, ps[0]); }, h);
}

}  // namespace

TEST_CASE("record examples from the op table") {
    Tape<double> t;
    // identity matmul
    auto I = t.constant(Matrix<double>::from_rows({{1, 0}, {0, 1}}));
    auto x = t.constant(Matrix<double>::from_rows({{3}, {-1}}));
    auto y = t.matmul(I, x);
    CHECK(t.val(y)(0, 0) == 3.0);
    CHECK(t.val(y)(1, 0) == -1.0);

    // tanh of the zero matrix is zero
    auto z = t.tanh_fn(t.constant(Matrix<double>(2, 3)));
    CHECK(igns::max_abs(t.val(z)) == 0.0);

    // scatter-sum over edges {(0->1),(2->1)} of per-edge values [1],[2]
    ad::ScatterPlan plan;
    plan.offsets = {0, 0, 2, 2};  // node 1 receives both slots
    plan.row_of_slot = {1, 1};
    auto ev = t.constant(Matrix<double>::from_rows({{1}, {2}}));
    auto agg = t.scatter_sum(ev, plan);
    CHECK(t.val(agg)(0, 0) == 0.0);
    CHECK(t.val(agg)(1, 0) == 3.0);
    CHECK(t.val(agg)(2, 0) == 0.0);
}

TEST_CASE("shape mismatch and unknown input errors") {
    Tape<double> t;
    auto a = t.constant(Matrix<double>(2, 3));
    auto b = t.constant(Matrix<double>(2, 2));
    CHECK_THROWS_AS((void)t.matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS((void)t.add(a, b), std::invalid_argument);
    CHECK_THROWS_AS((void)t.slice_cols(a, 2, 2), std::invalid_argument);
}

TEST_CASE("strict mode rejects non-finite op outputs") {
    Tape<double> t;
    Matrix<double> big(1, 1);
    big(0, 0) = 1e308;
    auto a = t.constant(big);
    CHECK_THROWS_AS((void)t.square(a), std::runtime_error);

    Tape<double> loose(false);
    auto b = loose.constant(big);
    CHECK_NOTHROW((void)loose.square(b));
}

TEST_CASE("backward examples") {
    SUBCASE("loss = sum(square(x)) gives 2x") {
        Tape<double> t;
        auto x = t.param(Matrix<double>::from_rows({{1, 2}}), 0);
        auto loss = t.sum(t.square(x));
        t.backward(loss);
        auto g = t.param_grads(1)[0];
        CHECK(g(0, 0) == doctest::Approx(2.0));
        CHECK(g(0, 1) == doctest::Approx(4.0));
    }
    SUBCASE("disconnected parameter gets a zero gradient") {
        Tape<double> t;
        auto x = t.param(Matrix<double>::from_rows({{1, 2}}), 0);
        auto w = t.param(Matrix<double>::from_rows({{5}}), 1);
        (void)w;
        t.backward(t.sum(t.square(x)));
        auto gw = t.param_grads(2)[1];
        CHECK(gw.rows == 1);
        CHECK(igns::max_abs(gw) == 0.0);
    }
    SUBCASE("tanh'(0) = 1") {
        Tape<double> t;
        auto x = t.param(Matrix<double>(1, 1), 0);
        t.backward(t.sum(t.tanh_fn(x)));
        CHECK(t.param_grads(1)[0](0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("non-scalar loss rejected") {
        Tape<double> t;
        auto x = t.param(Matrix<double>(2, 2), 0);
        CHECK_THROWS_AS(t.backward(t.square(x)), std::invalid_argument);
    }
}

TEST_CASE("every op kind matches central finite differences") {
    // 100 randomized trials across the op set, fixed seed, 64-bit.
    Rng rng(20240917);
    const double tol = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(4));
        const int c = 2 + static_cast<int>(rng.below(4));
        auto x = random_matrix(rng, n, c);
        auto w = random_matrix(rng, c, c);
        auto row = random_matrix(rng, 1, c);

        // mixing weights drawn once so every finite-difference evaluation
        // sees the same function
        auto mix1 = random_matrix(rng, n, 2 * c - 2);
        auto mix2 = random_matrix(rng, n, c);
        auto mix3 = random_matrix(rng, c, n);
        auto mix4 = random_matrix(rng, n, c);
        auto weighted_sum = [](Tape<double>& t, VarId v, const Matrix<double>& m) {
            return t.sum(t.mul(v, t.constant(m)));
        };

        std::vector<Matrix<double>> params{x, w, row};
        auto err = ad::gradient_check<double>(
            params,
            [&](Tape<double>& t, const std::vector<VarId>& p) {
                auto h1 = t.matmul(p[0], p[1]);                       // matmul
                auto h2 = t.add(h1, p[2]);                            // broadcast add
                auto h3 = t.tanh_fn(h2);                              // tanh
                auto h4 = t.mul(h3, p[0]);                            // elementwise-mul
                auto h5 = t.sub(h4, p[0]);                            // sub
                auto h6 = t.scale(h5, 0.7);                           // scalar-scale
                auto h7 = t.concat_cols(h6, t.square(p[0]));          // concat + square
                auto h8 = t.slice_cols(h7, 1, t.val(h7).cols - 1);    // slice
                auto h9 = t.ln_cosh_fn(h8);                           // ln-cosh
                return weighted_sum(t, h9, mix1);
            },
            1e-6);
        CHECK(err < tol);

        // remaining unary ops, positive inputs where needed
        auto xpos = random_matrix(rng, n, c);
        for (auto& v : xpos.v) v = 0.5 + std::abs(v);
        std::vector<Matrix<double>> pos_params{xpos};
        auto err2 = ad::gradient_check<double>(
            pos_params,
            [&](Tape<double>& t, const std::vector<VarId>& p) {
                auto a = weighted_sum(t, t.rsqrt(p[0]), mix2);
                auto b = weighted_sum(t, t.softplus_fn(t.transpose(p[0])), mix3);
                return t.add(a, b);
            },
            1e-6);
        CHECK(err2 < tol);

        // relu away from the kink
        auto xr = random_matrix(rng, n, c);
        for (auto& v : xr.v)
            if (std::abs(v) < 0.1) v += 0.2;
        std::vector<Matrix<double>> relu_params{xr};
        auto err3 = ad::gradient_check<double>(
            relu_params,
            [&](Tape<double>& t, const std::vector<VarId>& p) {
                return weighted_sum(t, t.relu(p[0]), mix4);
            },
            1e-6);
        CHECK(err3 < tol);
    }
}

TEST_CASE("gather/scatter gradients on a grid graph") {
    Rng rng(7);
    auto g = igns::build_grid_graph(3, 3);
    auto x = random_matrix(rng, g.n_nodes, 4);
    std::vector<Matrix<double>> params{x};
    auto err = ad::gradient_check<double>(
        params,
        [&](Tape<double>& t, const std::vector<VarId>& p) {
            auto msgs = t.gather_rows(p[0], g.in_dir.gather);
            auto agg = t.scatter_sum(msgs, g.in_dir.plan);
            auto back = t.gather_rows(agg, g.out_dir.gather);
            auto agg2 = t.scatter_sum(back, g.out_dir.plan);
            return t.sum(t.square(agg2));
        },
        1e-6);
    CHECK(err < 1e-7);
}

TEST_CASE("scatter-sum and gather are adjoint") {
    Rng rng(11);
    auto g = igns::build_grid_graph(4, 5);
    const int d = 3;
    for (int trial = 0; trial < 20; ++trial) {
        auto u = random_matrix(rng, g.n_edges(), d);
        auto v = random_matrix(rng, g.n_nodes, d);
        Tape<double> t;
        auto su = t.scatter_sum(t.constant(u), g.in_dir.plan);
        auto gv = t.gather_rows(t.constant(v), g.in_dir.plan.row_of_slot);
        double lhs = 0, rhs = 0;
        for (size_t i = 0; i < t.val(su).v.size(); ++i) lhs += t.val(su).v[i] * v.v[i];
        for (size_t i = 0; i < u.v.size(); ++i) rhs += u.v[i] * t.val(gv).v[i];
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("backward over a tape is deterministic") {
    auto run = [] {
        Rng rng(99);
        Tape<double> t;
        auto x = t.param(random_matrix(rng, 5, 4), 0);
        auto w = t.param(random_matrix(rng, 4, 4), 1);
        auto loss = t.sum(t.square(t.tanh_fn(t.matmul(x, w))));
        t.backward(loss);
        return t.param_grads(2);
    };
    auto g1 = run();
    auto g2 = run();
    for (int p = 0; p < 2; ++p)
        for (size_t i = 0; i < g1[p].v.size(); ++i) CHECK(g1[p].v[i] == g2[p].v[i]);
}

TEST_CASE("gradient_check examples") {
    Rng rng(5);
    SUBCASE("sum of squares") {
        std::vector<Matrix<double>> params{random_matrix(rng, 3, 3)};
        auto err = ad::gradient_check<double>(
            params,
            [](Tape<double>& t, const std::vector<VarId>& p) { return t.sum(t.square(p[0])); },
            1e-5);
        CHECK(err <= 1e-7);
    }
    SUBCASE("constant function has zero error") {
        std::vector<Matrix<double>> params{random_matrix(rng, 2, 2)};
        auto err = ad::gradient_check<double>(
            params,
            [](Tape<double>& t, const std::vector<VarId>& p) {
                (void)p;
                return t.sum(t.constant(Matrix<double>::from_rows({{4.0}})));
            },
            1e-5);
        CHECK(err == 0.0);
    }
}

TEST_CASE("ln-cosh is overflow-safe at large inputs") {
    Tape<double> t;
    Matrix<double> x(1, 2);
    x(0, 0) = 1000.0;
    x(0, 1) = -1000.0;
    auto y = t.ln_cosh_fn(t.constant(x));
    const double expect = 1000.0 - std::log(2.0);
    CHECK(t.val(y)(0, 0) == doctest::Approx(expect));
    CHECK(t.val(y)(0, 1) == doctest::Approx(expect));
    // and at zero it vanishes like the activation antiderivative should
    auto z = t.ln_cosh_fn(t.constant(Matrix<double>(1, 1)));
    CHECK(t.val(z)(0, 0) == 0.0);
}

TEST_CASE("scatter accumulation is independent of node relabeling") {
    // sum the same multiset of messages under two different slot orders
    Rng rng(31);
    Matrix<double> vals(6, 1);
    for (auto& v : vals.v) v = rng.normal() * 1e8 + rng.normal();
    ad::ScatterPlan p1;
    p1.offsets = {0, 6};
    p1.row_of_slot = {0, 0, 0, 0, 0, 0};
    Matrix<double> shuffled = vals;
    std::swap(shuffled.v[0], shuffled.v[5]);
    std::swap(shuffled.v[1], shuffled.v[3]);
    Tape<double> t;
    auto a = t.scatter_sum(t.constant(vals), p1);
    auto b = t.scatter_sum(t.constant(shuffled), p1);
    CHECK(t.val(a)(0, 0) == t.val(b)(0, 0));
}
