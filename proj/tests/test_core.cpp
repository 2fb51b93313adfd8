// ============================================================================
// Unit tests: rng, tensors, tape autodiff, adjacency builders, loss, optimizer,
// model forward, gradcheck. Expected values come from independent oracles
// (explicit loops, finite differences, hand-rolled reference implementations).
// ============================================================================

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/gradcheck.hpp"
#include "wagcn/graph.hpp"
#include "wagcn/loss.hpp"
#include "wagcn/model.hpp"
#include "wagcn/optim.hpp"
#include "wagcn/rng.hpp"
#include "wagcn/tape.hpp"
#include "wagcn/tensor.hpp"

using namespace wagcn;

using DTape = Tape<double>;
using DVar = DTape::Var;
using Mat = Tensor2<double>;

namespace {

Mat random_mat(std::size_t r, std::size_t c, RandomStream& rng, double scale = 1.0) {
    Mat m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = scale * rng.gaussian();
    return m;
}

// Finite-difference check of a scalar tape program against its backward pass.
using Builder = std::function<DVar(DTape&, std::vector<DVar>&)>;

double eval_scalar(const Builder& build, std::vector<Mat*>& inputs) {
    DTape tape;
    std::vector<DVar> vars;
    for (auto* t : inputs) vars.push_back(tape.leaf(*t, true));
    return tape.value(build(tape, vars))(0, 0);
}

void fd_check(std::vector<Mat*> inputs, const Builder& build, double tol = 1e-6) {
    DTape tape;
    std::vector<DVar> vars;
    for (auto* t : inputs) vars.push_back(tape.leaf(*t, true));
    auto loss = build(tape, vars);
    tape.backward(loss);
    std::vector<Mat> grads;
    for (auto v : vars) grads.push_back(tape.grad(v));

    const double h = 1e-6;
    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        for (std::size_t j = 0; j < inputs[vi]->size(); ++j) {
            const double orig = inputs[vi]->at(j);
            inputs[vi]->at(j) = orig + h;
            const double up = eval_scalar(build, inputs);
            inputs[vi]->at(j) = orig - h;
            const double dn = eval_scalar(build, inputs);
            inputs[vi]->at(j) = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double rel = std::abs(grads[vi].at(j) - fd) / std::max(1.0, std::abs(fd));
            CAPTURE(vi);
            CAPTURE(j);
            CHECK(rel < tol);
        }
    }
}

} // namespace

// ============================================================================
// rng
// ============================================================================

TEST_CASE("rng: same seed reproduces the stream bitwise") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform01() == b.uniform01());
    RandomStream c(derive_seed(42, 1)), d(derive_seed(42, 2));
    bool all_equal = true;
    for (int i = 0; i < 16; ++i) all_equal = all_equal && (c.uniform01() == d.uniform01());
    CHECK_FALSE(all_equal);
}

TEST_CASE("rng: uniform01 in [0,1), uniform_int inclusive, gaussian sane") {
    RandomStream rng(7);
    double mean = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mean += u;
    }
    CHECK(std::abs(mean / 10000 - 0.5) < 0.02);

    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.uniform_int(3, 5);
        CHECK(v >= 3);
        CHECK(v <= 5);
        saw_lo = saw_lo || v == 3;
        saw_hi = saw_hi || v == 5;
    }
    CHECK(saw_lo);
    CHECK(saw_hi);

    double gmean = 0.0, gvar = 0.0;
    const int n = 20000;
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) {
        g[i] = rng.gaussian();
        gmean += g[i];
    }
    gmean /= n;
    for (int i = 0; i < n; ++i) gvar += (g[i] - gmean) * (g[i] - gmean);
    gvar /= n;
    CHECK(std::abs(gmean) < 0.05);
    CHECK(std::abs(gvar - 1.0) < 0.05);
}

TEST_CASE("rng: shuffle is a permutation and deterministic") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    RandomStream a(3);
    a.shuffle(v);
    std::vector<int> w = v;
    std::sort(w.begin(), w.end());
    for (int i = 0; i < 50; ++i) CHECK(w[i] == i);

    std::vector<int> v2(50);
    std::iota(v2.begin(), v2.end(), 0);
    RandomStream b(3);
    b.shuffle(v2);
    CHECK(v == v2);
}

// ============================================================================
// tensors
// ============================================================================

TEST_CASE("tensor: matmul and gemm_acc match explicit loops") {
    RandomStream rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t m = 1 + rep, k = 2 + rep, n = 3 + rep;
        Mat a = random_mat(m, k, rng), b = random_mat(k, n, rng);
        Mat c = matmul(a, b);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < k; ++l) acc += a(i, l) * b(l, j);
                CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-12));
            }

        // c += 2 * a^T a  via gemm_acc with transposes
        Mat d(k, k, 1.0);
        gemm_acc(d, true, false, 2.0, a, a);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double acc = 1.0;
                for (std::size_t l = 0; l < m; ++l) acc += 2.0 * a(l, i) * a(l, j);
                CHECK(d(i, j) == doctest::Approx(acc).epsilon(1e-12));
            }
    }
}

TEST_CASE("tensor: float matmul agrees with double loop to float precision") {
    RandomStream rng(13);
    Tensor2<float> a(4, 6), b(6, 3);
    for (std::size_t i = 0; i < a.size(); ++i) a.at(i) = static_cast<float>(rng.gaussian());
    for (std::size_t i = 0; i < b.size(); ++i) b.at(i) = static_cast<float>(rng.gaussian());
    auto c = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < 6; ++l)
                acc += static_cast<double>(a(i, l)) * static_cast<double>(b(l, j));
            CHECK(std::abs(c(i, j) - acc) < 1e-5);
        }
}

TEST_CASE("tensor: shape errors") {
    Mat a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), validation_error);
    CHECK_THROWS_AS(Mat(2, 2, std::vector<double>{1.0, 2.0}), validation_error);
}

// ============================================================================
// tape: every op against central finite differences
// ============================================================================

TEST_CASE("tape: matmul/add/mul/affine/add_rowvec gradients") {
    RandomStream rng(17);
    Mat a = random_mat(3, 4, rng), b = random_mat(4, 2, rng), c = random_mat(3, 2, rng),
        r = random_mat(1, 2, rng);
    fd_check({&a, &b, &c, &r}, [](DTape& t, std::vector<DVar>& v) {
        auto prod = t.matmul(v[0], v[1]);
        auto mixed = t.mul(t.add(prod, v[2]), v[2]);
        return t.sum(t.affine(t.add_rowvec(mixed, v[3]), 1.5, -0.25));
    });
}

TEST_CASE("tape: transpose/relu/sigmoid/log gradients") {
    RandomStream rng(19);
    Mat a = random_mat(4, 3, rng);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a.at(i)) < 0.05) a.at(i) = 0.3; // keep away from the relu kink
    fd_check({&a}, [](DTape& t, std::vector<DVar>& v) {
        auto s = t.sigmoid(t.transpose(t.relu(v[0])));
        return t.sum(t.log(s));
    });
}

TEST_CASE("tape: softmax_rows and row_normalize gradients") {
    RandomStream rng(23);
    Mat a = random_mat(4, 4, rng);
    Mat w = random_mat(4, 4, rng);
    fd_check({&a, &w}, [](DTape& t, std::vector<DVar>& v) {
        return t.sum(t.mul(t.softmax_rows(v[0]), v[1]));
    });
    Mat b = random_mat(3, 3, rng);
    Mat w3 = random_mat(3, 3, rng);
    fd_check({&b, &w3}, [](DTape& t, std::vector<DVar>& v) {
        auto sq = t.mul(v[0], v[0]); // strictly positive rows, away from the fallback
        return t.sum(t.mul(t.row_normalize(sq), t.relu(v[1])));
    });
}

TEST_CASE("tape: topk forwards the k largest and routes gradients") {
    DTape tape;
    Mat s(5, 1, std::vector<double>{0.1, 0.9, 0.4, 0.9, 0.2});
    auto v = tape.leaf(s, true);
    auto top = tape.topk(v, 2);
    const auto& val = tape.value(top);
    REQUIRE(val.rows() == 2);
    CHECK(val(0, 0) == 0.9);
    CHECK(val(1, 0) == 0.9);
    // ties resolve to the lower index first
    const auto& sel = tape.topk_selection(top);
    REQUIRE(sel.size() == 2);
    CHECK(sel[0] == 1);
    CHECK(sel[1] == 3);

    auto loss = tape.sum(top);
    tape.backward(loss);
    const auto& g = tape.grad(v);
    CHECK(g(0, 0) == 0.0);
    CHECK(g(1, 0) == 1.0);
    CHECK(g(2, 0) == 0.0);
    CHECK(g(3, 0) == 1.0);
    CHECK(g(4, 0) == 0.0);
}

TEST_CASE("tape: dropout identity when disabled, inverted scaling when active") {
    RandomStream rng(29);
    Mat a = random_mat(6, 5, rng);
    {
        DTape tape;
        auto v = tape.leaf(a, true);
        RandomStream drop(1);
        auto d = tape.dropout(v, 0.6, /*training=*/false, drop);
        CHECK(tape.value(d)(2, 3) == a(2, 3));
    }
    {
        DTape tape;
        auto v = tape.leaf(a, true);
        RandomStream drop(1);
        auto d = tape.dropout(v, 0.5, /*training=*/true, drop);
        const auto& val = tape.value(d);
        bool saw_zero = false, saw_scaled = false;
        for (std::size_t i = 0; i < val.size(); ++i) {
            if (val.at(i) == 0.0) saw_zero = true;
            else {
                CHECK(val.at(i) == doctest::Approx(2.0 * a.at(i)).epsilon(1e-12));
                saw_scaled = true;
            }
        }
        CHECK(saw_zero);
        CHECK(saw_scaled);
    }
    // gradient through a pinned mask
    fd_check({&a}, [](DTape& t, std::vector<DVar>& v) {
        RandomStream drop(99);
        return t.sum(t.mul(t.dropout(v[0], 0.4, true, drop), v[0]));
    });
}

TEST_CASE("tape: sigmoid output is strictly inside (0,1) even at saturation") {
    DTape tape;
    Mat z(1, 4, std::vector<double>{0.0, 50.0, -800.0, 800.0});
    auto s = tape.sigmoid(tape.constant(z));
    const auto& v = tape.value(s);
    CHECK(v(0, 0) == 0.5);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(v.at(i) > 0.0);
        CHECK(v.at(i) < 1.0);
    }
    // log stays finite through the whole (0,1) range
    auto l = tape.log(s);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::isfinite(tape.value(l)(0, i)));
}

TEST_CASE("tape: backward seed scales every gradient") {
    RandomStream rng(31);
    Mat a = random_mat(3, 3, rng);
    DTape t1, t2;
    auto v1 = t1.leaf(a, true), v2 = t2.leaf(a, true);
    t1.backward(t1.sum(t1.mul(v1, v1)));
    t2.backward(t2.sum(t2.mul(v2, v2)), 0.25);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(t2.grad(v2).at(i) == doctest::Approx(0.25 * t1.grad(v1).at(i)).epsilon(1e-15));
}

// ============================================================================
// adjacency builders
// ============================================================================

TEST_CASE("graph: temporal adjacency matches exp(-|i-j|) exactly") {
    const auto a = build_temporal_adjacency<double>(6);
    CHECK(a(0, 0) == 1.0);
    CHECK(a(2, 3) == std::exp(-1.0));
    CHECK(a(1, 3) == std::exp(-2.0));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(a(i, j) == a(j, i));
            CHECK(a(i, j) == std::exp(-std::abs(double(i) - double(j))));
        }
}

TEST_CASE("graph: dyn_a1 matches an explicit loop oracle") {
    RandomStream rng(37);
    const std::size_t t = 5, d = 4, e = 3;
    Mat x = random_mat(t, d, rng);
    GraphParams<double> gp;
    gp.w1 = random_mat(d, e, rng);
    gp.w2 = random_mat(d, e, rng);
    const Mat a = build_feature_adjacency(x, gp, GraphVariant::DynA1);

    // oracle: relu(XW1) relu(XW2)^T, then per-row softmax
    auto relu_mm = [&](const Mat& w) {
        Mat m(t, e, 0.0);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < e; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < d; ++l) acc += x(i, l) * w(l, j);
                m(i, j) = acc > 0.0 ? acc : 0.0;
            }
        return m;
    };
    const Mat m1 = relu_mm(gp.w1), m2 = relu_mm(gp.w2);
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> row(t);
        double mx = -1e300;
        for (std::size_t j = 0; j < t; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < e; ++l) acc += m1(i, l) * m2(j, l);
            row[j] = acc;
            mx = std::max(mx, acc);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < t; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < t; ++j)
            CHECK(a(i, j) == doctest::Approx(std::exp(row[j] - mx) / z).epsilon(1e-12));
    }
}

TEST_CASE("graph: dyn_a2 matches the squared-similarity oracle and falls back on zero rows") {
    RandomStream rng(41);
    const std::size_t t = 6, d = 5;
    Mat x = random_mat(t, d, rng);
    GraphParams<double> gp;
    gp.w = random_mat(d, 1, rng);
    const Mat a = build_feature_adjacency(x, gp, GraphVariant::DynA2);
    std::vector<double> u(t);
    for (std::size_t i = 0; i < t; ++i) {
        u[i] = 0.0;
        for (std::size_t l = 0; l < d; ++l) u[i] += x(i, l) * gp.w(l, 0);
    }
    for (std::size_t i = 0; i < t; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < t; ++j) z += (u[i] * u[j]) * (u[i] * u[j]);
        for (std::size_t j = 0; j < t; ++j)
            CHECK(a(i, j) ==
                  doctest::Approx((u[i] * u[j]) * (u[i] * u[j]) / z).epsilon(1e-12));
    }

    // all-zero embedding row -> uniform fallback
    Mat x0(3, d, 0.0);
    x0(1, 0) = 1.0;
    Mat w0(d, 2, 0.0); // u = 0 everywhere
    GraphParams<double> gp0;
    gp0.w = w0;
    const Mat a0 = build_feature_adjacency(x0, gp0, GraphVariant::DynA2);
    for (std::size_t j = 0; j < 3; ++j) CHECK(a0(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("graph: para_a is a row-softmax of P, independent of X") {
    RandomStream rng(43);
    GraphParams<double> gp;
    gp.p = random_mat(4, 4, rng);
    Mat x1 = random_mat(4, 3, rng), x2 = random_mat(4, 3, rng);
    const Mat a1 = build_feature_adjacency(x1, gp, GraphVariant::ParaA);
    const Mat a2 = build_feature_adjacency(x2, gp, GraphVariant::ParaA);
    for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1.at(i) == a2.at(i));
    // P of the wrong size is rejected with both sizes named
    Mat x3 = random_mat(6, 3, rng);
    CHECK_THROWS_AS(build_feature_adjacency(x3, gp, GraphVariant::ParaA), validation_error);
}

TEST_CASE("graph: row-stochastic variants have non-negative unit rows (many inputs)") {
    RandomStream rng(47);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t t = 2 + static_cast<std::size_t>(rng.uniform_int(0, 6));
        const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform_int(0, 5));
        Mat x = random_mat(t, d, rng, 2.0);
        GraphParams<double> gp;
        gp.w1 = random_mat(d, 3, rng);
        gp.w2 = random_mat(d, 3, rng);
        gp.w = random_mat(d, 2, rng);
        gp.p = random_mat(t, t, rng);
        for (auto variant : {GraphVariant::DynA1, GraphVariant::DynA2, GraphVariant::ParaA}) {
            const Mat a = build_feature_adjacency(x, gp, variant);
            for (std::size_t i = 0; i < t; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < t; ++j) {
                    CHECK(a(i, j) >= 0.0);
                    s += a(i, j);
                }
                CHECK(std::abs(s - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("graph: csim_a orthogonal unit rows give the identity") {
    Mat x(3, 3, 0.0);
    x(0, 0) = x(1, 1) = x(2, 2) = 1.0;
    const Mat a = build_feature_adjacency(x, GraphParams<double>{}, GraphVariant::CsimA);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.0));
    // negative cosine clamps to zero
    Mat y(2, 2, std::vector<double>{1.0, 0.0, -1.0, 0.0});
    const Mat b = build_feature_adjacency(y, GraphParams<double>{}, GraphVariant::CsimA);
    CHECK(b(0, 1) == 0.0);
    CHECK(b(0, 0) == 1.0);
}

TEST_CASE("graph: jsim_a hand-computed values and zero-row convention") {
    Mat x(3, 2, std::vector<double>{1.0, 3.0, 2.0, 2.0, 0.0, 0.0});
    const Mat a = build_feature_adjacency(x, GraphParams<double>{}, GraphVariant::JsimA);
    // J(row0,row1) = (min(1,2)+min(3,2)) / (max(1,2)+max(3,2)) = 3/5
    CHECK(a(0, 1) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(a(1, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(a(0, 0) == 1.0);
    // all-zero pair: 0 off the diagonal, 1 on it
    CHECK(a(2, 2) == 1.0);
    CHECK(a(0, 2) == 0.0);
    CHECK(a(2, 1) == 0.0);
    // negative features are rectified before the min/max sums
    Mat y(2, 2, std::vector<double>{1.0, -5.0, 1.0, 0.0});
    const Mat b = build_feature_adjacency(y, GraphParams<double>{}, GraphVariant::JsimA);
    CHECK(b(0, 1) == 1.0);
}

TEST_CASE("graph: gradients flow through trainable variants only") {
    RandomStream rng(53);
    const std::size_t t = 4, d = 3;
    Mat x = random_mat(t, d, rng);

    auto graph_grad_magnitude = [&](GraphVariant variant) {
        DTape tape;
        auto xv = tape.leaf(x, true);
        GraphParamVars<double> vars;
        Mat w1 = random_mat(d, 3, rng), w2 = random_mat(d, 3, rng), w = random_mat(d, 2, rng),
            p = random_mat(t, t, rng);
        if (variant == GraphVariant::DynA1) {
            vars.w1 = tape.leaf(w1, true);
            vars.w2 = tape.leaf(w2, true);
        } else if (variant == GraphVariant::DynA2) {
            vars.w = tape.leaf(w, true);
        } else if (variant == GraphVariant::ParaA) {
            vars.p = tape.leaf(p, true);
        }
        auto a = build_feature_adjacency(tape, xv, vars, variant);
        auto loss = tape.sum(tape.mul(a, a));
        tape.backward(loss);
        double gx = 0.0;
        const auto& g = tape.grad(xv);
        for (std::size_t i = 0; i < g.size(); ++i) gx += std::abs(g.at(i));
        return gx;
    };

    CHECK(graph_grad_magnitude(GraphVariant::DynA1) > 1e-8);
    CHECK(graph_grad_magnitude(GraphVariant::DynA2) > 1e-8);
    CHECK(graph_grad_magnitude(GraphVariant::CsimA) == 0.0);
    CHECK(graph_grad_magnitude(GraphVariant::JsimA) == 0.0);
}

TEST_CASE("graph: combine modes") {
    const auto a_t = build_temporal_adjacency<double>(3);
    Mat a_f(3, 3, 0.25);
    const auto global = combine(a_f, a_t, GraphMode::Global);
    REQUIRE(global.propagation.size() == 1);
    CHECK(global.propagation[0](0, 1) == doctest::Approx(0.25 + std::exp(-1.0)));
    CHECK(combine(a_f, a_t, GraphMode::FeatureOnly).propagation[0](0, 0) == 0.25);
    CHECK(combine(a_f, a_t, GraphMode::TemporalOnly).propagation[0](0, 0) == 1.0);
    CHECK(combine(a_f, a_t, GraphMode::LateFusion).propagation.size() == 2);
}

// ============================================================================
// loss
// ============================================================================

TEST_CASE("loss: compute_k table and monotonicity") {
    CHECK(compute_k(150) == 19);
    CHECK(compute_k(100) == 13);
    CHECK(compute_k(1) == 1);
    CHECK(compute_k(8) == 2);
    CHECK(compute_k(16) == 3);
    std::size_t prev = 0;
    for (std::size_t t = 1; t <= 2000; ++t) {
        const std::size_t k = compute_k(t);
        CHECK(k >= prev);
        CHECK(k <= t);
        prev = k;
    }
    CHECK_THROWS_AS(compute_k(0), validation_error);
}

namespace {

// independent reference: sort indices by score (stable), select k, average BCE
double kmax_oracle(const std::vector<double>& s, int label) {
    const std::size_t k = s.size() / 8 + 1;
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        acc += label == 1 ? std::log(s[idx[i]]) : std::log(1.0 - s[idx[i]]);
    return -acc / static_cast<double>(k);
}

std::vector<std::size_t> kmax_oracle_support(const std::vector<double>& s) {
    const std::size_t k = s.size() / 8 + 1;
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

TEST_CASE("loss: pinned examples") {
    {
        DTape tape;
        auto s = tape.leaf(Mat(10, 1, 0.5), true);
        auto l = kmax_bce(tape, s, 1);
        CHECK(tape.value(l)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    {
        DTape tape;
        Mat v(8, 1, 0.0001);
        v(3, 0) = 0.5; // k = 2: selects 0.5 and one 0.0001
        auto s = tape.leaf(v, true);
        auto l = kmax_bce(tape, s, 0);
        const double expect = -0.5 * (std::log(0.5) + std::log(1.0 - 0.0001));
        CHECK(tape.value(l)(0, 0) == doctest::Approx(expect).epsilon(1e-15));
    }
}

TEST_CASE("loss: 100 random triples match the sort/select/average oracle") {
    RandomStream rng(59);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t t = 1 + static_cast<std::size_t>(rng.uniform_int(0, 39));
        const int label = rng.uniform01() < 0.5 ? 1 : 0;
        std::vector<double> s(t);
        for (auto& v : s) v = 0.02 + 0.96 * rng.uniform01();
        if (t > 3) s[2] = s[0]; // inject ties

        DTape tape;
        Mat m(t, 1, s);
        auto sv = tape.leaf(m, true);
        auto l = kmax_bce(tape, sv, label);
        CHECK(std::abs(tape.value(l)(0, 0) - kmax_oracle(s, label)) < 1e-12);

        // gradient support == selected index set
        tape.backward(l);
        const auto& g = tape.grad(sv);
        const auto support = kmax_oracle_support(s);
        for (std::size_t i = 0; i < t; ++i) {
            const bool selected = std::binary_search(support.begin(), support.end(), i);
            CAPTURE(i);
            if (selected) CHECK(g(i, 0) != 0.0);
            else CHECK(g(i, 0) == 0.0);
        }
    }
}

TEST_CASE("loss: monotone in the selected scores") {
    // Y=1: raising a selected score lowers the loss; Y=0 raises it
    std::vector<double> s{0.6, 0.3, 0.2, 0.55, 0.1, 0.4, 0.35, 0.25, 0.15};
    auto eval = [&](int label, double bump) {
        DTape tape;
        std::vector<double> t = s;
        t[0] += bump;
        auto l = kmax_bce(tape, tape.leaf(Mat(t.size(), 1, t), true), label);
        return tape.value(l)(0, 0);
    };
    CHECK(eval(1, 0.05) < eval(1, 0.0));
    CHECK(eval(0, 0.05) > eval(0, 0.0));
}

TEST_CASE("loss: rejects bad inputs") {
    DTape tape;
    auto s = tape.leaf(Mat(4, 1, 0.5), true);
    CHECK_THROWS_AS(kmax_bce(tape, s, 2), validation_error);
    auto bad = tape.leaf(Mat(4, 1, 1.0), true);
    CHECK_THROWS_AS(kmax_bce(tape, bad, 1), validation_error);
    auto bad0 = tape.leaf(Mat(4, 1, 0.0), true);
    CHECK_THROWS_AS(kmax_bce(tape, bad0, 0), validation_error);
}

// ============================================================================
// optimizer
// ============================================================================

TEST_CASE("adam: zero gradient with zero decay leaves parameters unchanged") {
    Adam<double> opt{typename Adam<double>::Config{}};
    Mat p(2, 2, 1.5), g(2, 2, 0.0);
    std::vector<std::string> names{"p"};
    opt.step(names, {&p}, {&g});
    CHECK(opt.step_count() == 1);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.at(i) == 1.5);
}

TEST_CASE("adam: first-step magnitude is about lr") {
    typename Adam<double>::Config cfg;
    cfg.lr = 0.001;
    Adam<double> opt(cfg);
    Mat p(1, 1, 1.0), g(1, 1, 1.0);
    opt.step({"p"}, {&p}, {&g});
    CHECK(std::abs((1.0 - p(0, 0)) - cfg.lr * 1.0 / (1.0 + cfg.eps)) < 1e-12);
}

TEST_CASE("adam: 5-step scalar quadratic matches a reference loop to 1e-12") {
    for (double wd : {0.0, 0.01}) {
        typename Adam<double>::Config cfg;
        cfg.lr = 0.05;
        cfg.weight_decay = wd;
        Adam<double> opt(cfg);
        Mat p(1, 1, 0.0);

        // independent loop: minimize 0.5*(x-3)^2
        double x = 0.0, m = 0.0, v = 0.0;
        for (int t = 1; t <= 5; ++t) {
            Mat grad(1, 1, p(0, 0) - 3.0);
            opt.step({"x"}, {&p}, {&grad});

            double g = (x - 3.0) + wd * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            const double mh = m / (1.0 - std::pow(0.9, t));
            const double vh = v / (1.0 - std::pow(0.999, t));
            x -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
            CHECK(std::abs(p(0, 0) - x) < 1e-12);
        }
    }
}

TEST_CASE("adam: lr=0 leaves parameters bitwise unchanged") {
    typename Adam<double>::Config cfg;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0005;
    Adam<double> opt(cfg);
    Mat p(2, 3, -0.75), g(2, 3, 0.125);
    const Mat before = p;
    for (int i = 0; i < 3; ++i) opt.step({"p"}, {&p}, {&g});
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.at(i) == before.at(i));
}

TEST_CASE("adam: non-finite gradient aborts naming the parameter") {
    Adam<double> opt{typename Adam<double>::Config{}};
    Mat p(1, 1, 1.0), g(1, 1, std::nan(""));
    try {
        opt.step({"gcn.0.w"}, {&p}, {&g});
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("gcn.0.w") != std::string::npos);
    }
}

TEST_CASE("adam: parameter list drift is rejected") {
    Adam<double> opt{typename Adam<double>::Config{}};
    Mat p(1, 1, 1.0), q(1, 1, 1.0), g(1, 1, 0.5);
    opt.step({"p"}, {&p}, {&g});
    CHECK_THROWS_AS(opt.step({"p", "q"}, {&p, &q}, {&g, &g}), validation_error);
}

// ============================================================================
// model forward
// ============================================================================

namespace {

ModelSpec small_spec(GraphVariant variant = GraphVariant::DynA1,
                     GraphMode mode = GraphMode::Global, bool residual = true) {
    ModelSpec spec;
    spec.input_dim = 6;
    spec.dims = {8, 4, 1};
    spec.embed_dim = 8;
    spec.variant = variant;
    spec.mode = mode;
    spec.residual = residual;
    spec.dropout = 0.6;
    spec.train_t = 5;
    return spec;
}

} // namespace

TEST_CASE("model: zero-weight fixture scores 0.5 everywhere") {
    auto spec = small_spec();
    auto params = make_params_shell<double>(spec); // all zeros
    RandomStream rng(1);
    Mat x = random_mat(5, 6, rng);
    const auto scores = forward_scores(params, x);
    REQUIRE(scores.size() == 5);
    for (double s : scores) CHECK(s == 0.5);
}

TEST_CASE("model: scores strictly inside (0,1), training==inference without dropout") {
    for (auto variant : {GraphVariant::DynA1, GraphVariant::DynA2, GraphVariant::ParaA,
                         GraphVariant::CsimA, GraphVariant::JsimA}) {
        auto spec = small_spec(variant);
        spec.dropout = 0.0;
        auto params = init_params<double>(spec, 9);
        RandomStream rng(2);
        Mat x = random_mat(5, 6, rng);
        RandomStream d1(5), d2(6);
        auto fo_train = forward(params, x, true, d1);
        auto fo_infer = forward(params, x, false, d2);
        const auto& st = fo_train.tape.value(fo_train.scores);
        const auto& si = fo_infer.tape.value(fo_infer.scores);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(st(i, 0) > 0.0);
            CHECK(st(i, 0) < 1.0);
            CHECK(st(i, 0) == si(i, 0));
        }
    }
}

TEST_CASE("model: input validation names both dims") {
    auto spec = small_spec();
    auto params = init_params<double>(spec, 3);
    RandomStream rng(4);
    Mat wrong = random_mat(5, 7, rng);
    try {
        forward(params, wrong, false, rng);
        FAIL("expected validation_error");
    } catch (const validation_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("7") != std::string::npos);
        CHECK(msg.find("6") != std::string::npos);
    }
    Mat bad = random_mat(5, 6, rng);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(forward(params, bad, false, rng), validation_error);
}

TEST_CASE("model: score_video averages crops and is order invariant") {
    auto spec = small_spec();
    auto params = init_params<double>(spec, 11);
    RandomStream rng(12);
    std::vector<Mat> crops;
    for (int c = 0; c < 10; ++c) crops.push_back(random_mat(7, 6, rng));

    const auto fused = score_video(params, crops);
    REQUIRE(fused.size() == 7);
    // oracle: mean of single-crop runs
    std::vector<double> mean(7, 0.0);
    for (const auto& c : crops) {
        const auto s = score_video(params, {c});
        for (std::size_t i = 0; i < 7; ++i) mean[i] += s[i] / 10.0;
    }
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(fused[i] - mean[i]) < 1e-12);

    auto shuffled = crops;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto fused2 = score_video(params, shuffled);
    for (std::size_t i = 0; i < 7; ++i)
        CHECK(fused[i] == doctest::Approx(fused2[i]).epsilon(1e-14));

    // single crop == plain forward
    const auto one = score_video(params, {crops[0]});
    const auto direct = forward_scores(params, crops[0]);
    for (std::size_t i = 0; i < 7; ++i) CHECK(one[i] == direct[i]);
}

TEST_CASE("model: para_a scores full videos by resampling to the trained length") {
    auto spec = small_spec(GraphVariant::ParaA);
    auto params = init_params<double>(spec, 13);
    RandomStream rng(14);
    Mat longvid = random_mat(12, 6, rng); // longer than train_t = 5
    const auto s = score_video(params, {longvid});
    REQUIRE(s.size() == 12);
    for (double v : s) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // nearest-sample mapping makes the curve piecewise constant over T_full
    std::vector<double> distinct;
    for (double v : s)
        if (distinct.empty() || distinct.back() != v) distinct.push_back(v);
    CHECK(distinct.size() <= 5);
}

TEST_CASE("model: residual can be disabled and changes the function") {
    auto spec_on = small_spec();
    auto spec_off = small_spec(GraphVariant::DynA1, GraphMode::Global, false);
    auto p_on = init_params<double>(spec_on, 21);
    auto p_off = init_params<double>(spec_off, 21);
    RandomStream rng(22);
    Mat x = random_mat(5, 6, rng);
    const auto s_on = forward_scores(p_on, x);
    const auto s_off = forward_scores(p_off, x);
    bool differ = false;
    for (std::size_t i = 0; i < 5; ++i) differ = differ || s_on[i] != s_off[i];
    CHECK(differ);
    // no residual tensors are registered when disabled
    for (const auto& [name, ptr] : p_off.named_tensors())
        CHECK(name.find(".res.") == std::string::npos);
}

TEST_CASE("model: init is seed-deterministic with the documented bound") {
    auto spec = small_spec();
    auto a = init_params<double>(spec, 33);
    auto b = init_params<double>(spec, 33);
    auto c = init_params<double>(spec, 34);
    const auto na = a.named_tensors(), nb = b.named_tensors(), nc = c.named_tensors();
    bool any_diff = false;
    for (std::size_t i = 0; i < na.size(); ++i) {
        for (std::size_t j = 0; j < na[i].second->size(); ++j) {
            CHECK(na[i].second->at(j) == nb[i].second->at(j));
            any_diff = any_diff || na[i].second->at(j) != nc[i].second->at(j);
        }
    }
    CHECK(any_diff);
    // fc weights bounded by sqrt(1/fan_in), biases zero
    const double bound = std::sqrt(1.0 / 6.0);
    for (std::size_t j = 0; j < a.fc_w.size(); ++j) CHECK(std::abs(a.fc_w.at(j)) <= bound);
    for (std::size_t j = 0; j < a.fc_b.size(); ++j) CHECK(a.fc_b.at(j) == 0.0);
}

TEST_CASE("model: uniform sampling rule") {
    CHECK(uniform_sample_indices(100, 4) == std::vector<std::size_t>{0, 25, 50, 75});
    CHECK(uniform_sample_indices(150, 150).front() == 0);
    CHECK(uniform_sample_indices(3, 6) == std::vector<std::size_t>{0, 0, 1, 1, 2, 2});
    const auto idx = uniform_sample_indices(193, 64);
    CHECK(idx.size() == 64);
    CHECK(idx.front() == 0);
    for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] >= idx[i - 1]);
    CHECK(idx.back() < 193);
}

// ============================================================================
// gradcheck
// ============================================================================

TEST_CASE("gradcheck: default configuration passes") {
    GradcheckConfig cfg; // T=8, D=16, dims {16,8,4,1}, dyn_a1, global, dropout 0.6
    const auto report = run_gradcheck(cfg);
    CHECK(report.pass);
    CHECK(report.max_rel_err() < 1e-4);
    CHECK(report.params.size() >= 8);
    for (const auto& p : report.params) {
        CAPTURE(p.name);
        CHECK(p.max_rel_err < 1e-4);
    }
}

TEST_CASE("gradcheck: corrupted sigmoid backward is caught") {
    GradcheckConfig cfg;
    cfg.t = 4;
    cfg.d = 8;
    cfg.dims = {8, 4, 1};
    cfg.embed_dim = 8;
    const auto report =
        run_gradcheck<double>(cfg, [](Tape<double>& t) { t.sigmoid_backward_scale = 1.001; });
    CHECK_FALSE(report.pass);
    CHECK(report.max_rel_err() > 1e-4);
}

TEST_CASE("gradcheck: zero tolerance fails") {
    GradcheckConfig cfg;
    cfg.t = 4;
    cfg.d = 8;
    cfg.dims = {8, 4, 1};
    cfg.embed_dim = 8;
    cfg.tolerance = 0.0;
    CHECK_FALSE(run_gradcheck(cfg).pass);
}

TEST_CASE("gradcheck: passes across variants, modes and residual settings") {
    for (auto variant : {GraphVariant::DynA2, GraphVariant::ParaA}) {
        GradcheckConfig cfg;
        cfg.t = 4;
        cfg.d = 8;
        cfg.dims = {8, 4, 1};
        cfg.embed_dim = 8;
        cfg.variant = variant;
        CAPTURE(to_string(variant));
        CHECK(run_gradcheck(cfg).pass);
    }
    for (auto mode : {GraphMode::FeatureOnly, GraphMode::TemporalOnly}) {
        GradcheckConfig cfg;
        cfg.t = 4;
        cfg.d = 8;
        cfg.dims = {8, 4, 1};
        cfg.embed_dim = 8;
        cfg.mode = mode;
        CAPTURE(to_string(mode));
        CHECK(run_gradcheck(cfg).pass);
    }
    GradcheckConfig cfg;
    cfg.t = 4;
    cfg.d = 8;
    cfg.dims = {8, 4, 1};
    cfg.embed_dim = 8;
    cfg.residual = false;
    CHECK(run_gradcheck(cfg).pass);
}
