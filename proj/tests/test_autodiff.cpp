#include <catch2/catch_amalgamated.hpp>

#include "mmrf/autodiff.hpp"

#include <cmath>
#include <vector>

using namespace mmrf;

namespace {

// Runs fn twice: once to capture analytic gradients, then through the
// central-difference harness.
ad::FiniteDiffReport check_op(ad::Parameter& p,
                              const std::function<ad::Var(ad::Tape&, ad::Var)>& op,
                              int rows, int cols, double tol = 2.5e-3) {
    auto loss = [&]() {
        ad::Tape tape;
        ad::Var x = tape.param(p, rows, cols);
        ad::Var y = op(tape, x);
        ad::Var l = tape.reduce_sum(tape.square(y));
        tape.backward(l);
        return double(tape.scalar(l));
    };
    p.zero_grad();
    loss();
    std::vector<std::vector<float>> grads = {p.grad};
    return ad::finite_difference_check(
        [&]() {
            ad::Tape tape;
            ad::Var x = tape.param(p, rows, cols);
            return double(tape.scalar(tape.reduce_sum(tape.square(op(tape, x)))));
        },
        {&p}, grads, tol, 1e-3, 20, 123);
}

ad::Parameter random_param(const std::string& name, int n, std::uint64_t seed,
                           double lo = -1.0, double hi = 1.0) {
    Rng rng = make_rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = float(uniform(rng, lo, hi));
    return ad::Parameter(name, std::move(v));
}

}  // namespace

TEST_CASE("reduce_sum gradient is all ones") {
    ad::Parameter p = random_param("p", 12, 1);
    ad::Tape tape;
    ad::Var x = tape.param(p, 3, 4);
    tape.backward(tape.reduce_sum(x));
    for (float g : p.grad) CHECK(g == 1.0f);
}

TEST_CASE("linear with identity weights is the identity") {
    ad::Parameter W("W", {1, 0, 0, 1});
    ad::Parameter b("b", std::vector<float>{0, 0});
    ad::Tape tape;
    std::vector<float> xv = {0.3f, -0.7f, 1.5f, 0.2f};
    ad::Var x = tape.input(2, 2, xv);
    ad::Var y = tape.linear(x, W, b);
    const auto& yv = tape.node(y).v;
    for (int i = 0; i < 4; ++i) CHECK(yv[i] == xv[i]);
}

TEST_CASE("relu values") {
    ad::Parameter p("p", {-1.f, 2.f});
    ad::Tape tape;
    const auto& v = tape.node(tape.relu(tape.param(p, 1, 2))).v;
    CHECK(v[0] == 0.0f);
    CHECK(v[1] == 2.0f);
}

TEST_CASE("quadratic derivative at x=3") {
    ad::Parameter p("x", std::vector<float>{3.f});
    ad::Tape tape;
    ad::Var x = tape.param(p, 1, 1);
    tape.backward(tape.square(x));
    CHECK(p.grad[0] == Catch::Approx(6.0).margin(1e-4));
}

TEST_CASE("elementwise kernels pass finite differences") {
    struct Case {
        const char* name;
        std::function<ad::Var(ad::Tape&, ad::Var)> op;
        double lo, hi;
    };
    const std::vector<Case> cases = {
        {"sigmoid", [](ad::Tape& t, ad::Var x) { return t.sigmoid(x); }, -2, 2},
        {"softplus", [](ad::Tape& t, ad::Var x) { return t.softplus(x, 100.f); }, 0.1, 2},
        {"exp", [](ad::Tape& t, ad::Var x) { return t.exp_(x); }, -1, 1},
        {"sin", [](ad::Tape& t, ad::Var x) { return t.sin_(x); }, -2, 2},
        {"cos", [](ad::Tape& t, ad::Var x) { return t.cos_(x); }, -2, 2},
        {"square", [](ad::Tape& t, ad::Var x) { return t.square(x); }, 0.5, 2},
        {"scale", [](ad::Tape& t, ad::Var x) { return t.scale(x, -1.7f); }, -2, 2},
        {"add_const", [](ad::Tape& t, ad::Var x) { return t.add_const(x, 0.3f); }, -2, 2},
        {"abs", [](ad::Tape& t, ad::Var x) { return t.abs_(x); }, 0.2, 2},
        {"rows_norm", [](ad::Tape& t, ad::Var x) { return t.rows_norm(x); }, 0.3, 2},
    };
    for (const auto& c : cases) {
        INFO(c.name);
        ad::Parameter p = random_param(c.name, 20, 17, c.lo, c.hi);
        const auto report = check_op(p, c.op, 5, 4);
        INFO("max rel error " << report.max_rel_error);
        CHECK(report.passed);
    }
}

TEST_CASE("binary kernels pass finite differences") {
    ad::Parameter a = random_param("a", 20, 21, 0.5, 1.5);
    ad::Parameter b = random_param("b", 20, 22, 0.5, 1.5);
    struct Case {
        const char* name;
        std::function<ad::Var(ad::Tape&, ad::Var, ad::Var)> op;
    };
    const std::vector<Case> cases = {
        {"add", [](ad::Tape& t, ad::Var x, ad::Var y) { return t.add(x, y); }},
        {"sub", [](ad::Tape& t, ad::Var x, ad::Var y) { return t.sub(x, y); }},
        {"mul", [](ad::Tape& t, ad::Var x, ad::Var y) { return t.mul(x, y); }},
        {"div", [](ad::Tape& t, ad::Var x, ad::Var y) { return t.div_(x, y); }},
    };
    for (const auto& c : cases) {
        INFO(c.name);
        auto loss = [&]() {
            ad::Tape tape;
            ad::Var x = tape.param(a, 5, 4);
            ad::Var y = tape.param(b, 5, 4);
            return double(tape.scalar(tape.reduce_sum(tape.square(c.op(tape, x, y)))));
        };
        a.zero_grad();
        b.zero_grad();
        {
            ad::Tape tape;
            ad::Var x = tape.param(a, 5, 4);
            ad::Var y = tape.param(b, 5, 4);
            tape.backward(tape.reduce_sum(tape.square(c.op(tape, x, y))));
        }
        const auto report = ad::finite_difference_check(loss, {&a, &b}, {a.grad, b.grad},
                                                        2.5e-3, 1e-3, 15, 5);
        INFO("max rel error " << report.max_rel_error);
        CHECK(report.passed);
    }
}

TEST_CASE("linear layer passes finite differences") {
    ad::Parameter W = random_param("W", 12, 31);
    ad::Parameter b = random_param("b", 3, 32);
    Rng rng = make_rng(33);
    std::vector<float> xv(8);
    for (auto& x : xv) x = float(uniform(rng, -1.0, 1.0));
    auto loss = [&]() {
        ad::Tape tape;
        ad::Var x = tape.input(2, 4, xv);
        return double(tape.scalar(tape.reduce_sum(tape.square(tape.linear(x, W, b)))));
    };
    W.zero_grad();
    b.zero_grad();
    {
        ad::Tape tape;
        ad::Var x = tape.input(2, 4, xv);
        tape.backward(tape.reduce_sum(tape.square(tape.linear(x, W, b))));
    }
    const auto report = ad::finite_difference_check(loss, {&W, &b}, {W.grad, b.grad},
                                                    2.5e-3, 1e-3, 20, 6);
    CHECK(report.passed);
}

TEST_CASE("gather_interpolate puts all weight on one corner") {
    ad::Parameter table = random_param("t", 8 * 2, 41);
    ad::Tape tape;
    std::vector<float> w = {0, 0, 0, 1, 0, 0, 0, 0};
    std::vector<std::uint32_t> rows = {0, 1, 2, 3, 4, 5, 6, 7};
    ad::Var y = tape.gather_interpolate(table, 2, rows, w, 8);
    const auto& yv = tape.node(y).v;
    CHECK(yv[0] == table.value[6]);
    CHECK(yv[1] == table.value[7]);
}

TEST_CASE("scatter accumulation sums contributions hitting the same row") {
    ad::Parameter table = random_param("t", 4 * 2, 43);
    ad::Tape tape;
    // two samples, both interpolating rows {0,1,...} with overlapping corners
    std::vector<float> w = {0.25f, 0.25f, 0.25f, 0.25f, 0.5f, 0.5f, 0, 0};
    std::vector<std::uint32_t> rows = {0, 1, 2, 3, 0, 1, 2, 3};
    ad::Var y = tape.gather_interpolate(table, 2, rows, w, 4);
    tape.backward(tape.reduce_sum(y));
    // row 0 receives 0.25 (sample 0) + 0.5 (sample 1) per feature
    CHECK(table.grad[0] == Catch::Approx(0.75).margin(1e-6));
    CHECK(table.grad[1] == Catch::Approx(0.75).margin(1e-6));
    // row 2 receives only sample 0's 0.25
    CHECK(table.grad[4] == Catch::Approx(0.25).margin(1e-6));
}

TEST_CASE("gather_interpolate passes finite differences") {
    ad::Parameter table = random_param("t", 16 * 2, 45);
    Rng rng = make_rng(46);
    const int n = 6;
    std::vector<float> w(n * 8);
    std::vector<std::uint32_t> rows(n * 8);
    for (int i = 0; i < n; ++i) {
        float sum = 0;
        for (int k = 0; k < 8; ++k) {
            w[i * 8 + k] = float(uniform(rng, 0.0, 1.0));
            sum += w[i * 8 + k];
            rows[i * 8 + k] = std::uint32_t(uniform_int(rng, 0, 15));
        }
        for (int k = 0; k < 8; ++k) w[i * 8 + k] /= sum;
    }
    auto loss = [&]() {
        ad::Tape tape;
        return double(tape.scalar(
            tape.reduce_sum(tape.square(tape.gather_interpolate(table, 2, rows, w, 8)))));
    };
    table.zero_grad();
    {
        ad::Tape tape;
        tape.backward(
            tape.reduce_sum(tape.square(tape.gather_interpolate(table, 2, rows, w, 8))));
    }
    const auto report =
        ad::finite_difference_check(loss, {&table}, {table.grad}, 2.5e-3, 1e-3, 25, 7);
    CHECK(report.passed);
}

TEST_CASE("alpha_to_weights matches the transmittance recurrence") {
    ad::Parameter alphas("a", {0.5f, 0.5f, 0.2f, 0.9f, 0.1f});
    std::vector<int> offsets = {0, 2, 5};
    ad::Tape tape;
    ad::Var a = tape.param(alphas, 5, 1);
    ad::Var w = tape.alpha_to_weights(a, offsets);
    const auto& wv = tape.node(w).v;
    CHECK(wv[0] == Catch::Approx(0.5).margin(1e-6));
    CHECK(wv[1] == Catch::Approx(0.25).margin(1e-6));
    CHECK(wv[2] == Catch::Approx(0.2).margin(1e-6));
    CHECK(wv[3] == Catch::Approx(0.8 * 0.9).margin(1e-6));
    CHECK(wv[4] == Catch::Approx(0.8 * 0.1 * 0.1).margin(1e-6));
}

TEST_CASE("alpha_to_weights and segment_sum pass finite differences") {
    ad::Parameter alphas = random_param("a", 12, 51, 0.05, 0.9);
    std::vector<int> offsets = {0, 4, 7, 12};
    auto loss = [&]() {
        ad::Tape tape;
        ad::Var a = tape.param(alphas, 12, 1);
        ad::Var w = tape.alpha_to_weights(a, offsets);
        ad::Var s = tape.segment_sum(tape.square(w), offsets);
        return double(tape.scalar(tape.reduce_sum(s)));
    };
    alphas.zero_grad();
    {
        ad::Tape tape;
        ad::Var a = tape.param(alphas, 12, 1);
        ad::Var w = tape.alpha_to_weights(a, offsets);
        tape.backward(tape.reduce_sum(tape.segment_sum(tape.square(w), offsets)));
    }
    const auto report =
        ad::finite_difference_check(loss, {&alphas}, {alphas.grad}, 2.5e-3, 1e-3, 12, 8);
    CHECK(report.passed);
}

TEST_CASE("normalize_rows passes finite differences away from zero") {
    ad::Parameter p = random_param("n", 12, 53, 0.4, 1.2);
    const auto report = check_op(
        p, [](ad::Tape& t, ad::Var x) { return t.normalize_rows(x, nullptr); }, 4, 3, 2.5e-3);
    CHECK(report.passed);
}

TEST_CASE("backward on an empty tape throws") {
    ad::Tape tape;
    CHECK_THROWS_AS(tape.backward(ad::Var{}), ad::EmptyTape);
}

TEST_CASE("backward is linear in the loss combination") {
    ad::Parameter p = random_param("p", 6, 55);
    auto grad_of = [&](float a, float b) {
        p.zero_grad();
        ad::Tape tape;
        ad::Var x = tape.param(p, 2, 3);
        ad::Var f = tape.reduce_sum(tape.square(x));
        ad::Var g = tape.reduce_sum(tape.sin_(x));
        tape.backward(tape.add(tape.scale(f, a), tape.scale(g, b)));
        return p.grad;
    };
    const auto gf = grad_of(1.f, 0.f);
    const auto gg = grad_of(0.f, 1.f);
    const auto gc = grad_of(2.f, 3.f);
    for (int i = 0; i < 6; ++i)
        CHECK(gc[i] == Catch::Approx(2.0 * gf[i] + 3.0 * gg[i]).margin(1e-5));
}

TEST_CASE("zero_grad produces exact zeros") {
    ad::Parameter p = random_param("p", 8, 57);
    ad::Tape tape;
    tape.backward(tape.reduce_sum(tape.param(p, 2, 4)));
    p.zero_grad();
    for (float g : p.grad) CHECK(g == 0.0f);
}

TEST_CASE("identical seeds replay bit-identical forward and gradients") {
    auto run = [](std::vector<float>& grad_out) {
        ad::Parameter p = random_param("p", 30, 61);
        ad::Tape tape;
        ad::Var x = tape.param(p, 10, 3);
        ad::Var y = tape.sigmoid(tape.mul(x, tape.sin_(x)));
        tape.backward(tape.mean_all(y));
        grad_out = p.grad;
        return tape.node(y).v;
    };
    std::vector<float> g1, g2;
    const auto v1 = run(g1);
    const auto v2 = run(g2);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}
