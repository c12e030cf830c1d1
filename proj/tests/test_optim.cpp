#include <catch2/catch_amalgamated.hpp>

#include "mmrf/optim.hpp"

#include <cmath>

using namespace mmrf;

TEST_CASE("learning rate schedule matches the closed form") {
    const std::int64_t T = 10000;
    const double peak = 1e-2;
    const ScheduleConfig sched;
    CHECK(lr_at(0, T, peak, sched) == Catch::Approx(0.01 * peak));
    CHECK(lr_at(T / 10, T, peak, sched) == Catch::Approx(peak));
    CHECK(lr_at(std::int64_t(0.6 * T), T, peak, sched) == Catch::Approx(peak * 0.33));
    CHECK(lr_at(std::int64_t(0.8 * T), T, peak, sched) == Catch::Approx(peak * 0.33 * 0.33));
    CHECK(lr_at(std::int64_t(0.95 * T), T, peak, sched) ==
          Catch::Approx(peak * 0.33 * 0.33 * 0.33));
}

TEST_CASE("schedule is continuous over the warmup and non-increasing after") {
    const std::int64_t T = 1000;
    double prev = lr_at(0, T, 1.0);
    for (std::int64_t i = 1; i <= T / 10; ++i) {
        const double lr = lr_at(i, T, 1.0);
        CHECK(std::abs(lr - prev) < 2.0 * 0.99 / (0.1 * T));  // linear ramp slope bound
        prev = lr;
    }
    for (std::int64_t i = T / 10; i <= T; ++i) {
        const double lr = lr_at(i, T, 1.0);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
}

TEST_CASE("optimizer step with zero gradients moves only by weight decay") {
    ad::Parameter decayed("w", {1.0f, -2.0f});
    ad::Parameter plain("t", {1.0f, -2.0f});
    AdamW opt;
    opt.add_group({"mlps", 1e-2, 1e-1, 1e-8}, {&decayed});
    opt.add_group({"tables", 1e-2, 0.0, 1e-15}, {&plain});
    opt.zero_grad();
    opt.step(1.0);
    CHECK(plain.value[0] == 1.0f);
    CHECK(plain.value[1] == -2.0f);
    CHECK(decayed.value[0] == Catch::Approx(1.0 - 1e-2 * 1e-1 * 1.0).margin(1e-7));
    CHECK(decayed.value[1] == Catch::Approx(-2.0 + 1e-2 * 1e-1 * 2.0).margin(1e-7));
}

TEST_CASE("adamw first step moves by approximately the learning rate") {
    ad::Parameter p("p", std::vector<float>{0.f});
    AdamW opt;
    opt.add_group({"g", 1e-2, 0.0, 1e-8}, {&p});
    p.grad[0] = 3.5f;  // any positive gradient: first step is lr * sign
    opt.step(1.0);
    CHECK(p.value[0] == Catch::Approx(-1e-2).margin(1e-6));
}

TEST_CASE("adamw minimizes a quadratic") {
    ad::Parameter p("p", std::vector<float>{4.f});
    AdamW opt;
    opt.add_group({"g", 0.1, 0.0, 1e-8}, {&p});
    for (int i = 0; i < 300; ++i) {
        p.zero_grad();
        p.grad[0] = 2.f * p.value[0];
        opt.step(1.0);
    }
    CHECK(std::abs(p.value[0]) < 1e-2);
}
