#pragma once

#include "mmrf/autodiff.hpp"
#include "mmrf/core.hpp"

#include <cmath>
#include <string>
#include <vector>

// AdamW with decoupled weight decay and the warmup + piecewise decay
// learning-rate schedule.

namespace mmrf {

struct OptimGroupConfig {
    std::string name;
    double peak_lr = 1e-3;
    double weight_decay = 0.0;
    double eps = 1e-8;
};

struct ScheduleConfig {
    double warmup_fraction = 0.10;
    std::vector<double> decay_points = {0.50, 0.75, 0.90};
    double decay_factor = 0.33;
};

// Linear ramp from 0.01*peak to peak over the warmup, then piecewise
// constant with one decay factor applied at each crossed decay point.
inline double lr_at(std::int64_t iter, std::int64_t total_iters, double peak_lr,
                    const ScheduleConfig& sched = {}) {
    const double f = total_iters > 0 ? double(iter) / double(total_iters) : 1.0;
    if (f < sched.warmup_fraction) {
        const double u = f / sched.warmup_fraction;
        return peak_lr * (0.01 + 0.99 * u);
    }
    double lr = peak_lr;
    for (double p : sched.decay_points)
        if (f >= p) lr *= sched.decay_factor;
    return lr;
}

class AdamW {
  public:
    struct Group {
        OptimGroupConfig config;
        std::vector<ad::Parameter*> params;
        std::vector<std::vector<float>> m, v;
    };

    AdamW(double beta1 = 0.9, double beta2 = 0.99) : beta1_(beta1), beta2_(beta2) {}

    void add_group(const OptimGroupConfig& cfg, std::vector<ad::Parameter*> params) {
        Group g;
        g.config = cfg;
        g.params = std::move(params);
        for (auto* p : g.params) {
            g.m.emplace_back(p->size(), 0.f);
            g.v.emplace_back(p->size(), 0.f);
        }
        groups_.push_back(std::move(g));
    }

    void zero_grad() {
        for (auto& g : groups_)
            for (auto* p : g.params) p->zero_grad();
    }

    // lr_scale multiplies each group's peak LR (the schedule value divided
    // by the peak, typically).
    void step(double lr_scale = 1.0) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (auto& g : groups_) {
            const double lr = g.config.peak_lr * lr_scale;
            for (std::size_t pi = 0; pi < g.params.size(); ++pi) {
                ad::Parameter& p = *g.params[pi];
                auto& m = g.m[pi];
                auto& v = g.v[pi];
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double grad = p.grad[i];
                    m[i] = float(beta1_ * m[i] + (1.0 - beta1_) * grad);
                    v[i] = float(beta2_ * v[i] + (1.0 - beta2_) * grad * grad);
                    const double mh = m[i] / bc1;
                    const double vh = v[i] / bc2;
                    double upd = lr * mh / (std::sqrt(vh) + g.config.eps);
                    if (g.config.weight_decay > 0)
                        upd += lr * g.config.weight_decay * p.value[i];
                    p.value[i] = float(p.value[i] - upd);
                }
            }
        }
    }

    const std::vector<Group>& groups() const { return groups_; }
    std::int64_t steps_taken() const { return t_; }

  private:
    double beta1_, beta2_;
    std::int64_t t_ = 0;
    std::vector<Group> groups_;
};

}  // namespace mmrf
