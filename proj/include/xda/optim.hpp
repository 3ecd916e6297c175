#pragma once
// AdamW with decoupled weight decay and bias correction, plus the linear
// warmup schedule. Decay is applied to the parameters *before* the Adam
// delta each step; a single step from zero moments therefore reproduces the
// closed form p -= lr*wd*p; p -= lr * g / (|g| + eps).

#include <cmath>
#include <cstdint>

#include "xda/config.hpp"
#include "xda/model.hpp"

namespace xda {

template <class T>
class AdamW {
public:
    AdamW(const ModelConfig& cfg, const TrainPlan& plan)
        : m_(ModelParameters<T>::make(cfg)),
          v_(ModelParameters<T>::make(cfg)),
          beta1_(static_cast<T>(plan.beta1)),
          beta2_(static_cast<T>(plan.beta2)),
          eps_(static_cast<T>(plan.adam_eps)),
          wd_(static_cast<T>(plan.weight_decay)) {}

    void step(ModelParameters<T>& params, ModelParameters<T>& grads, double lr_in) {
        ++step_;
        const T lr = static_cast<T>(lr_in);
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(step_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(step_));
        auto ps = params.tensors();
        auto gs = grads.tensors();
        auto ms = m_.tensors();
        auto vs = v_.tensors();
        for (size_t i = 0; i < ps.size(); ++i) {
            T* p = ps[i].data;
            const T* g = gs[i].data;
            T* m = ms[i].data;
            T* v = vs[i].data;
            const Eigen::Index size = ps[i].size();
            for (Eigen::Index k = 0; k < size; ++k) {
                p[k] -= lr * wd_ * p[k]; // decoupled decay, before the update
                m[k] = beta1_ * m[k] + (T(1) - beta1_) * g[k];
                v[k] = beta2_ * v[k] + (T(1) - beta2_) * g[k] * g[k];
                const T mhat = m[k] / bc1;
                const T vhat = v[k] / bc2;
                p[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    uint64_t steps_taken() const { return step_; }
    ModelParameters<T>& moment1() { return m_; }
    ModelParameters<T>& moment2() { return v_; }
    void restore_step(uint64_t s) { step_ = s; }

private:
    ModelParameters<T> m_, v_;
    uint64_t step_ = 0;
    T beta1_, beta2_, eps_, wd_;
};

// Linear warmup from warmup_start to target across the first epoch's
// optimizer steps, constant target afterwards. `completed` counts optimizer
// steps already taken: the first step runs at exactly warmup_start and the
// step after `warmup_steps` completions runs at exactly the target.
struct Schedule {
    double warmup_start = 1e-7;
    double target = 1e-4;
    uint64_t warmup_steps = 1;

    double lr(uint64_t completed) const {
        if (completed >= warmup_steps) return target;
        const double f = static_cast<double>(completed) / static_cast<double>(warmup_steps);
        return warmup_start + (target - warmup_start) * f;
    }
};

} // namespace xda
