#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tact/tensor.hpp"

namespace tact {

// A parameter set is an ordered list of named tensors owned elsewhere
// (models keep their tensors; the optimizer only sees pointers).
struct ParamRef {
    std::string name;
    Tensor* tensor = nullptr;
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
//   p <- p - lr * ( mhat / (sqrt(vhat) + eps) + wd * p )
// Moments are keyed by position; shapes are validated on every step.
class AdamW {
public:
    struct Options {
        float lr = 1e-3f;
        float beta1 = 0.9f;
        float beta2 = 0.999f;
        float eps = 1e-8f;
        float weight_decay = 0.0f;
    };

    AdamW() : opt_(Options()) {}
    explicit AdamW(Options opt) : opt_(opt) {}

    const Options& options() const { return opt_; }
    void set_lr(float lr) { opt_.lr = lr; }
    std::int64_t step_count() const { return step_; }

    void step(std::vector<ParamRef>& params, const std::vector<const Tensor*>& grads) {
        check(params.size() == grads.size(), "AdamW::step: gradient map does not match parameters");
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.tensor->shape);
                v_.emplace_back(p.tensor->shape);
            }
        }
        check(m_.size() == params.size(), "AdamW::step: parameter count changed mid-run");
        ++step_;
        const double bc1 = 1.0 - std::pow(double(opt_.beta1), double(step_));
        const double bc2 = 1.0 - std::pow(double(opt_.beta2), double(step_));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor& p = *params[pi].tensor;
            const Tensor& g = *grads[pi];
            check(p.same_shape(g), "AdamW::step: shape mismatch for '" + params[pi].name + "'");
            check(p.same_shape(m_[pi]), "AdamW::step: moment shape mismatch for '" + params[pi].name + "'");
            float* pd = p.data.data();
            const float* gd = g.data.data();
            float* md = m_[pi].data.data();
            float* vd = v_[pi].data.data();
            const float lr = opt_.lr;
            for (std::size_t i = 0; i < p.size(); ++i) {
                md[i] = opt_.beta1 * md[i] + (1.0f - opt_.beta1) * gd[i];
                vd[i] = opt_.beta2 * vd[i] + (1.0f - opt_.beta2) * gd[i] * gd[i];
                const float mhat = md[i] / float(bc1);
                const float vhat = vd[i] / float(bc2);
                pd[i] -= lr * (mhat / (std::sqrt(vhat) + opt_.eps) + opt_.weight_decay * pd[i]);
            }
        }
    }

private:
    Options opt_;
    std::int64_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace tact
