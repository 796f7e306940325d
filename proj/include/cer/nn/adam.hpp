#pragma once

#include "cer/nn/tensor.hpp"

#include <cmath>
#include <vector>

namespace cer::nn {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias-corrected moments, matching the common reference formulation.
template <typename Scalar>
class Adam {
public:
    Adam(ParameterList<Scalar> params, AdamOptions opts) : opts_(opts) {
        for (auto& p : params)
            if (p.trainable) {
                params_.push_back(p.param);
                m_.push_back(Vec<Scalar>::Zero(p.param->numel()));
                v_.push_back(Vec<Scalar>::Zero(p.param->numel()));
            }
    }

    void step() {
        ++t_;
        const double bc1 = 1 - std::pow(opts_.beta1, double(t_));
        const double bc2 = 1 - std::pow(opts_.beta2, double(t_));
        const Scalar b1(opts_.beta1), b2(opts_.beta2);
        const Scalar step_size(opts_.lr / bc1);
        const Scalar sqrt_bc2(std::sqrt(bc2));
        const Scalar eps(opts_.eps);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& g = params_[i]->grad;
            m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
            v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
            params_[i]->value.array() -=
                step_size * m_[i].array() / (v_[i].array().sqrt() / sqrt_bc2 + eps);
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->grad.setZero();
    }

    long steps() const { return t_; }

private:
    AdamOptions opts_;
    std::vector<Parameter<Scalar>*> params_;
    std::vector<Vec<Scalar>> m_, v_;
    long t_ = 0;
};

}  // namespace cer::nn
