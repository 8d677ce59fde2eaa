#include "sgrisk/optim.hpp"

#include <cmath>

namespace sgrisk::num {

AdamOptimizer::AdamOptimizer(std::vector<NamedParam> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamOptimizer::set_epoch(std::size_t epoch) { epoch_ = epoch; }

double AdamOptimizer::effective_lr() const {
    if (config_.decay_mode == DecayMode::LrSchedule)
        return config_.lr * std::pow(1.0 - config_.weight_decay, static_cast<double>(epoch_));
    return config_.lr;
}

void AdamOptimizer::step() {
    ++step_;
    const double lr = effective_lr();
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        double* w = p.tensor.data();
        const std::vector<double>& g = p.tensor.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            double gi = g[i];
            if (!std::isfinite(gi))
                throw TrainingError("non-finite gradient in parameter '" + p.name + "' at entry " +
                                    std::to_string(i));
            if (config_.decay_mode == DecayMode::L2Penalty) gi += config_.weight_decay * w[i];
            m_[pi][i] = config_.beta1 * m_[pi][i] + (1.0 - config_.beta1) * gi;
            v_[pi][i] = config_.beta2 * v_[pi][i] + (1.0 - config_.beta2) * gi * gi;
            const double mhat = m_[pi][i] / bc1;
            const double vhat = v_[pi][i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace sgrisk::num
