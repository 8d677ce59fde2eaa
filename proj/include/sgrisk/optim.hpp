#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sgrisk/tensor.hpp"

namespace sgrisk::num {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// How the per-epoch weight-decay rate is applied: as a multiplicative
// learning-rate schedule lr_epoch = lr * (1 - rate)^epoch, or as an L2
// penalty added to the gradients.
enum class DecayMode { LrSchedule, L2Penalty };

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
    DecayMode decay_mode = DecayMode::LrSchedule;
};

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<NamedParam> params, AdamConfig config);

    // Sets the epoch used by the LrSchedule decay mode.
    void set_epoch(std::size_t epoch);
    double effective_lr() const;

    // One Adam update from the parameters' accumulated gradients.
    // Throws TrainingError naming the parameter on a non-finite gradient.
    void step();
    void zero_grad();

    std::size_t step_count() const { return step_; }
    const std::vector<NamedParam>& params() const { return params_; }

private:
    std::vector<NamedParam> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t step_ = 0;
    std::size_t epoch_ = 0;
};

}  // namespace sgrisk::num
