#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgrisk/clipio.hpp"
#include "sgrisk/model.hpp"
#include "sgrisk/optim.hpp"

namespace sgrisk::pipe {

struct ExperimentConfig {
    double split_ratio = 0.7;
    double val_fraction = 0.15;  // stratified carve-out from the training side
    std::size_t n_splits = 10;
    std::size_t batch_size = 16;
    std::size_t epochs = 200;
    double learning_rate = 5e-5;
    double weight_decay = 5e-4;
    num::DecayMode decay_mode = num::DecayMode::LrSchedule;
    std::uint64_t seed = 7;
    model::ModelConfig model;
    sg::BuilderConfig graph;
};

void validate_experiment(const ExperimentConfig& c);
std::string experiment_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const std::string& s);

struct SplitPlan {
    std::vector<std::size_t> train, val, test;  // indices into the dataset
};

// Per-class shuffle then proportional cut (largest remainder), so each
// side's class ratio matches the dataset within one clip.
SplitPlan stratified_split(const std::vector<sg::GraphClip>& data, double ratio,
                           double val_fraction, std::uint64_t seed);

struct EpochLog {
    std::size_t epoch;
    double train_loss, val_loss, lr;
};

struct TrainResult {
    model::RiskModel model;
    model::CheckpointMeta meta;  // epoch/val_loss of the selected checkpoint
    std::vector<EpochLog> log;
    std::array<double, 2> class_weights;
};

TrainResult train(const ExperimentConfig& config, const std::vector<sg::GraphClip>& data,
                  const SplitPlan& plan, std::uint64_t seed);

struct EvalResult {
    double accuracy = 0.0;
    std::optional<double> auc;  // absent for single-class test sets
    std::array<std::array<std::size_t, 2>, 2> confusion{};  // [true][pred], 0=safe 1=risky
    std::vector<double> risky_scores, safe_scores;  // model P(risky) per clip, by true class
};

EvalResult evaluate(const model::RiskModel& m, const std::vector<sg::GraphClip>& data,
                    const std::vector<std::size_t>& subset);

// Mann-Whitney rank-statistic AUC; ties contribute one half.
double auc_rank(const std::vector<double>& risky_scores, const std::vector<double>& safe_scores);

struct SplitScore {
    double accuracy = 0.0;
    std::optional<double> auc;
    double val_loss = 0.0;
    std::size_t epoch_selected = 0;
};

struct MetricsReport {
    std::vector<SplitScore> splits;
    std::string config_fingerprint;

    double mean_accuracy() const;
    double std_accuracy() const;  // population
    std::optional<double> mean_auc() const;
    std::optional<double> std_auc() const;
};

MetricsReport cross_validate(const ExperimentConfig& config,
                             const std::vector<sg::GraphClip>& data, std::size_t jobs = 1);

struct TransferReport {
    EvalResult in_domain, shifted;
    double accuracy_drop = 0.0;  // in-domain minus shifted
};

// Evaluates an already-trained model on a shifted dataset, no retraining.
// Throws ConfigError when dataset B uses node kinds outside the model's
// vocabulary.
TransferReport transfer_evaluate(const model::RiskModel& m,
                                 const std::vector<sg::GraphClip>& in_domain,
                                 const std::vector<std::size_t>& in_domain_subset,
                                 const std::vector<sg::GraphClip>& shifted);

struct AblationAxes {
    std::vector<std::string> spatial;   // "none", "1", "2", "3"
    std::vector<std::string> pooling;   // "none", "topk", "sag"
    std::vector<std::string> temporal;  // "mean", "lstm_last", "lstm_attn"
};

struct AblationCell {
    std::string label;
    std::string spatial, pooling, temporal;
    MetricsReport report;
};

// Cartesian sweep in declared axis order; empty axes pin the base value.
std::vector<AblationCell> ablation_sweep(const ExperimentConfig& base, const AblationAxes& axes,
                                         const std::vector<sg::GraphClip>& data,
                                         std::size_t jobs = 1);

// ---- report files ----------------------------------------------------

std::string metrics_csv(const MetricsReport& report);
std::string metrics_summary_json(const MetricsReport& report, const ExperimentConfig& config);
std::string ablation_csv(const std::vector<AblationCell>& cells);
std::string training_log_jsonl(const std::vector<EpochLog>& log);

}  // namespace sgrisk::pipe
