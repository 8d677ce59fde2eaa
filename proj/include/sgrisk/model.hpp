#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgrisk/optim.hpp"
#include "sgrisk/scenegraph.hpp"
#include "sgrisk/tensor.hpp"

namespace sgrisk::model {

using num::Tensor;

enum class SpatialType { Mrgcn, Mlp };  // Mlp is the "no graph conv" ablation substitution
enum class PoolingVariant { None, TopkPool, SagPool };
enum class ReadoutMode { Sum, Mean, Max };
enum class TemporalMode { Mean, LstmLast, LstmAttn };

std::string spatial_name(SpatialType t);
SpatialType spatial_from_name(const std::string& s);
std::string pooling_name(PoolingVariant v);
PoolingVariant pooling_from_name(const std::string& s);
std::string readout_name(ReadoutMode m);
ReadoutMode readout_from_name(const std::string& s);
std::string temporal_name(TemporalMode m);
TemporalMode temporal_from_name(const std::string& s);

struct ModelConfig {
    SpatialType spatial = SpatialType::Mrgcn;
    std::vector<std::size_t> gcn_widths = {100, 100};  // MLP width = first entry
    PoolingVariant pooling = PoolingVariant::SagPool;
    double pool_ratio = 0.5;
    ReadoutMode readout = ReadoutMode::Sum;
    TemporalMode temporal = TemporalMode::LstmAttn;
    std::size_t lstm_hidden = 100;
    double dropout = 0.2;
};

void validate_config(const ModelConfig& c);
std::string config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const std::string& s);

// Scene graph lowered to the tensor form the layers consume: one-hot
// node features plus per-relation edge lists with 1/|N_r(v)| weights.
struct CompiledGraph {
    std::size_t n_nodes = 0;
    Tensor x0;  // n_nodes x |vocab|
    struct RelEdges {
        std::vector<std::size_t> src, dst;
        std::vector<double> inv_in_degree;  // per edge, of its destination
    };
    std::array<RelEdges, sg::kNumRelations> relations;
    std::vector<std::string> node_ids, node_kinds;
};

Tensor init_node_embeddings(const sg::SceneGraph& g, const std::vector<std::string>& vocab);
CompiledGraph compile_graph(const sg::SceneGraph& g, const std::vector<std::string>& vocab);

// A clip's frames merged into one block-diagonal graph, so the whole
// sequence runs through the spatial layers in a single pass.
struct CompiledClip {
    CompiledGraph merged;
    std::vector<std::size_t> offsets;  // node offset per frame + total, size n_frames + 1

    std::size_t n_frames() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};
CompiledClip compile_clip(const std::vector<CompiledGraph>& frames);

// One multi-relational graph convolution layer (self transform + one
// transform per relation, mean-normalized per destination and relation).
struct MrgcnLayer {
    Tensor phi0;
    std::vector<Tensor> phi;  // one per relation type
    Tensor bias;

    Tensor forward(const Tensor& x, const CompiledGraph& g) const;  // pre-activation
};

Tensor spatial_concat(const std::vector<Tensor>& per_layer);

struct PoolResult {
    Tensor x_pool;
    std::vector<std::size_t> selected;   // kept node indices, ascending
    std::vector<sg::GraphEdge> edges_pool;  // induced + relabeled
};

// k = ceil(pr * n); ties broken toward the lower node index.
std::vector<std::size_t> topk_indices(const std::vector<double>& alpha, double pr);
PoolResult topk_pool(const Tensor& x_prop, const CompiledGraph& g, const Tensor& alpha,
                     double pr);

Tensor readout(const Tensor& x_pool, ReadoutMode mode);

// Per-class negative log likelihood, weights indexed (safe, risky).
Tensor weighted_cross_entropy(const Tensor& y_hat, const std::array<double, 2>& y_onehot,
                              const std::array<double, 2>& class_weights);

struct FrameAttention {
    std::vector<std::string> node_ids, node_kinds;
    std::vector<double> alpha_raw, alpha_tanh;
    std::vector<bool> selected;
};

struct AttentionTrace {
    std::vector<FrameAttention> frames;
    std::vector<double> betas;  // sums to 1; uniform / one-hot for non-attn modes
};

class RiskModel {
public:
    RiskModel(ModelConfig config, std::vector<std::string> vocab, std::uint64_t init_seed);

    // Forward pass over a clip's graph sequence; returns the 2-class
    // probability row (safe, risky).  Dropout is applied only when
    // `training`; `rng` may be null in eval mode.
    Tensor forward_clip(const CompiledClip& clip, bool training, Rng* rng,
                        AttentionTrace* trace = nullptr) const;
    Tensor forward_clip(const std::vector<CompiledGraph>& graphs, bool training, Rng* rng,
                        AttentionTrace* trace = nullptr) const;
    Tensor forward_clip(const std::vector<sg::SceneGraph>& graphs, bool training, Rng* rng,
                        AttentionTrace* trace = nullptr) const;

    // Staged forward: forward_clip is exactly the composition of the
    // three stages below.  Exposing the stages lets callers that sweep
    // many parameter perturbations reuse upstream results when only a
    // later stage's parameters changed.
    struct EncoderStates {
        std::vector<Tensor> hidden;  // encoder hidden state after each frame
        Tensor cell;                 // final cell state
    };
    // Per-frame pooled embeddings as one n_frames x spatial_width matrix.
    Tensor encode_frames(const CompiledClip& clip, bool training, Rng* rng,
                         AttentionTrace* trace = nullptr) const;
    EncoderStates encode_temporal(const Tensor& x_all) const;
    Tensor decode_head(const EncoderStates& st, bool training, Rng* rng,
                       std::vector<double>* betas = nullptr) const;

    std::vector<num::NamedParam>& params() { return params_; }
    const std::vector<num::NamedParam>& params() const { return params_; }
    const ModelConfig& config() const { return config_; }
    const std::vector<std::string>& vocab() const { return vocab_; }
    std::size_t spatial_width() const { return spatial_width_; }

private:
    // Raw-buffer inference versions of the three stages, taken
    // automatically in eval mode under NoGrad; same math and kernels,
    // without the differentiation-tape bookkeeping.
    Tensor encode_frames_fast(const CompiledClip& clip, AttentionTrace* trace) const;
    EncoderStates encode_temporal_fast(const Tensor& x_all) const;
    Tensor decode_head_fast(const EncoderStates& st, std::vector<double>* betas) const;

    Tensor param(const std::string& name, num::Shape shape, double limit, Rng& rng);

    struct Gate {
        Tensor wx, wh, b;
    };
    struct Cell {
        Gate in, forget, cand, out;
    };
    MrgcnLayer make_gcn(const std::string& prefix, std::size_t d_in, std::size_t d_out,
                        Rng& rng);
    Cell make_cell(const std::string& prefix, std::size_t d_in, std::size_t hidden, Rng& rng);
    static void cell_step(const Cell& cell, const Tensor& x, Tensor& p, Tensor& c);

    ModelConfig config_;
    std::vector<std::string> vocab_;
    std::size_t spatial_width_ = 0;
    std::vector<num::NamedParam> params_;

    std::vector<MrgcnLayer> gcn_;
    Tensor mlp_w_, mlp_b_;
    Tensor pool_w_;
    MrgcnLayer pool_gcn_;
    Cell enc_, dec_;
    Tensor attn_winit_, attn_ws_, attn_wp_, attn_v_;
    Tensor head_w1_, head_b1_, head_w2_, head_b2_;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double val_loss = 0.0;
};

void save_checkpoint(const std::string& path, const RiskModel& model, const CheckpointMeta& meta);
struct Checkpoint {
    RiskModel model;
    CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sgrisk::model
