#include "sgrisk/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace sgrisk::model {

using nlohmann::json;
using namespace sgrisk::num;

std::string spatial_name(SpatialType t) { return t == SpatialType::Mrgcn ? "mrgcn" : "mlp"; }

SpatialType spatial_from_name(const std::string& s) {
    if (s == "mrgcn") return SpatialType::Mrgcn;
    if (s == "mlp") return SpatialType::Mlp;
    throw ConfigError("unknown spatial type '" + s + "'");
}

std::string pooling_name(PoolingVariant v) {
    switch (v) {
        case PoolingVariant::None: return "none";
        case PoolingVariant::TopkPool: return "topk";
        case PoolingVariant::SagPool: return "sag";
    }
    throw ConfigError("bad pooling variant");
}

PoolingVariant pooling_from_name(const std::string& s) {
    if (s == "none") return PoolingVariant::None;
    if (s == "topk") return PoolingVariant::TopkPool;
    if (s == "sag") return PoolingVariant::SagPool;
    throw ConfigError("unknown pooling variant '" + s + "'");
}

std::string readout_name(ReadoutMode m) {
    switch (m) {
        case ReadoutMode::Sum: return "sum";
        case ReadoutMode::Mean: return "mean";
        case ReadoutMode::Max: return "max";
    }
    throw ConfigError("bad readout mode");
}

ReadoutMode readout_from_name(const std::string& s) {
    if (s == "sum") return ReadoutMode::Sum;
    if (s == "mean") return ReadoutMode::Mean;
    if (s == "max") return ReadoutMode::Max;
    throw ConfigError("unknown readout mode '" + s + "'");
}

std::string temporal_name(TemporalMode m) {
    switch (m) {
        case TemporalMode::Mean: return "mean";
        case TemporalMode::LstmLast: return "lstm_last";
        case TemporalMode::LstmAttn: return "lstm_attn";
    }
    throw ConfigError("bad temporal mode");
}

TemporalMode temporal_from_name(const std::string& s) {
    if (s == "mean") return TemporalMode::Mean;
    if (s == "lstm_last") return TemporalMode::LstmLast;
    if (s == "lstm_attn") return TemporalMode::LstmAttn;
    throw ConfigError("unknown temporal mode '" + s + "'");
}

void validate_config(const ModelConfig& c) {
    if (c.pool_ratio <= 0.0 || c.pool_ratio > 1.0)
        throw ConfigError("pool_ratio must be in (0, 1]");
    if (c.spatial == SpatialType::Mlp && c.gcn_widths.empty())
        throw ConfigError("mlp spatial type needs a width");
    if (c.gcn_widths.size() > 3)
        throw ConfigError("at most 3 graph convolution layers are supported");
    for (auto w : c.gcn_widths)
        if (w == 0) throw ConfigError("layer width must be positive");
    if (c.lstm_hidden == 0) throw ConfigError("lstm_hidden must be positive");
    if (c.dropout < 0.0 || c.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

namespace {

json config_json(const ModelConfig& c) {
    json j;
    j["spatial"] = spatial_name(c.spatial);
    j["gcn_widths"] = c.gcn_widths;
    j["pooling"] = pooling_name(c.pooling);
    j["pool_ratio"] = c.pool_ratio;
    j["readout"] = readout_name(c.readout);
    j["temporal"] = temporal_name(c.temporal);
    j["lstm_hidden"] = c.lstm_hidden;
    j["dropout"] = c.dropout;
    return j;
}

ModelConfig config_parse(const json& j) {
    static const std::vector<std::string> known = {"spatial",  "gcn_widths", "pooling",
                                                   "pool_ratio", "readout",  "temporal",
                                                   "lstm_hidden", "dropout"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown model config key '" + key + "'");
    ModelConfig c;
    if (j.contains("spatial")) c.spatial = spatial_from_name(j.at("spatial").get<std::string>());
    if (j.contains("gcn_widths")) c.gcn_widths = j.at("gcn_widths").get<std::vector<std::size_t>>();
    if (j.contains("pooling")) c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
    if (j.contains("pool_ratio")) c.pool_ratio = j.at("pool_ratio").get<double>();
    if (j.contains("readout")) c.readout = readout_from_name(j.at("readout").get<std::string>());
    if (j.contains("temporal")) c.temporal = temporal_from_name(j.at("temporal").get<std::string>());
    if (j.contains("lstm_hidden")) c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    validate_config(c);
    return c;
}

double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

std::string config_to_json(const ModelConfig& c) { return config_json(c).dump(); }

ModelConfig config_from_json(const std::string& s) { return config_parse(json::parse(s)); }

Tensor init_node_embeddings(const sg::SceneGraph& g, const std::vector<std::string>& vocab) {
    const std::size_t d0 = vocab.size();
    Tensor x = Tensor::zeros({g.nodes.size(), d0});
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        const auto it = std::find(vocab.begin(), vocab.end(), g.nodes[v].kind);
        if (it == vocab.end())
            throw DataError("node kind '" + g.nodes[v].kind + "' not in model vocabulary");
        x.data()[v * d0 + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
    }
    return x;
}

CompiledGraph compile_graph(const sg::SceneGraph& g, const std::vector<std::string>& vocab) {
    CompiledGraph cg;
    cg.n_nodes = g.nodes.size();
    cg.x0 = init_node_embeddings(g, vocab);
    for (const auto& n : g.nodes) {
        cg.node_ids.push_back(n.id);
        cg.node_kinds.push_back(n.kind);
    }
    for (const auto& e : g.edges) {
        if (e.src >= cg.n_nodes || e.dst >= cg.n_nodes)
            throw DataError("edge index out of range in scene graph");
        auto& rel = cg.relations[static_cast<std::size_t>(e.relation)];
        rel.src.push_back(e.src);
        rel.dst.push_back(e.dst);
    }
    for (auto& rel : cg.relations) {
        std::vector<std::size_t> in_degree(cg.n_nodes, 0);
        for (auto d : rel.dst) ++in_degree[d];
        rel.inv_in_degree.reserve(rel.dst.size());
        for (auto d : rel.dst)
            rel.inv_in_degree.push_back(1.0 / static_cast<double>(in_degree[d]));
    }
    return cg;
}

CompiledClip compile_clip(const std::vector<CompiledGraph>& frames) {
    if (frames.empty()) throw DataError("forward over empty graph sequence");
    CompiledClip clip;
    clip.offsets.push_back(0);
    std::size_t total = 0;
    for (const auto& f : frames) {
        if (f.n_nodes == 0) throw DataError("clip frame with zero nodes");
        total += f.n_nodes;
        clip.offsets.push_back(total);
    }
    CompiledGraph& m = clip.merged;
    m.n_nodes = total;
    const std::size_t d0 = frames[0].x0.cols();
    Tensor x0 = Tensor::zeros({total, d0});
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto& f = frames[t];
        if (f.x0.cols() != d0) throw DataError("clip frames use different vocabularies");
        const std::size_t off = clip.offsets[t];
        std::copy(f.x0.data(), f.x0.data() + f.x0.numel(), x0.data() + off * d0);
        m.node_ids.insert(m.node_ids.end(), f.node_ids.begin(), f.node_ids.end());
        m.node_kinds.insert(m.node_kinds.end(), f.node_kinds.begin(), f.node_kinds.end());
        for (std::size_t r = 0; r < sg::kNumRelations; ++r) {
            const auto& rel = f.relations[r];
            auto& mrel = m.relations[r];
            for (std::size_t e = 0; e < rel.src.size(); ++e) {
                mrel.src.push_back(rel.src[e] + off);
                mrel.dst.push_back(rel.dst[e] + off);
            }
            mrel.inv_in_degree.insert(mrel.inv_in_degree.end(), rel.inv_in_degree.begin(),
                                      rel.inv_in_degree.end());
        }
    }
    m.x0 = x0;
    return clip;
}

Tensor MrgcnLayer::forward(const Tensor& x, const CompiledGraph& g) const {
    if (x.cols() != phi0.rows())
        throw ShapeError("graph layer expects width " + std::to_string(phi0.rows()) + ", got " +
                         std::to_string(x.cols()));
    Tensor out = matmul(x, phi0);
    if (bias.defined()) out = add(out, bias);
    for (std::size_t r = 0; r < sg::kNumRelations; ++r) {
        const auto& rel = g.relations[r];
        if (rel.src.empty()) continue;
        // Transform-then-gather when most nodes send messages, otherwise
        // gather-then-transform so the matmul only touches edge rows.
        Tensor msgs = rel.src.size() < g.n_nodes
                          ? matmul(index_select(x, rel.src), phi[r])
                          : index_select(matmul(x, phi[r]), rel.src);
        msgs = row_scale(msgs, rel.inv_in_degree);
        out = add(out, scatter_add(msgs, rel.dst, g.n_nodes));
    }
    return out;
}

Tensor spatial_concat(const std::vector<Tensor>& per_layer) {
    if (per_layer.empty()) throw UsageError("spatial_concat of zero layers");
    const std::size_t n = per_layer[0].rows();
    for (const auto& t : per_layer)
        if (t.rows() != n)
            throw ShapeError("spatial_concat node count mismatch: " + std::to_string(n) +
                             " vs " + std::to_string(t.rows()));
    if (per_layer.size() == 1) return per_layer[0];
    return concat(per_layer, 1);
}

std::vector<std::size_t> topk_indices(const std::vector<double>& alpha, double pr) {
    if (pr <= 0.0 || pr > 1.0) throw ConfigError("pool ratio must be in (0, 1]");
    const std::size_t n = alpha.size();
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(pr * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&alpha](std::size_t a, std::size_t b) {
        if (alpha[a] != alpha[b]) return alpha[a] > alpha[b];
        return a < b;
    });
    order.resize(std::max<std::size_t>(k, 1));
    std::sort(order.begin(), order.end());
    return order;
}

PoolResult topk_pool(const Tensor& x_prop, const CompiledGraph& g, const Tensor& alpha,
                     double pr) {
    if (alpha.numel() != x_prop.rows())
        throw ShapeError("pooling scores count " + std::to_string(alpha.numel()) +
                         " does not match node count " + std::to_string(x_prop.rows()));
    PoolResult res;
    res.selected = topk_indices(alpha.values(), pr);
    const Tensor alpha_col =
        alpha.rank() == 2 ? alpha : reshape(alpha, {alpha.numel(), 1});
    const Tensor gated = mul(x_prop, num::tanh(alpha_col));
    res.x_pool = index_select(gated, res.selected);
    std::vector<std::size_t> relabel(g.n_nodes, g.n_nodes);
    for (std::size_t i = 0; i < res.selected.size(); ++i) relabel[res.selected[i]] = i;
    for (std::size_t r = 0; r < sg::kNumRelations; ++r) {
        const auto& rel = g.relations[r];
        for (std::size_t e = 0; e < rel.src.size(); ++e)
            if (relabel[rel.src[e]] < g.n_nodes && relabel[rel.dst[e]] < g.n_nodes)
                res.edges_pool.push_back({relabel[rel.src[e]], relabel[rel.dst[e]],
                                          static_cast<sg::RelationType>(r)});
    }
    return res;
}

Tensor readout(const Tensor& x_pool, ReadoutMode mode) {
    if (x_pool.rows() == 0) throw DomainError("readout over zero nodes");
    switch (mode) {
        case ReadoutMode::Sum: return reduce_sum(x_pool, 0);
        case ReadoutMode::Mean: return reduce_mean(x_pool, 0);
        case ReadoutMode::Max: return reduce_max(x_pool, 0);
    }
    throw ConfigError("bad readout mode");
}

Tensor weighted_cross_entropy(const Tensor& y_hat, const std::array<double, 2>& y_onehot,
                              const std::array<double, 2>& class_weights) {
    if (y_hat.numel() != 2)
        throw ShapeError("expected 2 class probabilities, got shape " +
                         shape_str(y_hat.shape()));
    const bool one_hot = (y_onehot[0] == 1.0 && y_onehot[1] == 0.0) ||
                         (y_onehot[0] == 0.0 && y_onehot[1] == 1.0);
    if (!one_hot) throw DataError("label is not one-hot");
    const std::size_t cls = y_onehot[1] == 1.0 ? 1 : 0;
    const Tensor mask = Tensor::matrix(1, 2, {y_onehot[0], y_onehot[1]});
    const Tensor flat = y_hat.rank() == 2 ? y_hat : reshape(y_hat, {1, 2});
    const Tensor p_true = reduce_sum(mul(flat, mask));
    return neg(mul(num::log(clamp_min(p_true, 1e-12)), Tensor::scalar(class_weights[cls])));
}

// ---- RiskModel -------------------------------------------------------

Tensor RiskModel::param(const std::string& name, Shape shape, double limit, Rng& rng) {
    Tensor t = limit == 0.0 ? Tensor::zeros(shape, true)
                            : Tensor::uniform(shape, limit, rng, true);
    params_.push_back({name, t});
    return t;
}

MrgcnLayer RiskModel::make_gcn(const std::string& prefix, std::size_t d_in, std::size_t d_out,
                               Rng& rng) {
    MrgcnLayer layer;
    const double lim = xavier_limit(d_in, d_out);
    layer.phi0 = param(prefix + ".phi0", {d_in, d_out}, lim, rng);
    for (std::size_t r = 0; r < sg::kNumRelations; ++r)
        layer.phi.push_back(
            param(prefix + ".rel_" + sg::relation_name(static_cast<sg::RelationType>(r)),
                  {d_in, d_out}, lim, rng));
    layer.bias = param(prefix + ".bias", {d_out}, 0.0, rng);
    return layer;
}

RiskModel::Cell RiskModel::make_cell(const std::string& prefix, std::size_t d_in,
                                     std::size_t hidden, Rng& rng) {
    Cell cell;
    const double lim_x = xavier_limit(d_in, hidden);
    const double lim_h = xavier_limit(hidden, hidden);
    auto gate = [&](const char* g, double forget_bias) {
        Gate gt;
        gt.wx = param(prefix + "." + g + ".wx", {d_in, hidden}, lim_x, rng);
        gt.wh = param(prefix + "." + g + ".wh", {hidden, hidden}, lim_h, rng);
        gt.b = param(prefix + "." + g + ".b", {hidden}, 0.0, rng);
        if (forget_bias != 0.0)
            for (std::size_t i = 0; i < hidden; ++i) gt.b.data()[i] = forget_bias;
        return gt;
    };
    cell.in = gate("i", 0.0);
    cell.forget = gate("f", 1.0);  // open forget gate at init
    cell.cand = gate("g", 0.0);
    cell.out = gate("o", 0.0);
    return cell;
}

RiskModel::RiskModel(ModelConfig config, std::vector<std::string> vocab,
                     std::uint64_t init_seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
    validate_config(config_);
    if (vocab_.empty()) throw ConfigError("empty node-kind vocabulary");
    Rng rng(derive_seed(init_seed, 0xF00D));
    const std::size_t d0 = vocab_.size();

    if (config_.spatial == SpatialType::Mrgcn) {
        std::size_t d_in = d0;
        spatial_width_ = d0;
        for (std::size_t l = 0; l < config_.gcn_widths.size(); ++l) {
            const std::size_t d_out = config_.gcn_widths[l];
            gcn_.push_back(make_gcn("gcn" + std::to_string(l), d_in, d_out, rng));
            spatial_width_ += d_out;
            d_in = d_out;
        }
    } else {
        const std::size_t width = config_.gcn_widths[0];
        mlp_w_ = param("spatial_mlp.w", {d0, width}, xavier_limit(d0, width), rng);
        mlp_b_ = param("spatial_mlp.b", {width}, 0.0, rng);
        spatial_width_ = width;
    }

    if (config_.pooling == PoolingVariant::TopkPool) {
        pool_w_ = param("pool.w", {spatial_width_, 1}, xavier_limit(spatial_width_, 1), rng);
    } else if (config_.pooling == PoolingVariant::SagPool) {
        pool_gcn_ = make_gcn("pool.gcn", spatial_width_, 1, rng);
    }

    enc_ = make_cell("enc", spatial_width_, config_.lstm_hidden, rng);
    if (config_.temporal == TemporalMode::LstmAttn) {
        const std::size_t h = config_.lstm_hidden;
        const double lim = xavier_limit(h, h);
        attn_winit_ = param("attn.w_init", {h, h}, lim, rng);
        attn_ws_ = param("attn.w_s", {h, h}, lim, rng);
        attn_wp_ = param("attn.w_p", {h, h}, lim, rng);
        attn_v_ = param("attn.v", {h, 1}, xavier_limit(h, 1), rng);
        dec_ = make_cell("dec", h, h, rng);
    }

    const std::size_t z = config_.lstm_hidden;
    head_w1_ = param("head.w1", {z, z}, xavier_limit(z, z), rng);
    head_b1_ = param("head.b1", {z}, 0.0, rng);
    head_w2_ = param("head.w2", {z, 2}, xavier_limit(z, 2), rng);
    head_b2_ = param("head.b2", {2}, 0.0, rng);
}

void RiskModel::cell_step(const Cell& cell, const Tensor& x, Tensor& p, Tensor& c) {
    auto pre = [&](const Gate& g) {
        return add(add(matmul(x, g.wx), matmul(p, g.wh)), g.b);
    };
    const Tensor i = sigmoid(pre(cell.in));
    const Tensor f = sigmoid(pre(cell.forget));
    const Tensor g = num::tanh(pre(cell.cand));
    const Tensor o = sigmoid(pre(cell.out));
    c = add(mul(f, c), mul(i, g));
    p = mul(o, num::tanh(c));
}

namespace {

// One multi-relational convolution on plain buffers; out = x * phi0
// (+ bias) + normalized relation messages, matching MrgcnLayer::forward.
void mrgcn_layer_raw(const MrgcnLayer& layer, const double* x, std::size_t n, std::size_t din,
                     std::size_t dout, const CompiledGraph& g, double* out,
                     std::vector<double>& scratch) {
    num::matmul_raw(x, layer.phi0.data(), out, n, din, dout, false);
    if (layer.bias.defined()) {
        const double* b = layer.bias.data();
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < dout; ++j) out[v * dout + j] += b[j];
    }
    for (std::size_t r = 0; r < sg::kNumRelations; ++r) {
        const auto& rel = g.relations[r];
        if (rel.src.empty()) continue;
        const std::size_t ne = rel.src.size();
        scratch.resize(ne * (din + dout));
        double* rows = scratch.data();
        double* msgs = scratch.data() + ne * din;
        for (std::size_t e = 0; e < ne; ++e)
            std::copy(x + rel.src[e] * din, x + (rel.src[e] + 1) * din, rows + e * din);
        num::matmul_raw(rows, layer.phi[r].data(), msgs, ne, din, dout, false);
        for (std::size_t e = 0; e < ne; ++e) {
            const double w = rel.inv_in_degree[e];
            const double* m = msgs + e * dout;
            double* dst = out + rel.dst[e] * dout;
            for (std::size_t j = 0; j < dout; ++j) dst[j] += w * m[j];
        }
    }
}

inline double sigmoid_s(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor RiskModel::encode_frames_fast(const CompiledClip& clip, AttentionTrace* trace) const {
    const std::size_t T = clip.n_frames();
    if (T == 0) throw DataError("forward over empty graph sequence");
    const CompiledGraph& g = clip.merged;
    const std::size_t n = g.n_nodes;
    const std::size_t W = spatial_width_;
    const std::size_t d0 = vocab_.size();
    std::vector<double> x_prop(n * W);
    std::vector<double> scratch;
    if (config_.spatial == SpatialType::Mrgcn) {
        const double* x0 = g.x0.data();
        for (std::size_t v = 0; v < n; ++v)
            std::copy(x0 + v * d0, x0 + (v + 1) * d0, x_prop.data() + v * W);
        std::vector<double> cur(x0, x0 + n * d0), next;
        std::size_t din = d0, col = d0;
        for (const auto& layer : gcn_) {
            const std::size_t dout = layer.phi0.cols();
            next.resize(n * dout);
            mrgcn_layer_raw(layer, cur.data(), n, din, dout, g, next.data(), scratch);
            for (auto& v : next) v = v > 0.0 ? v : 0.0;
            for (std::size_t v = 0; v < n; ++v)
                std::copy(next.begin() + v * dout, next.begin() + (v + 1) * dout,
                          x_prop.begin() + v * W + col);
            cur.swap(next);
            din = dout;
            col += dout;
        }
    } else {
        num::matmul_raw(g.x0.data(), mlp_w_.data(), x_prop.data(), n, d0, W, false);
        const double* b = mlp_b_.data();
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < W; ++j) {
                double& o = x_prop[v * W + j];
                o += b[j];
                if (o < 0.0) o = 0.0;
            }
    }

    std::vector<double> alpha;
    std::vector<std::size_t> sel_all;
    std::vector<std::size_t> frame_of;
    std::vector<double> gated;  // selected, gated rows when pooling is on
    if (config_.pooling != PoolingVariant::None) {
        alpha.resize(n);
        if (config_.pooling == PoolingVariant::TopkPool) {
            const double* wv = pool_w_.data();
            double norm2 = 0.0;
            for (std::size_t j = 0; j < W; ++j) norm2 += wv[j] * wv[j];
            const double norm = std::sqrt(norm2);
            if (norm < 1e-12) throw DomainError("pooling projection vector has zero norm");
            num::matmul_raw(x_prop.data(), wv, alpha.data(), n, W, 1, false);
            for (auto& a : alpha) a /= norm;
        } else {
            mrgcn_layer_raw(pool_gcn_, x_prop.data(), n, W, 1, g, alpha.data(), scratch);
            for (auto& a : alpha) a = std::tanh(a);
        }
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t off = clip.offsets[t];
            const std::vector<double> seg(alpha.begin() + off,
                                          alpha.begin() + clip.offsets[t + 1]);
            for (auto i : topk_indices(seg, config_.pool_ratio)) {
                sel_all.push_back(off + i);
                frame_of.push_back(t);
            }
        }
        gated.resize(sel_all.size() * W);
        for (std::size_t s = 0; s < sel_all.size(); ++s) {
            const double gv = std::tanh(alpha[sel_all[s]]);
            const double* src = x_prop.data() + sel_all[s] * W;
            double* dst = gated.data() + s * W;
            for (std::size_t j = 0; j < W; ++j) dst[j] = src[j] * gv;
        }
    } else {
        sel_all.resize(n);
        std::iota(sel_all.begin(), sel_all.end(), 0);
        frame_of.reserve(n);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = clip.offsets[t]; i < clip.offsets[t + 1]; ++i)
                frame_of.push_back(t);
    }

    if (trace) {
        trace->frames.resize(T);
        std::size_t sel_pos = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t off = clip.offsets[t], end = clip.offsets[t + 1];
            FrameAttention& fa = trace->frames[t];
            fa.node_ids.assign(g.node_ids.begin() + off, g.node_ids.begin() + end);
            fa.node_kinds.assign(g.node_kinds.begin() + off, g.node_kinds.begin() + end);
            fa.alpha_raw.clear();
            fa.alpha_tanh.clear();
            if (!alpha.empty()) {
                fa.alpha_raw.assign(alpha.begin() + off, alpha.begin() + end);
                for (double a : fa.alpha_raw) fa.alpha_tanh.push_back(std::tanh(a));
            }
            fa.selected.assign(end - off, false);
            while (sel_pos < sel_all.size() && sel_all[sel_pos] < end)
                fa.selected[sel_all[sel_pos++] - off] = true;
        }
    }

    const double* rows = gated.empty() ? x_prop.data() : gated.data();
    std::vector<double> out(T * W, 0.0);
    switch (config_.readout) {
        case ReadoutMode::Sum:
        case ReadoutMode::Mean: {
            for (std::size_t s = 0; s < frame_of.size(); ++s) {
                double* dst = out.data() + frame_of[s] * W;
                const double* src = rows + s * W;
                for (std::size_t j = 0; j < W; ++j) dst[j] += src[j];
            }
            if (config_.readout == ReadoutMode::Mean) {
                std::vector<double> count(T, 0.0);
                for (auto t : frame_of) count[t] += 1.0;
                for (std::size_t t = 0; t < T; ++t) {
                    const double inv = 1.0 / count[t];
                    for (std::size_t j = 0; j < W; ++j) out[t * W + j] *= inv;
                }
            }
            break;
        }
        case ReadoutMode::Max: {
            std::size_t pos = 0;
            for (std::size_t t = 0; t < T; ++t) {
                std::copy(rows + pos * W, rows + (pos + 1) * W, out.begin() + t * W);
                ++pos;
                while (pos < frame_of.size() && frame_of[pos] == t) {
                    const double* src = rows + pos * W;
                    double* dst = out.data() + t * W;
                    for (std::size_t j = 0; j < W; ++j)
                        if (src[j] > dst[j]) dst[j] = src[j];
                    ++pos;
                }
            }
            break;
        }
    }
    return Tensor::matrix(T, W, std::move(out));
}

RiskModel::EncoderStates RiskModel::encode_temporal_fast(const Tensor& x_all) const {
    const std::size_t h = config_.lstm_hidden;
    const std::size_t T = x_all.rows();
    const std::size_t W = x_all.cols();
    const Gate* gates[4] = {&enc_.in, &enc_.forget, &enc_.cand, &enc_.out};
    std::vector<double> xproj(4 * T * h);
    for (int gi = 0; gi < 4; ++gi) {
        double* out = xproj.data() + static_cast<std::size_t>(gi) * T * h;
        num::matmul_raw(x_all.data(), gates[gi]->wx.data(), out, T, W, h, false);
        const double* b = gates[gi]->b.data();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < h; ++j) out[t * h + j] += b[j];
    }
    std::vector<double> p(h, 0.0), c(h, 0.0), pre(4 * h);
    EncoderStates st;
    st.hidden.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (int gi = 0; gi < 4; ++gi) {
            const double* xp = xproj.data() + (static_cast<std::size_t>(gi) * T + t) * h;
            double* dst = pre.data() + static_cast<std::size_t>(gi) * h;
            std::copy(xp, xp + h, dst);
            num::matmul_raw(p.data(), gates[gi]->wh.data(), dst, 1, h, h, true);
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double i = sigmoid_s(pre[j]);
            const double f = sigmoid_s(pre[h + j]);
            const double gg = std::tanh(pre[2 * h + j]);
            const double o = sigmoid_s(pre[3 * h + j]);
            c[j] = f * c[j] + i * gg;
            p[j] = o * std::tanh(c[j]);
        }
        st.hidden.push_back(Tensor::matrix(1, h, std::vector<double>(p.begin(), p.end())));
    }
    st.cell = Tensor::matrix(1, h, std::vector<double>(c.begin(), c.end()));
    return st;
}

Tensor RiskModel::decode_head_fast(const EncoderStates& st, std::vector<double>* betas) const {
    const std::size_t h = config_.lstm_hidden;
    const std::size_t T = st.hidden.size();
    if (T == 0) throw DataError("encoder over empty frame sequence");
    std::vector<double> z(h);
    switch (config_.temporal) {
        case TemporalMode::Mean: {
            if (betas) betas->assign(T, 1.0 / static_cast<double>(T));
            std::fill(z.begin(), z.end(), 0.0);
            for (const auto& pt : st.hidden)
                for (std::size_t j = 0; j < h; ++j) z[j] += pt.data()[j];
            const double inv = 1.0 / static_cast<double>(T);
            for (auto& v : z) v *= inv;
            break;
        }
        case TemporalMode::LstmLast: {
            if (betas) {
                betas->assign(T, 0.0);
                betas->back() = 1.0;
            }
            std::copy(st.hidden.back().data(), st.hidden.back().data() + h, z.begin());
            break;
        }
        case TemporalMode::LstmAttn: {
            std::vector<double> P(T * h);
            for (std::size_t t = 0; t < T; ++t)
                std::copy(st.hidden[t].data(), st.hidden[t].data() + h, P.data() + t * h);
            std::vector<double> s0(h), s0p(h);
            num::matmul_raw(P.data() + (T - 1) * h, attn_winit_.data(), s0.data(), 1, h, h,
                            false);
            for (auto& v : s0) v = std::tanh(v);
            num::matmul_raw(s0.data(), attn_ws_.data(), s0p.data(), 1, h, h, false);
            std::vector<double> en(T * h);
            num::matmul_raw(P.data(), attn_wp_.data(), en.data(), T, h, h, false);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < h; ++j)
                    en[t * h + j] = std::tanh(en[t * h + j] + s0p[j]);
            std::vector<double> e(T);
            num::matmul_raw(en.data(), attn_v_.data(), e.data(), T, h, 1, false);
            double mx = e[0];
            for (double v : e) mx = std::max(mx, v);
            double zsum = 0.0;
            for (auto& v : e) {
                v = std::exp(v - mx);
                zsum += v;
            }
            for (auto& v : e) v /= zsum;
            if (betas) *betas = e;
            std::vector<double> q(h);
            num::matmul_raw(e.data(), P.data(), q.data(), 1, T, h, false);
            // decoder cell step from the last encoder state
            const Gate* gates[4] = {&dec_.in, &dec_.forget, &dec_.cand, &dec_.out};
            std::vector<double> pre(4 * h);
            for (int gi = 0; gi < 4; ++gi) {
                double* dst = pre.data() + static_cast<std::size_t>(gi) * h;
                num::matmul_raw(q.data(), gates[gi]->wx.data(), dst, 1, h, h, false);
                num::matmul_raw(st.hidden.back().data(), gates[gi]->wh.data(), dst, 1, h, h,
                                true);
                const double* b = gates[gi]->b.data();
                for (std::size_t j = 0; j < h; ++j) dst[j] += b[j];
            }
            const double* c0 = st.cell.data();
            for (std::size_t j = 0; j < h; ++j) {
                const double i = sigmoid_s(pre[j]);
                const double f = sigmoid_s(pre[h + j]);
                const double gg = std::tanh(pre[2 * h + j]);
                const double o = sigmoid_s(pre[3 * h + j]);
                z[j] = o * std::tanh(f * c0[j] + i * gg);
            }
            break;
        }
    }
    std::vector<double> h1(h);
    num::matmul_raw(z.data(), head_w1_.data(), h1.data(), 1, h, h, false);
    const double* b1 = head_b1_.data();
    for (std::size_t j = 0; j < h; ++j) {
        h1[j] += b1[j];
        if (h1[j] < 0.0) h1[j] = 0.0;
    }
    double logits[2];
    num::matmul_raw(h1.data(), head_w2_.data(), logits, 1, h, 2, false);
    logits[0] += head_b2_.data()[0];
    logits[1] += head_b2_.data()[1];
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    return Tensor::matrix(1, 2, {e0 / (e0 + e1), e1 / (e0 + e1)});
}

Tensor RiskModel::encode_frames(const CompiledClip& clip, bool training, Rng* rng,
                                AttentionTrace* trace) const {
    if (!training && !num::grad_enabled()) return encode_frames_fast(clip, trace);
    const std::size_t T = clip.n_frames();
    if (T == 0) throw DataError("forward over empty graph sequence");
    if (training && config_.dropout > 0.0 && !rng)
        throw UsageError("training-mode forward needs a dropout rng");
    const CompiledGraph& g = clip.merged;

    Tensor x_prop;
    if (config_.spatial == SpatialType::Mrgcn) {
        std::vector<Tensor> per_layer{g.x0};
        Tensor x = g.x0;
        for (const auto& layer : gcn_) {
            x = relu(layer.forward(x, g));
            if (training && config_.dropout > 0.0)
                x = num::dropout(x, config_.dropout, true, *rng);
            per_layer.push_back(x);
        }
        x_prop = spatial_concat(per_layer);
    } else {
        Tensor x = relu(add(matmul(g.x0, mlp_w_), mlp_b_));
        if (training && config_.dropout > 0.0) x = num::dropout(x, config_.dropout, true, *rng);
        x_prop = x;
    }

    // Per-frame node selection (the frames are disjoint blocks, so the
    // gating and the gather run once over the whole clip).
    Tensor x_pool = x_prop;
    std::vector<std::size_t> sel_all;      // global node indices, frame-major
    std::vector<std::size_t> frame_of;     // frame id per selected row
    std::vector<double> alpha_values;
    if (config_.pooling != PoolingVariant::None) {
        Tensor alpha;
        if (config_.pooling == PoolingVariant::TopkPool) {
            const Tensor norm = num::sqrt(reduce_sum(mul(pool_w_, pool_w_)));
            if (norm.item() < 1e-12)
                throw DomainError("pooling projection vector has zero norm");
            alpha = num::div(matmul(x_prop, pool_w_), norm);
        } else {
            alpha = num::tanh(pool_gcn_.forward(x_prop, g));
        }
        alpha_values = alpha.values();
        const Tensor alpha_col =
            alpha.rank() == 2 ? alpha : reshape(alpha, {alpha.numel(), 1});
        const Tensor gated = mul(x_prop, num::tanh(alpha_col));
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t off = clip.offsets[t];
            const std::vector<double> seg(alpha_values.begin() + off,
                                          alpha_values.begin() + clip.offsets[t + 1]);
            for (auto i : topk_indices(seg, config_.pool_ratio)) {
                sel_all.push_back(off + i);
                frame_of.push_back(t);
            }
        }
        x_pool = index_select(gated, sel_all);
    } else {
        sel_all.resize(g.n_nodes);
        std::iota(sel_all.begin(), sel_all.end(), 0);
        frame_of.reserve(g.n_nodes);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = clip.offsets[t]; i < clip.offsets[t + 1]; ++i)
                frame_of.push_back(t);
    }

    if (trace) {
        trace->frames.resize(T);
        std::size_t sel_pos = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t off = clip.offsets[t], end = clip.offsets[t + 1];
            FrameAttention& fa = trace->frames[t];
            fa.node_ids.assign(g.node_ids.begin() + off, g.node_ids.begin() + end);
            fa.node_kinds.assign(g.node_kinds.begin() + off, g.node_kinds.begin() + end);
            fa.alpha_raw.clear();
            fa.alpha_tanh.clear();
            if (!alpha_values.empty()) {
                fa.alpha_raw.assign(alpha_values.begin() + off, alpha_values.begin() + end);
                for (double a : fa.alpha_raw) fa.alpha_tanh.push_back(std::tanh(a));
            }
            fa.selected.assign(end - off, false);
            while (sel_pos < sel_all.size() && sel_all[sel_pos] < end)
                fa.selected[sel_all[sel_pos++] - off] = true;
        }
    }

    // Readout per frame: one scatter over the frame ids.
    switch (config_.readout) {
        case ReadoutMode::Sum: return scatter_add(x_pool, frame_of, T);
        case ReadoutMode::Mean: {
            std::vector<double> inv_count(T, 0.0);
            for (auto t : frame_of) inv_count[t] += 1.0;
            for (auto& v : inv_count) v = 1.0 / v;
            return row_scale(scatter_add(x_pool, frame_of, T), inv_count);
        }
        case ReadoutMode::Max: {
            std::vector<Tensor> rows;
            rows.reserve(T);
            std::size_t pos = 0;
            for (std::size_t t = 0; t < T; ++t) {
                std::vector<std::size_t> mine;
                while (pos < frame_of.size() && frame_of[pos] == t) mine.push_back(pos++);
                rows.push_back(reshape(reduce_max(index_select(x_pool, mine), 0),
                                       {1, spatial_width_}));
            }
            return concat(rows, 0);
        }
    }
    throw ConfigError("bad readout mode");
}

RiskModel::EncoderStates RiskModel::encode_temporal(const Tensor& x_all) const {
    if (!x_all.defined() || x_all.rows() == 0)
        throw DataError("encoder over empty frame sequence");
    if (!num::grad_enabled()) return encode_temporal_fast(x_all);
    const std::size_t h = config_.lstm_hidden;
    const std::size_t T = x_all.rows();
    // The input projections do not depend on the recurrent state, so all
    // frames go through each gate's wx in one matmul; only the h * wh
    // part stays sequential.
    const Gate* gates[4] = {&enc_.in, &enc_.forget, &enc_.cand, &enc_.out};
    Tensor xproj[4];
    for (int gi = 0; gi < 4; ++gi)
        xproj[gi] = add(matmul(x_all, gates[gi]->wx), gates[gi]->b);
    Tensor p = Tensor::zeros({1, h});
    Tensor c = Tensor::zeros({1, h});
    EncoderStates st;
    st.hidden.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor pre[4];
        for (int gi = 0; gi < 4; ++gi) {
            Tensor xp = T == 1 ? xproj[gi]
                               : index_select(xproj[gi], std::vector<std::size_t>{t});
            pre[gi] = add(xp, matmul(p, gates[gi]->wh));
        }
        const Tensor i = sigmoid(pre[0]);
        const Tensor f = sigmoid(pre[1]);
        const Tensor g = num::tanh(pre[2]);
        const Tensor o = sigmoid(pre[3]);
        c = add(mul(f, c), mul(i, g));
        p = mul(o, num::tanh(c));
        st.hidden.push_back(p);
    }
    st.cell = c;
    return st;
}

Tensor RiskModel::decode_head(const EncoderStates& st, bool training, Rng* rng,
                              std::vector<double>* betas) const {
    if (!training && !num::grad_enabled()) return decode_head_fast(st, betas);
    const std::size_t h = config_.lstm_hidden;
    const std::size_t T = st.hidden.size();
    Tensor z;
    switch (config_.temporal) {
        case TemporalMode::Mean: {
            if (betas) betas->assign(T, 1.0 / static_cast<double>(T));
            z = reshape(reduce_mean(concat(st.hidden, 0), 0), {1, h});
            break;
        }
        case TemporalMode::LstmLast: {
            if (betas) {
                betas->assign(T, 0.0);
                betas->back() = 1.0;
            }
            z = st.hidden.back();
            break;
        }
        case TemporalMode::LstmAttn: {
            const Tensor s0 = num::tanh(matmul(st.hidden.back(), attn_winit_));
            const Tensor s0_proj = matmul(s0, attn_ws_);
            const Tensor p_all = concat(st.hidden, 0);  // T x h
            const Tensor e_mat =
                matmul(num::tanh(add(matmul(p_all, attn_wp_), s0_proj)), attn_v_);
            const Tensor e = reshape(e_mat, {T});
            const Tensor beta = softmax(e, 0);
            if (betas) *betas = beta.values();
            const Tensor q = matmul(reshape(beta, {1, T}), p_all);
            Tensor dp = st.hidden.back();
            Tensor dc = st.cell;
            cell_step(dec_, q, dp, dc);
            z = dp;
            break;
        }
    }
    if (!z.defined()) throw ConfigError("bad temporal mode");
    if (training && config_.dropout > 0.0) z = num::dropout(z, config_.dropout, true, *rng);
    const Tensor hidden = relu(add(matmul(z, head_w1_), head_b1_));
    const Tensor logits = add(matmul(hidden, head_w2_), head_b2_);
    return softmax(logits, 1);
}

Tensor RiskModel::forward_clip(const CompiledClip& clip, bool training, Rng* rng,
                               AttentionTrace* trace) const {
    const Tensor x_all = encode_frames(clip, training, rng, trace);
    const EncoderStates st = encode_temporal(x_all);
    return decode_head(st, training, rng, trace ? &trace->betas : nullptr);
}

Tensor RiskModel::forward_clip(const std::vector<CompiledGraph>& graphs, bool training,
                               Rng* rng, AttentionTrace* trace) const {
    return forward_clip(compile_clip(graphs), training, rng, trace);
}

Tensor RiskModel::forward_clip(const std::vector<sg::SceneGraph>& graphs, bool training,
                               Rng* rng, AttentionTrace* trace) const {
    std::vector<CompiledGraph> compiled;
    compiled.reserve(graphs.size());
    for (std::size_t t = 0; t < graphs.size(); ++t) {
        try {
            compiled.push_back(compile_graph(graphs[t], vocab_));
        } catch (const std::exception& e) {
            throw DataError("frame " + std::to_string(t) + ": " + e.what());
        }
    }
    return forward_clip(compiled, training, rng, trace);
}

// ---- checkpoints -----------------------------------------------------

void save_checkpoint(const std::string& path, const RiskModel& model,
                     const CheckpointMeta& meta) {
    json j;
    j["format_version"] = 1;
    j["config"] = config_json(model.config());
    j["vocab"] = model.vocab();
    json params = json::object();
    for (const auto& p : model.params())
        params[p.name] = {{"shape", p.tensor.shape()}, {"data", p.tensor.values()}};
    j["params"] = std::move(params);
    j["meta"] = {{"seed", meta.seed}, {"epoch", meta.epoch}, {"val_loss", meta.val_loss}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("checkpoint '" + path + "': malformed JSON: " + e.what());
    }
    if (j.at("format_version").get<int>() != 1)
        throw DataError("unsupported checkpoint format version");
    const ModelConfig config = config_parse(j.at("config"));
    const auto vocab = j.at("vocab").get<std::vector<std::string>>();
    CheckpointMeta meta;
    meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
    meta.epoch = j.at("meta").at("epoch").get<std::size_t>();
    meta.val_loss = j.at("meta").at("val_loss").get<double>();

    Checkpoint ckpt{RiskModel(config, vocab, meta.seed), meta};
    const json& params = j.at("params");
    std::size_t used = 0;
    for (auto& p : ckpt.model.params()) {
        if (!params.contains(p.name))
            throw DataError("checkpoint missing parameter '" + p.name + "'");
        const json& pj = params.at(p.name);
        const auto shape = pj.at("shape").get<Shape>();
        if (shape != p.tensor.shape())
            throw DataError("checkpoint parameter '" + p.name + "' has shape " +
                            shape_str(shape) + ", expected " + shape_str(p.tensor.shape()));
        const auto data = pj.at("data").get<std::vector<double>>();
        std::copy(data.begin(), data.end(), p.tensor.data());
        ++used;
    }
    if (used != params.size())
        throw DataError("checkpoint contains parameters unknown to this architecture");
    return ckpt;
}

}  // namespace sgrisk::model
