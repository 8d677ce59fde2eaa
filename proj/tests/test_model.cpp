#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "sgrisk/model.hpp"

using namespace sgrisk;
using namespace sgrisk::model;
using num::Tensor;

namespace {

sg::SceneGraph tiny_graph(std::size_t n_cars, const std::vector<sg::GraphEdge>& extra = {}) {
    std::vector<sg::ObjectState> frame = {{"ego", sg::ObjectKind::EgoCar, 0, 0, std::nullopt}};
    for (std::size_t i = 0; i < n_cars; ++i)
        frame.push_back({"c" + std::to_string(i), sg::ObjectKind::Car, 3.0 + 2.0 * i, 2.0,
                         std::nullopt});
    sg::SceneGraph g = sg::build_scene_graph(frame, {});
    for (const auto& e : extra) g.edges.push_back(e);
    return g;
}

std::map<std::string, Tensor> by_name(RiskModel& m) {
    std::map<std::string, Tensor> out;
    for (auto& p : m.params()) out[p.name] = p.tensor;
    return out;
}

void zero_all(RiskModel& m) {
    for (auto& p : m.params())
        std::fill(p.tensor.data(), p.tensor.data() + p.tensor.numel(), 0.0);
}

}  // namespace

TEST_CASE("one-hot node embeddings") {
    const auto& vocab = sg::node_kind_vocab();
    REQUIRE(vocab.size() == 10);
    const sg::SceneGraph g = tiny_graph(0);
    const Tensor x = init_node_embeddings(g, vocab);
    CHECK(x.shape() == num::Shape{5, 10});
    for (std::size_t r = 0; r < 5; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 10; ++c) sum += x.at(r * 10 + c);
        CHECK(sum == 1.0);
    }
    // two cars -> identical rows
    const sg::SceneGraph g2 = tiny_graph(2);
    const Tensor x2 = init_node_embeddings(g2, vocab);
    const std::size_t a = g2.node_index("c0"), b = g2.node_index("c1");
    for (std::size_t c = 0; c < 10; ++c) CHECK(x2.at(a * 10 + c) == x2.at(b * 10 + c));

    sg::SceneGraph bad = g;
    bad.nodes[4].kind = "unicycle";
    CHECK_THROWS_AS(init_node_embeddings(bad, vocab), DataError);
}

TEST_CASE("mrgcn layer micro-oracles") {
    const auto& vocab = sg::node_kind_vocab();
    const std::size_t d = vocab.size();

    // no edges, phi0 = I -> X' = X
    sg::SceneGraph edgeless = tiny_graph(1);
    edgeless.edges.clear();
    const CompiledGraph cg0 = compile_graph(edgeless, vocab);
    MrgcnLayer layer;
    layer.phi0 = Tensor::identity(d);
    for (std::size_t r = 0; r < sg::kNumRelations; ++r) layer.phi.push_back(Tensor::zeros({d, d}));
    layer.bias = Tensor::zeros({d});
    CHECK(layer.forward(cg0.x0, cg0).values() == cg0.x0.values());

    // one edge u->v of relation r, phi0 = 0, phi_r = I -> row v = h_u
    sg::SceneGraph one = tiny_graph(1);
    one.edges.clear();
    const std::size_t u = one.node_index("ego"), v = one.node_index("c0");
    one.edges.push_back({u, v, sg::RelationType::Near});
    const CompiledGraph cg1 = compile_graph(one, vocab);
    layer.phi0 = Tensor::zeros({d, d});
    layer.phi[static_cast<std::size_t>(sg::RelationType::Near)] = Tensor::identity(d);
    const Tensor out1 = layer.forward(cg1.x0, cg1);
    for (std::size_t c = 0; c < d; ++c) {
        CHECK(out1.at(v * d + c) == cg1.x0.at(u * d + c));
        CHECK(out1.at(u * d + c) == 0.0);
    }

    // two r-neighbors -> their mean
    sg::SceneGraph two = tiny_graph(2);
    two.edges.clear();
    const std::size_t w1 = two.node_index("c0"), w2 = two.node_index("c1");
    const std::size_t tgt = two.node_index("ego");
    two.edges.push_back({w1, tgt, sg::RelationType::Near});
    two.edges.push_back({w2, tgt, sg::RelationType::Near});
    const CompiledGraph cg2 = compile_graph(two, vocab);
    const Tensor out2 = layer.forward(cg2.x0, cg2);
    for (std::size_t c = 0; c < d; ++c)
        CHECK(out2.at(tgt * d + c) ==
              doctest::Approx((cg2.x0.at(w1 * d + c) + cg2.x0.at(w2 * d + c)) / 2.0)
                  .epsilon(1e-12));
}

TEST_CASE("spatial concat width arithmetic") {
    CHECK(num::concat({Tensor::zeros({5, 10}), Tensor::zeros({5, 100}),
                       Tensor::zeros({5, 100})}, 1).cols() == 210);
    RiskModel m({}, sg::node_kind_vocab(), 1);
    CHECK(m.spatial_width() == 210);

    ModelConfig single;
    single.gcn_widths = {64};
    RiskModel m1(single, sg::node_kind_vocab(), 1);
    CHECK(m1.spatial_width() == 74);
}

TEST_CASE("topk selection") {
    CHECK(topk_indices({0.9, 0.1, 0.5}, 0.5) == std::vector<std::size_t>{0, 2});
    CHECK(topk_indices({0.9, 0.1, 0.5}, 1.0) == std::vector<std::size_t>{0, 1, 2});
    CHECK(topk_indices({0.5, 0.5, 0.1}, 0.3) == std::vector<std::size_t>{0});  // tie: low index
    CHECK(topk_indices({0.1}, 0.25) == std::vector<std::size_t>{0});  // never empty
}

TEST_CASE("topk pooling gates and induces edges") {
    const auto& vocab = sg::node_kind_vocab();
    sg::SceneGraph g = tiny_graph(2);
    g.edges.clear();
    // edges 0<->2 and 1->2 among the first three nodes
    g.edges.push_back({0, 2, sg::RelationType::Near});
    g.edges.push_back({2, 0, sg::RelationType::Near});
    g.edges.push_back({1, 2, sg::RelationType::Visible});
    const CompiledGraph cg = compile_graph(g, vocab);

    std::vector<double> alpha_v(cg.n_nodes, -1.0);
    alpha_v[0] = 0.9;
    alpha_v[1] = 0.1;
    alpha_v[2] = 0.5;
    const Tensor alpha = Tensor::matrix(cg.n_nodes, 1, std::vector<double>(alpha_v));

    const double pr = 2.0 / static_cast<double>(cg.n_nodes);  // keep exactly 2 nodes
    const PoolResult res = topk_pool(cg.x0, cg, alpha, pr);
    CHECK(res.selected == std::vector<std::size_t>{0, 2});
    // kept rows are gated by tanh(alpha)
    const std::size_t d = vocab.size();
    for (std::size_t c = 0; c < d; ++c) {
        CHECK(res.x_pool.at(0 * d + c) ==
              doctest::Approx(cg.x0.at(0 * d + c) * std::tanh(0.9)).epsilon(1e-12));
        CHECK(res.x_pool.at(1 * d + c) ==
              doctest::Approx(cg.x0.at(2 * d + c) * std::tanh(0.5)).epsilon(1e-12));
    }
    // only the 0<->2 edges survive, relabeled to {0,1}
    REQUIRE(res.edges_pool.size() == 2);
    for (const auto& e : res.edges_pool) {
        CHECK(e.relation == sg::RelationType::Near);
        CHECK(((e.src == 0 && e.dst == 1) || (e.src == 1 && e.dst == 0)));
    }
}

TEST_CASE("readout modes") {
    const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
    CHECK(readout(x, ReadoutMode::Sum).values() == std::vector<double>{4, 6});
    CHECK(readout(x, ReadoutMode::Mean).values() == std::vector<double>{2, 3});
    CHECK(readout(x, ReadoutMode::Max).values() == std::vector<double>{3, 4});
    const Tensor single = Tensor::matrix(1, 3, {7, 8, 9});
    for (auto mode : {ReadoutMode::Sum, ReadoutMode::Mean, ReadoutMode::Max})
        CHECK(readout(single, mode).values() == std::vector<double>{7, 8, 9});
}

TEST_CASE("weighted cross entropy") {
    CHECK(weighted_cross_entropy(Tensor::vector({1, 0}), {1, 0}, {3, 5}).item() ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(weighted_cross_entropy(Tensor::vector({0.5, 0.5}), {0, 1}, {1, 1}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(weighted_cross_entropy(Tensor::vector({0.5, 0.5}), {0, 1}, {1, 2.5}).item() ==
          doctest::Approx(2.5 * std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(weighted_cross_entropy(Tensor::vector({0.5, 0.5}), {0.5, 0.5}, {1, 1}),
                    DataError);
    // clamped at 1e-12, finite for zero probability
    CHECK(std::isfinite(
        weighted_cross_entropy(Tensor::vector({1, 0}), {0, 1}, {1, 1}).item()));
}

TEST_CASE("zero-weight model predicts 0.5/0.5") {
    ModelConfig cfg;
    cfg.pooling = PoolingVariant::None;
    RiskModel m(cfg, sg::node_kind_vocab(), 3);
    zero_all(m);
    const std::vector<sg::SceneGraph> clip = {tiny_graph(1), tiny_graph(1)};
    num::NoGrad ng;
    const Tensor y = m.forward_clip(clip, false, nullptr);
    CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward is deterministic in eval mode and probabilities sum to 1") {
    RiskModel m({}, sg::node_kind_vocab(), 9);
    const std::vector<sg::SceneGraph> clip = {tiny_graph(2), tiny_graph(1), tiny_graph(2)};
    num::NoGrad ng;
    AttentionTrace t1, t2;
    const Tensor a = m.forward_clip(clip, false, nullptr, &t1);
    const Tensor b = m.forward_clip(clip, false, nullptr, &t2);
    CHECK(a.values() == b.values());
    CHECK(a.at(0) + a.at(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::accumulate(t1.betas.begin(), t1.betas.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t1.betas.size() == 3);
    // selected count = ceil(0.5 * n)
    for (const auto& f : t1.frames) {
        std::size_t kept = 0;
        for (bool s : f.selected) kept += s;
        CHECK(kept == (f.selected.size() + 1) / 2);
    }
    CHECK_THROWS_AS(m.forward_clip(std::vector<sg::SceneGraph>{}, false, nullptr), DataError);
}

TEST_CASE("eval fast path matches the differentiable path") {
    // Eval under NoGrad takes raw-buffer stage implementations; they
    // must agree with the tape-based forward for every architecture
    // variant, including traces.
    const std::vector<sg::SceneGraph> clip = {tiny_graph(2), tiny_graph(3), tiny_graph(1)};
    std::vector<ModelConfig> configs;
    for (auto pooling : {PoolingVariant::None, PoolingVariant::TopkPool,
                         PoolingVariant::SagPool})
        for (auto readout : {ReadoutMode::Sum, ReadoutMode::Mean, ReadoutMode::Max})
            for (auto temporal :
                 {TemporalMode::Mean, TemporalMode::LstmLast, TemporalMode::LstmAttn}) {
                ModelConfig c;
                c.gcn_widths = {16, 8};
                c.lstm_hidden = 12;
                c.pooling = pooling;
                c.readout = readout;
                c.temporal = temporal;
                configs.push_back(c);
            }
    ModelConfig mlp;
    mlp.spatial = SpatialType::Mlp;
    mlp.gcn_widths = {16};
    mlp.lstm_hidden = 12;
    configs.push_back(mlp);

    for (const auto& cfg : configs) {
        RiskModel m(cfg, sg::node_kind_vocab(), 21);
        AttentionTrace slow_t, fast_t;
        num::Tape::active().clear();
        const Tensor slow = m.forward_clip(clip, false, nullptr, &slow_t);  // tape path
        num::Tape::active().clear();
        Tensor fast;
        {
            num::NoGrad ng;
            fast = m.forward_clip(clip, false, nullptr, &fast_t);
        }
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(fast.at(i) == doctest::Approx(slow.at(i)).epsilon(1e-12));
        REQUIRE(fast_t.betas.size() == slow_t.betas.size());
        for (std::size_t i = 0; i < fast_t.betas.size(); ++i)
            CHECK(fast_t.betas[i] == doctest::Approx(slow_t.betas[i]).epsilon(1e-12));
        REQUIRE(fast_t.frames.size() == slow_t.frames.size());
        for (std::size_t f = 0; f < fast_t.frames.size(); ++f) {
            CHECK(fast_t.frames[f].selected == slow_t.frames[f].selected);
            REQUIRE(fast_t.frames[f].alpha_raw.size() == slow_t.frames[f].alpha_raw.size());
            for (std::size_t i = 0; i < fast_t.frames[f].alpha_raw.size(); ++i)
                CHECK(fast_t.frames[f].alpha_raw[i] ==
                      doctest::Approx(slow_t.frames[f].alpha_raw[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("temporal attention special cases") {
    RiskModel m({}, sg::node_kind_vocab(), 5);
    num::NoGrad ng;
    // T = 1 -> beta = [1]
    AttentionTrace t;
    m.forward_clip(std::vector<sg::SceneGraph>{tiny_graph(1)}, false, nullptr, &t);
    REQUIRE(t.betas.size() == 1);
    CHECK(t.betas[0] == doctest::Approx(1.0).epsilon(1e-12));

    // zeroed encoder -> identical p_t -> uniform betas
    RiskModel mz({}, sg::node_kind_vocab(), 5);
    for (auto& p : mz.params())
        if (p.name.rfind("enc.", 0) == 0)
            std::fill(p.tensor.data(), p.tensor.data() + p.tensor.numel(), 0.0);
    AttentionTrace tz;
    mz.forward_clip(std::vector<sg::SceneGraph>{tiny_graph(1), tiny_graph(2), tiny_graph(1)},
                    false, nullptr, &tz);
    REQUIRE(tz.betas.size() == 3);
    for (double b : tz.betas) CHECK(b == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("LSTM-last path matches an independent reimplementation") {
    // Small MLP-spatial model, lstm_last: recompute the whole forward in
    // plain loops and compare probabilities.
    ModelConfig cfg;
    cfg.spatial = SpatialType::Mlp;
    cfg.gcn_widths = {3};
    cfg.pooling = PoolingVariant::None;
    cfg.readout = ReadoutMode::Sum;
    cfg.temporal = TemporalMode::LstmLast;
    cfg.lstm_hidden = 2;
    cfg.dropout = 0.0;
    RiskModel m(cfg, sg::node_kind_vocab(), 17);
    auto P = by_name(m);

    const std::vector<sg::SceneGraph> clip = {tiny_graph(1), tiny_graph(2)};
    num::NoGrad ng;
    const Tensor got = m.forward_clip(clip, false, nullptr);

    const auto& vocab = sg::node_kind_vocab();
    const std::size_t d0 = vocab.size(), W = 3, H = 2;
    auto vec = [&](const Tensor& t) { return t.values(); };
    const auto mlp_w = vec(P.at("spatial_mlp.w")), mlp_b = vec(P.at("spatial_mlp.b"));

    std::vector<double> p(H, 0.0), c(H, 0.0);
    for (const auto& g : clip) {
        const Tensor x0 = init_node_embeddings(g, vocab);
        // relu(x0 * w + b), then column sums
        std::vector<double> h_g(W, 0.0);
        for (std::size_t n = 0; n < g.nodes.size(); ++n)
            for (std::size_t j = 0; j < W; ++j) {
                double acc = mlp_b[j];
                for (std::size_t k = 0; k < d0; ++k)
                    acc += x0.at(n * d0 + k) * mlp_w[k * W + j];
                h_g[j] += std::max(0.0, acc);
            }
        // one LSTM step
        auto gate = [&](const char* name, std::size_t j) {
            const auto wx = vec(P.at(std::string("enc.") + name + ".wx"));
            const auto wh = vec(P.at(std::string("enc.") + name + ".wh"));
            const auto b = vec(P.at(std::string("enc.") + name + ".b"));
            double acc = b[j];
            for (std::size_t k = 0; k < W; ++k) acc += h_g[k] * wx[k * H + j];
            for (std::size_t k = 0; k < H; ++k) acc += p[k] * wh[k * H + j];
            return acc;
        };
        std::vector<double> np(H), nc(H);
        for (std::size_t j = 0; j < H; ++j) {
            const double i = 1.0 / (1.0 + std::exp(-gate("i", j)));
            const double f = 1.0 / (1.0 + std::exp(-gate("f", j)));
            const double gg = std::tanh(gate("g", j));
            const double o = 1.0 / (1.0 + std::exp(-gate("o", j)));
            nc[j] = f * c[j] + i * gg;
            np[j] = o * std::tanh(nc[j]);
        }
        p = np;
        c = nc;
    }
    // head: relu(p*w1+b1)*w2+b2, softmax
    const auto w1 = vec(P.at("head.w1")), b1 = vec(P.at("head.b1"));
    const auto w2 = vec(P.at("head.w2")), b2 = vec(P.at("head.b2"));
    std::vector<double> hid(H);
    for (std::size_t j = 0; j < H; ++j) {
        double acc = b1[j];
        for (std::size_t k = 0; k < H; ++k) acc += p[k] * w1[k * H + j];
        hid[j] = std::max(0.0, acc);
    }
    double logits[2];
    for (std::size_t j = 0; j < 2; ++j) {
        logits[j] = b2[j];
        for (std::size_t k = 0; k < H; ++k) logits[j] += hid[k] * w2[k * 2 + j];
    }
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    CHECK(got.at(0) == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
    CHECK(got.at(1) == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-12));
}

TEST_CASE("permutation invariance with sum readout and no pooling") {
    ModelConfig cfg;
    cfg.pooling = PoolingVariant::None;
    RiskModel m(cfg, sg::node_kind_vocab(), 23);

    sg::SceneGraph g = tiny_graph(1);  // 4 static nodes + ego + one car
    // permute nodes and remap edges
    const std::vector<std::size_t> perm = {4, 0, 5, 2, 1, 3};  // new index of old node i
    sg::SceneGraph shuffled;
    shuffled.nodes.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) shuffled.nodes[perm[i]] = g.nodes[i];
    for (const auto& e : g.edges)
        shuffled.edges.push_back({perm[e.src], perm[e.dst], e.relation});

    num::NoGrad ng;
    const Tensor a = m.forward_clip(std::vector<sg::SceneGraph>{g}, false, nullptr);
    const Tensor b = m.forward_clip(std::vector<sg::SceneGraph>{shuffled}, false, nullptr);
    CHECK(a.at(0) == doctest::Approx(b.at(0)).epsilon(1e-12));
    CHECK(a.at(1) == doctest::Approx(b.at(1)).epsilon(1e-12));
}

TEST_CASE("small-model gradients match finite differences") {
    ModelConfig cfg;
    cfg.gcn_widths = {4};
    cfg.lstm_hidden = 3;
    cfg.dropout = 0.0;
    RiskModel m(cfg, sg::node_kind_vocab(), 31);
    const std::vector<sg::SceneGraph> clip = {tiny_graph(1), tiny_graph(2)};

    auto loss_value = [&] {
        num::NoGrad ng;
        const Tensor y = m.forward_clip(clip, false, nullptr);
        return weighted_cross_entropy(y, {0, 1}, {1, 1}).item();
    };

    num::Tape::active().clear();
    for (auto& p : m.params()) p.tensor.zero_grad();
    num::backward(
        weighted_cross_entropy(m.forward_clip(clip, false, nullptr), {0, 1}, {1, 1}));
    num::Tape::active().clear();

    const double h = 1e-5;
    double worst = 0.0;
    for (auto& p : m.params()) {
        for (std::size_t i = 0; i < p.tensor.numel(); ++i) {
            const double keep = p.tensor.data()[i];
            p.tensor.data()[i] = keep + h;
            const double up = loss_value();
            p.tensor.data()[i] = keep - h;
            const double down = loss_value();
            p.tensor.data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double denom = std::max(1.0, std::abs(fd));
            worst = std::max(worst, std::abs(p.tensor.grad()[i] - fd) / denom);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip") {
    RiskModel m({}, sg::node_kind_vocab(), 41);
    const std::string path = "/tmp/sgrisk_test_ckpt.json";
    save_checkpoint(path, m, {41, 7, 0.5});
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.meta.seed == 41);
    CHECK(loaded.meta.epoch == 7);
    CHECK(loaded.meta.val_loss == 0.5);
    REQUIRE(loaded.model.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(loaded.model.params()[i].name == m.params()[i].name);
        CHECK(loaded.model.params()[i].tensor.values() == m.params()[i].tensor.values());
    }
    const std::vector<sg::SceneGraph> clip = {tiny_graph(1)};
    num::NoGrad ng;
    CHECK(loaded.model.forward_clip(clip, false, nullptr).values() ==
          m.forward_clip(clip, false, nullptr).values());
    std::remove(path.c_str());
}

TEST_CASE("model config JSON") {
    ModelConfig cfg;
    cfg.pooling = PoolingVariant::TopkPool;
    cfg.pool_ratio = 0.25;
    const ModelConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.pooling == PoolingVariant::TopkPool);
    CHECK(back.pool_ratio == 0.25);
    CHECK_THROWS_AS(config_from_json("{\"poling\": \"sag\"}"), ConfigError);
    ModelConfig bad;
    bad.pool_ratio = 0.0;
    CHECK_THROWS_AS(validate_config(bad), ConfigError);
}
