// End-to-end acceptance gate.  Each numbered check prints exactly one
// PASS/FAIL line; the process exits nonzero when any check fails.
//
//  1  full-model gradient check against central finite differences
//  2  closed-form micro-oracles for the individual layers
//  3  graph-builder goldens over a generated 50-clip corpus
//  4  learnability: 3-split cross validation on a balanced 300-clip set
//  5  ablation ordering: graph conv and temporal attention both matter
//  6  transfer to a denser, noisier generator domain without retraining
//  7  rank-statistic AUC versus brute-force pairwise counting
//  8  attention explanations localize the threat in constructed clips
//  9  reproducibility of cross validation and checkpoint round trips
// 10  overfit capacity on a 10-clip training set

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgrisk/clipio.hpp"
#include "sgrisk/model.hpp"
#include "sgrisk/pipeline.hpp"
#include "sgrisk/scenegen.hpp"

using namespace sgrisk;
using model::RiskModel;
using model::Tensor;
using sg::GraphClip;
using sg::ObjectKind;
using sg::ObjectState;
using sg::RelationType;
using sg::RiskLabel;

namespace {

int g_failures = 0;

void report(int n, bool ok, const std::string& detail) {
    std::printf("%s %2d  %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<GraphClip> to_graph_clips(const std::vector<sg::ClipRecord>& clips) {
    std::vector<GraphClip> out;
    out.reserve(clips.size());
    for (const auto& c : clips)
        out.push_back({c.clip_id, c.label, sg::clip_to_graph_sequence(c, {})});
    return out;
}

std::size_t count_risky(const std::vector<GraphClip>& data) {
    std::size_t n = 0;
    for (const auto& c : data) n += c.label == RiskLabel::Risky;
    return n;
}

bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

// ---- 1: gradient oracle ---------------------------------------------

bool criterion1(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    RiskModel m(model::ModelConfig{}, sg::node_kind_vocab(), 11);

    // Minimal 3-node scene (ego, a nearby car, the shared lane), 2 frames.
    sg::SceneGraph g;
    g.nodes = {{"ego", "ego_car"}, {"car1", "car"}, {"lane_m", sg::kMiddleLane}};
    g.edges = {{0, 1, RelationType::NearCollision}, {1, 0, RelationType::NearCollision},
               {0, 1, RelationType::FrontRight},    {1, 0, RelationType::RearLeft},
               {0, 2, RelationType::IsIn},          {1, 2, RelationType::IsIn}};
    const model::CompiledClip clip =
        model::compile_clip({model::compile_graph(g, m.vocab()),
                             model::compile_graph(g, m.vocab())});

    auto loss_of = [](const Tensor& y) {
        return model::weighted_cross_entropy(y, {0, 1}, {1, 1});
    };

    num::Tape::active().clear();
    for (auto& p : m.params()) p.tensor.zero_grad();
    num::backward(loss_of(m.forward_clip(clip, false, nullptr)));
    num::Tape::active().clear();

    // Central differences for every parameter.  The loss is always the
    // full model loss; stages whose inputs provably cannot change under
    // the perturbed parameter are served from cached activations.
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t n_params = 0;
    {
        num::NoGrad ng;
        const Tensor x_all = m.encode_frames(clip, false, nullptr);
        const RiskModel::EncoderStates st = m.encode_temporal(x_all);
        for (auto& p : m.params()) {
            const bool spatial_param = p.name.rfind("gcn", 0) == 0 ||
                                       p.name.rfind("pool", 0) == 0 ||
                                       p.name.rfind("spatial_mlp", 0) == 0;
            const bool encoder_param = p.name.rfind("enc.", 0) == 0;
            auto loss_value = [&] {
                if (spatial_param)
                    return loss_of(m.forward_clip(clip, false, nullptr)).item();
                if (encoder_param)
                    return loss_of(m.decode_head(m.encode_temporal(x_all), false, nullptr))
                        .item();
                return loss_of(m.decode_head(st, false, nullptr)).item();
            };
            n_params += p.tensor.numel();
            for (std::size_t i = 0; i < p.tensor.numel(); ++i) {
                const double keep = p.tensor.data()[i];
                p.tensor.data()[i] = keep + h;
                const double up = loss_value();
                p.tensor.data()[i] = keep - h;
                const double down = loss_value();
                p.tensor.data()[i] = keep;
                const double fd = (up - down) / (2 * h);
                worst = std::max(worst, std::abs(p.tensor.grad()[i] - fd) /
                                            std::max(1.0, std::abs(fd)));
            }
        }
    }
    const double secs = seconds_since(t0);
    detail = fmt("gradients vs finite differences: %zu parameters, max rel err %.3g, %.1f s",
                 n_params, worst, secs);
    return worst < 1e-4 && secs < 60.0;
}

// ---- 2: layer micro-oracles -----------------------------------------

bool criterion2(std::string& detail) {
    bool ok = true;

    // multi-relational conv, 2-neighbor mean case
    {
        model::CompiledGraph g;
        g.n_nodes = 3;
        const std::size_t r = 3;
        g.relations[r] = {{0, 1}, {2, 2}, {0.5, 0.5}};
        const Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
        model::MrgcnLayer layer;
        layer.phi0 = Tensor::identity(2);
        layer.phi.assign(sg::kNumRelations, Tensor::zeros({2, 2}));
        layer.phi[r] = Tensor::identity(2);
        layer.bias = Tensor::zeros({1, 2});
        num::NoGrad ng;
        const Tensor out = layer.forward(x, g);
        const std::vector<double> want = {1, 2, 3, 4, 7, 9};
        for (std::size_t i = 0; i < 6; ++i) ok &= close(out.at(i), want[i]);
    }

    // layer-concat width arithmetic
    {
        RiskModel def({}, sg::node_kind_vocab(), 1);
        ok &= def.spatial_width() == 210;
        model::ModelConfig one;
        one.gcn_widths = {64};
        RiskModel m(one, sg::node_kind_vocab(), 1);
        ok &= m.spatial_width() == 74;
    }

    // top-k pooling on alpha = [0.9, 0.1, 0.5]
    {
        ok &= model::topk_indices({0.9, 0.1, 0.5}, 0.5) == std::vector<std::size_t>{0, 2};
        model::CompiledGraph g;
        g.n_nodes = 3;
        g.relations[0] = {{0, 2}, {2, 0}, {1.0, 1.0}};
        const Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
        const Tensor alpha = Tensor::matrix(3, 1, {0.9, 0.1, 0.5});
        num::NoGrad ng;
        const auto res = model::topk_pool(x, g, alpha, 0.5);
        ok &= res.selected == std::vector<std::size_t>{0, 2};
        ok &= close(res.x_pool.at(0), 1 * std::tanh(0.9)) &&
              close(res.x_pool.at(1), 2 * std::tanh(0.9)) &&
              close(res.x_pool.at(2), 5 * std::tanh(0.5)) &&
              close(res.x_pool.at(3), 6 * std::tanh(0.5));
        ok &= res.edges_pool.size() == 2;  // 0<->2 survives, relabeled
    }

    // readouts
    {
        num::NoGrad ng;
        const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
        ok &= model::readout(x, model::ReadoutMode::Sum).values() ==
              std::vector<double>{4, 6};
        ok &= model::readout(x, model::ReadoutMode::Mean).values() ==
              std::vector<double>{2, 3};
        ok &= model::readout(x, model::ReadoutMode::Max).values() ==
              std::vector<double>{3, 4};
    }

    // softmax / context identities
    {
        num::NoGrad ng;
        const Tensor s = num::softmax(Tensor::vector({std::log(1.0), std::log(3.0)}));
        ok &= close(s.at(0), 0.25) && close(s.at(1), 0.75);
        const Tensor shifted =
            num::softmax(Tensor::vector({std::log(1.0) + 10, std::log(3.0) + 10}));
        ok &= close(s.at(0), shifted.at(0)) && close(s.at(1), shifted.at(1));
        // context vector = beta-weighted sum of the frame embeddings
        const Tensor p = Tensor::matrix(2, 2, {1, 2, 10, 20});
        const Tensor q = num::matmul(num::reshape(s, {1, 2}), p);
        ok &= close(q.at(0), 0.25 * 1 + 0.75 * 10) && close(q.at(1), 0.25 * 2 + 0.75 * 20);
    }

    detail = "layer micro-oracles (conv mean, widths, pooling, readout, softmax) at 1e-12";
    return ok;
}

// ---- 3: graph-builder goldens ---------------------------------------

std::optional<RelationType> expected_distance(double d) {
    if (d <= 4.0) return RelationType::NearCollision;
    if (d <= 7.0) return RelationType::SuperNear;
    if (d <= 10.0) return RelationType::VeryNear;
    if (d <= 16.0) return RelationType::Near;
    if (d <= 25.0) return RelationType::Visible;
    return std::nullopt;
}

bool criterion3(std::string& detail) {
    gen::ScenarioSpec spec;
    spec.n_clips = 50;
    spec.seed = 101;
    const auto ds = gen::generate_dataset(spec, 1);

    std::size_t frames_checked = 0, pairs_checked = 0;
    for (const auto& clip : ds.clips) {
        for (const auto& frame : clip.frames) {
            // geometry only: drop the generator's lane hints
            std::vector<ObjectState> objs = frame;
            for (auto& o : objs) o.lane_hint.reset();
            const sg::SceneGraph g = sg::build_scene_graph(objs, {});
            ++frames_checked;

            // static floor and node order
            if (g.nodes.size() < 5) return false;
            if (g.nodes[0].id != sg::kLeftLane || g.nodes[1].id != sg::kMiddleLane ||
                g.nodes[2].id != sg::kRightLane || g.nodes[3].id != sg::kRootRoad)
                return false;

            std::vector<const ObjectState*> sorted;
            for (const auto& o : objs) sorted.push_back(&o);
            std::sort(sorted.begin(), sorted.end(),
                      [](auto* a, auto* b) { return a->id < b->id; });

            // bucket edges per ordered object pair
            std::map<std::pair<std::size_t, std::size_t>, std::vector<RelationType>> dist,
                dir;
            std::map<std::size_t, std::size_t> is_in;
            for (const auto& e : g.edges) {
                if (e.src < 4) continue;  // lane->road structure edges
                if (e.relation == RelationType::IsIn)
                    ++is_in[e.src];
                else if (sg::is_distance_relation(e.relation))
                    dist[{e.src, e.dst}].push_back(e.relation);
                else
                    dir[{e.src, e.dst}].push_back(e.relation);
            }

            for (std::size_t i = 0; i < sorted.size(); ++i) {
                for (std::size_t j = 0; j < sorted.size(); ++j) {
                    if (i == j) continue;
                    ++pairs_checked;
                    const std::pair<std::size_t, std::size_t> key = {4 + i, 4 + j};
                    const double d = std::hypot(sorted[j]->x_ft - sorted[i]->x_ft,
                                                sorted[j]->y_ft - sorted[i]->y_ft);
                    // tightest-bucket exclusivity + symmetry
                    const auto want = expected_distance(d);
                    const auto it = dist.find(key);
                    if (want.has_value()) {
                        if (it == dist.end() || it->second.size() != 1 ||
                            it->second[0] != *want)
                            return false;
                        const auto rev = dist.find({4 + j, 4 + i});
                        if (rev == dist.end() || rev->second != it->second) return false;
                    } else if (it != dist.end()) {
                        return false;
                    }
                    // directional antipodality within the near threshold
                    const auto dit = dir.find(key);
                    if (d > 0.0 && d <= sg::kNearThresholdFt) {
                        if (dit == dir.end() || dit->second.size() != 1) return false;
                        const auto rev = dir.find({4 + j, 4 + i});
                        if (rev == dir.end() || rev->second.size() != 1) return false;
                        const int base = static_cast<int>(RelationType::FrontLeft);
                        const int fwd = static_cast<int>(dit->second[0]) - base;
                        const int back = static_cast<int>(rev->second[0]) - base;
                        if (back != (fwd + 4) % 8) return false;
                    } else if (dit != dir.end()) {
                        return false;
                    }
                }
                // lane membership: vehicles only, dual edge inside the
                // boundary overlap band
                const auto& o = *sorted[i];
                const std::size_t n_lanes = is_in.count(4 + i) ? is_in[4 + i] : 0;
                if (!sg::is_vehicle(o.kind)) {
                    if (n_lanes != 0) return false;
                } else if (std::abs(o.x_ft) <= 16.5) {
                    const double to_boundary =
                        std::min(std::abs(o.x_ft - 6.0), std::abs(o.x_ft + 6.0));
                    if (n_lanes != (to_boundary <= 1.5 ? 2u : 1u)) return false;
                } else if (n_lanes < 1 || n_lanes > 2) {
                    return false;
                }
            }
        }
    }
    detail = fmt("builder goldens: %zu frames, %zu object pairs re-derived independently",
                 frames_checked, pairs_checked);
    return true;
}

// ---- 4/5/6/8 share the balanced 300-clip dataset --------------------

bool criterion4(const std::vector<GraphClip>& data, std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    pipe::ExperimentConfig cfg;
    cfg.n_splits = 3;
    const pipe::MetricsReport r = pipe::cross_validate(cfg, data, 1);
    const double acc = r.mean_accuracy();
    const double auc = r.mean_auc().value_or(0.0);
    const double mins = seconds_since(t0) / 60.0;
    detail = fmt("3-split cross validation on 300 clips: mean acc %.3f (>=0.90), "
                 "mean AUC %.3f (>=0.95), %.1f min (target 30)",
                 acc, auc, mins);
    return acc >= 0.90 && auc >= 0.95;
}

bool criterion5(const std::vector<GraphClip>& data, std::string& detail) {
    pipe::ExperimentConfig cfg;
    cfg.n_splits = 3;
    cfg.epochs = 60;
    cfg.model.gcn_widths = {100};
    cfg.model.pooling = model::PoolingVariant::None;
    pipe::AblationAxes axes;
    axes.spatial = {"none", "1"};
    axes.temporal = {"mean", "lstm_last"};
    const auto cells = pipe::ablation_sweep(cfg, axes, data, 1);

    auto acc = [&](const std::string& s, const std::string& t) {
        for (const auto& c : cells)
            if (c.spatial == s && c.temporal == t) return c.report.mean_accuracy();
        return -1.0;
    };
    const double conv_last = acc("1", "lstm_last");
    const double none_last = acc("none", "lstm_last");
    const double conv_mean = acc("1", "mean");
    detail = fmt("ablation ordering: conv+last %.3f vs none+last %.3f vs conv+mean %.3f "
                 "(gaps >= 0.02)",
                 conv_last, none_last, conv_mean);
    return conv_last - none_last >= 0.02 && conv_last - conv_mean >= 0.02;
}

bool criterion6(const std::vector<GraphClip>& data,
                std::optional<pipe::TrainResult>& shared, const pipe::SplitPlan& plan,
                std::string& detail) {
    pipe::ExperimentConfig cfg;  // defaults: 200 epochs, full model
    shared = pipe::train(cfg, data, plan, cfg.seed);

    gen::ScenarioSpec shifted_spec;
    shifted_spec.n_clips = 100;
    shifted_spec.seed = 303;
    shifted_spec.domain_shift = "dense_noisy";
    const auto shifted = to_graph_clips(gen::generate_dataset(shifted_spec, 1).clips);

    const pipe::TransferReport rep =
        pipe::transfer_evaluate(shared->model, data, plan.test, shifted);
    detail = fmt("transfer to dense/noisy domain: in-domain acc %.3f, shifted acc %.3f "
                 "(>0.70), drop %.3f (<=0.15)",
                 rep.in_domain.accuracy, rep.shifted.accuracy, rep.accuracy_drop);
    return rep.accuracy_drop <= 0.15 && rep.shifted.accuracy > 0.70;
}

// ---- 7: AUC oracle ---------------------------------------------------

double auc_brute(const std::vector<double>& risky, const std::vector<double>& safe) {
    double wins = 0.0;
    for (double r : risky)
        for (double s : safe) wins += r > s ? 1.0 : (r == s ? 0.5 : 0.0);
    return wins / (static_cast<double>(risky.size()) * static_cast<double>(safe.size()));
}

bool criterion7(std::string& detail) {
    Rng rng(909);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t nr = 1 + rng.uniform_int(0, 49);
        const std::size_t ns = 1 + rng.uniform_int(0, 49);
        std::vector<double> risky, safe;
        for (std::size_t i = 0; i < nr; ++i)
            risky.push_back(std::round(rng.uniform() * 8) / 8.0);  // grid forces ties
        for (std::size_t i = 0; i < ns; ++i)
            safe.push_back(std::round(rng.uniform() * 8) / 8.0);
        if (pipe::auc_rank(risky, safe) != auc_brute(risky, safe)) {
            detail = fmt("rank AUC != brute force on trial %d", trial);
            return false;
        }
    }
    detail = "rank AUC equals brute-force pairwise counting on 1000 tied score sets";
    return true;
}

// ---- 8: attention explanations --------------------------------------

sg::ClipRecord threat_clip(int k) {
    const std::size_t T = 30;
    const std::size_t t_star = 21 + (k % 2);  // near-collision ~72% in
    const double d_min = 2.6 + 0.12 * k;
    const double speed = 1.0 + 0.05 * k;
    const double x_threat = (k % 2 ? -1.2 : 1.2);
    const double y_sign = (k % 3 == 2) ? -1.0 : 1.0;  // mostly ahead, some behind

    sg::ClipRecord clip;
    clip.clip_id = "threat-" + std::to_string(k);
    clip.label = RiskLabel::Risky;
    for (std::size_t t = 0; t < T; ++t) {
        const double d = d_min + speed * std::abs(static_cast<double>(t) -
                                                  static_cast<double>(t_star));
        const double y = y_sign * std::sqrt(std::max(d * d - x_threat * x_threat, 0.25));
        std::vector<ObjectState> frame;
        frame.push_back({"ego", ObjectKind::EgoCar, 0, 0, {}});
        frame.push_back({"threat", ObjectKind::Car, x_threat, y, {}});
        frame.push_back({"far1", ObjectKind::Car, 13.0 + k % 3, 6.0, {}});
        frame.push_back({"far2", ObjectKind::Car, -3.0, 22.0, {}});
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

bool criterion8(const std::optional<pipe::TrainResult>& shared, std::string& detail) {
    if (!shared) {
        detail = "attention explanations: no trained model available";
        return false;
    }
    static const std::set<std::string> kStatic = {sg::kLeftLane, sg::kMiddleLane,
                                                  sg::kRightLane, sg::kRootRoad};
    int passed = 0;
    for (int k = 0; k < 10; ++k) {
        const sg::ClipRecord clip = threat_clip(k);
        if (gen::label_clip(clip, {}) != RiskLabel::Risky) continue;  // sanity
        const auto graphs = sg::clip_to_graph_sequence(clip, {});

        model::AttentionTrace trace;
        num::NoGrad ng;
        shared->model.forward_clip(graphs, false, nullptr, &trace);

        const std::size_t T = trace.betas.size();
        double first = 0, last = 0;
        for (std::size_t t = 0; t < T / 3; ++t) first += trace.betas[t];
        for (std::size_t t = T - T / 3; t < T; ++t) last += trace.betas[t];

        std::size_t peak = 0;
        for (std::size_t t = 1; t < T; ++t)
            if (trace.betas[t] > trace.betas[peak]) peak = t;
        const auto& fr = trace.frames[peak];
        double threat_alpha = 0.0;
        std::size_t above = 0, found = 0;
        for (std::size_t i = 0; i < fr.node_ids.size(); ++i)
            if (fr.node_ids[i] == "threat") {
                threat_alpha = fr.alpha_raw[i];
                found = 1;
            }
        for (std::size_t i = 0; i < fr.node_ids.size(); ++i)
            if (!kStatic.count(fr.node_ids[i]) && fr.node_ids[i] != "threat" &&
                fr.alpha_raw[i] > threat_alpha)
                ++above;
        if (last > first && found && above <= 1) ++passed;
    }
    detail = fmt("attention localizes the threat: %d/10 constructed clips (need >= 8)",
                 passed);
    return passed >= 8;
}

// ---- 9: reproducibility ----------------------------------------------

bool criterion9(std::string& detail) {
    gen::ScenarioSpec spec;
    spec.n_clips = 60;
    spec.seed = 404;
    const auto data = to_graph_clips(gen::generate_dataset(spec, 1).clips);

    pipe::ExperimentConfig cfg;
    cfg.epochs = 5;
    cfg.n_splits = 2;
    cfg.model.gcn_widths = {16};
    cfg.model.lstm_hidden = 16;
    const std::string csv1 = pipe::metrics_csv(pipe::cross_validate(cfg, data, 1));
    const std::string csv2 = pipe::metrics_csv(pipe::cross_validate(cfg, data, 1));
    const bool csv_ok = csv1 == csv2;

    const pipe::SplitPlan plan = pipe::stratified_split(data, 0.7, 0.15, cfg.seed);
    const pipe::TrainResult tr = pipe::train(cfg, data, plan, cfg.seed);
    const std::string path = "acceptance_ckpt.json";
    model::save_checkpoint(path, tr.model, tr.meta);
    const model::Checkpoint loaded = model::load_checkpoint(path);
    const pipe::EvalResult a = pipe::evaluate(tr.model, data, plan.test);
    const pipe::EvalResult b = pipe::evaluate(loaded.model, data, plan.test);
    const bool ckpt_ok = a.accuracy == b.accuracy && a.risky_scores == b.risky_scores &&
                         a.safe_scores == b.safe_scores;

    detail = fmt("repeated xval CSV %s, checkpoint round trip %s",
                 csv_ok ? "byte-identical" : "DIFFERS",
                 ckpt_ok ? "score-identical" : "DIFFERS");
    return csv_ok && ckpt_ok;
}

// ---- 10: overfit capacity --------------------------------------------

bool criterion10(std::string& detail) {
    gen::ScenarioSpec spec;
    spec.n_clips = 10;
    spec.seed = 505;
    const auto data = to_graph_clips(gen::generate_dataset(spec, 1).clips);

    pipe::ExperimentConfig cfg;  // lr 5e-5, 200 epochs: the defaults
    cfg.batch_size = 1;
    pipe::SplitPlan plan;
    plan.train.resize(data.size());
    std::iota(plan.train.begin(), plan.train.end(), 0);
    const pipe::TrainResult tr = pipe::train(cfg, data, plan, cfg.seed);
    const pipe::EvalResult ev = pipe::evaluate(tr.model, data, plan.train);
    detail = fmt("10-clip overfit at lr 5e-5: train acc %.2f after <=200 epochs "
                 "(selected %zu)",
                 ev.accuracy, tr.meta.epoch);
    return ev.accuracy == 1.0;
}

}  // namespace

int main() {
    auto run = [](int n, auto&& fn, auto&&... args) {
        std::string detail;
        bool ok = false;
        try {
            ok = fn(args..., detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        report(n, ok, detail);
    };

    run(1, criterion1);
    run(2, criterion2);
    run(3, criterion3);

    gen::ScenarioSpec spec;
    spec.n_clips = 300;
    spec.seed = 202;
    const auto data300 = to_graph_clips(gen::generate_dataset(spec, 1).clips);
    if (count_risky(data300) * 2 != data300.size())
        std::printf("note: 300-clip dataset is not exactly balanced (%zu risky)\n",
                    count_risky(data300));

    run(4, criterion4, data300);
    run(5, criterion5, data300);

    std::optional<pipe::TrainResult> shared;
    const pipe::SplitPlan shared_plan = pipe::stratified_split(data300, 0.7, 0.15, 7);
    run(6, criterion6, data300, shared, shared_plan);
    run(7, criterion7);
    run(8, criterion8, shared);
    run(9, criterion9);
    run(10, criterion10);

    std::printf("%d of 10 criteria passed\n", 10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
