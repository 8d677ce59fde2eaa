#include "sgrisk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

namespace sgrisk::pipe {

using nlohmann::json;
using model::RiskModel;
using num::Tensor;
using sg::GraphClip;
using sg::RiskLabel;

void validate_experiment(const ExperimentConfig& c) {
    if (c.split_ratio <= 0.0 || c.split_ratio >= 1.0)
        throw ConfigError("split_ratio must be in (0, 1)");
    if (c.val_fraction < 0.0 || c.val_fraction >= 1.0)
        throw ConfigError("val_fraction must be in [0, 1)");
    if (c.n_splits == 0) throw ConfigError("n_splits must be positive");
    if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (c.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (c.weight_decay < 0.0 || c.weight_decay >= 1.0)
        throw ConfigError("weight_decay must be in [0, 1)");
    model::validate_config(c.model);
}

namespace {

json experiment_json(const ExperimentConfig& c) {
    json j;
    j["split_ratio"] = c.split_ratio;
    j["val_fraction"] = c.val_fraction;
    j["n_splits"] = c.n_splits;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["learning_rate"] = c.learning_rate;
    j["weight_decay"] = c.weight_decay;
    j["decay_mode"] = c.decay_mode == num::DecayMode::LrSchedule ? "lr_schedule" : "l2";
    j["seed"] = c.seed;
    j["model"] = json::parse(model::config_to_json(c.model));
    j["graph"] = {{"lane_width_ft", c.graph.lane_width_ft},
                  {"overlap_margin_ft", c.graph.overlap_margin_ft}};
    return j;
}

}  // namespace

std::string experiment_to_json(const ExperimentConfig& c) { return experiment_json(c).dump(); }

ExperimentConfig experiment_from_json(const std::string& s) {
    const json j = json::parse(s);
    static const std::vector<std::string> known = {
        "split_ratio", "val_fraction", "n_splits",  "batch_size", "epochs",
        "learning_rate", "weight_decay", "decay_mode", "seed",    "model", "graph"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown experiment config key '" + key + "'");
    ExperimentConfig c;
    if (j.contains("split_ratio")) c.split_ratio = j.at("split_ratio").get<double>();
    if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("n_splits")) c.n_splits = j.at("n_splits").get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("decay_mode")) {
        const auto m = j.at("decay_mode").get<std::string>();
        if (m == "lr_schedule") c.decay_mode = num::DecayMode::LrSchedule;
        else if (m == "l2") c.decay_mode = num::DecayMode::L2Penalty;
        else throw ConfigError("unknown decay_mode '" + m + "'");
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("model")) c.model = model::config_from_json(j.at("model").dump());
    if (j.contains("graph")) {
        const json& g = j.at("graph");
        for (const auto& [key, _] : g.items())
            if (key != "lane_width_ft" && key != "overlap_margin_ft")
                throw ConfigError("unknown graph config key '" + key + "'");
        if (g.contains("lane_width_ft")) c.graph.lane_width_ft = g.at("lane_width_ft").get<double>();
        if (g.contains("overlap_margin_ft"))
            c.graph.overlap_margin_ft = g.at("overlap_margin_ft").get<double>();
    }
    validate_experiment(c);
    return c;
}

namespace {

// Largest-remainder allocation of `total` across class counts.
std::vector<std::size_t> proportional_cut(const std::vector<std::size_t>& class_sizes,
                                          std::size_t total) {
    std::vector<std::size_t> out(class_sizes.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    const std::size_t n = std::accumulate(class_sizes.begin(), class_sizes.end(),
                                          static_cast<std::size_t>(0));
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        const double exact = static_cast<double>(total) * static_cast<double>(class_sizes[c]) /
                             static_cast<double>(n);
        out[c] = static_cast<std::size_t>(std::floor(exact));
        out[c] = std::min(out[c], class_sizes[c]);
        assigned += out[c];
        remainders.push_back({exact - std::floor(exact), c});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [_, c] : remainders) {
        if (assigned >= total) break;
        if (out[c] < class_sizes[c]) {
            ++out[c];
            ++assigned;
        }
    }
    return out;
}

}  // namespace

SplitPlan stratified_split(const std::vector<GraphClip>& data, double ratio,
                           double val_fraction, std::uint64_t seed) {
    if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("split ratio must be in (0, 1)");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < data.size(); ++i)
        by_class[data[i].label == RiskLabel::Risky ? 1 : 0].push_back(i);
    for (std::size_t c = 0; c < 2; ++c)
        if (by_class[c].size() < 2)
            throw DataError("stratified split needs >= 2 clips of class '" +
                            sg::label_name(c == 0 ? RiskLabel::Safe : RiskLabel::Risky) +
                            "', got " + std::to_string(by_class[c].size()));
    for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(derive_seed(seed, 0x51 + c));
        rng.shuffle(by_class[c]);
    }
    const std::size_t total_train = static_cast<std::size_t>(
        std::lround(ratio * static_cast<double>(data.size())));
    const auto train_per_class =
        proportional_cut({by_class[0].size(), by_class[1].size()}, total_train);

    SplitPlan plan;
    std::array<std::vector<std::size_t>, 2> train_by_class;
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < by_class[c].size(); ++i) {
            if (i < train_per_class[c]) train_by_class[c].push_back(by_class[c][i]);
            else plan.test.push_back(by_class[c][i]);
        }
    }
    const std::size_t total_val = static_cast<std::size_t>(
        std::lround(val_fraction * static_cast<double>(total_train)));
    auto val_per_class =
        proportional_cut({train_by_class[0].size(), train_by_class[1].size()}, total_val);
    for (std::size_t c = 0; c < 2; ++c) {
        // Never empty the gradient-update portion of a class.
        if (val_per_class[c] >= train_by_class[c].size() && !train_by_class[c].empty())
            val_per_class[c] = train_by_class[c].size() - 1;
        for (std::size_t i = 0; i < train_by_class[c].size(); ++i) {
            if (i < val_per_class[c]) plan.val.push_back(train_by_class[c][i]);
            else plan.train.push_back(train_by_class[c][i]);
        }
    }
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.val.begin(), plan.val.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

namespace {

std::array<double, 2> onehot(RiskLabel l) {
    return l == RiskLabel::Safe ? std::array<double, 2>{1.0, 0.0}
                                : std::array<double, 2>{0.0, 1.0};
}

std::vector<model::CompiledClip> compile_all(const RiskModel& m,
                                             const std::vector<GraphClip>& data) {
    std::vector<model::CompiledClip> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<model::CompiledGraph> frames;
        frames.reserve(data[i].graphs.size());
        for (const auto& g : data[i].graphs) frames.push_back(model::compile_graph(g, m.vocab()));
        out.push_back(model::compile_clip(frames));
    }
    return out;
}

double mean_loss_eval(const RiskModel& m,
                      const std::vector<model::CompiledClip>& compiled,
                      const std::vector<GraphClip>& data,
                      const std::vector<std::size_t>& subset,
                      const std::array<double, 2>& weights) {
    num::NoGrad ng;
    double total = 0.0;
    for (auto i : subset) {
        const Tensor y = m.forward_clip(compiled[i], false, nullptr);
        total += model::weighted_cross_entropy(y, onehot(data[i].label), weights).item();
    }
    return subset.empty() ? 0.0 : total / static_cast<double>(subset.size());
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const std::vector<GraphClip>& data,
                  const SplitPlan& plan, std::uint64_t seed) {
    validate_experiment(config);
    if (plan.train.empty()) throw DataError("empty training split");

    RiskModel m(config.model, sg::node_kind_vocab(), seed);
    const auto compiled = compile_all(m, data);

    // Class weights from the training split only: w_c = N / (2 * N_c).
    std::array<std::size_t, 2> counts{0, 0};
    for (auto i : plan.train) ++counts[data[i].label == RiskLabel::Risky ? 1 : 0];
    std::array<double, 2> weights{1.0, 1.0};
    for (std::size_t c = 0; c < 2; ++c)
        if (counts[c] > 0)
            weights[c] = static_cast<double>(plan.train.size()) /
                         (2.0 * static_cast<double>(counts[c]));

    num::AdamConfig adam;
    adam.lr = config.learning_rate;
    adam.weight_decay = config.weight_decay;
    adam.decay_mode = config.decay_mode;
    num::AdamOptimizer opt(m.params(), adam);

    Rng shuffle_rng(derive_seed(seed, 0x1));
    Rng dropout_rng(derive_seed(seed, 0x2));

    const auto& val_subset = plan.val.empty() ? plan.train : plan.val;
    TrainResult result{std::move(m), {}, {}, weights};
    RiskModel& net = result.model;
    double best_val = mean_loss_eval(net, compiled, data, val_subset, weights);
    std::size_t best_epoch = 0;
    std::vector<std::vector<double>> best_params;
    for (const auto& p : net.params()) best_params.push_back(p.tensor.values());

    std::vector<std::size_t> order = plan.train;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        opt.set_epoch(epoch);
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(start + config.batch_size, order.size());
            num::Tape::active().clear();
            opt.zero_grad();
            Tensor batch_loss;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                const Tensor y = net.forward_clip(compiled[i], true, &dropout_rng);
                const Tensor loss =
                    model::weighted_cross_entropy(y, onehot(data[i].label), weights);
                batch_loss = batch_loss.defined() ? num::add(batch_loss, loss) : loss;
            }
            batch_loss = num::div(batch_loss,
                                  Tensor::scalar(static_cast<double>(stop - start)));
            if (!std::isfinite(batch_loss.item()))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch starting at clip " + std::to_string(start));
            epoch_loss += batch_loss.item() * static_cast<double>(stop - start);
            num::backward(batch_loss);
            opt.step();
        }
        num::Tape::active().clear();
        epoch_loss /= static_cast<double>(order.size());
        const double val_loss = mean_loss_eval(net, compiled, data, val_subset, weights);
        result.log.push_back({epoch, epoch_loss, val_loss, opt.effective_lr()});
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch + 1;
            for (std::size_t p = 0; p < net.params().size(); ++p)
                best_params[p] = net.params()[p].tensor.values();
        }
    }

    for (std::size_t p = 0; p < net.params().size(); ++p)
        std::copy(best_params[p].begin(), best_params[p].end(), net.params()[p].tensor.data());
    result.meta.seed = seed;
    result.meta.epoch = best_epoch;
    result.meta.val_loss = best_val;
    return result;
}

double auc_rank(const std::vector<double>& risky_scores, const std::vector<double>& safe_scores) {
    if (risky_scores.empty() || safe_scores.empty())
        throw DataError("AUC needs scores from both classes");
    struct Entry {
        double score;
        bool risky;
    };
    std::vector<Entry> all;
    for (double s : risky_scores) all.push_back({s, true});
    for (double s : safe_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });
    // Average ranks over tie groups (1-based).
    double risky_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].risky) risky_rank_sum += avg_rank;
        i = j;
    }
    const double nr = static_cast<double>(risky_scores.size());
    const double ns = static_cast<double>(safe_scores.size());
    return (risky_rank_sum - nr * (nr + 1.0) / 2.0) / (nr * ns);
}

EvalResult evaluate(const RiskModel& m, const std::vector<GraphClip>& data,
                    const std::vector<std::size_t>& subset) {
    num::NoGrad ng;
    EvalResult res;
    std::size_t correct = 0;
    for (auto i : subset) {
        const Tensor y = m.forward_clip(data[i].graphs, false, nullptr);
        const double p_risky = y.at(1);
        const std::size_t pred = y.at(1) > y.at(0) ? 1 : 0;
        const std::size_t truth = data[i].label == RiskLabel::Risky ? 1 : 0;
        if (pred == truth) ++correct;
        ++res.confusion[truth][pred];
        (truth == 1 ? res.risky_scores : res.safe_scores).push_back(p_risky);
    }
    res.accuracy = subset.empty() ? 0.0
                                  : static_cast<double>(correct) /
                                        static_cast<double>(subset.size());
    if (!res.risky_scores.empty() && !res.safe_scores.empty())
        res.auc = auc_rank(res.risky_scores, res.safe_scores);
    return res;
}

MetricsReport cross_validate(const ExperimentConfig& config, const std::vector<GraphClip>& data,
                             std::size_t jobs) {
    validate_experiment(config);
    MetricsReport report;
    report.splits.resize(config.n_splits);
    report.config_fingerprint =
        std::to_string(std::hash<std::string>{}(experiment_to_json(config)));

    std::exception_ptr error;
    std::mutex error_mu;
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, config.n_splits));
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t s = w; s < config.n_splits; s += n_threads) {
                try {
                    const std::uint64_t split_seed = config.seed + s;
                    const SplitPlan plan = stratified_split(data, config.split_ratio,
                                                            config.val_fraction, split_seed);
                    const TrainResult tr = train(config, data, plan, split_seed);
                    const EvalResult ev = evaluate(tr.model, data, plan.test);
                    report.splits[s] = {ev.accuracy, ev.auc, tr.meta.val_loss, tr.meta.epoch};
                } catch (const std::exception& e) {
                    std::scoped_lock lk(error_mu);
                    if (!error)
                        error = std::make_exception_ptr(
                            TrainingError("split " + std::to_string(s) + ": " + e.what()));
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
    return report;
}

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

double MetricsReport::mean_accuracy() const {
    std::vector<double> acc;
    for (const auto& s : splits) acc.push_back(s.accuracy);
    return mean_of(acc);
}

double MetricsReport::std_accuracy() const {
    std::vector<double> acc;
    for (const auto& s : splits) acc.push_back(s.accuracy);
    return pop_std(acc);
}

std::optional<double> MetricsReport::mean_auc() const {
    std::vector<double> auc;
    for (const auto& s : splits) {
        if (!s.auc) return std::nullopt;
        auc.push_back(*s.auc);
    }
    return mean_of(auc);
}

std::optional<double> MetricsReport::std_auc() const {
    std::vector<double> auc;
    for (const auto& s : splits) {
        if (!s.auc) return std::nullopt;
        auc.push_back(*s.auc);
    }
    return pop_std(auc);
}

TransferReport transfer_evaluate(const RiskModel& m, const std::vector<GraphClip>& in_domain,
                                 const std::vector<std::size_t>& in_domain_subset,
                                 const std::vector<GraphClip>& shifted) {
    const auto& vocab = m.vocab();
    for (const auto& clip : shifted)
        for (const auto& g : clip.graphs)
            for (const auto& n : g.nodes)
                if (std::find(vocab.begin(), vocab.end(), n.kind) == vocab.end())
                    throw ConfigError("transfer vocabulary mismatch: node kind '" + n.kind +
                                      "' in clip '" + clip.clip_id +
                                      "' is unknown to the checkpoint");
    TransferReport report;
    report.in_domain = evaluate(m, in_domain, in_domain_subset);
    std::vector<std::size_t> all(shifted.size());
    std::iota(all.begin(), all.end(), 0);
    report.shifted = evaluate(m, shifted, all);
    report.accuracy_drop = report.in_domain.accuracy - report.shifted.accuracy;
    return report;
}

namespace {

struct SpatialChoice {
    std::string label;
    model::SpatialType type;
    std::size_t layers;
};

SpatialChoice parse_spatial(const std::string& s) {
    if (s == "none") return {"No MR-GCN", model::SpatialType::Mlp, 0};
    if (s == "1" || s == "2" || s == "3") {
        const auto n = static_cast<std::size_t>(s[0] - '0');
        return {s + " MR-GCN", model::SpatialType::Mrgcn, n};
    }
    throw ConfigError("invalid spatial axis value '" + s + "' (use none, 1, 2, or 3)");
}

std::string temporal_label(const std::string& s) {
    if (s == "mean") return "mean";
    if (s == "lstm_last") return "LSTM-last";
    if (s == "lstm_attn") return "LSTM-attn";
    throw ConfigError("invalid temporal axis value '" + s + "'");
}

}  // namespace

std::vector<AblationCell> ablation_sweep(const ExperimentConfig& base, const AblationAxes& axes,
                                         const std::vector<GraphClip>& data, std::size_t jobs) {
    validate_experiment(base);
    const std::size_t base_width =
        base.model.gcn_widths.empty() ? 64 : base.model.gcn_widths[0];
    AblationAxes eff = axes;
    if (eff.spatial.empty())
        eff.spatial = {base.model.spatial == model::SpatialType::Mlp
                           ? "none"
                           : std::to_string(base.model.gcn_widths.size())};
    if (eff.pooling.empty()) eff.pooling = {model::pooling_name(base.model.pooling)};
    if (eff.temporal.empty()) eff.temporal = {model::temporal_name(base.model.temporal)};

    std::vector<AblationCell> cells;
    for (const auto& sp : eff.spatial) {
        const SpatialChoice choice = parse_spatial(sp);
        for (const auto& pool : eff.pooling) {
            const model::PoolingVariant pv = model::pooling_from_name(pool);
            for (const auto& temp : eff.temporal) {
                ExperimentConfig cfg = base;
                cfg.model.spatial = choice.type;
                cfg.model.gcn_widths.assign(std::max<std::size_t>(choice.layers, 1), base_width);
                cfg.model.pooling = pv;
                cfg.model.temporal = model::temporal_from_name(temp);
                AblationCell cell;
                cell.spatial = sp;
                cell.pooling = pool;
                cell.temporal = temp;
                cell.label = choice.label + " + " + pool + " + " + temporal_label(temp);
                cell.report = cross_validate(cfg, data, jobs);
                cells.push_back(std::move(cell));
            }
        }
    }
    return cells;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
    std::string out = "split,accuracy,auc,val_loss,epoch_selected\n";
    for (std::size_t s = 0; s < report.splits.size(); ++s) {
        const auto& sp = report.splits[s];
        out += std::to_string(s) + "," + fmt_double(sp.accuracy) + "," +
               (sp.auc ? fmt_double(*sp.auc) : "") + "," + fmt_double(sp.val_loss) + "," +
               std::to_string(sp.epoch_selected) + "\n";
    }
    return out;
}

std::string metrics_summary_json(const MetricsReport& report, const ExperimentConfig& config) {
    json j;
    j["mean_accuracy"] = report.mean_accuracy();
    j["std_accuracy"] = report.std_accuracy();
    if (report.mean_auc()) {
        j["mean_auc"] = *report.mean_auc();
        j["std_auc"] = *report.std_auc();
    }
    json splits = json::array();
    for (const auto& s : report.splits) {
        json sj;
        sj["accuracy"] = s.accuracy;
        if (s.auc) sj["auc"] = *s.auc;
        sj["val_loss"] = s.val_loss;
        sj["epoch_selected"] = s.epoch_selected;
        splits.push_back(std::move(sj));
    }
    j["splits"] = std::move(splits);
    j["config_fingerprint"] = report.config_fingerprint;
    j["config"] = experiment_json(config);
    return j.dump();
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
    std::string out = "cell,spatial,pooling,temporal,mean_accuracy,std_accuracy,mean_auc,std_auc\n";
    for (const auto& c : cells) {
        out += "\"" + c.label + "\"," + c.spatial + "," + c.pooling + "," + c.temporal + "," +
               fmt_double(c.report.mean_accuracy()) + "," + fmt_double(c.report.std_accuracy()) +
               "," + (c.report.mean_auc() ? fmt_double(*c.report.mean_auc()) : "") + "," +
               (c.report.std_auc() ? fmt_double(*c.report.std_auc()) : "") + "\n";
    }
    return out;
}

std::string training_log_jsonl(const std::vector<EpochLog>& log) {
    std::string out;
    for (const auto& e : log) {
        json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["val_loss"] = e.val_loss;
        j["lr"] = e.lr;
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace sgrisk::pipe
