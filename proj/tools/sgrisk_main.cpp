// sgrisk: dataset generation, graph building, training, evaluation, and
// attention export for the lane-change risk classifier.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgrisk/clipio.hpp"
#include "sgrisk/model.hpp"
#include "sgrisk/pipeline.hpp"
#include "sgrisk/scenegen.hpp"

using nlohmann::json;
using namespace sgrisk;

namespace {

// ---- logging ---------------------------------------------------------

enum class LogLevel { Error = 0, Warn, Info, Debug };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("SGRISK_LOG");
        if (!env) return LogLevel::Warn;
        const std::string s = env;
        if (s == "error") return LogLevel::Error;
        if (s == "warn") return LogLevel::Warn;
        if (s == "info") return LogLevel::Info;
        if (s == "debug") return LogLevel::Debug;
        std::cerr << "sgrisk: ignoring unknown SGRISK_LOG value '" << s << "'\n";
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (lvl <= log_level())
        std::cerr << "sgrisk [" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

// Command-specific exit code carried through main().
struct ExitError {
    int code;
    std::string message;
};

// ---- file helpers ----------------------------------------------------

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ExitError{1, "cannot open '" + path + "' for writing"};
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ExitError{1, "cannot open '" + path + "' for reading"};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sibling_path(const std::string& out, const std::string& suffix) {
    const auto dot = out.rfind(".jsonl");
    if (dot != std::string::npos && dot == out.size() - 6)
        return out.substr(0, dot) + suffix;
    const auto j = out.rfind(".json");
    if (j != std::string::npos && j == out.size() - 5) return out.substr(0, j) + suffix;
    return out + suffix;
}

// ---- run config file -------------------------------------------------

json spec_to_json(const gen::ScenarioSpec& s) {
    json j;
    j["seed"] = s.seed;
    j["n_clips"] = s.n_clips;
    j["risky_fraction"] = s.risky_fraction;
    j["frames_min"] = s.frames_min;
    j["frames_max"] = s.frames_max;
    j["vehicles_min"] = s.vehicles_min;
    j["vehicles_max"] = s.vehicles_max;
    j["pedestrians_min"] = s.pedestrians_min;
    j["pedestrians_max"] = s.pedestrians_max;
    j["speed_min_ft"] = s.speed_min_ft;
    j["speed_max_ft"] = s.speed_max_ft;
    j["lane_width_ft"] = s.lane_width_ft;
    j["noise_std_ft"] = s.noise_std_ft;
    j["domain_shift"] = s.domain_shift;
    return j;
}

gen::ScenarioSpec spec_from_json(const json& j, gen::ScenarioSpec s = {}) {
    static const std::vector<std::string> known = {
        "seed",           "n_clips",        "risky_fraction", "frames_min",
        "frames_max",     "vehicles_min",   "vehicles_max",   "pedestrians_min",
        "pedestrians_max", "speed_min_ft",  "speed_max_ft",   "lane_width_ft",
        "noise_std_ft",   "domain_shift"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown generator config key '" + key + "'");
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_clips")) s.n_clips = j.at("n_clips").get<std::size_t>();
    if (j.contains("risky_fraction")) s.risky_fraction = j.at("risky_fraction").get<double>();
    if (j.contains("frames_min")) s.frames_min = j.at("frames_min").get<std::size_t>();
    if (j.contains("frames_max")) s.frames_max = j.at("frames_max").get<std::size_t>();
    if (j.contains("vehicles_min")) s.vehicles_min = j.at("vehicles_min").get<std::size_t>();
    if (j.contains("vehicles_max")) s.vehicles_max = j.at("vehicles_max").get<std::size_t>();
    if (j.contains("pedestrians_min"))
        s.pedestrians_min = j.at("pedestrians_min").get<std::size_t>();
    if (j.contains("pedestrians_max"))
        s.pedestrians_max = j.at("pedestrians_max").get<std::size_t>();
    if (j.contains("speed_min_ft")) s.speed_min_ft = j.at("speed_min_ft").get<double>();
    if (j.contains("speed_max_ft")) s.speed_max_ft = j.at("speed_max_ft").get<double>();
    if (j.contains("lane_width_ft")) s.lane_width_ft = j.at("lane_width_ft").get<double>();
    if (j.contains("noise_std_ft")) s.noise_std_ft = j.at("noise_std_ft").get<double>();
    if (j.contains("domain_shift")) s.domain_shift = j.at("domain_shift").get<std::string>();
    return s;
}

// A run config file holds {generator, graph, model, train} sections,
// each optional; unknown keys anywhere are rejected before any work.
struct RunConfig {
    gen::ScenarioSpec generator;
    pipe::ExperimentConfig experiment;  // graph + model + train collected here
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    const json j = json::parse(read_file(path));
    for (const auto& [key, _] : j.items())
        if (key != "generator" && key != "graph" && key != "model" && key != "train")
            throw ConfigError("unknown config section '" + key + "'");
    if (j.contains("generator")) rc.generator = spec_from_json(j.at("generator"));
    json exp = json::object();
    if (j.contains("train")) exp = j.at("train");
    if (j.contains("model")) exp["model"] = j.at("model");
    if (j.contains("graph")) exp["graph"] = j.at("graph");
    rc.experiment = pipe::experiment_from_json(exp.dump());
    return rc;
}

// Resolved settings written next to every output, so a run can be
// reproduced from its artifacts alone.
std::string snapshot_json(const RunConfig& rc, bool with_generator) {
    const json exp = json::parse(pipe::experiment_to_json(rc.experiment));
    json j;
    if (with_generator) j["generator"] = spec_to_json(rc.generator);
    j["graph"] = exp.at("graph");
    j["model"] = exp.at("model");
    json train = exp;
    train.erase("model");
    train.erase("graph");
    j["train"] = std::move(train);
    return j.dump(2) + "\n";
}

std::vector<sg::GraphClip> load_dataset(const std::string& path, const RunConfig& rc) {
    log(LogLevel::Info, "loading dataset " + path);
    auto data = sg::load_graphs_any(path, rc.experiment.graph);
    log(LogLevel::Info, "loaded " + std::to_string(data.size()) + " clips");
    return data;
}

void print_eval(const std::string& tag, const pipe::EvalResult& ev) {
    std::printf("%s accuracy %.4f", tag.c_str(), ev.accuracy);
    if (ev.auc) std::printf("  auc %.4f", *ev.auc);
    std::printf("  confusion [safe->safe %zu, safe->risky %zu, risky->safe %zu, risky->risky %zu]\n",
                ev.confusion[0][0], ev.confusion[0][1], ev.confusion[1][0], ev.confusion[1][1]);
}

json eval_json(const pipe::EvalResult& ev) {
    json j;
    j["accuracy"] = ev.accuracy;
    if (ev.auc) j["auc"] = *ev.auc;
    j["confusion"] = {{ev.confusion[0][0], ev.confusion[0][1]},
                      {ev.confusion[1][0], ev.confusion[1][1]}};
    return j;
}

// ---- commands --------------------------------------------------------

int cmd_gen(const RunConfig& base, const gen::ScenarioSpec& spec, const std::string& out,
            std::size_t jobs) {
    gen::Dataset ds;
    try {
        ds = gen::generate_dataset(spec, jobs);
    } catch (const ConfigError& e) {
        throw ExitError{2, e.what()};
    }
    sg::save_clips(out, ds.clips);
    write_file(sibling_path(out, ".manifest.json"), ds.manifest_json + "\n");
    std::size_t risky = 0;
    for (const auto& c : ds.clips)
        if (c.label == sg::RiskLabel::Risky) ++risky;
    std::printf("wrote %zu clips to %s (%zu risky, fraction %.4f)\n", ds.clips.size(),
                out.c_str(), risky,
                static_cast<double>(risky) / static_cast<double>(ds.clips.size()));
    (void)base;
    return 0;
}

int cmd_build_graphs(const RunConfig& rc, const std::string& in, const std::string& out,
                     const std::string& homography_path) {
    std::vector<sg::ClipRecord> clips;
    try {
        if (!homography_path.empty()) {
            const sg::Homography h = sg::load_homography_file(homography_path);
            clips = sg::load_detections(in, h);
        } else {
            clips = sg::load_clips(in);
        }
    } catch (const DataError& e) {
        throw ExitError{3, e.what()};
    }
    std::vector<sg::GraphClip> graphs;
    graphs.reserve(clips.size());
    for (const auto& c : clips) {
        sg::GraphClip gc;
        gc.clip_id = c.clip_id;
        gc.label = c.label;
        gc.graphs = sg::clip_to_graph_sequence(c, rc.experiment.graph);
        graphs.push_back(std::move(gc));
    }
    sg::save_graph_clips(out, graphs);
    std::printf("wrote %zu graph sequences to %s\n", graphs.size(), out.c_str());
    return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data_path, const std::string& out,
              std::size_t /*jobs*/) {
    const auto data = load_dataset(data_path, rc);
    const auto& cfg = rc.experiment;
    pipe::SplitPlan plan =
        pipe::stratified_split(data, cfg.split_ratio, cfg.val_fraction, cfg.seed);
    pipe::TrainResult tr = [&] {
        try {
            return pipe::train(cfg, data, plan, cfg.seed);
        } catch (const TrainingError& e) {
            throw ExitError{4, e.what()};
        }
    }();
    model::save_checkpoint(out, tr.model, tr.meta);
    write_file(sibling_path(out, ".config.json"), snapshot_json(rc, false));
    write_file(sibling_path(out, ".log.jsonl"), pipe::training_log_jsonl(tr.log));
    const pipe::EvalResult ev = pipe::evaluate(tr.model, data, plan.test);
    std::printf("checkpoint %s (selected epoch %zu, val loss %.6f)\n", out.c_str(),
                tr.meta.epoch, tr.meta.val_loss);
    print_eval("test", ev);
    return 0;
}

int cmd_xval(const RunConfig& rc, const std::string& data_path, const std::string& out_prefix,
             std::size_t jobs) {
    const auto data = load_dataset(data_path, rc);
    pipe::MetricsReport report = [&] {
        try {
            return pipe::cross_validate(rc.experiment, data, jobs);
        } catch (const TrainingError& e) {
            throw ExitError{4, e.what()};
        }
    }();
    write_file(out_prefix + ".csv", pipe::metrics_csv(report));
    write_file(out_prefix + ".summary.json",
               pipe::metrics_summary_json(report, rc.experiment) + "\n");
    write_file(out_prefix + ".config.json", snapshot_json(rc, false));
    std::printf("%zu splits: accuracy %.4f +/- %.4f", report.splits.size(),
                report.mean_accuracy(), report.std_accuracy());
    if (report.mean_auc())
        std::printf(", auc %.4f +/- %.4f", *report.mean_auc(), *report.std_auc());
    std::printf("\n");
    return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& ckpt_path, const std::string& data_path,
             const std::string& out) {
    const auto data = load_dataset(data_path, rc);
    const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const pipe::EvalResult ev = pipe::evaluate(ckpt.model, data, all);
    print_eval("eval", ev);
    if (!out.empty()) write_file(out, eval_json(ev).dump(2) + "\n");
    return 0;
}

int cmd_ablate(const RunConfig& rc, const std::string& data_path, const pipe::AblationAxes& axes,
               const std::string& out_prefix, std::size_t jobs) {
    const auto data = load_dataset(data_path, rc);
    const auto cells = [&] {
        try {
            return pipe::ablation_sweep(rc.experiment, axes, data, jobs);
        } catch (const TrainingError& e) {
            throw ExitError{4, e.what()};
        }
    }();
    write_file(out_prefix + ".csv", pipe::ablation_csv(cells));
    write_file(out_prefix + ".config.json", snapshot_json(rc, false));
    for (const auto& c : cells)
        std::printf("%-40s accuracy %.4f +/- %.4f\n", c.label.c_str(),
                    c.report.mean_accuracy(), c.report.std_accuracy());
    return 0;
}

int cmd_transfer(const RunConfig& rc, const std::string& ckpt_path,
                 const std::string& in_domain_path, const std::string& shifted_path) {
    const auto in_domain = load_dataset(in_domain_path, rc);
    const auto shifted = load_dataset(shifted_path, rc);
    const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
    std::vector<std::size_t> all(in_domain.size());
    std::iota(all.begin(), all.end(), 0);
    pipe::TransferReport report = [&] {
        try {
            return pipe::transfer_evaluate(ckpt.model, in_domain, all, shifted);
        } catch (const ConfigError& e) {
            throw ExitError{5, e.what()};
        }
    }();
    print_eval("in-domain", report.in_domain);
    print_eval("shifted  ", report.shifted);
    std::printf("accuracy drop %.4f\n", report.accuracy_drop);
    return 0;
}

int cmd_explain(const RunConfig& rc, const std::string& ckpt_path, const std::string& data_path,
                const std::string& clip_id, const std::string& out, const std::string& csv) {
    const auto data = load_dataset(data_path, rc);
    const auto it = std::find_if(data.begin(), data.end(),
                                 [&](const sg::GraphClip& c) { return c.clip_id == clip_id; });
    if (it == data.end())
        throw ExitError{6, "clip id '" + clip_id + "' not found in " + data_path};
    const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);

    model::AttentionTrace trace;
    const num::Tensor y = ckpt.model.forward_clip(it->graphs, false, nullptr, &trace);

    json j;
    j["clip_id"] = clip_id;
    j["true_label"] = sg::label_name(it->label);
    j["predicted"] = {y.at(0), y.at(1)};
    j["betas"] = trace.betas;
    json frames = json::array();
    for (std::size_t f = 0; f < trace.frames.size(); ++f) {
        const auto& fa = trace.frames[f];
        json fj;
        fj["frame_index"] = f;
        json nodes = json::array();
        for (std::size_t n = 0; n < fa.node_ids.size(); ++n) {
            json nj;
            nj["node_id"] = fa.node_ids[n];
            nj["node_kind"] = fa.node_kinds[n];
            nj["alpha_raw"] = n < fa.alpha_raw.size() ? fa.alpha_raw[n] : 0.0;
            nj["alpha_tanh"] = n < fa.alpha_tanh.size() ? fa.alpha_tanh[n] : 0.0;
            nj["selected"] = n < fa.selected.size() ? static_cast<bool>(fa.selected[n]) : true;
            nodes.push_back(std::move(nj));
        }
        fj["nodes"] = std::move(nodes);
        frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    write_file(out, j.dump(2) + "\n");

    if (!csv.empty()) {
        std::string table = "frame,beta,node_id,node_kind,alpha_raw,alpha_tanh,selected\n";
        char buf[256];
        for (std::size_t f = 0; f < trace.frames.size(); ++f) {
            const auto& fa = trace.frames[f];
            for (std::size_t n = 0; n < fa.node_ids.size(); ++n) {
                std::snprintf(buf, sizeof buf, "%zu,%.10g,%s,%s,%.10g,%.10g,%d\n", f,
                              trace.betas[f], fa.node_ids[n].c_str(), fa.node_kinds[n].c_str(),
                              n < fa.alpha_raw.size() ? fa.alpha_raw[n] : 0.0,
                              n < fa.alpha_tanh.size() ? fa.alpha_tanh[n] : 0.0,
                              n < fa.selected.size() ? static_cast<int>(fa.selected[n]) : 1);
                table += buf;
            }
        }
        write_file(csv, table);
    }
    std::printf("wrote attention export for %s to %s (predicted %s, p_risky %.4f)\n",
                clip_id.c_str(), out.c_str(), y.at(1) > y.at(0) ? "risky" : "safe", y.at(1));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scene-graph lane-change risk classifier toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // --seed/--jobs/--config accepted after the subcommand too

    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    std::size_t jobs = 1;
    app.add_option("--config", config_path, "run config JSON file")->configurable(false);
    app.add_option("--seed", seed_flag, "override the configured seed");
    app.add_option("--jobs", jobs, "worker threads for generation / cross-validation");

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "generate a labeled clip dataset");
    std::string gen_out;
    std::optional<std::size_t> gen_n;
    std::optional<double> gen_risky_fraction, gen_noise_std;
    std::optional<std::string> gen_domain_shift;
    gen_cmd->add_option("--out", gen_out, "output clip JSONL")->required();
    gen_cmd->add_option("--n", gen_n, "number of clips");
    gen_cmd->add_option("--risky-fraction", gen_risky_fraction, "target risky fraction");
    gen_cmd->add_option("--noise-std", gen_noise_std, "positional jitter std (ft)");
    gen_cmd->add_option("--domain-shift", gen_domain_shift, "domain shift preset name");

    // build-graphs
    auto* bg_cmd = app.add_subcommand("build-graphs", "convert clips to scene-graph sequences");
    std::string bg_in, bg_out, bg_homography;
    bg_cmd->add_option("--in", bg_in, "clip or detections JSONL")->required();
    bg_cmd->add_option("--out", bg_out, "graph-sequence JSONL")->required();
    bg_cmd->add_option("--homography", bg_homography,
                       "sidecar homography file (input is detections)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train one model on a stratified split");
    std::string train_data, train_out;
    std::optional<std::size_t> train_epochs;
    std::optional<double> train_lr;
    train_cmd->add_option("--data", train_data, "clips or graphs JSONL")->required();
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--epochs", train_epochs, "training epochs");
    train_cmd->add_option("--lr", train_lr, "learning rate");

    // xval
    auto* xval_cmd = app.add_subcommand("xval", "cross-validate over stratified splits");
    std::string xval_data, xval_out = "metrics";
    std::optional<std::size_t> xval_splits, xval_epochs;
    std::optional<double> xval_lr;
    xval_cmd->add_option("--data", xval_data, "clips or graphs JSONL")->required();
    xval_cmd->add_option("--out", xval_out, "output prefix for CSV/JSON");
    xval_cmd->add_option("--splits", xval_splits, "number of stratified splits");
    xval_cmd->add_option("--epochs", xval_epochs, "training epochs");
    xval_cmd->add_option("--lr", xval_lr, "learning rate");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_out;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "clips or graphs JSONL")->required();
    eval_cmd->add_option("--out", eval_out, "optional metrics JSON path");

    // ablate
    auto* abl_cmd = app.add_subcommand("ablate", "sweep architecture axes");
    std::string abl_data, abl_out = "ablation";
    std::vector<std::string> abl_spatial, abl_pooling, abl_temporal;
    std::optional<std::size_t> abl_splits, abl_epochs;
    abl_cmd->add_option("--data", abl_data, "clips or graphs JSONL")->required();
    abl_cmd->add_option("--out", abl_out, "output prefix");
    abl_cmd->add_option("--spatial", abl_spatial, "spatial axis values (none, 1, 2, 3)")
        ->delimiter(',');
    abl_cmd->add_option("--pooling", abl_pooling, "pooling axis values (none, topk, sag)")
        ->delimiter(',');
    abl_cmd->add_option("--temporal", abl_temporal,
                        "temporal axis values (mean, lstm_last, lstm_attn)")
        ->delimiter(',');
    abl_cmd->add_option("--splits", abl_splits, "splits per cell");
    abl_cmd->add_option("--epochs", abl_epochs, "training epochs");

    // transfer
    auto* tr_cmd = app.add_subcommand("transfer", "evaluate a checkpoint across a domain shift");
    std::string tr_ckpt, tr_data, tr_on;
    tr_cmd->add_option("--from", tr_ckpt, "checkpoint path")->required();
    tr_cmd->add_option("--data", tr_data, "in-domain clips or graphs JSONL")->required();
    tr_cmd->add_option("--on", tr_on, "shifted clips or graphs JSONL")->required();

    // explain
    auto* ex_cmd = app.add_subcommand("explain", "export spatial/temporal attention for a clip");
    std::string ex_ckpt, ex_data, ex_clip, ex_out, ex_csv;
    ex_cmd->add_option("--checkpoint", ex_ckpt, "checkpoint path")->required();
    ex_cmd->add_option("--dataset", ex_data, "clips or graphs JSONL")->required();
    ex_cmd->add_option("--clip-id", ex_clip, "clip to explain")->required();
    ex_cmd->add_option("--out", ex_out, "attention export JSON path")->required();
    ex_cmd->add_option("--csv", ex_csv, "optional flat CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc;
        try {
            rc = load_run_config(config_path);
            if (seed_flag) {
                rc.generator.seed = *seed_flag;
                rc.experiment.seed = *seed_flag;
            }
        } catch (const ConfigError& e) {
            throw ExitError{2, e.what()};
        }

        if (gen_cmd->parsed()) {
            gen::ScenarioSpec spec = rc.generator;
            if (gen_n) spec.n_clips = *gen_n;
            if (gen_risky_fraction) spec.risky_fraction = *gen_risky_fraction;
            if (gen_noise_std) spec.noise_std_ft = *gen_noise_std;
            if (gen_domain_shift) spec.domain_shift = *gen_domain_shift;
            return cmd_gen(rc, spec, gen_out, jobs);
        }
        if (bg_cmd->parsed()) return cmd_build_graphs(rc, bg_in, bg_out, bg_homography);

        if (train_epochs) rc.experiment.epochs = *train_epochs;
        if (train_lr) rc.experiment.learning_rate = *train_lr;
        if (xval_splits) rc.experiment.n_splits = *xval_splits;
        if (xval_epochs) rc.experiment.epochs = *xval_epochs;
        if (xval_lr) rc.experiment.learning_rate = *xval_lr;
        if (abl_splits) rc.experiment.n_splits = *abl_splits;
        if (abl_epochs) rc.experiment.epochs = *abl_epochs;
        try {
            pipe::validate_experiment(rc.experiment);
        } catch (const ConfigError& e) {
            throw ExitError{2, e.what()};
        }

        if (train_cmd->parsed()) return cmd_train(rc, train_data, train_out, jobs);
        if (xval_cmd->parsed()) return cmd_xval(rc, xval_data, xval_out, jobs);
        if (eval_cmd->parsed()) return cmd_eval(rc, eval_ckpt, eval_data, eval_out);
        if (abl_cmd->parsed()) {
            pipe::AblationAxes axes{abl_spatial, abl_pooling, abl_temporal};
            return cmd_ablate(rc, abl_data, axes, abl_out, jobs);
        }
        if (tr_cmd->parsed()) return cmd_transfer(rc, tr_ckpt, tr_data, tr_on);
        if (ex_cmd->parsed()) return cmd_explain(rc, ex_ckpt, ex_data, ex_clip, ex_out, ex_csv);
    } catch (const ExitError& e) {
        log(LogLevel::Error, e.message);
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
