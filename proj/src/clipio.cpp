#include "sgrisk/clipio.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sgrisk::sg {

using nlohmann::json;

namespace {

json object_to_json(const ObjectState& o) {
    json j;
    j["id"] = o.id;
    j["kind"] = kind_name(o.kind);
    j["x_ft"] = o.x_ft;
    j["y_ft"] = o.y_ft;
    if (o.lane_hint) j["lane_hint"] = *o.lane_hint;
    return j;
}

ObjectState object_from_json(const json& j) {
    ObjectState o;
    o.id = j.at("id").get<std::string>();
    o.kind = kind_from_name(j.at("kind").get<std::string>());
    o.x_ft = j.at("x_ft").get<double>();
    o.y_ft = j.at("y_ft").get<double>();
    if (j.contains("lane_hint")) o.lane_hint = j.at("lane_hint").get<std::string>();
    return o;
}

void validate_clip(const ClipRecord& clip) {
    if (clip.frames.empty()) throw DataError("clip '" + clip.clip_id + "' has no frames");
    for (std::size_t t = 0; t < clip.frames.size(); ++t) {
        bool has_ego = false;
        for (const auto& o : clip.frames[t]) has_ego = has_ego || o.kind == ObjectKind::EgoCar;
        if (!has_ego)
            throw DataError("clip '" + clip.clip_id + "' frame " + std::to_string(t) +
                            " has no ego vehicle");
    }
}

template <typename Fn>
auto parse_line(const std::string& line, std::size_t line_no, Fn fn) {
    try {
        return fn(json::parse(line));
    } catch (const json::exception& e) {
        throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const std::exception& e) {
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
}

}  // namespace

std::string clip_to_json_line(const ClipRecord& clip) {
    json j;
    j["clip_id"] = clip.clip_id;
    j["label"] = label_name(clip.label);
    json frames = json::array();
    for (const auto& frame : clip.frames) {
        json f = json::array();
        for (const auto& o : frame) f.push_back(object_to_json(o));
        frames.push_back(std::move(f));
    }
    j["frames"] = std::move(frames);
    j["meta"] = clip.meta_json.empty() ? json::object() : json::parse(clip.meta_json);
    return j.dump();
}

ClipRecord clip_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    ClipRecord clip;
    clip.clip_id = j.at("clip_id").get<std::string>();
    clip.label = label_from_name(j.at("label").get<std::string>());
    for (const auto& f : j.at("frames")) {
        std::vector<ObjectState> frame;
        for (const auto& o : f) frame.push_back(object_from_json(o));
        clip.frames.push_back(std::move(frame));
    }
    if (j.contains("meta")) clip.meta_json = j.at("meta").dump();
    validate_clip(clip);
    return clip;
}

std::vector<ClipRecord> load_clips(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open clip file '" + path + "'");
    std::vector<ClipRecord> clips;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        clips.push_back(parse_line(line, line_no, [](const json& j) {
            return clip_from_json_line(j.dump());
        }));
    }
    return clips;
}

void save_clips(const std::string& path, const std::vector<ClipRecord>& clips) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write clip file '" + path + "'");
    for (const auto& c : clips) out << clip_to_json_line(c) << "\n";
}

Homography load_homography_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open homography file '" + path + "'");
    Homography h;
    for (auto& x : h.m)
        if (!(in >> x)) throw DataError("homography file '" + path + "' needs 9 numbers");
    if (std::abs(h.m[8]) < 1e-12)
        throw GeometryError("homography file '" + path + "' has vanishing scale entry");
    for (auto& x : h.m) x /= h.m[8];
    h.m[8] = 1.0;
    return h;
}

void save_homography_file(const std::string& path, const Homography& h) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write homography file '" + path + "'");
    for (std::size_t i = 0; i < 9; ++i) out << h.m[i] << (i % 3 == 2 ? "\n" : " ");
}

std::vector<ClipRecord> load_detections(const std::string& path, const Homography& h) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open detections file '" + path + "'");
    std::vector<ClipRecord> clips;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        clips.push_back(parse_line(line, line_no, [&h](const json& j) {
            ClipRecord clip;
            clip.clip_id = j.at("clip_id").get<std::string>();
            clip.label = j.contains("label")
                             ? label_from_name(j.at("label").get<std::string>())
                             : RiskLabel::Safe;
            for (const auto& f : j.at("frames")) {
                std::vector<ObjectState> frame;
                const json* ego = nullptr;
                for (const auto& o : f)
                    if (kind_from_name(o.at("kind").get<std::string>()) == ObjectKind::EgoCar)
                        ego = &o;
                if (!ego) throw DataError("detections frame has no ego vehicle");
                const auto ego_ground = project_to_birdseye(
                    h, ego->at("u").get<double>(), ego->at("v").get<double>());
                for (const auto& o : f) {
                    ObjectState s;
                    s.id = o.at("id").get<std::string>();
                    s.kind = kind_from_name(o.at("kind").get<std::string>());
                    const auto ground = project_to_birdseye(h, o.at("u").get<double>(),
                                                            o.at("v").get<double>());
                    s.x_ft = ground[0] - ego_ground[0];
                    s.y_ft = ground[1] - ego_ground[1];
                    if (s.kind == ObjectKind::EgoCar) s.x_ft = s.y_ft = 0.0;
                    frame.push_back(std::move(s));
                }
                clip.frames.push_back(std::move(frame));
            }
            if (j.contains("meta")) clip.meta_json = j.at("meta").dump();
            validate_clip(clip);
            return clip;
        }));
    }
    return clips;
}

std::string graph_clip_to_json_line(const GraphClip& gc) {
    json j;
    j["clip_id"] = gc.clip_id;
    j["label"] = label_name(gc.label);
    json graphs = json::array();
    for (const auto& g : gc.graphs) {
        json nodes = json::array();
        for (const auto& n : g.nodes) nodes.push_back({n.id, n.kind});
        json edges = json::array();
        for (const auto& e : g.edges)
            edges.push_back({e.src, e.dst, relation_name(e.relation)});
        graphs.push_back({{"nodes", std::move(nodes)}, {"edges", std::move(edges)}});
    }
    j["graphs"] = std::move(graphs);
    return j.dump();
}

GraphClip graph_clip_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    GraphClip gc;
    gc.clip_id = j.at("clip_id").get<std::string>();
    gc.label = label_from_name(j.at("label").get<std::string>());
    for (const auto& gj : j.at("graphs")) {
        SceneGraph g;
        for (const auto& n : gj.at("nodes"))
            g.nodes.push_back({n.at(0).get<std::string>(), n.at(1).get<std::string>()});
        for (const auto& e : gj.at("edges"))
            g.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(),
                               relation_from_name(e.at(2).get<std::string>())});
        gc.graphs.push_back(std::move(g));
    }
    return gc;
}

std::vector<GraphClip> load_graph_clips(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open graph file '" + path + "'");
    std::vector<GraphClip> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(parse_line(line, line_no, [](const json& j) {
            return graph_clip_from_json_line(j.dump());
        }));
    }
    return out;
}

void save_graph_clips(const std::string& path, const std::vector<GraphClip>& gcs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write graph file '" + path + "'");
    for (const auto& gc : gcs) out << graph_clip_to_json_line(gc) << "\n";
}

std::vector<GraphClip> load_graphs_any(const std::string& path, const BuilderConfig& config) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset '" + path + "'");
    std::string first;
    while (std::getline(in, first) && first.empty()) {}
    in.close();
    if (first.empty()) throw DataError("dataset '" + path + "' is empty");
    bool is_graph_cache = false;
    try {
        is_graph_cache = json::parse(first).contains("graphs");
    } catch (const json::exception& e) {
        throw DataError("line 1: malformed JSON: " + std::string(e.what()));
    }
    if (is_graph_cache) return load_graph_clips(path);
    std::vector<GraphClip> out;
    for (const auto& clip : load_clips(path)) {
        GraphClip gc;
        gc.clip_id = clip.clip_id;
        gc.label = clip.label;
        gc.graphs = clip_to_graph_sequence(clip, config);
        out.push_back(std::move(gc));
    }
    return out;
}

}  // namespace sgrisk::sg
