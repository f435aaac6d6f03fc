#include "spoofloc/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

using nlohmann::json;

json annotations_to_json(const Annotations& annotations) {
    json arr = json::array();
    for (const SegmentAnnotation& a : annotations) {
        arr.push_back(json::array({a.start_s, a.end_s, to_string(a.label)}));
    }
    return arr;
}

Annotations annotations_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array()) fail_validation(where, ": 'annotations' must be an array");
    Annotations out;
    for (const json& item : arr) {
        if (!item.is_array() || item.size() != 3 || !item[0].is_number() ||
            !item[1].is_number() || !item[2].is_string()) {
            fail_validation(where, ": annotation must be [start_s, end_s, label]");
        }
        SegmentAnnotation a;
        a.start_s = item[0].get<double>();
        a.end_s = item[1].get<double>();
        a.label = label_from_string(item[2].get<std::string>());
        if (!(a.start_s < a.end_s)) {
            fail_validation(where, ": annotation end ", a.end_s,
                            " must be greater than start ", a.start_s);
        }
        out.push_back(a);
    }
    return out;
}

json parse_line(const std::string& line, const std::string& where) {
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
        fail_validation(where, ": malformed record (expected one JSON object per line)");
    }
    return rec;
}

} // namespace

DatasetManifest load_manifest(const std::string& path, bool check_audio) {
    std::ifstream is(path);
    if (!is) fail_runtime("cannot open manifest: ", path);

    DatasetManifest manifest;
    std::set<std::string> ids;
    std::vector<std::string> missing_audio;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = cat(path, ":", line_no);
        const json rec = parse_line(line, where);
        if (!rec.contains("clip_id") || !rec["clip_id"].is_string()) {
            fail_validation(where, ": missing string field 'clip_id'");
        }
        if (!rec.contains("audio_path") || !rec["audio_path"].is_string()) {
            fail_validation(where, ": missing string field 'audio_path'");
        }
        if (!rec.contains("annotations")) {
            fail_validation(where, ": missing field 'annotations'");
        }
        ManifestEntry entry;
        entry.clip_id = rec["clip_id"].get<std::string>();
        entry.audio_path = rec["audio_path"].get<std::string>();
        entry.annotations = annotations_from_json(rec["annotations"], where);
        try {
            validate_tiling(entry.annotations);
        } catch (const ValidationError& e) {
            fail_validation(where, ": ", e.what());
        }
        if (!ids.insert(entry.clip_id).second) {
            fail_validation(where, ": duplicate clip_id '", entry.clip_id, "'");
        }
        if (check_audio && !std::filesystem::exists(entry.audio_path)) {
            missing_audio.push_back(entry.audio_path);
        }
        manifest.entries.push_back(std::move(entry));
    }
    if (!missing_audio.empty()) {
        std::string joined;
        for (const std::string& p : missing_audio) joined += "\n  " + p;
        fail_validation(path, ": missing audio files:", joined);
    }
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail_runtime("cannot write manifest: ", path);
    for (const ManifestEntry& entry : manifest.entries) {
        json rec;
        rec["clip_id"] = entry.clip_id;
        rec["audio_path"] = entry.audio_path;
        rec["annotations"] = annotations_to_json(entry.annotations);
        os << rec.dump() << "\n";
    }
    if (!os) fail_runtime("failed while writing ", path);
}

void save_hypotheses(const std::vector<ManipulationHypothesis>& hypotheses,
                     const std::string& path) {
    std::ofstream os(path);
    if (!os) fail_runtime("cannot write hypothesis file: ", path);
    for (const ManipulationHypothesis& hyp : hypotheses) {
        json rec;
        rec["clip_id"] = hyp.clip_id;
        rec["segments"] = annotations_to_json(hyp.segments);
        rec["utterance_label"] = to_string(hyp.utterance_label);
        os << rec.dump() << "\n";
    }
    if (!os) fail_runtime("failed while writing ", path);
}

std::vector<ManipulationHypothesis> load_hypotheses(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail_runtime("cannot open hypothesis file: ", path);

    std::vector<ManipulationHypothesis> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = cat(path, ":", line_no);
        const json rec = parse_line(line, where);
        if (!rec.contains("clip_id") || !rec["clip_id"].is_string() ||
            !rec.contains("segments") || !rec.contains("utterance_label") ||
            !rec["utterance_label"].is_string()) {
            fail_validation(where,
                            ": hypothesis record needs clip_id, segments, utterance_label");
        }
        ManipulationHypothesis hyp;
        hyp.clip_id = rec["clip_id"].get<std::string>();
        hyp.segments = annotations_from_json(rec["segments"], where);
        hyp.utterance_label = verdict_from_string(rec["utterance_label"].get<std::string>());
        try {
            validate_tiling(hyp.segments);
        } catch (const ValidationError& e) {
            fail_validation(where, ": ", e.what());
        }
        if (verdict_for(hyp.segments) != hyp.utterance_label) {
            fail_validation(where, ": utterance_label inconsistent with segments");
        }
        if (!ids.insert(hyp.clip_id).second) {
            fail_validation(where, ": duplicate clip_id '", hyp.clip_id, "'");
        }
        out.push_back(std::move(hyp));
    }
    return out;
}

} // namespace spoofloc
