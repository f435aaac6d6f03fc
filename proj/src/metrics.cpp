#include "spoofloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

std::size_t grid_frames(const Annotations& segments, double hop_s) {
    return static_cast<std::size_t>(std::lround(tiling_span_s(segments) / hop_s));
}

// Pairs refs and hyps by clip id; both sides must cover the same id set.
std::vector<std::pair<const ManipulationHypothesis*, const ManipulationHypothesis*>>
match_by_id(const std::vector<ManipulationHypothesis>& refs,
            const std::vector<ManipulationHypothesis>& hyps) {
    std::map<std::string, const ManipulationHypothesis*> hyp_index;
    for (const auto& h : hyps) hyp_index[h.clip_id] = &h;
    if (hyp_index.size() != hyps.size()) {
        fail_validation("duplicate clip ids in hypothesis set");
    }
    std::vector<std::pair<const ManipulationHypothesis*, const ManipulationHypothesis*>> out;
    std::string missing, extra;
    std::map<std::string, bool> seen;
    for (const auto& r : refs) {
        seen[r.clip_id] = true;
        auto it = hyp_index.find(r.clip_id);
        if (it == hyp_index.end()) {
            missing += " " + r.clip_id;
            continue;
        }
        out.emplace_back(&r, it->second);
    }
    for (const auto& h : hyps) {
        if (!seen.count(h.clip_id)) extra += " " + h.clip_id;
    }
    if (!missing.empty() || !extra.empty()) {
        fail_validation("clip id mismatch between references and hypotheses;",
                        missing.empty() ? "" : cat(" missing hypotheses for:", missing),
                        extra.empty() ? "" : cat(" unexpected hypotheses:", extra));
    }
    return out;
}

struct FakeFrameCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

FakeFrameCounts count_fake_frames(const ManipulationHypothesis& ref,
                                  const ManipulationHypothesis& hyp) {
    const std::size_t n_ref = grid_frames(ref.segments, kHopSeconds);
    const std::size_t n_hyp = grid_frames(hyp.segments, kHopSeconds);
    if (n_hyp > n_ref || n_ref - n_hyp > static_cast<std::size_t>(kMaxGridTailFrames)) {
        fail_validation("clip '", ref.clip_id, "': hypothesis grid of ", n_hyp,
                        " frames does not align with reference grid of ", n_ref,
                        " frames (tail tolerance ", kMaxGridTailFrames, ")");
    }
    const auto ref_labels = annotations_to_frame_labels(ref.segments, n_hyp, kHopSeconds);
    const auto hyp_labels = annotations_to_frame_labels(hyp.segments, n_hyp, kHopSeconds);
    FakeFrameCounts counts;
    for (std::size_t i = 0; i < n_hyp; ++i) {
        if (ref_labels[i] == 1 && hyp_labels[i] == 1) ++counts.tp;
        else if (ref_labels[i] == 0 && hyp_labels[i] == 1) ++counts.fp;
        else if (ref_labels[i] == 1 && hyp_labels[i] == 0) ++counts.fn;
        else ++counts.tn;
    }
    return counts;
}

std::size_t isolated_segments(const ManipulationHypothesis& hyp, int min_frames) {
    std::size_t count = 0;
    for (const SegmentAnnotation& seg : hyp.segments) {
        const auto frames = std::lround(seg.duration_s() / kHopSeconds);
        if (frames < min_frames) ++count;
    }
    return count;
}

} // namespace

ManipulationHypothesis decode(const std::vector<double>& probs, double threshold,
                              double hop_s, std::string clip_id) {
    if (probs.empty()) fail_validation("decode: empty probability sequence");
    std::vector<int> labels(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
            fail_validation("decode: probability out of [0,1] at frame ", i, ": ", probs[i]);
        }
        labels[i] = probs[i] > threshold ? 1 : 0;
    }
    return make_hypothesis(std::move(clip_id), frame_labels_to_segments(labels, hop_s));
}

std::vector<ManipulationHypothesis> references_from_manifest(const DatasetManifest& manifest) {
    std::vector<ManipulationHypothesis> refs;
    refs.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        refs.push_back(make_hypothesis(e.clip_id, merge_adjacent(e.annotations)));
    }
    return refs;
}

double a_sentence(const std::vector<ManipulationHypothesis>& refs,
                  const std::vector<ManipulationHypothesis>& hyps) {
    const auto pairs = match_by_id(refs, hyps);
    if (pairs.empty()) fail_validation("a_sentence: no clips to score");
    std::size_t correct = 0;
    for (const auto& [ref, hyp] : pairs) {
        if (ref->utterance_label == hyp->utterance_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

double f1_segment(const std::vector<ManipulationHypothesis>& refs,
                  const std::vector<ManipulationHypothesis>& hyps) {
    const auto pairs = match_by_id(refs, hyps);
    std::size_t tp = 0, fp = 0, fn = 0;
    bool any_fake_ref = false;
    for (const auto& [ref, hyp] : pairs) {
        if (ref->utterance_label != Verdict::kFake) continue;
        any_fake_ref = true;
        const FakeFrameCounts c = count_fake_frames(*ref, *hyp);
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    if (!any_fake_ref) return 1.0;
    const double precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::pair<double, std::size_t> iso_rate(const std::vector<ManipulationHypothesis>& hyps,
                                        int min_frames) {
    if (hyps.empty()) fail_validation("iso_rate: zero audios");
    std::size_t count = 0;
    for (const auto& hyp : hyps) count += isolated_segments(hyp, min_frames);
    return {static_cast<double>(count) / static_cast<double>(hyps.size()), count};
}

double score(double a, double f1) {
    if (!(a >= 0.0 && a <= 1.0)) fail_validation("score: a_sentence out of [0,1]: ", a);
    if (!(f1 >= 0.0 && f1 <= 1.0)) fail_validation("score: f1_segment out of [0,1]: ", f1);
    return 0.3 * a + 0.7 * f1;
}

EvalReport evaluate(const std::vector<ManipulationHypothesis>& refs,
                    const std::vector<ManipulationHypothesis>& hyps) {
    const auto pairs = match_by_id(refs, hyps);
    EvalReport report;
    report.a_sentence = a_sentence(refs, hyps);
    report.f1_segment = f1_segment(refs, hyps);
    report.score = score(report.a_sentence, report.f1_segment);
    const auto [rate, count] = iso_rate(hyps);
    report.iso_rate = rate;
    report.n_isolated = count;
    report.n_audios = hyps.size();
    report.per_file.reserve(pairs.size());
    for (const auto& [ref, hyp] : pairs) {
        PerFileDetail detail;
        detail.clip_id = ref->clip_id;
        detail.verdict_correct = ref->utterance_label == hyp->utterance_label;
        if (ref->utterance_label == Verdict::kFake) {
            const FakeFrameCounts c = count_fake_frames(*ref, *hyp);
            detail.tp = c.tp;
            detail.fp = c.fp;
            detail.fn = c.fn;
            detail.tn = c.tn;
        }
        detail.n_isolated = isolated_segments(*hyp, 6);
        report.per_file.push_back(std::move(detail));
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["a_sentence"] = report.a_sentence;
    j["f1_segment"] = report.f1_segment;
    j["score"] = report.score;
    j["iso_rate"] = report.iso_rate;
    j["n_isolated"] = report.n_isolated;
    j["n_audios"] = report.n_audios;
    nlohmann::json files = nlohmann::json::array();
    for (const PerFileDetail& d : report.per_file) {
        files.push_back({{"clip_id", d.clip_id},
                         {"verdict_correct", d.verdict_correct},
                         {"tp", d.tp},
                         {"fp", d.fp},
                         {"fn", d.fn},
                         {"tn", d.tn},
                         {"n_isolated", d.n_isolated}});
    }
    j["per_file"] = files;
    return j.dump(2);
}

void save_report(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail_runtime("cannot write report: ", path);
    os << report_to_json(report) << "\n";
    if (!os) fail_runtime("failed while writing ", path);
}

} // namespace spoofloc
