#include "spoofloc/annotations.hpp"

#include <algorithm>
#include <cmath>

#include "spoofloc/common.hpp"

namespace spoofloc {

const char* to_string(Label label) {
    return label == Label::kFake ? "fake" : "real";
}

const char* to_string(Verdict verdict) {
    return verdict == Verdict::kFake ? "fake" : "genuine";
}

Label label_from_string(const std::string& s) {
    if (s == "real") return Label::kReal;
    if (s == "fake") return Label::kFake;
    fail_validation("unknown segment label '", s, "' (expected 'real' or 'fake')");
}

Verdict verdict_from_string(const std::string& s) {
    if (s == "genuine") return Verdict::kGenuine;
    if (s == "fake") return Verdict::kFake;
    fail_validation("unknown utterance label '", s, "' (expected 'genuine' or 'fake')");
}

namespace {

std::string interval_str(const SegmentAnnotation& a) {
    return cat("[", a.start_s, ", ", a.end_s, ", ", to_string(a.label), "]");
}

} // namespace

void validate_tiling(const Annotations& annotations) {
    if (annotations.empty()) fail_validation("annotation list is empty");
    if (std::abs(annotations.front().start_s) > kTilingEps) {
        fail_validation("annotations must start at 0, first interval is ",
                        interval_str(annotations.front()));
    }
    double cursor = 0.0;
    for (const SegmentAnnotation& a : annotations) {
        if (!(a.start_s < a.end_s)) {
            fail_validation("degenerate annotation ", interval_str(a));
        }
        const double seam = a.start_s - cursor;
        if (seam > kTilingEps) {
            fail_validation("gap before annotation ", interval_str(a),
                            " (previous interval ends at ", cursor, ")");
        }
        if (seam < -kTilingEps) {
            fail_validation("overlapping annotation ", interval_str(a),
                            " (previous interval ends at ", cursor, ")");
        }
        cursor = a.end_s;
    }
}

double tiling_span_s(const Annotations& annotations) {
    validate_tiling(annotations);
    return annotations.back().end_s;
}

Annotations merge_adjacent(const Annotations& annotations) {
    validate_tiling(annotations);
    Annotations out;
    for (const SegmentAnnotation& a : annotations) {
        if (!out.empty() && out.back().label == a.label) {
            out.back().end_s = a.end_s;
        } else {
            out.push_back(a);
        }
    }
    return out;
}

std::vector<int> annotations_to_frame_labels(const Annotations& annotations,
                                             std::size_t n_frames, double hop_s) {
    validate_tiling(annotations);
    if (n_frames == 0) fail_validation("annotations_to_frame_labels: n_frames == 0");
    if (hop_s <= 0.0) fail_validation("annotations_to_frame_labels: hop_s must be positive");

    std::vector<int> labels(n_frames, 0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_frames; ++i) {
        const double center = (static_cast<double>(i) + 0.5) * hop_s;
        while (k < annotations.size() && annotations[k].end_s <= center) ++k;
        if (k == annotations.size()) {
            fail_validation("frame center ", center, "s not covered; annotations end at ",
                            annotations.back().end_s, "s");
        }
        labels[i] = annotations[k].label == Label::kFake ? 1 : 0;
    }
    return labels;
}

Annotations frame_labels_to_segments(const std::vector<int>& labels, double hop_s) {
    if (labels.empty()) fail_validation("frame_labels_to_segments: empty label sequence");
    if (hop_s <= 0.0) fail_validation("frame_labels_to_segments: hop_s must be positive");

    Annotations out;
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= labels.size(); ++i) {
        if (i == labels.size() || labels[i] != labels[run_start]) {
            out.push_back({static_cast<double>(run_start) * hop_s,
                           static_cast<double>(i) * hop_s,
                           labels[run_start] ? Label::kFake : Label::kReal});
            run_start = i;
        }
    }
    return out;
}

Annotations relabel_region(const Annotations& annotations, double start_s,
                           double end_s, Label label) {
    const double span = tiling_span_s(annotations);
    if (!(start_s < end_s)) {
        fail_validation("relabel_region: empty region [", start_s, ", ", end_s, ")");
    }
    if (start_s < -kTilingEps || end_s > span + kTilingEps) {
        fail_validation("relabel_region: region [", start_s, ", ", end_s,
                        ") outside annotated span [0, ", span, ")");
    }
    start_s = std::max(start_s, 0.0);
    end_s = std::min(end_s, span);

    Annotations out;
    for (const SegmentAnnotation& a : annotations) {
        // Pieces of `a` strictly before / after the region keep their label.
        if (a.start_s < start_s) {
            out.push_back({a.start_s, std::min(a.end_s, start_s), a.label});
        }
        if (a.end_s > end_s) {
            out.push_back({std::max(a.start_s, end_s), a.end_s, a.label});
        }
    }
    out.push_back({start_s, end_s, label});
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        return x.start_s < y.start_s;
    });
    out.erase(std::remove_if(out.begin(), out.end(),
                             [](const auto& a) { return a.end_s - a.start_s <= kTilingEps; }),
              out.end());
    return merge_adjacent(out);
}

Annotations insert_span(const Annotations& annotations, double at_s,
                        double duration_s, Label label) {
    const double span = tiling_span_s(annotations);
    if (duration_s < 0.0) fail_validation("insert_span: negative duration");
    if (at_s < -kTilingEps || at_s > span + kTilingEps) {
        fail_validation("insert_span: insert point ", at_s, "s outside clip span [0, ",
                        span, "]");
    }
    if (duration_s == 0.0) return annotations;

    Annotations out;
    for (const SegmentAnnotation& a : annotations) {
        if (a.end_s <= at_s + kTilingEps) {
            out.push_back(a);
        } else if (a.start_s >= at_s - kTilingEps) {
            out.push_back({a.start_s + duration_s, a.end_s + duration_s, a.label});
        } else {
            out.push_back({a.start_s, at_s, a.label});
            out.push_back({at_s + duration_s, a.end_s + duration_s, a.label});
        }
    }
    out.push_back({at_s, at_s + duration_s, label});
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        return x.start_s < y.start_s;
    });
    validate_tiling(out);
    return out;
}

Verdict verdict_for(const Annotations& segments) {
    for (const SegmentAnnotation& s : segments) {
        if (s.label == Label::kFake) return Verdict::kFake;
    }
    return Verdict::kGenuine;
}

ManipulationHypothesis make_hypothesis(std::string clip_id, Annotations segments) {
    validate_tiling(segments);
    ManipulationHypothesis hyp;
    hyp.clip_id = std::move(clip_id);
    hyp.utterance_label = verdict_for(segments);
    hyp.segments = std::move(segments);
    return hyp;
}

} // namespace spoofloc
