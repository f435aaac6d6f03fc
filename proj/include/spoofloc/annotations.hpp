#pragma once

#include <string>
#include <vector>

namespace spoofloc {

// 10 ms hop grid: 160 samples at 16 kHz.
inline constexpr int kSampleRate = 16000;
inline constexpr int kHopSamples = 160;
inline constexpr int kWindowSamples = 800;
inline constexpr double kHopSeconds = 0.010;

// Tolerance for seam checks between adjacent annotations (seconds).
inline constexpr double kTilingEps = 1e-9;

enum class Label { kReal = 0, kFake = 1 };

enum class Verdict { kGenuine = 0, kFake = 1 };

const char* to_string(Label label);
const char* to_string(Verdict verdict);
Label label_from_string(const std::string& s);
Verdict verdict_from_string(const std::string& s);

/// Labeled time interval [start_s, end_s) in seconds.
struct SegmentAnnotation {
    double start_s = 0.0;
    double end_s = 0.0;
    Label label = Label::kReal;

    double duration_s() const { return end_s - start_s; }
    bool operator==(const SegmentAnnotation&) const = default;
};

using Annotations = std::vector<SegmentAnnotation>;

/// Per-frame labels (and optionally fake-class probabilities) on the hop grid.
struct FrameSequence {
    std::string clip_id;
    double hop_s = kHopSeconds;
    std::vector<int> labels;
    std::vector<double> probabilities; // empty when absent

    bool operator==(const FrameSequence&) const = default;
};

/// Decoded segments plus the utterance-level verdict.
struct ManipulationHypothesis {
    std::string clip_id;
    Annotations segments;
    Verdict utterance_label = Verdict::kGenuine;

    bool operator==(const ManipulationHypothesis&) const = default;
};

/// Checks that annotations start at 0, are sorted, non-overlapping and
/// gap-free. Throws ValidationError naming the offending interval.
void validate_tiling(const Annotations& annotations);

/// Total span covered by a valid tiling.
double tiling_span_s(const Annotations& annotations);

/// Merges adjacent same-label segments into the canonical run form.
Annotations merge_adjacent(const Annotations& annotations);

/// Frame i takes the label of the annotation covering its center time
/// (i + 0.5) * hop_s. Errors if the tiling is broken or any center is
/// uncovered.
std::vector<int> annotations_to_frame_labels(const Annotations& annotations,
                                             std::size_t n_frames, double hop_s);

/// Maximal runs of identical labels become segments [i0*hop, (i1+1)*hop).
Annotations frame_labels_to_segments(const std::vector<int>& labels, double hop_s);

/// Rewrites [start_s, end_s) to `label`, preserving the tiling elsewhere.
/// Result is in canonical merged form.
Annotations relabel_region(const Annotations& annotations, double start_s,
                           double end_s, Label label);

/// Splits the tiling at `at_s`, shifts everything after it by `duration_s`
/// and inserts a segment of the given label into the gap. Used by the
/// insertion augmentation. Result is NOT merged, so the inserted interval
/// stays visible to callers.
Annotations insert_span(const Annotations& annotations, double at_s,
                        double duration_s, Label label);

/// Verdict is FAKE iff any segment is FAKE.
Verdict verdict_for(const Annotations& segments);

/// Builds a hypothesis from segments, deriving the verdict and validating
/// the tiling.
ManipulationHypothesis make_hypothesis(std::string clip_id, Annotations segments);

} // namespace spoofloc
