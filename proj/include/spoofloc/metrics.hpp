#pragma once

#include <string>
#include <vector>

#include "spoofloc/annotations.hpp"
#include "spoofloc/manifest.hpp"

namespace spoofloc {

/// Thresholds frame probabilities (fake iff p > threshold, ties go REAL),
/// merges runs into segments and derives the utterance verdict.
ManipulationHypothesis decode(const std::vector<double>& probs, double threshold = 0.5,
                              double hop_s = kHopSeconds, std::string clip_id = {});

/// Reference hypotheses (merged annotation runs plus verdicts) from a
/// manifest.
std::vector<ManipulationHypothesis> references_from_manifest(const DatasetManifest& manifest);

/// Utterance-verdict accuracy over clips matched by id. Mismatching id sets
/// are an error listing the differences.
double a_sentence(const std::vector<ManipulationHypothesis>& refs,
                  const std::vector<ManipulationHypothesis>& hyps);

/// Pooled frame-level F1 of the FAKE class, restricted to clips whose
/// reference contains fake audio. Returns 1.0 vacuously when no reference
/// clip has a fake region. The hypothesis grid may be up to
/// `kMaxGridTailFrames` shorter than the reference grid (feature framing
/// drops the trailing partial window); anything else is an error.
double f1_segment(const std::vector<ManipulationHypothesis>& refs,
                  const std::vector<ManipulationHypothesis>& hyps);

/// Count of segments (either label) strictly shorter than `min_frames`,
/// over all hypotheses; rate = count / n_audios (can exceed 1).
std::pair<double, std::size_t> iso_rate(const std::vector<ManipulationHypothesis>& hyps,
                                        int min_frames = 6);

/// Challenge score: 0.3 * a + 0.7 * f1. Inputs must be in [0, 1].
double score(double a, double f1);

// Frames of reference tail the hypothesis grid is allowed to miss:
// (fft_window - hop) / hop, plus one frame of rounding slack.
inline constexpr int kMaxGridTailFrames = (kWindowSamples - kHopSamples) / kHopSamples + 1;

struct PerFileDetail {
    std::string clip_id;
    bool verdict_correct = false;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0; // fake-class frame counts
    std::size_t n_isolated = 0;
};

struct EvalReport {
    double a_sentence = 0.0;
    double f1_segment = 0.0;
    double score = 0.0;
    double iso_rate = 0.0;
    std::size_t n_isolated = 0;
    std::size_t n_audios = 0;
    std::vector<PerFileDetail> per_file;
};

EvalReport evaluate(const std::vector<ManipulationHypothesis>& refs,
                    const std::vector<ManipulationHypothesis>& hyps);

std::string report_to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::string& path);

} // namespace spoofloc
