#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spoofloc/audio.hpp"
#include "spoofloc/manifest.hpp"
#include "spoofloc/rng.hpp"

namespace spoofloc {

struct AugmentationPolicy {
    double in_training_rate = 0.2;
    double gaussian_snr_max_db = 15.0;
    // Shift magnitude is drawn from [0.5, pitch_shift_max_semitones], sign
    // uniform; |shift| < 0.5 is rejected as inaudible.
    double pitch_shift_max_semitones = 4.0;
    std::uint64_t rng_seed = 0;
    // Insertion keeps the donor label REAL by default; with this flag the
    // seam around each junction is marked FAKE instead.
    bool mark_insertion_boundaries_fake = false;
    double insertion_boundary_s = 0.010;

    void validate() const;
    bool operator==(const AugmentationPolicy&) const = default;
};

/// Length-preserving waveform transform applied to a segment before it is
/// relabeled FAKE. Stands in for the voice-conversion model.
class SegmentTransformer {
public:
    virtual ~SegmentTransformer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> transform(const std::vector<double>& samples,
                                          int sample_rate) const = 0;
};

class IdentityTransformer : public SegmentTransformer {
public:
    std::string name() const override { return "identity"; }
    std::vector<double> transform(const std::vector<double>& samples,
                                  int sample_rate) const override;
};

/// Built-in stand-in: stretches the frequency axis of each STFT frame by a
/// fixed factor in [0.9, 1.1]. Deterministic for a given factor.
class SpectralWarpTransformer : public SegmentTransformer {
public:
    explicit SpectralWarpTransformer(double factor);
    std::string name() const override;
    std::vector<double> transform(const std::vector<double>& samples,
                                  int sample_rate) const override;

    double factor() const { return factor_; }

private:
    double factor_;
};

/// Waveform plus its aligned annotations, the unit all transforms work on.
struct WaveExample {
    AudioClip clip;
    Annotations annotations;

    bool operator==(const WaveExample&) const = default;
};

/// Replaces [start_s, end_s) with the transformer output and relabels the
/// region FAKE. Samples outside the region are bit-identical.
WaveExample aug_segment_replace(const WaveExample& example,
                                const SegmentTransformer& transformer, double start_s,
                                double end_s);

/// Adds one noise-bank clip over the whole utterance at the requested SNR
/// (power ratio measured over the full clip). Labels are unchanged.
AudioClip aug_add_corpus_noise(const AudioClip& clip,
                               const std::vector<AudioClip>& noise_bank, double snr_db,
                               Rng& rng);

/// Splices donor samples [donor_start_s, donor_end_s) into the clip at
/// insert_at_s. The inserted span keeps the given label (REAL for genuine
/// donors); under the boundary policy the seams are marked FAKE.
WaveExample aug_insert_real(const WaveExample& example, const AudioClip& donor,
                            double donor_start_s, double donor_end_s, double insert_at_s,
                            Label inserted_label = Label::kReal,
                            const AugmentationPolicy& policy = {});

/// Pitch-shifts [start_s, end_s) in place (phase-vocoder stretch plus
/// resampling, length preserved) and relabels it FAKE.
WaveExample aug_pitch_shift_segment(const WaveExample& example, double start_s,
                                    double end_s, double semitones);

/// Adds Gaussian noise inside the region at an exact segment-local SNR and
/// relabels it FAKE.
WaveExample aug_gaussian_segment(const WaveExample& example, double start_s, double end_s,
                                 double snr_db, Rng& rng, double max_snr_db = 15.0);

/// Per-example stochastic transform: with probability policy.in_training_rate
/// an example gets either a pitch shift or a Gaussian segment (uniform
/// choice); everything else passes through untouched. Draws come from
/// per-example forks of `rng`, so results do not depend on batch order.
std::vector<WaveExample> in_training_augment(const std::vector<WaveExample>& batch,
                                             const AugmentationPolicy& policy, Rng& rng);

struct PrepareOptions {
    int copies_per_clip = 1;
    std::string noise_dir;    // optional noise bank for whole-clip noise
    double noise_snr_min_db = 5.0;
    double noise_snr_max_db = 15.0;
    AugmentationPolicy policy;
};

/// One augmented copy plus its provenance record.
struct OfflineAugmented {
    WaveExample example;
    std::string source_id;
    std::string transform;
    std::string params_json;
};

std::vector<AudioClip> load_noise_bank(const std::string& dir);

/// Core of the before-training expansion: copies_per_clip augmented variants
/// per source (stand-in VC on a segment, insertion of real audio, or
/// whole-clip corpus noise when a bank is available). Deterministic per seed
/// and independent of processing order.
std::vector<OfflineAugmented> make_offline_augmented(
    const std::vector<WaveExample>& sources, std::uint64_t seed,
    const PrepareOptions& options, const std::vector<AudioClip>& noise_bank);

/// Offline corpus expansion: emits augmented WAVs and a manifest holding the
/// originals plus the copies, and an augmentation log (one record per output)
/// for reproducibility.
DatasetManifest prepare_offline(const DatasetManifest& manifest,
                                const std::string& out_dir, std::uint64_t seed,
                                const PrepareOptions& options);

namespace dsp {
/// Phase-vocoder time stretch: output duration ~= factor * input duration.
std::vector<double> time_stretch(const std::vector<double>& samples, double factor);
/// Length-preserving pitch shift by the given number of semitones.
std::vector<double> pitch_shift(const std::vector<double>& samples, double semitones);
std::vector<double> resample_to_length(const std::vector<double>& samples,
                                       std::size_t n_out);
} // namespace dsp

} // namespace spoofloc
