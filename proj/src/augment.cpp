#include "spoofloc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "spoofloc/common.hpp"
#include "spoofloc/fft.hpp"

namespace spoofloc {
namespace {

constexpr int kStftWindow = 1024;
constexpr int kStftHop = 256;
// Minimum region that still gives the phase vocoder a few frames to work on.
constexpr std::size_t kMinPitchRegionSamples = 2048;

using cd = std::complex<double>;

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
    return w;
}

// Frames x[m*hop : m*hop+win), windowed; returns M x (win/2+1) spectra.
std::vector<std::vector<cd>> stft(const std::vector<double>& x, int win, int hop) {
    if (x.size() < static_cast<std::size_t>(win)) {
        fail_validation("stft: signal of ", x.size(), " samples is shorter than the ", win,
                        "-sample analysis window");
    }
    const std::vector<double> w = hann_window(win);
    const std::size_t m = (x.size() - static_cast<std::size_t>(win)) /
                              static_cast<std::size_t>(hop) + 1;
    std::vector<std::vector<cd>> frames(m);
    std::vector<double> buf(win);
    for (std::size_t i = 0; i < m; ++i) {
        for (int t = 0; t < win; ++t) buf[t] = x[i * hop + t] * w[t];
        frames[i] = real_fft(buf);
    }
    return frames;
}

// Overlap-add inverse with window-square normalization; frames beyond the
// reconstructable span keep zeros.
std::vector<double> istft(const std::vector<std::vector<cd>>& frames, int win, int hop,
                          std::size_t n_out) {
    const std::vector<double> w = hann_window(win);
    std::vector<double> acc(n_out, 0.0);
    std::vector<double> wss(n_out, 0.0);
    std::vector<cd> full(win);
    for (std::size_t m = 0; m < frames.size(); ++m) {
        const auto& half = frames[m];
        for (int k = 0; k < win / 2 + 1; ++k) full[static_cast<std::size_t>(k)] = half[k];
        for (int k = win / 2 + 1; k < win; ++k) {
            full[static_cast<std::size_t>(k)] = std::conj(half[static_cast<std::size_t>(win - k)]);
        }
        fft(full, true);
        for (int t = 0; t < win; ++t) {
            const std::size_t idx = m * hop + static_cast<std::size_t>(t);
            if (idx >= n_out) break;
            acc[idx] += full[static_cast<std::size_t>(t)].real() * w[t];
            wss[idx] += w[t] * w[t];
        }
    }
    for (std::size_t i = 0; i < n_out; ++i) {
        acc[i] = wss[i] > 1e-8 ? acc[i] / wss[i] : 0.0;
    }
    return acc;
}

double wrap_phase(double phi) {
    while (phi > M_PI) phi -= 2.0 * M_PI;
    while (phi < -M_PI) phi += 2.0 * M_PI;
    return phi;
}

std::string transform_region_label(const AugmentationPolicy& policy) {
    return policy.mark_insertion_boundaries_fake ? "fake-seams" : "real";
}

} // namespace

void AugmentationPolicy::validate() const {
    if (in_training_rate < 0.0 || in_training_rate > 1.0) {
        fail_validation("augmentation policy: in_training_rate must be in [0,1], got ",
                        in_training_rate);
    }
    if (gaussian_snr_max_db <= 0.0) {
        fail_validation("augmentation policy: gaussian_snr_max_db must be positive");
    }
    if (pitch_shift_max_semitones < 0.5) {
        fail_validation("augmentation policy: pitch_shift_max_semitones must be >= 0.5");
    }
    if (insertion_boundary_s <= 0.0) {
        fail_validation("augmentation policy: insertion_boundary_s must be positive");
    }
}

std::vector<double> IdentityTransformer::transform(const std::vector<double>& samples,
                                                   int) const {
    return samples;
}

SpectralWarpTransformer::SpectralWarpTransformer(double factor) : factor_(factor) {
    if (factor < 0.9 || factor > 1.1) {
        fail_validation("spectral warp factor must lie in [0.9, 1.1], got ", factor);
    }
}

std::string SpectralWarpTransformer::name() const {
    return cat("spectral_warp_", factor_);
}

std::vector<double> SpectralWarpTransformer::transform(const std::vector<double>& samples,
                                                       int) const {
    if (samples.size() < static_cast<std::size_t>(kStftWindow)) {
        // Too short for framing; fall back to a plain resample-style warp.
        return dsp::resample_to_length(samples, samples.size());
    }
    auto frames = stft(samples, kStftWindow, kStftHop);
    const int bins = kStftWindow / 2 + 1;
    for (auto& frame : frames) {
        std::vector<cd> warped(static_cast<std::size_t>(bins));
        for (int b = 0; b < bins; ++b) {
            const double src = static_cast<double>(b) / factor_;
            const int lo = static_cast<int>(std::floor(src));
            const double frac = src - lo;
            cd v(0.0, 0.0);
            if (lo >= 0 && lo < bins) v += (1.0 - frac) * frame[static_cast<std::size_t>(lo)];
            if (lo + 1 >= 0 && lo + 1 < bins) v += frac * frame[static_cast<std::size_t>(lo + 1)];
            warped[static_cast<std::size_t>(b)] = v;
        }
        frame = std::move(warped);
    }
    std::vector<double> out = istft(frames, kStftWindow, kStftHop, samples.size());
    // The last partial window cannot be reconstructed; keep the source there.
    const std::size_t covered =
        ((samples.size() - kStftWindow) / kStftHop) * kStftHop + kStftWindow;
    for (std::size_t i = covered; i < samples.size(); ++i) out[i] = samples[i];
    return out;
}

namespace dsp {

std::vector<double> resample_to_length(const std::vector<double>& samples,
                                       std::size_t n_out) {
    if (samples.empty() || n_out == 0) fail_validation("resample_to_length: empty input");
    if (samples.size() == 1) return std::vector<double>(n_out, samples[0]);
    std::vector<double> out(n_out);
    const double scale = static_cast<double>(samples.size() - 1) /
                         static_cast<double>(n_out == 1 ? 1 : n_out - 1);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double pos = static_cast<double>(i) * scale;
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        const double b = (lo + 1 < samples.size()) ? samples[lo + 1] : samples[lo];
        out[i] = samples[lo] + frac * (b - samples[lo]);
    }
    return out;
}

std::vector<double> time_stretch(const std::vector<double>& samples, double factor) {
    if (factor <= 0.0) fail_validation("time_stretch: factor must be positive");
    const auto n_target = static_cast<std::size_t>(
        std::llround(static_cast<double>(samples.size()) * factor));
    if (samples.size() < static_cast<std::size_t>(kStftWindow)) {
        return resample_to_length(samples, n_target);
    }

    const auto frames = stft(samples, kStftWindow, kStftHop);
    const std::size_t m = frames.size();
    const int bins = kStftWindow / 2 + 1;

    // Enough synthesis frames to cover the target length; the tail is
    // trimmed, never rate-warped.
    const std::size_t k_out =
        n_target > static_cast<std::size_t>(kStftWindow)
            ? (n_target - kStftWindow + kStftHop - 1) / kStftHop + 1
            : 1;
    std::vector<std::vector<cd>> out_frames(k_out, std::vector<cd>(bins));

    std::vector<double> phase(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) phase[static_cast<std::size_t>(b)] = std::arg(frames[0][b]);

    for (std::size_t k = 0; k < k_out; ++k) {
        const double s = static_cast<double>(k) / factor;
        const auto m0 = std::min(static_cast<std::size_t>(s), m - 1);
        const std::size_t m1 = std::min(m0 + 1, m - 1);
        const double frac = std::min(s - static_cast<double>(m0), 1.0);
        for (int b = 0; b < bins; ++b) {
            const double mag =
                (1.0 - frac) * std::abs(frames[m0][b]) + frac * std::abs(frames[m1][b]);
            out_frames[k][static_cast<std::size_t>(b)] =
                std::polar(mag, phase[static_cast<std::size_t>(b)]);
        }
        // Advance phases by the measured per-hop increment at this position.
        const double omega_scale = 2.0 * M_PI * kStftHop / kStftWindow;
        for (int b = 0; b < bins; ++b) {
            const double expected = omega_scale * b;
            const double measured =
                std::arg(frames[m1][b]) - std::arg(frames[m0][b]) - expected;
            phase[static_cast<std::size_t>(b)] += expected + wrap_phase(measured);
        }
    }

    const std::size_t ola_len = (k_out - 1) * kStftHop + kStftWindow;
    std::vector<double> stretched = istft(out_frames, kStftWindow, kStftHop, ola_len);
    stretched.resize(n_target, 0.0);
    return stretched;
}

std::vector<double> pitch_shift(const std::vector<double>& samples, double semitones) {
    const double factor = std::pow(2.0, semitones / 12.0);
    // Stretch to factor times the length at constant pitch, then play it back
    // at the original length, which scales all frequencies by `factor`.
    const std::vector<double> stretched = time_stretch(samples, factor);
    return resample_to_length(stretched, samples.size());
}

} // namespace dsp

WaveExample aug_segment_replace(const WaveExample& example,
                                const SegmentTransformer& transformer, double start_s,
                                double end_s) {
    const auto [lo, hi] = sample_range(example.clip, start_s, end_s);
    if (hi <= lo) fail_validation("aug_segment_replace: empty region");
    std::vector<double> region(example.clip.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                               example.clip.samples.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<double> transformed = transformer.transform(region, example.clip.sample_rate);
    if (transformed.size() != region.size()) {
        fail_validation("segment transformer '", transformer.name(),
                        "' changed the length: ", region.size(), " -> ", transformed.size());
    }
    for (double v : transformed) {
        if (!std::isfinite(v)) {
            fail_validation("segment transformer '", transformer.name(),
                            "' produced non-finite samples");
        }
    }
    WaveExample out = example;
    std::copy(transformed.begin(), transformed.end(),
              out.clip.samples.begin() + static_cast<std::ptrdiff_t>(lo));
    out.annotations = relabel_region(example.annotations, start_s, end_s, Label::kFake);
    return out;
}

AudioClip aug_add_corpus_noise(const AudioClip& clip,
                               const std::vector<AudioClip>& noise_bank, double snr_db,
                               Rng& rng) {
    if (noise_bank.empty()) fail_validation("aug_add_corpus_noise: noise bank is empty");
    if (!std::isfinite(snr_db)) fail_validation("aug_add_corpus_noise: snr_db must be finite");
    const double signal_power = mean_power(clip.samples, 0, clip.samples.size());
    if (signal_power <= 0.0) {
        fail_validation("aug_add_corpus_noise: clip '", clip.id,
                        "' is silent, SNR is undefined");
    }

    const AudioClip& noise = noise_bank[rng.below(noise_bank.size())];
    // Tile the noise if needed and pick a random offset into it.
    const std::size_t n = clip.samples.size();
    std::vector<double> slice(n);
    const std::size_t offset =
        noise.samples.size() > n ? rng.below(noise.samples.size() - n + 1) : rng.below(noise.samples.size());
    for (std::size_t i = 0; i < n; ++i) {
        slice[i] = noise.samples[(offset + i) % noise.samples.size()];
    }
    const double noise_power = mean_power(slice, 0, n);
    if (noise_power <= 0.0) {
        fail_validation("aug_add_corpus_noise: selected noise clip '", noise.id,
                        "' is silent");
    }
    const double ratio = std::pow(10.0, snr_db / 10.0);
    const double scale = std::sqrt(signal_power / (ratio * noise_power));

    AudioClip out = clip;
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += scale * slice[i];
    return out;
}

WaveExample aug_insert_real(const WaveExample& example, const AudioClip& donor,
                            double donor_start_s, double donor_end_s, double insert_at_s,
                            Label inserted_label, const AugmentationPolicy& policy) {
    policy.validate();
    if (insert_at_s < 0.0 || insert_at_s > example.clip.duration_s() + kTilingEps) {
        fail_validation("aug_insert_real: insert point ", insert_at_s,
                        "s outside clip of duration ", example.clip.duration_s(), "s");
    }
    if (donor_end_s - donor_start_s <= 0.0) return example;
    const auto [dlo, dhi] = sample_range(donor, donor_start_s, donor_end_s);
    if (dhi <= dlo) return example;

    const auto insert_at = static_cast<std::size_t>(
        std::lrint(insert_at_s * example.clip.sample_rate));
    const double inserted_duration =
        static_cast<double>(dhi - dlo) / example.clip.sample_rate;

    WaveExample out;
    out.clip.id = example.clip.id;
    out.clip.sample_rate = example.clip.sample_rate;
    out.clip.samples.reserve(example.clip.samples.size() + (dhi - dlo));
    out.clip.samples.assign(example.clip.samples.begin(),
                            example.clip.samples.begin() + static_cast<std::ptrdiff_t>(insert_at));
    out.clip.samples.insert(out.clip.samples.end(),
                            donor.samples.begin() + static_cast<std::ptrdiff_t>(dlo),
                            donor.samples.begin() + static_cast<std::ptrdiff_t>(dhi));
    out.clip.samples.insert(out.clip.samples.end(),
                            example.clip.samples.begin() + static_cast<std::ptrdiff_t>(insert_at),
                            example.clip.samples.end());

    const double at = static_cast<double>(insert_at) / example.clip.sample_rate;
    out.annotations = insert_span(example.annotations, at, inserted_duration, inserted_label);
    if (policy.mark_insertion_boundaries_fake) {
        const double w = policy.insertion_boundary_s;
        const double total = tiling_span_s(out.annotations);
        for (double junction : {at, at + inserted_duration}) {
            const double lo = std::max(0.0, junction - w);
            const double hi = std::min(total, junction + w);
            if (hi - lo > kTilingEps) {
                out.annotations = relabel_region(out.annotations, lo, hi, Label::kFake);
            }
        }
    }
    return out;
}

WaveExample aug_pitch_shift_segment(const WaveExample& example, double start_s,
                                    double end_s, double semitones) {
    if (std::abs(semitones) < 0.5) {
        fail_validation("aug_pitch_shift_segment: |", semitones,
                        "| semitones is below the 0.5 audibility floor");
    }
    const auto [lo, hi] = sample_range(example.clip, start_s, end_s);
    if (hi - lo < kMinPitchRegionSamples) {
        fail_validation("aug_pitch_shift_segment: region of ", hi - lo,
                        " samples is too short, need ", kMinPitchRegionSamples);
    }
    std::vector<double> region(example.clip.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                               example.clip.samples.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<double> shifted = dsp::pitch_shift(region, semitones);

    WaveExample out = example;
    std::copy(shifted.begin(), shifted.end(),
              out.clip.samples.begin() + static_cast<std::ptrdiff_t>(lo));
    out.annotations = relabel_region(example.annotations, start_s, end_s, Label::kFake);
    return out;
}

WaveExample aug_gaussian_segment(const WaveExample& example, double start_s, double end_s,
                                 double snr_db, Rng& rng, double max_snr_db) {
    if (!(snr_db <= max_snr_db)) {
        fail_validation("aug_gaussian_segment: snr ", snr_db, " dB exceeds the policy max of ",
                        max_snr_db, " dB");
    }
    const auto [lo, hi] = sample_range(example.clip, start_s, end_s);
    const double signal_power = mean_power(example.clip.samples, lo, hi);
    if (signal_power <= 0.0) {
        fail_validation("aug_gaussian_segment: region [", start_s, ", ", end_s,
                        ") of clip '", example.clip.id, "' is silent, SNR is undefined");
    }
    std::vector<double> noise(hi - lo);
    for (double& v : noise) v = rng.normal();
    const double raw_power = mean_power(noise, 0, noise.size());
    const double ratio = std::pow(10.0, snr_db / 10.0);
    // Scale by the measured noise power so the achieved SNR is exact.
    const double scale = std::sqrt(signal_power / (ratio * raw_power));

    WaveExample out = example;
    for (std::size_t i = lo; i < hi; ++i) out.clip.samples[i] += scale * noise[i - lo];
    out.annotations = relabel_region(example.annotations, start_s, end_s, Label::kFake);
    return out;
}

namespace {

// Draws the region and parameters for one in-training transform. Returns the
// example unchanged if its clip cannot host any transform.
WaveExample apply_one_transform(const WaveExample& example,
                                const AugmentationPolicy& policy, Rng& rng) {
    const double duration = example.clip.duration_s();
    const double min_region_s =
        static_cast<double>(kMinPitchRegionSamples) / example.clip.sample_rate;
    if (duration < 2.0 * min_region_s) return example;

    const double len = rng.uniform(min_region_s, std::min(duration, 0.5 * duration + min_region_s));
    const double start = rng.uniform(0.0, duration - len);
    const bool use_pitch = rng.bernoulli(0.5);
    try {
        if (use_pitch) {
            const double mag = rng.uniform(0.5, policy.pitch_shift_max_semitones);
            const double semitones = rng.bernoulli(0.5) ? mag : -mag;
            return aug_pitch_shift_segment(example, start, start + len, semitones);
        }
        const double snr = policy.gaussian_snr_max_db * (1.0 - rng.uniform());
        return aug_gaussian_segment(example, start, start + len, snr, rng,
                                    policy.gaussian_snr_max_db);
    } catch (const ValidationError&) {
        // Silent region or similar; leave the example untouched.
        return example;
    }
}

} // namespace

std::vector<WaveExample> in_training_augment(const std::vector<WaveExample>& batch,
                                             const AugmentationPolicy& policy, Rng& rng) {
    policy.validate();
    std::vector<WaveExample> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng child = rng.fork(i);
        if (!child.bernoulli(policy.in_training_rate)) {
            out.push_back(batch[i]);
            continue;
        }
        out.push_back(apply_one_transform(batch[i], policy, child));
    }
    return out;
}

namespace {

// Spans of the donor's REAL-labeled audio long enough to splice from.
std::vector<SegmentAnnotation> real_spans(const Annotations& annotations, double min_len) {
    std::vector<SegmentAnnotation> spans;
    for (const SegmentAnnotation& a : annotations) {
        if (a.label == Label::kReal && a.duration_s() >= min_len) spans.push_back(a);
    }
    return spans;
}

} // namespace

std::vector<AudioClip> load_noise_bank(const std::string& dir) {
    std::vector<AudioClip> bank;
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".wav") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        bank.push_back(read_wav(p.string(), p.stem().string()));
    }
    if (bank.empty()) fail_validation("noise directory '", dir, "' contains no .wav files");
    return bank;
}

std::vector<OfflineAugmented> make_offline_augmented(
    const std::vector<WaveExample>& sources, std::uint64_t seed,
    const PrepareOptions& options, const std::vector<AudioClip>& noise_bank) {
    options.policy.validate();
    if (options.copies_per_clip < 0) {
        fail_validation("prepare: copies_per_clip must be >= 0");
    }
    if (sources.empty()) fail_validation("prepare: no source clips");

    std::vector<OfflineAugmented> out;
    out.reserve(sources.size() * static_cast<std::size_t>(options.copies_per_clip));
    Rng root(seed);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        for (int copy = 0; copy < options.copies_per_clip; ++copy) {
            Rng rng = root.fork(i * 1000003ull + static_cast<std::uint64_t>(copy));
            const WaveExample& src = sources[i];

            // Available transforms: stand-in VC and insertion always, noise
            // only with a bank.
            const int n_kinds = noise_bank.empty() ? 2 : 3;
            const auto kind = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_kinds)));

            OfflineAugmented rec;
            rec.source_id = src.clip.id;
            rec.example = src;
            if (kind == 0) {
                const double duration = src.clip.duration_s();
                const double len = rng.uniform(0.2, 0.6) * duration;
                const double start = rng.uniform(0.0, duration - len);
                const double factor = rng.bernoulli(0.5) ? rng.uniform(0.9, 0.97)
                                                         : rng.uniform(1.03, 1.1);
                const SpectralWarpTransformer warp(factor);
                rec.example = aug_segment_replace(src, warp, start, start + len);
                rec.transform = "vc_segment";
                rec.params_json = nlohmann::json(
                    {{"start_s", start}, {"end_s", start + len}, {"factor", factor}}).dump();
            } else if (kind == 1) {
                const std::size_t donor_idx = rng.below(sources.size());
                const WaveExample& donor = sources[donor_idx];
                const double min_len = 0.2;
                const auto spans = real_spans(donor.annotations, min_len);
                if (spans.empty()) {
                    // No genuine audio to splice; fall back to the stand-in VC.
                    const double duration = src.clip.duration_s();
                    const double len = rng.uniform(0.2, 0.6) * duration;
                    const double start = rng.uniform(0.0, duration - len);
                    const SpectralWarpTransformer warp(rng.uniform(1.03, 1.1));
                    rec.example = aug_segment_replace(src, warp, start, start + len);
                    rec.transform = "vc_segment";
                    rec.params_json = nlohmann::json({{"start_s", start},
                                                      {"end_s", start + len},
                                                      {"factor", warp.factor()},
                                                      {"fallback", true}}).dump();
                } else {
                    const auto& span = spans[rng.below(spans.size())];
                    const double len = rng.uniform(min_len, std::min(span.duration_s(), 0.5));
                    const double dstart = rng.uniform(span.start_s, span.end_s - len);
                    const double at = rng.uniform(0.0, src.clip.duration_s());
                    rec.example = aug_insert_real(src, donor.clip, dstart, dstart + len, at,
                                                  Label::kReal, options.policy);
                    rec.transform = "insertion";
                    rec.params_json = nlohmann::json(
                        {{"donor", donor.clip.id},
                         {"donor_start_s", dstart},
                         {"donor_end_s", dstart + len},
                         {"insert_at_s", at},
                         {"boundaries", transform_region_label(options.policy)}}).dump();
                }
            } else {
                const double snr =
                    rng.uniform(options.noise_snr_min_db, options.noise_snr_max_db);
                rec.example.clip = aug_add_corpus_noise(src.clip, noise_bank, snr, rng);
                rec.transform = "corpus_noise";
                rec.params_json = nlohmann::json({{"snr_db", snr}}).dump();
            }
            rec.example.clip.id = cat(src.clip.id, "_aug", copy);
            rec.example.annotations = merge_adjacent(rec.example.annotations);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

DatasetManifest prepare_offline(const DatasetManifest& manifest, const std::string& out_dir,
                                std::uint64_t seed, const PrepareOptions& options) {
    std::filesystem::create_directories(out_dir);

    std::vector<AudioClip> noise_bank;
    if (!options.noise_dir.empty()) noise_bank = load_noise_bank(options.noise_dir);

    std::vector<WaveExample> sources;
    sources.reserve(manifest.entries.size());
    for (const ManifestEntry& entry : manifest.entries) {
        sources.push_back({read_wav(entry.audio_path, entry.clip_id), entry.annotations});
    }

    const auto augmented = make_offline_augmented(sources, seed, options, noise_bank);

    DatasetManifest out = manifest;
    std::ofstream log(out_dir + "/augmentation_log.jsonl");
    if (!log) fail_runtime("cannot write augmentation log in ", out_dir);
    for (const OfflineAugmented& rec : augmented) {
        const std::string wav_path = cat(out_dir, "/", rec.example.clip.id, ".wav");
        write_wav(wav_path, rec.example.clip);
        out.entries.push_back({rec.example.clip.id, wav_path, rec.example.annotations});

        nlohmann::json line;
        line["source"] = rec.source_id;
        line["output"] = rec.example.clip.id;
        line["transform"] = rec.transform;
        line["params"] = nlohmann::json::parse(rec.params_json);
        line["seed"] = seed;
        log << line.dump() << "\n";
    }
    return out;
}

} // namespace spoofloc
