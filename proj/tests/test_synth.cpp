#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spoofloc/audio.hpp"
#include "spoofloc/common.hpp"
#include "spoofloc/synth.hpp"

using namespace spoofloc;

namespace {

std::string fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

} // namespace

TEST_CASE("zero fake range yields an all-real corpus") {
    SynthSpec spec;
    spec.n_clips = 8;
    spec.fake_fraction_range = {0.0, 0.0};
    spec.seed = 1;
    const DatasetManifest manifest = synth_generate(spec, fresh_dir("synth_allreal"));
    REQUIRE(manifest.entries.size() == 8);
    for (const auto& e : manifest.entries) {
        for (const auto& a : e.annotations) CHECK(a.label == Label::kReal);
    }
    const CorpusStats stats = corpus_stats(manifest);
    CHECK(stats.n_fully_real == 8);
    CHECK(stats.mean_fake_fraction == doctest::Approx(0.0));
}

TEST_CASE("generation is byte-identical for a fixed seed") {
    SynthSpec spec;
    spec.n_clips = 6;
    spec.seed = 77;
    const std::string dir_a = fresh_dir("synth_det_a");
    const std::string dir_b = fresh_dir("synth_det_b");
    const DatasetManifest ma = synth_generate(spec, dir_a);
    const DatasetManifest mb = synth_generate(spec, dir_b);
    REQUIRE(ma.entries.size() == mb.entries.size());
    for (std::size_t i = 0; i < ma.entries.size(); ++i) {
        CHECK(ma.entries[i].clip_id == mb.entries[i].clip_id);
        CHECK(ma.entries[i].annotations == mb.entries[i].annotations);
        CHECK(read_bytes(ma.entries[i].audio_path) == read_bytes(mb.entries[i].audio_path));
    }
}

TEST_CASE("measured fake fraction lands in the requested range") {
    SynthSpec spec;
    spec.n_clips = 100;
    spec.clip_duration_s = 1.0;
    spec.fake_fraction_range = {0.2, 0.4};
    spec.seed = 5;
    const DatasetManifest manifest = synth_generate(spec, fresh_dir("synth_frac"));
    const CorpusStats stats = corpus_stats(manifest);
    CHECK(stats.mean_fake_fraction > 0.2);
    CHECK(stats.mean_fake_fraction < 0.4);
    // Composition quotas for sentence-level scoring.
    CHECK(stats.n_fully_real >= 5);
    CHECK(stats.n_fully_fake >= 5);
    CHECK(stats.n_partial >= 50);
}

TEST_CASE("emitted annotations tile the emitted audio exactly") {
    SynthSpec spec;
    spec.n_clips = 10;
    spec.seed = 9;
    spec.source = SynthSpec::Source::kNoiseShaped;
    const DatasetManifest manifest = synth_generate(spec, fresh_dir("synth_tiling"));
    for (const auto& e : manifest.entries) {
        const AudioClip clip = read_wav(e.audio_path, e.clip_id);
        CHECK(tiling_span_s(e.annotations) ==
              doctest::Approx(clip.duration_s()).epsilon(1e-9));
    }
}

TEST_CASE("unwritable output directory is an error") {
    SynthSpec spec;
    spec.n_clips = 1;
    CHECK_THROWS_AS(synth_generate(spec, "/proc/definitely_not_writable/x"), RuntimeError);
}
