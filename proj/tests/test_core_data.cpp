#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spoofloc/annotations.hpp"
#include "spoofloc/audio.hpp"
#include "spoofloc/common.hpp"
#include "spoofloc/manifest.hpp"
#include "spoofloc/rng.hpp"

using namespace spoofloc;

namespace {

std::string temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "spoofloc_core_tests";
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

} // namespace

TEST_CASE("frame labels from annotations use the frame-center rule") {
    // Centers 0.005..0.055; the boundary at 0.03 splits labels 3 frames each.
    const Annotations annots = {{0.0, 0.03, Label::kReal}, {0.03, 0.06, Label::kFake}};
    CHECK(annotations_to_frame_labels(annots, 6, 0.01) ==
          std::vector<int>({0, 0, 0, 1, 1, 1}));
}

TEST_CASE("uniform annotations give uniform labels") {
    CHECK(annotations_to_frame_labels({{0.0, 1.0, Label::kReal}}, 100, 0.01) ==
          std::vector<int>(100, 0));
    const Annotations two_fake = {{0.0, 0.5, Label::kFake}, {0.5, 1.0, Label::kFake}};
    CHECK(annotations_to_frame_labels(two_fake, 100, 0.01) == std::vector<int>(100, 1));
}

TEST_CASE("broken tilings are rejected with the offending interval named") {
    const Annotations gap = {{0.0, 0.4, Label::kReal}, {0.5, 1.0, Label::kFake}};
    CHECK_THROWS_WITH_AS(annotations_to_frame_labels(gap, 10, 0.01),
                         doctest::Contains("gap before annotation [0.5, 1"),
                         ValidationError);
    const Annotations overlap = {{0.0, 0.6, Label::kReal}, {0.5, 1.0, Label::kFake}};
    CHECK_THROWS_WITH_AS(annotations_to_frame_labels(overlap, 10, 0.01),
                         doctest::Contains("overlapping annotation"), ValidationError);
    CHECK_THROWS_AS(annotations_to_frame_labels({{0.0, 0.03, Label::kReal}}, 6, 0.01),
                    ValidationError);
}

TEST_CASE("frame labels to segments is manual run-length encoding") {
    const Annotations expect = {{0.00, 0.02, Label::kReal},
                                {0.02, 0.05, Label::kFake},
                                {0.05, 0.06, Label::kReal}};
    const Annotations got = frame_labels_to_segments({0, 0, 1, 1, 1, 0}, 0.01);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].start_s == doctest::Approx(expect[i].start_s));
        CHECK(got[i].end_s == doctest::Approx(expect[i].end_s));
        CHECK(got[i].label == expect[i].label);
    }

    CHECK(frame_labels_to_segments(std::vector<int>(10, 0), 0.01).size() == 1);
    const Annotations singleton = frame_labels_to_segments({1}, 0.01);
    REQUIRE(singleton.size() == 1);
    CHECK(singleton[0].label == Label::kFake);
    CHECK(singleton[0].end_s == doctest::Approx(0.01));

    CHECK_THROWS_AS(frame_labels_to_segments({}, 0.01), ValidationError);
}

TEST_CASE("label round trip over random sequences") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<int> labels(n);
        // Correlated draws so runs of realistic length show up.
        int cur = rng.bernoulli(0.5) ? 1 : 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.15)) cur = 1 - cur;
            labels[i] = cur;
        }
        const Annotations segs = frame_labels_to_segments(labels, kHopSeconds);
        CHECK(annotations_to_frame_labels(segs, n, kHopSeconds) == labels);

        double total = 0.0;
        for (const auto& s : segs) total += s.duration_s();
        CHECK(total == doctest::Approx(static_cast<double>(n) * kHopSeconds).epsilon(1e-9));
    }
}

TEST_CASE("relabel_region keeps the tiling and changes only the region") {
    const Annotations base = {{0.0, 1.0, Label::kReal}};
    const Annotations out = relabel_region(base, 0.1, 0.2, Label::kFake);
    REQUIRE(out.size() == 3);
    CHECK(out[0].label == Label::kReal);
    CHECK(out[1].label == Label::kFake);
    CHECK(out[1].start_s == doctest::Approx(0.1));
    CHECK(out[1].end_s == doctest::Approx(0.2));
    CHECK(out[2].label == Label::kReal);
    CHECK(tiling_span_s(out) == doctest::Approx(1.0));

    // Whole-span relabel collapses to one segment.
    const Annotations whole = relabel_region(base, 0.0, 1.0, Label::kFake);
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].label == Label::kFake);

    CHECK_THROWS_AS(relabel_region(base, 0.5, 1.5, Label::kFake), ValidationError);
}

TEST_CASE("insert_span splits, shifts and preserves tiling") {
    const Annotations base = {{0.0, 0.4, Label::kReal}, {0.4, 1.0, Label::kFake}};
    const Annotations out = insert_span(base, 0.5, 0.25, Label::kReal);
    CHECK(tiling_span_s(out) == doctest::Approx(1.25));
    // The fake annotation containing 0.5 was split around the insertion.
    bool found_insert = false;
    for (const auto& a : out) {
        if (std::abs(a.start_s - 0.5) < 1e-9 && std::abs(a.end_s - 0.75) < 1e-9) {
            found_insert = true;
            CHECK(a.label == Label::kReal);
        }
    }
    CHECK(found_insert);

    CHECK(insert_span(base, 0.2, 0.0, Label::kReal) == base);
    const Annotations prepended = insert_span(base, 0.0, 0.1, Label::kFake);
    CHECK(prepended.front().start_s == doctest::Approx(0.0));
    CHECK(prepended.front().label == Label::kFake);
    CHECK(tiling_span_s(prepended) == doctest::Approx(1.1));
    CHECK_THROWS_AS(insert_span(base, 1.5, 0.1, Label::kReal), ValidationError);
}

TEST_CASE("hypothesis verdict follows segments") {
    const auto genuine = make_hypothesis("a", {{0.0, 1.0, Label::kReal}});
    CHECK(genuine.utterance_label == Verdict::kGenuine);
    const auto fake =
        make_hypothesis("b", {{0.0, 0.5, Label::kReal}, {0.5, 1.0, Label::kFake}});
    CHECK(fake.utterance_label == Verdict::kFake);
}

TEST_CASE("manifest round trip is byte stable") {
    const std::string dir = temp_dir();
    const std::string wav_path = dir + "/m_tone.wav";
    AudioClip clip;
    clip.id = "m_tone";
    clip.samples.assign(1600, 0.1);
    write_wav(wav_path, clip);

    DatasetManifest manifest;
    manifest.entries.push_back(
        {"clip_a", wav_path, {{0.0, 0.25, Label::kReal}, {0.25, 1.0, Label::kFake}}});
    manifest.entries.push_back({"clip_b", wav_path, {{0.0, 1.0 / 3.0, Label::kFake}}});

    const std::string p1 = dir + "/manifest1.jsonl";
    const std::string p2 = dir + "/manifest2.jsonl";
    save_manifest(manifest, p1);
    const DatasetManifest loaded = load_manifest(p1);
    CHECK(loaded == manifest);
    save_manifest(loaded, p2);
    CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("manifest validation errors carry line numbers") {
    const std::string dir = temp_dir();
    const std::string path = dir + "/bad.jsonl";
    {
        std::ofstream os(path);
        os << R"({"clip_id":"a","audio_path":"nope.wav","annotations":[[0.0,1.0,"real"]]})"
           << "\n";
        os << R"({"clip_id":"b","audio_path":"nope.wav","annotations":[[0.5,0.1,"real"]]})"
           << "\n";
    }
    CHECK_THROWS_WITH_AS(load_manifest(path, false), doctest::Contains(":2"),
                         ValidationError);

    // Missing audio is reported with the offending paths.
    const std::string path2 = dir + "/missing.jsonl";
    {
        std::ofstream os(path2);
        os << R"({"clip_id":"a","audio_path":"definitely_missing.wav","annotations":[[0.0,1.0,"real"]]})"
           << "\n";
    }
    CHECK_THROWS_WITH_AS(load_manifest(path2, true),
                         doctest::Contains("definitely_missing.wav"), ValidationError);

    // Empty file loads as an empty manifest.
    const std::string path3 = dir + "/empty.jsonl";
    std::ofstream(path3).close();
    CHECK(load_manifest(path3).entries.empty());
}

TEST_CASE("hypothesis file round trip is byte stable") {
    const std::string dir = temp_dir();
    std::vector<ManipulationHypothesis> hyps;
    hyps.push_back(make_hypothesis("u1", {{0.0, 0.07, Label::kReal}, {0.07, 0.2, Label::kFake}}));
    hyps.push_back(make_hypothesis("u2", {{0.0, 0.5, Label::kReal}}));
    const std::string p1 = dir + "/hyp1.jsonl";
    const std::string p2 = dir + "/hyp2.jsonl";
    save_hypotheses(hyps, p1);
    const auto loaded = load_hypotheses(p1);
    CHECK(loaded == hyps);
    save_hypotheses(loaded, p2);
    CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("wav io round trips within quantization error") {
    const std::string dir = temp_dir();
    Rng rng(7);
    AudioClip clip;
    clip.id = "w";
    clip.samples.resize(4000);
    for (double& s : clip.samples) s = 0.9 * (2.0 * rng.uniform() - 1.0);
    const std::string path = dir + "/roundtrip.wav";
    write_wav(path, clip);
    const AudioClip back = read_wav(path, "w");
    REQUIRE(back.samples.size() == clip.samples.size());
    CHECK(back.sample_rate == kSampleRate);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        CHECK(std::abs(back.samples[i] - clip.samples[i]) < 1.0 / 32000.0);
    }
}

TEST_CASE("non-16k wav input is resampled at ingestion") {
    const std::string dir = temp_dir();
    AudioClip clip8k;
    clip8k.id = "r8";
    clip8k.sample_rate = 8000;
    clip8k.samples.resize(8000);
    for (std::size_t i = 0; i < clip8k.samples.size(); ++i) {
        clip8k.samples[i] = 0.5 * std::sin(2.0 * M_PI * 200.0 * i / 8000.0);
    }
    const std::string path = dir + "/rate8k.wav";
    write_wav(path, clip8k);
    const AudioClip back = read_wav(path, "r8");
    CHECK(back.sample_rate == 16000);
    // Duration preserved within a sample or two.
    CHECK(back.samples.size() == doctest::Approx(16000).epsilon(0.001));
}

TEST_CASE("rng determinism and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

    Rng parent(42);
    parent.uniform();
    Rng c1 = parent.fork(3);
    Rng c2 = Rng(42).fork(3); // fork ignores how far the parent advanced
    CHECK(c1.uniform() == c2.uniform());

    // Serialized state restores the exact stream position.
    Rng d(9);
    d.uniform();
    const std::string state = d.serialize_state();
    const double next = d.uniform();
    Rng e(1);
    e.restore_state(state);
    CHECK(e.uniform() == next);
}
