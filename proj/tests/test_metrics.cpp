#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spoofloc/common.hpp"
#include "spoofloc/metrics.hpp"
#include "spoofloc/rng.hpp"

using namespace spoofloc;

namespace {

ManipulationHypothesis from_labels(const std::string& id, const std::vector<int>& labels) {
    return make_hypothesis(id, frame_labels_to_segments(labels, kHopSeconds));
}

// Independent confusion-matrix oracle: walks the frame grid directly off the
// label vectors instead of going through segment arithmetic.
double oracle_f1(const std::vector<std::vector<int>>& ref_grids,
                 const std::vector<std::vector<int>>& hyp_grids) {
    long tp = 0, fp = 0, fn = 0;
    bool any_fake = false;
    for (std::size_t c = 0; c < ref_grids.size(); ++c) {
        bool clip_fake = false;
        for (int y : ref_grids[c]) clip_fake = clip_fake || y == 1;
        if (!clip_fake) continue;
        any_fake = true;
        for (std::size_t i = 0; i < ref_grids[c].size(); ++i) {
            const int r = ref_grids[c][i];
            const int h = hyp_grids[c][i];
            if (r == 1 && h == 1) tp++;
            if (r == 0 && h == 1) fp++;
            if (r == 1 && h == 0) fn++;
        }
    }
    if (!any_fake) return 1.0;
    if (tp == 0) return 0.0;
    const double p = static_cast<double>(tp) / (tp + fp);
    const double r = static_cast<double>(tp) / (tp + fn);
    return 2.0 * p * r / (p + r);
}

} // namespace

TEST_CASE("decode thresholds strictly and merges runs") {
    const auto all_fake = decode(std::vector<double>(50, 0.9), 0.5, kHopSeconds, "a");
    REQUIRE(all_fake.segments.size() == 1);
    CHECK(all_fake.segments[0].label == Label::kFake);
    CHECK(all_fake.utterance_label == Verdict::kFake);

    // Ties go REAL.
    const auto ties = decode(std::vector<double>(20, 0.5), 0.5, kHopSeconds, "t");
    REQUIRE(ties.segments.size() == 1);
    CHECK(ties.segments[0].label == Label::kReal);
    CHECK(ties.utterance_label == Verdict::kGenuine);

    const auto mid = decode({0.1, 0.9, 0.9, 0.1}, 0.5, kHopSeconds, "m");
    REQUIRE(mid.segments.size() == 3);
    CHECK(mid.segments[1].label == Label::kFake);
    CHECK(mid.segments[1].start_s == doctest::Approx(0.01));
    CHECK(mid.segments[1].end_s == doctest::Approx(0.03));

    CHECK_THROWS_AS(decode({}, 0.5, kHopSeconds, "e"), ValidationError);
    CHECK_THROWS_AS(decode({1.2}, 0.5, kHopSeconds, "b"), ValidationError);

    // Constant probabilities always produce exactly one segment.
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const double p = rng.uniform();
        const auto hyp = decode(std::vector<double>(30, p), 0.5, kHopSeconds, "c");
        CHECK(hyp.segments.size() == 1);
    }
}

TEST_CASE("a_sentence counts verdict matches") {
    std::vector<ManipulationHypothesis> refs = {
        from_labels("a", {0, 0, 0}), from_labels("b", {0, 1, 1}),
        from_labels("c", {1, 1, 1}), from_labels("d", {0, 0, 1})};
    std::vector<ManipulationHypothesis> hyps = refs;
    CHECK(a_sentence(refs, hyps) == doctest::Approx(1.0));

    // Flip every verdict.
    std::vector<ManipulationHypothesis> flipped = {
        from_labels("a", {0, 1, 0}), from_labels("b", {0, 0, 0}),
        from_labels("c", {0, 0, 0}), from_labels("d", {0, 0, 0})};
    CHECK(a_sentence(refs, flipped) == doctest::Approx(0.0));

    // Three of four correct.
    std::vector<ManipulationHypothesis> three = {
        from_labels("a", {0, 0, 0}), from_labels("b", {0, 1, 0}),
        from_labels("c", {1, 0, 1}), from_labels("d", {0, 0, 0})};
    CHECK(a_sentence(refs, three) == doctest::Approx(0.75));

    // Id mismatch errors list the differences.
    std::vector<ManipulationHypothesis> wrong_ids = {from_labels("a", {0, 0, 0}),
                                                     from_labels("x", {0, 0, 0})};
    CHECK_THROWS_WITH_AS(a_sentence(refs, wrong_ids), doctest::Contains("mismatch"),
                         ValidationError);
}

TEST_CASE("f1_segment closed cases") {
    // Perfect hypotheses.
    std::vector<ManipulationHypothesis> refs = {from_labels("a", {0, 0, 1, 1, 0}),
                                                from_labels("b", {0, 0, 0})};
    CHECK(f1_segment(refs, refs) == doctest::Approx(1.0));

    // No predicted fakes anywhere but refs contain them: zero recall.
    std::vector<ManipulationHypothesis> none = {from_labels("a", {0, 0, 0, 0, 0}),
                                                from_labels("b", {0, 0, 0})};
    CHECK(f1_segment(refs, none) == doctest::Approx(0.0));

    // Half-overlapping fake runs: P = R = 0.5.
    std::vector<int> ref_labels(30, 0), hyp_labels(30, 0);
    for (int i = 10; i < 20; ++i) ref_labels[i] = 1;
    for (int i = 15; i < 25; ++i) hyp_labels[i] = 1;
    std::vector<ManipulationHypothesis> r2 = {from_labels("x", ref_labels)};
    std::vector<ManipulationHypothesis> h2 = {from_labels("x", hyp_labels)};
    CHECK(f1_segment(r2, h2) == doctest::Approx(0.5));

    // All-real references: vacuous 1.0.
    std::vector<ManipulationHypothesis> real_refs = {from_labels("a", {0, 0, 0})};
    std::vector<ManipulationHypothesis> real_hyps = {from_labels("a", {0, 1, 0})};
    CHECK(f1_segment(real_refs, real_hyps) == doctest::Approx(1.0));
}

TEST_CASE("f1_segment matches the confusion-matrix oracle exhaustively") {
    // Single clip, every (ref, hyp) label pair of length 6.
    for (unsigned ref_mask = 0; ref_mask < 64; ++ref_mask) {
        for (unsigned hyp_mask = 0; hyp_mask < 64; ++hyp_mask) {
            std::vector<int> ref(6), hyp(6);
            for (int i = 0; i < 6; ++i) {
                ref[static_cast<std::size_t>(i)] = (ref_mask >> i) & 1;
                hyp[static_cast<std::size_t>(i)] = (hyp_mask >> i) & 1;
            }
            const double got = f1_segment({from_labels("c", ref)}, {from_labels("c", hyp)});
            const double want = oracle_f1({ref}, {hyp});
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
    }

    // Random two-clip instances up to length 10.
    Rng rng(77);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::vector<int>> refs, hyps;
        std::vector<ManipulationHypothesis> ref_h, hyp_h;
        for (int c = 0; c < 2; ++c) {
            const std::size_t n = 1 + rng.below(10);
            std::vector<int> r(n), h(n);
            for (std::size_t i = 0; i < n; ++i) {
                r[i] = rng.bernoulli(0.4) ? 1 : 0;
                h[i] = rng.bernoulli(0.4) ? 1 : 0;
            }
            refs.push_back(r);
            hyps.push_back(h);
            ref_h.push_back(from_labels(cat("c", c), r));
            hyp_h.push_back(from_labels(cat("c", c), h));
        }
        CHECK(f1_segment(ref_h, hyp_h) ==
              doctest::Approx(oracle_f1(refs, hyps)).epsilon(1e-12));
    }
}

TEST_CASE("iso_rate counts short segments of either label") {
    // One clip with a 5-frame island, the other clean.
    std::vector<int> with_island(30, 0);
    for (int i = 10; i < 15; ++i) with_island[i] = 1;
    std::vector<ManipulationHypothesis> hyps = {from_labels("a", with_island),
                                                from_labels("b", std::vector<int>(30, 0))};
    const auto [rate, count] = iso_rate(hyps);
    CHECK(count == 1);
    CHECK(rate == doctest::Approx(0.5));

    // A 6-frame segment is not isolated.
    std::vector<int> six(30, 0);
    for (int i = 10; i < 16; ++i) six[i] = 1;
    CHECK(iso_rate({from_labels("a", six)}).second == 0);

    // Three 2-frame islands in one audio, real runs of >= 6 between: rate 3.0.
    std::vector<int> three(40, 0);
    three[10] = three[11] = 1;
    three[18] = three[19] = 1;
    three[32] = three[33] = 1;
    const auto [rate3, count3] = iso_rate({from_labels("a", three)});
    CHECK(count3 == 3);
    CHECK(rate3 == doctest::Approx(3.0));

    CHECK_THROWS_AS(iso_rate({}), ValidationError);
}

TEST_CASE("merging adjacent same-label segments never increases the count") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        // Random unmerged tiling.
        Annotations segs;
        double cursor = 0.0;
        const int n = 2 + static_cast<int>(rng.below(8));
        for (int i = 0; i < n; ++i) {
            const double len = kHopSeconds * static_cast<double>(1 + rng.below(9));
            segs.push_back({cursor, cursor + len,
                            rng.bernoulli(0.5) ? Label::kFake : Label::kReal});
            cursor += len;
        }
        ManipulationHypothesis unmerged;
        unmerged.clip_id = "u";
        unmerged.segments = segs;
        unmerged.utterance_label = verdict_for(segs);
        ManipulationHypothesis merged = make_hypothesis("u", merge_adjacent(segs));
        CHECK(iso_rate({merged}).second <= iso_rate({unmerged}).second);
    }
}

TEST_CASE("score readouts") {
    CHECK(score(1.0, 1.0) == doctest::Approx(1.0));
    CHECK(score(1.0, 0.0) == doctest::Approx(0.3));
    CHECK(score(0.0, 1.0) == doctest::Approx(0.7));
    CHECK(score(0.5, 0.5) == doctest::Approx(0.5));
    CHECK_THROWS_AS(score(1.5, 0.0), ValidationError);
    CHECK_THROWS_AS(score(0.0, -0.1), ValidationError);
}

TEST_CASE("evaluate assembles a consistent report") {
    std::vector<int> ref_labels(100, 0);
    for (int i = 40; i < 70; ++i) ref_labels[i] = 1;
    std::vector<int> hyp_labels(95, 0); // 5 frames shorter: framing tail
    for (int i = 42; i < 70; ++i) hyp_labels[i] = 1;

    std::vector<ManipulationHypothesis> refs = {from_labels("a", ref_labels),
                                                from_labels("b", std::vector<int>(80, 0))};
    std::vector<ManipulationHypothesis> hyps = {from_labels("a", hyp_labels),
                                                from_labels("b", std::vector<int>(78, 0))};
    const EvalReport report = evaluate(refs, hyps);
    CHECK(report.n_audios == 2);
    CHECK(report.score ==
          doctest::Approx(0.3 * report.a_sentence + 0.7 * report.f1_segment).epsilon(1e-12));
    CHECK(report.iso_rate ==
          doctest::Approx(static_cast<double>(report.n_isolated) / 2.0).epsilon(1e-15));
    CHECK(report.per_file.size() == 2);
    CHECK(report.a_sentence == doctest::Approx(1.0));

    // Hypothesis grid longer than the reference is rejected.
    std::vector<ManipulationHypothesis> too_long = {
        from_labels("a", std::vector<int>(101, 0)), from_labels("b", std::vector<int>(78, 0))};
    CHECK_THROWS_AS(evaluate(refs, too_long), ValidationError);
    // As is a tail gap beyond the framing tolerance.
    std::vector<ManipulationHypothesis> too_short = {
        from_labels("a", std::vector<int>(80, 0)), from_labels("b", std::vector<int>(78, 0))};
    CHECK_THROWS_AS(evaluate(refs, too_short), ValidationError);
}
