#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "spoofloc/common.hpp"
#include "spoofloc/synth.hpp"
#include "spoofloc/trainer.hpp"

using namespace spoofloc;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.backbone.n_res_blocks = 2;
    cfg.backbone.conv_channels = 16;
    cfg.backbone.blstm_units_total = 16;
    cfg.mfd.channels = 8;
    return cfg;
}

const DatasetManifest& tiny_corpus() {
    static DatasetManifest manifest = [] {
        const auto dir = std::filesystem::temp_directory_path() / "spoofloc_trainer_corpus";
        std::filesystem::remove_all(dir);
        SynthSpec spec;
        spec.n_clips = 8;
        spec.clip_duration_s = 0.7;
        spec.seed = 7;
        return synth_generate(spec, dir.string());
    }();
    return manifest;
}

PaddedBatch featurized(const DatasetManifest& manifest, const MelConfig& mel_cfg,
                       double padding_value, std::size_t pad_to = 0) {
    PaddedBatch batch;
    std::size_t t_max = pad_to;
    std::vector<Eigen::MatrixXd> feats;
    for (const auto& e : manifest.entries) {
        const MelFrames mel = extract_mel(read_wav(e.audio_path, e.clip_id), mel_cfg);
        feats.push_back(normalize_features(mel.values));
        t_max = std::max(t_max, mel.n_frames());
    }
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto n = static_cast<std::size_t>(feats[i].rows());
        Eigen::MatrixXd padded = Eigen::MatrixXd::Constant(
            static_cast<Eigen::Index>(t_max), feats[i].cols(), padding_value);
        padded.topRows(feats[i].rows()) = feats[i];
        batch.features.push_back(std::move(padded));
        batch.labels.push_back(annotations_to_frame_labels(
            manifest.entries[i].annotations, n, kHopSeconds));
        batch.lengths.push_back(n);
        batch.clip_ids.push_back(manifest.entries[i].clip_id);
    }
    return batch;
}

} // namespace

TEST_CASE("adam converges on a quadratic") {
    Eigen::VectorXd theta(1);
    theta << 1.0;
    AdamState state;
    for (int i = 0; i < 300; ++i) {
        const Eigen::VectorXd grad = 2.0 * theta;
        adam_step(theta, grad, state, 0.05, 0.0);
    }
    CHECK(std::abs(theta(0)) < 1e-2);
}

TEST_CASE("smoke: all toggles off, one epoch") {
    Tagger model(tiny_model());
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 3;
    cfg.toggles = {false, false, false, false};
    const TrainResult result = train(model, tiny_corpus(), nullptr, LossConfig{}, cfg,
                                     MelConfig{}, AugmentationPolicy{});
    CHECK(result.history.size() == 1);
    CHECK(std::isfinite(result.history[0].loss));
    CHECK(!result.history[0].dev_score.has_value());
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 11;

    Tagger model_a(tiny_model());
    Tagger model_b(tiny_model());
    const TrainResult a = train(model_a, tiny_corpus(), nullptr, LossConfig{}, cfg,
                                MelConfig{}, AugmentationPolicy{});
    const TrainResult b = train(model_b, tiny_corpus(), nullptr, LossConfig{}, cfg,
                                MelConfig{}, AugmentationPolicy{});
    REQUIRE(a.best_params.size() == b.best_params.size());
    CHECK((a.best_params - b.best_params).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].loss == b.history[e].loss);
    }
}

TEST_CASE("padding never leaks into the loss") {
    const MelConfig mel_cfg;
    Tagger model(tiny_model());
    Rng rng(5);
    model.init_params(rng, /*zero_init_heads=*/false);

    // Pad with NaN: any leak would poison the loss immediately.
    const PaddedBatch poisoned =
        featurized(tiny_corpus(), mel_cfg, std::numeric_limits<double>::quiet_NaN(), 150);
    const LossBreakdown batch_loss =
        batch_loss_and_grad(model, poisoned, LossConfig{}, true, true, nullptr);
    CHECK(std::isfinite(batch_loss.total));

    // The padded-batch loss equals the mean of per-utterance losses computed
    // with no padding at all.
    double acc = 0.0;
    for (std::size_t i = 0; i < poisoned.features.size(); ++i) {
        DatasetManifest single;
        single.entries.push_back(tiny_corpus().entries[i]);
        const PaddedBatch alone = featurized(single, mel_cfg, 0.0);
        acc += batch_loss_and_grad(model, alone, LossConfig{}, true, true, nullptr).total;
    }
    acc /= static_cast<double>(poisoned.features.size());
    CHECK(batch_loss.total == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("toggle fidelity") {
    const MelConfig mel_cfg;
    Tagger model(tiny_model());
    Rng rng(9);
    model.init_params(rng, false);
    const PaddedBatch batch = featurized(tiny_corpus(), mel_cfg, 0.0);

    // use_ifp=false is exactly alpha=0.
    LossConfig with_alpha;
    with_alpha.alpha = 0.1;
    LossConfig zero_alpha;
    zero_alpha.alpha = 0.0;
    Eigen::VectorXd g1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
    Eigen::VectorXd g2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
    const LossBreakdown l1 = batch_loss_and_grad(model, batch, with_alpha, true, false, &g1);
    const LossBreakdown l2 = batch_loss_and_grad(model, batch, zero_alpha, true, true, &g2);
    CHECK(l1.total == l2.total);
    CHECK((g1 - g2).cwiseAbs().maxCoeff() == 0.0);

    // use_mfd=false matches the fusion-zeroed model on the frame path.
    Eigen::VectorXd params = model.parameters();
    for (const char* name : {"fusion.w", "fusion.b"}) {
        const auto [off, len] = model.param_span(name);
        params.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(len)).setZero();
    }
    Tagger zeroed(tiny_model());
    zeroed.set_parameters(params);
    const LossBreakdown no_mfd = batch_loss_and_grad(model, batch, with_alpha, false, true, nullptr);
    const LossBreakdown fused_zero =
        batch_loss_and_grad(zeroed, batch, with_alpha, true, true, nullptr);
    CHECK(no_mfd.single_frame == doctest::Approx(fused_zero.single_frame).epsilon(1e-15));
    CHECK(no_mfd.ifp == doctest::Approx(fused_zero.ifp).epsilon(1e-15));
    CHECK(no_mfd.mfd == 0.0);
}

TEST_CASE("loss goes down over a few epochs") {
    Tagger model(tiny_model());
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 8;
    cfg.learning_rate = 3e-3; // tiny model, aggressive rate for a fast check
    cfg.seed = 21;
    cfg.toggles.use_inaug = false;
    cfg.toggles.use_befaug = false;
    const TrainResult result = train(model, tiny_corpus(), nullptr, LossConfig{}, cfg,
                                     MelConfig{}, AugmentationPolicy{});
    CHECK(result.history.back().loss < result.history.front().loss);
}

TEST_CASE("dev selection tracks the best epoch") {
    Tagger model(tiny_model());
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 13;
    cfg.toggles.use_inaug = false;
    cfg.toggles.use_befaug = false;
    const TrainResult result = train(model, tiny_corpus(), &tiny_corpus(), LossConfig{}, cfg,
                                     MelConfig{}, AugmentationPolicy{});
    REQUIRE(result.best_epoch >= 0);
    double best = -1.0;
    for (const EpochRecord& r : result.history) {
        REQUIRE(r.dev_score.has_value());
        best = std::max(best, *r.dev_score);
    }
    CHECK(result.best_dev_score == doctest::Approx(best));
    // Returned model carries the best parameters.
    CHECK((model.parameters() - result.best_params).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ablation grid structure and dedup") {
    const auto grid = default_ablation_grid();
    REQUIRE(grid.size() == 5);
    CHECK(grid[0].first == "full");
    CHECK(grid[4].first == "-IFP-MFD-InAug-BefAug");
    // Nested removal: each row switches off one more component.
    CHECK(grid[1].second.use_ifp == false);
    CHECK(grid[2].second.use_mfd == false);
    CHECK(grid[3].second.use_inaug == false);
    CHECK(grid[4].second.use_befaug == false);

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.seed = 2;
    std::vector<std::pair<std::string, TrainToggles>> dup_grid = {
        {"full", TrainToggles{}}, {"full-again", TrainToggles{}}};
    const auto rows = ablation_run(tiny_corpus(), tiny_corpus(), tiny_corpus(), dup_grid,
                                   tiny_model(), LossConfig{}, cfg, MelConfig{},
                                   AugmentationPolicy{});
    CHECK(rows.size() == 1);

    const auto empty_rows = ablation_run(tiny_corpus(), tiny_corpus(), tiny_corpus(), {},
                                         tiny_model(), LossConfig{}, cfg, MelConfig{},
                                         AugmentationPolicy{});
    CHECK(empty_rows.empty());
}
