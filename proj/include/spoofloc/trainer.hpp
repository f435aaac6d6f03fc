#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spoofloc/augment.hpp"
#include "spoofloc/losses.hpp"
#include "spoofloc/manifest.hpp"
#include "spoofloc/mel.hpp"
#include "spoofloc/metrics.hpp"
#include "spoofloc/model.hpp"

namespace spoofloc {

struct TrainToggles {
    bool use_mfd = true;
    bool use_ifp = true;
    bool use_befaug = true;
    bool use_inaug = true;

    bool operator==(const TrainToggles&) const = default;
};

struct TrainConfig {
    int batch_size = 64;
    int epochs = 100;
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    std::uint64_t seed = 0;
    TrainToggles toggles;
    int befaug_copies = 1; // augmented copies per clip when use_befaug is on

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Adam with L2 weight decay folded into the gradient.
struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               double learning_rate, double weight_decay);

/// Mini-batch padded to the longest utterance. Rows at and beyond
/// lengths[i] are padding and must never reach any loss term.
struct PaddedBatch {
    std::vector<Eigen::MatrixXd> features; // each T_max x n_mels
    std::vector<std::vector<int>> labels;  // true length lengths[i]
    std::vector<std::size_t> lengths;
    std::vector<std::string> clip_ids;
};

/// Mean loss over the batch; when `grad` is non-null the mean parameter
/// gradient is accumulated into it. Work is split across a fixed number of
/// groups and reduced in group order, so results are bit-stable regardless
/// of thread scheduling.
LossBreakdown batch_loss_and_grad(const Tagger& model, const PaddedBatch& batch,
                                  const LossConfig& loss_cfg, bool use_mfd, bool use_ifp,
                                  Eigen::VectorXd* grad);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double loss_sf = 0.0;
    double loss_mfd = 0.0;
    double ifp = 0.0;
    std::optional<double> dev_score;
};

struct TrainResult {
    Eigen::VectorXd best_params;
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_dev_score = 0.0;
    std::string final_rng_state;
};

/// Per-step log callback: (epoch, step, losses).
using StepLogger = std::function<void(int, int, const LossBreakdown&)>;

/// Runs mini-batch training. With use_befaug the corpus is expanded in
/// memory before the first epoch (the file-based equivalent is `prepare`).
/// The best checkpoint is selected by dev score when a dev manifest is
/// given, otherwise the final parameters are returned.
TrainResult train(Tagger& model, const DatasetManifest& train_manifest,
                  const DatasetManifest* dev_manifest, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const MelConfig& mel_cfg,
                  const AugmentationPolicy& policy, const StepLogger& step_logger = {});

/// Tags one clip: features, forward pass, probability decode.
ManipulationHypothesis detect_clip(const Tagger& model, const AudioClip& clip,
                                   const MelConfig& mel_cfg, bool use_mfd = true,
                                   double threshold = 0.5);

std::vector<ManipulationHypothesis> detect_manifest(const Tagger& model,
                                                    const DatasetManifest& manifest,
                                                    const MelConfig& mel_cfg,
                                                    bool use_mfd = true,
                                                    double threshold = 0.5);

/// Decodes every clip in the manifest and scores against its annotations.
EvalReport evaluate_model(const Tagger& model, const DatasetManifest& manifest,
                          const MelConfig& mel_cfg, bool use_mfd = true,
                          double threshold = 0.5);

struct AblationRow {
    std::string name;
    TrainToggles toggles;
    double dev_score = 0.0;
    double dev_iso_rate = 0.0;
    double test_score = 0.0;
};

/// The paper's nested removal order.
std::vector<std::pair<std::string, TrainToggles>> default_ablation_grid();

/// One row per toggle set: train on the train split, select and score on
/// dev, report the held-out test score. Duplicate toggle sets are warned
/// about and dropped.
std::vector<AblationRow> ablation_run(
    const DatasetManifest& train_manifest, const DatasetManifest& dev_manifest,
    const DatasetManifest& test_manifest,
    const std::vector<std::pair<std::string, TrainToggles>>& grid,
    const ModelConfig& model_cfg, const LossConfig& loss_cfg, const TrainConfig& base_cfg,
    const MelConfig& mel_cfg, const AugmentationPolicy& policy);

std::string ablation_table_text(const std::vector<AblationRow>& rows);

} // namespace spoofloc
