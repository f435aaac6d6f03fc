#include "spoofloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <thread>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

// Fixed parallelism for gradient work. A constant group count (not the
// machine's thread count) keeps the reduction order, and therefore every
// float, identical across hosts.
constexpr std::size_t kGradGroups = 4;

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

std::vector<WaveExample> load_examples(const DatasetManifest& manifest,
                                       const MelConfig& mel_cfg) {
    if (manifest.entries.empty()) fail_validation("training manifest is empty");
    std::vector<WaveExample> examples;
    examples.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        WaveExample ex{read_wav(e.audio_path, e.clip_id), e.annotations};
        const std::size_t n_frames = mel_frame_count(ex.clip.samples.size(), mel_cfg);
        if (n_frames < 7) {
            fail_validation("clip '", e.clip_id, "' yields only ", n_frames,
                            " frames; the tagger needs at least 7");
        }
        examples.push_back(std::move(ex));
    }
    return examples;
}

PaddedBatch featurize_batch(const std::vector<WaveExample>& examples,
                            const MelConfig& mel_cfg) {
    PaddedBatch batch;
    std::size_t t_max = 0;
    std::vector<Eigen::MatrixXd> feats(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const MelFrames mel = extract_mel(examples[i].clip, mel_cfg);
        feats[i] = normalize_features(mel.values);
        t_max = std::max(t_max, mel.n_frames());
    }
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto n = static_cast<std::size_t>(feats[i].rows());
        Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t_max),
                                                       feats[i].cols());
        padded.topRows(feats[i].rows()) = feats[i];
        batch.features.push_back(std::move(padded));
        batch.labels.push_back(
            annotations_to_frame_labels(examples[i].annotations, n, mel_cfg.hop /
                                        static_cast<double>(mel_cfg.sample_rate)));
        batch.lengths.push_back(n);
        batch.clip_ids.push_back(examples[i].clip.id);
    }
    return batch;
}

} // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) fail_validation("train config: batch_size must be positive");
    if (epochs < 1) fail_validation("train config: epochs must be positive");
    if (learning_rate <= 0.0) fail_validation("train config: learning_rate must be positive");
    if (weight_decay < 0.0) fail_validation("train config: weight_decay must be >= 0");
    if (befaug_copies < 0) fail_validation("train config: befaug_copies must be >= 0");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               double learning_rate, double weight_decay) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    if (state.m.size() != params.size()) {
        state.m = Eigen::VectorXd::Zero(params.size());
        state.v = Eigen::VectorXd::Zero(params.size());
        state.step = 0;
    }
    ++state.step;
    const Eigen::ArrayXd g = grad.array() + weight_decay * params.array();
    state.m = kBeta1 * state.m.array() + (1.0 - kBeta1) * g;
    state.v = kBeta2 * state.v.array() + (1.0 - kBeta2) * g.square();
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    params.array() -=
        learning_rate * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + kEps);
}

LossBreakdown batch_loss_and_grad(const Tagger& model, const PaddedBatch& batch,
                                  const LossConfig& loss_cfg, bool use_mfd, bool use_ifp,
                                  Eigen::VectorXd* grad) {
    const std::size_t n = batch.features.size();
    if (n == 0) fail_validation("batch_loss_and_grad: empty batch");
    if (batch.labels.size() != n || batch.lengths.size() != n) {
        fail_validation("batch_loss_and_grad: inconsistent batch fields");
    }

    LossConfig effective = loss_cfg;
    if (!use_ifp) effective.alpha = 0.0;

    const std::size_t n_groups = std::min(kGradGroups, n);
    std::vector<Eigen::VectorXd> group_grads;
    std::vector<LossBreakdown> group_losses(n_groups);
    if (grad) {
        group_grads.assign(n_groups,
                           Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params())));
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    auto run_group = [&](std::size_t g) {
        ForwardTrace trace;
        for (std::size_t i = g; i < n; i += n_groups) {
            const auto len = static_cast<Eigen::Index>(batch.lengths[i]);
            const Eigen::MatrixXd features = batch.features[i].topRows(len);
            const ModelOutput out = grad ? model.forward_traced(features, trace, use_mfd)
                                         : model.forward(features, use_mfd);
            Eigen::VectorXd targets;
            Eigen::MatrixXd mfd_logits = out.mfd_logits;
            if (use_mfd) {
                targets = mfd_window_targets(batch.labels[i], out.mfd_window_map);
            } else {
                // Keep the loss shape valid with a single neutral window.
                mfd_logits = Eigen::MatrixXd::Zero(1, 2);
                targets = Eigen::VectorXd::Zero(1);
            }
            if (grad) {
                LossGradients lg = total_loss_with_grad(out.frame_logits, batch.labels[i],
                                                        mfd_logits, targets, effective);
                if (!use_mfd) lg.value.mfd = 0.0;
                group_losses[g].total += (lg.value.single_frame + lg.value.mfd +
                                          effective.alpha * lg.value.ifp) * inv_n;
                group_losses[g].single_frame += lg.value.single_frame * inv_n;
                group_losses[g].mfd += lg.value.mfd * inv_n;
                group_losses[g].ifp += lg.value.ifp * inv_n;
                lg.d_frame_logits *= inv_n;
                lg.d_mfd_logits *= inv_n;
                model.backward(trace, lg.d_frame_logits,
                               use_mfd ? lg.d_mfd_logits : Eigen::MatrixXd(), group_grads[g]);
            } else {
                LossBreakdown value = total_loss(out.frame_logits, batch.labels[i], mfd_logits,
                                                 targets, effective);
                if (!use_mfd) {
                    value.total -= value.mfd;
                    value.mfd = 0.0;
                }
                group_losses[g].total += value.total * inv_n;
                group_losses[g].single_frame += value.single_frame * inv_n;
                group_losses[g].mfd += value.mfd * inv_n;
                group_losses[g].ifp += value.ifp * inv_n;
            }
        }
    };

    if (n_groups == 1) {
        run_group(0);
    } else {
        std::vector<std::thread> workers;
        workers.reserve(n_groups);
        for (std::size_t g = 0; g < n_groups; ++g) {
            workers.emplace_back(run_group, g);
        }
        for (auto& w : workers) w.join();
    }

    LossBreakdown total;
    for (std::size_t g = 0; g < n_groups; ++g) {
        total.total += group_losses[g].total;
        total.single_frame += group_losses[g].single_frame;
        total.mfd += group_losses[g].mfd;
        total.ifp += group_losses[g].ifp;
    }
    if (grad) {
        for (std::size_t g = 0; g < n_groups; ++g) *grad += group_grads[g];
    }
    return total;
}

namespace {

double dev_score_for(const Tagger& model, const DatasetManifest& dev,
                     const MelConfig& mel_cfg, bool use_mfd) {
    const EvalReport report = evaluate_model(model, dev, mel_cfg, use_mfd);
    return report.score;
}

} // namespace

TrainResult train(Tagger& model, const DatasetManifest& train_manifest,
                  const DatasetManifest* dev_manifest, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const MelConfig& mel_cfg,
                  const AugmentationPolicy& policy, const StepLogger& step_logger) {
    train_cfg.validate();
    loss_cfg.validate();
    policy.validate();

    Rng root(train_cfg.seed);
    Rng init_rng = root.fork_named("init");
    model.init_params(init_rng);

    std::vector<WaveExample> corpus = load_examples(train_manifest, mel_cfg);
    if (train_cfg.toggles.use_befaug && train_cfg.befaug_copies > 0) {
        PrepareOptions options;
        options.copies_per_clip = train_cfg.befaug_copies;
        options.policy = policy;
        const auto augmented =
            make_offline_augmented(corpus, root.fork_named("befaug").next_u64(), options, {});
        for (const OfflineAugmented& rec : augmented) corpus.push_back(rec.example);
    }

    AdamState adam;
    TrainResult result;
    result.best_params = model.parameters();

    const std::size_t n = corpus.size();
    const auto batch_size = static_cast<std::size_t>(train_cfg.batch_size);

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        Rng epoch_rng = root.fork_named(cat("epoch.", epoch));
        const std::vector<std::size_t> order = shuffled_indices(n, epoch_rng);

        EpochRecord record;
        record.epoch = epoch;
        int steps = 0;
        for (std::size_t begin = 0; begin < n; begin += batch_size) {
            const std::size_t end = std::min(begin + batch_size, n);
            std::vector<WaveExample> items;
            items.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) items.push_back(corpus[order[i]]);

            if (train_cfg.toggles.use_inaug) {
                Rng aug_rng = root.fork_named(cat("inaug.", epoch, ".", begin));
                items = in_training_augment(items, policy, aug_rng);
            }

            const PaddedBatch batch = featurize_batch(items, mel_cfg);
            Eigen::VectorXd grad =
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
            const LossBreakdown losses =
                batch_loss_and_grad(model, batch, loss_cfg, train_cfg.toggles.use_mfd,
                                    train_cfg.toggles.use_ifp, &grad);
            if (!std::isfinite(losses.total)) {
                std::string ids;
                for (const std::string& id : batch.clip_ids) ids += " " + id;
                fail_runtime("non-finite loss at epoch ", epoch, " step ", steps,
                             "; offending batch clips:", ids);
            }
            Eigen::VectorXd params = model.parameters();
            adam_step(params, grad, adam, train_cfg.learning_rate, train_cfg.weight_decay);
            model.set_parameters(params);

            if (step_logger) step_logger(epoch, steps, losses);
            record.loss += losses.total;
            record.loss_sf += losses.single_frame;
            record.loss_mfd += losses.mfd;
            record.ifp += losses.ifp;
            ++steps;
        }
        record.loss /= steps;
        record.loss_sf /= steps;
        record.loss_mfd /= steps;
        record.ifp /= steps;

        if (dev_manifest) {
            const double dev_score =
                dev_score_for(model, *dev_manifest, mel_cfg, train_cfg.toggles.use_mfd);
            record.dev_score = dev_score;
            if (result.best_epoch < 0 || dev_score > result.best_dev_score) {
                result.best_dev_score = dev_score;
                result.best_epoch = epoch;
                result.best_params = model.parameters();
            }
        }
        result.history.push_back(record);
    }

    if (!dev_manifest) {
        result.best_params = model.parameters();
        result.best_epoch = train_cfg.epochs - 1;
    } else {
        model.set_parameters(result.best_params);
    }
    result.final_rng_state = root.serialize_state();
    return result;
}

ManipulationHypothesis detect_clip(const Tagger& model, const AudioClip& clip,
                                   const MelConfig& mel_cfg, bool use_mfd,
                                   double threshold) {
    const MelFrames mel = extract_mel(clip, mel_cfg);
    const Eigen::MatrixXd features = normalize_features(mel.values);
    const ModelOutput out = model.forward(features, use_mfd);
    const std::vector<double> probs(out.frame_probs.data(),
                                    out.frame_probs.data() + out.frame_probs.size());
    const double hop_s = mel_cfg.hop / static_cast<double>(mel_cfg.sample_rate);
    return decode(probs, threshold, hop_s, clip.id);
}

std::vector<ManipulationHypothesis> detect_manifest(const Tagger& model,
                                                    const DatasetManifest& manifest,
                                                    const MelConfig& mel_cfg, bool use_mfd,
                                                    double threshold) {
    std::vector<ManipulationHypothesis> hyps;
    hyps.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        hyps.push_back(
            detect_clip(model, read_wav(e.audio_path, e.clip_id), mel_cfg, use_mfd, threshold));
    }
    return hyps;
}

EvalReport evaluate_model(const Tagger& model, const DatasetManifest& manifest,
                          const MelConfig& mel_cfg, bool use_mfd, double threshold) {
    return evaluate(references_from_manifest(manifest),
                    detect_manifest(model, manifest, mel_cfg, use_mfd, threshold));
}

std::vector<std::pair<std::string, TrainToggles>> default_ablation_grid() {
    std::vector<std::pair<std::string, TrainToggles>> grid;
    TrainToggles t;
    grid.emplace_back("full", t);
    t.use_ifp = false;
    grid.emplace_back("-IFP", t);
    t.use_mfd = false;
    grid.emplace_back("-IFP-MFD", t);
    t.use_inaug = false;
    grid.emplace_back("-IFP-MFD-InAug", t);
    t.use_befaug = false;
    grid.emplace_back("-IFP-MFD-InAug-BefAug", t);
    return grid;
}

std::vector<AblationRow> ablation_run(
    const DatasetManifest& train_manifest, const DatasetManifest& dev_manifest,
    const DatasetManifest& test_manifest,
    const std::vector<std::pair<std::string, TrainToggles>>& grid,
    const ModelConfig& model_cfg, const LossConfig& loss_cfg, const TrainConfig& base_cfg,
    const MelConfig& mel_cfg, const AugmentationPolicy& policy) {
    std::vector<AblationRow> rows;
    std::set<std::string> seen;
    for (const auto& [name, toggles] : grid) {
        const std::string key = cat(toggles.use_mfd, toggles.use_ifp, toggles.use_befaug,
                                    toggles.use_inaug);
        if (!seen.insert(key).second) {
            std::cerr << "ablation: duplicate toggle set '" << name << "' skipped\n";
            continue;
        }
        TrainConfig cfg = base_cfg;
        cfg.toggles = toggles;
        Tagger model(model_cfg);
        train(model, train_manifest, &dev_manifest, loss_cfg, cfg, mel_cfg, policy);

        AblationRow row;
        row.name = name;
        row.toggles = toggles;
        const EvalReport dev_report =
            evaluate_model(model, dev_manifest, mel_cfg, toggles.use_mfd);
        row.dev_score = dev_report.score;
        row.dev_iso_rate = dev_report.iso_rate;
        row.test_score = evaluate_model(model, test_manifest, mel_cfg, toggles.use_mfd).score;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "model\tdev-score\tiso-rate\ttest-score\n";
    os.setf(std::ios::fixed);
    os.precision(4);
    for (const AblationRow& r : rows) {
        os << r.name << "\t" << r.dev_score << "\t" << r.dev_iso_rate << "\t" << r.test_score
           << "\n";
    }
    return os.str();
}

} // namespace spoofloc
