// spoofloc: locate manipulated regions in audio by frame-level tagging.
//
// Pipeline verbs: synth -> prepare -> train -> detect/eval, plus ablate for
// the toggle grid and stats for corpus composition.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spoofloc/common.hpp"
#include "spoofloc/config.hpp"
#include "spoofloc/metrics.hpp"
#include "spoofloc/synth.hpp"
#include "spoofloc/trainer.hpp"

namespace {

using namespace spoofloc;

class JsonlLog {
public:
    void open(const std::string& path) {
        if (path.empty()) return;
        os_.open(path, std::ios::app);
        if (!os_) fail_runtime("cannot open log file: ", path);
    }

    void event(const std::string& name, nlohmann::json fields = {}) {
        if (!os_.is_open()) return;
        fields["event"] = name;
        fields["ts"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
        os_ << fields.dump() << "\n";
        os_.flush();
    }

private:
    std::ofstream os_;
};

void atomic_checkpoint(const std::string& path, const Tagger& model,
                       const std::string& rng_state) {
    const std::string tmp = path + ".tmp";
    save_checkpoint(tmp, model, rng_state);
    std::filesystem::rename(tmp, path);
}

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    bool print_config = false;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path, "key = value config file");
    cmd->add_option("--set", args.overrides,
                    "override a config key, e.g. --set loss.alpha=0.2 (repeatable)");
    cmd->add_flag("--print-config", args.print_config,
                  "print the fully resolved config and exit");
}

int cmd_synth(const std::string& outdir, int n_clips, double duration, double fake_min,
              double fake_max, const std::string& source, const std::string& user_wavs,
              std::uint64_t seed, JsonlLog& log) {
    SynthSpec spec;
    spec.n_clips = n_clips;
    spec.clip_duration_s = duration;
    spec.fake_fraction_range = {fake_min, fake_max};
    spec.seed = seed;
    spec.user_wav_dir = user_wavs;
    if (source == "tone") spec.source = SynthSpec::Source::kToneMixture;
    else if (source == "noise") spec.source = SynthSpec::Source::kNoiseShaped;
    else if (source == "user") spec.source = SynthSpec::Source::kUserWavs;
    else fail_validation("unknown synth source '", source, "' (tone | noise | user)");

    const DatasetManifest manifest = synth_generate(spec, outdir);
    std::cout << stats_to_text(corpus_stats(manifest));
    std::cout << "manifest: " << outdir << "/manifest.jsonl\n";
    log.event("synth_done", {{"outdir", outdir}, {"clips", manifest.entries.size()}});
    return 0;
}

int cmd_prepare(const std::string& manifest_path, const std::string& outdir, int copies,
                const std::string& noise_dir, std::uint64_t seed, JsonlLog& log) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    PrepareOptions options;
    options.copies_per_clip = copies;
    options.noise_dir = noise_dir;
    const DatasetManifest out = prepare_offline(manifest, outdir, seed, options);
    const std::string out_manifest = outdir + "/manifest.jsonl";
    save_manifest(out, out_manifest);
    std::cout << "prepared " << out.entries.size() << " entries (" << manifest.entries.size()
              << " originals)\nmanifest: " << out_manifest << "\n";
    log.event("prepare_done", {{"outdir", outdir}, {"entries", out.entries.size()}});
    return 0;
}

int cmd_train(const ConfigArgs& cargs, const std::string& manifest_path,
              const std::string& dev_path, const std::string& outdir, JsonlLog& log) {
    const RunConfig cfg = parse_run_config(cargs.config_path, cargs.overrides);
    if (cargs.print_config) {
        std::cout << print_run_config(cfg);
        return 0;
    }
    std::filesystem::create_directories(outdir);
    {
        std::ofstream os(outdir + "/config.resolved");
        os << print_run_config(cfg);
    }

    const DatasetManifest train_manifest = load_manifest(manifest_path);
    DatasetManifest dev_manifest;
    const bool has_dev = !dev_path.empty();
    if (has_dev) dev_manifest = load_manifest(dev_path);

    std::ofstream history(outdir + "/history.jsonl");
    if (!history) fail_runtime("cannot write history in ", outdir);

    Tagger model(cfg.model);
    const StepLogger step_logger = [&](int epoch, int step, const LossBreakdown& losses) {
        nlohmann::json rec;
        rec["type"] = "step";
        rec["epoch"] = epoch;
        rec["step"] = step;
        rec["loss"] = losses.total;
        rec["loss_sf"] = losses.single_frame;
        rec["loss_mfd"] = losses.mfd;
        rec["ifp"] = losses.ifp;
        history << rec.dump() << "\n";
    };

    const TrainResult result = train(model, train_manifest, has_dev ? &dev_manifest : nullptr,
                                     cfg.loss, cfg.train, cfg.mel, cfg.augment, step_logger);
    for (const EpochRecord& r : result.history) {
        nlohmann::json rec;
        rec["type"] = "epoch";
        rec["epoch"] = r.epoch;
        rec["loss"] = r.loss;
        rec["loss_sf"] = r.loss_sf;
        rec["loss_mfd"] = r.loss_mfd;
        rec["ifp"] = r.ifp;
        if (r.dev_score) rec["dev_score"] = *r.dev_score;
        history << rec.dump() << "\n";
    }

    const std::string ckpt_path = outdir + "/checkpoint.bin";
    atomic_checkpoint(ckpt_path, model, result.final_rng_state);
    std::cout << "checkpoint: " << ckpt_path << "\n";
    if (has_dev) {
        std::cout << "best_epoch: " << result.best_epoch
                  << "\nbest_dev_score: " << result.best_dev_score << "\n";
    }
    log.event("train_done", {{"outdir", outdir}, {"epochs", result.history.size()}});
    return 0;
}

int cmd_detect(const std::string& checkpoint_path, const std::vector<std::string>& audio,
               const std::string& manifest_path, const std::string& out_path,
               double threshold, JsonlLog& log) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Tagger model(ckpt.config);
    model.set_parameters(ckpt.params);

    const MelConfig mel_cfg; // 800/160/80 at 16 kHz
    std::vector<ManipulationHypothesis> hyps;
    if (!manifest_path.empty()) {
        const DatasetManifest manifest = load_manifest(manifest_path);
        hyps = detect_manifest(model, manifest, mel_cfg, true, threshold);
    }
    for (const std::string& path : audio) {
        const std::string id = std::filesystem::path(path).stem().string();
        hyps.push_back(detect_clip(model, read_wav(path, id), mel_cfg, true, threshold));
    }
    if (hyps.empty()) fail_validation("detect: no input audio (use --audio or --manifest)");
    save_hypotheses(hyps, out_path);
    std::cout << "hypotheses: " << out_path << " (" << hyps.size() << " clips)\n";
    log.event("detect_done", {{"out", out_path}, {"clips", hyps.size()}});
    return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& hyp_path,
             const std::string& report_path, JsonlLog& log) {
    const DatasetManifest ref_manifest = load_manifest(ref_path, /*check_audio=*/false);
    const auto refs = references_from_manifest(ref_manifest);
    const auto hyps = load_hypotheses(hyp_path);
    const EvalReport report = evaluate(refs, hyps);
    if (report_path.empty()) {
        std::cout << report_to_json(report) << "\n";
    } else {
        save_report(report, report_path);
        std::cout << "report: " << report_path << "\n";
    }
    std::cout << "score: " << report.score << "  a_sentence: " << report.a_sentence
              << "  f1_segment: " << report.f1_segment << "  iso_rate: " << report.iso_rate
              << "\n";
    log.event("eval_done", {{"score", report.score}, {"iso_rate", report.iso_rate}});
    return 0;
}

int cmd_ablate(const ConfigArgs& cargs, const std::string& train_path,
               const std::string& dev_path, const std::string& test_path,
               const std::string& outdir, JsonlLog& log) {
    const RunConfig cfg = parse_run_config(cargs.config_path, cargs.overrides);
    if (cargs.print_config) {
        std::cout << print_run_config(cfg);
        return 0;
    }
    std::filesystem::create_directories(outdir);
    const auto rows = ablation_run(load_manifest(train_path), load_manifest(dev_path),
                                   load_manifest(test_path), default_ablation_grid(),
                                   cfg.model, cfg.loss, cfg.train, cfg.mel, cfg.augment);
    const std::string table = ablation_table_text(rows);
    std::cout << table;
    {
        std::ofstream os(outdir + "/ablation.tsv");
        os << table;
    }
    std::ofstream jsonl(outdir + "/ablation.jsonl");
    for (const AblationRow& r : rows) {
        nlohmann::json rec;
        rec["name"] = r.name;
        rec["dev_score"] = r.dev_score;
        rec["dev_iso_rate"] = r.dev_iso_rate;
        rec["test_score"] = r.test_score;
        jsonl << rec.dump() << "\n";
    }
    log.event("ablate_done", {{"rows", rows.size()}});
    return 0;
}

int cmd_stats(const std::string& manifest_path) {
    const DatasetManifest manifest = load_manifest(manifest_path, /*check_audio=*/false);
    std::cout << stats_to_text(corpus_stats(manifest));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spoofloc: frame-level localization of manipulated audio regions"};
    app.require_subcommand(1);

    std::string log_path;
    app.add_option("--log", log_path, "append structured JSONL logs to this path");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    std::string synth_outdir, synth_source = "tone", synth_user_wavs;
    int synth_clips = 50;
    double synth_duration = 1.5, synth_fake_min = 0.2, synth_fake_max = 0.4;
    std::uint64_t synth_seed = 0;
    synth->add_option("--outdir", synth_outdir)->required();
    synth->add_option("--n-clips", synth_clips);
    synth->add_option("--duration", synth_duration, "nominal clip duration in seconds");
    synth->add_option("--fake-min", synth_fake_min);
    synth->add_option("--fake-max", synth_fake_max);
    synth->add_option("--source", synth_source, "tone | noise | user");
    synth->add_option("--user-wavs", synth_user_wavs, "wav directory for --source user");
    synth->add_option("--seed", synth_seed);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "offline (before-training) augmentation");
    std::string prep_manifest, prep_outdir, prep_noise_dir;
    int prep_copies = 1;
    std::uint64_t prep_seed = 0;
    prepare->add_option("--manifest", prep_manifest)->required();
    prepare->add_option("--outdir", prep_outdir)->required();
    prepare->add_option("--copies", prep_copies, "augmented copies per clip");
    prepare->add_option("--noise-dir", prep_noise_dir, "wav noise bank (optional)");
    prepare->add_option("--seed", prep_seed);

    // train
    auto* train_cmd = app.add_subcommand("train", "train the tagger");
    ConfigArgs train_cargs;
    std::string train_manifest, train_dev, train_outdir;
    add_config_options(train_cmd, train_cargs);
    train_cmd->add_option("--manifest", train_manifest);
    train_cmd->add_option("--dev-manifest", train_dev);
    train_cmd->add_option("--outdir", train_outdir);

    // detect
    auto* detect = app.add_subcommand("detect", "tag audio with a trained checkpoint");
    std::string det_ckpt, det_manifest, det_out = "hypotheses.jsonl";
    std::vector<std::string> det_audio;
    double det_threshold = 0.5;
    detect->add_option("--checkpoint", det_ckpt)->required();
    detect->add_option("--audio", det_audio, "wav file (repeatable)");
    detect->add_option("--manifest", det_manifest, "manifest of wavs to tag");
    detect->add_option("--out", det_out);
    detect->add_option("--threshold", det_threshold);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score hypotheses against references");
    std::string eval_ref, eval_hyp, eval_report;
    eval_cmd->add_option("--ref", eval_ref)->required();
    eval_cmd->add_option("--hyp", eval_hyp)->required();
    eval_cmd->add_option("--report", eval_report);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run the toggle ablation grid");
    ConfigArgs ablate_cargs;
    std::string ab_train, ab_dev, ab_test, ab_outdir;
    add_config_options(ablate, ablate_cargs);
    ablate->add_option("--train-manifest", ab_train);
    ablate->add_option("--dev-manifest", ab_dev);
    ablate->add_option("--test-manifest", ab_test);
    ablate->add_option("--outdir", ab_outdir);

    // stats
    auto* stats = app.add_subcommand("stats", "print corpus composition");
    std::string stats_manifest;
    stats->add_option("--manifest", stats_manifest)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        JsonlLog log;
        log.open(log_path);
        if (*synth) {
            return cmd_synth(synth_outdir, synth_clips, synth_duration, synth_fake_min,
                             synth_fake_max, synth_source, synth_user_wavs, synth_seed, log);
        }
        if (*prepare) {
            return cmd_prepare(prep_manifest, prep_outdir, prep_copies, prep_noise_dir,
                               prep_seed, log);
        }
        if (*train_cmd) {
            if (!train_cargs.print_config && (train_manifest.empty() || train_outdir.empty())) {
                fail_validation("train: --manifest and --outdir are required");
            }
            return cmd_train(train_cargs, train_manifest, train_dev, train_outdir, log);
        }
        if (*detect) return cmd_detect(det_ckpt, det_audio, det_manifest, det_out,
                                       det_threshold, log);
        if (*eval_cmd) return cmd_eval(eval_ref, eval_hyp, eval_report, log);
        if (*ablate) {
            if (!ablate_cargs.print_config &&
                (ab_train.empty() || ab_dev.empty() || ab_test.empty() || ab_outdir.empty())) {
                fail_validation(
                    "ablate: --train-manifest, --dev-manifest, --test-manifest and --outdir "
                    "are required");
            }
            return cmd_ablate(ablate_cargs, ab_train, ab_dev, ab_test, ab_outdir, log);
        }
        if (*stats) return cmd_stats(stats_manifest);
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 2;
    }
}
