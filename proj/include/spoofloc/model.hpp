#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spoofloc/rng.hpp"

namespace spoofloc {

struct BackboneConfig {
    int input_dim = 80;
    int n_res_blocks = 7;
    int conv_channels = 256;
    int conv_kernel = 3;
    int blstm_units_total = 256; // split across the two directions
    int n_classes = 2;

    bool operator==(const BackboneConfig&) const = default;
};

struct MFDConfig {
    int channels = 128;
    std::pair<int, int> strides = {5, 2};
    std::pair<int, int> kernels = {7, 3};
    int downsample_factor = 10; // product of strides

    bool operator==(const MFDConfig&) const = default;
};

struct ModelConfig {
    BackboneConfig backbone;
    MFDConfig mfd;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

std::uint64_t model_config_hash(const ModelConfig& cfg);

/// Contiguous frame range [begin, end) covered by one MFD window.
struct WindowRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const WindowRange&) const = default;
};

/// Ceil-mode striding with end padding: every frame belongs to exactly one
/// window, and the window count is ceil(ceil(n / stride1) / stride2).
std::vector<WindowRange> mfd_window_map(std::size_t n_frames, const MFDConfig& cfg);

/// Soft targets: mean of the frame labels inside each window's range.
Eigen::VectorXd mfd_window_targets(const std::vector<int>& frame_labels,
                                   const std::vector<WindowRange>& window_map);

struct ModelOutput {
    Eigen::MatrixXd frame_logits; // N x 2, (real, fake)
    Eigen::VectorXd frame_probs;  // N, fake class
    Eigen::MatrixXd mfd_logits;   // M x 2; empty when the MFD branch is off
    std::vector<WindowRange> mfd_window_map;
};

/// Activations recorded by a traced forward pass, consumed by backward().
/// One trace per concurrent caller; the model itself stays const.
struct ForwardTrace {
    Eigen::MatrixXd input;
    struct BlockTrace {
        Eigen::MatrixXd in;
        Eigen::MatrixXd xhat;
        Eigen::VectorXd inv_std;
        Eigen::MatrixXd relu_out;
        Eigen::MatrixXd out;
    };
    std::vector<BlockTrace> blocks;
    Eigen::MatrixXd rcnn_out;
    struct DirTrace {
        Eigen::MatrixXd gates; // N x 4H, post-activation, order (i, f, g, o)
        Eigen::MatrixXd cells; // N x H
        Eigen::MatrixXd hidden; // N x H
    };
    DirTrace lstm_fwd, lstm_bwd;
    Eigen::MatrixXd lstm_out;
    Eigen::MatrixXd mfd_h1; // post-ReLU, ceil-mode length of stage 1
    Eigen::MatrixXd mfd_h2; // post-ReLU, M rows
    Eigen::MatrixXd fused;
    std::vector<WindowRange> window_map;
    bool used_mfd = false;
};

/// RCNN-BLSTM frame tagger with the multi-frame detection head.
///
/// Frame path: input 1x1 projection joins the first residual block's skip;
/// each block is conv(k) -> channel norm -> ReLU with an additive skip. The
/// block-stack output feeds a single BLSTM; the MFD branch downsamples the
/// same block-stack output with two strided convs, classifies each window,
/// and its hidden vector is projected to BLSTM width, replicated across the
/// window's frames and added to the BLSTM output before the final linear
/// layer.
///
/// Normalization is per utterance over the frame axis (per channel), so one
/// utterance's outputs never depend on what else shares the batch.
class Tagger {
public:
    explicit Tagger(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    std::size_t n_params() const { return static_cast<std::size_t>(params_.size()); }

    /// Head layers (fusion projection, window classifier, final linear) are
    /// zero-initialized by default so early logits start at zero.
    void init_params(Rng& rng, bool zero_init_heads = true);

    const Eigen::VectorXd& parameters() const { return params_; }
    void set_parameters(const Eigen::VectorXd& params);

    /// Named slice of the flat parameter vector (offset, count).
    /// Names: block<i>.{conv_w,gamma,beta,proj_w,proj_b} (convs preceding the norm carry no bias),
    /// lstm_{fwd,bwd}.{wx,wh,b}, mfd.{conv1_w,conv1_b,conv2_w,conv2_b,cls_w,
    /// cls_b}, fusion.{w,b}, final.{w,b}.
    std::pair<std::size_t, std::size_t> param_span(const std::string& name) const;

    ModelOutput forward(const Eigen::MatrixXd& features, bool use_mfd = true) const;

    ModelOutput forward_traced(const Eigen::MatrixXd& features, ForwardTrace& trace,
                               bool use_mfd = true) const;

    /// Accumulates parameter gradients into `grad` (same layout as
    /// parameters()). `d_mfd_logits` is ignored when the trace was computed
    /// without the MFD branch.
    void backward(const ForwardTrace& trace, const Eigen::MatrixXd& d_frame_logits,
                  const Eigen::MatrixXd& d_mfd_logits, Eigen::VectorXd& grad) const;

private:
    struct Entry {
        std::string name;
        std::size_t offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
    };
    struct BlockIds {
        int conv_w = -1, gamma = -1, beta = -1, proj_w = -1, proj_b = -1;
    };
    struct LstmIds {
        int wx = -1, wh = -1, b = -1;
    };

    int add_entry(std::string name, Eigen::Index rows, Eigen::Index cols);
    Eigen::Map<const Eigen::MatrixXd> mat(int id) const;
    Eigen::Map<Eigen::MatrixXd> mat(int id);
    static Eigen::Map<Eigen::MatrixXd> grad_mat(Eigen::VectorXd& grad, const Entry& e);

    ModelOutput run_forward(const Eigen::MatrixXd& features, ForwardTrace* trace,
                            bool use_mfd) const;

    ModelConfig cfg_;
    std::vector<Entry> entries_;
    Eigen::VectorXd params_;

    std::vector<BlockIds> blocks_;
    LstmIds lstm_fwd_, lstm_bwd_;
    int mfd_conv1_w_ = -1, mfd_conv1_b_ = -1;
    int mfd_conv2_w_ = -1, mfd_conv2_b_ = -1;
    int mfd_cls_w_ = -1, mfd_cls_b_ = -1;
    int fusion_w_ = -1, fusion_b_ = -1;
    int final_w_ = -1, final_b_ = -1;
};

/// Exact trainable-parameter count for a config.
std::size_t count_parameters(const ModelConfig& cfg);

struct Checkpoint {
    ModelConfig config;
    Eigen::VectorXd params;
    std::string rng_state;
};

void save_checkpoint(const std::string& path, const Tagger& model,
                     const std::string& rng_state);
Checkpoint load_checkpoint(const std::string& path);

/// Restores parameters into an existing model; a config-hash mismatch is an
/// error.
std::string load_checkpoint_into(const std::string& path, Tagger& model);

} // namespace spoofloc
