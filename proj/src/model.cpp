#include "spoofloc/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "spoofloc/common.hpp"
#include "spoofloc/losses.hpp"

namespace spoofloc {
namespace {

constexpr double kNormEps = 1e-5;
constexpr std::size_t kMinFrames = 7;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// im2col for 1-D convolution over an N x C frame matrix. Row m of the result
// gathers the kernel taps for output position m: input index m*stride + k -
// pad_left, zero outside the signal. Column layout is k * C + c, matching the
// weight layout (C_out x K*C).
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int kernel, int stride, int pad_left,
                       Eigen::Index n_out) {
    const Eigen::Index n = x.rows();
    const Eigen::Index c = x.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_out, kernel * c);
    for (Eigen::Index m = 0; m < n_out; ++m) {
        for (int k = 0; k < kernel; ++k) {
            const Eigen::Index t = m * stride + k - pad_left;
            if (t >= 0 && t < n) {
                out.block(m, static_cast<Eigen::Index>(k) * c, 1, c) = x.row(t);
            }
        }
    }
    return out;
}

// Scatter-add of the im2col gradient back onto the input frames.
void col2im_add(const Eigen::MatrixXd& d_cols, int kernel, int stride, int pad_left,
                Eigen::MatrixXd& d_x) {
    const Eigen::Index n = d_x.rows();
    const Eigen::Index c = d_x.cols();
    for (Eigen::Index m = 0; m < d_cols.rows(); ++m) {
        for (int k = 0; k < kernel; ++k) {
            const Eigen::Index t = m * stride + k - pad_left;
            if (t >= 0 && t < n) {
                d_x.row(t) += d_cols.block(m, static_cast<Eigen::Index>(k) * c, 1, c);
            }
        }
    }
}

} // namespace

void ModelConfig::validate() const {
    if (backbone.input_dim < 1) fail_validation("model config: input_dim must be >= 1");
    if (backbone.n_res_blocks < 1) fail_validation("model config: need at least one block");
    if (backbone.conv_channels < 1) fail_validation("model config: conv_channels must be >= 1");
    if (backbone.conv_kernel < 1 || backbone.conv_kernel % 2 == 0) {
        fail_validation("model config: conv_kernel must be odd, got ", backbone.conv_kernel);
    }
    if (backbone.blstm_units_total < 2 || backbone.blstm_units_total % 2 != 0) {
        fail_validation("model config: blstm_units_total must be even, got ",
                        backbone.blstm_units_total);
    }
    if (backbone.n_classes != 2) {
        fail_validation("model config: n_classes must be 2, got ", backbone.n_classes);
    }
    if (mfd.channels < 1) fail_validation("model config: mfd channels must be >= 1");
    if (mfd.strides.first < 1 || mfd.strides.second < 1 || mfd.kernels.first < 1 ||
        mfd.kernels.second < 1) {
        fail_validation("model config: mfd strides and kernels must be >= 1");
    }
    if (mfd.downsample_factor != mfd.strides.first * mfd.strides.second) {
        fail_validation("model config: downsample_factor must equal the stride product (",
                        mfd.strides.first * mfd.strides.second, "), got ",
                        mfd.downsample_factor);
    }
}

std::uint64_t model_config_hash(const ModelConfig& cfg) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "model|%d|%d|%d|%d|%d|%d|mfd|%d|%d|%d|%d|%d|%d",
                  cfg.backbone.input_dim, cfg.backbone.n_res_blocks,
                  cfg.backbone.conv_channels, cfg.backbone.conv_kernel,
                  cfg.backbone.blstm_units_total, cfg.backbone.n_classes, cfg.mfd.channels,
                  cfg.mfd.strides.first, cfg.mfd.strides.second, cfg.mfd.kernels.first,
                  cfg.mfd.kernels.second, cfg.mfd.downsample_factor);
    return fnv1a(buf);
}

std::vector<WindowRange> mfd_window_map(std::size_t n_frames, const MFDConfig& cfg) {
    if (n_frames == 0) fail_validation("mfd_window_map: zero frames");
    const std::size_t m1 = ceil_div(n_frames, static_cast<std::size_t>(cfg.strides.first));
    const std::size_t m = ceil_div(m1, static_cast<std::size_t>(cfg.strides.second));
    const auto d = static_cast<std::size_t>(cfg.downsample_factor);
    std::vector<WindowRange> map(m);
    for (std::size_t w = 0; w < m; ++w) {
        map[w] = {w * d, std::min((w + 1) * d, n_frames)};
    }
    return map;
}

Eigen::VectorXd mfd_window_targets(const std::vector<int>& frame_labels,
                                   const std::vector<WindowRange>& window_map) {
    if (window_map.empty()) fail_validation("mfd_window_targets: empty window map");
    if (window_map.back().end != frame_labels.size() || window_map.front().begin != 0) {
        fail_validation("mfd_window_targets: window map covers [",
                        window_map.front().begin, ", ", window_map.back().end, ") but there are ",
                        frame_labels.size(), " frames");
    }
    Eigen::VectorXd targets(static_cast<Eigen::Index>(window_map.size()));
    for (std::size_t w = 0; w < window_map.size(); ++w) {
        const auto& range = window_map[w];
        if (range.end <= range.begin) {
            fail_validation("mfd_window_targets: empty window ", w, " — framing bug");
        }
        double sum = 0.0;
        for (std::size_t i = range.begin; i < range.end; ++i) {
            const int y = frame_labels[i];
            if (y != 0 && y != 1) fail_validation("frame label must be 0 or 1, got ", y);
            sum += y;
        }
        targets(static_cast<Eigen::Index>(w)) = sum / static_cast<double>(range.end - range.begin);
    }
    return targets;
}

int Tagger::add_entry(std::string name, Eigen::Index rows, Eigen::Index cols) {
    Entry e;
    e.name = std::move(name);
    e.offset = static_cast<std::size_t>(params_.size());
    e.rows = rows;
    e.cols = cols;
    params_.conservativeResize(params_.size() + rows * cols);
    entries_.push_back(e);
    return static_cast<int>(entries_.size()) - 1;
}

std::pair<std::size_t, std::size_t> Tagger::param_span(const std::string& name) const {
    for (const Entry& e : entries_) {
        if (e.name == name) {
            return {e.offset, static_cast<std::size_t>(e.rows * e.cols)};
        }
    }
    fail_validation("unknown parameter name '", name, "'");
}

Eigen::Map<const Eigen::MatrixXd> Tagger::mat(int id) const {
    const Entry& e = entries_[static_cast<std::size_t>(id)];
    return {params_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<Eigen::MatrixXd> Tagger::mat(int id) {
    const Entry& e = entries_[static_cast<std::size_t>(id)];
    return {params_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<Eigen::MatrixXd> Tagger::grad_mat(Eigen::VectorXd& grad, const Entry& e) {
    return {grad.data() + e.offset, e.rows, e.cols};
}

Tagger::Tagger(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    params_.resize(0);
    const int c = cfg_.backbone.conv_channels;
    const int k = cfg_.backbone.conv_kernel;
    const int bl = cfg_.backbone.blstm_units_total;
    const int h = bl / 2;
    const int mc = cfg_.mfd.channels;

    blocks_.resize(static_cast<std::size_t>(cfg_.backbone.n_res_blocks));
    for (int b = 0; b < cfg_.backbone.n_res_blocks; ++b) {
        const int in_dim = (b == 0) ? cfg_.backbone.input_dim : c;
        const std::string prefix = cat("block", b, ".");
        BlockIds ids;
        ids.conv_w = add_entry(prefix + "conv_w", c, static_cast<Eigen::Index>(k) * in_dim);
        ids.gamma = add_entry(prefix + "gamma", c, 1);
        ids.beta = add_entry(prefix + "beta", c, 1);
        if (in_dim != c) {
            ids.proj_w = add_entry(prefix + "proj_w", c, in_dim);
            ids.proj_b = add_entry(prefix + "proj_b", c, 1);
        }
        blocks_[static_cast<std::size_t>(b)] = ids;
    }
    for (auto [dir, prefix] : {std::pair{&lstm_fwd_, "lstm_fwd."}, {&lstm_bwd_, "lstm_bwd."}}) {
        dir->wx = add_entry(std::string(prefix) + "wx", 4 * h, c);
        dir->wh = add_entry(std::string(prefix) + "wh", 4 * h, h);
        dir->b = add_entry(std::string(prefix) + "b", 4 * h, 1);
    }
    mfd_conv1_w_ =
        add_entry("mfd.conv1_w", mc, static_cast<Eigen::Index>(cfg_.mfd.kernels.first) * c);
    mfd_conv1_b_ = add_entry("mfd.conv1_b", mc, 1);
    mfd_conv2_w_ =
        add_entry("mfd.conv2_w", mc, static_cast<Eigen::Index>(cfg_.mfd.kernels.second) * mc);
    mfd_conv2_b_ = add_entry("mfd.conv2_b", mc, 1);
    mfd_cls_w_ = add_entry("mfd.cls_w", 2, mc);
    mfd_cls_b_ = add_entry("mfd.cls_b", 2, 1);
    fusion_w_ = add_entry("fusion.w", bl, mc);
    fusion_b_ = add_entry("fusion.b", bl, 1);
    final_w_ = add_entry("final.w", 2, bl);
    final_b_ = add_entry("final.b", 2, 1);

    params_.setZero();
}

void Tagger::init_params(Rng& rng, bool zero_init_heads) {
    auto fill_normal = [&](int id, double stddev) {
        auto m = mat(id);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal(0.0, stddev);
        }
    };
    auto fill_uniform = [&](int id, double bound) {
        auto m = mat(id);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
        }
    };

    params_.setZero();
    for (const BlockIds& ids : blocks_) {
        const auto fan_in = static_cast<double>(mat(ids.conv_w).cols());
        fill_normal(ids.conv_w, std::sqrt(2.0 / fan_in));
        mat(ids.gamma).setOnes();
        if (ids.proj_w >= 0) {
            fill_normal(ids.proj_w, std::sqrt(1.0 / static_cast<double>(mat(ids.proj_w).cols())));
        }
    }
    const int h = cfg_.backbone.blstm_units_total / 2;
    const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (const LstmIds* dir : {&lstm_fwd_, &lstm_bwd_}) {
        fill_uniform(dir->wx, lstm_bound);
        fill_uniform(dir->wh, lstm_bound);
        mat(dir->b).block(h, 0, h, 1).setOnes(); // forget-gate bias
    }
    fill_normal(mfd_conv1_w_, std::sqrt(2.0 / static_cast<double>(mat(mfd_conv1_w_).cols())));
    fill_normal(mfd_conv2_w_, std::sqrt(2.0 / static_cast<double>(mat(mfd_conv2_w_).cols())));
    if (!zero_init_heads) {
        fill_normal(mfd_cls_w_, std::sqrt(1.0 / static_cast<double>(mat(mfd_cls_w_).cols())));
        fill_normal(fusion_w_, std::sqrt(1.0 / static_cast<double>(mat(fusion_w_).cols())));
        fill_normal(final_w_, std::sqrt(1.0 / static_cast<double>(mat(final_w_).cols())));
    }
}

void Tagger::set_parameters(const Eigen::VectorXd& params) {
    if (params.size() != params_.size()) {
        fail_validation("set_parameters: expected ", params_.size(), " values, got ",
                        params.size());
    }
    params_ = params;
}

namespace {

// Channel norm over the frame axis: per channel, zero mean and unit variance
// across the utterance, then scale and shift.
void channel_norm_forward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                          const Eigen::VectorXd& beta, Eigen::MatrixXd& xhat,
                          Eigen::VectorXd& inv_std, Eigen::MatrixXd& out) {
    const auto n = static_cast<double>(x.rows());
    xhat.resize(x.rows(), x.cols());
    inv_std.resize(x.cols());
    out.resize(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mu = x.col(c).mean();
        const double var = (x.col(c).array() - mu).square().sum() / n;
        inv_std(c) = 1.0 / std::sqrt(var + kNormEps);
        xhat.col(c) = (x.col(c).array() - mu) * inv_std(c);
        out.col(c) = gamma(c) * xhat.col(c).array() + beta(c);
    }
}

void channel_norm_backward(const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& xhat,
                           const Eigen::VectorXd& inv_std, const Eigen::VectorXd& gamma,
                           Eigen::MatrixXd& d_x, Eigen::VectorXd& d_gamma,
                           Eigen::VectorXd& d_beta) {
    d_x.resize(d_out.rows(), d_out.cols());
    for (Eigen::Index c = 0; c < d_out.cols(); ++c) {
        d_gamma(c) += d_out.col(c).dot(xhat.col(c));
        d_beta(c) += d_out.col(c).sum();
        const Eigen::ArrayXd d_xhat = d_out.col(c).array() * gamma(c);
        const double mean_d = d_xhat.mean();
        const double mean_dx = (d_xhat * xhat.col(c).array()).mean();
        d_x.col(c) = inv_std(c) * (d_xhat - mean_d - xhat.col(c).array() * mean_dx);
    }
}

void lstm_forward_dir(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wx,
                      const Eigen::MatrixXd& wh, const Eigen::VectorXd& b, bool reverse,
                      ForwardTrace::DirTrace& tr) {
    const Eigen::Index n = x.rows();
    const Eigen::Index h = wh.cols();
    tr.gates.resize(n, 4 * h);
    tr.cells.resize(n, h);
    tr.hidden.resize(n, h);

    const Eigen::MatrixXd xw = x * wx.transpose(); // N x 4H
    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
    for (Eigen::Index step = 0; step < n; ++step) {
        const Eigen::Index t = reverse ? n - 1 - step : step;
        Eigen::VectorXd a = xw.row(t).transpose() + wh * h_prev + b;
        for (Eigen::Index j = 0; j < h; ++j) {
            const double i_g = 1.0 / (1.0 + std::exp(-a(j)));
            const double f_g = 1.0 / (1.0 + std::exp(-a(h + j)));
            const double g_g = std::tanh(a(2 * h + j));
            const double o_g = 1.0 / (1.0 + std::exp(-a(3 * h + j)));
            const double c_t = f_g * c_prev(j) + i_g * g_g;
            tr.gates(t, j) = i_g;
            tr.gates(t, h + j) = f_g;
            tr.gates(t, 2 * h + j) = g_g;
            tr.gates(t, 3 * h + j) = o_g;
            tr.cells(t, j) = c_t;
            tr.hidden(t, j) = o_g * std::tanh(c_t);
        }
        h_prev = tr.hidden.row(t).transpose();
        c_prev = tr.cells.row(t).transpose();
    }
}

// Full BPTT for one direction. d_hidden is N x H (time-aligned); adds the
// input gradient into d_x and parameter gradients into the provided blocks.
void lstm_backward_dir(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wx,
                       const Eigen::MatrixXd& wh, const ForwardTrace::DirTrace& tr,
                       const Eigen::MatrixXd& d_hidden, bool reverse,
                       Eigen::Map<Eigen::MatrixXd> d_wx, Eigen::Map<Eigen::MatrixXd> d_wh,
                       Eigen::Map<Eigen::MatrixXd> d_b, Eigen::MatrixXd& d_x) {
    const Eigen::Index n = x.rows();
    const Eigen::Index h = wh.cols();
    Eigen::MatrixXd d_act(n, 4 * h); // pre-activation gate gradients
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);

    for (Eigen::Index step = n - 1; step >= 0; --step) {
        const Eigen::Index t = reverse ? n - 1 - step : step;
        const Eigen::Index t_prev = reverse ? t + 1 : t - 1; // earlier in processing order
        Eigen::VectorXd dh = d_hidden.row(t).transpose() + dh_next;
        Eigen::VectorXd dc = dc_next;
        for (Eigen::Index j = 0; j < h; ++j) {
            const double i_g = tr.gates(t, j);
            const double f_g = tr.gates(t, h + j);
            const double g_g = tr.gates(t, 2 * h + j);
            const double o_g = tr.gates(t, 3 * h + j);
            const double c_t = tr.cells(t, j);
            const double tanh_c = std::tanh(c_t);
            const double c_prev =
                (step == 0) ? 0.0 : tr.cells(t_prev, j);

            const double do_g = dh(j) * tanh_c;
            dc(j) += dh(j) * o_g * (1.0 - tanh_c * tanh_c);
            const double di_g = dc(j) * g_g;
            const double dg_g = dc(j) * i_g;
            const double df_g = dc(j) * c_prev;

            d_act(t, j) = di_g * i_g * (1.0 - i_g);
            d_act(t, h + j) = df_g * f_g * (1.0 - f_g);
            d_act(t, 2 * h + j) = dg_g * (1.0 - g_g * g_g);
            d_act(t, 3 * h + j) = do_g * o_g * (1.0 - o_g);

            dc_next(j) = dc(j) * f_g;
        }
        dh_next = wh.transpose() * d_act.row(t).transpose();
        if (step == 0) break;
    }

    d_wx += d_act.transpose() * x;
    d_b += d_act.colwise().sum().transpose();
    // Recurrent weight gradient pairs each step with the previous hidden state.
    for (Eigen::Index step = 1; step < n; ++step) {
        const Eigen::Index t = reverse ? n - 1 - step : step;
        const Eigen::Index t_prev = reverse ? t + 1 : t - 1;
        d_wh += d_act.row(t).transpose() * tr.hidden.row(t_prev);
    }
    d_x += d_act * wx;
}

} // namespace

ModelOutput Tagger::run_forward(const Eigen::MatrixXd& features, ForwardTrace* trace,
                                bool use_mfd) const {
    if (features.cols() != cfg_.backbone.input_dim) {
        fail_validation("forward: expected ", cfg_.backbone.input_dim,
                        " feature dims, got ", features.cols());
    }
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < kMinFrames) {
        fail_validation("forward: need at least ", kMinFrames, " frames, got ", n,
                        "; pad the clip before tagging");
    }

    ForwardTrace local;
    ForwardTrace& tr = trace ? *trace : local;
    tr.blocks.assign(blocks_.size(), {});
    tr.used_mfd = use_mfd;
    tr.input = features;

    const int k = cfg_.backbone.conv_kernel;
    const int pad = (k - 1) / 2;

    Eigen::MatrixXd cur = features;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const BlockIds& ids = blocks_[b];
        auto& btr = tr.blocks[b];
        btr.in = cur;
        const Eigen::MatrixXd cols = im2col(cur, k, 1, pad, cur.rows());
        Eigen::MatrixXd conv_out = cols * mat(ids.conv_w).transpose();
        Eigen::MatrixXd norm_out;
        channel_norm_forward(conv_out, mat(ids.gamma).col(0), mat(ids.beta).col(0), btr.xhat,
                             btr.inv_std, norm_out);
        btr.relu_out = norm_out.cwiseMax(0.0);
        if (ids.proj_w >= 0) {
            Eigen::MatrixXd skip = btr.in * mat(ids.proj_w).transpose();
            skip.rowwise() += mat(ids.proj_b).col(0).transpose();
            btr.out = btr.relu_out + skip;
        } else {
            btr.out = btr.relu_out + btr.in;
        }
        cur = btr.out;
    }
    tr.rcnn_out = cur;

    lstm_forward_dir(tr.rcnn_out, mat(lstm_fwd_.wx), mat(lstm_fwd_.wh),
                     mat(lstm_fwd_.b).col(0), false, tr.lstm_fwd);
    lstm_forward_dir(tr.rcnn_out, mat(lstm_bwd_.wx), mat(lstm_bwd_.wh),
                     mat(lstm_bwd_.b).col(0), true, tr.lstm_bwd);
    const Eigen::Index h = cfg_.backbone.blstm_units_total / 2;
    tr.lstm_out.resize(tr.rcnn_out.rows(), 2 * h);
    tr.lstm_out.leftCols(h) = tr.lstm_fwd.hidden;
    tr.lstm_out.rightCols(h) = tr.lstm_bwd.hidden;

    ModelOutput out;
    if (use_mfd) {
        const int s1 = cfg_.mfd.strides.first, k1 = cfg_.mfd.kernels.first;
        const int s2 = cfg_.mfd.strides.second, k2 = cfg_.mfd.kernels.second;
        const auto m1 = static_cast<Eigen::Index>(ceil_div(n, static_cast<std::size_t>(s1)));
        const Eigen::MatrixXd cols1 = im2col(tr.rcnn_out, k1, s1, 0, m1);
        Eigen::MatrixXd h1 = cols1 * mat(mfd_conv1_w_).transpose();
        h1.rowwise() += mat(mfd_conv1_b_).col(0).transpose();
        tr.mfd_h1 = h1.cwiseMax(0.0);

        const auto m2 = static_cast<Eigen::Index>(
            ceil_div(static_cast<std::size_t>(m1), static_cast<std::size_t>(s2)));
        const Eigen::MatrixXd cols2 = im2col(tr.mfd_h1, k2, s2, 0, m2);
        Eigen::MatrixXd h2 = cols2 * mat(mfd_conv2_w_).transpose();
        h2.rowwise() += mat(mfd_conv2_b_).col(0).transpose();
        tr.mfd_h2 = h2.cwiseMax(0.0);

        out.mfd_logits = tr.mfd_h2 * mat(mfd_cls_w_).transpose();
        out.mfd_logits.rowwise() += mat(mfd_cls_b_).col(0).transpose();

        tr.window_map = mfd_window_map(n, cfg_.mfd);
        if (tr.window_map.size() != static_cast<std::size_t>(m2)) {
            fail_runtime("mfd framing mismatch: ", tr.window_map.size(), " windows vs ", m2,
                         " downsampled rows");
        }
        Eigen::MatrixXd proj = tr.mfd_h2 * mat(fusion_w_).transpose();
        proj.rowwise() += mat(fusion_b_).col(0).transpose();
        tr.fused = tr.lstm_out;
        for (std::size_t w = 0; w < tr.window_map.size(); ++w) {
            for (std::size_t t = tr.window_map[w].begin; t < tr.window_map[w].end; ++t) {
                tr.fused.row(static_cast<Eigen::Index>(t)) += proj.row(static_cast<Eigen::Index>(w));
            }
        }
        out.mfd_window_map = tr.window_map;
    } else {
        tr.fused = tr.lstm_out;
    }

    out.frame_logits = tr.fused * mat(final_w_).transpose();
    out.frame_logits.rowwise() += mat(final_b_).col(0).transpose();
    out.frame_probs = fake_probabilities(out.frame_logits);
    return out;
}

ModelOutput Tagger::forward(const Eigen::MatrixXd& features, bool use_mfd) const {
    return run_forward(features, nullptr, use_mfd);
}

ModelOutput Tagger::forward_traced(const Eigen::MatrixXd& features, ForwardTrace& trace,
                                   bool use_mfd) const {
    return run_forward(features, &trace, use_mfd);
}

void Tagger::backward(const ForwardTrace& tr, const Eigen::MatrixXd& d_frame_logits,
                      const Eigen::MatrixXd& d_mfd_logits, Eigen::VectorXd& grad) const {
    if (grad.size() != params_.size()) {
        fail_validation("backward: gradient buffer has ", grad.size(), " values, expected ",
                        params_.size());
    }
    const Eigen::Index h = cfg_.backbone.blstm_units_total / 2;
    auto g = [&](int id) { return grad_mat(grad, entries_[static_cast<std::size_t>(id)]); };

    // Final linear layer.
    g(final_w_) += d_frame_logits.transpose() * tr.fused;
    g(final_b_) += d_frame_logits.colwise().sum().transpose();
    Eigen::MatrixXd d_fused = d_frame_logits * mat(final_w_); // N x BL

    Eigen::MatrixXd d_rcnn = Eigen::MatrixXd::Zero(tr.rcnn_out.rows(), tr.rcnn_out.cols());

    if (tr.used_mfd) {
        const auto m = static_cast<Eigen::Index>(tr.window_map.size());
        // Broadcast-add fusion: each window collects its frames' gradients.
        Eigen::MatrixXd d_proj = Eigen::MatrixXd::Zero(m, tr.lstm_out.cols());
        for (Eigen::Index w = 0; w < m; ++w) {
            for (std::size_t t = tr.window_map[static_cast<std::size_t>(w)].begin;
                 t < tr.window_map[static_cast<std::size_t>(w)].end; ++t) {
                d_proj.row(w) += d_fused.row(static_cast<Eigen::Index>(t));
            }
        }
        g(fusion_w_) += d_proj.transpose() * tr.mfd_h2;
        g(fusion_b_) += d_proj.colwise().sum().transpose();
        Eigen::MatrixXd d_h2 = d_proj * mat(fusion_w_);

        if (d_mfd_logits.rows() != m) {
            fail_validation("backward: mfd gradient has ", d_mfd_logits.rows(),
                            " rows, expected ", m);
        }
        g(mfd_cls_w_) += d_mfd_logits.transpose() * tr.mfd_h2;
        g(mfd_cls_b_) += d_mfd_logits.colwise().sum().transpose();
        d_h2 += d_mfd_logits * mat(mfd_cls_w_);

        // Stage 2 strided conv.
        const int s2 = cfg_.mfd.strides.second, k2 = cfg_.mfd.kernels.second;
        d_h2.array() *= (tr.mfd_h2.array() > 0.0).cast<double>();
        const Eigen::MatrixXd cols2 = im2col(tr.mfd_h1, k2, s2, 0, d_h2.rows());
        g(mfd_conv2_w_) += d_h2.transpose() * cols2;
        g(mfd_conv2_b_) += d_h2.colwise().sum().transpose();
        Eigen::MatrixXd d_cols2 = d_h2 * mat(mfd_conv2_w_);
        Eigen::MatrixXd d_h1 = Eigen::MatrixXd::Zero(tr.mfd_h1.rows(), tr.mfd_h1.cols());
        col2im_add(d_cols2, k2, s2, 0, d_h1);

        // Stage 1 strided conv back onto the block-stack output.
        const int s1 = cfg_.mfd.strides.first, k1 = cfg_.mfd.kernels.first;
        d_h1.array() *= (tr.mfd_h1.array() > 0.0).cast<double>();
        const Eigen::MatrixXd cols1 = im2col(tr.rcnn_out, k1, s1, 0, d_h1.rows());
        g(mfd_conv1_w_) += d_h1.transpose() * cols1;
        g(mfd_conv1_b_) += d_h1.colwise().sum().transpose();
        Eigen::MatrixXd d_cols1 = d_h1 * mat(mfd_conv1_w_);
        col2im_add(d_cols1, k1, s1, 0, d_rcnn);
    }

    // BLSTM.
    lstm_backward_dir(tr.rcnn_out, mat(lstm_fwd_.wx), mat(lstm_fwd_.wh), tr.lstm_fwd,
                      d_fused.leftCols(h), false, g(lstm_fwd_.wx), g(lstm_fwd_.wh),
                      g(lstm_fwd_.b), d_rcnn);
    lstm_backward_dir(tr.rcnn_out, mat(lstm_bwd_.wx), mat(lstm_bwd_.wh), tr.lstm_bwd,
                      d_fused.rightCols(h), true, g(lstm_bwd_.wx), g(lstm_bwd_.wh),
                      g(lstm_bwd_.b), d_rcnn);

    // Residual blocks in reverse.
    const int k = cfg_.backbone.conv_kernel;
    const int pad = (k - 1) / 2;
    Eigen::MatrixXd d_out = d_rcnn;
    for (std::size_t b = blocks_.size(); b-- > 0;) {
        const BlockIds& ids = blocks_[b];
        const auto& btr = tr.blocks[b];

        Eigen::MatrixXd d_norm = d_out.cwiseProduct(
            (btr.relu_out.array() > 0.0).cast<double>().matrix());
        Eigen::MatrixXd d_conv;
        Eigen::VectorXd d_gamma_acc = Eigen::VectorXd::Zero(d_norm.cols());
        Eigen::VectorXd d_beta_acc = Eigen::VectorXd::Zero(d_norm.cols());
        channel_norm_backward(d_norm, btr.xhat, btr.inv_std, mat(ids.gamma).col(0), d_conv,
                              d_gamma_acc, d_beta_acc);
        g(ids.gamma).col(0) += d_gamma_acc;
        g(ids.beta).col(0) += d_beta_acc;

        const Eigen::MatrixXd cols = im2col(btr.in, k, 1, pad, btr.in.rows());
        g(ids.conv_w) += d_conv.transpose() * cols;
        if (ids.proj_w >= 0) {
            g(ids.proj_w) += d_out.transpose() * btr.in;
            g(ids.proj_b) += d_out.colwise().sum().transpose();
        }

        if (b == 0) break; // input gradient is not needed
        Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(btr.in.rows(), btr.in.cols());
        col2im_add(d_conv * mat(ids.conv_w), k, 1, pad, d_in);
        if (ids.proj_w >= 0) {
            d_in += d_out * mat(ids.proj_w);
        } else {
            d_in += d_out;
        }
        d_out = std::move(d_in);
    }
}

std::size_t count_parameters(const ModelConfig& cfg) { return Tagger(cfg).n_params(); }

namespace {

nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["input_dim"] = cfg.backbone.input_dim;
    j["n_res_blocks"] = cfg.backbone.n_res_blocks;
    j["conv_channels"] = cfg.backbone.conv_channels;
    j["conv_kernel"] = cfg.backbone.conv_kernel;
    j["blstm_units_total"] = cfg.backbone.blstm_units_total;
    j["n_classes"] = cfg.backbone.n_classes;
    j["mfd_channels"] = cfg.mfd.channels;
    j["mfd_stride1"] = cfg.mfd.strides.first;
    j["mfd_stride2"] = cfg.mfd.strides.second;
    j["mfd_kernel1"] = cfg.mfd.kernels.first;
    j["mfd_kernel2"] = cfg.mfd.kernels.second;
    j["mfd_downsample"] = cfg.mfd.downsample_factor;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.backbone.input_dim = j.at("input_dim").get<int>();
    cfg.backbone.n_res_blocks = j.at("n_res_blocks").get<int>();
    cfg.backbone.conv_channels = j.at("conv_channels").get<int>();
    cfg.backbone.conv_kernel = j.at("conv_kernel").get<int>();
    cfg.backbone.blstm_units_total = j.at("blstm_units_total").get<int>();
    cfg.backbone.n_classes = j.at("n_classes").get<int>();
    cfg.mfd.channels = j.at("mfd_channels").get<int>();
    cfg.mfd.strides = {j.at("mfd_stride1").get<int>(), j.at("mfd_stride2").get<int>()};
    cfg.mfd.kernels = {j.at("mfd_kernel1").get<int>(), j.at("mfd_kernel2").get<int>()};
    cfg.mfd.downsample_factor = j.at("mfd_downsample").get<int>();
    return cfg;
}

constexpr char kCheckpointMagic[8] = {'S', 'L', 'C', 'K', 'P', 'T', '0', '1'};

} // namespace

void save_checkpoint(const std::string& path, const Tagger& model,
                     const std::string& rng_state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_runtime("cannot write checkpoint: ", path);
    os.write(kCheckpointMagic, 8);
    const std::uint64_t hash = model_config_hash(model.config());
    os.write(reinterpret_cast<const char*>(&hash), 8);
    const std::string cfg_json = config_to_json(model.config()).dump();
    const std::uint64_t cfg_len = cfg_json.size();
    os.write(reinterpret_cast<const char*>(&cfg_len), 8);
    os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
    const std::uint64_t n = static_cast<std::uint64_t>(model.parameters().size());
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(model.parameters().data()),
             static_cast<std::streamsize>(n * sizeof(double)));
    const std::uint64_t rng_len = rng_state.size();
    os.write(reinterpret_cast<const char*>(&rng_len), 8);
    os.write(rng_state.data(), static_cast<std::streamsize>(rng_len));
    if (!os) fail_runtime("failed while writing checkpoint ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_runtime("cannot open checkpoint: ", path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        fail_validation(path, ": not a checkpoint file");
    }
    std::uint64_t hash = 0, cfg_len = 0;
    is.read(reinterpret_cast<char*>(&hash), 8);
    is.read(reinterpret_cast<char*>(&cfg_len), 8);
    std::string cfg_json(cfg_len, '\0');
    is.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
    Checkpoint ckpt;
    ckpt.config = config_from_json(nlohmann::json::parse(cfg_json));
    if (model_config_hash(ckpt.config) != hash) {
        fail_validation(path, ": config hash mismatch, checkpoint is corrupt");
    }
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    ckpt.params.resize(static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(ckpt.params.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    std::uint64_t rng_len = 0;
    is.read(reinterpret_cast<char*>(&rng_len), 8);
    ckpt.rng_state.resize(rng_len);
    is.read(ckpt.rng_state.data(), static_cast<std::streamsize>(rng_len));
    if (!is) fail_validation(path, ": truncated checkpoint file");
    return ckpt;
}

std::string load_checkpoint_into(const std::string& path, Tagger& model) {
    Checkpoint ckpt = load_checkpoint(path);
    if (model_config_hash(ckpt.config) != model_config_hash(model.config())) {
        fail_validation(path, ": checkpoint config hash ",
                        model_config_hash(ckpt.config), " does not match model config hash ",
                        model_config_hash(model.config()));
    }
    model.set_parameters(ckpt.params);
    return ckpt.rng_state;
}

} // namespace spoofloc
