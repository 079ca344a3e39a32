#ifndef HRGROUP_NEURALNET_HPP
#define HRGROUP_NEURALNET_HPP

// Small 1-D convolutional classifiers over a raw window, optionally fused
// with a handcrafted (HC) feature vector:
//
//   Baseline  conv -> ReLU -> dropout -> maxpool -> flatten -> FC(64) -> ReLU -> FC(classes)
//   Model1    Baseline up to the ReLU after FC(64), concat HC -> FC(64) -> FC(classes)
//   Model2    Baseline applied to [window, HC] as one longer input sequence
//   Model3    HC -> FC(32) -> ReLU, concat with the FC(64) branch -> FC(64) -> FC(classes)
//
// Everything is double precision with a hand-written backward pass.

#include "hrgroup/error.hpp"
#include "hrgroup/io.hpp"
#include "hrgroup/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hrgroup {

enum class ArchitectureId { Baseline, Model1, Model2, Model3 };

inline std::string_view architecture_name(ArchitectureId a) {
    switch (a) {
    case ArchitectureId::Baseline: return "Baseline";
    case ArchitectureId::Model1: return "Model1";
    case ArchitectureId::Model2: return "Model2";
    case ArchitectureId::Model3: return "Model3";
    }
    return "?";
}

struct NetConfig {
    int window_size = 80;
    int hc_dim = 0;
    int out_channels = 16;
    int kernel = 5;
    int pool = 2;
    double dropout_p = 0.3;
    int fc1_out = 64;
    int hc_fc_out = 32;
    int n_classes = 5;
    std::uint64_t seed = 1;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 50;
    int batch_size = 32;
};

struct NetParam {
    std::string name;
    std::size_t rows = 0; // output units (or channels)
    std::size_t cols = 1; // fan-in (1 for biases)
    std::vector<double> value;
};

struct TrainingLog {
    double initial_loss = 0.0;          // eval-mode loss before the first update
    std::vector<double> epoch_loss;     // mean train-mode loss per epoch
};

class NetModel {
public:
    ArchitectureId arch = ArchitectureId::Baseline;
    NetConfig cfg;
    std::vector<NetParam> params;
    TrainingLog log;

    std::size_t input_length() const {
        return static_cast<std::size_t>(cfg.window_size + (arch == ArchitectureId::Model2 ? cfg.hc_dim : 0));
    }
    std::size_t conv_length() const { return input_length() - static_cast<std::size_t>(cfg.kernel) + 1; }
    std::size_t pool_length() const { return conv_length() / static_cast<std::size_t>(cfg.pool); }
    std::size_t flatten_dim() const { return static_cast<std::size_t>(cfg.out_channels) * pool_length(); }
    /// Width of the concatenation feeding the middle FC layer (Model1/Model3).
    std::size_t mid_concat_dim() const {
        switch (arch) {
        case ArchitectureId::Model1: return static_cast<std::size_t>(cfg.fc1_out + cfg.hc_dim);
        case ArchitectureId::Model3: return static_cast<std::size_t>(cfg.fc1_out + cfg.hc_fc_out);
        default: return 0;
        }
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }
};

/// Closed-form parameter count per architecture.
inline std::size_t expected_parameter_count(ArchitectureId arch, const NetConfig& c) {
    const std::size_t C = static_cast<std::size_t>(c.out_channels), K = static_cast<std::size_t>(c.kernel);
    const std::size_t H = static_cast<std::size_t>(c.fc1_out), F = static_cast<std::size_t>(c.hc_dim);
    const std::size_t G = static_cast<std::size_t>(c.hc_fc_out), O = static_cast<std::size_t>(c.n_classes);
    const std::size_t len = static_cast<std::size_t>(c.window_size) + (arch == ArchitectureId::Model2 ? F : 0);
    const std::size_t flat = C * ((len - K + 1) / static_cast<std::size_t>(c.pool));
    const std::size_t trunk = C * K + C + flat * H + H;
    switch (arch) {
    case ArchitectureId::Baseline:
    case ArchitectureId::Model2: return trunk + H * O + O;
    case ArchitectureId::Model1: return trunk + (H + F) * H + H + H * O + O;
    case ArchitectureId::Model3: return trunk + F * G + G + (H + G) * H + H + H * O + O;
    }
    return 0;
}

namespace nn_detail {

enum Slot : std::size_t { ConvW, ConvB, Fc1W, Fc1B, OutW, OutB, MidW, MidB, HcW, HcB, SlotCount };

/// Parameter order per architecture. Model2 shares Baseline's order so the
/// two are identical when the HC vector is empty.
inline std::vector<Slot> slots(ArchitectureId a) {
    switch (a) {
    case ArchitectureId::Baseline:
    case ArchitectureId::Model2: return {ConvW, ConvB, Fc1W, Fc1B, OutW, OutB};
    case ArchitectureId::Model1: return {ConvW, ConvB, Fc1W, Fc1B, MidW, MidB, OutW, OutB};
    case ArchitectureId::Model3: return {ConvW, ConvB, Fc1W, Fc1B, HcW, HcB, MidW, MidB, OutW, OutB};
    }
    return {};
}

inline std::string_view slot_name(Slot s) {
    static constexpr std::string_view names[] = {"conv.weight", "conv.bias", "fc1.weight", "fc1.bias",
                                                 "out.weight",  "out.bias",  "mid.weight", "mid.bias",
                                                 "hc_fc.weight", "hc_fc.bias"};
    return names[s];
}

/// Index of each slot inside model.params (or npos).
struct Layout {
    std::size_t at[SlotCount];
    explicit Layout(ArchitectureId a) {
        std::fill(std::begin(at), std::end(at), static_cast<std::size_t>(-1));
        const auto order = slots(a);
        for (std::size_t i = 0; i < order.size(); ++i) at[order[i]] = i;
    }
};

/// Per-sample activations kept for the backward pass.
struct Trace {
    std::vector<double> input;   // conv input
    std::vector<double> conv;    // pre-activation, C x Lc
    std::vector<double> dropped; // after ReLU and dropout, C x Lc
    std::vector<double> mask;    // dropout scale per unit (0 or 1/(1-p)); empty at eval
    std::vector<double> pooled;  // C x Lp
    std::vector<std::size_t> argmax;
    std::vector<double> h1, a1;  // FC(64)
    std::vector<double> hc, g_pre, g; // HC branch (Model3)
    std::vector<double> cat, h2;      // middle layer (Model1/3)
    std::vector<double> logits;
};

inline void dense(const NetParam& w, const NetParam& b, std::span<const double> in, std::vector<double>& out) {
    out.assign(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = &w.value[r * w.cols];
        double s = b.value[r];
        for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * in[c];
        out[r] = s;
    }
}

/// Accumulates dW, db and returns dIn for a dense layer.
inline void dense_back(const NetParam& w, std::span<const double> in, std::span<const double> dout, NetParam& gw,
                       NetParam& gb, std::vector<double>* din) {
    if (din) din->assign(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double d = dout[r];
        gb.value[r] += d;
        if (d == 0.0) continue;
        double* grow = &gw.value[r * w.cols];
        const double* row = &w.value[r * w.cols];
        for (std::size_t c = 0; c < w.cols; ++c) grow[c] += d * in[c];
        if (din)
            for (std::size_t c = 0; c < w.cols; ++c) (*din)[c] += d * row[c];
    }
}

struct DropoutKey {
    std::uint64_t seed;
    std::uint64_t epoch;
    std::uint64_t sample; // position in the epoch's sample stream
};

inline void forward_sample(const NetModel& m, const Layout& L, std::span<const double> window,
                           std::span<const double> hc, const DropoutKey* dropout, Trace& t) {
    const auto& P = m.params;
    const auto& cfg = m.cfg;
    const std::size_t C = static_cast<std::size_t>(cfg.out_channels), K = static_cast<std::size_t>(cfg.kernel);
    const std::size_t Lc = m.conv_length(), Lp = m.pool_length(), pool = static_cast<std::size_t>(cfg.pool);

    t.input.assign(window.begin(), window.end());
    if (m.arch == ArchitectureId::Model2) t.input.insert(t.input.end(), hc.begin(), hc.end());
    t.hc.assign(hc.begin(), hc.end());

    const auto& cw = P[L.at[ConvW]].value;
    const auto& cb = P[L.at[ConvB]].value;
    t.conv.assign(C * Lc, 0.0);
    t.dropped.assign(C * Lc, 0.0);
    t.mask.clear();
    if (dropout) t.mask.assign(C * Lc, 0.0);
    const double keep_scale = 1.0 / (1.0 - cfg.dropout_p);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < Lc; ++i) {
            double s = cb[c];
            for (std::size_t k = 0; k < K; ++k) s += cw[c * K + k] * t.input[i + k];
            const std::size_t u = c * Lc + i;
            t.conv[u] = s;
            double a = s > 0.0 ? s : 0.0;
            if (dropout) {
                const bool keep = hash_uniform(dropout->seed, {dropout->epoch, dropout->sample, u}) >= cfg.dropout_p;
                t.mask[u] = keep ? keep_scale : 0.0;
                a *= t.mask[u];
            }
            t.dropped[u] = a;
        }

    t.pooled.assign(C * Lp, 0.0);
    t.argmax.assign(C * Lp, 0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < Lp; ++j) {
            std::size_t best = c * Lc + j * pool;
            for (std::size_t q = 1; q < pool; ++q)
                if (t.dropped[c * Lc + j * pool + q] > t.dropped[best]) best = c * Lc + j * pool + q;
            t.pooled[c * Lp + j] = t.dropped[best];
            t.argmax[c * Lp + j] = best;
        }

    dense(P[L.at[Fc1W]], P[L.at[Fc1B]], t.pooled, t.h1);
    t.a1.resize(t.h1.size());
    for (std::size_t i = 0; i < t.h1.size(); ++i) t.a1[i] = t.h1[i] > 0.0 ? t.h1[i] : 0.0;

    switch (m.arch) {
    case ArchitectureId::Baseline:
    case ArchitectureId::Model2: dense(P[L.at[OutW]], P[L.at[OutB]], t.a1, t.logits); break;
    case ArchitectureId::Model1:
        t.cat = t.a1;
        t.cat.insert(t.cat.end(), hc.begin(), hc.end());
        dense(P[L.at[MidW]], P[L.at[MidB]], t.cat, t.h2);
        dense(P[L.at[OutW]], P[L.at[OutB]], t.h2, t.logits);
        break;
    case ArchitectureId::Model3:
        dense(P[L.at[HcW]], P[L.at[HcB]], hc, t.g_pre);
        t.g.resize(t.g_pre.size());
        for (std::size_t i = 0; i < t.g.size(); ++i) t.g[i] = t.g_pre[i] > 0.0 ? t.g_pre[i] : 0.0;
        t.cat = t.a1;
        t.cat.insert(t.cat.end(), t.g.begin(), t.g.end());
        dense(P[L.at[MidW]], P[L.at[MidB]], t.cat, t.h2);
        dense(P[L.at[OutW]], P[L.at[OutB]], t.h2, t.logits);
        break;
    }
}

inline std::vector<double> softmax(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - mx));
    for (auto& v : p) v /= s;
    return p;
}

inline double cross_entropy(std::span<const double> logits, int label) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - mx);
    return std::log(s) + mx - logits[static_cast<std::size_t>(label)];
}

/// Adds d(loss)/d(params) * scale for one traced sample into grads.
inline void backward_sample(const NetModel& m, const Layout& L, const Trace& t, int label, double scale,
                            std::vector<NetParam>& grads) {
    const auto& P = m.params;
    const auto& cfg = m.cfg;
    std::vector<double> dlogits = softmax(t.logits);
    dlogits[static_cast<std::size_t>(label)] -= 1.0;
    for (auto& v : dlogits) v *= scale;

    std::vector<double> da1;
    switch (m.arch) {
    case ArchitectureId::Baseline:
    case ArchitectureId::Model2: dense_back(P[L.at[OutW]], t.a1, dlogits, grads[L.at[OutW]], grads[L.at[OutB]], &da1); break;
    case ArchitectureId::Model1:
    case ArchitectureId::Model3: {
        std::vector<double> dh2, dcat;
        dense_back(P[L.at[OutW]], t.h2, dlogits, grads[L.at[OutW]], grads[L.at[OutB]], &dh2);
        dense_back(P[L.at[MidW]], t.cat, dh2, grads[L.at[MidW]], grads[L.at[MidB]], &dcat);
        const std::size_t H = t.a1.size();
        da1.assign(dcat.begin(), dcat.begin() + static_cast<std::ptrdiff_t>(H));
        if (m.arch == ArchitectureId::Model3) {
            std::vector<double> dg_pre(t.g.size());
            for (std::size_t i = 0; i < dg_pre.size(); ++i) dg_pre[i] = t.g_pre[i] > 0.0 ? dcat[H + i] : 0.0;
            dense_back(P[L.at[HcW]], t.hc, dg_pre, grads[L.at[HcW]], grads[L.at[HcB]], nullptr);
        }
        break;
    }
    }

    std::vector<double> dh1(da1.size());
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] = t.h1[i] > 0.0 ? da1[i] : 0.0;
    std::vector<double> dpooled;
    dense_back(P[L.at[Fc1W]], t.pooled, dh1, grads[L.at[Fc1W]], grads[L.at[Fc1B]], &dpooled);

    const std::size_t C = static_cast<std::size_t>(cfg.out_channels), K = static_cast<std::size_t>(cfg.kernel);
    const std::size_t Lc = m.conv_length();
    std::vector<double> dconv(C * Lc, 0.0);
    for (std::size_t j = 0; j < dpooled.size(); ++j) dconv[t.argmax[j]] += dpooled[j];
    for (std::size_t u = 0; u < dconv.size(); ++u) {
        if (t.conv[u] <= 0.0) dconv[u] = 0.0;
        else if (!t.mask.empty()) dconv[u] *= t.mask[u];
    }
    auto& gw = grads[L.at[ConvW]].value;
    auto& gb = grads[L.at[ConvB]].value;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < Lc; ++i) {
            const double d = dconv[c * Lc + i];
            if (d == 0.0) continue;
            gb[c] += d;
            for (std::size_t k = 0; k < K; ++k) gw[c * K + k] += d * t.input[i + k];
        }
}

inline std::vector<NetParam> zero_like(const std::vector<NetParam>& params) {
    auto g = params;
    for (auto& p : g) std::fill(p.value.begin(), p.value.end(), 0.0);
    return g;
}

} // namespace nn_detail

inline void validate(ArchitectureId arch, const NetConfig& c) {
    auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, what); };
    if (c.out_channels < 1 || c.kernel < 1 || c.pool < 1 || c.fc1_out < 1 || c.hc_fc_out < 1 || c.n_classes < 2)
        bad("layer sizes must be positive");
    if (c.hc_dim < 0) bad("hc_dim must be non-negative");
    if (c.window_size < c.kernel) bad("window shorter than the convolution kernel");
    if ((arch == ArchitectureId::Model1 || arch == ArchitectureId::Model3) && c.hc_dim < 1)
        bad(std::string(architecture_name(arch)) + " needs HC features");
    const int len = c.window_size + (arch == ArchitectureId::Model2 ? c.hc_dim : 0);
    if ((len - c.kernel + 1) / c.pool < 1) bad("pooled length is zero");
    if (!(c.dropout_p >= 0.0 && c.dropout_p < 1.0)) bad("dropout must lie in [0, 1)");
    if (!(c.learning_rate > 0.0) || c.epochs < 0 || c.batch_size < 1) bad("invalid optimizer settings");
}

/// Allocates parameters with seeded uniform fan-in initialisation
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline NetModel build(ArchitectureId arch, const NetConfig& cfg) {
    using namespace nn_detail;
    validate(arch, cfg);
    NetModel m;
    m.arch = arch;
    m.cfg = cfg;
    const std::size_t C = static_cast<std::size_t>(cfg.out_channels), K = static_cast<std::size_t>(cfg.kernel);
    const std::size_t H = static_cast<std::size_t>(cfg.fc1_out), F = static_cast<std::size_t>(cfg.hc_dim);
    const std::size_t G = static_cast<std::size_t>(cfg.hc_fc_out), O = static_cast<std::size_t>(cfg.n_classes);
    auto shape = [&](Slot s) -> std::pair<std::size_t, std::size_t> {
        switch (s) {
        case ConvW: return {C, K};
        case ConvB: return {C, 1};
        case Fc1W: return {H, m.flatten_dim()};
        case Fc1B: return {H, 1};
        case MidW: return {H, m.mid_concat_dim()};
        case MidB: return {H, 1};
        case HcW: return {G, F};
        case HcB: return {G, 1};
        case OutW: return {O, H};
        case OutB: return {O, 1};
        default: return {0, 0};
        }
    };
    // A bias shares the fan-in of the weight it belongs to.
    auto fan_in = [&](Slot s) {
        const Slot weight = (s == ConvB || s == Fc1B || s == OutB || s == MidB || s == HcB) ? Slot(s - 1) : s;
        return shape(weight).second;
    };
    const auto order = slots(arch);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto [rows, cols] = shape(order[i]);
        NetParam p{std::string(slot_name(order[i])), rows, cols, std::vector<double>(rows * cols)};
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(order[i])));
        Rng rng(derive_seed(cfg.seed, {0x696e6974ULL, i}));
        for (auto& v : p.value) v = rng.uniform(-bound, bound);
        m.params.push_back(std::move(p));
    }
    if (m.parameter_count() != expected_parameter_count(arch, cfg))
        fail(ErrorCode::InvariantViolation, "parameter count does not match the closed form");
    return m;
}

/// Row-major batch of class scores (logits).
struct ScoreBatch {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

/// Forward pass over a batch. Dropout is applied only in train mode, drawing
/// its masks from (cfg.seed, dropout_stream, sample index).
inline ScoreBatch forward(const NetModel& m, std::span<const std::vector<double>> windows,
                          std::span<const std::vector<double>> hc, bool train_mode, std::uint64_t dropout_stream = 0) {
    if (hc.size() != windows.size() && !(hc.empty() && m.cfg.hc_dim == 0))
        fail(ErrorCode::ShapeMismatch, "window and HC batches differ in size");
    const nn_detail::Layout L(m.arch);
    ScoreBatch out{windows.size(), static_cast<std::size_t>(m.cfg.n_classes), {}};
    out.data.reserve(out.rows * out.cols);
    nn_detail::Trace t;
    static const std::vector<double> kEmpty;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].size() != static_cast<std::size_t>(m.cfg.window_size))
            fail(ErrorCode::ShapeMismatch, "window length " + std::to_string(windows[i].size()));
        const auto& h = hc.empty() ? kEmpty : hc[i];
        if (h.size() != static_cast<std::size_t>(m.cfg.hc_dim))
            fail(ErrorCode::ShapeMismatch, "HC length " + std::to_string(h.size()));
        const nn_detail::DropoutKey key{m.cfg.seed, dropout_stream, i};
        nn_detail::forward_sample(m, L, windows[i], h, train_mode ? &key : nullptr, t);
        out.data.insert(out.data.end(), t.logits.begin(), t.logits.end());
    }
    return out;
}

inline std::vector<double> softmax_row(std::span<const double> logits) { return nn_detail::softmax(logits); }

inline int predict_class(const NetModel& m, std::span<const double> window, std::span<const double> hc) {
    const nn_detail::Layout L(m.arch);
    nn_detail::Trace t;
    nn_detail::forward_sample(m, L, window, hc, nullptr, t);
    return static_cast<int>(std::max_element(t.logits.begin(), t.logits.end()) - t.logits.begin());
}

struct NetExample {
    std::vector<double> window;
    std::vector<double> hc;
    int label = 0;
};

/// Mean eval-mode cross-entropy over a dataset.
inline double mean_loss(const NetModel& m, std::span<const NetExample> data) {
    const nn_detail::Layout L(m.arch);
    nn_detail::Trace t;
    double s = 0.0;
    for (const auto& ex : data) {
        nn_detail::forward_sample(m, L, ex.window, ex.hc, nullptr, t);
        s += nn_detail::cross_entropy(t.logits, ex.label);
    }
    return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

/// Mini-batch Adam on mean softmax cross-entropy. Shuffling, dropout and
/// initialisation all derive from cfg.seed, so two runs are bit-identical.
inline NetModel train(NetModel m, std::span<const NetExample> data) {
    using namespace nn_detail;
    if (data.empty()) fail(ErrorCode::EmptyDataset, "no training examples");
    for (const auto& ex : data) {
        if (ex.label < 0 || ex.label >= m.cfg.n_classes) fail(ErrorCode::InvalidConfig, "label out of range");
        if (ex.window.size() != static_cast<std::size_t>(m.cfg.window_size) ||
            ex.hc.size() != static_cast<std::size_t>(m.cfg.hc_dim))
            fail(ErrorCode::ShapeMismatch, "training example shape does not match the network");
    }
    const auto& cfg = m.cfg;
    const Layout L(m.arch);
    m.log = {};
    m.log.initial_loss = mean_loss(m, data);

    auto first = zero_like(m.params), second = zero_like(m.params);
    auto grads = zero_like(m.params);
    std::vector<std::size_t> order(data.size());
    Trace t;
    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, {0x73687566ULL, static_cast<std::uint64_t>(epoch)}));
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            for (auto& g : grads) std::fill(g.value.begin(), g.value.end(), 0.0);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t s = start; s < end; ++s) {
                const auto& ex = data[order[s]];
                const DropoutKey key{cfg.seed ^ 0x64726f70ULL, static_cast<std::uint64_t>(epoch) + 1, s};
                forward_sample(m, L, ex.window, ex.hc, cfg.dropout_p > 0.0 ? &key : nullptr, t);
                loss_sum += cross_entropy(t.logits, ex.label);
                backward_sample(m, L, t, ex.label, scale, grads);
            }
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < m.params.size(); ++p) {
                auto& w = m.params[p].value;
                auto& m1 = first[p].value;
                auto& m2 = second[p].value;
                const auto& g = grads[p].value;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
                    m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    w[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
                }
            }
        }
        m.log.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    }
    return m;
}

/// Analytic gradient of one sample's eval-mode loss, flattened in parameter order.
inline std::vector<double> loss_gradient(const NetModel& m, const NetExample& ex) {
    using namespace nn_detail;
    const Layout L(m.arch);
    Trace t;
    forward_sample(m, L, ex.window, ex.hc, nullptr, t);
    auto grads = zero_like(m.params);
    backward_sample(m, L, t, ex.label, 1.0, grads);
    std::vector<double> flat;
    for (const auto& g : grads) flat.insert(flat.end(), g.value.begin(), g.value.end());
    return flat;
}

inline double sample_loss(const NetModel& m, const NetExample& ex) {
    const nn_detail::Layout L(m.arch);
    nn_detail::Trace t;
    nn_detail::forward_sample(m, L, ex.window, ex.hc, nullptr, t);
    return nn_detail::cross_entropy(t.logits, ex.label);
}

/// Max over randomly chosen parameters of
/// |analytic - central difference| / max(1, |analytic|, |numeric|).
inline double gradient_check(const NetModel& model, const NetExample& ex, std::size_t n_params = 200,
                             std::uint64_t seed = 0, double step = 1e-5) {
    NetModel m = model;
    const auto analytic = loss_gradient(m, ex);
    std::vector<std::pair<std::size_t, std::size_t>> index; // (param, element)
    for (std::size_t p = 0; p < m.params.size(); ++p)
        for (std::size_t i = 0; i < m.params[p].value.size(); ++i) index.emplace_back(p, i);
    std::vector<std::size_t> offsets(m.params.size(), 0);
    for (std::size_t p = 1; p < m.params.size(); ++p) offsets[p] = offsets[p - 1] + m.params[p - 1].value.size();

    std::vector<std::size_t> pick(index.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    if (n_params < pick.size()) {
        Rng rng(derive_seed(seed, {0x67636bULL}));
        rng.shuffle(std::span<std::size_t>(pick));
        pick.resize(n_params);
    }
    double worst = 0.0;
    for (auto k : pick) {
        const auto [p, i] = index[k];
        double& w = m.params[p].value[i];
        const double saved = w;
        w = saved + step;
        const double up = sample_loss(m, ex);
        w = saved - step;
        const double down = sample_loss(m, ex);
        w = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[offsets[p] + i];
        worst = std::max(worst, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Save / load: versioned text, weights as hexadecimal floats.

inline constexpr std::string_view kNetFormatTag = "hrgroup-net";
inline constexpr int kNetFormatVersion = 1;

inline ArchitectureId parse_architecture(std::string_view s) {
    for (auto a : {ArchitectureId::Baseline, ArchitectureId::Model1, ArchitectureId::Model2, ArchitectureId::Model3})
        if (io::lower(s) == io::lower(architecture_name(a))) return a;
    fail(ErrorCode::InvalidConfig, "unknown architecture '" + std::string(s) + "'");
}

inline std::string save_net(const NetModel& m) {
    std::ostringstream out;
    const auto& c = m.cfg;
    out << kNetFormatTag << ' ' << kNetFormatVersion << '\n';
    out << "arch " << architecture_name(m.arch) << '\n';
    out << "config " << c.window_size << ' ' << c.hc_dim << ' ' << c.out_channels << ' ' << c.kernel << ' '
        << c.pool << ' ' << io::hexfloat(c.dropout_p) << ' ' << c.fc1_out << ' ' << c.hc_fc_out << ' '
        << c.n_classes << ' ' << c.seed << ' ' << io::hexfloat(c.learning_rate) << ' ' << io::hexfloat(c.beta1)
        << ' ' << io::hexfloat(c.beta2) << ' ' << io::hexfloat(c.adam_eps) << ' ' << c.epochs << ' '
        << c.batch_size << '\n';
    out << "params " << m.params.size() << '\n';
    for (const auto& p : m.params) {
        out << p.name << ' ' << p.rows << ' ' << p.cols << '\n';
        for (std::size_t i = 0; i < p.value.size(); ++i) out << (i ? " " : "") << io::hexfloat(p.value[i]);
        out << '\n';
    }
    return out.str();
}

inline NetModel load_net(std::string_view text) {
    std::istringstream in{std::string(text)};
    auto word = [&]() {
        std::string w;
        if (!(in >> w)) fail(ErrorCode::MalformedInput, "net model: truncated");
        return w;
    };
    auto hex = [&]() { return io::parse_hexfloat(word()); };
    if (word() != kNetFormatTag) fail(ErrorCode::MalformedInput, "net model: bad tag");
    if (word() != std::to_string(kNetFormatVersion)) fail(ErrorCode::MalformedInput, "net model: unsupported version");
    if (word() != "arch") fail(ErrorCode::MalformedInput, "net model: expected arch");
    const auto arch = parse_architecture(word());
    if (word() != "config") fail(ErrorCode::MalformedInput, "net model: expected config");
    NetConfig c;
    in >> c.window_size >> c.hc_dim >> c.out_channels >> c.kernel >> c.pool;
    c.dropout_p = hex();
    in >> c.fc1_out >> c.hc_fc_out >> c.n_classes >> c.seed;
    c.learning_rate = hex();
    c.beta1 = hex();
    c.beta2 = hex();
    c.adam_eps = hex();
    in >> c.epochs >> c.batch_size;
    if (!in) fail(ErrorCode::MalformedInput, "net model: bad config line");
    NetModel m = build(arch, c);
    if (word() != "params") fail(ErrorCode::MalformedInput, "net model: expected params");
    std::size_t n = 0;
    in >> n;
    if (n != m.params.size()) fail(ErrorCode::MalformedInput, "net model: parameter tensor count");
    for (auto& p : m.params) {
        std::size_t rows = 0, cols = 0;
        if (word() != p.name) fail(ErrorCode::MalformedInput, "net model: expected " + p.name);
        in >> rows >> cols;
        if (rows != p.rows || cols != p.cols) fail(ErrorCode::MalformedInput, "net model: shape of " + p.name);
        for (auto& v : p.value) v = hex();
    }
    return m;
}

} // namespace hrgroup

#endif
