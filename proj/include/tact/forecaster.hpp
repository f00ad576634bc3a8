#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tact/checkpoint.hpp"
#include "tact/gridfield.hpp"
#include "tact/optim.hpp"
#include "tact/rng.hpp"
#include "tact/synthgrid.hpp"
#include "tact/tape.hpp"

namespace tact {

// Per-grid-row loss weights: cosine of a latitude mapped over [-80, +80]
// degrees, renormalized to mean 1. Symmetric about the middle row and
// non-increasing toward the poles.
inline std::vector<float> latitude_weights(std::size_t grid_rows) {
    check(grid_rows >= 1, "latitude_weights: need at least one row");
    std::vector<double> raw(grid_rows);
    double total = 0.0;
    for (std::size_t i = 0; i < grid_rows; ++i) {
        const double lat = grid_rows == 1 ? 0.0 : -80.0 + 160.0 * double(i) / double(grid_rows - 1);
        raw[i] = std::cos(lat * 3.14159265358979323846 / 180.0);
        total += raw[i];
    }
    std::vector<float> w(grid_rows);
    for (std::size_t i = 0; i < grid_rows; ++i) w[i] = float(raw[i] * double(grid_rows) / total);
    return w;
}

// (1/HW) sum_ij w_i |pred - truth|, averaged over channels.
inline float weighted_loss(const GridField& pred, const GridField& truth, const std::vector<float>& w) {
    check(pred.values.same_shape(truth.values), "weighted_loss: shape mismatch");
    check(w.size() == pred.height(), "weighted_loss: weight count != grid rows");
    double acc = 0.0;
    const std::size_t h = pred.height(), ww = pred.width(), c = pred.channels();
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < ww; ++j)
            for (std::size_t ch = 0; ch < c; ++ch)
                acc += double(w[i]) * std::fabs(double(pred.at(i, j, ch)) - double(truth.at(i, j, ch)));
    return float(acc / double(h * ww * c));
}

struct ForecasterConfig {
    std::size_t height = 32, width = 32, channels = 4;
    std::size_t patch = 4;
    std::size_t dim = 64;      // hidden width d
    std::size_t layers = 6;    // residual blocks L
    std::size_t tap_layer = 4; // intervention layer l, 1 <= l < L
    std::size_t ffn_dim = 128;

    std::size_t patch_dim() const { return patch * patch * channels; }
    PatchLayout layout() const { return PatchLayout(height, width, patch); }

    void validate() const {
        check(tap_layer >= 1 && tap_layer < layers, "ForecasterConfig: tap layer out of range");
        check(dim > 0 && ffn_dim > 0, "ForecasterConfig: zero width");
        (void)layout();
    }
};

// Patch-embedding forecaster with L residual blocks. Each block mixes
// positions along the two patch-grid axes with parameter-shared matrices
// (global receptive field at linear cost) and applies a per-position
// feed-forward. The model exposes its post-block-l hidden states and can
// resume the forward pass from a modified hidden matrix; forward() is
// literally the composition of those halves, so the split identity is exact.
struct ForecastModel {
    ForecasterConfig cfg;

    struct Block {
        Tensor row_mix; // (PR x PR)
        Tensor col_mix; // (PC x PC)
        Tensor w1, b1;  // (d x ffn), (ffn)
        Tensor w2, b2;  // (ffn x d), (d)
    };

    Tensor embed_w, embed_b; // (p^2 C x d), (d)
    std::vector<Block> blocks;
    Tensor head_w, head_b; // (d x p^2 C), (p^2 C)

    static ForecastModel init(const ForecasterConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        ForecastModel m;
        m.cfg = cfg;
        Rng rng = Rng(seed).split(0x666d);
        const std::size_t pd = cfg.patch_dim(), d = cfg.dim;
        const auto layout = cfg.layout();
        m.embed_w = Tensor::randn({pd, d}, rng, 1.0f / std::sqrt(float(pd)));
        m.embed_b = Tensor({d});
        for (std::size_t b = 0; b < cfg.layers; ++b) {
            Block blk;
            blk.row_mix = Tensor::randn({layout.patch_rows(), layout.patch_rows()}, rng, 0.05f);
            blk.col_mix = Tensor::randn({layout.patch_cols(), layout.patch_cols()}, rng, 0.05f);
            blk.w1 = Tensor::randn({d, cfg.ffn_dim}, rng, 1.0f / std::sqrt(float(d)));
            blk.b1 = Tensor({cfg.ffn_dim});
            blk.w2 = Tensor::randn({cfg.ffn_dim, d}, rng, 0.5f / std::sqrt(float(cfg.ffn_dim)));
            blk.b2 = Tensor({d});
            m.blocks.push_back(std::move(blk));
        }
        m.head_w = Tensor::randn({d, pd}, rng, 1.0f / std::sqrt(float(d)));
        m.head_b = Tensor({pd});
        return m;
    }

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> ps{{"embed_w", &embed_w}, {"embed_b", &embed_b}};
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string pre = "block" + std::to_string(b) + ".";
            ps.push_back({pre + "row_mix", &blocks[b].row_mix});
            ps.push_back({pre + "col_mix", &blocks[b].col_mix});
            ps.push_back({pre + "w1", &blocks[b].w1});
            ps.push_back({pre + "b1", &blocks[b].b1});
            ps.push_back({pre + "w2", &blocks[b].w2});
            ps.push_back({pre + "b2", &blocks[b].b2});
        }
        ps.push_back({"head_w", &head_w});
        ps.push_back({"head_b", &head_b});
        return ps;
    }

    // --- graph builders -----------------------------------------------------
    // All forward paths (training, inference, interventions) go through the
    // same builders; the parameter Vars are lifted once per tape.

    struct Lifted {
        std::vector<Var> v;
        Var embed_w() const { return v[0]; }
        Var embed_b() const { return v[1]; }
        Var blk(std::size_t b, std::size_t slot) const { return v[2 + b * 6 + slot]; }
        Var head_w() const { return v[v.size() - 2]; }
        Var head_b() const { return v[v.size() - 1]; }
    };

    Lifted lift(Tape& tp) const {
        Lifted out;
        auto self = const_cast<ForecastModel&>(*this);
        for (const auto& p : self.parameters()) out.v.push_back(tp.leaf(*p.tensor));
        return out;
    }

    Var block_graph(Tape& tp, Var h, std::size_t bi, const Lifted& ps) const {
        const auto layout = cfg.layout();
        const std::size_t pr = layout.patch_rows(), pc = layout.patch_cols(), d = cfg.dim;
        // positions are laid out row-major (patch row major): mixing across
        // patch rows is a plain matmul on the (PR x PC*d) view; mixing across
        // patch columns is a grouped left-multiply.
        Var rowm = tp.reshape(tp.matmul(ps.blk(bi, 0), tp.reshape(h, {pr, pc * d})), {pr * pc, d});
        Var colm = tp.group_matmul_left(ps.blk(bi, 1), h, pr);
        h = tp.add(h, tp.add(rowm, colm));
        Var f = tp.tanh_act(tp.add_rowvec(tp.matmul(h, ps.blk(bi, 2)), ps.blk(bi, 3)));
        return tp.add(h, tp.add_rowvec(tp.matmul(f, ps.blk(bi, 4)), ps.blk(bi, 5)));
    }

    // F_{1:l}: embedding plus blocks 0..l-1
    Var hidden_graph(Tape& tp, Var patches, std::size_t l, const Lifted& ps) const {
        check(l >= 1 && l < cfg.layers, "hidden: layer index out of range");
        Var h = tp.add_rowvec(tp.matmul(patches, ps.embed_w()), ps.embed_b());
        for (std::size_t b = 0; b < l; ++b) h = block_graph(tp, h, b, ps);
        return h;
    }

    // F_{l+1:L}: blocks l..L-1 plus the output head
    Var resume_graph(Tape& tp, Var h, std::size_t l, const Lifted& ps) const {
        check(l >= 1 && l < cfg.layers, "forward_from_hidden: layer index out of range");
        for (std::size_t b = l; b < cfg.layers; ++b) h = block_graph(tp, h, b, ps);
        return tp.add_rowvec(tp.matmul(h, ps.head_w()), ps.head_b());
    }

    // --- eager interfaces -----------------------------------------------------

    Tensor hidden(const GridField& x, std::size_t l) const {
        check_input(x);
        Tape tp(false);
        return tp.val(hidden_graph(tp, tp.leaf(patchify(x, cfg.patch)), l, lift(tp)));
    }

    GridField forward_from_hidden(const Tensor& h, std::int64_t t = 0) const {
        check(h.rank() == 2 && h.rows() == cfg.layout().positions() && h.cols() == cfg.dim,
              "forward_from_hidden: hidden matrix shape mismatch");
        Tape tp(false);
        const Tensor patches = tp.val(resume_graph(tp, tp.leaf(h), cfg.tap_layer, lift(tp)));
        return unpatchify(patches, cfg.layout(), cfg.channels, t + 1);
    }

    GridField forward(const GridField& x) const {
        return forward_from_hidden(hidden(x, cfg.tap_layer), x.t);
    }

    GridField rollout(const GridField& x, std::size_t applications) const {
        check(applications >= 1, "rollout: need at least one application");
        GridField cur = x;
        for (std::size_t a = 0; a < applications; ++a) cur = forward(cur);
        return cur;
    }

    void check_input(const GridField& x) const {
        check(x.height() == cfg.height && x.width() == cfg.width && x.channels() == cfg.channels,
              "forecaster: field does not match the model grid");
    }

    // --- persistence ----------------------------------------------------------

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.meta["kind"] = "forecaster";
        ck.meta["height"] = std::to_string(cfg.height);
        ck.meta["width"] = std::to_string(cfg.width);
        ck.meta["channels"] = std::to_string(cfg.channels);
        ck.meta["patch"] = std::to_string(cfg.patch);
        ck.meta["dim"] = std::to_string(cfg.dim);
        ck.meta["layers"] = std::to_string(cfg.layers);
        ck.meta["tap_layer"] = std::to_string(cfg.tap_layer);
        ck.meta["ffn_dim"] = std::to_string(cfg.ffn_dim);
        auto self = const_cast<ForecastModel&>(*this);
        for (const auto& p : self.parameters()) ck.tensors.emplace_back(p.name, *p.tensor);
        return ck;
    }

    static ForecastModel from_checkpoint(const Checkpoint& ck) {
        check(ck.meta_at("kind") == "forecaster", "checkpoint is not a forecaster");
        ForecasterConfig cfg;
        cfg.height = std::size_t(ck.meta_num("height"));
        cfg.width = std::size_t(ck.meta_num("width"));
        cfg.channels = std::size_t(ck.meta_num("channels"));
        cfg.patch = std::size_t(ck.meta_num("patch"));
        cfg.dim = std::size_t(ck.meta_num("dim"));
        cfg.layers = std::size_t(ck.meta_num("layers"));
        cfg.tap_layer = std::size_t(ck.meta_num("tap_layer"));
        cfg.ffn_dim = std::size_t(ck.meta_num("ffn_dim"));
        ForecastModel m = init(cfg, 0);
        for (const auto& p : m.parameters()) *p.tensor = ck.tensor(p.name);
        return m;
    }
};

// Element weights for the patch-major training loss. Entry (pos, f) carries
// the latitude weight of the grid row it came from, divided by H*W*C, so
// sum(weights * |pred - truth|) equals the field-space weighted loss.
inline Tensor patch_loss_weights(const ForecasterConfig& cfg) {
    const auto layout = cfg.layout();
    const auto w = latitude_weights(cfg.height);
    Tensor out({layout.positions(), cfg.patch_dim()});
    const float denom = float(cfg.height * cfg.width * cfg.channels);
    for (std::size_t i = 0; i < cfg.height; ++i)
        for (std::size_t j = 0; j < cfg.width; ++j) {
            const std::size_t pos = layout.position_of_cell(i, j);
            const std::size_t di = i % cfg.patch, dj = j % cfg.patch;
            for (std::size_t ch = 0; ch < cfg.channels; ++ch)
                out.at(pos, (di * cfg.patch + dj) * cfg.channels + ch) = w[i] / denom;
        }
    return out;
}

struct TrainReport {
    std::vector<float> loss_curve;
    float initial_loss = 0.0f;
    float final_loss = 0.0f;
    std::int64_t steps = 0;
};

// One-step supervised training on (X_t, X_{t+1}) pairs from the train split,
// latitude-weighted L1 objective, AdamW. Aborts with a diagnostic if the
// loss stops being finite.
inline TrainReport train_base(ForecastModel& model, const Dataset& ds, std::size_t steps, float lr,
                              std::size_t batch = 8, std::uint64_t seed = 1, float weight_decay = 1e-5f) {
    check(ds.train_end >= 2, "train_base: train split too small");
    model.cfg.validate();
    Rng rng = Rng(seed).split(0x7462);
    const Tensor wmat = patch_loss_weights(model.cfg);
    auto params = model.parameters();
    AdamW opt({.lr = lr, .weight_decay = weight_decay});

    // patchify once; pairs are sampled from the cached views
    std::vector<Tensor> patches(ds.train_end);
    for (std::size_t t = 0; t < ds.train_end; ++t) patches[t] = patchify(ds.fields[t], model.cfg.patch);

    TrainReport rep;
    rep.steps = std::int64_t(steps);
    std::vector<Tensor> grad_acc;
    for (const auto& p : params) grad_acc.emplace_back(p.tensor->shape);

    for (std::size_t step = 0; step < steps; ++step) {
        for (auto& g : grad_acc) std::fill(g.data.begin(), g.data.end(), 0.0f);
        double loss_acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t t = std::size_t(rng.below(ds.train_end - 1));
            Tape tp(true);
            const auto ps = model.lift(tp);
            Var h = model.hidden_graph(tp, tp.leaf(patches[t]), model.cfg.tap_layer, ps);
            Var pred = model.resume_graph(tp, h, model.cfg.tap_layer, ps);
            Var loss = tp.sum(tp.mul_const(tp.abs_val(tp.sub(pred, tp.leaf(patches[t + 1]))), wmat));
            const float lv = tp.val(loss).data[0];
            check(std::isfinite(lv), "train_base: loss diverged (not finite) at step " + std::to_string(step));
            loss_acc += lv;
            tp.backward(loss);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                const Tensor& g = tp.grad(ps.v[pi]);
                for (std::size_t i = 0; i < g.size(); ++i) grad_acc[pi].data[i] += g.data[i] / float(batch);
            }
        }
        std::vector<const Tensor*> gptrs;
        gptrs.reserve(grad_acc.size());
        for (const auto& g : grad_acc) gptrs.push_back(&g);
        opt.step(params, gptrs);
        rep.loss_curve.push_back(float(loss_acc / double(batch)));
    }
    if (!rep.loss_curve.empty()) {
        rep.initial_loss = rep.loss_curve.front();
        rep.final_loss = rep.loss_curve.back();
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Activation dumps: rows of (sample timestep, position, d-vector), stored as
// a checkpoint with an id tensor alongside the row matrix.
// ---------------------------------------------------------------------------

struct ActivationDump {
    std::vector<std::uint32_t> sample; // source timestep per row
    std::vector<std::uint32_t> position;
    Tensor rows; // (N x d)

    std::size_t count() const { return rows.rank() == 2 ? rows.rows() : 0; }
    std::size_t dim() const { return rows.rank() == 2 ? rows.cols() : 0; }

    void save(const std::string& path) const {
        Checkpoint ck;
        ck.meta["kind"] = "activations";
        Tensor ids({sample.size(), 2});
        for (std::size_t r = 0; r < sample.size(); ++r) {
            ids.at(r, 0) = float(sample[r]);
            ids.at(r, 1) = float(position[r]);
        }
        ck.tensors.emplace_back("ids", std::move(ids));
        ck.tensors.emplace_back("rows", rows);
        ck.save(path);
    }

    static ActivationDump load(const std::string& path) {
        const Checkpoint ck = Checkpoint::load(path);
        check(ck.meta_at("kind") == "activations", path + " is not an activation dump");
        ActivationDump d;
        const Tensor& ids = ck.tensor("ids");
        d.rows = ck.tensor("rows");
        d.sample.resize(ids.rows());
        d.position.resize(ids.rows());
        for (std::size_t r = 0; r < ids.rows(); ++r) {
            d.sample[r] = std::uint32_t(ids.at(r, 0));
            d.position[r] = std::uint32_t(ids.at(r, 1));
        }
        check(d.rows.rows() == d.sample.size(), "activation dump: id/row count mismatch");
        return d;
    }
};

// Layer-l hidden rows for every field in [lo, hi).
inline ActivationDump dump_activations(const ForecastModel& model, const Dataset& ds, std::size_t lo,
                                       std::size_t hi, std::size_t layer) {
    check(lo < hi && hi <= ds.fields.size(), "dump_activations: bad range");
    const std::size_t positions = model.cfg.layout().positions(), d = model.cfg.dim;
    ActivationDump dump;
    dump.rows = Tensor({(hi - lo) * positions, d});
    dump.sample.reserve(dump.rows.rows());
    dump.position.reserve(dump.rows.rows());
    for (std::size_t t = lo; t < hi; ++t) {
        const Tensor h = model.hidden(ds.fields[t], layer);
        std::copy_n(h.data.data(), h.size(), dump.rows.data.data() + (t - lo) * positions * d);
        for (std::size_t p = 0; p < positions; ++p) {
            dump.sample.push_back(std::uint32_t(t));
            dump.position.push_back(std::uint32_t(p));
        }
    }
    return dump;
}

} // namespace tact
