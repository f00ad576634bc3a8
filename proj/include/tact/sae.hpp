#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tact/checkpoint.hpp"
#include "tact/forecaster.hpp"
#include "tact/optim.hpp"
#include "tact/rng.hpp"
#include "tact/tape.hpp"
#include "tact/tensor.hpp"

namespace tact {

// ---------------------------------------------------------------------------
// Activation standardization. Statistics are per feature over the flattened
// (samples * positions) rows; sigma is the population deviation.
// ---------------------------------------------------------------------------

struct NormStats {
    Tensor mu;    // (d)
    Tensor sigma; // (d)
    float epsilon = 1e-6f;

    std::vector<float> scale() const { // 1 / (sigma + eps)
        std::vector<float> s(sigma.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = 1.0f / (sigma.data[i] + epsilon);
        return s;
    }
    std::vector<float> unscale() const { // sigma + eps
        std::vector<float> s(sigma.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = sigma.data[i] + epsilon;
        return s;
    }
    std::vector<float> mean_vec() const { return mu.data; }
    std::vector<float> neg_mean_vec() const {
        std::vector<float> s(mu.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = -mu.data[i];
        return s;
    }
};

inline NormStats fit_norm(const Tensor& rows, float epsilon = 1e-6f) {
    check(rows.rank() == 2 && rows.rows() > 0, "fit_norm: need a non-empty row matrix");
    const std::size_t n = rows.rows(), d = rows.cols();
    NormStats st;
    st.epsilon = epsilon;
    st.mu = Tensor({d});
    st.sigma = Tensor({d});
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += rows.at(i, j);
        const double m = s / double(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = rows.at(i, j) - m;
            v += e * e;
        }
        st.mu.data[j] = float(m);
        st.sigma.data[j] = float(std::sqrt(v / double(n)));
    }
    return st;
}

inline Tensor normalize(const Tensor& rows, const NormStats& st) {
    check(rows.rank() == 2 && rows.cols() == st.mu.size(), "normalize: shape mismatch");
    Tensor out = rows;
    const std::size_t n = rows.rows(), d = rows.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = (out.at(i, j) - st.mu.data[j]) / (st.sigma.data[j] + st.epsilon);
    return out;
}

inline Tensor denormalize(const Tensor& rows, const NormStats& st) {
    check(rows.rank() == 2 && rows.cols() == st.mu.size(), "denormalize: shape mismatch");
    Tensor out = rows;
    const std::size_t n = rows.rows(), d = rows.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = out.at(i, j) * (st.sigma.data[j] + st.epsilon) + st.mu.data[j];
    return out;
}

// ---------------------------------------------------------------------------
// TopK sparse autoencoder
// ---------------------------------------------------------------------------

struct SaeConfig {
    std::size_t input_dim = 64; // d
    std::size_t concepts = 1024; // n
    std::size_t k = 16;
    float lambda_aux = 1.0f / 32.0f;
    std::size_t k_aux = 32; // 2k
    std::size_t dead_horizon = 200; // batches without TopK membership
    float gamma = 0.0f; // optional downstream-consistency weight
    float epsilon = 1e-6f;

    void validate() const {
        check(concepts > input_dim, "SaeConfig: concept count must exceed the input width");
        check(k >= 1 && k <= concepts, "SaeConfig: bad k");
        check(k_aux >= 1 && k_aux <= concepts, "SaeConfig: bad k_aux");
        check(epsilon > 0.0f, "SaeConfig: epsilon must be positive");
    }
};

struct SaeModel {
    SaeConfig cfg;
    Tensor w_enc; // (n x d)
    Tensor b_enc; // (n)
    Tensor w_dec; // (d x n), columns kept at unit norm
    Tensor b_dec; // (d)
    NormStats norm;

    static SaeModel init(const SaeConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        SaeModel m;
        m.cfg = cfg;
        Rng rng = Rng(seed).split(0x7361);
        m.w_dec = Tensor::randn({cfg.input_dim, cfg.concepts}, rng);
        m.normalize_decoder_columns();
        // tied transpose init for the encoder
        m.w_enc = Tensor({cfg.concepts, cfg.input_dim});
        for (std::size_t i = 0; i < cfg.input_dim; ++i)
            for (std::size_t j = 0; j < cfg.concepts; ++j) m.w_enc.at(j, i) = m.w_dec.at(i, j);
        m.b_enc = Tensor({cfg.concepts});
        m.b_dec = Tensor({cfg.input_dim});
        m.norm.mu = Tensor({cfg.input_dim});
        m.norm.sigma = Tensor::full({cfg.input_dim}, 1.0f);
        m.norm.epsilon = cfg.epsilon;
        return m;
    }

    void normalize_decoder_columns() {
        const std::size_t d = w_dec.rows(), n = w_dec.cols();
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += double(w_dec.at(i, j)) * double(w_dec.at(i, j));
            const float inv = 1.0f / float(std::sqrt(std::max(s, 1e-24)));
            for (std::size_t i = 0; i < d; ++i) w_dec.at(i, j) *= inv;
        }
    }

    // pre-activations W_enc (h - b_dec) + b_enc for a batch of normalized rows
    Tensor preactivations(const Tensor& rows) const {
        check(rows.rank() == 2 && rows.cols() == cfg.input_dim, "encode: dimension mismatch");
        Tensor centered = rows;
        for (std::size_t i = 0; i < rows.rows(); ++i)
            for (std::size_t j = 0; j < cfg.input_dim; ++j) centered.at(i, j) -= b_dec.data[j];
        Tensor pre({rows.rows(), cfg.concepts});
        detail::mm_nt(centered.data.data(), w_enc.data.data(), pre.data.data(), rows.rows(),
                      cfg.input_dim, cfg.concepts, false);
        for (std::size_t i = 0; i < pre.rows(); ++i)
            for (std::size_t j = 0; j < cfg.concepts; ++j) pre.at(i, j) += b_enc.data[j];
        return pre;
    }

    // z = TopK(ReLU(pre), k) per row; rows must already be normalized
    Tensor encode(const Tensor& rows) const {
        Tensor pre = preactivations(rows);
        Tensor z({pre.rows(), cfg.concepts});
        for (std::size_t i = 0; i < pre.rows(); ++i) {
            float* prow = &pre.at(i, 0);
            for (std::size_t j = 0; j < cfg.concepts; ++j)
                if (prow[j] < 0.0f) prow[j] = 0.0f;
            for (auto j : detail::topk_indices(prow, cfg.concepts, cfg.k)) z.at(i, j) = prow[j];
        }
        return z;
    }

    // hhat = W_dec z + b_dec per row; exploits the sparsity of z
    Tensor decode(const Tensor& z) const {
        check(z.rank() == 2 && z.cols() == cfg.concepts, "decode: dimension mismatch");
        Tensor out({z.rows(), cfg.input_dim});
        for (std::size_t i = 0; i < z.rows(); ++i) {
            float* orow = &out.at(i, 0);
            for (std::size_t j = 0; j < cfg.input_dim; ++j) orow[j] = b_dec.data[j];
            for (std::size_t c = 0; c < cfg.concepts; ++c) {
                const float zv = z.at(i, c);
                if (zv == 0.0f) continue;
                for (std::size_t j = 0; j < cfg.input_dim; ++j) orow[j] += zv * w_dec.at(j, c);
            }
        }
        return out;
    }

    // --- persistence ---

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.meta["kind"] = "sae";
        ck.meta["input_dim"] = std::to_string(cfg.input_dim);
        ck.meta["concepts"] = std::to_string(cfg.concepts);
        ck.meta["k"] = std::to_string(cfg.k);
        ck.meta["k_aux"] = std::to_string(cfg.k_aux);
        ck.meta["lambda_aux"] = std::to_string(cfg.lambda_aux);
        ck.meta["dead_horizon"] = std::to_string(cfg.dead_horizon);
        ck.meta["gamma"] = std::to_string(cfg.gamma);
        ck.meta["epsilon"] = std::to_string(cfg.epsilon);
        ck.tensors.emplace_back("w_enc", w_enc);
        ck.tensors.emplace_back("b_enc", b_enc);
        ck.tensors.emplace_back("w_dec", w_dec);
        ck.tensors.emplace_back("b_dec", b_dec);
        ck.tensors.emplace_back("norm_mu", norm.mu);
        ck.tensors.emplace_back("norm_sigma", norm.sigma);
        return ck;
    }

    static SaeModel from_checkpoint(const Checkpoint& ck) {
        check(ck.meta_at("kind") == "sae", "checkpoint is not an SAE");
        SaeConfig cfg;
        cfg.input_dim = std::size_t(ck.meta_num("input_dim"));
        cfg.concepts = std::size_t(ck.meta_num("concepts"));
        cfg.k = std::size_t(ck.meta_num("k"));
        cfg.k_aux = std::size_t(ck.meta_num("k_aux"));
        cfg.lambda_aux = float(ck.meta_num("lambda_aux"));
        cfg.dead_horizon = std::size_t(ck.meta_num("dead_horizon"));
        cfg.gamma = float(ck.meta_num("gamma"));
        cfg.epsilon = float(ck.meta_num("epsilon"));
        SaeModel m = init(cfg, 0);
        m.w_enc = ck.tensor("w_enc");
        m.b_enc = ck.tensor("b_enc");
        m.w_dec = ck.tensor("w_dec");
        m.b_dec = ck.tensor("b_dec");
        m.norm.mu = ck.tensor("norm_mu");
        m.norm.sigma = ck.tensor("norm_sigma");
        m.norm.epsilon = cfg.epsilon;
        return m;
    }
};

// ---------------------------------------------------------------------------
// Dead-concept tracking: a concept is dead after dead_horizon consecutive
// batches without TopK membership; any firing resets its counter.
// ---------------------------------------------------------------------------

struct DeadTracker {
    std::vector<std::int64_t> since_fire;
    std::size_t horizon;

    explicit DeadTracker(std::size_t concepts = 0, std::size_t horizon_batches = 200)
        : since_fire(concepts, 0), horizon(horizon_batches) {}

    void observe(const Tensor& z) {
        check(z.rank() == 2 && z.cols() == since_fire.size(), "DeadTracker: width mismatch");
        for (std::size_t c = 0; c < since_fire.size(); ++c) {
            bool fired = false;
            for (std::size_t i = 0; i < z.rows() && !fired; ++i) fired = z.at(i, c) > 0.0f;
            since_fire[c] = fired ? 0 : since_fire[c] + 1;
        }
    }

    std::vector<char> dead_mask() const {
        std::vector<char> m(since_fire.size(), 0);
        for (std::size_t c = 0; c < m.size(); ++c) m[c] = since_fire[c] >= std::int64_t(horizon);
        return m;
    }

    double dead_fraction() const {
        std::size_t n = 0;
        for (auto s : since_fire) n += (s >= std::int64_t(horizon));
        return since_fire.empty() ? 0.0 : double(n) / double(since_fire.size());
    }
};

// Dead-concept reconstruction penalty on one residual vector:
//   || residual - W_dec z_aux ||^2,  z_aux = TopK(ReLU(pre) restricted to dead, k_aux)
// Conventions: an empty dead set contributes zero, and so does a zero
// residual (nothing left to reconstruct).
inline float aux_loss(const std::vector<float>& residual, const std::vector<char>& dead,
                      const SaeModel& model, std::size_t k_aux, const std::vector<float>& preact) {
    check(residual.size() == model.cfg.input_dim, "aux_loss: residual width mismatch");
    check(dead.size() == model.cfg.concepts && preact.size() == model.cfg.concepts,
          "aux_loss: concept width mismatch");
    bool any_dead = false;
    for (char c : dead) any_dead |= (c != 0);
    if (!any_dead) return 0.0f;
    bool any_residual = false;
    for (float r : residual) any_residual |= (r != 0.0f);
    if (!any_residual) return 0.0f;

    std::vector<float> masked(model.cfg.concepts, 0.0f);
    for (std::size_t c = 0; c < masked.size(); ++c)
        if (dead[c] && preact[c] > 0.0f) masked[c] = preact[c];
    double err = 0.0;
    std::vector<float> recon(model.cfg.input_dim, 0.0f);
    for (auto c : detail::topk_indices(masked.data(), masked.size(), k_aux)) {
        if (masked[c] == 0.0f) continue;
        for (std::size_t j = 0; j < model.cfg.input_dim; ++j) recon[j] += masked[c] * model.w_dec.at(j, c);
    }
    for (std::size_t j = 0; j < model.cfg.input_dim; ++j) {
        const double e = double(residual[j]) - double(recon[j]);
        err += e * e;
    }
    return float(err);
}

// Held-out quality metric: per-element MSE in normalized space.
inline double reconstruction_mse(const SaeModel& model, const Tensor& raw_rows) {
    const Tensor rows = normalize(raw_rows, model.norm);
    const Tensor z = model.encode(rows);
    const Tensor rec = model.decode(z);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double e = double(rec.data[i]) - double(rows.data[i]);
        acc += e * e;
    }
    return acc / double(rows.size());
}

struct SaeTrainReport {
    std::vector<float> loss_curve;       // recon component per step
    std::vector<double> dead_curve;      // dead fraction per 50 batches
    double final_dead_fraction = 0.0;
    double heldout_mse = 0.0; // filled by callers that have held-out rows
    std::vector<SaeModel> snapshots;     // quarter-mark checkpoints
};

// SAE training over an activation dump. The forecaster is only needed when
// gamma > 0 (downstream-consistency term); batches are then whole fields so
// the resumed forward pass sees every position.
inline SaeTrainReport train_sae(SaeModel& model, const ActivationDump& dump, std::size_t steps, float lr,
                                std::size_t batch, std::uint64_t seed,
                                const ForecastModel* forecaster = nullptr) {
    model.cfg.validate();
    check(dump.count() > 0 && dump.dim() == model.cfg.input_dim, "train_sae: dump shape mismatch");
    if (model.cfg.gamma > 0.0f)
        check(forecaster != nullptr, "train_sae: gamma > 0 requires the forecaster");

    SaeTrainReport rep;
    if (steps == 0) return rep;

    model.norm = fit_norm(dump.rows, model.cfg.epsilon);
    const Tensor all = normalize(dump.rows, model.norm);
    const std::size_t rows = all.rows(), d = model.cfg.input_dim, n = model.cfg.concepts;

    Rng rng = Rng(seed).split(0x7374);
    Rng field_rng = Rng(seed).split(0x676d); // gamma draws, separate stream so
                                             // gamma on/off shares batch order
    DeadTracker tracker(n, model.cfg.dead_horizon);
    std::vector<ParamRef> params{
        {"w_enc", &model.w_enc}, {"b_enc", &model.b_enc}, {"w_dec", &model.w_dec}, {"b_dec", &model.b_dec}};
    AdamW opt({.lr = lr});

    // gamma term bookkeeping: rows of one field are contiguous in the dump
    std::size_t positions = 0;
    ForecastModel::Lifted fc_params;
    if (model.cfg.gamma > 0.0f) positions = forecaster->cfg.layout().positions();

    for (std::size_t step = 0; step < steps; ++step) {
        Tensor hb({batch, d});
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t r = std::size_t(rng.below(rows));
            std::copy_n(all.data.data() + r * d, d, hb.data.data() + b * d);
        }

        Tape tp(true);
        Var w_enc = tp.leaf(model.w_enc), b_enc = tp.leaf(model.b_enc);
        Var w_dec = tp.leaf(model.w_dec), b_dec = tp.leaf(model.b_dec);
        Var h = tp.leaf(hb);
        Var pre = tp.add_rowvec(tp.matmul_nt(tp.sub_rowvec(h, b_dec), w_enc), b_enc);
        Var act = tp.relu(pre);
        Var z = tp.topk_mask(act, model.cfg.k);
        Var rec = tp.add_rowvec(tp.matmul_nt(z, w_dec), b_dec);
        Var diff = tp.sub(rec, h);
        Var loss = tp.scale(tp.sum(tp.square(diff)), 1.0f / float(batch));
        const float recon_loss = tp.val(loss).data[0];
        check(std::isfinite(recon_loss), "train_sae: loss diverged at step " + std::to_string(step));

        // auxiliary reconstruction of the (detached) residual by dead concepts
        const auto dead = tracker.dead_mask();
        bool any_dead = false;
        for (char c : dead) any_dead |= (c != 0);
        if (model.cfg.lambda_aux > 0.0f && any_dead) {
            std::vector<float> mask(n, 0.0f);
            for (std::size_t c = 0; c < n; ++c) mask[c] = dead[c] ? 1.0f : 0.0f;
            Tensor resid = tp.val(diff); // detached copy: aux trains dead latents only
            for (auto& v : resid.data) v = -v; // h - rec
            Var zaux = tp.topk_mask(tp.mul_colconst(tp.relu(pre), mask), model.cfg.k_aux);
            Var raux = tp.matmul_nt(zaux, w_dec);
            Var aux = tp.scale(tp.sum(tp.square(tp.sub(raux, tp.leaf(resid)))), 1.0f / float(batch));
            loss = tp.add(loss, tp.scale(aux, model.cfg.lambda_aux));
        }

        // optional downstream-consistency term over a couple of whole fields
        if (model.cfg.gamma > 0.0f) {
            const std::size_t nfields = rows / positions;
            const auto fc = forecaster->lift(tp);
            for (int rep_field = 0; rep_field < 2; ++rep_field) {
                const std::size_t f = std::size_t(field_rng.below(nfields));
                Tensor hf_norm({positions, d});
                std::copy_n(all.data.data() + f * positions * d, positions * d, hf_norm.data.data());
                Tensor hf_raw({positions, d});
                std::copy_n(dump.rows.data.data() + f * positions * d, positions * d, hf_raw.data.data());

                Var hfv = tp.leaf(hf_norm);
                Var zf = tp.topk_mask(
                    tp.relu(tp.add_rowvec(tp.matmul_nt(tp.sub_rowvec(hfv, b_dec), w_enc), b_enc)),
                    model.cfg.k);
                Var recf = tp.add_rowvec(tp.matmul_nt(zf, w_dec), b_dec);
                Var rec_raw =
                    tp.add_colconst(tp.mul_colconst(recf, model.norm.unscale()), model.norm.mean_vec());
                Var down_rec = forecaster->resume_graph(tp, rec_raw, forecaster->cfg.tap_layer, fc);
                Tape probe(false);
                const Tensor down_ref = probe.val(forecaster->resume_graph(
                    probe, probe.leaf(hf_raw), forecaster->cfg.tap_layer, forecaster->lift(probe)));
                Var gap = tp.sub(down_rec, tp.leaf(down_ref));
                loss = tp.add(loss,
                              tp.scale(tp.sum(tp.square(gap)), model.cfg.gamma / float(down_ref.size())));
            }
        }

        tp.backward(loss);
        std::vector<const Tensor*> grads{&tp.grad(w_enc), &tp.grad(b_enc), &tp.grad(w_dec), &tp.grad(b_dec)};
        opt.step(params, grads);
        model.normalize_decoder_columns();

        tracker.observe(tp.val(z));
        rep.loss_curve.push_back(recon_loss / float(d)); // per-element scale
        if ((step + 1) % 50 == 0) rep.dead_curve.push_back(tracker.dead_fraction());
        if ((step + 1) % std::max<std::size_t>(steps / 4, 1) == 0) rep.snapshots.push_back(model);
    }
    rep.final_dead_fraction = tracker.dead_fraction();
    return rep;
}

// ---------------------------------------------------------------------------
// Downstream-consistency report: distribution of |F_{l+1:L}(h) - F_{l+1:L}(hhat)|
// over fields of an evaluation range.
// ---------------------------------------------------------------------------

struct ConsistencyReport {
    double mean = 0.0;
    double median = 0.0;
    double p90 = 0.0;
    std::size_t fields = 0;
};

inline ConsistencyReport consistency_report(const ForecastModel& fm, const SaeModel& sae, const Dataset& ds,
                                            std::size_t lo, std::size_t hi) {
    check(lo < hi && hi <= ds.fields.size(), "consistency_report: bad range");
    std::vector<double> divs;
    divs.reserve(hi - lo);
    for (std::size_t t = lo; t < hi; ++t) {
        const Tensor h = fm.hidden(ds.fields[t], fm.cfg.tap_layer);
        const Tensor rec = denormalize(sae.decode(sae.encode(normalize(h, sae.norm))), sae.norm);
        const GridField a = fm.forward_from_hidden(h, ds.fields[t].t);
        const GridField b = fm.forward_from_hidden(rec, ds.fields[t].t);
        double acc = 0.0;
        for (std::size_t i = 0; i < a.values.size(); ++i)
            acc += std::fabs(double(a.values.data[i]) - double(b.values.data[i]));
        divs.push_back(acc / double(a.values.size()));
    }
    ConsistencyReport rep;
    rep.fields = divs.size();
    for (double v : divs) rep.mean += v;
    rep.mean /= double(divs.size());
    std::sort(divs.begin(), divs.end());
    rep.median = divs[divs.size() / 2];
    rep.p90 = divs[std::min(divs.size() - 1, std::size_t(0.9 * double(divs.size())))];
    return rep;
}

// ---------------------------------------------------------------------------
// Sparse concept dump: per (sample, position) row, the nonzero (id, value)
// pairs of z. Binary format:
//   magic "TACZ" | u16 version | u64 concepts | u64 rows
//   | rows x (u32 sample, u32 position, u16 count, count x (u32 id, f32 value))
// ---------------------------------------------------------------------------

struct ConceptDump {
    std::size_t concepts = 0;
    std::vector<std::uint32_t> sample;
    std::vector<std::uint32_t> position;
    std::vector<std::vector<std::pair<std::uint32_t, float>>> entries;

    static constexpr std::uint16_t kVersion = 1;

    std::size_t count() const { return entries.size(); }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        check(bool(os), "concept dump: cannot open " + path);
        io::write_raw(os, "TACZ", 4);
        io::write_pod<std::uint16_t>(os, kVersion);
        io::write_pod<std::uint64_t>(os, concepts);
        io::write_pod<std::uint64_t>(os, entries.size());
        for (std::size_t r = 0; r < entries.size(); ++r) {
            io::write_pod<std::uint32_t>(os, sample[r]);
            io::write_pod<std::uint32_t>(os, position[r]);
            io::write_pod<std::uint16_t>(os, std::uint16_t(entries[r].size()));
            for (const auto& [id, v] : entries[r]) {
                io::write_pod<std::uint32_t>(os, id);
                io::write_pod<float>(os, v);
            }
        }
    }

    static ConceptDump load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        check(bool(is), "concept dump: cannot open " + path);
        char magic[4];
        io::read_raw(is, magic, 4);
        check(std::memcmp(magic, "TACZ", 4) == 0, "concept dump: bad magic");
        check(io::read_pod<std::uint16_t>(is) == kVersion, "concept dump: unsupported version");
        ConceptDump d;
        d.concepts = std::size_t(io::read_pod<std::uint64_t>(is));
        const auto rows = io::read_pod<std::uint64_t>(is);
        d.sample.reserve(rows);
        d.position.reserve(rows);
        d.entries.reserve(rows);
        for (std::uint64_t r = 0; r < rows; ++r) {
            d.sample.push_back(io::read_pod<std::uint32_t>(is));
            d.position.push_back(io::read_pod<std::uint32_t>(is));
            const auto cnt = io::read_pod<std::uint16_t>(is);
            std::vector<std::pair<std::uint32_t, float>> row(cnt);
            for (auto& [id, v] : row) {
                id = io::read_pod<std::uint32_t>(is);
                v = io::read_pod<float>(is);
            }
            d.entries.push_back(std::move(row));
        }
        return d;
    }
};

inline ConceptDump encode_dump(const SaeModel& sae, const ActivationDump& acts) {
    ConceptDump d;
    d.concepts = sae.cfg.concepts;
    d.sample = acts.sample;
    d.position = acts.position;
    d.entries.reserve(acts.count());
    const std::size_t chunk = 512;
    for (std::size_t lo = 0; lo < acts.count(); lo += chunk) {
        const std::size_t hi = std::min(acts.count(), lo + chunk);
        Tensor part({hi - lo, acts.dim()});
        std::copy_n(acts.rows.data.data() + lo * acts.dim(), part.size(), part.data.data());
        const Tensor z = sae.encode(normalize(part, sae.norm));
        for (std::size_t r = 0; r < z.rows(); ++r) {
            std::vector<std::pair<std::uint32_t, float>> row;
            row.reserve(sae.cfg.k);
            for (std::size_t c = 0; c < z.cols(); ++c)
                if (z.at(r, c) != 0.0f) row.emplace_back(std::uint32_t(c), z.at(r, c));
            d.entries.push_back(std::move(row));
        }
    }
    return d;
}

} // namespace tact
