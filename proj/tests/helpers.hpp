#pragma once

// Shared test oracles, deliberately independent of the library's fast paths:
// naive loops, full sorts, and a double-precision re-implementation of the
// forward ops. The acceptance suite reuses the same oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "tact/rng.hpp"
#include "tact/tape.hpp"
#include "tact/tensor.hpp"

namespace oracle {

// Plain triple loop with double accumulation.
inline tact::Tensor naive_matmul(const tact::Tensor& a, const tact::Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    tact::Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += double(a.at(i, p)) * double(b.at(p, j));
            c.at(i, j) = float(s);
        }
    return c;
}

// Full stable sort by (value desc, index asc); returns the kept index set.
inline std::vector<std::size_t> sort_topk(const std::vector<float>& x, std::size_t k) {
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] > x[b];
        return a < b;
    });
    if (k < idx.size()) idx.resize(k);
    return idx;
}

// ---------------------------------------------------------------------------
// DTape: forward-only double-precision interpreter mirroring the Tape op set.
// Used as the evaluation engine for finite differences, where float32
// quantization would otherwise dominate the error budget.
// ---------------------------------------------------------------------------

struct DTensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    DTensor() = default;
    explicit DTensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (auto e : shape) n *= e;
        data.assign(n, 0.0);
    }
    static DTensor from(const tact::Tensor& t) {
        DTensor d(t.shape);
        for (std::size_t i = 0; i < t.size(); ++i) d.data[i] = t.data[i];
        return d;
    }
    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape[0]; }
    std::size_t cols() const { return shape[1]; }
};

class DTape {
public:
    using VarT = tact::Var;

    const DTensor& val(VarT v) const { return vals_[std::size_t(v.idx)]; }

    VarT leaf(DTensor t) { return push(std::move(t)); }
    VarT leaf(const tact::Tensor& t) { return push(DTensor::from(t)); }

    VarT add(VarT a, VarT b) { return zip(a, b, [](double x, double y) { return x + y; }); }
    VarT sub(VarT a, VarT b) { return zip(a, b, [](double x, double y) { return x - y; }); }
    VarT mul(VarT a, VarT b) { return zip(a, b, [](double x, double y) { return x * y; }); }

    VarT scale(VarT a, float c) { return map(a, [c](double x) { return x * double(c); }); }
    VarT relu(VarT a) { return map(a, [](double x) { return x > 0.0 ? x : 0.0; }); }
    VarT tanh_act(VarT a) { return map(a, [](double x) { return std::tanh(x); }); }
    VarT abs_val(VarT a) { return map(a, [](double x) { return std::fabs(x); }); }
    VarT square(VarT a) { return map(a, [](double x) { return x * x; }); }

    VarT mul_const(VarT a, const tact::Tensor& k) {
        DTensor out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= double(k.data[i]);
        return push(std::move(out));
    }

    VarT matmul(VarT a, VarT b) {
        const DTensor &ta = val(a), &tb = val(b);
        const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
        DTensor out({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += ta.data[i * k + p] * tb.data[p * n + j];
                out.data[i * n + j] = s;
            }
        return push(std::move(out));
    }

    VarT matmul_nt(VarT a, VarT b) {
        const DTensor &ta = val(a), &tb = val(b);
        const std::size_t m = ta.rows(), k = ta.cols(), n = tb.rows();
        DTensor out({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += ta.data[i * k + p] * tb.data[j * k + p];
                out.data[i * n + j] = s;
            }
        return push(std::move(out));
    }

    VarT group_matmul_left(VarT mv, VarT x, std::size_t groups) {
        const DTensor &tm = val(mv), &tx = val(x);
        const std::size_t m = tx.rows() / groups, d = tx.cols();
        DTensor out({tx.rows(), d});
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < m; ++p) s += tm.data[i * m + p] * tx.data[(g * m + p) * d + j];
                    out.data[(g * m + i) * d + j] = s;
                }
        return push(std::move(out));
    }

    VarT add_rowvec(VarT x, VarT b) { return rowop(x, b, +1.0); }
    VarT sub_rowvec(VarT x, VarT b) { return rowop(x, b, -1.0); }

    VarT mul_colconst(VarT x, const std::vector<float>& s) {
        DTensor out = val(x);
        const std::size_t r = out.rows(), c = out.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= double(s[j]);
        return push(std::move(out));
    }

    VarT add_colconst(VarT x, const std::vector<float>& s) {
        DTensor out = val(x);
        const std::size_t r = out.rows(), c = out.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += double(s[j]);
        return push(std::move(out));
    }

    VarT scale_rows_const(VarT x, const std::vector<float>& w) {
        DTensor out = val(x);
        const std::size_t r = out.rows(), c = out.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= double(w[i]);
        return push(std::move(out));
    }

    VarT reshape(VarT a, std::vector<std::size_t> s) {
        DTensor out = val(a);
        out.shape = std::move(s);
        return push(std::move(out));
    }

    VarT slice_rows(VarT a, std::vector<std::size_t> rows) {
        const DTensor& ta = val(a);
        const std::size_t c = ta.cols();
        DTensor out({rows.size(), c});
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy_n(ta.data.data() + rows[i] * c, c, out.data.data() + i * c);
        return push(std::move(out));
    }

    VarT scatter_rows(VarT base, const std::vector<std::size_t>& rows, VarT repl) {
        DTensor out = val(base);
        const DTensor& tr = val(repl);
        const std::size_t c = out.cols();
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy_n(tr.data.data() + i * c, c, out.data.data() + rows[i] * c);
        return push(std::move(out));
    }

    VarT topk_mask(VarT a, std::size_t k) {
        const DTensor& ta = val(a);
        const std::size_t n = ta.shape.back();
        const std::size_t slices = ta.size() / n;
        DTensor out(ta.shape);
        for (std::size_t s = 0; s < slices; ++s) {
            std::vector<float> slice(n);
            for (std::size_t j = 0; j < n; ++j) slice[j] = float(ta.data[s * n + j]);
            for (auto j : sort_topk(slice, k)) out.data[s * n + j] = ta.data[s * n + j];
        }
        return push(std::move(out));
    }

    VarT sum(VarT a) {
        double s = 0.0;
        for (double v : val(a).data) s += v;
        DTensor out({1});
        out.data[0] = s;
        return push(std::move(out));
    }

    VarT mean(VarT a) {
        double s = 0.0;
        for (double v : val(a).data) s += v;
        DTensor out({1});
        out.data[0] = s / double(val(a).size());
        return push(std::move(out));
    }

private:
    template <class F>
    VarT map(VarT a, F f) {
        DTensor out = val(a);
        for (auto& x : out.data) x = f(x);
        return push(std::move(out));
    }
    template <class F>
    VarT zip(VarT a, VarT b, F f) {
        DTensor out = val(a);
        const DTensor& tb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(out.data[i], tb.data[i]);
        return push(std::move(out));
    }
    VarT rowop(VarT x, VarT b, double sign) {
        DTensor out = val(x);
        const DTensor& tb = val(b);
        const std::size_t r = out.rows(), c = out.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += sign * tb.data[j];
        return push(std::move(out));
    }
    VarT push(DTensor t) {
        vals_.push_back(std::move(t));
        return VarT{int(vals_.size()) - 1};
    }
    std::vector<DTensor> vals_;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// A differentiable program that can be replayed on either engine. set_build
// stores the same generic lambda under both signatures.
struct GraphCase {
    std::vector<tact::Tensor> leaves;
    std::function<tact::Var(tact::Tape&, const std::vector<tact::Var>&)> build_f;
    std::function<tact::Var(DTape&, const std::vector<tact::Var>&)> build_d;

    template <class F>
    void set_build(F f) {
        build_f = f;
        build_d = f;
    }
};

inline double eval_loss_double(const GraphCase& g, const std::vector<DTensor>& leaf_vals) {
    DTape tp;
    std::vector<tact::Var> vars;
    vars.reserve(leaf_vals.size());
    for (const auto& t : leaf_vals) vars.push_back(tp.leaf(t));
    return tp.val(g.build_d(tp, vars)).data[0];
}

struct FdReport {
    double max_rel_err = 0.0; // max over leaves of norm-relative error
    std::size_t leaf_count = 0;
};

// Central finite differences of the double-precision oracle against the
// float32 analytic gradient. Error per leaf is aggregated in the L2 norm:
// |gA - gFD| / max(|gA|, |gFD|, floor).
inline FdReport check_gradients(const GraphCase& g, double floor_norm = 1e-6) {
    tact::Tape tp(true);
    std::vector<tact::Var> vars;
    for (const auto& t : g.leaves) vars.push_back(tp.leaf(t));
    tact::Var loss = g.build_f(tp, vars);
    tp.backward(loss);

    std::vector<DTensor> base;
    base.reserve(g.leaves.size());
    for (const auto& t : g.leaves) base.push_back(DTensor::from(t));

    FdReport rep;
    rep.leaf_count = g.leaves.size();
    for (std::size_t li = 0; li < g.leaves.size(); ++li) {
        const tact::Tensor& analytic = tp.grad(vars[li]);
        double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
        for (std::size_t i = 0; i < g.leaves[li].size(); ++i) {
            std::vector<DTensor> vals = base;
            const double x = vals[li].data[i];
            const double h = 1e-4 * std::max(1.0, std::fabs(x));
            vals[li].data[i] = x + h;
            const double fp = eval_loss_double(g, vals);
            vals[li].data[i] = x - h;
            const double fm = eval_loss_double(g, vals);
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic.data[i];
            diff2 += (an - fd) * (an - fd);
            a2 += an * an;
            f2 += fd * fd;
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(f2), floor_norm});
        rep.max_rel_err = std::max(rep.max_rel_err, std::sqrt(diff2) / denom);
    }
    return rep;
}

// Seeded random graph of depth <= 4 over the smooth op set. Kinked ops
// (relu, abs, topk) have dedicated margin-safe tests instead.
inline GraphCase make_random_graph(std::uint64_t seed) {
    tact::Rng rng(seed);
    GraphCase g;
    const auto dim = [&] { return std::size_t(2 + rng.below(4)); };
    const std::size_t m = dim(), k = dim(), n = dim();

    const auto add_leaf = [&](std::vector<std::size_t> shape) {
        g.leaves.push_back(tact::Tensor::randn(std::move(shape), rng, 0.8f));
        return g.leaves.size() - 1;
    };

    const std::size_t a = add_leaf({m, k});
    const std::size_t b = add_leaf({k, n});

    struct Step {
        int kind;
        std::size_t leaf;
        float c;
    };
    std::vector<Step> steps;
    std::size_t cur_rows = m, cur_cols = n;
    (void)cur_rows;
    const std::size_t depth = 1 + rng.below(3); // plus the opening matmul: <= 4
    for (std::size_t d = 0; d < depth; ++d) {
        const int kind = int(rng.below(6));
        Step st{kind, 0, 0.0f};
        switch (kind) {
            case 0: break; // tanh
            case 1: st.leaf = add_leaf({cur_rows, cur_cols}); break; // hadamard
            case 2: st.leaf = add_leaf({cur_rows, cur_cols}); break; // add
            case 3: { // matmul with a fresh right factor
                const std::size_t nn = dim();
                st.leaf = add_leaf({cur_cols, nn});
                cur_cols = nn;
                break;
            }
            case 4: st.leaf = add_leaf({cur_cols}); break; // row bias
            case 5: st.c = float(rng.uniform(0.5, 1.5)) * (rng.below(2) ? 1.0f : -1.0f); break;
        }
        steps.push_back(st);
    }

    g.set_build([a, b, steps](auto& tp, const std::vector<tact::Var>& vars) {
        tact::Var cur = tp.matmul(vars[a], vars[b]);
        for (const auto& st : steps) {
            switch (st.kind) {
                case 0: cur = tp.tanh_act(cur); break;
                case 1: cur = tp.mul(cur, vars[st.leaf]); break;
                case 2: cur = tp.add(cur, vars[st.leaf]); break;
                case 3: cur = tp.matmul(cur, vars[st.leaf]); break;
                case 4: cur = tp.add_rowvec(cur, vars[st.leaf]); break;
                case 5: cur = tp.scale(cur, st.c); break;
            }
        }
        const float s = 1.0f / std::sqrt(float(tp.val(cur).size()));
        return tp.scale(tp.sum(tp.tanh_act(cur)), s);
    });
    return g;
}

} // namespace oracle
