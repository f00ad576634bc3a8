#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "tact/tensor.hpp"

namespace tact {

// Reverse-mode autodiff over an eager tape.
//
// Every op computes its forward value immediately and, when recording, pushes
// one backward closure. Closures are stored in creation order; because an op's
// inputs always exist before its output, walking the list in reverse visits
// nodes in reverse topological order. Gradients of leaves that never feed the
// loss stay zero.
//
// The tape owns all intermediate tensors. Reuse one tape across iterations
// via clear(); buffers are released but the node vectors keep their capacity.

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

namespace detail {

// C(m x n) += / = A(m x k) * B(k x n), row-major. ikj order vectorizes the
// inner loop without reordering float additions.
inline void mm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
                  bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0f);
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            if (av == 0.0f) continue;
            const float* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += / = A(m x k) * B(n x k)^T. Row-dot kernel with four partial
// accumulators; the summation order is fixed and deterministic.
inline void mm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
                  bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
            std::size_t p = 0;
            for (; p + 4 <= k; p += 4) {
                s0 += arow[p] * brow[p];
                s1 += arow[p + 1] * brow[p + 1];
                s2 += arow[p + 2] * brow[p + 2];
                s3 += arow[p + 3] * brow[p + 3];
            }
            float s = (s0 + s1) + (s2 + s3);
            for (; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// C(k x n) += / = A(m x k)^T * B(m x n).
inline void mm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
                  bool accumulate) {
    if (!accumulate) std::fill(c, c + k * n, 0.0f);
    for (std::size_t p = 0; p < m; ++p) {
        const float* arow = a + p * k;
        const float* brow = b + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const float av = arow[i];
            if (av == 0.0f) continue;
            float* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Indices of the k largest entries of x[0..n), ties broken toward the lower
// index. Returns them sorted by (value desc, index asc).
inline std::vector<std::size_t> topk_indices(const float* x, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    const auto better = [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] > x[b];
        return a < b;
    };
    if (k >= n) {
        std::sort(idx.begin(), idx.end(), better);
        return idx;
    }
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    return idx;
}

} // namespace detail

class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    // --- node access -------------------------------------------------------

    const Tensor& val(Var v) const { return vals_[static_cast<std::size_t>(v.idx)]; }
    Tensor& val_mut(Var v) { return vals_[static_cast<std::size_t>(v.idx)]; }

    const Tensor& grad(Var v) const {
        check(!grads_.empty(), "Tape::grad: backward() has not run");
        return grads_[static_cast<std::size_t>(v.idx)];
    }

    std::size_t node_count() const { return vals_.size(); }

    void clear() {
        vals_.clear();
        grads_.clear();
        backs_.clear();
    }

    // --- leaves -------------------------------------------------------------

    Var leaf(Tensor t) { return push(std::move(t)); }

    // --- elementwise --------------------------------------------------------

    Var add(Var a, Var b) {
        const Tensor &ta = val(a), &tb = val(b);
        check(ta.same_shape(tb), "add: shape mismatch");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, b, o](Tape& tp) {
                tp.accumulate(a, tp.grads_[std::size_t(o.idx)]);
                tp.accumulate(b, tp.grads_[std::size_t(o.idx)]);
            });
        return o;
    }

    Var sub(Var a, Var b) {
        const Tensor &ta = val(a), &tb = val(b);
        check(ta.same_shape(tb), "sub: shape mismatch");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, b, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                tp.accumulate(a, g);
                Tensor& gb = tp.grads_[std::size_t(b.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
            });
        return o;
    }

    Var mul(Var a, Var b) {
        const Tensor &ta = val(a), &tb = val(b);
        check(ta.same_shape(tb), "mul: shape mismatch");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, b, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                const Tensor &ta2 = tp.val(a), &tb2 = tp.val(b);
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                Tensor& gb = tp.grads_[std::size_t(b.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga.data[i] += g.data[i] * tb2.data[i];
                    gb.data[i] += g.data[i] * ta2.data[i];
                }
            });
        return o;
    }

    Var scale(Var a, float c) {
        Tensor out = val(a);
        for (auto& x : out.data) x *= c;
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += c * g.data[i];
            });
        return o;
    }

    // Y = X * K elementwise with a constant tensor (loss weights etc.)
    Var mul_const(Var a, const Tensor& k) {
        const Tensor& ta = val(a);
        check(ta.same_shape(k), "mul_const: shape mismatch");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= k.data[i];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o, k](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += k.data[i] * g.data[i];
            });
        return o;
    }

    Var relu(Var a) {
        Tensor out = val(a);
        for (auto& x : out.data) x = x > 0.0f ? x : 0.0f;
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                const Tensor& x = tp.val(a);
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (x.data[i] > 0.0f) ga.data[i] += g.data[i];
            });
        return o;
    }

    Var tanh_act(Var a) {
        Tensor out = val(a);
        for (auto& x : out.data) x = std::tanh(x);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                const Tensor& y = tp.val(o);
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * (1.0f - y.data[i] * y.data[i]);
            });
        return o;
    }

    Var abs_val(Var a) {
        Tensor out = val(a);
        for (auto& x : out.data) x = std::fabs(x);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                const Tensor& x = tp.val(a);
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                // subgradient 0 at the kink
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x.data[i] > 0.0f)
                        ga.data[i] += g.data[i];
                    else if (x.data[i] < 0.0f)
                        ga.data[i] -= g.data[i];
                }
            });
        return o;
    }

    Var square(Var a) {
        Tensor out = val(a);
        for (auto& x : out.data) x = x * x;
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                const Tensor& x = tp.val(a);
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += 2.0f * x.data[i] * g.data[i];
            });
        return o;
    }

    // --- matrix products ----------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor &ta = val(a), &tb = val(b);
        check(ta.rank() == 2 && tb.rank() == 2, "matmul: rank != 2");
        check(ta.cols() == tb.rows(), "matmul: inner dimensions disagree");
        const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
        Tensor out({m, n});
        detail::mm_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n, false);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, b, o, m, k, n](Tape& tp) {
                const float* g = tp.grads_[std::size_t(o.idx)].data.data();
                // dA = dC * B^T ; dB = A^T * dC
                detail::mm_nt(g, tp.val(b).data.data(), tp.grads_[std::size_t(a.idx)].data.data(), m, n, k, true);
                detail::mm_tn(tp.val(a).data.data(), g, tp.grads_[std::size_t(b.idx)].data.data(), m, k, n, true);
            });
        return o;
    }

    // C = A * B^T with B stored (n x k); the natural layout for encoder /
    // decoder weight matrices applied to row batches.
    Var matmul_nt(Var a, Var b) {
        const Tensor &ta = val(a), &tb = val(b);
        check(ta.rank() == 2 && tb.rank() == 2, "matmul_nt: rank != 2");
        check(ta.cols() == tb.cols(), "matmul_nt: inner dimensions disagree");
        const std::size_t m = ta.rows(), k = ta.cols(), n = tb.rows();
        Tensor out({m, n});
        detail::mm_nt(ta.data.data(), tb.data.data(), out.data.data(), m, k, n, false);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, b, o, m, k, n](Tape& tp) {
                const float* g = tp.grads_[std::size_t(o.idx)].data.data();
                // dA = dC * B ; dB = dC^T * A
                detail::mm_nn(g, tp.val(b).data.data(), tp.grads_[std::size_t(a.idx)].data.data(), m, n, k, true);
                detail::mm_tn(g, tp.val(a).data.data(), tp.grads_[std::size_t(b.idx)].data.data(), m, n, k, true);
            });
        return o;
    }

    // Y[g] = M * X[g] for each group g, where X is (groups*m x d) and M is
    // (m x m). Realizes parameter-shared mixing along one grid axis.
    Var group_matmul_left(Var mvar, Var x, std::size_t groups) {
        const Tensor &tm = val(mvar), &tx = val(x);
        check(tm.rank() == 2 && tm.rows() == tm.cols(), "group_matmul_left: M must be square");
        check(tx.rank() == 2 && groups > 0 && tx.rows() % groups == 0, "group_matmul_left: bad grouping");
        const std::size_t m = tx.rows() / groups, d = tx.cols();
        check(tm.rows() == m, "group_matmul_left: M extent != group height");
        Tensor out({tx.rows(), d});
        for (std::size_t g = 0; g < groups; ++g)
            detail::mm_nn(tm.data.data(), tx.data.data() + g * m * d, out.data.data() + g * m * d, m, m, d, false);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([mvar, x, o, groups, m, d](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& gm = tp.grads_[std::size_t(mvar.idx)];
                Tensor& gx = tp.grads_[std::size_t(x.idx)];
                const Tensor& tm2 = tp.val(mvar);
                const Tensor& tx2 = tp.val(x);
                for (std::size_t grp = 0; grp < groups; ++grp) {
                    const float* gp = g.data.data() + grp * m * d;
                    // dM += dY[g] * X[g]^T ; dX[g] += M^T * dY[g]
                    detail::mm_nt(gp, tx2.data.data() + grp * m * d, gm.data.data(), m, d, m, true);
                    detail::mm_tn(tm2.data.data(), gp, gx.data.data() + grp * m * d, m, m, d, true);
                }
            });
        return o;
    }

    // --- broadcasts ---------------------------------------------------------

    // Y = X + 1 b^T (bias added to every row)
    Var add_rowvec(Var x, Var b) {
        const Tensor &tx = val(x), &tb = val(b);
        check(tx.rank() == 2 && tb.rank() == 1 && tb.shape[0] == tx.cols(), "add_rowvec: shape mismatch");
        Tensor out = tx;
        const std::size_t r = tx.rows(), c = tx.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += tb.data[j];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([x, b, o, r, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                tp.accumulate(x, g);
                Tensor& gb = tp.grads_[std::size_t(b.idx)];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb.data[j] += g.data[i * c + j];
            });
        return o;
    }

    // Y[i][j] = X[i][j] - b[j]
    Var sub_rowvec(Var x, Var b) {
        const Tensor &tx = val(x), &tb = val(b);
        check(tx.rank() == 2 && tb.rank() == 1 && tb.shape[0] == tx.cols(), "sub_rowvec: shape mismatch");
        Tensor out = tx;
        const std::size_t r = tx.rows(), c = tx.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] -= tb.data[j];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([x, b, o, r, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                tp.accumulate(x, g);
                Tensor& gb = tp.grads_[std::size_t(b.idx)];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb.data[j] -= g.data[i * c + j];
            });
        return o;
    }

    // Y[i][j] = X[i][j] * s[j] with a constant feature scaling (no gradient
    // to s); used for de-standardization inside intervention graphs.
    Var mul_colconst(Var x, const std::vector<float>& s) {
        const Tensor& tx = val(x);
        check(tx.rank() == 2 && s.size() == tx.cols(), "mul_colconst: shape mismatch");
        Tensor out = tx;
        const std::size_t r = tx.rows(), c = tx.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= s[j];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([x, o, s, r, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& gx = tp.grads_[std::size_t(x.idx)];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gx.data[i * c + j] += g.data[i * c + j] * s[j];
            });
        return o;
    }

    Var add_colconst(Var x, const std::vector<float>& s) {
        const Tensor& tx = val(x);
        check(tx.rank() == 2 && s.size() == tx.cols(), "add_colconst: shape mismatch");
        Tensor out = tx;
        const std::size_t r = tx.rows(), c = tx.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += s[j];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([x, o](Tape& tp) { tp.accumulate(x, tp.grads_[std::size_t(o.idx)]); });
        return o;
    }

    // --- shape and indexing -------------------------------------------------

    Var reshape(Var a, std::vector<std::size_t> new_shape) {
        const Tensor& ta = val(a);
        check(Tensor::count(new_shape) == ta.size(), "reshape: element count mismatch");
        Tensor out(std::move(new_shape), ta.data);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            });
        return o;
    }

    Var slice_rows(Var a, std::vector<std::size_t> rows) {
        const Tensor& ta = val(a);
        check(ta.rank() == 2, "slice_rows: rank != 2");
        const std::size_t c = ta.cols();
        Tensor out({rows.size(), c});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            check(rows[i] < ta.rows(), "slice_rows: row out of range");
            std::copy_n(ta.data.data() + rows[i] * c, c, out.data.data() + i * c);
        }
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o, rows, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (std::size_t i = 0; i < rows.size(); ++i)
                    for (std::size_t j = 0; j < c; ++j) ga.data[rows[i] * c + j] += g.data[i * c + j];
            });
        return o;
    }

    // Y = base with base[rows[i], :] replaced by repl[i, :]. Gradient flows
    // to repl on the replaced rows and to base everywhere else.
    Var scatter_rows(Var base, const std::vector<std::size_t>& rows, Var repl) {
        const Tensor &tb = val(base), &tr = val(repl);
        check(tb.rank() == 2 && tr.rank() == 2 && tr.cols() == tb.cols(), "scatter_rows: shape mismatch");
        check(tr.rows() == rows.size(), "scatter_rows: row count mismatch");
        Tensor out = tb;
        const std::size_t c = tb.cols();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            check(rows[i] < tb.rows(), "scatter_rows: row out of range");
            std::copy_n(tr.data.data() + i * c, c, out.data.data() + rows[i] * c);
        }
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([base, repl, o, rows, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& gb = tp.grads_[std::size_t(base.idx)];
                Tensor& gr = tp.grads_[std::size_t(repl.idx)];
                std::vector<bool> replaced(gb.rows(), false);
                for (auto r : rows) replaced[r] = true;
                for (std::size_t i = 0; i < gb.rows(); ++i)
                    if (!replaced[i])
                        for (std::size_t j = 0; j < c; ++j) gb.data[i * c + j] += g.data[i * c + j];
                for (std::size_t i = 0; i < rows.size(); ++i)
                    for (std::size_t j = 0; j < c; ++j) gr.data[i * c + j] += g.data[rows[i] * c + j];
            });
        return o;
    }

    // Y[i][j] = w[i] * X[i][j] with constant per-row weights.
    Var scale_rows_const(Var x, const std::vector<float>& w) {
        const Tensor& tx = val(x);
        check(tx.rank() == 2 && w.size() == tx.rows(), "scale_rows_const: shape mismatch");
        Tensor out = tx;
        const std::size_t r = tx.rows(), c = tx.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] *= w[i];
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([x, o, w, r, c](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& gx = tp.grads_[std::size_t(x.idx)];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gx.data[i * c + j] += g.data[i * c + j] * w[i];
            });
        return o;
    }

    // --- sparsity -----------------------------------------------------------

    // Keeps the k largest entries of each slice along the last axis, zeroes
    // the rest. Ties at the k-th value keep the lower index. The selection
    // gate is constant in the backward pass: gradient flows through kept
    // entries only. k >= axis length returns x unchanged.
    Var topk_mask(Var a, std::size_t k) {
        const Tensor& ta = val(a);
        check(ta.rank() >= 1, "topk_mask: rank 0");
        const std::size_t n = ta.shape.back();
        const std::size_t slices = ta.size() / std::max<std::size_t>(n, 1);
        Tensor out(ta.shape);
        std::vector<std::size_t> kept;
        kept.reserve(slices * std::min(k, n));
        for (std::size_t s = 0; s < slices; ++s) {
            const float* src = ta.data.data() + s * n;
            float* dst = out.data.data() + s * n;
            if (k >= n) {
                std::copy_n(src, n, dst);
                for (std::size_t j = 0; j < n; ++j) kept.push_back(s * n + j);
                continue;
            }
            for (auto j : detail::topk_indices(src, n, k)) {
                dst[j] = src[j];
                kept.push_back(s * n + j);
            }
        }
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o, kept](Tape& tp) {
                const Tensor& g = tp.grads_[std::size_t(o.idx)];
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (auto pos : kept) ga.data[pos] += g.data[pos];
            });
        return o;
    }

    // --- reductions ---------------------------------------------------------

    // Scalar sum, accumulated in double so the f32 result carries a single
    // rounding: matters for finite-difference checks downstream.
    Var sum(Var a) {
        const Tensor& ta = val(a);
        double s = 0.0;
        for (float v : ta.data) s += v;
        Tensor out({1});
        out.data[0] = static_cast<float>(s);
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const float g = tp.grads_[std::size_t(o.idx)].data[0];
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (auto& x : ga.data) x += g;
            });
        return o;
    }

    Var mean(Var a) {
        const Tensor& ta = val(a);
        check(ta.size() > 0, "mean: empty tensor");
        double s = 0.0;
        for (float v : ta.data) s += v;
        Tensor out({1});
        out.data[0] = static_cast<float>(s / double(ta.size()));
        Var o = push(std::move(out));
        if (recording_)
            backs_.push_back([a, o](Tape& tp) {
                const Tensor& ta2 = tp.val(a);
                const float g = tp.grads_[std::size_t(o.idx)].data[0] / float(ta2.size());
                Tensor& ga = tp.grads_[std::size_t(a.idx)];
                for (auto& x : ga.data) x += g;
            });
        return o;
    }

    // --- backward -----------------------------------------------------------

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. loss must be
    // a scalar node.
    void backward(Var loss) {
        check(loss.valid() && std::size_t(loss.idx) < vals_.size(), "backward: invalid loss node");
        check(val(loss).size() == 1, "backward: loss must be scalar");
        check(recording_, "backward: tape was not recording");
        grads_.clear();
        grads_.reserve(vals_.size());
        for (const auto& v : vals_) grads_.emplace_back(v.shape);
        grads_[std::size_t(loss.idx)].data[0] = 1.0f;
        for (std::size_t i = backs_.size(); i-- > 0;) backs_[i](*this);
    }

private:
    // backs_ is an ordered action list, not node-aligned: closures capture the
    // Vars they need, and backward() replays the list back to front.
    Var push(Tensor t) {
        vals_.push_back(std::move(t));
        return Var{static_cast<int>(vals_.size()) - 1};
    }

    void accumulate(Var v, const Tensor& g) {
        Tensor& gv = grads_[std::size_t(v.idx)];
        for (std::size_t i = 0; i < g.size(); ++i) gv.data[i] += g.data[i];
    }

    bool recording_ = true;
    std::vector<Tensor> vals_;
    std::vector<Tensor> grads_;
    std::vector<std::function<void(Tape&)>> backs_;
};

} // namespace tact
