#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "tact/optim.hpp"
#include "tact/tape.hpp"
#include "tact/tensor.hpp"

using namespace tact;

TEST_CASE("tensor shape and data invariants", "[numerics]") {
    Tensor t({2, 3});
    REQUIRE(t.size() == 6);
    REQUIRE(t.rank() == 2);
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), Error);
    REQUIRE(Tensor::identity(3).at(1, 1) == 1.0f);
    REQUIRE(Tensor::identity(3).at(0, 1) == 0.0f);
}

TEST_CASE("tensor binary format round-trips and rejects corruption", "[numerics]") {
    Rng rng(7);
    Tensor t = Tensor::randn({3, 4, 2}, rng);
    std::stringstream ss;
    io::write_tensor(ss, t);
    const std::string bytes = ss.str();

    std::stringstream back(bytes);
    Tensor u = io::read_tensor(back);
    REQUIRE(u.shape == t.shape);
    REQUIRE(u.data == t.data);

    SECTION("bad magic") {
        std::string corrupt = bytes;
        corrupt[0] = 'X';
        std::stringstream c(corrupt);
        REQUIRE_THROWS_AS(io::read_tensor(c), Error);
    }
    SECTION("version mismatch") {
        std::string corrupt = bytes;
        corrupt[4] = char(99);
        std::stringstream c(corrupt);
        REQUIRE_THROWS_AS(io::read_tensor(c), Error);
    }
    SECTION("truncated payload") {
        std::stringstream c(bytes.substr(0, bytes.size() - 5));
        REQUIRE_THROWS_AS(io::read_tensor(c), Error);
    }
}

TEST_CASE("matmul identity and hand arithmetic", "[numerics]") {
    Tape tp;
    Var I = tp.leaf(Tensor::identity(3));
    Var v = tp.leaf(Tensor({3, 1}, {2.0f, -1.0f, 5.0f}));
    REQUIRE(tp.val(tp.matmul(I, v)).data == std::vector<float>{2.0f, -1.0f, 5.0f});

    Var a = tp.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var b = tp.leaf(Tensor({2, 1}, {1, 1}));
    REQUIRE(tp.val(tp.matmul(a, b)).data == std::vector<float>{3.0f, 7.0f});

    Var bad = tp.leaf(Tensor({3, 1}, {1, 1, 1}));
    REQUIRE_THROWS_AS(tp.matmul(a, bad), Error);
}

TEST_CASE("matmul agrees with the naive oracle", "[numerics]") {
    Rng rng(11);
    for (int it = 0; it < 20; ++it) {
        const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
        Tensor a = Tensor::randn({m, k}, rng);
        Tensor b = Tensor::randn({k, n}, rng);
        Tape tp(false);
        const Tensor& c = tp.val(tp.matmul(tp.leaf(a), tp.leaf(b)));
        const Tensor ref = oracle::naive_matmul(a, b);
        for (std::size_t i = 0; i < c.size(); ++i)
            REQUIRE(c.data[i] == Catch::Approx(ref.data[i]).margin(1e-5).epsilon(1e-5));
    }
}

TEST_CASE("matmul gradient of sum matches central differences", "[numerics]") {
    Rng rng(13);
    oracle::GraphCase g;
    g.leaves.push_back(Tensor::randn({5, 4}, rng));
    g.leaves.push_back(Tensor::randn({4, 3}, rng));
    g.set_build([](auto& tp, const std::vector<Var>& v) { return tp.sum(tp.matmul(v[0], v[1])); });
    const auto rep = oracle::check_gradients(g);
    REQUIRE(rep.max_rel_err < 1e-4);
}

TEST_CASE("matmul_nt and group_matmul_left match plain matmul equivalents", "[numerics]") {
    Rng rng(17);
    Tensor a = Tensor::randn({4, 6}, rng);
    Tensor b = Tensor::randn({5, 6}, rng);
    // B^T materialized by hand
    Tensor bt({6, 5});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j) bt.at(j, i) = b.at(i, j);
    Tape tp(false);
    const Tensor& via_nt = tp.val(tp.matmul_nt(tp.leaf(a), tp.leaf(b)));
    const Tensor ref = oracle::naive_matmul(a, bt);
    for (std::size_t i = 0; i < via_nt.size(); ++i)
        REQUIRE(via_nt.data[i] == Catch::Approx(ref.data[i]).margin(1e-5));

    // grouped left-multiply == block-diagonal matmul
    Tensor mmat = Tensor::randn({3, 3}, rng);
    Tensor x = Tensor::randn({6, 4}, rng); // 2 groups of 3 rows
    const Tensor& grouped = tp.val(tp.group_matmul_left(tp.leaf(mmat), tp.leaf(x), 2));
    for (std::size_t g = 0; g < 2; ++g) {
        Tensor xg({3, 4});
        std::copy_n(x.data.data() + g * 12, 12, xg.data.data());
        const Tensor refg = oracle::naive_matmul(mmat, xg);
        for (std::size_t i = 0; i < 12; ++i)
            REQUIRE(grouped.data[g * 12 + i] == Catch::Approx(refg.data[i]).margin(1e-5));
    }
}

TEST_CASE("topk_mask definition, identity and tie-break", "[numerics]") {
    Tape tp;
    Var x = tp.leaf(Tensor({3}, {3, 1, 2}));
    REQUIRE(tp.val(tp.topk_mask(x, 2)).data == std::vector<float>{3, 0, 2});
    REQUIRE(tp.val(tp.topk_mask(x, 3)).data == std::vector<float>{3, 1, 2});
    REQUIRE(tp.val(tp.topk_mask(x, 9)).data == std::vector<float>{3, 1, 2});
    REQUIRE(tp.val(tp.topk_mask(x, 0)).data == std::vector<float>{0, 0, 0});

    // ties at the k-th value keep the lower index
    Var t = tp.leaf(Tensor({4}, {1.0f, 2.0f, 2.0f, 2.0f}));
    REQUIRE(tp.val(tp.topk_mask(t, 2)).data == std::vector<float>{0, 2, 2, 0});

    Rng rng(23);
    for (int it = 0; it < 50; ++it) {
        const std::size_t n = 2 + rng.below(12);
        const std::size_t k = rng.below(n + 2);
        std::vector<float> vals(n);
        for (auto& v : vals) v = float(rng.below(5)); // plenty of ties
        Tape local;
        const Tensor& masked = local.val(local.topk_mask(local.leaf(Tensor({n}, vals)), k));
        const auto keep = oracle::sort_topk(vals, k);
        Tensor expect({n});
        for (auto i : keep) expect.data[i] = vals[i];
        REQUIRE(masked.data == expect.data);

        std::size_t nnz = 0;
        for (float v : masked.data) nnz += (v != 0.0f);
        REQUIRE(nnz <= k);
    }
}

TEST_CASE("topk_mask gradient flows through kept entries only", "[numerics]") {
    // values separated by wide gaps: the FD step cannot reorder the selection
    Tape tp;
    Var x = tp.leaf(Tensor({4}, {4.0f, 1.0f, 3.0f, -2.0f}));
    Var loss = tp.sum(tp.topk_mask(x, 2));
    tp.backward(loss);
    REQUIRE(tp.grad(x).data == std::vector<float>{1, 0, 1, 0});

    oracle::GraphCase g;
    g.leaves.push_back(Tensor({4}, {4.0f, 1.0f, 3.0f, -2.0f}));
    g.set_build([](auto& t2, const std::vector<Var>& v) {
        return t2.sum(t2.square(t2.topk_mask(t2.reshape(v[0], {1, 4}), 2)));
    });
    REQUIRE(oracle::check_gradients(g).max_rel_err < 1e-4);
}

TEST_CASE("backward bilinear form and constants", "[numerics]") {
    Rng rng(31);
    Tensor ta = Tensor::randn({3, 3}, rng);
    Tensor tb = Tensor::randn({3, 3}, rng);
    Tape tp;
    Var a = tp.leaf(ta), b = tp.leaf(tb);
    Var unused = tp.leaf(Tensor::randn({2, 2}, rng));
    tp.backward(tp.sum(tp.mul(a, b)));
    REQUIRE(tp.grad(a).data == tb.data);
    REQUIRE(tp.grad(b).data == ta.data);
    // leaves off the loss path get exact zeros
    REQUIRE(tp.grad(unused).data == std::vector<float>(4, 0.0f));
}

TEST_CASE("backward rejects non-scalar loss", "[numerics]") {
    Tape tp;
    Var a = tp.leaf(Tensor({2}, {1, 2}));
    REQUIRE_THROWS_AS(tp.backward(a), Error);
}

TEST_CASE("two-layer composition gradient vs finite differences", "[numerics]") {
    Rng rng(37);
    oracle::GraphCase g;
    g.leaves.push_back(Tensor::randn({4, 5}, rng)); // input
    g.leaves.push_back(Tensor::randn({5, 6}, rng)); // W1
    g.leaves.push_back(Tensor::randn({6}, rng));    // b1
    g.leaves.push_back(Tensor::randn({6, 2}, rng)); // W2
    g.set_build([](auto& tp, const std::vector<Var>& v) {
        Var h = tp.tanh_act(tp.add_rowvec(tp.matmul(v[0], v[1]), v[2]));
        Var out = tp.matmul(h, v[3]);
        return tp.scale(tp.sum(out), 0.25f);
    });
    REQUIRE(oracle::check_gradients(g).max_rel_err < 1e-4);
}

TEST_CASE("relu and abs gradients away from the kink", "[numerics]") {
    oracle::GraphCase g;
    g.leaves.push_back(Tensor({6}, {0.5f, -0.7f, 1.2f, -0.4f, 2.0f, -1.5f}));
    g.set_build([](auto& tp, const std::vector<Var>& v) {
        Var r = tp.relu(tp.reshape(v[0], {2, 3}));
        return tp.sum(tp.abs_val(tp.scale(r, 1.3f)));
    });
    REQUIRE(oracle::check_gradients(g).max_rel_err < 1e-4);
}

TEST_CASE("slice, scatter and reshape gradients", "[numerics]") {
    Rng rng(41);
    oracle::GraphCase g;
    g.leaves.push_back(Tensor::randn({5, 3}, rng));
    g.leaves.push_back(Tensor::randn({2, 3}, rng));
    g.set_build([](auto& tp, const std::vector<Var>& v) {
        Var merged = tp.scatter_rows(v[0], {1, 3}, v[1]);
        Var part = tp.slice_rows(merged, {0, 1, 3});
        return tp.scale(tp.sum(tp.tanh_act(part)), 0.5f);
    });
    REQUIRE(oracle::check_gradients(g).max_rel_err < 1e-4);

    // scatter leaves untouched rows' gradient with the base
    Tape tp;
    Var base = tp.leaf(Tensor::randn({4, 2}, rng));
    Var repl = tp.leaf(Tensor::randn({1, 2}, rng));
    tp.backward(tp.sum(tp.scatter_rows(base, {2}, repl)));
    REQUIRE(tp.grad(base).data == std::vector<float>{1, 1, 1, 1, 0, 0, 1, 1});
    REQUIRE(tp.grad(repl).data == std::vector<float>{1, 1});
}

TEST_CASE("100 random graphs vs finite differences", "[numerics][fd100]") {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto g = oracle::make_random_graph(seed);
        const auto rep = oracle::check_gradients(g);
        worst = std::max(worst, rep.max_rel_err);
    }
    INFO("max norm-relative error over 100 graphs: " << worst);
    REQUIRE(worst < 1e-4);
}

TEST_CASE("forward and backward are bit-deterministic", "[numerics]") {
    const auto run = [](std::uint64_t seed) {
        const auto g = oracle::make_random_graph(seed);
        Tape tp;
        std::vector<Var> vars;
        for (const auto& t : g.leaves) vars.push_back(tp.leaf(t));
        Var loss = g.build_f(tp, vars);
        tp.backward(loss);
        std::vector<float> out{tp.val(loss).data[0]};
        for (auto v : vars)
            for (float x : tp.grad(v).data) out.push_back(x);
        return out;
    };
    for (std::uint64_t seed : {3ull, 77ull, 2026ull}) REQUIRE(run(seed) == run(seed));
}

TEST_CASE("adamw zero-gradient behaviour", "[numerics]") {
    Tensor p({3}, {1.0f, -2.0f, 0.5f});
    const std::vector<float> orig = p.data;
    Tensor zero({3});
    std::vector<ParamRef> params{{"p", &p}};
    std::vector<const Tensor*> grads{&zero};

    AdamW opt_plain({.lr = 0.05f, .weight_decay = 0.0f});
    opt_plain.step(params, grads);
    REQUIRE(p.data == orig);
    REQUIRE(opt_plain.step_count() == 1);

    // zero gradient with decay: pure multiplicative shrink p * (1 - lr*wd)
    AdamW opt_wd({.lr = 0.05f, .weight_decay = 0.1f});
    opt_wd.step(params, grads);
    for (std::size_t i = 0; i < 3; ++i)
        REQUIRE(p.data[i] == Catch::Approx(orig[i] * (1.0f - 0.05f * 0.1f)).epsilon(1e-6));
}

TEST_CASE("adamw first step matches scalar reference", "[numerics]") {
    // independent double-precision evaluation of the update rule
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01, g = 0.5, p0 = 1.0;
    const double m = (1 - b1) * g, v = (1 - b2) * g * g;
    const double mhat = m / (1 - b1), vhat = v / (1 - b2);
    const double expect = p0 - lr * (mhat / (std::sqrt(vhat) + eps) + wd * p0);

    Tensor p({1}, {float(p0)});
    Tensor grad({1}, {float(g)});
    std::vector<ParamRef> params{{"p", &p}};
    std::vector<const Tensor*> grads{&grad};
    AdamW opt({.lr = float(lr), .beta1 = float(b1), .beta2 = float(b2), .eps = float(eps), .weight_decay = float(wd)});
    opt.step(params, grads);
    REQUIRE(p.data[0] == Catch::Approx(expect).margin(1e-5));
              // expect = 0.89900000 for these constants
    REQUIRE_THROWS_AS(
        [&] {
            Tensor bad({2});
            std::vector<const Tensor*> g2{&bad};
            opt.step(params, g2);
        }(),
        Error);
}
