#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace elite;
using diff::Tensor;
using testkit::Mat;

namespace {

Tensor<double> rnd(diff::Shape s, diff::Rng& rng, double sd = 1.0) {
    auto t = Tensor<double>::randn(std::move(s), rng, sd);
    t.set_requires_grad(true);
    return t;
}

// sum(op * w) with a fixed random w, so every output entry has its own
// upstream gradient.
Tensor<double> weighted(const Tensor<double>& y, std::uint64_t seed) {
    diff::Rng rng(seed);
    auto w = Tensor<double>::randn(y.shape(), rng);
    return diff::sum(diff::mul(y, w));
}

void expect_grad(const diff::ParamList<double>& params, const std::function<Tensor<double>()>& f, double tol = 1e-6) {
    auto r = testkit::check_gradients(params, f, 12, 99);
    EXPECT_LT(r.max_rel, tol) << r.worst;
    EXPECT_GT(r.checked, 0u);
}

}  // namespace

TEST(Matmul, MatchesNaiveTripleLoop) {
    diff::Rng rng(1);
    std::uniform_int_distribution<std::size_t> dim(1, 17);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
        auto a = Tensor<double>::randn({m, k}, rng), b = Tensor<double>::randn({k, n}, rng);
        auto ref = testkit::mat_mul(testkit::to_mat(a), testkit::to_mat(b));
        EXPECT_LT(testkit::max_abs_diff(ref, diff::matmul(a, b)), 1e-12);
        auto bt = diff::transpose(b);
        EXPECT_LT(testkit::max_abs_diff(ref, diff::matmul_nt(a, bt)), 1e-12);
    }
}

TEST(Matmul, InnerDimensionMismatchIsShapeError) {
    auto a = Tensor<float>::zeros({2, 3}), b = Tensor<float>::zeros({4, 2});
    EXPECT_THROW(diff::matmul(a, b), ShapeError);
}

TEST(TensorTest, ZeroExtentIsShapeError) {
    EXPECT_THROW(Tensor<float>({0, 3}), ShapeError);
    EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(TensorTest, BackwardNeedsScalar) {
    diff::Rng rng(2);
    auto a = rnd({2, 2}, rng);
    EXPECT_THROW(diff::backward(diff::scale(a, 2.0)), ContractError);
}

TEST(TensorTest, NoGradGuardRecordsNothing) {
    diff::Rng rng(3);
    auto a = rnd({3, 3}, rng);
    diff::NoGradGuard ng;
    auto y = diff::matmul(a, a);
    EXPECT_FALSE(y.requires_grad());
}

TEST(TensorTest, SharedSubexpressionAccumulates) {
    auto x = Tensor<double>({3}, {1.0, -2.0, 0.5});
    x.set_requires_grad(true);
    diff::backward(diff::sum(diff::mul(x, x)));
    auto g = x.grad_vector();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], 2 * x[i]);
}

TEST(Gradients, ElementwiseAndReductions) {
    diff::Rng rng(4);
    auto a = rnd({3, 5}, rng), b = rnd({3, 5}, rng);
    diff::ParamList<double> p{{"a", a}, {"b", b}};
    expect_grad(p, [&] { return weighted(diff::add(a, b), 1); });
    expect_grad(p, [&] { return weighted(diff::sub(a, b), 2); });
    expect_grad(p, [&] { return weighted(diff::mul(a, b), 3); });
    expect_grad(p, [&] { return weighted(diff::sigmoid(a), 4); });
    expect_grad(p, [&] { return weighted(diff::silu(a), 5); });
    expect_grad(p, [&] { return weighted(diff::gelu(a), 6); });
    expect_grad(p, [&] { return weighted(diff::tanh(a), 7); });
    expect_grad(p, [&] { return weighted(diff::square(a), 8); });
    expect_grad(p, [&] { return diff::mse(a, b); });
    expect_grad(p, [&] { return diff::mean(diff::mul(a, b)); });
    expect_grad(p, [&] { return diff::abs_sum(diff::add_scalar(a, 0.05)); });
    expect_grad(p, [&] { return weighted(diff::mean_rows(a), 9); });
}

TEST(Gradients, MatrixOps) {
    diff::Rng rng(5);
    auto a = rnd({4, 3}, rng), b = rnd({3, 6}, rng), c = rnd({5, 3}, rng), bias = rnd({6}, rng);
    diff::ParamList<double> p{{"a", a}, {"b", b}, {"c", c}, {"bias", bias}};
    expect_grad(p, [&] { return weighted(diff::matmul(a, b), 1); });
    expect_grad(p, [&] { return weighted(diff::matmul_nt(a, c), 2); });
    expect_grad(p, [&] { return weighted(diff::transpose(a), 3); });
    expect_grad(p, [&] { return weighted(diff::add_rowvec(diff::matmul(a, b), bias), 4); });
    expect_grad(p, [&] { return weighted(diff::softmax_lastdim(diff::matmul(a, b)), 5); });
    expect_grad(p, [&] { return weighted(diff::l2_normalize_rows(a), 6); });
    expect_grad(p, [&] { return diff::cross_entropy_rows(diff::matmul(a, b), {0, 5, 2, 3}); });
}

TEST(Gradients, NormalizationAndPlumbing) {
    diff::Rng rng(6);
    auto x = rnd({4, 6}, rng), g = rnd({6}, rng), b = rnd({6}, rng), s = rnd({4}, rng);
    auto v = Tensor<double>({5}, {0.3, 0.9, 0.1, 0.5, 0.2});
    v.set_requires_grad(true);
    diff::ParamList<double> p{{"x", x}, {"g", g}, {"b", b}, {"s", s}, {"v", v}};
    expect_grad(p, [&] { return weighted(diff::layer_norm(x, g, b), 1); });
    expect_grad(p, [&] { return weighted(diff::mul_rows(x, s), 2); });
    expect_grad(p, [&] { return weighted(diff::column(x, 3), 3); });
    expect_grad(p, [&] { return weighted(diff::divide_by_max(v), 4); });
    expect_grad(p, [&] { return weighted(diff::reshape(x, {6, 4}), 5); });
    expect_grad(p, [&] { return weighted(diff::slice_rows(x, 1, 3), 6); });
    expect_grad(p, [&] { return weighted(diff::concat_rows<double>({x, diff::slice_rows(x, 0, 2)}), 7); });
    expect_grad(p, [&] { return weighted(diff::concat_cols<double>({x, diff::mul_rows(x, s)}), 8); });
    expect_grad(p, [&] { return weighted(diff::gather_rows(x, {3, 0, 3, 1}), 9); });
}

TEST(Gradients, SpatialOps) {
    diff::Rng rng(7);
    auto x = rnd({16, 3}, rng), y = rnd({4, 3}, rng);
    diff::ParamList<double> p{{"x", x}, {"y", y}};
    expect_grad(p, [&] { return weighted(diff::im2col3x3(x, 4, 4), 1); });
    expect_grad(p, [&] { return weighted(diff::avg_pool2x2(x, 4, 4), 2); });
    expect_grad(p, [&] { return weighted(diff::upsample2x(y, 2, 2), 3); });
}

TEST(Ops, SoftmaxRowsSumToOne) {
    diff::Rng rng(8);
    auto a = Tensor<double>::randn({7, 9}, rng, 4.0);
    auto s = diff::softmax_lastdim(a);
    for (std::size_t r = 0; r < 7; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 9; ++c) {
            EXPECT_GE(s.at(r, c), 0.0);
            sum += s.at(r, c);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Ops, SoftmaxRejectsNonFinite) {
    auto a = Tensor<float>({1, 2}, {1.f, std::nanf("")});
    EXPECT_THROW(diff::softmax_lastdim(a), NumericError);
}

TEST(Ops, DivideByMaxNeedsPositiveMaximum) {
    EXPECT_THROW(diff::divide_by_max(Tensor<float>({3}, {0.f, 0.f, 0.f})), NumericError);
    auto r = diff::divide_by_max(Tensor<float>({3}, {0.5f, 2.f, 1.f}));
    EXPECT_FLOAT_EQ(r[1], 1.f);
    EXPECT_FLOAT_EQ(r[0], 0.25f);
}

TEST(Ops, Im2colMatchesDirectConvolution) {
    diff::Rng rng(9);
    const std::size_t h = 5, w = 4, c = 2, o = 3;
    auto x = Tensor<double>::randn({h * w, c}, rng);
    auto k = Tensor<double>::randn({9 * c, o}, rng);
    auto y = diff::matmul(diff::im2col3x3(x, h, w), k);
    for (std::size_t yy = 0; yy < h; ++yy)
        for (std::size_t xx = 0; xx < w; ++xx)
            for (std::size_t oc = 0; oc < o; ++oc) {
                double ref = 0;
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx) {
                        const long sy = long(yy) + ky, sx = long(xx) + kx;
                        if (sy < 0 || sx < 0 || sy >= long(h) || sx >= long(w)) continue;
                        for (std::size_t ic = 0; ic < c; ++ic)
                            ref += x.at(sy * w + sx, ic) * k.at(((ky + 1) * 3 + kx + 1) * c + ic, oc);
                    }
                EXPECT_NEAR(y.at(yy * w + xx, oc), ref, 1e-12);
            }
}

TEST(Adam, MatchesClosedFormFirstSteps) {
    // With a constant gradient the bias-corrected update is lr·g/(|g|+eps).
    auto p = Tensor<double>({2}, {1.0, -1.0});
    diff::Adam<double> opt({p}, {0.1, 0.9, 0.999, 1e-8});
    for (int s = 0; s < 3; ++s) {
        opt.zero_grad();
        diff::backward(diff::sum(diff::mul(p.set_requires_grad(true), Tensor<double>({2}, {2.0, -0.5}))));
        opt.step();
    }
    EXPECT_NEAR(p[0], 1.0 - 3 * 0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
    EXPECT_NEAR(p[1], -1.0 + 3 * 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
    EXPECT_EQ(opt.state().step_count, 3u);
}

TEST(Adam, VaryingGradientOracle) {
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto p = Tensor<double>({1}, {0.3});
    diff::Adam<double> opt({p}, {lr, b1, b2, eps});
    double x = 0.3, m = 0, v = 0;
    for (int t = 1; t <= 20; ++t) {
        opt.zero_grad();
        p.set_requires_grad(true);
        diff::backward(diff::sum(diff::square(p)));  // g = 2x
        opt.step();
        const double g = 2 * x;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        EXPECT_NEAR(p[0], x, 1e-12);
    }
}

TEST(Parallel, WorkerCountDoesNotChangeResults) {
    diff::Rng rng(10);
    auto a = Tensor<float>::randn({300, 200}, rng), b = Tensor<float>::randn({200, 250}, rng);
    diff::Parallelism::set_serial();
    auto serial = diff::matmul(a, b).to_vector();
    diff::Parallelism::set_workers(4);
    auto threaded = diff::matmul(a, b).to_vector();
    diff::Parallelism::set_serial();
    EXPECT_EQ(serial, threaded);
}

TEST(Params, ChecksumSeesEveryByte) {
    diff::Rng rng(11);
    diff::Linear<float> l(4, 3, rng);
    diff::ParamList<float> p;
    l.collect(p, "l");
    const auto before = diff::checksum(p);
    l.bias.data()[2] = std::nextafter(l.bias[2], 1.f);
    EXPECT_NE(before, diff::checksum(p));
}

TEST(Params, CopyParamsConvertsPrecision) {
    diff::Rng r1(12), r2(13);
    diff::Linear<float> f(3, 2, r1);
    diff::Linear<double> d(3, 2, r2);
    diff::ParamList<float> pf;
    diff::ParamList<double> pd;
    f.collect(pf, "l");
    d.collect(pd, "l");
    diff::copy_params(pd, pf);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(d.weight[i], double(f.weight[i]));
}
