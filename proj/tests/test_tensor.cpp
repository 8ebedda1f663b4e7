#include <catch2/catch_amalgamated.hpp>

#include "meshfield/tape.hpp"
#include "meshfield/tensor.hpp"
#include "testutil.hpp"

using meshfield::ConfigError;
using meshfield::GradientTape;
using meshfield::NumericError;
using meshfield::Rng;
using meshfield::Tensor;
using Var = GradientTape<double>::Var;

TEST_CASE("matmul shapes and values") {
    GradientTape<double> t;
    auto a = t.constant(Tensor<double>::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    auto b = t.constant(Tensor<double>::matrix(3, 1, {1, 1, 1}));
    auto c = t.matmul(a, b);
    REQUIRE(t.value(c).shape == std::vector<std::size_t>{2, 1});
    CHECK(t.value(c)[0] == 6.0);
    CHECK(t.value(c)[1] == 15.0);

    auto bad = Tensor<double>::matrix(2, 2, {1, 2, 3, 4});
    auto d = t.constant(bad);
    CHECK_THROWS_AS(t.matmul(a, d), ConfigError);
}

TEST_CASE("matmul transpose flags agree with explicit transposes") {
    Rng rng(7);
    auto fill = [&](std::size_t r, std::size_t c) {
        Tensor<double> m({r, c});
        for (auto& v : m.data) v = rng.uniform(-1, 1);
        return m;
    };
    Tensor<double> A = fill(3, 4), B = fill(3, 5);
    auto At = Tensor<double>({4, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) At(j, i) = A(i, j);

    GradientTape<double> t;
    auto ref = t.matmul(t.constant(At), t.constant(B));
    auto viaflag = t.matmul(t.constant(A), t.constant(B), /*trans_a=*/true);
    REQUIRE(t.value(ref).shape == t.value(viaflag).shape);
    for (std::size_t i = 0; i < t.value(ref).size(); ++i)
        CHECK(t.value(viaflag)[i] == Catch::Approx(t.value(ref)[i]).margin(1e-14));
}

TEST_CASE("softmax of symmetric pair") {
    GradientTape<double> t;
    auto x = t.constant(Tensor<double>::vec({0.0, 0.0}));
    auto y = t.softmax_rows(x);
    CHECK(t.value(y)[0] == Catch::Approx(0.5));
    CHECK(t.value(y)[1] == Catch::Approx(0.5));
}

TEST_CASE("reduce_sum of identity") {
    GradientTape<double> t;
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    CHECK(t.value(t.reduce_sum(t.constant(eye))).item() == 3.0);
}

TEST_CASE("grad of sum of squares") {
    GradientTape<double> t;
    auto p = t.param("p", Tensor<double>::vec({1.0, 2.0}));
    auto loss = t.reduce_sum(t.mul(p, p));
    t.backward(loss);
    auto g = t.grads_by_name();
    CHECK(g.at("p")[0] == Catch::Approx(2.0));
    CHECK(g.at("p")[1] == Catch::Approx(4.0));
}

TEST_CASE("wavelet composition gradients at zero") {
    // y = w1*sin(x) + w2*cos(x); at x=0: dy/dw2 = 1, dy/dx = w1
    GradientTape<double> t;
    auto x = t.input(Tensor<double>::vec({0.0}));
    auto w1 = t.param("w1", Tensor<double>::scalar(0.7));
    auto w2 = t.param("w2", Tensor<double>::scalar(-0.3));
    auto y = t.reduce_sum(t.add(t.smul(w1, t.sin(x)), t.smul(w2, t.cos(x))));
    t.backward(y);
    CHECK(t.grads_by_name().at("w2").item() == Catch::Approx(1.0));
    CHECK(t.grad(x)[0] == Catch::Approx(0.7));
}

TEST_CASE("unconnected parameter reports zero gradient") {
    GradientTape<double> t;
    auto p = t.param("used", Tensor<double>::vec({2.0}));
    t.param("unused", Tensor<double>::vec({5.0, 5.0}));
    auto loss = t.reduce_sum(t.mul(p, p));
    t.backward(loss);
    auto g = t.grads_by_name();
    CHECK(g.at("unused")[0] == 0.0);
    CHECK(g.at("unused")[1] == 0.0);
    CHECK(g.at("used")[0] == 4.0);
}

TEST_CASE("non-scalar loss rejected") {
    GradientTape<double> t;
    auto p = t.param("p", Tensor<double>::vec({1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(p), ConfigError);
}

TEST_CASE("non-finite results rejected") {
    GradientTape<double> t;
    auto a = t.constant(Tensor<double>::vec({1.0}));
    auto z = t.constant(Tensor<double>::vec({0.0}));
    CHECK_THROWS_AS(t.div(a, z), NumericError);
}

TEST_CASE("forward pass is deterministic") {
    auto run = [] {
        GradientTape<double> t;
        Rng rng(42);
        Tensor<double> m({8, 8});
        for (auto& v : m.data) v = rng.uniform(-1, 1);
        auto x = t.constant(m);
        auto y = t.softmax_rows(t.matmul(x, x, false, true));
        return t.value(t.reduce_sum(y)).item();
    };
    const double a = run(), b = run();
    CHECK(a == b);
}

TEST_CASE("every op matches central finite differences") {
    // One composite function exercising the whole op set.
    Rng rng(123);
    testutil::ParamSet params;
    auto randt = [&](std::vector<std::size_t> shape) {
        Tensor<double> m(shape);
        for (auto& v : m.data) v = rng.uniform(-0.9, 0.9);
        return m;
    };
    params["x"] = randt({4, 6});
    params["w"] = randt({6, 5});
    params["b"] = randt({5});
    params["gamma"] = randt({5});
    params["beta"] = randt({5});
    params["s"] = Tensor<double>::scalar(0.8);
    params["col"] = randt({4, 1});
    for (auto& v : params["col"].data) v += 2.0;  // keep the divisor away from zero

    testutil::LossBuilder build = [&params](GradientTape<double>& t) {
        const auto v = testutil::register_all(t, params);
        auto h = t.add_row_bias(t.matmul(v.at("x"), v.at("w")), v.at("b"));
        h = t.layernorm_rows(h, v.at("gamma"), v.at("beta"));
        auto act = t.add(t.sin(h), t.mul(t.cos(h), t.exp(t.scale(h, 0.3))));
        auto sm = t.softmax_rows(act);
        auto joined = t.concat_cols({sm, act});
        auto part = t.slice_cols(joined, 2, 9);
        part = t.slice_rows(part, 0, 3);
        auto gathered = t.gather_rows(part, {2, 0, 0, 1});
        auto padded = t.pad_rows(gathered, 2);
        auto reshaped = t.reshape(padded, {3, 14});
        auto scaled = t.smul(v.at("s"), reshaped);
        auto ratio = t.div(t.add(scaled, t.exp(t.scale(scaled, 0.1))),
                           t.add(t.mul(scaled, scaled), t.constant(Tensor<double>({3, 14}, 1.5))));
        auto brought = t.div_by_col(t.slice_rows(ratio, 0, 3),
                                    t.gather_rows(v.at("col"), {0, 1, 2}));
        return t.add(t.reduce_sum(brought), t.reduce_mean(t.sub(ratio, scaled)));
    };

    auto res = testutil::check_gradients(params, build, 60, rng);
    INFO("worst entry: " << res.worst);
    CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("gather accumulates duplicate rows") {
    GradientTape<double> t;
    auto p = t.param("p", Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
    auto g = t.gather_rows(p, {0, 0, 1});
    t.backward(t.reduce_sum(g));
    CHECK(t.grads_by_name().at("p")(0, 0) == 2.0);
    CHECK(t.grads_by_name().at("p")(1, 0) == 1.0);
}
