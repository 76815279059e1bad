#include <doctest.h>

#include <cmath>
#include <random>

#include "fieldlens/error.hpp"
#include "fieldlens/nn.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace fieldlens;

namespace {

ModelSpec linear_model(std::size_t in, std::size_t out, std::vector<double> w, std::vector<double> b) {
    ModelSpec m;
    m.input.shape = {in};
    m.layers.emplace_back(Linear{in, out, std::move(w), std::move(b)});
    for (std::size_t c = 0; c < out; ++c) m.output.labels.push_back("c" + std::to_string(c));
    return m;
}

ModelSpec velocity_architecture(std::uint64_t seed) {
    const std::vector<std::size_t> widths{3, 80, 40, 10, 2};
    auto m = init_dense_model(widths, Tanh{}, seed);
    m.output.labels = {"below", "above"};
    return m;
}

}  // namespace

TEST_CASE("forward basics") {
    auto ident = linear_model(2, 2, {1, 0, 0, 1}, {0, 0});
    CHECK(forward(ident, TensorND({2}, {3.5, -2})).values == std::vector<double>{3.5, -2});

    ModelSpec tanh_only;
    tanh_only.input.shape = {3};
    tanh_only.layers = {Tanh{}};
    tanh_only.output.labels = {"a", "b", "c"};
    CHECK(forward(tanh_only, TensorND({3})).values == std::vector<double>{0, 0, 0});

    auto soft = softmax(TensorND({2}, {0, 0}));
    CHECK(soft.values[0] == 0.5);
    CHECK(soft.values[1] == 0.5);
}

TEST_CASE("forward accepts a leading batch axis and names the failing layer") {
    auto m = linear_model(3, 2, {1, 0, 0, 0, 1, 0}, {0, 0});
    m.layers.emplace_back(Tanh{});
    auto out = forward(m, TensorND({4, 3}));
    CHECK(out.shape == std::vector<std::size_t>{4, 2});
    CHECK_THROWS_AS(forward(m, TensorND({4, 2})), ShapeError);

    ModelSpec broken = m;
    broken.layers.emplace_back(Linear{5, 1, std::vector<double>(5), {0}});
    try {
        infer_output_shape(broken, broken.input.shape);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(e.layer() == 2);
    }
}

TEST_CASE("softmax rows sum to one and preserve argmax") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 20.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = 2 + rng() % 6;
        TensorND logits({3, c});
        for (auto& v : logits.values) v = z(rng);
        if (trial % 10 == 0) logits.values[1] = logits.values[0];  // ties
        const auto p = softmax(logits);
        for (std::size_t r = 0; r < 3; ++r) {
            std::span<const double> pr(p.values.data() + r * c, c), zr(logits.values.data() + r * c, c);
            double sum = 0.0;
            for (double v : pr) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
            CHECK(argmax(pr) == argmax(zr));
        }
    }
    CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
}

TEST_CASE("cross entropy closed forms") {
    const std::vector<std::size_t> t0{0};
    auto a = cross_entropy_loss(TensorND({1, 2}, {0, 0}), t0);
    CHECK(a.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(a.loss == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(a.grad_logits.values[0] == doctest::Approx(-0.5));
    CHECK(a.grad_logits.values[1] == doctest::Approx(0.5));

    auto b = cross_entropy_loss(TensorND({1, 2}, {1, -1}), t0);
    CHECK(b.loss == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));
    CHECK(b.loss == doctest::Approx(0.126928).epsilon(1e-5));

    const std::vector<std::size_t> bad{2};
    CHECK_THROWS_AS(cross_entropy_loss(TensorND({1, 2}, {0, 0}), bad), PreconditionError);
}

TEST_CASE("backward matches finite differences") {
    SUBCASE("Linear(1->1) then Linear(1->2)") {
        ModelSpec m = linear_model(1, 1, {1}, {0});
        m.layers.emplace_back(Linear{1, 2, {0.3, -0.7}, {0.1, 0.2}});
        m.output.labels = {"a", "b"};
        TensorND X({3, 1}, {0.5, -1.0, 2.0});
        const std::vector<std::size_t> y{0, 1, 1};
        const auto analytic = pack_gradients(backward(m, X, y));
        const auto numeric = testing::finite_difference_gradient(m, X, y);
        CHECK(testing::max_relative_error(analytic, numeric) < 1e-6);
    }
    SUBCASE("random 3->4->2 tanh net") {
        std::mt19937_64 rng(11);
        const std::vector<std::size_t> widths{3, 4, 2};
        ModelSpec m = init_dense_model(widths, Tanh{}, 5);
        m.output.labels = {"a", "b"};
        TensorND X({6, 3});
        std::normal_distribution<double> n(0.0, 1.0);
        for (auto& v : X.values) v = n(rng);
        const std::vector<std::size_t> y{0, 1, 1, 0, 1, 0};
        const auto analytic = pack_gradients(backward(m, X, y));
        const auto numeric = testing::finite_difference_gradient(m, X, y);
        CHECK(testing::max_relative_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("zero input batch: bias gradients are softmax-onehot averages, weight gradients zero") {
    auto m = linear_model(2, 2, {0.5, -1, 2, 0.25}, {0.3, -0.3});
    TensorND X({2, 2});
    const std::vector<std::size_t> y{0, 1};
    auto g = backward(m, X, y);
    REQUIRE(g.linear.size() == 1);
    for (double w : g.linear[0].weight) CHECK(w == 0.0);
    const double p0 = 1.0 / (1.0 + std::exp(-0.6));
    // Average of (p - onehot(0)) and (p - onehot(1)) for identical rows p.
    CHECK(g.linear[0].bias[0] == doctest::Approx(p0 - 0.5).epsilon(1e-14));
    CHECK(g.linear[0].bias[1] == doctest::Approx((1.0 - p0) - 0.5).epsilon(1e-14));
}

TEST_CASE("gradient property on random dense nets") {
    std::mt19937_64 rng(123);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t classes = 2 + rng() % 2;
        auto m = testing::random_dense_model(rng, classes);
        const std::size_t rows = 1 + rng() % 5;
        TensorND X({rows, m.input.shape[0]});
        for (auto& v : X.values) v = n(rng);
        std::vector<std::size_t> y(rows);
        for (auto& t : y) t = rng() % classes;
        const auto analytic = pack_gradients(backward(m, X, y));
        const auto numeric = testing::finite_difference_gradient(m, X, y);
        CHECK(testing::max_relative_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("backward rejects inference-only layers") {
    ModelSpec m;
    m.input.shape = {1, 2, 2};
    m.layers = {Conv2D{1, 1, 1, 1, 0, {1.0}, {0.0}}, Flatten{}, Linear{4, 2, std::vector<double>(8), {0, 0}}};
    m.output.kind = OutputKind::whole_input_classes;
    m.output.labels = {"a", "b"};
    const std::vector<std::size_t> y{0};
    CHECK_THROWS_WITH_AS(backward(m, TensorND({1, 4}), y), doctest::Contains("inference-only"), ModelError);
}

TEST_CASE("adam update rule") {
    SUBCASE("first step from zero") {
        std::vector<double> w{0.0};
        const std::vector<double> g{1.0};
        AdamState s(1, 5e-4);
        adam_step(w, g, s);
        CHECK(s.t == 1);
        CHECK(std::abs(w[0] - (-5e-4 / (1.0 + 1e-8))) < 1e-12);
        CHECK(std::abs(w[0] - (-4.999999950e-4)) < 1e-12);
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        std::vector<double> w{1.5, -2.0};
        const std::vector<double> g{0.0, 0.0};
        AdamState s(2, 5e-4);
        adam_step(w, g, s);
        CHECK(w == std::vector<double>{1.5, -2.0});
    }
    SUBCASE("two steps with constant gradient") {
        std::vector<double> w{0.0};
        const std::vector<double> g{1.0};
        AdamState s(1, 5e-4);
        adam_step(w, g, s);
        adam_step(w, g, s);
        CHECK(std::abs(w[0] - (-9.999999e-4)) < 1e-10);
        CHECK(std::abs(w[0] - 2.0 * (-5e-4 / (1.0 + 1e-8))) < 1e-12);
    }
}

TEST_CASE("split_rows is disjoint, exhaustive and seeded") {
    for (std::size_t n : {2u, 3u, 10u, 57u, 2500u}) {
        auto [tr, va] = split_rows(n, 0.8, 42);
        CHECK(!tr.empty());
        CHECK(!va.empty());
        CHECK(tr.size() + va.size() == n);
        CHECK(std::abs(static_cast<double>(tr.size()) - 0.8 * static_cast<double>(n)) <= 1.0);
        std::vector<std::size_t> all = tr;
        all.insert(all.end(), va.begin(), va.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
        CHECK(split_rows(n, 0.8, 42).first == tr);
    }
    CHECK(split_rows(100, 0.8, 1).first != split_rows(100, 0.8, 2).first);
    CHECK_THROWS_AS(split_rows(1, 0.8, 42), PreconditionError);
}

TEST_CASE("training on a separable toy set lowers the loss and is reproducible") {
    // Ten points split by the sign of x0 + x1.
    TensorND X({10, 2}, {1.0, 0.5, 0.8, 0.9, 0.3, 0.2, 1.2, -0.1, 0.6, 0.6,
                         -1.0, -0.5, -0.8, -0.9, -0.3, -0.2, -1.2, 0.1, -0.6, -0.6});
    const std::vector<std::size_t> y{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    const std::vector<std::size_t> widths{2, 4, 2};
    auto m = init_dense_model(widths, Tanh{}, 7);
    m.output.labels = {"neg", "pos"};
    TrainConfig cfg{200, 5e-3, 0.8, 42};
    auto r = train(m, X, y, cfg);
    REQUIRE(r.history.train_loss.size() == 200);
    REQUIRE(r.history.val_loss.size() == 200);
    CHECK(r.history.train_loss.back() < r.history.train_loss.front());
    auto again = train(m, X, y, cfg);
    CHECK(again.model == r.model);
    CHECK(again.history.train_loss == r.history.train_loss);
    CHECK(r.model.metadata.at("train.seed") == "42");

    TensorND one({1, 2}, {1, 1});
    const std::vector<std::size_t> y1{0};
    CHECK_THROWS_AS(train(m, one, y1, cfg), PreconditionError);
}

TEST_CASE("published configurations and parameter counts") {
    CHECK(parameter_count(velocity_architecture(1)) == 3992);
    const std::vector<std::size_t> pressure{2500, 50, 20, 2};
    CHECK(parameter_count(init_dense_model(pressure, Tanh{}, 1)) == 126112);

    auto m = velocity_architecture(9);
    const std::vector<std::size_t> widths{3, 80, 40, 10, 2};
    std::size_t li = 0;
    for (const auto& layer : m.layers) {
        if (const auto* l = std::get_if<Linear>(&layer)) {
            const double bound = std::sqrt(1.0 / static_cast<double>(l->in));
            CHECK(l->in == widths[li]);
            CHECK(l->out == widths[li + 1]);
            for (double w : l->weight) CHECK(std::abs(w) <= bound);
            ++li;
        } else {
            CHECK(std::holds_alternative<Tanh>(layer));
        }
    }
    CHECK(li == 4);
}

TEST_CASE("model file round trip") {
    SUBCASE("velocity architecture is value-exact") {
        auto m = velocity_architecture(17);
        m.metadata["note"] = "x";
        const auto text = save_model(m);
        CHECK(load_model(text) == m);
        CHECK(save_model(load_model(text)) == text);
    }
    SUBCASE("random models") {
        std::mt19937_64 rng(5);
        for (int i = 0; i < 20; ++i) {
            auto m = testing::random_dense_model(rng, 2 + rng() % 3);
            CHECK(load_model(save_model(m)) == m);
        }
    }
    SUBCASE("convolutional stand-in with normalization") {
        ModelSpec m;
        m.input = {{3, 4, 4}, 1.0 / 255.0, {0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, ChannelPolicy::grey_to_rgb};
        std::vector<double> w(2 * 3 * 3 * 3);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.01 * static_cast<double>(i) - 0.2;
        m.layers = {Conv2D{3, 2, 3, 1, 1, w, {0.1, -0.1}}, Relu{}, MaxPool2D{2, 2}};
        m.output.labels = {"bg", "fg"};
        m.output.colors = {{0, 0, 0}, {255, 0, 0}};
        CHECK(load_model(save_model(m)) == m);
    }
}

TEST_CASE("model file errors") {
    auto m = velocity_architecture(3);
    const auto text = save_model(m);
    CHECK_THROWS_AS(load_model(text.substr(0, text.size() / 2)), ModelError);

    auto bad_labels = m;
    bad_labels.output.labels = {"a", "b", "c"};
    CHECK_THROWS_WITH_AS(validate_model(bad_labels), doctest::Contains("3 labels"), ModelError);
    CHECK_THROWS_AS(load_model(save_model(bad_labels)), ModelError);

    auto wrong_version = m;
    wrong_version.format_version = 2;
    CHECK_THROWS_WITH_AS(load_model(save_model(wrong_version)), doctest::Contains("format_version"), ModelError);

    std::string missing = text;
    missing.replace(missing.find("\"output_spec\""), 13, "\"output_specX\"");
    CHECK_THROWS_AS(load_model(missing), ModelError);

    std::string short_weights = save_model(linear_model(2, 1, {1, 2}, {0}));
    short_weights.replace(short_weights.find("[1,2]"), 5, "[1]");
    CHECK_THROWS_AS(load_model(short_weights), ModelError);
}

TEST_CASE("conv2d and maxpool2d forward by hand") {
    ModelSpec m;
    m.input.shape = {1, 3, 3};
    m.layers = {Conv2D{1, 1, 2, 1, 0, {1, 1, 1, 1}, {0.5}}};
    m.output.labels = {"only"};
    auto y = forward(m, TensorND({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK(y.shape == std::vector<std::size_t>{1, 2, 2});
    CHECK(y.values == std::vector<double>{12.5, 16.5, 24.5, 28.5});

    m.layers = {MaxPool2D{2, 1}};
    y = forward(m, TensorND({1, 3, 3}, {1, 2, 3, 4, 9, 6, 7, 8, 5}));
    CHECK(y.values == std::vector<double>{9, 9, 9, 9});

    // Padding 1 with a 3x3 identity kernel keeps the image.
    std::vector<double> k(9, 0.0);
    k[4] = 1.0;
    m.layers = {Conv2D{1, 1, 3, 1, 1, k, {0.0}}};
    y = forward(m, TensorND({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK(y.values == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
}
