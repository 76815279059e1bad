#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fieldlens/error.hpp"
#include "fieldlens/trainer.hpp"

using namespace fieldlens;

namespace {

std::vector<double> axis(std::size_t n) {
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    return a;
}

NamedSnapshot velocity_snapshot(std::mt19937_64& rng, std::size_t nx, std::size_t ny, double scale, std::string id) {
    std::vector<double> v(nx * ny * 3, 0.0);
    std::normal_distribution<double> n(0.0, scale);
    for (std::size_t p = 0; p < nx * ny; ++p) {
        v[3 * p] = n(rng);
        v[3 * p + 1] = n(rng);
    }
    return {std::move(id), RectilinearDataset(axis(nx), axis(ny), {0}, {DataArray("velocity", 3, v)})};
}

NamedSnapshot pressure_snapshot(std::vector<double> p, std::string id) {
    return {std::move(id), RectilinearDataset(axis(50), axis(50), {0}, {DataArray("pressure", 1, std::move(p))})};
}

}  // namespace

TEST_CASE("velocity dataset") {
    std::mt19937_64 rng(8);
    SUBCASE("one 50x50 snapshot gives 2500 rows of 3 features") {
        const auto d = build_velocity_dataset({velocity_snapshot(rng, 50, 50, 0.02, "a")}, 0.01);
        CHECK(d.X.shape == std::vector<std::size_t>{2500, 3});
        CHECK(d.rows() == 2500);
        CHECK(d.snapshot_ids == std::vector<std::string>{"a"});
        CHECK(d.rule.find("0.01") != std::string::npos);
    }
    SUBCASE("all-zero snapshot is all class 0") {
        NamedSnapshot z{"z", RectilinearDataset(axis(4), axis(3), {0}, {DataArray("velocity", 3, std::vector<double>(36))})};
        const auto d = build_velocity_dataset({z}, 0.01);
        CHECK(d.count(0) == 12);
        CHECK(d.count(1) == 0);
    }
    SUBCASE("labels match a brute-force recount") {
        std::vector<NamedSnapshot> snaps;
        for (int i = 0; i < 5; ++i) snaps.push_back(velocity_snapshot(rng, 7 + i, 5, 0.01, "s" + std::to_string(i)));
        const auto d = build_velocity_dataset(snaps, 0.01);
        std::size_t row = 0, ones = 0;
        for (const auto& s : snaps) {
            const auto& a = *s.grid.find_array("velocity");
            for (std::size_t p = 0; p < a.tuples(); ++p, ++row) {
                const double m = std::sqrt(a.at(p, 0) * a.at(p, 0) + a.at(p, 1) * a.at(p, 1) + a.at(p, 2) * a.at(p, 2));
                CHECK(d.y[row] == (m > 0.01 ? 1u : 0u));
                CHECK(d.X.values[row * 3] == a.at(p, 0));
                ones += m > 0.01;
            }
        }
        CHECK(row == d.rows());
        CHECK(d.count(1) == ones);
    }
    SUBCASE("labelling is deterministic") {
        const auto s = velocity_snapshot(rng, 9, 9, 0.02, "d");
        const auto a = build_velocity_dataset({s}, 0.01), b = build_velocity_dataset({s}, 0.01);
        CHECK(a.X == b.X);
        CHECK(a.y == b.y);
    }
    SUBCASE("missing or malformed arrays") {
        NamedSnapshot p = pressure_snapshot(std::vector<double>(2500), "p");
        CHECK_THROWS_WITH_AS(build_velocity_dataset({p}, 0.01), doctest::Contains("velocity"), PreconditionError);
    }
}

TEST_CASE("pressure dataset") {
    std::vector<double> low(2500, 1.0), high(2500, 0.0);
    low[17] = 4.9;
    high[2499] = 5.0000001;
    std::vector<double> edge(2500, 5.0);
    const auto d = build_pressure_dataset(
        {pressure_snapshot(low, "low"), pressure_snapshot(high, "high"), pressure_snapshot(edge, "edge")}, 5.0);
    CHECK(d.X.shape == std::vector<std::size_t>{3, 2500});
    CHECK(d.y == std::vector<std::size_t>{0, 1, 0});
    CHECK(d.X.values[17] == 4.9);
    CHECK(d.snapshot_ids.size() == 3);

    NamedSnapshot small{"small", RectilinearDataset(axis(3), axis(3), {0}, {DataArray("pressure", 1, std::vector<double>(9))})};
    CHECK_THROWS_WITH_AS(build_pressure_dataset({small}, 5.0), doctest::Contains("2500"), PreconditionError);
}

TEST_CASE("concat") {
    std::mt19937_64 rng(2);
    const auto a = build_velocity_dataset({velocity_snapshot(rng, 3, 3, 0.02, "a")}, 0.01);
    const auto b = build_velocity_dataset({velocity_snapshot(rng, 4, 3, 0.02, "b")}, 0.01);
    const auto c = concat(a, b);
    CHECK(c.rows() == 21);
    CHECK(c.X.shape == std::vector<std::size_t>{21, 3});
    CHECK(c.snapshot_ids == std::vector<std::string>{"a", "b"});
    CHECK(std::equal(b.X.values.begin(), b.X.values.end(), c.X.values.begin() + 27));
    const auto p = build_pressure_dataset({pressure_snapshot(std::vector<double>(2500), "p")}, 5.0);
    CHECK_THROWS_AS(concat(a, p), PreconditionError);
}

TEST_CASE("preset architectures") {
    std::mt19937_64 rng(3);
    const auto vel = build_velocity_dataset({velocity_snapshot(rng, 10, 10, 0.02, "v")}, 0.01);
    VelocityPreset vp;
    vp.epochs = 3;
    const auto v = train_velocity_model(vel, vp);
    CHECK(parameter_count(v.model) == 3992);
    REQUIRE(v.model.layers.size() == 7);
    CHECK(std::holds_alternative<Tanh>(v.model.layers[1]));
    CHECK(std::get<Linear>(v.model.layers[0]).out == 80);
    CHECK(std::get<Linear>(v.model.layers[2]).out == 40);
    CHECK(std::get<Linear>(v.model.layers[4]).out == 10);
    CHECK(std::get<Linear>(v.model.layers[6]).out == 2);
    CHECK(v.model.output.kind == OutputKind::per_point_classes);
    CHECK(v.model.output.labels == std::vector<std::string>{"below", "above"});
    CHECK(std::stod(v.model.metadata.at("train.learning_rate")) == 5e-4);
    CHECK(v.model.metadata.at("train.seed") == "42");
    CHECK(v.history.train_loss.size() == 3);
    CHECK(v.train_rows.size() == 80);
    CHECK(v.val_rows.size() == 20);

    std::vector<NamedSnapshot> ps;
    for (int i = 0; i < 10; ++i) ps.push_back(pressure_snapshot(std::vector<double>(2500, i), "p" + std::to_string(i)));
    PressurePreset pp;
    pp.epochs = 2;
    const auto p = train_pressure_model(build_pressure_dataset(ps, 5.0), pp);
    CHECK(parameter_count(p.model) == 126112);
    CHECK(p.model.output.kind == OutputKind::whole_input_classes);
    CHECK(p.model.output.labels == std::vector<std::string>{"Low", "High"});
    CHECK(p.model.metadata.at("data.class_counts") == "6,4");

    CHECK_THROWS_AS(train_pressure_model(vel, pp), PreconditionError);
    CHECK_THROWS_AS(train_velocity_model(build_pressure_dataset(ps, 5.0), vp), PreconditionError);
}

TEST_CASE("training is deterministic for a seed and the split is a partition") {
    std::mt19937_64 rng(4);
    const auto d = build_velocity_dataset({velocity_snapshot(rng, 11, 7, 0.02, "v")}, 0.01);
    VelocityPreset vp;
    vp.epochs = 5;
    const auto a = train_velocity_model(d, vp), b = train_velocity_model(d, vp);
    CHECK(a.model == b.model);
    CHECK(a.history.train_loss == b.history.train_loss);
    std::set<std::size_t> all(a.train_rows.begin(), a.train_rows.end());
    for (auto r : a.val_rows) CHECK(all.insert(r).second);
    CHECK(all.size() == d.rows());
    CHECK(std::abs(static_cast<double>(a.train_rows.size()) - 0.8 * static_cast<double>(d.rows())) <= 1.0);
    vp.seed = 7;
    CHECK_FALSE(train_velocity_model(d, vp).model == a.model);
}

TEST_CASE("a short run learns a separable threshold") {
    std::mt19937_64 rng(5);
    std::vector<NamedSnapshot> snaps;
    for (int i = 0; i < 4; ++i) snaps.push_back(velocity_snapshot(rng, 20, 20, 1.0, "s" + std::to_string(i)));
    const auto d = build_velocity_dataset(snaps, 1.0);
    VelocityPreset vp;
    vp.epochs = 300;
    vp.learning_rate = 1e-2;
    const auto r = train_velocity_model(d, vp);
    CHECK(r.history.train_loss.back() < r.history.train_loss.front());
    CHECK(accuracy(r.model, d, r.val_rows) > 0.9);
}

TEST_CASE("accuracy") {
    ModelSpec m;
    m.input.shape = {1};
    m.layers = {Linear{1, 2, {-1, 1}, {0, 0}}};
    m.output.labels = {"a", "b"};
    const TensorND X({4, 1}, {-2, -1, 1, 2});
    const std::vector<std::size_t> y{0, 0, 1, 0};
    CHECK(accuracy(m, X, y) == 0.75);
    CHECK_THROWS_AS(accuracy(m, TensorND({0, 1}), std::vector<std::size_t>{}), PreconditionError);
}

TEST_CASE("pressure corpus configurations") {
    const auto cs = pressure_corpus_configs();
    REQUIRE(cs.size() == 12);
    std::set<std::pair<double, double>> seen;
    for (const auto& c : cs) {
        seen.insert({c.re, c.lid_velocity});
        CHECK(c.nx == 50);
        CHECK(c.ny == 50);
    }
    CHECK(seen.size() == 12);
    CHECK(seen.count({1000.0, -1.0}) == 1);
    CHECK(corpus_tag(cs.front()) == "re100_lid-0.5");
}

TEST_CASE("history csv") {
    TrainHistory h;
    h.train_loss = {0.5, 0.25};
    h.val_loss = {0.75, 0.125};
    CHECK(history_csv(h) == "epoch,train_loss,val_loss\n1,0.5,0.75\n2,0.25,0.125\n");
}
