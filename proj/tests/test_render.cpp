#include <doctest.h>

#include <algorithm>
#include <random>

#include "fieldlens/error.hpp"
#include "fieldlens/render.hpp"
#include "fieldlens/vtk_io.hpp"

using namespace fieldlens;

namespace {

std::vector<double> rgb(const DataArray& a, std::size_t i) {
    const auto t = a.tuple(i);
    return {t.begin(), t.end()};
}

}  // namespace

TEST_CASE("greyscale endpoints and midpoint") {
    const auto& grey = builtin_transfer_function("greyscale");
    const DataArray v("s", 1, {0.0, 10.0, 5.0, -3.0, 99.0});
    const auto c = color_map(v, grey, {0.0, 10.0});
    CHECK(c.components() == 3);
    CHECK(rgb(c, 0) == std::vector<double>{0, 0, 0});
    CHECK(rgb(c, 1) == std::vector<double>{255, 255, 255});
    CHECK(rgb(c, 2) == std::vector<double>{128, 128, 128});  // 127.5 rounds up
    CHECK(rgb(c, 3) == std::vector<double>{0, 0, 0});        // clamped
    CHECK(rgb(c, 4) == std::vector<double>{255, 255, 255});
    CHECK_THROWS_AS(color_map(v, grey, {1.0, 1.0}), PreconditionError);
}

TEST_CASE("coolwarm anchors are exact") {
    const auto& cw = builtin_transfer_function("coolwarm");
    const auto c = color_map(DataArray("s", 1, {0.0, 0.5, 1.0}), cw, {0.0, 1.0});
    CHECK(rgb(c, 0) == std::vector<double>{59, 76, 192});
    CHECK(rgb(c, 1) == std::vector<double>{221, 221, 221});
    CHECK(rgb(c, 2) == std::vector<double>{180, 4, 38});
    CHECK_THROWS_AS(builtin_transfer_function("viridis"), PreconditionError);
}

TEST_CASE("transfer function validation") {
    CHECK_THROWS_AS(TransferFunction("x", {{0.0, {0, 0, 0}}}), PreconditionError);
    CHECK_THROWS_AS(TransferFunction("x", {{0.1, {0, 0, 0}}, {1.0, {1, 1, 1}}}), PreconditionError);
    CHECK_THROWS_AS(TransferFunction("x", {{0.0, {0, 0, 0}}, {0.0, {0, 0, 0}}, {1.0, {1, 1, 1}}}), PreconditionError);
    CHECK_THROWS_AS(TransferFunction("x", {{0.0, {0, 0, 300}}, {1.0, {1, 1, 1}}}), PreconditionError);
}

TEST_CASE("color_map is monotone per channel on a monotone transfer function") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<double> v(500);
    for (auto& x : v) x = u(rng);
    std::sort(v.begin(), v.end());
    const auto c = color_map(DataArray("s", 1, v), builtin_transfer_function("greyscale"), {-4, 4});
    for (std::size_t i = 1; i < v.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) CHECK(c.at(i, k) >= c.at(i - 1, k));
    }
}

TEST_CASE("rendering") {
    SUBCASE("1x1 grid renders a solid image") {
        ImageDataset g({1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("s", 1, {3.0})});
        RenderOptions o;
        o.width = 4;
        o.height = 3;
        const auto img = render_image(g, o);
        CHECK(img.dims() == Dims3{4, 3, 1});
        for (double x : img.point_arrays()[0].values()) CHECK(x == 0.0);
        CHECK(std::ranges::equal(read_png(render_png(g, o)).point_arrays()[0].values(), img.point_arrays()[0].values()));
    }
    SUBCASE("constant field gives a uniform image") {
        ImageDataset g({3, 2, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("s", 1, std::vector<double>(6, 7.0))});
        const auto img = render_image(g, {});
        const auto& px = img.point_arrays()[0];
        for (std::size_t i = 1; i < px.tuples(); ++i) CHECK(rgb(px, i) == rgb(px, 0));
    }
    SUBCASE("segmentation colours render verbatim") {
        const DataArray color("color", 3, {255, 0, 0, 0, 255, 0});
        RectilinearDataset g({0, 1}, {0}, {0}, {color});
        const auto img = render_image(g, {});
        CHECK(std::ranges::equal(img.point_arrays()[0].values(), color.values()));
    }
    SUBCASE("velocity via magnitude equals magnitude then colormap") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0, 1);
        std::vector<double> vel(30 * 3);
        for (auto& x : vel) x = n(rng);
        std::vector<double> xs, ys;
        for (int i = 0; i < 6; ++i) xs.push_back(i * i * 0.1);
        for (int j = 0; j < 5; ++j) ys.push_back(j * 0.3);
        RectilinearDataset g(xs, ys, {0}, {DataArray("velocity", 3, vel)});
        RectilinearDataset m(xs, ys, {0}, {magnitude(*g.find_array("velocity"))});
        RenderOptions o;
        o.width = 37;
        o.height = 23;
        o.transfer_function = "coolwarm";
        CHECK(render_png(g, o) == render_png(m, o));
    }
    SUBCASE("non-uniform coordinates pick the nearest point") {
        // x = 0, 1, 10: pixel centres over [0,10] at 0.5..9.5 map to 0 for x<=0.5, 1 up to 5.5, then 2.
        RectilinearDataset g({0, 1, 10}, {0}, {0}, {DataArray("s", 1, {0, 1, 2})});
        RenderOptions o;
        o.width = 10;
        o.height = 1;
        o.range = ValueRange{0, 2};
        const auto img = render_image(g, o);
        std::vector<double> got;
        for (std::size_t i = 0; i < 10; ++i) got.push_back(img.point_arrays()[0].at(i, 0));
        CHECK(got == std::vector<double>{0, 128, 128, 128, 128, 128, 255, 255, 255, 255});
    }
    SUBCASE("errors") {
        RectilinearDataset g3({0, 1}, {0, 1}, {0, 1}, {DataArray("s", 1, std::vector<double>(8))});
        CHECK_THROWS_AS(render_image(g3, {}), UnsupportedError);
        RectilinearDataset g({0, 1}, {0}, {0}, {DataArray("s", 1, {0, 1})});
        RenderOptions o;
        o.array = "missing";
        CHECK_THROWS_AS(render_image(g, o), PreconditionError);
    }
    SUBCASE("deterministic bytes") {
        ImageDataset g({5, 5, 1}, {0, 0, 0}, {1, 1, 1}, {DataArray("s", 1, std::vector<double>(25, 1.0))});
        CHECK(render_png(g, {}) == render_png(g, {}));
    }
}
