#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "spv/error.hpp"
#include "spv/implant.hpp"

using namespace spv;
using namespace spv::implant;

namespace {

double dist(const retina::RetinalPoint& a, const retina::RetinalPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST(Presets, CountsAndRotations) {
    const auto a2 = device_preset("argus2");
    EXPECT_EQ(a2.electrode_count(), 60);
    EXPECT_EQ(a2.rotation_deg, -45.0);
    EXPECT_EQ(a2.pitch_um, 575.0);
    const auto a3 = device_preset("argus3h");
    EXPECT_EQ(a3.electrode_count(), 160);
    EXPECT_EQ(a3.rotation_deg, 0.0);
    const auto a4 = device_preset("argus4h");
    EXPECT_EQ(a4.electrode_count(), 589);
    EXPECT_EQ(a4.rows, 19);
    EXPECT_EQ(a4.cols, 31);
    for (const auto& n : preset_names()) {
        const auto s = device_preset(n);
        EXPECT_EQ(s.center.x, 0.0);
        EXPECT_EQ(s.center.y, 0.0);
        EXPECT_EQ(make_grid(s).size(), static_cast<std::size_t>(s.electrode_count()));
    }
}

TEST(Presets, UnknownNameIsConfigError) { EXPECT_THROW(device_preset("argus9"), ConfigError); }

TEST(Spec, ValidationRejectsBadValues) {
    ImplantSpec s{"x", 0, 3, 575.0, 0.0, {}};
    EXPECT_THROW(s.validate(), ConfigError);
    s = {"x", 2, 3, 0.0, 0.0, {}};
    EXPECT_THROW(s.validate(), ConfigError);
    s = {"x", 2, 3, 575.0, 91.0, {}};
    EXPECT_THROW(s.validate(), ConfigError);
    s = {"x", 2, 3, 575.0, -90.0, {}};
    EXPECT_NO_THROW(s.validate());
}

TEST(Grid, SingleElectrodeSitsAtCenter) {
    const auto a = make_grid({"one", 1, 1, 575.0, 30.0, {120.0, -40.0}});
    ASSERT_EQ(a.size(), 1u);
    EXPECT_DOUBLE_EQ(a.electrodes[0].x, 120.0);
    EXPECT_DOUBLE_EQ(a.electrodes[0].y, -40.0);
}

TEST(Grid, UnrotatedBoundingBox) {
    const auto a = make_grid({"g", 6, 10, 575.0, 0.0, {}});
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (const auto& e : a.electrodes) {
        xmin = std::min(xmin, e.x);
        xmax = std::max(xmax, e.x);
        ymin = std::min(ymin, e.y);
        ymax = std::max(ymax, e.y);
    }
    EXPECT_NEAR(xmax - xmin, 5175.0, 1e-9);
    EXPECT_NEAR(ymax - ymin, 2875.0, 1e-9);
}

TEST(Grid, RowMajorTopLeftFirst) {
    const auto a = make_grid({"g", 3, 4, 100.0, 0.0, {}});
    EXPECT_DOUBLE_EQ(a.electrodes[0].x, -150.0);
    EXPECT_DOUBLE_EQ(a.electrodes[0].y, 100.0);
    EXPECT_DOUBLE_EQ(a.electrodes[1].x, -50.0);
    EXPECT_DOUBLE_EQ(a.electrodes[4].y, 0.0);
    EXPECT_DOUBLE_EQ(a.electrodes[11].x, 150.0);
    EXPECT_DOUBLE_EQ(a.electrodes[11].y, -100.0);
}

TEST(Grid, NeighboursArePitchApart) {
    for (const auto& n : preset_names()) {
        const auto a = make_grid(device_preset(n));
        const int rows = a.spec.rows, cols = a.spec.cols;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const auto& e = a.electrodes[r * cols + c];
                if (c + 1 < cols) {
                    EXPECT_NEAR(dist(e, a.electrodes[r * cols + c + 1]), 575.0, 1e-6);
                }
                if (r + 1 < rows) {
                    EXPECT_NEAR(dist(e, a.electrodes[(r + 1) * cols + c]), 575.0, 1e-6);
                }
            }
    }
}

TEST(Grid, RotationPreservesPairwiseDistances) {
    for (double rot : {-45.0, 17.0, 90.0}) {
        const auto flat = make_grid({"g", 6, 10, 575.0, 0.0, {}});
        const auto turned = make_grid({"g", 6, 10, 575.0, rot, {}});
        double worst = 0.0;
        for (std::size_t i = 0; i < flat.size(); ++i)
            for (std::size_t j = i + 1; j < flat.size(); ++j)
                worst = std::max(worst, std::abs(dist(flat.electrodes[i], flat.electrodes[j]) -
                                                 dist(turned.electrodes[i], turned.electrodes[j])));
        EXPECT_LT(worst, 1e-6) << rot;
    }
}

TEST(Grid, RotationIsCounterclockwise) {
    const auto a = make_grid({"g", 1, 2, 100.0, 90.0, {}});
    // Before rotation the electrodes are at x = -50 and +50.
    EXPECT_NEAR(a.electrodes[0].x, 0.0, 1e-12);
    EXPECT_NEAR(a.electrodes[0].y, -50.0, 1e-12);
    EXPECT_NEAR(a.electrodes[1].y, 50.0, 1e-12);
}

TEST(Grid, SymmetricUnderHalfTurn) {
    for (const auto& n : preset_names()) {
        const auto a = make_grid(device_preset(n));
        for (const auto& e : a.electrodes) {
            double best = 1e18;
            for (const auto& f : a.electrodes) best = std::min(best, std::hypot(e.x + f.x, e.y + f.y));
            EXPECT_LT(best, 1e-6);
        }
    }
}

TEST(FieldPositions, OrderingAndInverse) {
    const auto a = make_grid(device_preset("argus2"));
    const auto f = electrode_field_positions(a);
    ASSERT_EQ(f.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto r = retina::visual_field_to_retina(f[i]);
        EXPECT_NEAR(r.x, a.electrodes[i].x, 1e-9);
        EXPECT_NEAR(r.y, a.electrodes[i].y, 1e-9);
    }
}

TEST(FieldPositions, OriginAndFootprint) {
    const auto one = make_grid({"one", 1, 1, 575.0, 0.0, {}});
    EXPECT_EQ(electrode_field_positions(one)[0].az, 0.0);
    const auto f = electrode_field_positions(make_grid({"g", 6, 10, 575.0, 0.0, {}}));
    double az_lo = 1e9, az_hi = -1e9, el_lo = 1e9, el_hi = -1e9;
    for (const auto& p : f) {
        az_lo = std::min(az_lo, p.az);
        az_hi = std::max(az_hi, p.az);
        el_lo = std::min(el_lo, p.el);
        el_hi = std::max(el_hi, p.el);
    }
    EXPECT_NEAR(az_hi - az_lo, 18.48, 0.01);
    EXPECT_NEAR(el_hi - el_lo, 10.27, 0.01);
}

TEST(FieldPositions, OutsideWindowIsDomainError) {
    const auto a = make_grid({"far", 1, 1, 575.0, 0.0, {14900.0 + 200.0, 0.0}});
    EXPECT_THROW(electrode_field_positions(a), DomainError);
}

TEST(DeviceJson, RoundTripAndStrictKeys) {
    const ImplantSpec s{"custom", 4, 5, 400.0, 12.5, {100.0, -200.0}};
    const auto back = spec_from_json(spec_to_json(s));
    EXPECT_EQ(back.name, s.name);
    EXPECT_EQ(back.rows, 4);
    EXPECT_EQ(back.cols, 5);
    EXPECT_EQ(back.pitch_um, 400.0);
    EXPECT_EQ(back.rotation_deg, 12.5);
    EXPECT_EQ(back.center.x, 100.0);
    EXPECT_EQ(back.center.y, -200.0);
    EXPECT_THROW(spec_from_json(R"({"name":"x","rows":2,"cols":2,"pitch_um":1,"colour":3})"), ConfigError);
    EXPECT_THROW(spec_from_json("not json"), ConfigError);
    EXPECT_THROW(spec_from_json(R"({"name":"x","rows":2,"cols":2,"pitch_um":-1})"), ConfigError);
}

TEST(DeviceJson, ResolveNameOrPath) {
    EXPECT_EQ(resolve_device("argus3h").electrode_count(), 160);
    const std::string path = ::testing::TempDir() + "dev.json";
    {
        std::ofstream f(path);
        f << spec_to_json({"mine", 2, 3, 575.0, 0.0, {}});
    }
    EXPECT_EQ(resolve_device(path).electrode_count(), 6);
    std::remove(path.c_str());
    EXPECT_THROW(resolve_device("no-such-device"), ConfigError);
}
