#include <gtest/gtest.h>

#include <cmath>
#include <iostream>
#include <map>
#include <limits>
#include <numbers>
#include <random>

#include "spv/error.hpp"
#include "spv/parallel.hpp"
#include "spv/percept.hpp"
#include "spv/tasks.hpp"
#include "test_support.hpp"

using namespace spv;
using namespace spv::percept;

namespace {

// Direct evaluation of the sensitivity definition, without the spatial index
// or reach culling of the production path.
double oracle_sensitivity(const retina::AxonBundleSet& bundles, retina::RetinalPoint p, retina::RetinalPoint e,
                          double rho, double lambda) {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t bb = 0, bv = 0;
    for (std::size_t b = 0; b < bundles.size(); ++b) {
        const auto& v = bundles.bundles()[b].vertices;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double d2 = (v[i].x - p.x) * (v[i].x - p.x) + (v[i].y - p.y) * (v[i].y - p.y);
            if (d2 < best_d2 || (d2 == best_d2 && b == bb && i > bv)) {
                best_d2 = d2;
                bb = b;
                bv = i;
            }
        }
    }
    const auto& bundle = bundles.bundles()[bb];
    const double d0 = std::sqrt(best_d2);
    double best = 0.0;
    for (std::size_t k = bv; k < bundle.vertices.size(); ++k) {
        const double len = d0 + bundle.path_length[k] - bundle.path_length[bv];
        const auto& s = bundle.vertices[k];
        const double d2 = (s.x - e.x) * (s.x - e.x) + (s.y - e.y) * (s.y - e.y);
        best = std::max(best, std::exp(-d2 / (2 * rho * rho)) * std::exp(-len * len / (2 * lambda * lambda)));
    }
    return best;
}

std::vector<float> dense(const SparseKernel& k, std::size_t n) {
    std::vector<float> d(n, 0.0f);
    for (const auto& e : k.entries) d[e.pixel] = e.weight;
    return d;
}

struct Env {
    implant::ElectrodeArray array;
    RenderGrid grid;
    retina::AxonBundleSet bundles;
};

const Env& argus2_env(int size) {
    static std::map<int, Env> cache;
    if (auto it = cache.find(size); it != cache.end()) return it->second;
    Env env;
    env.array = implant::make_grid(implant::device_preset("argus2"));
    env.grid = default_grid(env.array, size);
    env.bundles = bundles_for_grid(env.grid);
    return cache.emplace(size, std::move(env)).first->second;
}

}  // namespace

TEST(Params, ValidateRejectsNonPositive) {
    EXPECT_THROW((AxonMapParams{0.0, 100.0}.validate()), ConfigError);
    EXPECT_THROW((AxonMapParams{100.0, -1.0}.validate()), ConfigError);
    EXPECT_THROW((AxonMapParams{std::numeric_limits<double>::infinity(), 1.0}.validate()), ConfigError);
    EXPECT_NO_THROW((AxonMapParams{1.0, 1.0}.validate()));
}

TEST(Grid, CornersAndSpacing) {
    const RenderGrid g(5, 3, {-2.0, 2.0, -1.0, 1.0});
    EXPECT_EQ(g.size(), 15u);
    EXPECT_DOUBLE_EQ(g.field_at(0).az, -2.0);
    EXPECT_DOUBLE_EQ(g.field_at(0).el, 1.0);
    EXPECT_DOUBLE_EQ(g.field_at(14).az, 2.0);
    EXPECT_DOUBLE_EQ(g.field_at(14).el, -1.0);
    EXPECT_DOUBLE_EQ(g.step_az(), 1.0);
    EXPECT_DOUBLE_EQ(g.step_el(), 1.0);
    const auto [c, r] = g.to_pixel({0.5, 0.0});
    EXPECT_DOUBLE_EQ(c, 2.5);
    EXPECT_DOUBLE_EQ(r, 1.0);
    EXPECT_DOUBLE_EQ(g.retinal_at(0).x, -560.0);
    EXPECT_DOUBLE_EQ(g.retinal_at(0).y, -280.0);
    EXPECT_THROW(RenderGrid(1, 5, {-1, 1, -1, 1}), ConfigError);
    EXPECT_THROW(RenderGrid(5, 5, {1, 1, -1, 1}), ConfigError);
}

TEST(Grid, DefaultWindowCoversFootprintWithMargin) {
    for (const auto& n : implant::preset_names()) {
        const auto a = implant::make_grid(implant::device_preset(n));
        const auto w = footprint_window(a);
        EXPECT_NEAR(w.az_max - w.az_min, w.el_max - w.el_min, 1e-9);
        const auto f = implant::electrode_field_positions(a);
        double half = 0;
        for (const auto& p : f) {
            EXPECT_TRUE(w.contains(p));
            half = std::max({half, std::abs(p.az), std::abs(p.el)});
        }
        EXPECT_NEAR(0.5 * (w.az_max - w.az_min), 1.4 * half, 1e-9);
    }
}

TEST(Kernels, InvariantsHoldForEveryKernel) {
    const auto ks = spv::testing::shared_kernels("argus2", 300, 1000, 101);
    ASSERT_EQ(ks->kernels().size(), 60u);
    for (const auto& k : ks->kernels()) {
        EXPECT_NO_THROW(validate_kernel(k, ks->grid().size()));
        EXPECT_FALSE(k.entries.empty());
        for (const auto& e : k.entries) {
            EXPECT_GE(e.weight, kSparsityThreshold);
            EXPECT_LE(e.weight, 1.0f);
        }
    }
}

TEST(Kernels, ValidateNamesTheViolatedInvariant) {
    SparseKernel k{3, {{5, 0.5f}, {4, 0.5f}}};
    try {
        validate_kernel(k, 100);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("sorted"), std::string::npos);
    }
    k.entries = {{200, 0.5f}};
    EXPECT_THROW(validate_kernel(k, 100), ValidationError);
    k.entries = {{1, 1.5f}};
    EXPECT_THROW(validate_kernel(k, 100), ValidationError);
    k.entries = {{1, 1e-4f}};
    EXPECT_THROW(validate_kernel(k, 100), ValidationError);
    k.entries = {{1, 0.5f}, {1, 0.5f}};
    EXPECT_THROW(validate_kernel(k, 100), ValidationError);
}

TEST(Kernels, MatchTheDirectDefinition) {
    const auto& env = argus2_env(61);
    const AxonMapParams params{300, 1000};
    const auto ks = precompute_all(env.array, params, env.grid, env.bundles, 1);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t e = rng() % env.array.size();
        const std::size_t p = rng() % env.grid.size();
        const double want = oracle_sensitivity(env.bundles, env.grid.retinal_at(p), env.array.electrodes[e],
                                               params.rho_um, params.lambda_um);
        const auto d = dense(ks.kernels()[e], env.grid.size());
        if (want >= 1.001e-3) {
            EXPECT_NEAR(d[p], want, 1e-6) << "e " << e << " p " << p;
        } else if (want < 0.999e-3) {
            EXPECT_EQ(d[p], 0.0f);
        }
    }
    // Every stored entry agrees with the definition.
    for (std::size_t e : {0u, 29u, 59u})
        for (const auto& entry : ks.kernels()[e].entries) {
            const double want = oracle_sensitivity(env.bundles, env.grid.retinal_at(entry.pixel),
                                                   env.array.electrodes[e], params.rho_um, params.lambda_um);
            ASSERT_NEAR(entry.weight, want, 1e-6);
        }
}

TEST(Kernels, SerialAndBatchPathsAreBitwiseIdentical) {
    const auto& env = argus2_env(61);
    for (const AxonMapParams params : {AxonMapParams{100, 50}, AxonMapParams{500, 5000}}) {
        const auto ks = precompute_all(env.array, params, env.grid, env.bundles, 1);
        for (std::size_t e = 0; e < env.array.size(); ++e)
            ASSERT_EQ(compute_kernel(e, env.array, params, env.grid, env.bundles), ks.kernels()[e]) << e;
    }
}

TEST(Kernels, IndependentOfWorkerCount) {
    const auto& env = argus2_env(101);
    const AxonMapParams params{300, 5000};
    const auto one = precompute_all(env.array, params, env.grid, env.bundles, 1);
    const auto eight = precompute_all(env.array, params, env.grid, env.bundles, 8);
    const auto three = precompute_all(env.array, params, env.grid, env.bundles, 3);
    EXPECT_EQ(one.kernels(), eight.kernels());
    EXPECT_EQ(one.kernels(), three.kernels());
}

TEST(Kernels, OneSigmaFalloffInTheScoreboardRegime) {
    // A single electrode at the fovea; pixels on a fine grid centred on it.
    const auto array = implant::make_grid({"one", 1, 1, 575.0, 0.0, {}});
    const double step = (300.0 / 280.0) / 10.0;
    const RenderGrid grid(41, 41, {-20 * step, 20 * step, -20 * step, 20 * step});
    const auto bundles = bundles_for_grid(grid);
    const auto k = compute_kernel(0, array, {300, 50}, grid, bundles);
    const auto d = dense(k, grid.size());
    const float peak = *std::max_element(d.begin(), d.end());
    // Average the four pixels exactly 300 um away along the grid axes.
    const std::size_t c = 20 * 41 + 20;
    const double ring = (d[c + 10] + d[c - 10] + d[c + 410] + d[c - 410]) / 4.0;
    EXPECT_NEAR(ring / peak, std::exp(-0.5), 0.05);
}

TEST(Kernels, NonzerosGrowWithRhoAndLambda) {
    const auto& env = argus2_env(101);
    std::size_t table[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            table[i][j] = precompute_all(env.array, {tasks::kRhoValues[i], tasks::kLambdaValues[j]}, env.grid,
                                         env.bundles, 1)
                              .nonzeros();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (i + 1 < 3) {
                EXPECT_LT(table[i][j], table[i + 1][j]) << i << "," << j;
            }
            if (j + 1 < 3) {
                EXPECT_LT(table[i][j], table[i][j + 1]) << i << "," << j;
            }
        }
}

TEST(Kernels, KernelSetRejectsMismatches) {
    const auto ks = spv::testing::shared_kernels("argus2", 300, 1000, 101);
    auto kernels = ks->kernels();
    kernels.pop_back();
    EXPECT_THROW(KernelSet(kernels, ks->params(), ks->grid(), ks->array()), ValidationError);
    kernels = ks->kernels();
    std::swap(kernels[0], kernels[1]);
    EXPECT_THROW(KernelSet(kernels, ks->params(), ks->grid(), ks->array()), ValidationError);
}

TEST(KernelRuns, ReassembleToTheEntries) {
    const auto ks = spv::testing::shared_kernels("argus2", 300, 1000, 101);
    for (std::size_t e = 0; e < ks->kernels().size(); ++e) {
        std::vector<KernelEntry> rebuilt;
        for (const auto& r : ks->runs()[e])
            for (std::uint32_t i = 0; i < r.length; ++i)
                rebuilt.push_back({r.start + i, ks->run_weights()[e][r.offset + i]});
        ASSERT_EQ(rebuilt, ks->kernels()[e].entries);
    }
}

// ------------------------------------------------------------------ render

class Render : public ::testing::Test {
protected:
    void SetUp() override { ks = spv::testing::shared_kernels("argus2", 300, 1000, 101); }
    std::shared_ptr<const KernelSet> ks;

    std::vector<double> brute_sum(const std::vector<float>& a) const {
        std::vector<double> out(ks->grid().size(), 0.0);
        for (std::size_t e = 0; e < a.size(); ++e)
            for (const auto& entry : ks->kernels()[e].entries) out[entry.pixel] += a[e] * entry.weight;
        return out;
    }
};

TEST_F(Render, ZeroActivationGivesBlack) {
    const std::vector<float> a(60, 0.0f);
    const auto f = render_linear(a, *ks);
    EXPECT_EQ(f.width, 101);
    EXPECT_EQ(f.height, 101);
    for (float v : f.pixels) ASSERT_EQ(v, 0.0f);
}

TEST_F(Render, OneHotEqualsTheKernel) {
    for (std::size_t e : {0u, 17u, 59u}) {
        std::vector<float> a(60, 0.0f);
        a[e] = 1.0f;
        const auto f = render_linear(a, *ks);
        EXPECT_EQ(f.pixels, dense(ks->kernels()[e], ks->grid().size()));
    }
}

TEST_F(Render, MatchesDenseSumAndClampsOverlaps) {
    std::vector<float> a(60, 1.0f);
    const auto f = render_linear(a, *ks);
    const auto want = brute_sum(a);
    std::size_t clamped = 0;
    for (std::size_t p = 0; p < want.size(); ++p) {
        if (want[p] > 1.0) {
            ASSERT_EQ(f.pixels[p], 1.0f);
            ++clamped;
        } else {
            ASSERT_NEAR(f.pixels[p], want[p], 1e-5);
        }
    }
    EXPECT_GT(clamped, 0u);
}

TEST_F(Render, OutputStaysInUnitRange) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int t = 0; t < 20; ++t) {
        std::vector<float> a(60);
        for (auto& v : a) v = u(rng);
        for (float v : render_linear(a, *ks).pixels) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST_F(Render, MonotoneInEachActivation) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(0.0f, 0.3f);
    std::vector<float> a(60);
    for (auto& v : a) v = u(rng);
    const auto base = render_linear(a, *ks);
    for (std::size_t e : {3u, 30u, 44u}) {
        auto b = a;
        b[e] += 0.5f;
        const auto up = render_linear(b, *ks);
        for (std::size_t p = 0; p < up.size(); ++p) ASSERT_GE(up.pixels[p], base.pixels[p]);
    }
}

TEST_F(Render, LinearBelowTheClamp) {
    std::vector<float> a(60, 0.0f);
    a[10] = 0.4f;
    a[13] = 0.3f;
    const auto full = render_linear(a, *ks);
    for (float alpha : {0.25f, 0.5f}) {
        std::vector<float> s(a);
        for (auto& v : s) v *= alpha;
        const auto scaled = render_linear(s, *ks);
        for (std::size_t p = 0; p < full.size(); ++p)
            if (full.pixels[p] < 1.0f) {
                ASSERT_NEAR(scaled.pixels[p], alpha * full.pixels[p], 1e-6);
            }
    }
}

TEST_F(Render, LengthMismatchIsContractError) {
    const std::vector<float> a(59, 0.0f);
    EXPECT_THROW(render_linear(a, *ks), ContractError);
}

TEST_F(Render, IndependentOfWorkerCount) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> a(60);
    for (auto& v : a) v = u(rng);
    const auto serial = render_linear(a, *ks);
    for (unsigned w : {2u, 4u, 8u}) {
        ThreadPool pool(w);
        EXPECT_EQ(render_linear(a, *ks, &pool), serial) << w;
    }
}

TEST_F(Render, ExactEqualsLinearForOneElectrode) {
    const auto& env = argus2_env(101);
    for (std::size_t e : {5u, 42u}) {
        std::vector<float> a(60, 0.0f);
        a[e] = 1.0f;
        const auto lin = render_linear(a, *ks);
        const auto ex = exact_brightness(a, env.array, ks->params(), env.grid, env.bundles);
        for (std::size_t p = 0; p < ex.size(); ++p) {
            if (lin.pixels[p] > 0.0f) {
                ASSERT_NEAR(lin.pixels[p], ex[p], 1e-6);
            }
            else ASSERT_LT(ex[p], kSparsityThreshold * 1.0001);
        }
    }
}

TEST_F(Render, ExactStaysInUnitRangeAfterClamp) {
    const auto& env = argus2_env(101);
    const std::vector<float> a(60, 1.0f);
    const auto f = render_exact(a, env.array, ks->params(), env.grid, env.bundles);
    for (float v : f.pixels) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST_F(Render, LinearVersusExactDivergenceOnLetters) {
    const auto& env = argus2_env(101);
    const auto field = implant::electrode_field_positions(env.array);
    double worst = 0.0;
    for (char letter : tasks::kLetters) {
        const auto img = tasks::render_letter(letter, 101, 101, env.grid.window(), 12.0);
        std::vector<float> a(60);
        for (std::size_t e = 0; e < a.size(); ++e) {
            const auto [c, r] = env.grid.to_pixel(field[e]);
            a[e] = img.at(static_cast<int>(std::lround(c)), static_cast<int>(std::lround(r)));
        }
        const auto lin = render_linear(a, *ks);
        const auto ex = render_exact(a, env.array, ks->params(), env.grid, env.bundles);
        for (std::size_t p = 0; p < lin.size(); ++p)
            worst = std::max(worst, static_cast<double>(std::abs(lin.pixels[p] - ex.pixels[p])));
    }
    RecordProperty("max_linear_exact_divergence", std::to_string(worst));
    std::cout << "max |linear - exact| over letters: " << worst << "\n";
    EXPECT_LE(worst, 1.0);
}

// ------------------------------------------------------------------ stats

TEST(Stats, IsotropicGaussianIsRound) {
    const RenderGrid grid(81, 81, {-4, 4, -4, 4});
    SparseKernel k;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const auto f = grid.field_at(p);
        const float w = static_cast<float>(std::exp(-(f.az * f.az + f.el * f.el) / 2.0));
        if (w >= 1e-3f) k.entries.push_back({static_cast<std::uint32_t>(p), w});
    }
    const auto s = kernel_stats(k, grid);
    EXPECT_NEAR(s.elongation, 1.0, 0.05);
    EXPECT_NEAR(s.centroid.az, 0.0, 1e-9);
    EXPECT_NEAR(s.centroid.el, 0.0, 1e-9);
    EXPECT_NEAR(s.support_area_deg2, k.entries.size() * 0.01, 1e-9);
}

TEST(Stats, ElongatedBlobReportsAxisAndRatio) {
    const RenderGrid grid(101, 101, {-5, 5, -5, 5});
    SparseKernel k;
    const double t = 30.0 * std::numbers::pi / 180.0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const auto f = grid.field_at(p);
        const double u = f.az * std::cos(t) + f.el * std::sin(t);
        const double v = -f.az * std::sin(t) + f.el * std::cos(t);
        const float w = static_cast<float>(std::exp(-u * u / (2 * 1.5 * 1.5) - v * v / (2 * 0.5 * 0.5)));
        if (w >= 1e-3f) k.entries.push_back({static_cast<std::uint32_t>(p), w});
    }
    const auto s = kernel_stats(k, grid);
    EXPECT_NEAR(s.elongation, 3.0, 0.1);
    EXPECT_NEAR(s.major_axis_deg, 30.0, 1.0);
}

TEST(Stats, EmptyKernelIsDomainError) {
    const RenderGrid grid(3, 3, {-1, 1, -1, 1});
    EXPECT_THROW(kernel_stats(SparseKernel{}, grid), DomainError);
}

TEST(Stats, TinyLambdaKernelsAreRound) {
    const auto& env = argus2_env(101);
    const auto ks = precompute_all(env.array, {300, 1}, env.grid, env.bundles, 1);
    for (const auto& k : ks.kernels()) EXPECT_LT(kernel_stats(k, env.grid).elongation, 1.1) << k.electrode;
}

TEST(Stats, ScoreboardCentroidsSitOnTheElectrodes) {
    const auto ks = spv::testing::shared_kernels("argus2", 300, 50, 101);
    const auto field = implant::electrode_field_positions(ks->array());
    for (const auto& k : ks->kernels()) {
        const auto s = kernel_stats(k, ks->grid());
        EXPECT_LT(std::hypot(s.centroid.az - field[k.electrode].az, s.centroid.el - field[k.electrode].el), 0.5)
            << k.electrode;
    }
}

TEST(Stats, LongAxonStreaksRunAwayFromTheDisc) {
    // Somas whose axons pass an electrode lie upstream of it, so the streak
    // is one-sided: the centroid shifts along the major axis, away from the disc.
    const auto ks = spv::testing::shared_kernels("argus2", 300, 5000, 101);
    const auto field = implant::electrode_field_positions(ks->array());
    const int w = ks->grid().width(), h = ks->grid().height();
    const retina::AxonModelConstants k;
    int checked = 0;
    for (const auto& kern : ks->kernels()) {
        bool clipped = false;
        for (const auto& e : kern.entries) {
            const int x = static_cast<int>(e.pixel % w), y = static_cast<int>(e.pixel / w);
            clipped = clipped || x == 0 || y == 0 || x == w - 1 || y == h - 1;
        }
        const auto s = kernel_stats(kern, ks->grid());
        if (clipped || s.elongation < 1.5) continue;
        ++checked;
        const auto& f = field[kern.electrode];
        const double dx = s.centroid.az - f.az, dy = s.centroid.el - f.el;
        const double shift = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
        double diff = std::fmod(std::abs(shift - s.major_axis_deg), 180.0);
        diff = std::min(diff, 180.0 - diff);
        EXPECT_LT(diff, 15.0) << kern.electrode;
        const auto disc = k.disc_location();
        EXPECT_GT(std::hypot(s.centroid.az - disc.az, s.centroid.el - disc.el), std::hypot(f.az - disc.az, f.el - disc.el))
            << kern.electrode;
    }
    EXPECT_GE(checked, 20);
}
