#include "spv/percept.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "spv/error.hpp"
#include "spv/parallel.hpp"

namespace spv::percept {
namespace {

using retina::RetinalPoint;

// Exponent at which exp(-q) reaches the sparsity threshold.
const double kMaxExponent = -std::log(kSparsityThreshold);

struct Decay {
    double inv_2rho2;
    double inv_2lambda2;
    double max_path_um;
    double reach_um;

    explicit Decay(const AxonMapParams& p)
        : inv_2rho2(1.0 / (2.0 * p.rho_um * p.rho_um)),
          inv_2lambda2(1.0 / (2.0 * p.lambda_um * p.lambda_um)),
          max_path_um(p.lambda_um * std::sqrt(2.0 * kMaxExponent)),
          reach_um(p.rho_um * std::sqrt(2.0 * kMaxExponent)) {}

    double axon_term(double path_um) const { return path_um * path_um * inv_2lambda2; }
    double site_term(const RetinalPoint& s, const RetinalPoint& e) const {
        const double dx = s.x - e.x;
        const double dy = s.y - e.y;
        return (dx * dx + dy * dy) * inv_2rho2;
    }
};

// Uniform grid over electrode positions with cell size equal to the
// sensitivity reach, so a 3x3 cell neighbourhood covers every candidate.
class ElectrodeIndex {
public:
    ElectrodeIndex(const std::vector<RetinalPoint>& electrodes, double cell_um)
        : electrodes_(electrodes), cell_(cell_um) {
        if (electrodes.empty()) return;
        double xmin = electrodes[0].x, xmax = xmin, ymin = electrodes[0].y, ymax = ymin;
        for (const auto& e : electrodes) {
            xmin = std::min(xmin, e.x);
            xmax = std::max(xmax, e.x);
            ymin = std::min(ymin, e.y);
            ymax = std::max(ymax, e.y);
        }
        x0_ = xmin;
        y0_ = ymin;
        nx_ = cell_index(xmax, x0_) + 1;
        ny_ = cell_index(ymax, y0_) + 1;
        cells_.assign(static_cast<std::size_t>(nx_ * ny_), {});
        for (std::uint32_t i = 0; i < electrodes.size(); ++i)
            cells_[static_cast<std::size_t>(cell_index(electrodes[i].y, y0_) * nx_ + cell_index(electrodes[i].x, x0_))]
                .push_back(i);
    }

    template <typename Fn>
    void for_candidates(const RetinalPoint& p, Fn&& fn) const {
        if (cells_.empty()) return;
        const std::int64_t cx = cell_index(p.x, x0_);
        const std::int64_t cy = cell_index(p.y, y0_);
        for (std::int64_t iy = std::max<std::int64_t>(cy - 1, 0); iy <= std::min(cy + 1, ny_ - 1); ++iy)
            for (std::int64_t ix = std::max<std::int64_t>(cx - 1, 0); ix <= std::min(cx + 1, nx_ - 1); ++ix)
                for (auto e : cells_[static_cast<std::size_t>(iy * nx_ + ix)]) fn(e);
    }

private:
    std::int64_t cell_index(double v, double origin) const {
        return static_cast<std::int64_t>(std::floor((v - origin) / cell_));
    }

    const std::vector<RetinalPoint>& electrodes_;
    double cell_;
    double x0_ = 0.0, y0_ = 0.0;
    std::int64_t nx_ = 0, ny_ = 0;
    std::vector<std::vector<std::uint32_t>> cells_;
};

void check_inputs(const implant::ElectrodeArray& array, const AxonMapParams& params, const RenderGrid& grid,
                  const retina::AxonBundleSet& bundles) {
    params.validate();
    if (array.electrodes.empty()) throw ContractError("electrode array is empty");
    if (grid.size() == 0) throw ContractError("render grid is empty");
    if (bundles.empty()) throw ContractError("axon bundle set is empty");
    if (grid.size() > std::numeric_limits<std::uint32_t>::max()) throw ContractError("render grid too large");
}

float weight_of(double q) { return static_cast<float>(std::exp(-q)); }

bool keep(float w) { return static_cast<double>(w) >= kSparsityThreshold; }

}  // namespace

void AxonMapParams::validate() const {
    if (!(rho_um > 0.0) || !std::isfinite(rho_um)) throw ConfigError("rho must be positive");
    if (!(lambda_um > 0.0) || !std::isfinite(lambda_um)) throw ConfigError("lambda must be positive");
}

RenderGrid::RenderGrid(int width, int height, retina::FieldWindow window)
    : width_(width), height_(height), window_(window) {
    if (width < 2 || height < 2) throw ConfigError("render grid must be at least 2x2");
    if (!(window.az_max > window.az_min) || !(window.el_max > window.el_min))
        throw ConfigError("render grid window is empty");
    retinal_.reserve(size());
    for (std::size_t p = 0; p < size(); ++p) retinal_.push_back(retina::visual_field_to_retina(field_at(p)));
}

double RenderGrid::step_az() const { return (window_.az_max - window_.az_min) / (width_ - 1); }
double RenderGrid::step_el() const { return (window_.el_max - window_.el_min) / (height_ - 1); }

retina::FieldPoint RenderGrid::field_at(std::size_t pixel) const {
    const auto col = static_cast<double>(pixel % static_cast<std::size_t>(width_));
    const auto row = static_cast<double>(pixel / static_cast<std::size_t>(width_));
    return {window_.az_min + col * step_az(), window_.el_max - row * step_el()};
}

std::pair<double, double> RenderGrid::to_pixel(retina::FieldPoint p) const {
    return {(p.az - window_.az_min) / step_az(), (window_.el_max - p.el) / step_el()};
}

retina::FieldWindow footprint_window(const implant::ElectrodeArray& array, double margin) {
    const auto field = implant::electrode_field_positions(array);
    if (field.empty()) throw ConfigError("electrode array is empty");
    double az_lo = field[0].az, az_hi = az_lo, el_lo = field[0].el, el_hi = el_lo;
    for (const auto& f : field) {
        az_lo = std::min(az_lo, f.az);
        az_hi = std::max(az_hi, f.az);
        el_lo = std::min(el_lo, f.el);
        el_hi = std::max(el_hi, f.el);
    }
    const double caz = 0.5 * (az_lo + az_hi);
    const double cel = 0.5 * (el_lo + el_hi);
    // A single electrode still gets a one-degree square.
    double half = std::max({0.5 * (az_hi - az_lo), 0.5 * (el_hi - el_lo), 0.5});
    half *= 1.0 + 2.0 * margin;
    return {caz - half, caz + half, cel - half, cel + half};
}

RenderGrid default_grid(const implant::ElectrodeArray& array, int size) {
    return RenderGrid(size, size, footprint_window(array));
}

retina::AxonBundleSet bundles_for_grid(const RenderGrid& grid, const retina::AxonModelConstants& constants,
                                       std::size_t n_bundles, std::size_t n_segments) {
    return retina::build_axon_bundles(constants, n_bundles, n_segments)
        .pruned_to(grid.window(), constants.min_vertices);
}

void validate_kernel(const SparseKernel& k, std::size_t n_pixels) {
    const std::string who = "kernel " + std::to_string(k.electrode) + ": ";
    for (std::size_t i = 0; i < k.entries.size(); ++i) {
        const auto& e = k.entries[i];
        if (e.pixel >= n_pixels) throw ValidationError(who + "pixel index out of range");
        if (i > 0 && !(k.entries[i - 1].pixel < e.pixel))
            throw ValidationError(who + "entries not strictly sorted by pixel");
        if (!std::isfinite(e.weight) || e.weight > 1.0f) throw ValidationError(who + "weight outside [0, 1]");
        if (static_cast<double>(e.weight) < kSparsityThreshold)
            throw ValidationError(who + "weight below sparsity threshold");
    }
}

KernelSet::KernelSet(std::vector<SparseKernel> kernels, AxonMapParams params, RenderGrid grid,
                     implant::ElectrodeArray array)
    : kernels_(std::move(kernels)), params_(params), grid_(std::move(grid)), array_(std::move(array)) {
    params_.validate();
    if (kernels_.size() != array_.size())
        throw ValidationError("kernel count " + std::to_string(kernels_.size()) + " != electrode count " +
                              std::to_string(array_.size()));
    runs_.resize(kernels_.size());
    run_weights_.resize(kernels_.size());
    for (std::size_t e = 0; e < kernels_.size(); ++e) {
        if (kernels_[e].electrode != e) throw ValidationError("kernel " + std::to_string(e) + ": electrode index mismatch");
        validate_kernel(kernels_[e], grid_.size());
        auto& runs = runs_[e];
        auto& w = run_weights_[e];
        w.reserve(kernels_[e].entries.size());
        for (const auto& entry : kernels_[e].entries) {
            if (!runs.empty() && runs.back().start + runs.back().length == entry.pixel) {
                ++runs.back().length;
            } else {
                runs.push_back({entry.pixel, 1, static_cast<std::uint32_t>(w.size())});
            }
            w.push_back(entry.weight);
        }
    }
}

std::size_t KernelSet::nonzeros() const {
    std::size_t n = 0;
    for (const auto& k : kernels_) n += k.entries.size();
    return n;
}

SparseKernel compute_kernel(std::size_t electrode, const implant::ElectrodeArray& array, const AxonMapParams& params,
                            const RenderGrid& grid, const retina::AxonBundleSet& bundles) {
    check_inputs(array, params, grid, bundles);
    if (electrode >= array.size()) throw ContractError("electrode index out of range");
    const Decay decay(params);
    const auto& site = array.electrodes[electrode];
    SparseKernel k;
    k.electrode = static_cast<std::uint32_t>(electrode);
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const auto axon = bundles.assign(grid.retinal_at(p), decay.max_path_um);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < axon.points.size(); ++s) {
            const double q = decay.site_term(axon.points[s], site) + decay.axon_term(axon.path_length[s]);
            best = std::min(best, q);
        }
        if (best == std::numeric_limits<double>::infinity()) continue;
        const float w = weight_of(best);
        if (keep(w)) k.entries.push_back({static_cast<std::uint32_t>(p), w});
    }
    return k;
}

KernelSet precompute_all(const implant::ElectrodeArray& array, const AxonMapParams& params, const RenderGrid& grid,
                         const retina::AxonBundleSet& bundles, unsigned workers) {
    check_inputs(array, params, grid, bundles);
    const Decay decay(params);
    const ElectrodeIndex index(array.electrodes, decay.reach_um);
    const double reach2 = decay.reach_um * decay.reach_um * (1.0 + 1e-6);
    const std::size_t n_el = array.size();
    const auto width = static_cast<std::size_t>(grid.width());
    const auto rows = static_cast<std::size_t>(grid.height());

    struct Hit {
        std::uint32_t electrode;
        std::uint32_t pixel;
        float weight;
    };
    std::vector<std::vector<Hit>> per_row(rows);

    parallel_for(rows, resolve_workers(workers), [&](std::size_t row) {
        std::vector<double> best(n_el, std::numeric_limits<double>::infinity());
        std::vector<std::uint32_t> touched;
        auto& hits = per_row[row];
        for (std::size_t col = 0; col < width; ++col) {
            const std::size_t p = row * width + col;
            const auto axon = bundles.assign(grid.retinal_at(p), decay.max_path_um);
            for (std::size_t s = 0; s < axon.points.size(); ++s) {
                const auto& pt = axon.points[s];
                const double ax = decay.axon_term(axon.path_length[s]);
                index.for_candidates(pt, [&](std::uint32_t e) {
                    const auto& site = array.electrodes[e];
                    const double dx = pt.x - site.x;
                    const double dy = pt.y - site.y;
                    if (dx * dx + dy * dy > reach2) return;
                    const double q = decay.site_term(pt, site) + ax;
                    if (best[e] == std::numeric_limits<double>::infinity()) touched.push_back(e);
                    best[e] = std::min(best[e], q);
                });
            }
            std::sort(touched.begin(), touched.end());
            for (auto e : touched) {
                const float w = weight_of(best[e]);
                if (keep(w)) hits.push_back({e, static_cast<std::uint32_t>(p), w});
                best[e] = std::numeric_limits<double>::infinity();
            }
            touched.clear();
        }
    });

    std::vector<SparseKernel> kernels(n_el);
    std::vector<std::size_t> counts(n_el, 0);
    for (const auto& hits : per_row)
        for (const auto& h : hits) ++counts[h.electrode];
    for (std::size_t e = 0; e < n_el; ++e) {
        kernels[e].electrode = static_cast<std::uint32_t>(e);
        kernels[e].entries.reserve(counts[e]);
    }
    for (auto& hits : per_row) {
        for (const auto& h : hits) kernels[h.electrode].entries.push_back({h.pixel, h.weight});
        std::vector<Hit>().swap(hits);
    }
    return KernelSet(std::move(kernels), params, grid, array);
}

void render_linear_into(std::span<const float> activation, const KernelSet& ks, Frame& out, ThreadPool* pool) {
    const auto& runs = ks.runs();
    const auto& weights = ks.run_weights();
    if (activation.size() != runs.size())
        throw ContractError("activation length " + std::to_string(activation.size()) + " != electrode count " +
                            std::to_string(runs.size()));
    const auto& grid = ks.grid();
    if (out.width != grid.width() || out.height != grid.height() || out.size() != grid.size())
        out = Frame(grid.width(), grid.height());
    float* acc = out.pixels.data();
    const std::size_t n_pixels = grid.size();

    // Row bands partition the output; every band adds electrodes in index
    // order, so results do not depend on how bands are scheduled.
    const std::size_t n_bands = pool != nullptr && pool->size() > 1 ? std::min<std::size_t>(pool->size() * 4, n_pixels) : 1;
    auto band = [&](std::size_t b) {
        const auto lo = static_cast<std::uint32_t>(n_pixels * b / n_bands);
        const auto hi = static_cast<std::uint32_t>(n_pixels * (b + 1) / n_bands);
        std::fill(acc + lo, acc + hi, 0.0f);
        for (std::size_t e = 0; e < runs.size(); ++e) {
            const float a = activation[e];
            if (a == 0.0f) continue;
            const auto& kr = runs[e];
            const float* w = weights[e].data();
            auto it = kr.begin();
            if (lo > 0)
                it = std::partition_point(kr.begin(), kr.end(),
                                          [lo](const KernelSet::Run& r) { return r.start + r.length <= lo; });
            for (; it != kr.end() && it->start < hi; ++it) {
                const std::uint32_t s = std::max(it->start, lo);
                const std::uint32_t t = std::min(it->start + it->length, hi);
                const float* src = w + it->offset + (s - it->start);
                float* dst = acc + s;
                const std::uint32_t n = t - s;
                for (std::uint32_t i = 0; i < n; ++i) dst[i] += a * src[i];
            }
        }
        for (std::uint32_t p = lo; p < hi; ++p) acc[p] = std::clamp(acc[p], 0.0f, 1.0f);
    };
    if (n_bands == 1) {
        band(0);
    } else {
        pool->run(n_bands, band);
    }
}

Frame render_linear(std::span<const float> activation, const KernelSet& ks, ThreadPool* pool) {
    Frame out(ks.grid().width(), ks.grid().height());
    render_linear_into(activation, ks, out, pool);
    return out;
}

std::vector<double> exact_brightness(std::span<const float> activation, const implant::ElectrodeArray& array,
                                     const AxonMapParams& params, const RenderGrid& grid,
                                     const retina::AxonBundleSet& bundles, unsigned workers) {
    check_inputs(array, params, grid, bundles);
    if (activation.size() != array.size()) throw ContractError("activation length does not match electrode count");
    const Decay decay(params);
    std::vector<std::size_t> active;
    for (std::size_t e = 0; e < activation.size(); ++e)
        if (activation[e] != 0.0f) active.push_back(e);
    std::vector<double> out(grid.size(), 0.0);
    const auto width = static_cast<std::size_t>(grid.width());
    parallel_for(static_cast<std::size_t>(grid.height()), resolve_workers(workers), [&](std::size_t row) {
        for (std::size_t col = 0; col < width; ++col) {
            const std::size_t p = row * width + col;
            const auto axon = bundles.assign(grid.retinal_at(p), decay.max_path_um);
            double bright = 0.0;
            for (std::size_t s = 0; s < axon.points.size(); ++s) {
                double amp = 0.0;
                for (auto e : active)
                    amp += activation[e] * std::exp(-decay.site_term(axon.points[s], array.electrodes[e]));
                bright = std::max(bright, amp * std::exp(-decay.axon_term(axon.path_length[s])));
            }
            out[p] = bright;
        }
    });
    return out;
}

Frame render_exact(std::span<const float> activation, const implant::ElectrodeArray& array,
                   const AxonMapParams& params, const RenderGrid& grid, const retina::AxonBundleSet& bundles,
                   unsigned workers) {
    const auto bright = exact_brightness(activation, array, params, grid, bundles, workers);
    Frame f(grid.width(), grid.height());
    for (std::size_t p = 0; p < bright.size(); ++p)
        f.pixels[p] = static_cast<float>(std::clamp(bright[p], 0.0, 1.0));
    return f;
}

KernelStats kernel_stats(const SparseKernel& k, const RenderGrid& grid) {
    if (k.entries.empty()) throw DomainError("kernel " + std::to_string(k.electrode) + " is empty");
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (const auto& e : k.entries) {
        const auto f = grid.field_at(e.pixel);
        sw += e.weight;
        sx += e.weight * f.az;
        sy += e.weight * f.el;
    }
    const double mx = sx / sw, my = sy / sw;
    double cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (const auto& e : k.entries) {
        const auto f = grid.field_at(e.pixel);
        const double dx = f.az - mx, dy = f.el - my;
        cxx += e.weight * dx * dx;
        cyy += e.weight * dy * dy;
        cxy += e.weight * dx * dy;
    }
    cxx /= sw;
    cyy /= sw;
    cxy /= sw;
    const double mean = 0.5 * (cxx + cyy);
    const double dev = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
    const double major = mean + dev;
    const double minor = mean - dev;

    KernelStats st;
    st.centroid = {mx, my};
    st.elongation = minor > 0.0 ? std::sqrt(major / minor) : (major > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    st.major_axis_deg = 0.5 * std::atan2(2.0 * cxy, cxx - cyy) * 180.0 / std::numbers::pi;
    st.support_area_deg2 = static_cast<double>(k.entries.size()) * grid.step_az() * grid.step_el();
    return st;
}

}  // namespace spv::percept
