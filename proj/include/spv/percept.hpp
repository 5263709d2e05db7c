#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spv/frame.hpp"
#include "spv/implant.hpp"
#include "spv/retina.hpp"

namespace spv {
class ThreadPool;
}

namespace spv::percept {

/// Kernel weights below this value are dropped (model sensitivity peaks at 1).
inline constexpr double kSparsityThreshold = 1e-3;

struct AxonMapParams {
    /// Spatial decay about the electrode (um).
    double rho_um = 300.0;
    /// Decay with path length along the axon from the soma (um).
    double lambda_um = 1000.0;

    void validate() const;
};

/// Uniformly spaced sample grid over a visual-field window. Pixel (0, 0) is
/// the top-left corner: az_min, el_max.
class RenderGrid {
public:
    RenderGrid() = default;
    RenderGrid(int width, int height, retina::FieldWindow window);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
    const retina::FieldWindow& window() const { return window_; }
    double step_az() const;
    double step_el() const;

    retina::FieldPoint field_at(std::size_t pixel) const;
    const retina::RetinalPoint& retinal_at(std::size_t pixel) const { return retinal_[pixel]; }
    const std::vector<retina::RetinalPoint>& retinal() const { return retinal_; }

    /// Continuous pixel coordinates (column, row) of a field point.
    std::pair<double, double> to_pixel(retina::FieldPoint p) const;

private:
    int width_ = 0;
    int height_ = 0;
    retina::FieldWindow window_{};
    std::vector<retina::RetinalPoint> retinal_;
};

/// Square window around the implant's field footprint, each side expanded
/// by `margin` times the footprint extent.
retina::FieldWindow footprint_window(const implant::ElectrodeArray& array, double margin = 0.2);
RenderGrid default_grid(const implant::ElectrodeArray& array, int size = 401);

/// Bundles for a grid: the default trajectory model pruned to the window.
retina::AxonBundleSet bundles_for_grid(const RenderGrid& grid,
                                       const retina::AxonModelConstants& constants = {},
                                       std::size_t n_bundles = 500, std::size_t n_segments = 500);

struct KernelEntry {
    std::uint32_t pixel = 0;
    float weight = 0.0f;

    bool operator==(const KernelEntry&) const = default;
};

struct SparseKernel {
    std::uint32_t electrode = 0;
    /// Sorted by pixel, no duplicates, weights in [kSparsityThreshold, 1].
    std::vector<KernelEntry> entries;

    bool operator==(const SparseKernel&) const = default;
};

/// Immutable per-electrode kernels plus a rendering layout derived from them.
class KernelSet {
public:
    KernelSet() = default;
    KernelSet(std::vector<SparseKernel> kernels, AxonMapParams params, RenderGrid grid,
              implant::ElectrodeArray array);

    const std::vector<SparseKernel>& kernels() const { return kernels_; }
    const AxonMapParams& params() const { return params_; }
    const RenderGrid& grid() const { return grid_; }
    const implant::ElectrodeArray& array() const { return array_; }
    std::size_t nonzeros() const;

    /// Contiguous pixel runs per kernel, used by render_linear.
    struct Run {
        std::uint32_t start;
        std::uint32_t length;
        std::uint32_t offset;
    };
    const std::vector<std::vector<Run>>& runs() const { return runs_; }
    const std::vector<std::vector<float>>& run_weights() const { return run_weights_; }

private:
    std::vector<SparseKernel> kernels_;
    AxonMapParams params_;
    RenderGrid grid_;
    implant::ElectrodeArray array_;
    std::vector<std::vector<Run>> runs_;
    std::vector<std::vector<float>> run_weights_;
};

/// Throws ValidationError naming the first violated kernel invariant.
void validate_kernel(const SparseKernel& k, std::size_t n_pixels);

SparseKernel compute_kernel(std::size_t electrode, const implant::ElectrodeArray& array,
                            const AxonMapParams& params, const RenderGrid& grid,
                            const retina::AxonBundleSet& bundles);

/// All kernels, parallel over pixel blocks. Output does not depend on the
/// worker count.
KernelSet precompute_all(const implant::ElectrodeArray& array, const AxonMapParams& params,
                         const RenderGrid& grid, const retina::AxonBundleSet& bundles,
                         unsigned workers = 1);

/// out(p) = clamp(sum_e a_e * sens(p, e), 0, 1). Throws ContractError on a
/// length mismatch. `pool` parallelises over row bands.
Frame render_linear(std::span<const float> activation, const KernelSet& ks, ThreadPool* pool = nullptr);
void render_linear_into(std::span<const float> activation, const KernelSet& ks, Frame& out,
                        ThreadPool* pool = nullptr);

/// Max-over-axon combination of the full model, unclamped.
std::vector<double> exact_brightness(std::span<const float> activation, const implant::ElectrodeArray& array,
                                     const AxonMapParams& params, const RenderGrid& grid,
                                     const retina::AxonBundleSet& bundles, unsigned workers = 1);

/// Clamped reference frame of the full model; slow, used for validation.
Frame render_exact(std::span<const float> activation, const implant::ElectrodeArray& array,
                   const AxonMapParams& params, const RenderGrid& grid, const retina::AxonBundleSet& bundles,
                   unsigned workers = 1);

struct KernelStats {
    retina::FieldPoint centroid;
    /// sqrt(major / minor principal second moment), >= 1.
    double elongation = 1.0;
    /// Orientation of the major axis in the field, degrees in (-90, 90].
    double major_axis_deg = 0.0;
    /// Number of entries times the pixel area (deg^2).
    double support_area_deg2 = 0.0;
};

/// Throws DomainError for an empty kernel.
KernelStats kernel_stats(const SparseKernel& k, const RenderGrid& grid);

}  // namespace spv::percept
