#pragma once

#include <memory>
#include <span>
#include <vector>

#include "spv/frame.hpp"
#include "spv/implant.hpp"
#include "spv/percept.hpp"

namespace spv {
class ThreadPool;
}

namespace spv::pipeline {

/// BT.601 luma.
Frame to_grayscale(const RgbFrame& rgb);

/// Area-weighted box filter; throws ContractError for an upscale request.
Frame downscale(const Frame& f, int width, int height);

/// clamp(sqrt(Gx^2 + Gy^2) / 4, 0, 1) with clamped-edge padding.
Frame sobel3(const Frame& f);

/// Binomial 3x3 blur, (1/16)[1 2 1; 2 4 2; 1 2 1], clamped-edge padding.
Frame gaussian3(const Frame& f);

/// Bilinear tap into a frame at continuous pixel coordinates.
struct Tap {
    std::uint32_t i00 = 0, i01 = 0, i10 = 0, i11 = 0;
    float w00 = 1.0f, w01 = 0.0f, w10 = 0.0f, w11 = 0.0f;
};

struct PipelineConfig {
    int target_width = 86;
    int target_height = 86;
    /// Visual-field extent of the target texture. Pixel centres span the
    /// window edge to edge, matching RenderGrid.
    retina::FieldWindow input_fov{};
    bool grayscale = true;
    bool sobel = true;
    bool gaussian = true;
    std::shared_ptr<const percept::KernelSet> kernels;

    /// Default configuration for a kernel set: FOV equal to the kernel grid
    /// window (the implant footprint plus margin).
    static PipelineConfig for_kernels(std::shared_ptr<const percept::KernelSet> kernels);
};

/// Precomputes the bilinear tap of every electrode's field position inside a
/// width x height texture covering `fov`. Throws ConfigError if any electrode
/// lies outside the FOV.
std::vector<Tap> electrode_taps(const std::vector<retina::FieldPoint>& positions, const retina::FieldWindow& fov,
                                int width, int height);

/// Amplitude per electrode: bilinear sample of the (blurred) frame.
std::vector<float> sample_amplitudes(const Frame& f, const implant::ElectrodeArray& array, const PipelineConfig& cfg);

struct StageTimings {
    double grayscale_ms = 0.0;
    double downscale_ms = 0.0;
    double sobel_ms = 0.0;
    double gaussian_ms = 0.0;
    double sample_ms = 0.0;
    double render_ms = 0.0;
    double total_ms = 0.0;
};

/// The end-to-end frame transform. Immutable after construction and safe to
/// share across threads; scratch state lives in a caller-owned Workspace.
class FrameTransform {
public:
    explicit FrameTransform(PipelineConfig cfg);

    struct Workspace {
        Frame gray, small, edges, blurred;
        std::vector<float> activation;
        Frame output;
        StageTimings timings;
    };

    const PipelineConfig& config() const { return cfg_; }
    const std::vector<Tap>& taps() const { return taps_; }

    /// Results land in ws.output and ws.timings.
    const Frame& process(const RgbFrame& raw, Workspace& ws, ThreadPool* pool = nullptr) const;
    const Frame& process(const Frame& gray, Workspace& ws, ThreadPool* pool = nullptr) const;

    std::vector<float> amplitudes(const Frame& prepared) const;

private:
    const Frame& finish(const Frame& gray, Workspace& ws, ThreadPool* pool, double gray_ms) const;

    PipelineConfig cfg_;
    std::vector<Tap> taps_;
};

struct ProcessResult {
    Frame frame;
    StageTimings timings;
};

ProcessResult process_frame(const RgbFrame& raw, const PipelineConfig& cfg);
ProcessResult process_frame(const Frame& gray, const PipelineConfig& cfg);

}  // namespace spv::pipeline
