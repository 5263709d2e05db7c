#include "spv/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "spv/error.hpp"

namespace spv::pipeline {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void require_min_size(const Frame& f, const char* op) {
    if (f.width < 3 || f.height < 3) throw ContractError(std::string(op) + " requires a frame of at least 3x3");
}

// Overlap weights of source cells [i, i+1) with the destination cell
// [j * scale, (j + 1) * scale), normalised by the scale.
struct AreaWeights {
    std::vector<int> first;
    std::vector<std::vector<double>> w;
};

AreaWeights area_weights(int src, int dst) {
    AreaWeights a;
    a.first.resize(static_cast<std::size_t>(dst));
    a.w.resize(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int j = 0; j < dst; ++j) {
        const double lo = j * scale;
        const double hi = (j + 1) * scale;
        const int i0 = static_cast<int>(std::floor(lo));
        const int i1 = std::min(src, static_cast<int>(std::ceil(hi)));
        a.first[j] = i0;
        for (int i = i0; i < i1; ++i) {
            const double overlap = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
            a.w[j].push_back(overlap > 0.0 ? overlap / scale : 0.0);
        }
    }
    return a;
}

template <typename KernelFn>
Frame convolve3(const Frame& f, KernelFn&& fn) {
    Frame out(f.width, f.height);
    const int w = f.width, h = f.height;
    for (int y = 0; y < h; ++y) {
        const float* rows[3] = {&f.pixels[static_cast<std::size_t>(std::max(y - 1, 0)) * w],
                                &f.pixels[static_cast<std::size_t>(y) * w],
                                &f.pixels[static_cast<std::size_t>(std::min(y + 1, h - 1)) * w]};
        for (int x = 0; x < w; ++x) {
            const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            float n[3][3];
            for (int k = 0; k < 3; ++k) {
                n[k][0] = rows[k][xl];
                n[k][1] = rows[k][x];
                n[k][2] = rows[k][xr];
            }
            out.pixels[static_cast<std::size_t>(y) * w + x] = fn(n);
        }
    }
    return out;
}

}  // namespace

Frame to_grayscale(const RgbFrame& rgb) {
    Frame out(rgb.width, rgb.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float* p = &rgb.rgb[3 * i];
        out.pixels[i] = std::clamp(0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2], 0.0f, 1.0f);
    }
    return out;
}

Frame downscale(const Frame& f, int width, int height) {
    if (width < 1 || height < 1) throw ContractError("downscale target must be at least 1x1");
    if (width > f.width || height > f.height)
        throw ContractError("downscale cannot upscale " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                            " to " + std::to_string(width) + "x" + std::to_string(height));
    if (width == f.width && height == f.height) return f;
    const auto ax = area_weights(f.width, width);
    const auto ay = area_weights(f.height, height);
    // Horizontal pass into doubles, then vertical.
    std::vector<double> tmp(static_cast<std::size_t>(width) * f.height, 0.0);
    for (int y = 0; y < f.height; ++y) {
        const float* row = &f.pixels[static_cast<std::size_t>(y) * f.width];
        for (int j = 0; j < width; ++j) {
            double s = 0.0;
            const auto& wj = ax.w[j];
            for (std::size_t k = 0; k < wj.size(); ++k) s += wj[k] * row[ax.first[j] + static_cast<int>(k)];
            tmp[static_cast<std::size_t>(y) * width + j] = s;
        }
    }
    Frame out(width, height);
    for (int i = 0; i < height; ++i) {
        const auto& wi = ay.w[i];
        for (int j = 0; j < width; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < wi.size(); ++k)
                s += wi[k] * tmp[static_cast<std::size_t>(ay.first[i] + static_cast<int>(k)) * width + j];
            out.pixels[static_cast<std::size_t>(i) * width + j] = static_cast<float>(std::clamp(s, 0.0, 1.0));
        }
    }
    return out;
}

Frame sobel3(const Frame& f) {
    require_min_size(f, "sobel3");
    return convolve3(f, [](const float (&n)[3][3]) {
        const float gx = (n[0][2] + 2.0f * n[1][2] + n[2][2]) - (n[0][0] + 2.0f * n[1][0] + n[2][0]);
        const float gy = (n[2][0] + 2.0f * n[2][1] + n[2][2]) - (n[0][0] + 2.0f * n[0][1] + n[0][2]);
        return std::clamp(std::sqrt(gx * gx + gy * gy) * 0.25f, 0.0f, 1.0f);
    });
}

Frame gaussian3(const Frame& f) {
    require_min_size(f, "gaussian3");
    return convolve3(f, [](const float (&n)[3][3]) {
        const float s = (n[0][0] + 2.0f * n[0][1] + n[0][2]) + 2.0f * (n[1][0] + 2.0f * n[1][1] + n[1][2]) +
                        (n[2][0] + 2.0f * n[2][1] + n[2][2]);
        return std::clamp(s * 0.0625f, 0.0f, 1.0f);
    });
}

PipelineConfig PipelineConfig::for_kernels(std::shared_ptr<const percept::KernelSet> kernels) {
    PipelineConfig cfg;
    if (!kernels) throw ConfigError("pipeline requires a kernel set");
    cfg.input_fov = kernels->grid().window();
    cfg.kernels = std::move(kernels);
    return cfg;
}

std::vector<Tap> electrode_taps(const std::vector<retina::FieldPoint>& positions, const retina::FieldWindow& fov,
                                int width, int height) {
    if (width < 2 || height < 2) throw ConfigError("sampling texture must be at least 2x2");
    if (!(fov.az_max > fov.az_min) || !(fov.el_max > fov.el_min)) throw ConfigError("input FOV is empty");
    std::vector<Tap> taps;
    taps.reserve(positions.size());
    for (std::size_t e = 0; e < positions.size(); ++e) {
        const auto& p = positions[e];
        if (!fov.contains(p))
            throw ConfigError("electrode " + std::to_string(e) + " at (" + std::to_string(p.az) + ", " +
                              std::to_string(p.el) + ") deg lies outside the input FOV");
        const double u = (p.az - fov.az_min) / (fov.az_max - fov.az_min) * (width - 1);
        const double v = (fov.el_max - p.el) / (fov.el_max - fov.el_min) * (height - 1);
        const int x0 = std::clamp(static_cast<int>(std::floor(u)), 0, width - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor(v)), 0, height - 1);
        const int x1 = std::min(x0 + 1, width - 1);
        const int y1 = std::min(y0 + 1, height - 1);
        const double fx = std::clamp(u - x0, 0.0, 1.0);
        const double fy = std::clamp(v - y0, 0.0, 1.0);
        auto idx = [width](int x, int y) { return static_cast<std::uint32_t>(y * width + x); };
        taps.push_back({idx(x0, y0), idx(x1, y0), idx(x0, y1), idx(x1, y1),
                        static_cast<float>((1 - fx) * (1 - fy)), static_cast<float>(fx * (1 - fy)),
                        static_cast<float>((1 - fx) * fy), static_cast<float>(fx * fy)});
    }
    return taps;
}

namespace {

std::vector<float> apply_taps(const Frame& f, const std::vector<Tap>& taps) {
    std::vector<float> a(taps.size());
    for (std::size_t e = 0; e < taps.size(); ++e) {
        const auto& t = taps[e];
        const float v = t.w00 * f.pixels[t.i00] + t.w01 * f.pixels[t.i01] + t.w10 * f.pixels[t.i10] +
                        t.w11 * f.pixels[t.i11];
        a[e] = std::clamp(v, 0.0f, 1.0f);
    }
    return a;
}

}  // namespace

std::vector<float> sample_amplitudes(const Frame& f, const implant::ElectrodeArray& array, const PipelineConfig& cfg) {
    if (f.width != cfg.target_width || f.height != cfg.target_height)
        throw ContractError("sample_amplitudes expects a frame of the configured target size");
    return apply_taps(f, electrode_taps(implant::electrode_field_positions(array), cfg.input_fov, f.width, f.height));
}

FrameTransform::FrameTransform(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.kernels) throw ConfigError("pipeline requires a kernel set");
    if (cfg_.target_width < 3 || cfg_.target_height < 3) throw ConfigError("target size must be at least 3x3");
    taps_ = electrode_taps(implant::electrode_field_positions(cfg_.kernels->array()), cfg_.input_fov,
                           cfg_.target_width, cfg_.target_height);
}

std::vector<float> FrameTransform::amplitudes(const Frame& prepared) const {
    if (prepared.width != cfg_.target_width || prepared.height != cfg_.target_height)
        throw ContractError("amplitudes expects a frame of the configured target size");
    return apply_taps(prepared, taps_);
}

const Frame& FrameTransform::process(const RgbFrame& raw, Workspace& ws, ThreadPool* pool) const {
    if (!cfg_.grayscale) throw ContractError("RGB input requires the grayscale stage");
    const auto t0 = Clock::now();
    ws.gray = to_grayscale(raw);
    return finish(ws.gray, ws, pool, ms_since(t0));
}

const Frame& FrameTransform::process(const Frame& gray, Workspace& ws, ThreadPool* pool) const {
    return finish(gray, ws, pool, 0.0);
}

const Frame& FrameTransform::finish(const Frame& gray, Workspace& ws, ThreadPool* pool, double gray_ms) const {
    const auto start = Clock::now();
    auto& t = ws.timings;
    t = {};
    t.grayscale_ms = gray_ms;

    auto t0 = Clock::now();
    ws.small = downscale(gray, cfg_.target_width, cfg_.target_height);
    t.downscale_ms = ms_since(t0);

    const Frame* cur = &ws.small;
    t0 = Clock::now();
    if (cfg_.sobel) {
        ws.edges = sobel3(*cur);
        cur = &ws.edges;
    }
    t.sobel_ms = ms_since(t0);

    t0 = Clock::now();
    if (cfg_.gaussian) {
        ws.blurred = gaussian3(*cur);
        cur = &ws.blurred;
    }
    t.gaussian_ms = ms_since(t0);

    t0 = Clock::now();
    ws.activation = apply_taps(*cur, taps_);
    t.sample_ms = ms_since(t0);

    t0 = Clock::now();
    percept::render_linear_into(ws.activation, *cfg_.kernels, ws.output, pool);
    t.render_ms = ms_since(t0);

    t.total_ms = gray_ms + ms_since(start);
    return ws.output;
}

ProcessResult process_frame(const RgbFrame& raw, const PipelineConfig& cfg) {
    const FrameTransform ft(cfg);
    FrameTransform::Workspace ws;
    ft.process(raw, ws);
    return {std::move(ws.output), ws.timings};
}

ProcessResult process_frame(const Frame& gray, const PipelineConfig& cfg) {
    const FrameTransform ft(cfg);
    FrameTransform::Workspace ws;
    ft.process(gray, ws);
    return {std::move(ws.output), ws.timings};
}

}  // namespace spv::pipeline
