#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spv/percept.hpp"

namespace spv::kernel_io {

inline constexpr std::uint32_t kVersion = 1;

/// Contents of an SPVK file. The file does not carry electrode positions;
/// callers pair it with an ElectrodeArray to form a KernelSet.
struct KernelFile {
    std::uint32_t grid_width = 0;
    std::uint32_t grid_height = 0;
    retina::FieldWindow window{};
    percept::AxonMapParams params{};
    std::vector<percept::SparseKernel> kernels;
};

/// Little-endian layout: "SPVK", u32 version, u32 n_electrodes, u32 grid_w,
/// u32 grid_h, f64 az_min, az_max, el_min, el_max, f64 rho, f64 lambda,
/// u32 reserved, then per electrode u32 n_entries and (u32 pixel, f32 weight).
std::vector<std::uint8_t> encode(const KernelFile& file);
KernelFile decode(const std::vector<std::uint8_t>& bytes);

KernelFile from_set(const percept::KernelSet& ks);
percept::KernelSet to_set(KernelFile file, implant::ElectrodeArray array);

void write_file(const std::string& path, const percept::KernelSet& ks);
KernelFile read_file(const std::string& path);

}  // namespace spv::kernel_io
