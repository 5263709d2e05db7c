#pragma once

#include <string>
#include <vector>

#include "spv/retina.hpp"

namespace spv::implant {

/// Rectangular electrode grid description.
struct ImplantSpec {
    std::string name;
    int rows = 1;
    int cols = 1;
    double pitch_um = 575.0;
    /// Counterclockwise rotation about the array centre, degrees.
    double rotation_deg = 0.0;
    retina::RetinalPoint center{};

    /// Throws ConfigError when an invariant does not hold.
    void validate() const;
    int electrode_count() const { return rows * cols; }
};

struct ElectrodeArray {
    ImplantSpec spec;
    /// Row-major, top-left (most superior, most temporal-x) first.
    std::vector<retina::RetinalPoint> electrodes;

    std::size_t size() const { return electrodes.size(); }
};

/// argus2 (6x10, -45 deg), argus3h (10x16) and argus4h (19x31), all 575 um.
ImplantSpec device_preset(const std::string& name);
const std::vector<std::string>& preset_names();

ElectrodeArray make_grid(const ImplantSpec& spec);

/// Electrode positions in the visual field, index-aligned with the array.
/// Throws DomainError if an electrode lies outside the working window.
std::vector<retina::FieldPoint> electrode_field_positions(const ElectrodeArray& array);

/// JSON device config: {name, rows, cols, pitch_um, rotation_deg, center_um:[x,y]}.
ImplantSpec spec_from_json(const std::string& text);
std::string spec_to_json(const ImplantSpec& spec);

/// Resolves a preset name or a path to a JSON device config.
ImplantSpec resolve_device(const std::string& name_or_path);

}  // namespace spv::implant
