#include "spv/implant.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "spv/error.hpp"

namespace spv::implant {

void ImplantSpec::validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("implant '" + name + "': rows and cols must be >= 1");
    if (!(pitch_um > 0.0) || !std::isfinite(pitch_um))
        throw ConfigError("implant '" + name + "': pitch must be positive");
    if (!(std::abs(rotation_deg) <= 90.0)) throw ConfigError("implant '" + name + "': |rotation| must be <= 90 deg");
    if (!std::isfinite(center.x) || !std::isfinite(center.y))
        throw ConfigError("implant '" + name + "': center must be finite");
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"argus2", "argus3h", "argus4h"};
    return names;
}

ImplantSpec device_preset(const std::string& name) {
    if (name == "argus2") return {"argus2", 6, 10, 575.0, -45.0, {}};
    if (name == "argus3h") return {"argus3h", 10, 16, 575.0, 0.0, {}};
    if (name == "argus4h") return {"argus4h", 19, 31, 575.0, 0.0, {}};
    throw ConfigError("unknown device preset '" + name + "'");
}

ElectrodeArray make_grid(const ImplantSpec& spec) {
    spec.validate();
    ElectrodeArray array;
    array.spec = spec;
    array.electrodes.reserve(static_cast<std::size_t>(spec.electrode_count()));
    const double t = spec.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t), s = std::sin(t);
    for (int r = 0; r < spec.rows; ++r) {
        for (int col = 0; col < spec.cols; ++col) {
            const double x = (col - (spec.cols - 1) / 2.0) * spec.pitch_um;
            const double y = ((spec.rows - 1) / 2.0 - r) * spec.pitch_um;
            array.electrodes.push_back({spec.center.x + c * x - s * y, spec.center.y + s * x + c * y});
        }
    }
    return array;
}

std::vector<retina::FieldPoint> electrode_field_positions(const ElectrodeArray& array) {
    std::vector<retina::FieldPoint> out;
    out.reserve(array.size());
    for (const auto& e : array.electrodes) out.push_back(retina::retina_to_visual_field(e));
    return out;
}

ImplantSpec spec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("device config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("device config must be a JSON object");
    static const char* keys[] = {"name", "rows", "cols", "pitch_um", "rotation_deg", "center_um"};
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : keys) known = known || key == k;
        if (!known) throw ConfigError("device config: unknown key '" + key + "'");
    }
    ImplantSpec spec;
    try {
        spec.name = j.at("name").get<std::string>();
        spec.rows = j.at("rows").get<int>();
        spec.cols = j.at("cols").get<int>();
        spec.pitch_um = j.at("pitch_um").get<double>();
        spec.rotation_deg = j.value("rotation_deg", 0.0);
        if (j.contains("center_um")) {
            const auto& c = j.at("center_um");
            if (!c.is_array() || c.size() != 2) throw ConfigError("device config: center_um must be [x, y]");
            spec.center = {c[0].get<double>(), c[1].get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("device config: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string spec_to_json(const ImplantSpec& spec) {
    nlohmann::json j{{"name", spec.name},
                     {"rows", spec.rows},
                     {"cols", spec.cols},
                     {"pitch_um", spec.pitch_um},
                     {"rotation_deg", spec.rotation_deg},
                     {"center_um", {spec.center.x, spec.center.y}}};
    return j.dump(2);
}

ImplantSpec resolve_device(const std::string& name_or_path) {
    for (const auto& n : preset_names())
        if (n == name_or_path) return device_preset(n);
    if (!std::filesystem::exists(name_or_path))
        throw ConfigError("'" + name_or_path + "' is neither a device preset nor a config file");
    std::ifstream in(name_or_path);
    if (!in) throw IoError("cannot read device config '" + name_or_path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return spec_from_json(ss.str());
}

}  // namespace spv::implant
