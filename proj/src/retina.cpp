#include "spv/retina.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "spv/error.hpp"

namespace spv::retina {
namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

double sq(double v) { return v * v; }

}  // namespace

RetinalPoint visual_field_to_retina(FieldPoint p, Eye /*eye*/) {
    if (!std::isfinite(p.az) || !std::isfinite(p.el) || std::abs(p.az) > kFieldWindowDeg ||
        std::abs(p.el) > kFieldWindowDeg) {
        throw DomainError("field point (" + std::to_string(p.az) + ", " + std::to_string(p.el) +
                          ") deg outside the working window");
    }
    return field_to_retina_unchecked(p);
}

FieldPoint retina_to_visual_field(RetinalPoint p, Eye /*eye*/) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || std::abs(p.x) > kRetinaWindowUm ||
        std::abs(p.y) > kRetinaWindowUm) {
        throw DomainError("retinal point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                          ") um outside the working window");
    }
    return retina_to_field_unchecked(p);
}

FieldPoint AxonModelConstants::disc_location() const {
    const double x = std::abs(optic_disc.az);
    return {eye == Eye::Left ? -x : x, optic_disc.el};
}

double AxonModelConstants::shape_b(double phi0) const {
    if (phi0 > 0.0) return std::exp(beta_superior + 3.9 * std::tanh(-(phi0 - 121.0) / 14.0));
    return -std::exp(beta_inferior + 1.5 * std::tanh(-(-phi0 - 90.0) / 25.0));
}

double AxonModelConstants::shape_c(double phi0) const {
    if (phi0 > 0.0) return 1.9 + 1.4 * std::tanh((phi0 - 121.0) / 14.0);
    return 1.0 + 0.5 * std::tanh((-phi0 - 90.0) / 25.0);
}

std::vector<FieldPoint> jansonius_trajectory(const AxonModelConstants& k, double phi0,
                                             std::size_t n_segments) {
    if (std::abs(phi0) > 180.0) throw ConfigError("phi0 must lie within [-180, 180]");
    const auto [r_min, r_max] = k.radial_range;
    if (r_min < 0.0 || r_min > r_max) throw ConfigError("invalid radial range");

    // The trajectory model is defined for a right eye; a left eye runs the
    // model on the mirrored disc and flips x back.
    FieldPoint od = k.disc_location();
    const bool left = k.eye == Eye::Left;
    if (left) od.az = -od.az;

    const bool superior = phi0 > 0.0;
    const double b = k.shape_b(phi0);
    const double c = k.shape_c(phi0);

    std::vector<FieldPoint> out;
    out.reserve(n_segments);
    for (std::size_t i = 0; i < n_segments; ++i) {
        const double r = n_segments == 1
                             ? r_min
                             : r_min + (r_max - r_min) * static_cast<double>(i) /
                                           static_cast<double>(n_segments - 1);
        const double phi = phi0 + b * std::pow(r - r_min, c);
        const double xp = r * std::cos(deg2rad(phi));
        const double yp = r * std::sin(deg2rad(phi));
        // Bundles never cross the horizontal meridian.
        if (superior ? yp < 0.0 : yp > 0.0) break;
        const double x = xp + od.az;
        double y = yp;
        const bool bend = od.az > 0.0 ? xp > -od.az : xp < -od.az;
        if (bend) y = yp + od.el * sq(x / od.az);
        out.push_back({left ? -x : x, y});
    }
    return out;
}

AxonBundleSet build_axon_bundles(const AxonModelConstants& constants, std::size_t n_bundles,
                                 std::size_t n_segments) {
    if (n_bundles < 2) throw ConfigError("n_bundles must be >= 2");
    if (n_segments < 2) throw ConfigError("n_segments must be >= 2");
    const auto [lo, hi] = constants.bundle_angle_range;
    if (!(lo < hi) || lo < -180.0 || hi > 180.0) throw ConfigError("invalid bundle angle range");

    std::vector<Bundle> bundles;
    bundles.reserve(n_bundles);
    for (std::size_t i = 0; i < n_bundles; ++i) {
        const double phi0 = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bundles - 1);
        const auto traj = jansonius_trajectory(constants, phi0, n_segments);
        if (traj.size() <= constants.min_vertices) continue;
        Bundle b;
        b.phi0 = phi0;
        b.vertices.reserve(traj.size());
        // Store peripheral origin first so path length grows towards the disc.
        for (auto it = traj.rbegin(); it != traj.rend(); ++it)
            b.vertices.push_back(field_to_retina_unchecked(*it));
        b.path_length.resize(b.vertices.size());
        b.path_length[0] = 0.0;
        bool strictly_increasing = true;
        for (std::size_t v = 1; v < b.vertices.size(); ++v) {
            const double step = std::hypot(b.vertices[v].x - b.vertices[v - 1].x,
                                           b.vertices[v].y - b.vertices[v - 1].y);
            if (!(step > 0.0)) strictly_increasing = false;
            b.path_length[v] = b.path_length[v - 1] + step;
        }
        if (!strictly_increasing) continue;
        bundles.push_back(std::move(b));
    }
    return AxonBundleSet(std::move(bundles));
}

AxonBundleSet::AxonBundleSet(std::vector<Bundle> bundles, double cell_um)
    : bundles_(std::move(bundles)), cell_um_(cell_um) {
    if (!(cell_um_ > 0.0)) throw ConfigError("spatial index cell size must be positive");
    build_index();
}

std::int64_t AxonBundleSet::cell_of(double v, double origin) const {
    return static_cast<std::int64_t>(std::floor((v - origin) / cell_um_));
}

void AxonBundleSet::build_index() {
    n_vertices_ = 0;
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
    for (const auto& b : bundles_) {
        n_vertices_ += b.vertices.size();
        for (const auto& v : b.vertices) {
            xmin = std::min(xmin, v.x);
            xmax = std::max(xmax, v.x);
            ymin = std::min(ymin, v.y);
            ymax = std::max(ymax, v.y);
        }
    }
    if (n_vertices_ == 0) {
        nx_ = ny_ = 0;
        cell_start_.assign(1, 0);
        cell_items_.clear();
        return;
    }
    x0_ = xmin;
    y0_ = ymin;
    nx_ = cell_of(xmax, x0_) + 1;
    ny_ = cell_of(ymax, y0_) + 1;
    const std::size_t n_cells = static_cast<std::size_t>(nx_ * ny_);
    std::vector<std::uint32_t> counts(n_cells + 1, 0);
    for (const auto& b : bundles_)
        for (const auto& v : b.vertices)
            ++counts[static_cast<std::size_t>(cell_of(v.y, y0_) * nx_ + cell_of(v.x, x0_)) + 1];
    for (std::size_t i = 1; i <= n_cells; ++i) counts[i] += counts[i - 1];
    cell_start_ = counts;
    cell_items_.resize(n_vertices_);
    std::vector<std::uint32_t> fill(counts.begin(), counts.end() - 1);
    for (std::uint32_t bi = 0; bi < bundles_.size(); ++bi) {
        const auto& verts = bundles_[bi].vertices;
        for (std::uint32_t vi = 0; vi < verts.size(); ++vi) {
            const auto cell = static_cast<std::size_t>(cell_of(verts[vi].y, y0_) * nx_ + cell_of(verts[vi].x, x0_));
            cell_items_[fill[cell]++] = {bi, vi};
        }
    }
}

std::pair<std::size_t, std::size_t> AxonBundleSet::nearest_vertex(RetinalPoint p, double* distance) const {
    if (n_vertices_ == 0) throw ContractError("nearest_vertex on an empty bundle set");

    double best_d2 = std::numeric_limits<double>::infinity();
    std::uint32_t best_b = 0, best_v = 0;
    auto consider = [&](const CellRef& ref) {
        const auto& v = bundles_[ref.bundle].vertices[ref.vertex];
        const double d2 = sq(v.x - p.x) + sq(v.y - p.y);
        // Lower bundle index wins ties; within a bundle the vertex nearer the
        // disc (higher index) wins.
        if (d2 < best_d2 || (d2 == best_d2 && (ref.bundle < best_b ||
                                               (ref.bundle == best_b && ref.vertex > best_v)))) {
            best_d2 = d2;
            best_b = ref.bundle;
            best_v = ref.vertex;
        }
    };

    // Query cell, clamped into the index so points outside the indexed area
    // still search outward from the nearest populated edge.
    const std::int64_t qx = cell_of(p.x, x0_);
    const std::int64_t qy = cell_of(p.y, y0_);
    const std::int64_t cx = std::clamp<std::int64_t>(qx, 0, nx_ - 1);
    const std::int64_t cy = std::clamp<std::int64_t>(qy, 0, ny_ - 1);
    const std::int64_t max_ring = std::max(nx_, ny_);
    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
        for (std::int64_t iy = cy - ring; iy <= cy + ring; ++iy) {
            if (iy < 0 || iy >= ny_) continue;
            const bool edge_row = iy == cy - ring || iy == cy + ring;
            for (std::int64_t ix = cx - ring; ix <= cx + ring; ix += (edge_row ? 1 : 2 * ring)) {
                if (ix >= 0 && ix < nx_) {
                    const auto cell = static_cast<std::size_t>(iy * nx_ + ix);
                    for (auto k = cell_start_[cell]; k < cell_start_[cell + 1]; ++k) consider(cell_items_[k]);
                }
                if (ring == 0) break;
            }
        }
        if (best_d2 < std::numeric_limits<double>::infinity()) {
            // Every point within `reach` of p lies within the searched rings.
            const double lx = p.x - (x0_ + static_cast<double>(cx - ring) * cell_um_);
            const double hx = x0_ + static_cast<double>(cx + ring + 1) * cell_um_ - p.x;
            const double ly = p.y - (y0_ + static_cast<double>(cy - ring) * cell_um_);
            const double hy = y0_ + static_cast<double>(cy + ring + 1) * cell_um_ - p.y;
            const double reach = std::min({lx, hx, ly, hy});
            if (reach > 0.0 && best_d2 < sq(reach)) break;
        }
    }
    if (distance != nullptr) *distance = std::sqrt(best_d2);
    return {best_b, best_v};
}

AxonPath AxonBundleSet::assign(RetinalPoint p, double max_path_um) const {
    AxonPath path;
    const auto [bi, vi] = nearest_vertex(p, &path.distance);
    path.bundle = bi;
    path.vertex = vi;
    const auto& b = bundles_[bi];
    const double base = b.path_length[vi];
    path.points.reserve(b.vertices.size() - vi);
    path.path_length.reserve(b.vertices.size() - vi);
    for (std::size_t k = vi; k < b.vertices.size(); ++k) {
        const double len = path.distance + (b.path_length[k] - base);
        if (!(len < max_path_um)) break;
        path.points.push_back(b.vertices[k]);
        path.path_length.push_back(len);
    }
    return path;
}

AxonBundleSet AxonBundleSet::pruned_to(const FieldWindow& window, std::size_t min_vertices) const {
    std::vector<Bundle> kept;
    for (const auto& b : bundles_) {
        if (b.vertices.size() <= min_vertices) continue;
        double az_lo = std::numeric_limits<double>::infinity(), az_hi = -az_lo;
        double el_lo = az_lo, el_hi = -az_lo;
        for (const auto& v : b.vertices) {
            const auto f = retina_to_field_unchecked(v);
            az_lo = std::min(az_lo, f.az);
            az_hi = std::max(az_hi, f.az);
            el_lo = std::min(el_lo, f.el);
            el_hi = std::max(el_hi, f.el);
        }
        if (az_hi >= window.az_min && az_lo <= window.az_max && el_hi >= window.el_min &&
            el_lo <= window.el_max)
            kept.push_back(b);
    }
    return AxonBundleSet(std::move(kept), cell_um_);
}

}  // namespace spv::retina
