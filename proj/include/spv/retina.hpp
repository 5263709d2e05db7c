#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace spv::retina {

enum class Eye { Left, Right };

/// Position on the retinal surface in micrometers, fovea at the origin.
/// x runs temporal-nasal; y is positive in the superior retina.
struct RetinalPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Position in the visual field in degrees of visual angle.
struct FieldPoint {
    double az = 0.0;
    double el = 0.0;
};

/// Axis-aligned window in the visual field (degrees).
struct FieldWindow {
    double az_min = 0.0;
    double az_max = 0.0;
    double el_min = 0.0;
    double el_max = 0.0;

    bool contains(FieldPoint p) const {
        return p.az >= az_min && p.az <= az_max && p.el >= el_min && p.el <= el_max;
    }
};

inline constexpr double kUmPerDegree = 280.0;
inline constexpr double kRetinaWindowUm = 15000.0;
inline constexpr double kFieldWindowDeg = 50.0;

/// Linear retinotopy (280 um/deg, vertical axis inverted). Throws
/// DomainError outside the working window.
RetinalPoint visual_field_to_retina(FieldPoint p, Eye eye = Eye::Right);
FieldPoint retina_to_visual_field(RetinalPoint p, Eye eye = Eye::Right);

/// Unchecked variants used for geometry that legitimately extends past the
/// working window (peripheral bundle vertices).
constexpr RetinalPoint field_to_retina_unchecked(FieldPoint p) {
    return {kUmPerDegree * p.az, -kUmPerDegree * p.el};
}
constexpr FieldPoint retina_to_field_unchecked(RetinalPoint p) {
    return {p.x / kUmPerDegree, -p.y / kUmPerDegree};
}

/// Parameters of the polar nerve-fiber-bundle trajectory model. Bundles
/// leave the optic disc at angle phi0 and spiral as
///   phi(r) = phi0 + b(phi0) * (r - r_min)^c(phi0)
/// in disc-centred polar coordinates (degrees).
struct AxonModelConstants {
    Eye eye = Eye::Right;
    /// Optic disc centre for a right eye; mirrored for the left eye.
    FieldPoint optic_disc{15.5, 1.5};
    std::pair<double, double> bundle_angle_range{-180.0, 180.0};
    /// Radial extent of every bundle, degrees from the disc.
    std::pair<double, double> radial_range{0.0, 50.0};
    double beta_superior = -1.9;
    double beta_inferior = 0.5;
    /// Bundles with this many vertices or fewer after raphe truncation are dropped.
    std::size_t min_vertices = 10;

    FieldPoint disc_location() const;
    double shape_b(double phi0) const;
    double shape_c(double phi0) const;
};

/// One nerve fiber bundle. Vertices run from the peripheral origin towards
/// the optic disc; `path_length[k]` is the arc length from vertex 0.
struct Bundle {
    double phi0 = 0.0;
    std::vector<RetinalPoint> vertices;
    std::vector<double> path_length;
};

/// Result of assigning a retinal location to its axon.
struct AxonPath {
    std::size_t bundle = 0;
    /// Index of the nearest vertex within the bundle.
    std::size_t vertex = 0;
    /// Euclidean distance from the query point to that vertex (um).
    double distance = 0.0;
    /// Vertices from the nearest one to the disc end.
    std::vector<RetinalPoint> points;
    /// Path length along the axon measured from the query point (um).
    std::vector<double> path_length;
};

class AxonBundleSet {
public:
    AxonBundleSet() = default;
    explicit AxonBundleSet(std::vector<Bundle> bundles, double cell_um = 200.0);

    const std::vector<Bundle>& bundles() const { return bundles_; }
    std::size_t size() const { return bundles_.size(); }
    bool empty() const { return bundles_.empty(); }
    std::size_t vertex_count() const { return n_vertices_; }

    /// Nearest bundle vertex to `p`; ties resolve to the lowest bundle index
    /// and then the vertex closest to the disc. Requires a non-empty set.
    std::pair<std::size_t, std::size_t> nearest_vertex(RetinalPoint p, double* distance = nullptr) const;

    /// Axon through `p`, clipped at the nearest vertex and running to the
    /// disc. Only vertices with path length below `max_path_um` are kept.
    AxonPath assign(RetinalPoint p, double max_path_um = 1e300) const;

    /// Keeps bundles whose bounding box (in field degrees) intersects
    /// `window` and that have more than `min_vertices` vertices.
    AxonBundleSet pruned_to(const struct FieldWindow& window, std::size_t min_vertices = 10) const;

private:
    struct CellRef {
        std::uint32_t bundle;
        std::uint32_t vertex;
    };

    std::int64_t cell_of(double v, double origin) const;
    void build_index();

    std::vector<Bundle> bundles_;
    std::size_t n_vertices_ = 0;
    double cell_um_ = 200.0;
    double x0_ = 0.0, y0_ = 0.0;
    std::int64_t nx_ = 0, ny_ = 0;
    std::vector<std::uint32_t> cell_start_;
    std::vector<CellRef> cell_items_;
};

/// Samples one trajectory. Vertices are returned disc-first (r = r_min
/// first) and stop before the first crossing of the horizontal meridian.
std::vector<FieldPoint> jansonius_trajectory(const AxonModelConstants& constants, double phi0,
                                             std::size_t n_segments);

/// Grows `n_bundles` bundles with phi0 uniformly spaced over the angle range.
/// Throws ConfigError for fewer than two bundles or segments.
AxonBundleSet build_axon_bundles(const AxonModelConstants& constants, std::size_t n_bundles = 500,
                                 std::size_t n_segments = 500);

}  // namespace spv::retina
