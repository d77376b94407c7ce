#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sttraffic/error.hpp"
#include "sttraffic/random.hpp"

namespace sttraffic {

template <typename Scalar>
using Point = Eigen::Matrix<Scalar, 2, 1>;

/// Column-per-point coordinate block.
template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;

using Vec2 = Point<double>;
using Points = PointMatrix<double>;

enum class Metric { toroidal, euclidean_truncated };

/// Finite observation region standing in for the infinite plane.
///
/// With the toroidal metric opposite edges are identified, so distances and
/// Voronoi cells carry no edge bias. The truncated metric is plain Euclidean
/// distance inside the rectangle.
struct Window {
    double width = 1.0;
    double height = 1.0;
    Metric metric = Metric::toroidal;

    double area() const { return width * height; }
    Vec2 center() const { return {0.5 * width, 0.5 * height}; }

    bool contains(const Vec2& p) const {
        return p.x() >= 0.0 && p.x() < width && p.y() >= 0.0 && p.y() < height;
    }

    /// Shortest displacement from `a` to `b` under the window metric.
    Vec2 displacement(const Vec2& a, const Vec2& b) const {
        Vec2 d = b - a;
        if (metric == Metric::toroidal) {
            d.x() -= width * std::round(d.x() / width);
            d.y() -= height * std::round(d.y() / height);
        }
        return d;
    }

    double distance2(const Vec2& a, const Vec2& b) const { return displacement(a, b).squaredNorm(); }
    double distance(const Vec2& a, const Vec2& b) const { return std::sqrt(distance2(a, b)); }

    /// Maps a point back into [0,width) x [0,height) (toroidal only).
    Vec2 wrap(Vec2 p) const {
        p.x() -= width * std::floor(p.x() / width);
        p.y() -= height * std::floor(p.y() / height);
        // floor() rounding can land exactly on the upper edge
        if (p.x() >= width) p.x() = 0.0;
        if (p.y() >= height) p.y() = 0.0;
        return p;
    }
};

Window make_window(double width, double height, Metric metric = Metric::toroidal);

/// Square window whose expected point count at `intensity` is `expected_points`.
Window square_window_for(double intensity, double expected_points, Metric metric = Metric::toroidal);

/// Parameters of a Poisson cluster process with uniform discs.
struct PcpParams {
    double lambda_p = 0.0;  ///< parents per m^2
    double lambda_c = 0.0;  ///< daughters per m^2 inside a cluster disc
    double r_c = 0.0;       ///< cluster radius, m

    double mean_cluster_size() const { return std::numbers::pi * r_c * r_c * lambda_c; }
    double user_intensity() const { return mean_cluster_size() * lambda_p; }
    void validate() const;
};

/// Realization of a point process inside a window.
struct PointPattern {
    Points points = Points(2, 0);
    /// Parent index per point; empty when the pattern is not clustered.
    std::vector<std::ptrdiff_t> cluster_of;
    Points parents = Points(2, 0);

    std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
    bool empty() const { return points.cols() == 0; }
    bool clustered() const { return !cluster_of.empty(); }
    Vec2 point(std::size_t i) const { return points.col(static_cast<Eigen::Index>(i)); }
};

PointPattern sample_ppp(double intensity, const Window& window, std::uint64_t seed);
PointPattern sample_ppp(double intensity, const Window& window, Engine& engine);

PointPattern sample_pcp(const PcpParams& params, const Window& window, std::uint64_t seed);
PointPattern sample_pcp(const PcpParams& params, const Window& window, Engine& engine);

/// Grid-bucketed nearest-site lookup under a window metric.
/// Ties resolve to the lowest site index.
class NearestIndex {
public:
    NearestIndex(const Points& sites, const Window& window);

    std::size_t nearest(const Vec2& query) const { return nearest_with_distance2(query).first; }
    std::pair<std::size_t, double> nearest_with_distance2(const Vec2& query) const;
    std::size_t size() const { return static_cast<std::size_t>(sites_.cols()); }

private:
    std::pair<std::size_t, double> brute_force(const Vec2& query) const;
    void scan_cell(long cx, long cy, const Vec2& query, std::size_t& best, double& best_d2) const;

    Points sites_;
    Window window_;
    long nx_ = 1;
    long ny_ = 1;
    double cell_w_ = 1.0;
    double cell_h_ = 1.0;
    std::vector<std::size_t> cell_start_;
    std::vector<std::size_t> cell_items_;
};

enum class AssociationMode { per_user, per_cluster };

struct AssociationMap {
    std::vector<std::size_t> serving_bs;                ///< user -> BS
    std::vector<std::vector<std::size_t>> cell_members;  ///< BS -> users, ascending
};

/// Nearest-BS association. In per_cluster mode every daughter follows the BS
/// nearest to its parent.
AssociationMap associate(const PointPattern& users, const PointPattern& bss, const Window& window,
                         AssociationMode mode = AssociationMode::per_user);

/// Monte Carlo Voronoi cell areas by uniform probe counting. The estimates
/// partition the window area.
std::vector<double> estimate_cell_areas(const PointPattern& bss, const Window& window,
                                        std::size_t probes, std::uint64_t seed);

/// Gamma-type approximation to the area density of a typical Poisson-Voronoi cell.
template <typename Scalar>
Scalar cell_area_density(Scalar x, Scalar lambda_b) {
    using std::exp;
    using std::pow;
    using std::sqrt;
    detail::require(x >= Scalar(0), "cell_area_density: x must be non-negative");
    detail::require(lambda_b > Scalar(0), "cell_area_density: lambda_b must be positive");
    const Scalar norm = Scalar(343) / Scalar(15) * sqrt(Scalar(3.5) / Scalar(std::numbers::pi));
    const Scalar t = x * lambda_b;
    return norm * pow(t, Scalar(2.5)) * exp(Scalar(-3.5) * t) * lambda_b;
}

/// Density of the distance from a fixed point to the nearest point of a PPP.
template <typename Scalar>
Scalar nearest_distance_density(Scalar l, Scalar lambda_b) {
    using std::exp;
    detail::require(l >= Scalar(0), "nearest_distance_density: l must be non-negative");
    detail::require(lambda_b > Scalar(0), "nearest_distance_density: lambda_b must be positive");
    const Scalar pi = Scalar(std::numbers::pi);
    return Scalar(2) * pi * lambda_b * l * exp(-lambda_b * pi * l * l);
}

/// Plain-text table `x,y,parent_index` with a header row; -1 marks unclustered points.
void write_point_pattern(std::ostream& out, const PointPattern& pattern);
PointPattern read_point_pattern(std::istream& in);

}  // namespace sttraffic
