#include "sttraffic/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "csv_util.hpp"

namespace sttraffic {

namespace {

std::size_t poisson_count(double mean, Engine& engine) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::size_t> count(mean);
    return count(engine);
}

}  // namespace

Window make_window(double width, double height, Metric metric) {
    detail::require(std::isfinite(width) && width > 0.0, "window width must be positive");
    detail::require(std::isfinite(height) && height > 0.0, "window height must be positive");
    return Window{width, height, metric};
}

Window square_window_for(double intensity, double expected_points, Metric metric) {
    detail::require(std::isfinite(intensity) && intensity > 0.0, "intensity must be positive");
    detail::require(expected_points > 0.0, "expected point count must be positive");
    const double side = std::sqrt(expected_points / intensity);
    return make_window(side, side, metric);
}

void PcpParams::validate() const {
    detail::require(std::isfinite(lambda_p) && lambda_p >= 0.0, "pcp: lambda_p must be non-negative");
    detail::require(std::isfinite(lambda_c) && lambda_c > 0.0, "pcp: lambda_c must be positive");
    detail::require(std::isfinite(r_c) && r_c > 0.0, "pcp: r_c must be positive");
}

PointPattern sample_ppp(double intensity, const Window& window, std::uint64_t seed) {
    Engine engine = make_engine(seed);
    return sample_ppp(intensity, window, engine);
}

PointPattern sample_ppp(double intensity, const Window& window, Engine& engine) {
    detail::require(std::isfinite(intensity) && intensity >= 0.0,
                    "sample_ppp: intensity must be finite and non-negative");
    PointPattern out;
    const std::size_t n = poisson_count(intensity * window.area(), engine);
    out.points.resize(2, static_cast<Eigen::Index>(n));
    std::uniform_real_distribution<double> ux(0.0, window.width);
    std::uniform_real_distribution<double> uy(0.0, window.height);
    for (Eigen::Index i = 0; i < out.points.cols(); ++i) {
        out.points(0, i) = ux(engine);
        out.points(1, i) = uy(engine);
    }
    return out;
}

PointPattern sample_pcp(const PcpParams& params, const Window& window, std::uint64_t seed) {
    Engine engine = make_engine(seed);
    return sample_pcp(params, window, engine);
}

PointPattern sample_pcp(const PcpParams& params, const Window& window, Engine& engine) {
    params.validate();
    detail::require(2.0 * params.r_c < std::min(window.width, window.height),
                    "sample_pcp: cluster diameter must be smaller than the window side");

    PointPattern out;
    out.parents = sample_ppp(params.lambda_p, window, engine).points;

    const double mean_size = params.mean_cluster_size();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> xs, ys;
    std::vector<std::ptrdiff_t> owner;
    for (Eigen::Index p = 0; p < out.parents.cols(); ++p) {
        const Vec2 parent = out.parents.col(p);
        const std::size_t n = poisson_count(mean_size, engine);
        for (std::size_t j = 0; j < n; ++j) {
            const double r = params.r_c * std::sqrt(unit(engine));
            const double phi = 2.0 * std::numbers::pi * unit(engine);
            Vec2 q = parent + r * Vec2(std::cos(phi), std::sin(phi));
            if (window.metric == Metric::toroidal) {
                q = window.wrap(q);
            } else if (!window.contains(q)) {
                continue;
            }
            xs.push_back(q.x());
            ys.push_back(q.y());
            owner.push_back(p);
        }
    }
    out.points.resize(2, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out.points(0, static_cast<Eigen::Index>(i)) = xs[i];
        out.points(1, static_cast<Eigen::Index>(i)) = ys[i];
    }
    out.cluster_of = std::move(owner);
    return out;
}

NearestIndex::NearestIndex(const Points& sites, const Window& window) : sites_(sites), window_(window) {
    if (sites_.cols() == 0) throw ParameterError("NearestIndex: no sites");
    // about two sites per bucket
    const double target = std::max(1.0, static_cast<double>(sites_.cols()) / 2.0);
    const double cell = std::sqrt(window_.area() / target);
    nx_ = std::max(1L, static_cast<long>(window_.width / cell));
    ny_ = std::max(1L, static_cast<long>(window_.height / cell));
    cell_w_ = window_.width / static_cast<double>(nx_);
    cell_h_ = window_.height / static_cast<double>(ny_);

    const auto cells = static_cast<std::size_t>(nx_ * ny_);
    std::vector<std::size_t> bucket(static_cast<std::size_t>(sites_.cols()));
    cell_start_.assign(cells + 1, 0);
    for (Eigen::Index i = 0; i < sites_.cols(); ++i) {
        Vec2 p = sites_.col(i);
        if (window_.metric == Metric::toroidal) p = window_.wrap(p);
        const long cx = std::clamp(static_cast<long>(p.x() / cell_w_), 0L, nx_ - 1);
        const long cy = std::clamp(static_cast<long>(p.y() / cell_h_), 0L, ny_ - 1);
        bucket[static_cast<std::size_t>(i)] = static_cast<std::size_t>(cy * nx_ + cx);
        ++cell_start_[bucket[static_cast<std::size_t>(i)] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
    cell_items_.resize(static_cast<std::size_t>(sites_.cols()));
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    // ascending site order inside every bucket
    for (std::size_t i = 0; i < bucket.size(); ++i) cell_items_[fill[bucket[i]]++] = i;
}

std::pair<std::size_t, double> NearestIndex::brute_force(const Vec2& query) const {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < sites_.cols(); ++i) {
        const double d2 = window_.distance2(query, sites_.col(i));
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<std::size_t>(i);
        }
    }
    return {best, best_d2};
}

void NearestIndex::scan_cell(long cx, long cy, const Vec2& query, std::size_t& best, double& best_d2) const {
    if (window_.metric == Metric::toroidal) {
        cx = ((cx % nx_) + nx_) % nx_;
        cy = ((cy % ny_) + ny_) % ny_;
    } else if (cx < 0 || cy < 0 || cx >= nx_ || cy >= ny_) {
        return;
    }
    const auto c = static_cast<std::size_t>(cy * nx_ + cx);
    for (std::size_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
        const std::size_t i = cell_items_[k];
        const double d2 = window_.distance2(query, sites_.col(static_cast<Eigen::Index>(i)));
        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
            best_d2 = d2;
            best = i;
        }
    }
}

std::pair<std::size_t, double> NearestIndex::nearest_with_distance2(const Vec2& query) const {
    Vec2 q = query;
    if (window_.metric == Metric::toroidal) q = window_.wrap(q);
    const long qx = std::clamp(static_cast<long>(q.x() / cell_w_), 0L, nx_ - 1);
    const long qy = std::clamp(static_cast<long>(q.y() / cell_h_), 0L, ny_ - 1);
    const double step = std::min(cell_w_, cell_h_);

    std::size_t best = std::numeric_limits<std::size_t>::max();
    double best_d2 = std::numeric_limits<double>::infinity();
    const long max_ring = std::max(nx_, ny_);
    for (long r = 0; r <= max_ring; ++r) {
        if (window_.metric == Metric::toroidal && 2 * r + 1 > std::min(nx_, ny_)) return brute_force(q);
        for (long dy = -r; dy <= r; ++dy) {
            const bool edge_row = (dy == -r || dy == r);
            for (long dx = -r; dx <= r; dx += (edge_row ? 1 : 2 * r)) {
                scan_cell(qx + dx, qy + dy, q, best, best_d2);
                if (r == 0) break;
            }
        }
        const double reach = static_cast<double>(r) * step;
        if (best_d2 < reach * reach) break;
    }
    if (best == std::numeric_limits<std::size_t>::max()) return brute_force(q);
    return {best, best_d2};
}

AssociationMap associate(const PointPattern& users, const PointPattern& bss, const Window& window,
                         AssociationMode mode) {
    if (bss.empty()) throw ParameterError("associate: base-station pattern is empty");
    const NearestIndex index(bss.points, window);
    AssociationMap map;
    map.serving_bs.resize(users.size());
    map.cell_members.assign(bss.size(), {});

    if (mode == AssociationMode::per_cluster && users.clustered()) {
        std::vector<std::size_t> parent_bs(static_cast<std::size_t>(users.parents.cols()));
        for (Eigen::Index p = 0; p < users.parents.cols(); ++p)
            parent_bs[static_cast<std::size_t>(p)] = index.nearest(users.parents.col(p));
        for (std::size_t u = 0; u < users.size(); ++u) {
            const auto parent = users.cluster_of[u];
            map.serving_bs[u] = parent >= 0 ? parent_bs[static_cast<std::size_t>(parent)]
                                            : index.nearest(users.point(u));
        }
    } else {
        for (std::size_t u = 0; u < users.size(); ++u) map.serving_bs[u] = index.nearest(users.point(u));
    }
    for (std::size_t u = 0; u < users.size(); ++u) map.cell_members[map.serving_bs[u]].push_back(u);
    return map;
}

std::vector<double> estimate_cell_areas(const PointPattern& bss, const Window& window, std::size_t probes,
                                        std::uint64_t seed) {
    if (bss.empty()) throw ParameterError("estimate_cell_areas: no base stations");
    detail::require(probes >= 10000, "estimate_cell_areas: at least 1e4 probes required");
    const NearestIndex index(bss.points, window);
    Engine engine = make_engine(derive_seed(seed, stream::probes));
    std::uniform_real_distribution<double> ux(0.0, window.width);
    std::uniform_real_distribution<double> uy(0.0, window.height);

    std::vector<std::size_t> hits(bss.size(), 0);
    for (std::size_t k = 0; k < probes; ++k) {
        const double x = ux(engine);
        const double y = uy(engine);
        ++hits[index.nearest(Vec2(x, y))];
    }
    std::vector<double> areas(bss.size());
    const double per_probe = window.area() / static_cast<double>(probes);
    std::transform(hits.begin(), hits.end(), areas.begin(),
                   [per_probe](std::size_t h) { return static_cast<double>(h) * per_probe; });
    return areas;
}

void write_point_pattern(std::ostream& out, const PointPattern& pattern) {
    out << "x,y,parent_index\n";
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const auto parent = pattern.clustered() ? pattern.cluster_of[i] : std::ptrdiff_t{-1};
        out << csv::format_double(pattern.points(0, static_cast<Eigen::Index>(i))) << ','
            << csv::format_double(pattern.points(1, static_cast<Eigen::Index>(i))) << ',' << parent << '\n';
    }
}

PointPattern read_point_pattern(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("point pattern: missing header");
    if (csv::trim(line) != "x,y,parent_index") throw ConfigError("point pattern: unexpected header '" + line + "'");

    std::vector<double> xs, ys;
    std::vector<std::ptrdiff_t> parents;
    bool any_clustered = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto fields = csv::split(line, ',');
        if (fields.size() != 3) throw ConfigError("point pattern line " + std::to_string(line_no) + ": expected 3 fields");
        xs.push_back(csv::parse_double(fields[0], "x"));
        ys.push_back(csv::parse_double(fields[1], "y"));
        const auto parent = static_cast<std::ptrdiff_t>(csv::parse_int(fields[2], "parent_index"));
        any_clustered = any_clustered || parent >= 0;
        parents.push_back(parent);
    }
    PointPattern out;
    out.points.resize(2, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out.points(0, static_cast<Eigen::Index>(i)) = xs[i];
        out.points(1, static_cast<Eigen::Index>(i)) = ys[i];
    }
    if (any_clustered) out.cluster_of = std::move(parents);
    return out;
}

}  // namespace sttraffic
