#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mf {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

inline Vec2 clamp_unit(Vec2 s) {
    s.x = s.x < 0.0 ? 0.0 : (s.x > 1.0 ? 1.0 : s.x);
    s.y = s.y < 0.0 ? 0.0 : (s.y > 1.0 ? 1.0 : s.y);
    return s;
}

// M x M discretization of the unit square. Zones are indexed row-major:
// zone = iy*M + ix, where ix runs along the x axis. The state space itself
// stays continuous; measures are attached to zone centers.
class CityGrid {
  public:
    CityGrid(int M, std::vector<std::uint8_t> operational_mask, double meters_per_unit = 13750.0)
        : M_(M), cell_(1.0 / M), meters_per_unit_(meters_per_unit), operational_(std::move(operational_mask)) {
        if (M_ < 1) throw std::invalid_argument("CityGrid: M must be >= 1");
        if (static_cast<int>(operational_.size()) != M_ * M_)
            throw std::invalid_argument("CityGrid: mask size != M*M");
        n_operational_ = 0;
        for (auto v : operational_)
            if (v) ++n_operational_;
        if (n_operational_ < 1) throw std::invalid_argument("CityGrid: no operational zones");
    }

    static CityGrid square(int M, double meters_per_unit = 13750.0) {
        return CityGrid(M, std::vector<std::uint8_t>(static_cast<size_t>(M) * M, 1), meters_per_unit);
    }

    int M() const { return M_; }
    int n_zones() const { return M_ * M_; }
    int n_operational() const { return n_operational_; }
    double cell_width() const { return cell_; }
    double meters_per_unit() const { return meters_per_unit_; }

    bool operational(int zone) const { return operational_[static_cast<size_t>(zone)] != 0; }
    const std::vector<std::uint8_t>& operational_mask() const { return operational_; }

    int zone_index(int ix, int iy) const { return iy * M_ + ix; }
    int zone_ix(int zone) const { return zone % M_; }
    int zone_iy(int zone) const { return zone / M_; }

    int zone_of(const Vec2& s) const {
        int ix = static_cast<int>(s.x * M_);
        int iy = static_cast<int>(s.y * M_);
        if (ix < 0) ix = 0;
        if (iy < 0) iy = 0;
        if (ix >= M_) ix = M_ - 1;
        if (iy >= M_) iy = M_ - 1;
        return zone_index(ix, iy);
    }

    Vec2 center(int zone) const {
        return {(zone_ix(zone) + 0.5) * cell_, (zone_iy(zone) + 0.5) * cell_};
    }

    // Self plus the ring of grid neighbors within `radius` cells (8 neighbors
    // at radius 1), clipped at the boundary.
    std::vector<int> neighborhood(int zone, int radius = 1) const {
        std::vector<int> out;
        out.reserve(static_cast<size_t>(2 * radius + 1) * (2 * radius + 1));
        const int cx = zone_ix(zone), cy = zone_iy(zone);
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                const int nx = cx + dx, ny = cy + dy;
                if (nx < 0 || ny < 0 || nx >= M_ || ny >= M_) continue;
                out.push_back(zone_index(nx, ny));
            }
        }
        return out;
    }

    std::string to_json() const;
    static CityGrid from_json(const std::string& text);

  private:
    int M_;
    double cell_;
    double meters_per_unit_;
    std::vector<std::uint8_t> operational_;
    int n_operational_ = 0;
};

// Nonnegative mass per zone.
struct GridMeasure {
    std::vector<double> mass;

    GridMeasure() = default;
    explicit GridMeasure(int n_zones, double fill = 0.0) : mass(static_cast<size_t>(n_zones), fill) {}
    explicit GridMeasure(std::vector<double> m) : mass(std::move(m)) {}

    int size() const { return static_cast<int>(mass.size()); }
    double& operator[](int i) { return mass[static_cast<size_t>(i)]; }
    double operator[](int i) const { return mass[static_cast<size_t>(i)]; }

    double total() const {
        double t = 0.0;
        for (double v : mass) t += v;
        return t;
    }

    bool nonnegative(double tol = 0.0) const {
        for (double v : mass)
            if (v < -tol) return false;
        return true;
    }

    // ProbabilityMeasure variant check.
    bool is_probability(double tol = 1e-9) const {
        return nonnegative(tol) && std::abs(total() - 1.0) <= tol;
    }

    void scale(double a) {
        for (double& v : mass) v *= a;
    }

    // Rescale to total 1. Throws on zero/negative total.
    void normalize() {
        const double t = total();
        if (t <= 0.0) throw std::domain_error("GridMeasure::normalize: total <= 0");
        scale(1.0 / t);
    }

    static GridMeasure uniform_operational(const CityGrid& grid) {
        GridMeasure g(grid.n_zones());
        const double w = 1.0 / grid.n_operational();
        for (int i = 0; i < grid.n_zones(); ++i)
            if (grid.operational(i)) g[i] = w;
        return g;
    }
};

inline double total_variation(const GridMeasure& a, const GridMeasure& b) {
    double tv = 0.0;
    for (size_t i = 0; i < a.mass.size(); ++i) tv += std::abs(a.mass[i] - b.mass[i]);
    return 0.5 * tv;
}

}  // namespace mf
