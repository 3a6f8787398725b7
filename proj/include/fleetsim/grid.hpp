#pragma once

#include "fleetsim/error.hpp"
#include "fleetsim/rng.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace fleetsim {

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// 1-based cell index; m runs along x, n along y.
struct Cell {
    int m = 1;
    int n = 1;
    friend bool operator==(const Cell&, const Cell&) = default;
};

/// Regular n_x by n_y partition of the rectangle [x_min, x_max] x [y_min, y_max].
struct GridSpec {
    int n_x = 5;
    int n_y = 5;
    double x_min = 0.0;
    double x_max = 5.0;
    double y_min = 0.0;
    double y_max = 5.0;

    void validate() const {
        if (n_x < 1 || n_y < 1) throw ValidationError("grid needs at least one cell per axis");
        if (!(x_min < x_max) || !(y_min < y_max)) throw ValidationError("grid bounds must satisfy min < max");
    }

    std::size_t cell_count() const noexcept { return static_cast<std::size_t>(n_x) * n_y; }
    double cell_width() const noexcept { return (x_max - x_min) / n_x; }
    double cell_height() const noexcept { return (y_max - y_min) / n_y; }

    bool contains(double x, double y) const noexcept { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }

    /// Row-major offset of a cell: (m - 1) * n_y + (n - 1).
    std::size_t flat_index(Cell c) const noexcept {
        return static_cast<std::size_t>(c.m - 1) * n_y + static_cast<std::size_t>(c.n - 1);
    }
    Cell cell_at(std::size_t flat) const noexcept {
        return Cell{static_cast<int>(flat / n_y) + 1, static_cast<int>(flat % n_y) + 1};
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

namespace detail {
inline int axis_cell(double v, double lo, double hi, int count) {
    // Cells are half-open [lo_k, hi_k); the last one is closed on the right.
    int k = static_cast<int>(std::floor((v - lo) * count / (hi - lo)));
    if (k >= count) k = count - 1;
    if (k < 0) k = 0;
    return k + 1;
}
}  // namespace detail

inline Cell cell_of(const GridSpec& spec, double x, double y) {
    if (!spec.contains(x, y))
        throw OutOfBounds("point (" + std::to_string(x) + ", " + std::to_string(y) + ") outside operating area");
    return Cell{detail::axis_cell(x, spec.x_min, spec.x_max, spec.n_x),
                detail::axis_cell(y, spec.y_min, spec.y_max, spec.n_y)};
}

inline Cell cell_of(const GridSpec& spec, Point p) { return cell_of(spec, p.x, p.y); }

/// Nonnegative integer count per grid cell, stored row-major over (m, n).
class CountMatrix {
public:
    CountMatrix() = default;
    CountMatrix(int n_x, int n_y) : n_x_(n_x), n_y_(n_y), data_(static_cast<std::size_t>(n_x) * n_y, 0) {
        if (n_x < 1 || n_y < 1) throw ShapeMismatch("count matrix needs a positive shape");
    }
    explicit CountMatrix(const GridSpec& spec) : CountMatrix(spec.n_x, spec.n_y) {}

    static CountMatrix from_flat(int n_x, int n_y, std::vector<std::int64_t> flat) {
        CountMatrix m(n_x, n_y);
        if (flat.size() != m.data_.size())
            throw ShapeMismatch("flat length " + std::to_string(flat.size()) + " does not match " +
                                std::to_string(n_x) + "x" + std::to_string(n_y));
        for (auto v : flat)
            if (v < 0) throw ValidationError("count matrix entries must be nonnegative");
        m.data_ = std::move(flat);
        return m;
    }

    int n_x() const noexcept { return n_x_; }
    int n_y() const noexcept { return n_y_; }

    std::int64_t& at(int m, int n) { return data_.at(offset(m, n)); }
    std::int64_t at(int m, int n) const { return data_.at(offset(m, n)); }
    std::int64_t& operator[](Cell c) { return at(c.m, c.n); }
    std::int64_t operator[](Cell c) const { return at(c.m, c.n); }

    std::span<const std::int64_t> flat() const noexcept { return data_; }
    std::int64_t total() const noexcept { return std::accumulate(data_.begin(), data_.end(), std::int64_t{0}); }

    bool matches(const GridSpec& spec) const noexcept { return n_x_ == spec.n_x && n_y_ == spec.n_y; }

    friend bool operator==(const CountMatrix&, const CountMatrix&) = default;

private:
    std::size_t offset(int m, int n) const {
        if (m < 1 || m > n_x_ || n < 1 || n > n_y_)
            throw OutOfBounds("cell (" + std::to_string(m) + ", " + std::to_string(n) + ") outside matrix");
        return static_cast<std::size_t>(m - 1) * n_y_ + static_cast<std::size_t>(n - 1);
    }

    int n_x_ = 0;
    int n_y_ = 0;
    std::vector<std::int64_t> data_;
};

/// Counts positions per cell.
inline CountMatrix aggregate(const GridSpec& spec, std::span<const Point> positions) {
    CountMatrix counts(spec);
    for (const auto& p : positions) ++counts[cell_of(spec, p)];
    return counts;
}

/// Draws counts[m, n] positions uniformly inside each cell (strictly
/// interior), visiting cells in row-major order.
inline std::vector<Point> disaggregate(const GridSpec& spec, const CountMatrix& counts, Rng& rng) {
    if (!counts.matches(spec)) throw ShapeMismatch("count matrix shape does not match grid");
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(counts.total()));
    const double w = spec.cell_width();
    const double h = spec.cell_height();
    for (int m = 1; m <= spec.n_x; ++m) {
        for (int n = 1; n <= spec.n_y; ++n) {
            const double x0 = spec.x_min + (m - 1) * w;
            const double y0 = spec.y_min + (n - 1) * h;
            for (std::int64_t k = 0; k < counts.at(m, n); ++k) {
                // Rounding can land a draw on a cell edge; redraw until it maps back.
                Point p;
                do {
                    p = Point{x0 + rng.open01() * w, y0 + rng.open01() * h};
                } while (p.x <= x0 || p.y <= y0 || p.x >= x0 + w || p.y >= y0 + h ||
                         cell_of(spec, p) != Cell{m, n});
                out.push_back(p);
            }
        }
    }
    return out;
}

inline std::vector<Point> disaggregate(const GridSpec& spec, const CountMatrix& counts, std::uint64_t seed) {
    Rng rng(seed);
    return disaggregate(spec, counts, rng);
}

}  // namespace fleetsim
