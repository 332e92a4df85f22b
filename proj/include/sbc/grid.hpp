#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sbc/error.hpp"
#include "sbc/regions.hpp"

namespace sbc {

/// Uniform cell-centred grid over a box. Nodes are enumerated row-major:
/// the last coordinate varies fastest, so in 2D with 3x2 cells the order is
/// (0,0) (0,1) (1,0) (1,1) (2,0) (2,1).
class Grid {
public:
    Grid() = default;

    Grid(std::vector<double> lower, std::vector<double> upper, std::vector<std::size_t> cells)
        : lower_(std::move(lower)), upper_(std::move(upper)), cells_(std::move(cells)) {
        if (lower_.empty() || lower_.size() != upper_.size() || lower_.size() != cells_.size())
            throw ValidationError("grid lower/upper/cells must have equal non-zero length");
        const std::size_t n = lower_.size();
        width_.resize(n);
        stride_.assign(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (cells_[i] < 1) throw ValidationError("grid needs at least one cell per dimension");
            if (!(upper_[i] > lower_[i])) throw ValidationError("grid box is empty or inverted");
            width_[i] = (upper_[i] - lower_[i]) / static_cast<double>(cells_[i]);
        }
        for (std::size_t i = n - 1; i > 0; --i) stride_[i - 1] = stride_[i] * cells_[i];
        count_ = stride_[0] * cells_[0];
    }

    std::size_t dim() const noexcept { return lower_.size(); }
    std::size_t size() const noexcept { return count_; }
    const std::vector<double>& lower() const noexcept { return lower_; }
    const std::vector<double>& upper() const noexcept { return upper_; }
    const std::vector<std::size_t>& cells() const noexcept { return cells_; }
    const std::vector<double>& width() const noexcept { return width_; }
    Box box() const { return {lower_, upper_}; }

    std::vector<std::size_t> multi_index(std::size_t node) const {
        std::vector<std::size_t> mi(dim());
        for (std::size_t i = 0; i < dim(); ++i) {
            mi[i] = node / stride_[i];
            node %= stride_[i];
        }
        return mi;
    }

    std::size_t flat_index(std::span<const std::size_t> mi) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < dim(); ++i) idx += mi[i] * stride_[i];
        return idx;
    }

    /// Node centre along one axis. Centres are snapped to 12 decimals so that
    /// e.g. a 0.1-spaced grid has nodes exactly at the doubles 1.0, 0.3, ...
    /// and region boundaries written as decimals classify them predictably.
    double coordinate(std::size_t axis, std::size_t i) const {
        double c = lower_[axis] + (static_cast<double>(i) + 0.5) * width_[axis];
        if (std::fabs(c) < 1e3) c = std::round(c * 1e12) / 1e12;
        return c;
    }

    State node(std::size_t index) const {
        State x(dim());
        for (std::size_t i = 0; i < dim(); ++i) {
            std::size_t k = index / stride_[i];
            index %= stride_[i];
            x[i] = coordinate(i, k);
        }
        return x;
    }

    std::vector<State> nodes() const {
        std::vector<State> out;
        out.reserve(count_);
        for (std::size_t k = 0; k < count_; ++k) out.push_back(node(k));
        return out;
    }

    /// Multilinear interpolation weights of `x` onto at most 2^n surrounding
    /// nodes. Points in the box but beyond the outermost node centres are
    /// clamped to the boundary nodes. Returns false when x is outside the box.
    bool interpolate(std::span<const double> x, std::vector<std::pair<std::size_t, double>>& out) const {
        out.clear();
        if (!box().contains(x)) return false;
        const std::size_t n = dim();
        // per axis: base index, fraction toward base+1
        std::size_t base[16];
        double frac[16];
        if (n > 16) throw ValidationError("grid dimension above 16 is not supported");
        for (std::size_t i = 0; i < n; ++i) {
            double t = (x[i] - lower_[i]) / width_[i] - 0.5;
            double last = static_cast<double>(cells_[i] - 1);
            if (t <= 0.0) {
                base[i] = 0;
                frac[i] = 0.0;
            } else if (t >= last) {
                base[i] = cells_[i] - 1;
                frac[i] = 0.0;
            } else {
                double fl = std::floor(t);
                base[i] = static_cast<std::size_t>(fl);
                frac[i] = t - fl;
                // snap rounding noise so lattice-aligned points hit nodes exactly
                if (frac[i] < 1e-12) frac[i] = 0.0;
                if (frac[i] > 1.0 - 1e-12) {
                    base[i] += 1;
                    frac[i] = 0.0;
                }
            }
        }
        const std::size_t corners = std::size_t{1} << n;
        for (std::size_t c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t idx = 0;
            for (std::size_t i = 0; i < n; ++i) {
                bool up = (c >> i) & 1U;
                if (up) {
                    if (frac[i] == 0.0) {
                        w = 0.0;
                        break;
                    }
                    w *= frac[i];
                    idx += (base[i] + 1) * stride_[i];
                } else {
                    w *= 1.0 - frac[i];
                    idx += base[i] * stride_[i];
                }
            }
            if (w > 0.0) out.emplace_back(idx, w);
        }
        return true;
    }

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
    std::vector<std::size_t> cells_;
    std::vector<double> width_;
    std::vector<std::size_t> stride_;
    std::size_t count_ = 0;
};

inline Grid build_grid(std::vector<double> lower, std::vector<double> upper, std::vector<std::size_t> cells) {
    return Grid(std::move(lower), std::move(upper), std::move(cells));
}

/// Node values on a grid, extended by multilinear interpolation inside the
/// box and by a constant outside it.
struct ValueField {
    Grid grid;
    std::vector<double> values;
    double outside_default = 0.0;

    double at(std::span<const double> x) const {
        thread_local std::vector<std::pair<std::size_t, double>> w;
        if (!grid.interpolate(x, w)) return outside_default;
        double v = 0.0;
        for (auto [j, wj] : w) v += wj * values[j];
        return v;
    }
};

inline double eval_field(const ValueField& field, std::span<const double> x) { return field.at(x); }

/// CSV with one row per node: x1,...,xn,value.
inline void write_field_csv(std::ostream& os, const ValueField& field) {
    const std::size_t n = field.grid.dim();
    for (std::size_t i = 0; i < n; ++i) os << 'x' << (i + 1) << ',';
    os << "value\n";
    os.precision(17);
    for (std::size_t k = 0; k < field.grid.size(); ++k) {
        State x = field.grid.node(k);
        for (double v : x) os << v << ',';
        os << field.values[k] << '\n';
    }
}

} // namespace sbc
