#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lsrf/common.hpp"

namespace lsrf {

// Axis-aligned box in R^d.
struct box {
    std::vector<double> lo, hi;

    int dim() const { return static_cast<int>(lo.size()); }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= hi[i] - lo[i];
        return v;
    }

    void validate() const {
        issue_list iss;
        iss.require(!lo.empty(), "box: dimension must be positive");
        iss.require(lo.size() == hi.size(), "box: lo/hi dimension mismatch");
        for (size_t i = 0; i < lo.size() && i < hi.size(); ++i)
            iss.require(hi[i] > lo[i], "box: hi must exceed lo on axis " + std::to_string(i));
        iss.check();
    }
};

// Regular grid of half-open cells over a box. Along each axis, cell i covers
// (lo + i*delta, lo + (i+1)*delta]; a coordinate exactly at the lower region
// edge is assigned to the first cell (measure-zero convention). Cells are
// ordered row-major with the last axis fastest.
class cell_grid {
public:
    cell_grid() = default;

    // The upper bound is snapped outward to a whole number of cells.
    cell_grid(box region, double delta) : delta_(delta) {
        region.validate();
        if (!(delta > 0.0)) throw validation_error({"cell_grid: delta must be positive"});
        const int d = region.dim();
        dims_.resize(d);
        for (int i = 0; i < d; ++i) {
            double width = region.hi[i] - region.lo[i];
            int64_t m = static_cast<int64_t>(std::ceil(width / delta - 1e-9));
            if (m < 1) m = 1;
            dims_[i] = m;
            region.hi[i] = region.lo[i] + static_cast<double>(m) * delta;
        }
        box_ = std::move(region);
        strides_.assign(d, 1);
        for (int i = d - 2; i >= 0; --i) strides_[i] = strides_[i + 1] * dims_[i + 1];
        count_ = strides_[0] * dims_[0];
    }

    const box& region() const { return box_; }
    double delta() const { return delta_; }
    int dim() const { return box_.dim(); }
    int64_t cell_count() const { return count_; }
    const std::vector<int64_t>& dims() const { return dims_; }

    double cell_volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= delta_;
        return v;
    }

    // Half-open cell index along one axis; -1 when outside the region.
    int64_t axis_cell(double coord, int axis) const {
        double t = (coord - box_.lo[axis]) / delta_;
        int64_t i = static_cast<int64_t>(std::ceil(t)) - 1;
        if (i == -1 && coord >= box_.lo[axis]) i = 0; // coordinate exactly at the lower edge
        if (i < 0 || i >= dims_[axis]) return -1;
        return i;
    }

    int64_t index_of(const int64_t* multi) const {
        int64_t idx = 0;
        for (int i = 0; i < dim(); ++i) idx += multi[i] * strides_[i];
        return idx;
    }

    void decompose(int64_t idx, int64_t* multi) const {
        for (int i = 0; i < dim(); ++i) {
            multi[i] = idx / strides_[i];
            idx -= multi[i] * strides_[i];
        }
    }

    void cell_center(const int64_t* multi, double* out) const {
        for (int i = 0; i < dim(); ++i)
            out[i] = box_.lo[i] + (static_cast<double>(multi[i]) + 0.5) * delta_;
    }

    // Cell containing a point, or -1 if the point lies outside the region.
    int64_t locate(const double* point) const {
        int64_t idx = 0;
        for (int i = 0; i < dim(); ++i) {
            int64_t c = axis_cell(point[i], i);
            if (c < 0) return -1;
            idx += c * strides_[i];
        }
        return idx;
    }

private:
    box box_;
    double delta_ = 0.0;
    std::vector<int64_t> dims_;
    std::vector<int64_t> strides_;
    int64_t count_ = 0;
};

} // namespace lsrf
