#pragma once

#include <cstddef>
#include <vector>

namespace qsep {

// Dense row-major F x T grid. Rows index frequency bins, columns index
// frames; the same container backs masks, loss weights and feature planes.
struct Grid {
    std::vector<double> values;
    int rows = 0;
    int cols = 0;

    Grid() = default;
    Grid(int r, int c, double fill = 0.0)
        : values(static_cast<size_t>(r) * static_cast<size_t>(c), fill), rows(r), cols(c) {}

    size_t size() const { return values.size(); }
    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return values.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return values.data() + static_cast<size_t>(r) * cols; }
    double* data() { return values.data(); }
    const double* data() const { return values.data(); }

    bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

} // namespace qsep
