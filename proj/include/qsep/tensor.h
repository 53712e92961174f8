#pragma once

#include <cstddef>
#include <vector>

#include "qsep/grid.h"

namespace qsep {

// Dense C x F x T stack of grids, channel-major. Backs feature maps and
// every intermediate activation in the encoder-decoder.
struct Tensor3 {
    std::vector<double> values;
    int ch = 0;
    int rows = 0;
    int cols = 0;

    Tensor3() = default;
    Tensor3(int c, int r, int k, double fill = 0.0)
        : values(size_t(c) * size_t(r) * size_t(k), fill), ch(c), rows(r), cols(k) {}

    size_t plane_size() const { return size_t(rows) * size_t(cols); }
    size_t size() const { return values.size(); }
    double* plane(int c) { return values.data() + size_t(c) * plane_size(); }
    const double* plane(int c) const { return values.data() + size_t(c) * plane_size(); }
    double& at(int c, int r, int k) { return values[(size_t(c) * rows + r) * cols + k]; }
    double at(int c, int r, int k) const { return values[(size_t(c) * rows + r) * cols + k]; }

    bool same_shape(const Tensor3& o) const {
        return ch == o.ch && rows == o.rows && cols == o.cols;
    }
};

} // namespace qsep
