#pragma once

// Tiny 3x3 solve/invert for the cosine row fits. Internal.

#include <array>
#include <cmath>

namespace mwc::detail {

inline bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b,
                   std::array<double, 3>& x) {
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (std::abs(a[piv][c]) < 1e-300) return false;
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (int r = c + 1; r < 3; ++r) {
            double f = a[r][c] / a[c][c];
            for (int k = c; k < 3; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double s = b[r];
        for (int k = r + 1; k < 3; ++k) s -= a[r][k] * x[k];
        x[r] = s / a[r][r];
    }
    return true;
}

inline bool invert3(const std::array<std::array<double, 3>, 3>& a,
                    std::array<std::array<double, 3>, 3>& inv) {
    double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                 a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                 a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if (std::abs(det) < 1e-300) return false;
    double d = 1.0 / det;
    inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * d;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * d;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * d;
    inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * d;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * d;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * d;
    inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * d;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * d;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * d;
    return true;
}

}  // namespace mwc::detail
