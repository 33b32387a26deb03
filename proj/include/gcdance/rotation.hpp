#pragma once

#include <array>
#include <cmath>

#include "gcdance/common.hpp"

namespace gcdance {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }
inline Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            c[static_cast<std::size_t>(i * 3 + j)] = a[static_cast<std::size_t>(i * 3)] * b[static_cast<std::size_t>(j)] +
                                                     a[static_cast<std::size_t>(i * 3 + 1)] * b[static_cast<std::size_t>(3 + j)] +
                                                     a[static_cast<std::size_t>(i * 3 + 2)] * b[static_cast<std::size_t>(6 + j)];
    return c;
}

inline Vec3 mat3_apply(const Mat3& m, const Vec3& v) {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

inline Mat3 mat3_transpose(const Mat3& m) {
    return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
}

// Continuous 6D rotation parameterization: the 6-vector holds the first two
// columns of the rotation matrix; reconstruction is Gram-Schmidt on those two
// columns with the third column completed by a cross product.
inline Mat3 rot6d_to_matrix(const double r[6]) {
    Vec3 a{r[0], r[1], r[2]};
    Vec3 b{r[3], r[4], r[5]};
    double na = norm3(a);
    require(na >= 1e-8, errc::numeric, "rot6d: first column norm below 1e-8");
    Vec3 c1{a[0] / na, a[1] / na, a[2] / na};
    double d = dot3(c1, b);
    Vec3 u{b[0] - d * c1[0], b[1] - d * c1[1], b[2] - d * c1[2]};
    double nu = norm3(u);
    require(nu >= 1e-8, errc::numeric, "rot6d: columns colinear within tolerance");
    Vec3 c2{u[0] / nu, u[1] / nu, u[2] / nu};
    Vec3 c3 = cross3(c1, c2);
    return {c1[0], c2[0], c3[0], c1[1], c2[1], c3[1], c1[2], c2[2], c3[2]};
}

// First two columns of R. rot6d_to_matrix(matrix_to_rot6d(R)) == R for
// orthonormal R with det +1.
inline void matrix_to_rot6d(const Mat3& m, double r[6]) {
    // validate orthonormality within 1e-6 and det +1
    Mat3 mtm = mat3_mul(mat3_transpose(m), m);
    Mat3 eye = mat3_identity();
    for (int i = 0; i < 9; ++i)
        require(std::abs(mtm[static_cast<std::size_t>(i)] - eye[static_cast<std::size_t>(i)]) < 1e-6,
                errc::numeric, "matrix_to_rot6d: input is not orthonormal");
    double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                 m[2] * (m[3] * m[7] - m[4] * m[6]);
    require(det > 0.0, errc::numeric, "matrix_to_rot6d: determinant must be +1");
    r[0] = m[0];
    r[1] = m[3];
    r[2] = m[6];
    r[3] = m[1];
    r[4] = m[4];
    r[5] = m[7];
}

inline Mat3 axis_angle_to_matrix(Vec3 axis, double angle) {
    double n = norm3(axis);
    require(n > 0.0, errc::numeric, "axis_angle: zero axis");
    Vec3 k{axis[0] / n, axis[1] / n, axis[2] / n};
    double c = std::cos(angle), s = std::sin(angle), v = 1.0 - c;
    return {c + k[0] * k[0] * v,        k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s,
            k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v,        k[1] * k[2] * v - k[0] * s,
            k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v};
}

// Adjoint of rot6d_to_matrix: given dL/dR accumulate dL/dr into r_bar[6].
inline void rot6d_backward(const double r[6], const Mat3& r_bar_mat, double r_bar[6]) {
    Vec3 a{r[0], r[1], r[2]};
    Vec3 b{r[3], r[4], r[5]};
    double na = norm3(a);
    Vec3 c1{a[0] / na, a[1] / na, a[2] / na};
    double d = dot3(c1, b);
    Vec3 u{b[0] - d * c1[0], b[1] - d * c1[1], b[2] - d * c1[2]};
    double nu = norm3(u);
    Vec3 c2{u[0] / nu, u[1] / nu, u[2] / nu};

    Vec3 c1b{r_bar_mat[0], r_bar_mat[3], r_bar_mat[6]};
    Vec3 c2b{r_bar_mat[1], r_bar_mat[4], r_bar_mat[7]};
    Vec3 c3b{r_bar_mat[2], r_bar_mat[5], r_bar_mat[8]};

    // c3 = c1 x c2
    Vec3 t = cross3(c2, c3b);
    for (int i = 0; i < 3; ++i) c1b[static_cast<std::size_t>(i)] += t[static_cast<std::size_t>(i)];
    t = cross3(c3b, c1);
    for (int i = 0; i < 3; ++i) c2b[static_cast<std::size_t>(i)] += t[static_cast<std::size_t>(i)];

    // c2 = u / |u|
    double c2dot = dot3(c2b, c2);
    Vec3 ub{(c2b[0] - c2dot * c2[0]) / nu, (c2b[1] - c2dot * c2[1]) / nu,
            (c2b[2] - c2dot * c2[2]) / nu};

    // u = b - (c1.b) c1
    double ubc1 = dot3(ub, c1);
    Vec3 bb{ub[0] - ubc1 * c1[0], ub[1] - ubc1 * c1[1], ub[2] - ubc1 * c1[2]};
    for (int i = 0; i < 3; ++i)
        c1b[static_cast<std::size_t>(i)] += -ubc1 * b[static_cast<std::size_t>(i)] - d * ub[static_cast<std::size_t>(i)];

    // c1 = a / |a|
    double c1dot = dot3(c1b, c1);
    Vec3 ab{(c1b[0] - c1dot * c1[0]) / na, (c1b[1] - c1dot * c1[1]) / na,
            (c1b[2] - c1dot * c1[2]) / na};

    r_bar[0] += ab[0];
    r_bar[1] += ab[1];
    r_bar[2] += ab[2];
    r_bar[3] += bb[0];
    r_bar[4] += bb[1];
    r_bar[5] += bb[2];
}

}  // namespace gcdance
