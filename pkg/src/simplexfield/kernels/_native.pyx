# Compiled core of the hash-grid encoding and ray compositing kernels.
# Semantics must match kernels/reference.py exactly; the test suite
# cross-checks both backends.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expf, log1p, log1pf

cnp.import_array()

ctypedef fused real:
    float
    double

cdef double _OPACITY_EPS = 1e-6


def softplus_impl(real[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    if real is float:
        out_arr = np.empty(n, dtype=np.float32)
    else:
        out_arr = np.empty(n, dtype=np.float64)
    cdef real[::1] out = out_arr
    cdef Py_ssize_t i
    cdef real v
    with nogil:
        for i in range(n):
            v = x[i]
            if real is float:
                out[i] = v + log1pf(expf(-v)) if v > 0 else log1pf(expf(v))
            else:
                out[i] = v + log1p(exp(-v)) if v > 0 else log1p(exp(v))
    return out_arr


def sigmoid_impl(real[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    if real is float:
        out_arr = np.empty(n, dtype=np.float32)
    else:
        out_arr = np.empty(n, dtype=np.float64)
    cdef real[::1] out = out_arr
    cdef Py_ssize_t i
    cdef real v
    with nogil:
        for i in range(n):
            v = x[i]
            if real is float:
                out[i] = 1.0 / (1.0 + expf(-v))
            else:
                out[i] = 1.0 / (1.0 + exp(-v))
    return out_arr

def hash_encode_forward_impl(real[:, ::1] points, real[:, ::1] tables,
                             int[::1] level_res, long long[::1] row_offset,
                             unsigned char[::1] hashed,
                             double[::1] lo, double[::1] inv_extent, int feats):
    cdef Py_ssize_t n = points.shape[0]
    cdef int levels = level_res.shape[0]
    if real is float:
        out_arr = np.zeros((n, levels * feats), dtype=np.float32)
    else:
        out_arr = np.zeros((n, levels * feats), dtype=np.float64)
    cdef real[:, ::1] out = out_arr

    cdef Py_ssize_t b
    cdef int lvl, f, cx, cy, cz, ob
    cdef long long res, side, base, row, n_rows, ix, iy, iz
    cdef unsigned int mask, hpart
    cdef unsigned int hx[2]
    cdef unsigned int hy[2]
    cdef unsigned int hz[2]
    cdef long long dx[2]
    cdef long long dy[2]
    cdef double wx[2]
    cdef double wy[2]
    cdef double wz[2]
    cdef double x, y, z, fx, fy, fz, w, wxy
    cdef bint use_hash

    with nogil:
        for b in range(n):
            for lvl in range(levels):
                res = level_res[lvl]
                side = res + 1
                base = row_offset[lvl]
                n_rows = row_offset[lvl + 1] - base
                use_hash = hashed[lvl] != 0
                mask = <unsigned int> (n_rows - 1)
                ob = lvl * feats

                x = (<double> points[b, 0] - lo[0]) * inv_extent[0]
                y = (<double> points[b, 1] - lo[1]) * inv_extent[1]
                z = (<double> points[b, 2] - lo[2]) * inv_extent[2]
                if x < 0.0: x = 0.0
                if x > 1.0: x = 1.0
                if y < 0.0: y = 0.0
                if y > 1.0: y = 1.0
                if z < 0.0: z = 0.0
                if z > 1.0: z = 1.0
                x *= res; y *= res; z *= res
                ix = <long long> x
                iy = <long long> y
                iz = <long long> z
                if ix > res - 1: ix = res - 1
                if iy > res - 1: iy = res - 1
                if iz > res - 1: iz = res - 1
                fx = x - ix; fy = y - iy; fz = z - iz
                wx[0] = 1.0 - fx; wx[1] = fx
                wy[0] = 1.0 - fy; wy[1] = fy
                wz[0] = 1.0 - fz; wz[1] = fz
                if use_hash:
                    hx[0] = (<unsigned int> ix) * 73856093u
                    hx[1] = (<unsigned int> (ix + 1)) * 73856093u
                    hy[0] = (<unsigned int> iy) * 19349663u
                    hy[1] = (<unsigned int> (iy + 1)) * 19349663u
                    hz[0] = (<unsigned int> iz) * 83492791u
                    hz[1] = (<unsigned int> (iz + 1)) * 83492791u
                else:
                    dx[0] = ix * side; dx[1] = (ix + 1) * side
                    dy[0] = iy; dy[1] = iy + 1

                for cx in range(2):
                    for cy in range(2):
                        wxy = wx[cx] * wy[cy]
                        if use_hash:
                            hpart = hx[cx] ^ hy[cy]
                        for cz in range(2):
                            w = wxy * wz[cz]
                            if use_hash:
                                row = base + <long long> ((hpart ^ hz[cz]) & mask)
                            else:
                                row = base + (dx[cx] + dy[cy]) * side + iz + cz
                            if feats == 2:
                                out[b, ob] += <real> w * tables[row, 0]
                                out[b, ob + 1] += <real> w * tables[row, 1]
                            else:
                                for f in range(feats):
                                    out[b, ob + f] += <real> w * tables[row, f]
    return out_arr


def hash_encode_backward_impl(real[:, ::1] points, real[:, ::1] dfeatures,
                              int[::1] level_res, long long[::1] row_offset,
                              unsigned char[::1] hashed,
                              double[::1] lo, double[::1] inv_extent,
                              int feats, long long total_rows):
    cdef Py_ssize_t n = points.shape[0]
    cdef int levels = level_res.shape[0]
    if real is float:
        out_arr = np.zeros((total_rows, feats), dtype=np.float32)
    else:
        out_arr = np.zeros((total_rows, feats), dtype=np.float64)
    cdef real[:, ::1] out = out_arr

    cdef Py_ssize_t b
    cdef int lvl, f, cx, cy, cz, ob
    cdef long long res, side, base, row, n_rows, ix, iy, iz
    cdef unsigned int mask, hpart
    cdef unsigned int hx[2]
    cdef unsigned int hy[2]
    cdef unsigned int hz[2]
    cdef long long dx[2]
    cdef long long dy[2]
    cdef double wx[2]
    cdef double wy[2]
    cdef double wz[2]
    cdef double x, y, z, fx, fy, fz, w, wxy
    cdef bint use_hash

    with nogil:
        for b in range(n):
            for lvl in range(levels):
                res = level_res[lvl]
                side = res + 1
                base = row_offset[lvl]
                n_rows = row_offset[lvl + 1] - base
                use_hash = hashed[lvl] != 0
                mask = <unsigned int> (n_rows - 1)
                ob = lvl * feats

                x = (<double> points[b, 0] - lo[0]) * inv_extent[0]
                y = (<double> points[b, 1] - lo[1]) * inv_extent[1]
                z = (<double> points[b, 2] - lo[2]) * inv_extent[2]
                if x < 0.0: x = 0.0
                if x > 1.0: x = 1.0
                if y < 0.0: y = 0.0
                if y > 1.0: y = 1.0
                if z < 0.0: z = 0.0
                if z > 1.0: z = 1.0
                x *= res; y *= res; z *= res
                ix = <long long> x
                iy = <long long> y
                iz = <long long> z
                if ix > res - 1: ix = res - 1
                if iy > res - 1: iy = res - 1
                if iz > res - 1: iz = res - 1
                fx = x - ix; fy = y - iy; fz = z - iz
                wx[0] = 1.0 - fx; wx[1] = fx
                wy[0] = 1.0 - fy; wy[1] = fy
                wz[0] = 1.0 - fz; wz[1] = fz
                if use_hash:
                    hx[0] = (<unsigned int> ix) * 73856093u
                    hx[1] = (<unsigned int> (ix + 1)) * 73856093u
                    hy[0] = (<unsigned int> iy) * 19349663u
                    hy[1] = (<unsigned int> (iy + 1)) * 19349663u
                    hz[0] = (<unsigned int> iz) * 83492791u
                    hz[1] = (<unsigned int> (iz + 1)) * 83492791u
                else:
                    dx[0] = ix * side; dx[1] = (ix + 1) * side
                    dy[0] = iy; dy[1] = iy + 1

                for cx in range(2):
                    for cy in range(2):
                        wxy = wx[cx] * wy[cy]
                        if use_hash:
                            hpart = hx[cx] ^ hy[cy]
                        for cz in range(2):
                            w = wxy * wz[cz]
                            if use_hash:
                                row = base + <long long> ((hpart ^ hz[cz]) & mask)
                            else:
                                row = base + (dx[cx] + dy[cy]) * side + iz + cz
                            if feats == 2:
                                out[row, 0] += <real> w * dfeatures[b, ob]
                                out[row, 1] += <real> w * dfeatures[b, ob + 1]
                            else:
                                for f in range(feats):
                                    out[row, f] += <real> w * dfeatures[b, ob + f]
    return out_arr


def composite_forward_impl(real[:, ::1] tau, real[:, :, ::1] radiance,
                           real[:, ::1] deltas, real[:, ::1] dists, real[::1] background):
    cdef Py_ssize_t r_count = tau.shape[0]
    cdef Py_ssize_t s_count = tau.shape[1]
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    color_arr = np.zeros((r_count, 3), dtype=dtype)
    opacity_arr = np.zeros(r_count, dtype=dtype)
    depth_arr = np.zeros(r_count, dtype=dtype)
    alpha_arr = np.zeros((r_count, s_count), dtype=dtype)
    trans_arr = np.zeros((r_count, s_count), dtype=dtype)
    weights_arr = np.zeros((r_count, s_count), dtype=dtype)
    trans_end_arr = np.zeros(r_count, dtype=dtype)
    cdef real[:, ::1] color = color_arr
    cdef real[::1] opacity = opacity_arr
    cdef real[::1] depth = depth_arr
    cdef real[:, ::1] alpha = alpha_arr
    cdef real[:, ::1] trans = trans_arr
    cdef real[:, ::1] weights = weights_arr
    cdef real[::1] trans_end = trans_end_arr

    cdef Py_ssize_t r, s
    cdef int c
    cdef double t_acc, a, w, op, swd, clamped
    cdef double col0, col1, col2

    with nogil:
        for r in range(r_count):
            t_acc = 1.0
            op = 0.0
            swd = 0.0
            col0 = 0.0; col1 = 0.0; col2 = 0.0
            for s in range(s_count):
                a = 1.0 - exp(-(<double> tau[r, s]) * (<double> deltas[r, s]))
                w = a * t_acc
                alpha[r, s] = <real> a
                trans[r, s] = <real> t_acc
                weights[r, s] = <real> w
                col0 += w * <double> radiance[r, s, 0]
                col1 += w * <double> radiance[r, s, 1]
                col2 += w * <double> radiance[r, s, 2]
                op += w
                swd += w * <double> dists[r, s]
                t_acc *= 1.0 - a
            trans_end[r] = <real> t_acc
            color[r, 0] = <real> (col0 + t_acc * <double> background[0])
            color[r, 1] = <real> (col1 + t_acc * <double> background[1])
            color[r, 2] = <real> (col2 + t_acc * <double> background[2])
            opacity[r] = <real> op
            clamped = op if op > _OPACITY_EPS else _OPACITY_EPS
            depth[r] = <real> (swd / clamped)
    return color_arr, opacity_arr, depth_arr, alpha_arr, trans_arr, weights_arr, trans_end_arr


def composite_backward_impl(real[:, ::1] alpha, real[:, ::1] trans, real[:, ::1] weights,
                            real[::1] trans_end, real[:, :, ::1] radiance,
                            real[:, ::1] deltas, real[:, ::1] dists, real[::1] background,
                            real[::1] opacity, real[::1] depth,
                            real[:, ::1] dcolor, real[::1] dopacity, real[::1] ddepth,
                            bint has_dopacity, bint has_ddepth):
    cdef Py_ssize_t r_count = alpha.shape[0]
    cdef Py_ssize_t s_count = alpha.shape[1]
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    dtau_arr = np.zeros((r_count, s_count), dtype=dtype)
    drad_arr = np.zeros((r_count, s_count, 3), dtype=dtype)
    cdef real[:, ::1] dtau = dtau_arr
    cdef real[:, :, ::1] drad = drad_arr

    cdef Py_ssize_t r, s
    cdef double h_end, racc, g, dterm, clamped, op, w
    cdef bint unclamped

    with nogil:
        for r in range(r_count):
            h_end = (<double> dcolor[r, 0]) * (<double> background[0]) \
                  + (<double> dcolor[r, 1]) * (<double> background[1]) \
                  + (<double> dcolor[r, 2]) * (<double> background[2])
            op = <double> opacity[r]
            clamped = op if op > _OPACITY_EPS else _OPACITY_EPS
            unclamped = op > _OPACITY_EPS
            racc = 0.0
            for s in range(s_count - 1, -1, -1):
                g = (<double> dcolor[r, 0]) * (<double> radiance[r, s, 0]) \
                  + (<double> dcolor[r, 1]) * (<double> radiance[r, s, 1]) \
                  + (<double> dcolor[r, 2]) * (<double> radiance[r, s, 2])
                if has_dopacity:
                    g += <double> dopacity[r]
                if has_ddepth:
                    dterm = <double> dists[r, s]
                    if unclamped:
                        dterm -= <double> depth[r]
                    g += (<double> ddepth[r]) * dterm / clamped
                w = <double> weights[r, s]
                dtau[r, s] = <real> ((<double> deltas[r, s]) * (
                    (1.0 - <double> alpha[r, s]) * (<double> trans[r, s]) * g
                    - racc - h_end * (<double> trans_end[r])))
                drad[r, s, 0] = <real> ((<double> dcolor[r, 0]) * w)
                drad[r, s, 1] = <real> ((<double> dcolor[r, 1]) * w)
                drad[r, s, 2] = <real> ((<double> dcolor[r, 2]) * w)
                racc += g * w
    return dtau_arr, drad_arr
