# cython: language_level=3
"""Compiled per-sample gradient kernels.

Same contract and math as ``_gradnumpy``; the sample loop and the layer
loops run in C, which matters because the sensing controller requests
gradients one sample at a time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

DEF ACT_RELU = 0
DEF ACT_TANH = 1
DEF LOSS_CE = 0
DEF LOSS_SE = 1

cdef double PROB_CLAMP = 1e-12


cdef inline void _layer_offsets(
    const long[::1] widths,
    long[::1] w_off,
    long[::1] b_off,
    long[::1] a_off,
    long[::1] z_off,
) noexcept:
    cdef Py_ssize_t n_layers = widths.shape[0] - 1
    cdef Py_ssize_t l
    cdef long off = 0, aoff = 0, zoff = 0
    for l in range(n_layers):
        w_off[l] = off
        b_off[l] = off + widths[l] * widths[l + 1]
        off = b_off[l] + widths[l + 1]
        a_off[l] = aoff
        aoff += widths[l]
        z_off[l] = zoff
        zoff += widths[l + 1]
    a_off[n_layers] = aoff


cdef inline void _forward_one(
    const double[::1] weights,
    const long[::1] widths,
    int act_id,
    const double[:, ::1] X,
    Py_ssize_t s,
    const long[::1] w_off,
    const long[::1] b_off,
    const long[::1] a_off,
    const long[::1] z_off,
    double[::1] acts,
    double[::1] zs,
) noexcept:
    cdef Py_ssize_t n_layers = widths.shape[0] - 1
    cdef Py_ssize_t l, i, j
    cdef long fi, fo, row
    cdef double acc
    for i in range(widths[0]):
        acts[i] = X[s, i]
    for l in range(n_layers):
        fi = widths[l]
        fo = widths[l + 1]
        for j in range(fo):
            acc = weights[b_off[l] + j]
            row = w_off[l] + j * fi
            for i in range(fi):
                acc += weights[row + i] * acts[a_off[l] + i]
            zs[z_off[l] + j] = acc
            if l < n_layers - 1:
                if act_id == ACT_RELU:
                    acts[a_off[l + 1] + j] = acc if acc > 0.0 else 0.0
                else:
                    acts[a_off[l + 1] + j] = tanh(acc)
            else:
                acts[a_off[l + 1] + j] = acc


cdef inline double _loss_delta_one(
    const double[::1] zs,
    long z_out,
    long out_dim,
    long label,
    int loss_id,
    double[::1] delta,
) noexcept:
    """Fill delta with dL/dz at the output layer; return the sample loss."""
    cdef Py_ssize_t j
    cdef double m, tot, p, diff, loss, target
    if loss_id == LOSS_CE:
        m = zs[z_out]
        for j in range(1, out_dim):
            if zs[z_out + j] > m:
                m = zs[z_out + j]
        tot = 0.0
        for j in range(out_dim):
            delta[j] = exp(zs[z_out + j] - m)
            tot += delta[j]
        for j in range(out_dim):
            delta[j] /= tot
        p = delta[label]
        if p < PROB_CLAMP:
            p = PROB_CLAMP
        loss = -log(p)
        delta[label] -= 1.0
        return loss
    loss = 0.0
    for j in range(out_dim):
        if out_dim == 1:
            target = <double> label
        elif j == label:
            target = 1.0
        else:
            target = 0.0
        diff = zs[z_out + j] - target
        loss += diff * diff
        delta[j] = 2.0 * diff
    return loss


def per_sample_losses(
    const double[::1] weights,
    const long[::1] widths,
    int act_id,
    int loss_id,
    const double[:, ::1] X,
    const long[::1] y,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_layers = widths.shape[0] - 1
    cdef Py_ssize_t s, l
    cdef long sum_w = 0, sum_z = 0, max_w = 0

    for l in range(n_layers + 1):
        sum_w += widths[l]
        if widths[l] > max_w:
            max_w = widths[l]
    sum_z = sum_w - widths[0]

    offs = np.empty(4 * (n_layers + 1), dtype=np.int64)
    cdef long[::1] w_off = offs[0 : n_layers + 1]
    cdef long[::1] b_off = offs[n_layers + 1 : 2 * (n_layers + 1)]
    cdef long[::1] a_off = offs[2 * (n_layers + 1) : 3 * (n_layers + 1)]
    cdef long[::1] z_off = offs[3 * (n_layers + 1) : 4 * (n_layers + 1)]
    _layer_offsets(widths, w_off, b_off, a_off, z_off)

    acts_arr = np.empty(sum_w, dtype=np.float64)
    zs_arr = np.empty(sum_z, dtype=np.float64)
    delta_arr = np.empty(max_w, dtype=np.float64)
    losses_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] acts = acts_arr
    cdef double[::1] zs = zs_arr
    cdef double[::1] delta = delta_arr
    cdef double[::1] losses = losses_arr

    for s in range(n):
        _forward_one(weights, widths, act_id, X, s, w_off, b_off, a_off, z_off, acts, zs)
        losses[s] = _loss_delta_one(
            zs, z_off[n_layers - 1], widths[n_layers], y[s], loss_id, delta
        )
    return losses_arr


def per_sample_grads(
    const double[::1] weights,
    const long[::1] widths,
    int act_id,
    int loss_id,
    const double[:, ::1] X,
    const long[::1] y,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = weights.shape[0]
    cdef Py_ssize_t n_layers = widths.shape[0] - 1
    cdef Py_ssize_t s, l, i, j
    cdef long fi, fo, row, base
    cdef long sum_w = 0, sum_z = 0, max_w = 0
    cdef double dj, z, th

    for l in range(n_layers + 1):
        sum_w += widths[l]
        if widths[l] > max_w:
            max_w = widths[l]
    sum_z = sum_w - widths[0]

    offs = np.empty(4 * (n_layers + 1), dtype=np.int64)
    cdef long[::1] w_off = offs[0 : n_layers + 1]
    cdef long[::1] b_off = offs[n_layers + 1 : 2 * (n_layers + 1)]
    cdef long[::1] a_off = offs[2 * (n_layers + 1) : 3 * (n_layers + 1)]
    cdef long[::1] z_off = offs[3 * (n_layers + 1) : 4 * (n_layers + 1)]
    _layer_offsets(widths, w_off, b_off, a_off, z_off)

    acts_arr = np.empty(sum_w, dtype=np.float64)
    zs_arr = np.empty(sum_z, dtype=np.float64)
    delta_arr = np.empty(max_w, dtype=np.float64)
    dprev_arr = np.empty(max_w, dtype=np.float64)
    losses_arr = np.empty(n, dtype=np.float64)
    grads_arr = np.empty((n, d), dtype=np.float64)
    cdef double[::1] acts = acts_arr
    cdef double[::1] zs = zs_arr
    cdef double[::1] delta = delta_arr
    cdef double[::1] dprev = dprev_arr
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] grads = grads_arr
    cdef double[::1] tmp

    for s in range(n):
        _forward_one(weights, widths, act_id, X, s, w_off, b_off, a_off, z_off, acts, zs)
        losses[s] = _loss_delta_one(
            zs, z_off[n_layers - 1], widths[n_layers], y[s], loss_id, delta
        )
        for l in range(n_layers - 1, -1, -1):
            fi = widths[l]
            fo = widths[l + 1]
            base = w_off[l]
            for j in range(fo):
                dj = delta[j]
                row = base + j * fi
                for i in range(fi):
                    grads[s, row + i] = dj * acts[a_off[l] + i]
                grads[s, b_off[l] + j] = dj
            if l > 0:
                for i in range(fi):
                    dprev[i] = 0.0
                for j in range(fo):
                    dj = delta[j]
                    row = base + j * fi
                    for i in range(fi):
                        dprev[i] += dj * weights[row + i]
                for i in range(fi):
                    z = zs[z_off[l - 1] + i]
                    if act_id == ACT_RELU:
                        if z <= 0.0:
                            dprev[i] = 0.0
                    else:
                        th = tanh(z)
                        dprev[i] *= 1.0 - th * th
                tmp = delta
                delta = dprev
                dprev = tmp
    return grads_arr, losses_arr
