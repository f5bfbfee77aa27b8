"""Numba-compiled hot kernels: Siddon ray tracing and Poisson sampling.

Signature-compatible with ``_kernels_numpy``; the backend is chosen in
``backends``.  All loops are serial so results are deterministic.
"""

import math

from numba import njit


@njit(cache=True)
def _trace_forward(values, nx, ny, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y):
    # Exact radiological path: sum of (intersection length) * (pixel value)
    # along the segment p0 -> p1 clipped to the grid box.
    rdx = p1x - p0x
    rdy = p1y - p0y
    length = math.sqrt(rdx * rdx + rdy * rdy)
    if length == 0.0:
        return 0.0
    a0 = 0.0
    a1 = 1.0
    if rdx != 0.0:
        tx0 = (xmin - p0x) / rdx
        tx1 = (xmin + nx * dx - p0x) / rdx
        if tx0 > tx1:
            tx0, tx1 = tx1, tx0
        if tx0 > a0:
            a0 = tx0
        if tx1 < a1:
            a1 = tx1
    elif p0x <= xmin or p0x >= xmin + nx * dx:
        return 0.0
    if rdy != 0.0:
        ty0 = (ymin - p0y) / rdy
        ty1 = (ymin + ny * dy - p0y) / rdy
        if ty0 > ty1:
            ty0, ty1 = ty1, ty0
        if ty0 > a0:
            a0 = ty0
        if ty1 < a1:
            a1 = ty1
    elif p0y <= ymin or p0y >= ymin + ny * dy:
        return 0.0
    if a0 >= a1:
        return 0.0

    if rdx > 0.0:
        kx = math.floor((p0x + a0 * rdx - xmin) / dx) + 1.0
        ax = (xmin + kx * dx - p0x) / rdx
        dax = dx / rdx
    elif rdx < 0.0:
        kx = math.ceil((p0x + a0 * rdx - xmin) / dx) - 1.0
        ax = (xmin + kx * dx - p0x) / rdx
        dax = -dx / rdx
    else:
        ax = math.inf
        dax = math.inf
    if rdy > 0.0:
        ky = math.floor((p0y + a0 * rdy - ymin) / dy) + 1.0
        ay = (ymin + ky * dy - p0y) / rdy
        day = dy / rdy
    elif rdy < 0.0:
        ky = math.ceil((p0y + a0 * rdy - ymin) / dy) - 1.0
        ay = (ymin + ky * dy - p0y) / rdy
        day = -dy / rdy
    else:
        ay = math.inf
        day = math.inf

    a = a0
    acc = 0.0
    guard = 2 * (nx + ny) + 8
    while a < a1 and guard > 0:
        guard -= 1
        anext = ax if ax < ay else ay
        if anext > a1:
            anext = a1
        if anext > a:
            mid = 0.5 * (a + anext)
            ix = int(math.floor((p0x + mid * rdx - xmin) / dx))
            iy = int(math.floor((p0y + mid * rdy - ymin) / dy))
            if 0 <= ix < nx and 0 <= iy < ny:
                acc += (anext - a) * length * values[iy, ix]
        if ax <= anext:
            ax += dax
        if ay <= anext:
            ay += day
        a = anext
    return acc


@njit(cache=True)
def _trace_adjoint(out, nx, ny, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y, val):
    # Same traversal as _trace_forward with accumulate instead of read, so the
    # pair is an exact adjoint.
    rdx = p1x - p0x
    rdy = p1y - p0y
    length = math.sqrt(rdx * rdx + rdy * rdy)
    if length == 0.0:
        return
    a0 = 0.0
    a1 = 1.0
    if rdx != 0.0:
        tx0 = (xmin - p0x) / rdx
        tx1 = (xmin + nx * dx - p0x) / rdx
        if tx0 > tx1:
            tx0, tx1 = tx1, tx0
        if tx0 > a0:
            a0 = tx0
        if tx1 < a1:
            a1 = tx1
    elif p0x <= xmin or p0x >= xmin + nx * dx:
        return
    if rdy != 0.0:
        ty0 = (ymin - p0y) / rdy
        ty1 = (ymin + ny * dy - p0y) / rdy
        if ty0 > ty1:
            ty0, ty1 = ty1, ty0
        if ty0 > a0:
            a0 = ty0
        if ty1 < a1:
            a1 = ty1
    elif p0y <= ymin or p0y >= ymin + ny * dy:
        return
    if a0 >= a1:
        return

    if rdx > 0.0:
        kx = math.floor((p0x + a0 * rdx - xmin) / dx) + 1.0
        ax = (xmin + kx * dx - p0x) / rdx
        dax = dx / rdx
    elif rdx < 0.0:
        kx = math.ceil((p0x + a0 * rdx - xmin) / dx) - 1.0
        ax = (xmin + kx * dx - p0x) / rdx
        dax = -dx / rdx
    else:
        ax = math.inf
        dax = math.inf
    if rdy > 0.0:
        ky = math.floor((p0y + a0 * rdy - ymin) / dy) + 1.0
        ay = (ymin + ky * dy - p0y) / rdy
        day = dy / rdy
    elif rdy < 0.0:
        ky = math.ceil((p0y + a0 * rdy - ymin) / dy) - 1.0
        ay = (ymin + ky * dy - p0y) / rdy
        day = -dy / rdy
    else:
        ay = math.inf
        day = math.inf

    a = a0
    guard = 2 * (nx + ny) + 8
    while a < a1 and guard > 0:
        guard -= 1
        anext = ax if ax < ay else ay
        if anext > a1:
            anext = a1
        if anext > a:
            mid = 0.5 * (a + anext)
            ix = int(math.floor((p0x + mid * rdx - xmin) / dx))
            iy = int(math.floor((p0y + mid * rdy - ymin) / dy))
            if 0 <= ix < nx and 0 <= iy < ny:
                out[iy, ix] += (anext - a) * length * val
        if ax <= anext:
            ax += dax
        if ay <= anext:
            ay += day
        a = anext


@njit(cache=True)
def project_rays(values, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y, out):
    ny, nx = values.shape
    for r in range(p0x.shape[0]):
        out[r] = _trace_forward(
            values, nx, ny, dx, dy, xmin, ymin, p0x[r], p0y[r], p1x[r], p1y[r]
        )


@njit(cache=True)
def backproject_rays(ray_vals, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y, out):
    ny, nx = out.shape
    for r in range(p0x.shape[0]):
        _trace_adjoint(
            out, nx, ny, dx, dy, xmin, ymin, p0x[r], p0y[r], p1x[r], p1y[r], ray_vals[r]
        )


@njit(cache=True)
def _poisson_inv(lam, u):
    # Quantile by CDF inversion with a single uniform.  Walks from the mode
    # for large lam so the pmf recursion never underflows.
    if lam < 10.0:
        p = math.exp(-lam)
        cdf = p
        k = 0.0
        while u > cdf and k < lam + 60.0 * math.sqrt(lam) + 60.0:
            k += 1.0
            p *= lam / k
            cdf += p
        return k
    m = math.floor(lam)
    pm = math.exp(-lam + m * math.log(lam) - math.lgamma(m + 1.0))
    flo = pm
    p = pm
    j = m
    while j > 0.0 and p > pm * 1e-18:
        p *= j / lam
        j -= 1.0
        flo += p
    if u <= flo:
        p = pm
        cdf = flo
        k = m
        while k > 0.0 and u <= cdf - p:
            cdf -= p
            p *= k / lam
            k -= 1.0
        return k
    p = pm
    cdf = flo
    k = m
    kmax = lam + 60.0 * math.sqrt(lam) + 60.0
    while u > cdf and k < kmax:
        p *= lam / (k + 1.0)
        k += 1.0
        cdf += p
    return k


@njit(cache=True)
def poisson_from_streams(means, uniforms, normals, approx_threshold, out):
    for i in range(means.shape[0]):
        lam = means[i]
        if lam <= 0.0:
            out[i] = 0.0
        elif lam > approx_threshold:
            v = math.floor(lam + math.sqrt(lam) * normals[i] + 0.5)
            out[i] = v if v > 0.0 else 0.0
        else:
            out[i] = _poisson_inv(lam, uniforms[i])
