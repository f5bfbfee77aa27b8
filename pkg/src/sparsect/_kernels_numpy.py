"""Pure-numpy fallback kernels, signature-compatible with ``_kernels_numba``.

Ray tracing vectorizes the crossing computation within each ray; the Poisson
sampler reuses the same inversion walk in plain Python.  Slower than the numba
path (see ``benchmarks/bench_backends.py``) but dependency-free.
"""

import math

import numpy as np


def _clip_to_box(nx, ny, dx, dy, xmin, ymin, p0x, p0y, rdx, rdy):
    a0, a1 = 0.0, 1.0
    if rdx != 0.0:
        tx0 = (xmin - p0x) / rdx
        tx1 = (xmin + nx * dx - p0x) / rdx
        if tx0 > tx1:
            tx0, tx1 = tx1, tx0
        a0 = max(a0, tx0)
        a1 = min(a1, tx1)
    elif p0x <= xmin or p0x >= xmin + nx * dx:
        return None
    if rdy != 0.0:
        ty0 = (ymin - p0y) / rdy
        ty1 = (ymin + ny * dy - p0y) / rdy
        if ty0 > ty1:
            ty0, ty1 = ty1, ty0
        a0 = max(a0, ty0)
        a1 = min(a1, ty1)
    elif p0y <= ymin or p0y >= ymin + ny * dy:
        return None
    if a0 >= a1:
        return None
    return a0, a1


def _segments(nx, ny, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y):
    """Per-ray pixel indices and intersection lengths, or None for a miss."""
    rdx = p1x - p0x
    rdy = p1y - p0y
    length = math.hypot(rdx, rdy)
    if length == 0.0:
        return None
    clipped = _clip_to_box(nx, ny, dx, dy, xmin, ymin, p0x, p0y, rdx, rdy)
    if clipped is None:
        return None
    a0, a1 = clipped

    crossings = [np.array([a0, a1])]
    if rdx != 0.0:
        ks = np.arange(nx + 1, dtype=np.float64)
        ax = (xmin + ks * dx - p0x) / rdx
        crossings.append(ax[(ax > a0) & (ax < a1)])
    if rdy != 0.0:
        ks = np.arange(ny + 1, dtype=np.float64)
        ay = (ymin + ks * dy - p0y) / rdy
        crossings.append(ay[(ay > a0) & (ay < a1)])
    alphas = np.sort(np.concatenate(crossings))
    mids = 0.5 * (alphas[:-1] + alphas[1:])
    seg = np.diff(alphas) * length
    ix = np.floor((p0x + mids * rdx - xmin) / dx).astype(np.intp)
    iy = np.floor((p0y + mids * rdy - ymin) / dy).astype(np.intp)
    ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (seg > 0)
    return iy[ok], ix[ok], seg[ok]


def project_rays(values, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y, out):
    ny, nx = values.shape
    for r in range(p0x.shape[0]):
        segs = _segments(nx, ny, dx, dy, xmin, ymin, p0x[r], p0y[r], p1x[r], p1y[r])
        if segs is None:
            out[r] = 0.0
        else:
            iy, ix, seg = segs
            out[r] = float(np.dot(seg, values[iy, ix]))


def backproject_rays(ray_vals, dx, dy, xmin, ymin, p0x, p0y, p1x, p1y, out):
    ny, nx = out.shape
    for r in range(p0x.shape[0]):
        segs = _segments(nx, ny, dx, dy, xmin, ymin, p0x[r], p0y[r], p1x[r], p1y[r])
        if segs is not None:
            iy, ix, seg = segs
            np.add.at(out, (iy, ix), seg * ray_vals[r])


def _poisson_inv(lam, u):
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


def poisson_from_streams(means, uniforms, normals, approx_threshold, out):
    for i in range(means.shape[0]):
        lam = means[i]
        if lam <= 0.0:
            out[i] = 0.0
        elif lam > approx_threshold:
            out[i] = max(math.floor(lam + math.sqrt(lam) * normals[i] + 0.5), 0.0)
        else:
            out[i] = _poisson_inv(lam, uniforms[i])
