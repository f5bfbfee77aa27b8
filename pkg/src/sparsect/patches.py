"""Patch extraction/aggregation with wrap-around boundaries.

Patch ``j`` sits at grid offset ``(stride_y * jy, stride_x * jx)`` with ``j``
running row-major over offsets; indices wrap at the image borders.  Within a
patch, vectorization is column-major: flat index ``k = px * patch_h + py``.
This order is load-bearing because the learned transform is order-sensitive.

With wrap-around and strides dividing the image dims, the stacked operator
(transform applied to every patch) has a normal matrix that is block-circulant
with circulant blocks at stride 1, so the 2D DFT diagonalizes it exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PatchSpec:
    patch_w: int
    patch_h: int
    stride_x: int = 1
    stride_y: int = 1

    def __post_init__(self):
        if min(self.patch_w, self.patch_h, self.stride_x, self.stride_y) < 1:
            raise ConfigError("patch dims and strides must be >= 1")

    @property
    def n(self):
        return self.patch_w * self.patch_h

    def validate_for(self, height, width):
        if self.patch_w > width or self.patch_h > height:
            raise ConfigError("patch dims must not exceed image dims")
        if width % self.stride_x or height % self.stride_y:
            raise ConfigError("strides must divide image dims")

    def num_patches(self, height, width):
        self.validate_for(height, width)
        return (width // self.stride_x) * (height // self.stride_y)

    def coverage(self):
        """Pixel cover count n/(stride_x*stride_y); exact when strides divide patch dims."""
        return self.n / (self.stride_x * self.stride_y)


def extract(values, spec: PatchSpec):
    """All wrap-around patches as a (J, n) matrix."""
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    spec.validate_for(h, w)
    jj = spec.num_patches(h, w)
    out = np.empty((jj, spec.n))
    for px in range(spec.patch_w):
        for py in range(spec.patch_h):
            k = px * spec.patch_h + py
            shifted = np.roll(values, (-py, -px), axis=(0, 1))
            out[:, k] = shifted[:: spec.stride_y, :: spec.stride_x].ravel()
    return out


def aggregate(patch_mat, spec: PatchSpec, height, width):
    """Exact adjoint of :func:`extract`: scatter patch entries back, wrapping."""
    patch_mat = np.asarray(patch_mat, dtype=np.float64)
    spec.validate_for(height, width)
    jj = spec.num_patches(height, width)
    if patch_mat.shape != (jj, spec.n):
        raise ConfigError(f"patch matrix shape {patch_mat.shape} != ({jj}, {spec.n})")
    gh = height // spec.stride_y
    gw = width // spec.stride_x
    out = np.zeros((height, width))
    lattice = np.zeros((height, width))
    for px in range(spec.patch_w):
        for py in range(spec.patch_h):
            k = px * spec.patch_h + py
            lattice[:: spec.stride_y, :: spec.stride_x] = patch_mat[:, k].reshape(gh, gw)
            out += np.roll(lattice, (py, px), axis=(0, 1))
            if spec.stride_x > 1 or spec.stride_y > 1:
                lattice[:: spec.stride_y, :: spec.stride_x] = 0.0
    return out


def apply_psi_tilde(values, psi, spec: PatchSpec):
    """Row j of the result is psi @ (patch j): the stacked transform output."""
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (spec.n, spec.n):
        raise ConfigError(f"psi must be {spec.n}x{spec.n}")
    return extract(values, spec) @ psi.T


def apply_psi_tilde_adjoint(codes, psi, spec: PatchSpec, height, width):
    """Adjoint of :func:`apply_psi_tilde`: psi^T per row, then aggregate."""
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (spec.n, spec.n):
        raise ConfigError(f"psi must be {spec.n}x{spec.n}")
    return aggregate(np.asarray(codes) @ psi, spec, height, width)


class PsiTilde:
    """Stacked transform operator bound to a spec and image shape."""

    def __init__(self, psi, spec: PatchSpec, height, width):
        self.psi = np.asarray(psi, dtype=np.float64)
        self.spec = spec
        self.height = height
        self.width = width
        self.num_patches = spec.num_patches(height, width)
        if self.psi.shape != (spec.n, spec.n):
            raise ConfigError(f"psi must be {spec.n}x{spec.n}")

    def forward(self, values):
        return apply_psi_tilde(values, self.psi, self.spec)

    def adjoint(self, codes):
        return apply_psi_tilde_adjoint(codes, self.psi, self.spec, self.height, self.width)

    def normal(self, values):
        return self.adjoint(self.forward(values))
