"""Ellipse phantoms, noisy scan simulation, and statistical weights.

The noise model per ray l: prelog counts
``rho_l ~ Poisson(rho0 * exp(-[A x]_l)) + Normal(0, sigma2)``, clamped below
at 1 so the log stays finite; postlog ``y_l = log(rho0 / rho_l)``; weights
``W_ll = rho_l^2 / (rho_l + sigma2)``.

Randomness comes from per-ray Philox streams keyed by ``(seed, ray index)``,
so draws are reproducible no matter how rays might be batched or threaded.
"""

from dataclasses import dataclass, field

import numpy as np

from .backends import kernels
from .errors import ConfigError
from .geometry import Geometry, GridSpec, Image, Sinogram, project

MU_WATER_DEFAULT = 0.02  # 1/mm at typical diagnostic energies
POISSON_NORMAL_THRESHOLD = 1000.0


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    angle: float
    mu: float
    additive: bool = True

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigError("ellipse semi-axes must be > 0")


@dataclass(frozen=True)
class Phantom:
    ellipses: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "ellipses", tuple(self.ellipses))


@dataclass
class Weights:
    """Diagonal of the statistical weighting matrix, sinogram-shaped."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ConfigError("weights must be positive and finite")


def _inside(ell: Ellipse, x, y):
    ca, sa = np.cos(ell.angle), np.sin(ell.angle)
    xr = (x - ell.cx) * ca + (y - ell.cy) * sa
    yr = -(x - ell.cx) * sa + (y - ell.cy) * ca
    return (xr / ell.a) ** 2 + (yr / ell.b) ** 2 <= 1.0


def _value_at(phantom: Phantom, x, y):
    val = np.zeros(np.broadcast(x, y).shape)
    for ell in phantom.ellipses:
        mask = _inside(ell, x, y)
        if ell.additive:
            val = np.where(mask, val + ell.mu, val)
        else:
            val = np.where(mask, ell.mu, val)
    return val


def rasterize(phantom: Phantom, width, height, dx, dy) -> Image:
    """Pixel-center evaluation with 4x4 supersampling at ellipse boundaries."""
    xs = (np.arange(width) - (width - 1) / 2.0) * dx
    ys = (np.arange(height) - (height - 1) / 2.0) * dy
    px, py = np.meshgrid(xs, ys)
    values = _value_at(phantom, px, py)

    if phantom.ellipses:
        boundary = np.zeros((height, width), dtype=bool)
        cx = np.array([-0.5, -0.5, 0.5, 0.5])
        cy = np.array([-0.5, 0.5, -0.5, 0.5])
        for ell in phantom.ellipses:
            corners = np.stack(
                [_inside(ell, px + ox * dx, py + oy * dy) for ox, oy in zip(cx, cy)]
            )
            boundary |= np.any(corners != corners[0], axis=0)
        if np.any(boundary):
            offs = (np.arange(4) - 1.5) / 4.0
            bx = px[boundary]
            by = py[boundary]
            acc = np.zeros(bx.shape)
            for ox in offs:
                for oy in offs:
                    acc += _value_at(phantom, bx + ox * dx, by + oy * dy)
            values[boundary] = acc / 16.0
    if np.any(values < 0):
        raise ConfigError("phantom rasterization produced negative attenuation")
    return Image(values, dx, dy)


def _ray_noise_draws(seed, num_rays):
    # One uniform (Poisson inversion) and two normals (Poisson approximation,
    # electronic noise) per ray, each from its own Philox stream.
    uniforms = np.empty(num_rays)
    normals = np.empty(num_rays)
    electronic = np.empty(num_rays)
    base = np.uint64(seed) if seed >= 0 else np.uint64(seed + 2**64)
    for l in range(num_rays):
        gen = np.random.Generator(np.random.Philox(key=(int(base) << 64) | l))
        uniforms[l] = gen.random()
        normals[l] = gen.standard_normal()
        electronic[l] = gen.standard_normal()
    return uniforms, normals, electronic


def simulate_scan(img_fine: Image, geo: Geometry, rho0, sigma2, seed):
    """Noisy scan of a (finer-grid) truth image.

    Returns (prelog, postlog, weights, n_clamped): Sinograms of prelog counts
    and postlog line integrals, the Weights diagonal, and the number of rays
    clamped at one count.
    """
    if rho0 <= 0:
        raise ConfigError("rho0 must be > 0")
    if sigma2 < 0:
        raise ConfigError("sigma2 must be >= 0")
    line = project(img_fine, geo)
    means = rho0 * np.exp(-line.values.reshape(-1))

    uniforms, normals, electronic = _ray_noise_draws(seed, geo.num_rays)
    counts = np.empty(geo.num_rays)
    kernels.poisson_from_streams(means, uniforms, normals, POISSON_NORMAL_THRESHOLD, counts)
    if sigma2 > 0:
        counts = counts + np.sqrt(sigma2) * electronic

    clamped = counts < 1.0
    counts = np.maximum(counts, 1.0)
    postlog = np.log(rho0 / counts)
    weights = counts**2 / (counts + sigma2)

    shape = (geo.num_views, geo.num_channels)
    return (
        Sinogram(geo, counts.reshape(shape)),
        Sinogram(geo, postlog.reshape(shape)),
        Weights(weights.reshape(shape)),
        int(np.count_nonzero(clamped)),
    )


def to_hu(img: Image, mu_water=MU_WATER_DEFAULT) -> Image:
    """Modified Hounsfield units: air 0 HU, water 1000 HU."""
    if mu_water <= 0:
        raise ConfigError("mu_water must be > 0")
    return Image(img.values * (1000.0 / mu_water), img.dx, img.dy)


def head_phantom(variant=0, radius=55.0):
    """Ellipse phantom family; distinct variants give disjoint training slices.

    All features stay inside a circle of the given radius (mm).  Variant 0 is
    the held-out test slice.
    """
    rng = np.random.default_rng(1000 + variant)
    ells = [
        Ellipse(0.0, 0.0, radius, 0.92 * radius, 0.0, 0.05),
        Ellipse(0.0, 0.0, 0.92 * radius, 0.84 * radius, 0.0, 0.02, additive=False),
    ]
    for _ in range(2):  # low-density cavities
        r = rng.uniform(0.25, 0.42) * radius
        phi = rng.uniform(0, 2 * np.pi)
        ells.append(
            Ellipse(
                r * np.cos(phi),
                r * np.sin(phi),
                rng.uniform(0.10, 0.22) * radius,
                rng.uniform(0.08, 0.16) * radius,
                rng.uniform(0, np.pi),
                rng.uniform(0.005, 0.012),
                additive=False,
            )
        )
    for _ in range(3):  # denser inclusions
        r = rng.uniform(0.1, 0.5) * radius
        phi = rng.uniform(0, 2 * np.pi)
        ells.append(
            Ellipse(
                r * np.cos(phi),
                r * np.sin(phi),
                rng.uniform(0.04, 0.12) * radius,
                rng.uniform(0.03, 0.10) * radius,
                rng.uniform(0, np.pi),
                rng.uniform(0.004, 0.010),
            )
        )
    return Phantom(ells)


def circular_roi(grid: GridSpec, radius):
    """Boolean mask of the centered circle with the given radius (mm)."""
    xs = (np.arange(grid.width) - (grid.width - 1) / 2.0) * grid.dx
    ys = (np.arange(grid.height) - (grid.height - 1) / 2.0) * grid.dy
    px, py = np.meshgrid(xs, ys)
    return px**2 + py**2 <= radius**2
