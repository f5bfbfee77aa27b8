"""Scan geometries, the system operator, and filtered back-projection.

Conventions (fixed throughout the package):

* Image arrays have shape ``(height, width)``; pixel ``(iy, ix)`` is centered
  at ``x = (ix - (width - 1)/2) * dx``, ``y = (iy - (height - 1)/2) * dy``,
  with the isocenter at the origin.
* Parallel view at angle ``theta``: detector axis ``e_u = (cos t, sin t)``,
  ray direction ``e_w = (-sin t, cos t)``; channel ``c`` sits at detector
  coordinate ``u = (c - (nc - 1)/2) * du``.
* Fan-flat view at angle ``beta``: the source sits at
  ``s = D_si * (-sin b, cos b)`` and the flat detector, spanned by
  ``e_u = (cos b, sin b)``, lies ``D_sd`` from the source past the isocenter.

Projection values are dimensionless (1/mm attenuation times mm path length).
"""

from dataclasses import dataclass, field

import numpy as np

from .backends import kernels
from .errors import ConfigError

PARALLEL = "parallel"
FAN_FLAT = "fan-flat"


@dataclass(frozen=True)
class Geometry:
    """Parametric description of a 2D scan; defines the system operator."""

    kind: str
    num_views: int
    num_channels: int
    channel_spacing: float
    view_angles: np.ndarray = field(repr=False)
    source_to_iso: float = 0.0
    source_to_detector: float = 0.0

    def __post_init__(self):
        if self.kind not in (PARALLEL, FAN_FLAT):
            raise ConfigError(f"unknown geometry kind {self.kind!r}")
        if self.num_views < 1 or self.num_channels < 1:
            raise ConfigError("num_views and num_channels must be >= 1")
        if self.channel_spacing <= 0:
            raise ConfigError("channel_spacing must be > 0")
        angles = np.asarray(self.view_angles, dtype=np.float64)
        if angles.shape != (self.num_views,):
            raise ConfigError("view_angles length must equal num_views")
        if self.num_views > 1:
            steps = np.diff(angles)
            if np.any(steps <= 0):
                raise ConfigError("view_angles must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ConfigError("view_angles must be uniformly spaced")
        if self.kind == FAN_FLAT:
            if not self.source_to_detector > self.source_to_iso > 0:
                raise ConfigError("fan geometry needs source_to_detector > source_to_iso > 0")
        object.__setattr__(self, "view_angles", angles)

    @classmethod
    def parallel(cls, num_views, num_channels, channel_spacing):
        angles = np.arange(num_views) * (np.pi / num_views)
        return cls(PARALLEL, num_views, num_channels, channel_spacing, angles)

    @classmethod
    def fan(cls, num_views, num_channels, channel_spacing, source_to_iso, source_to_detector):
        angles = np.arange(num_views) * (2.0 * np.pi / num_views)
        return cls(
            FAN_FLAT,
            num_views,
            num_channels,
            channel_spacing,
            angles,
            source_to_iso,
            source_to_detector,
        )

    @property
    def num_rays(self):
        return self.num_views * self.num_channels

    def channel_offsets(self):
        nc = self.num_channels
        return (np.arange(nc) - (nc - 1) / 2.0) * self.channel_spacing


@dataclass
class Image:
    """Attenuation map (1/mm) on a centered grid with mm pixel spacing."""

    values: np.ndarray
    dx: float
    dy: float

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ConfigError("image values must be 2D")
        if self.dx <= 0 or self.dy <= 0:
            raise ConfigError("pixel spacings must be > 0")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("image values must be finite")

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def grid(self):
        return GridSpec(self.width, self.height, self.dx, self.dy)


@dataclass(frozen=True)
class GridSpec:
    """Reconstruction grid: size and spacing of an Image."""

    width: int
    height: int
    dx: float
    dy: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid dims must be >= 1")
        if self.dx <= 0 or self.dy <= 0:
            raise ConfigError("grid spacings must be > 0")

    def zeros_image(self):
        return Image(np.zeros((self.height, self.width)), self.dx, self.dy)

    @property
    def num_pixels(self):
        return self.width * self.height


@dataclass
class Sinogram:
    """Measurements on a geometry: array of shape (num_views, num_channels)."""

    geometry: Geometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = (self.geometry.num_views, self.geometry.num_channels)
        if self.values.shape != expected:
            raise ConfigError(f"sinogram shape {self.values.shape} != geometry {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("sinogram values must be finite")


def _ray_endpoints(geo, grid):
    """Segment endpoints (p0, p1) per ray, covering the whole grid box."""
    half_w = 0.5 * grid.width * grid.dx
    half_h = 0.5 * grid.height * grid.dy
    diag = 2.0 * np.hypot(half_w, half_h)
    u = geo.channel_offsets()
    angles = geo.view_angles
    if geo.kind == PARALLEL:
        eu = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        ew = np.stack([-np.sin(angles), np.cos(angles)], axis=1)
        mid = u[None, :, None] * eu[:, None, :]
        p0 = mid - diag * ew[:, None, :]
        p1 = mid + diag * ew[:, None, :]
    else:
        if geo.source_to_iso <= np.hypot(half_w, half_h):
            raise ConfigError("fan source_to_iso must exceed the image half-diagonal")
        src = geo.source_to_iso * np.stack([-np.sin(angles), np.cos(angles)], axis=1)
        eu = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        det_center = src * (1.0 - geo.source_to_detector / geo.source_to_iso)
        det = det_center[:, None, :] + u[None, :, None] * eu[:, None, :]
        p0 = np.broadcast_to(src[:, None, :], det.shape).copy()
        d = det - p0
        norm = np.linalg.norm(d, axis=2, keepdims=True)
        p1 = p0 + d / norm * (geo.source_to_iso + diag)
    n = geo.num_rays
    p0 = p0.reshape(n, 2)
    p1 = p1.reshape(n, 2)
    return (
        np.ascontiguousarray(p0[:, 0]),
        np.ascontiguousarray(p0[:, 1]),
        np.ascontiguousarray(p1[:, 0]),
        np.ascontiguousarray(p1[:, 1]),
    )


def project(img: Image, geo: Geometry) -> Sinogram:
    """Siddon line integrals of the image along every ray of the geometry."""
    p0x, p0y, p1x, p1y = _ray_endpoints(geo, img.grid)
    out = np.zeros(geo.num_rays)
    xmin = -0.5 * img.width * img.dx
    ymin = -0.5 * img.height * img.dy
    kernels.project_rays(img.values, img.dx, img.dy, xmin, ymin, p0x, p0y, p1x, p1y, out)
    return Sinogram(geo, out.reshape(geo.num_views, geo.num_channels))


def backproject(sino: Sinogram, geo: Geometry, width, height, dx, dy) -> Image:
    """Exact adjoint of :func:`project` under the standard inner products."""
    if sino.geometry is not geo and sino.geometry != geo:
        raise ConfigError("sinogram geometry does not match")
    grid = GridSpec(width, height, dx, dy)
    p0x, p0y, p1x, p1y = _ray_endpoints(geo, grid)
    out = np.zeros((height, width))
    xmin = -0.5 * width * dx
    ymin = -0.5 * height * dy
    kernels.backproject_rays(
        sino.values.reshape(-1), dx, dy, xmin, ymin, p0x, p0y, p1x, p1y, out
    )
    return Image(out, dx, dy)


class Projector:
    """Matrix-free system operator for a fixed geometry/grid pair.

    ``forward`` and ``adjoint`` work on bare arrays so solvers can stay
    allocation-light; endpoints are precomputed once.
    """

    def __init__(self, geo: Geometry, grid: GridSpec):
        self.geo = geo
        self.grid = grid
        self._rays = _ray_endpoints(geo, grid)
        self._xmin = -0.5 * grid.width * grid.dx
        self._ymin = -0.5 * grid.height * grid.dy

    def forward(self, values):
        out = np.zeros(self.geo.num_rays)
        p0x, p0y, p1x, p1y = self._rays
        kernels.project_rays(
            np.ascontiguousarray(values, dtype=np.float64),
            self.grid.dx, self.grid.dy, self._xmin, self._ymin,
            p0x, p0y, p1x, p1y, out,
        )
        return out.reshape(self.geo.num_views, self.geo.num_channels)

    def adjoint(self, sino_values):
        out = np.zeros((self.grid.height, self.grid.width))
        p0x, p0y, p1x, p1y = self._rays
        kernels.backproject_rays(
            np.ascontiguousarray(sino_values, dtype=np.float64).reshape(-1),
            self.grid.dx, self.grid.dy, self._xmin, self._ymin,
            p0x, p0y, p1x, p1y, out,
        )
        return out

    def normal(self, values):
        return self.adjoint(self.forward(values))


def _ramp_hanning_response(n_pad, spacing):
    # Ram-Lak kernel sampled in the spatial domain (exact DC handling), taken
    # to the frequency domain and apodized by a Hanning window.
    lag = np.arange(n_pad)
    lag = np.minimum(lag, n_pad - lag)
    h = np.zeros(n_pad)
    h[0] = 1.0 / (4.0 * spacing**2)
    odd = lag % 2 == 1
    h[odd] = -1.0 / (np.pi**2 * lag[odd] ** 2 * spacing**2)
    response = np.real(np.fft.fft(h))
    freq = np.fft.fftfreq(n_pad, d=spacing)
    nyquist = 0.5 / spacing
    window = 0.5 * (1.0 + np.cos(np.pi * freq / nyquist))
    return response * window * spacing


def _filter_rows(rows, spacing):
    n = rows.shape[1]
    n_pad = 1 << int(np.ceil(np.log2(max(2 * n, 4))))
    resp = _ramp_hanning_response(n_pad, spacing)
    spec = np.fft.rfft(rows, n=n_pad, axis=1)
    filtered = np.fft.irfft(spec * resp[: n_pad // 2 + 1], n=n_pad, axis=1)
    return filtered[:, :n]


def fbp(sino: Sinogram, geo: Geometry, grid: GridSpec) -> Image:
    """Filtered back-projection with a Hanning-apodized ramp filter.

    Parallel: per-view frequency-domain filtering then pixel-driven
    backprojection with angular weight pi/num_views.  Fan-flat: cosine
    pre-weighting, the same filtering on the detector rescaled to the
    isocenter, then distance-squared-weighted backprojection.
    """
    if geo.num_views < 2:
        raise ConfigError("fbp needs at least 2 views")
    if sino.values.shape != (geo.num_views, geo.num_channels):
        raise ConfigError("sinogram/geometry mismatch")

    xs = (np.arange(grid.width) - (grid.width - 1) / 2.0) * grid.dx
    ys = (np.arange(grid.height) - (grid.height - 1) / 2.0) * grid.dy
    px, py = np.meshgrid(xs, ys)
    out = np.zeros((grid.height, grid.width))
    u = geo.channel_offsets()

    if geo.kind == PARALLEL:
        q = _filter_rows(sino.values, geo.channel_spacing)
        for v, theta in enumerate(geo.view_angles):
            upix = px * np.cos(theta) + py * np.sin(theta)
            out += np.interp(upix, u, q[v], left=0.0, right=0.0)
        out *= np.pi / geo.num_views
    else:
        dsi = geo.source_to_iso
        dsd = geo.source_to_detector
        s = u * (dsi / dsd)
        ds = geo.channel_spacing * (dsi / dsd)
        weighted = sino.values * (dsi / np.sqrt(dsi**2 + s**2))[None, :]
        q = _filter_rows(weighted, ds)
        for v, beta in enumerate(geo.view_angles):
            ax, ay = -np.sin(beta), np.cos(beta)
            bigu = 1.0 - (px * ax + py * ay) / dsi
            spix = (px * np.cos(beta) + py * np.sin(beta)) / bigu
            out += np.interp(spix, s, q[v], left=0.0, right=0.0) / bigu**2
        out *= np.pi / geo.num_views
    return Image(out, grid.dx, grid.dy)
