"""On-disk formats: raw little-endian float64 arrays with plain-text headers.

Every array ``name.raw`` (row-major float64) is paired with ``name.hdr``
holding ``key value`` lines.  Floats are written with ``repr`` so round-trips
are exact.
"""

import os

import numpy as np

from .errors import ConfigError
from .geometry import FAN_FLAT, PARALLEL, Geometry, Image, Sinogram

_RAW = ".raw"
_HDR = ".hdr"


def _write_raw(path, values):
    np.ascontiguousarray(values, dtype="<f8").tofile(path + _RAW)


def _read_raw(path, shape):
    data = np.fromfile(path + _RAW, dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ConfigError(f"{path}{_RAW}: expected {shape} elements, got {data.size}")
    return data.reshape(shape)


def _write_header(path, fields):
    with open(path + _HDR, "w") as fh:
        for key, val in fields.items():
            if isinstance(val, float):
                val = repr(val)
            fh.write(f"{key} {val}\n")


def _read_header(path):
    fields = {}
    with open(path + _HDR) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition(" ")
            fields[key] = val
    return fields


def write_image(path, img: Image, units="1/mm"):
    _write_raw(path, img.values)
    _write_header(
        path,
        {
            "type": "image",
            "width": img.width,
            "height": img.height,
            "dx": float(img.dx),
            "dy": float(img.dy),
            "units": units,
        },
    )


def read_image(path) -> Image:
    hdr = _read_header(path)
    if hdr.get("type") != "image":
        raise ConfigError(f"{path}: not an image header")
    shape = (int(hdr["height"]), int(hdr["width"]))
    return Image(_read_raw(path, shape), float(hdr["dx"]), float(hdr["dy"]))


def _geometry_fields(geo: Geometry):
    fields = {
        "geometry": geo.kind,
        "views": geo.num_views,
        "channels": geo.num_channels,
        "channel_spacing": float(geo.channel_spacing),
    }
    if geo.kind == FAN_FLAT:
        fields["source_to_iso"] = float(geo.source_to_iso)
        fields["source_to_detector"] = float(geo.source_to_detector)
    return fields


def _geometry_from_fields(hdr):
    kind = hdr["geometry"]
    views = int(hdr["views"])
    channels = int(hdr["channels"])
    spacing = float(hdr["channel_spacing"])
    if kind == PARALLEL:
        return Geometry.parallel(views, channels, spacing)
    return Geometry.fan(
        views, channels, spacing, float(hdr["source_to_iso"]), float(hdr["source_to_detector"])
    )


def write_sinogram(path, sino: Sinogram, units="dimensionless"):
    _write_raw(path, sino.values)
    fields = {"type": "sinogram"}
    fields.update(_geometry_fields(sino.geometry))
    fields["units"] = units
    _write_header(path, fields)


def read_sinogram(path) -> Sinogram:
    hdr = _read_header(path)
    if hdr.get("type") != "sinogram":
        raise ConfigError(f"{path}: not a sinogram header")
    geo = _geometry_from_fields(hdr)
    return Sinogram(geo, _read_raw(path, (geo.num_views, geo.num_channels)))


def write_weights(path, values, geo: Geometry):
    _write_raw(path, values)
    fields = {"type": "weights"}
    fields.update(_geometry_fields(geo))
    _write_header(path, fields)


def read_weights(path):
    hdr = _read_header(path)
    if hdr.get("type") != "weights":
        raise ConfigError(f"{path}: not a weights header")
    geo = _geometry_from_fields(hdr)
    return _read_raw(path, (geo.num_views, geo.num_channels)), geo


def write_transform(path, transform):
    _write_raw(path, transform.psi)
    meta = transform.metadata
    _write_header(
        path,
        {
            "type": "transform",
            "n": transform.n,
            "patch_w": transform.patch_w,
            "patch_h": transform.patch_h,
            "tau": float(meta["tau"]),
            "gamma_prime": float(meta["gamma_prime"]),
            "xi": float(meta["xi"]),
            "iterations": int(meta["iterations"]),
            "condition_number": float(meta["condition_number"]),
        },
    )


def read_transform(path):
    from .translearn import Transform

    hdr = _read_header(path)
    if hdr.get("type") != "transform":
        raise ConfigError(f"{path}: not a transform header")
    n = int(hdr["n"])
    psi = _read_raw(path, (n, n))
    meta = {
        "tau": float(hdr["tau"]),
        "gamma_prime": float(hdr["gamma_prime"]),
        "xi": float(hdr["xi"]),
        "iterations": int(hdr["iterations"]),
        "condition_number": float(hdr["condition_number"]),
    }
    return Transform(psi, int(hdr["patch_w"]), int(hdr["patch_h"]), meta)


def write_codes(path, values, spec):
    _write_raw(path, values)
    _write_header(
        path,
        {
            "type": "codes",
            "J": values.shape[0],
            "n": values.shape[1],
            "patch_w": spec.patch_w,
            "patch_h": spec.patch_h,
            "stride_x": spec.stride_x,
            "stride_y": spec.stride_y,
        },
    )


def read_codes(path):
    from .patches import PatchSpec

    hdr = _read_header(path)
    if hdr.get("type") != "codes":
        raise ConfigError(f"{path}: not a codes header")
    shape = (int(hdr["J"]), int(hdr["n"]))
    spec = PatchSpec(
        int(hdr["patch_w"]), int(hdr["patch_h"]), int(hdr["stride_x"]), int(hdr["stride_y"])
    )
    return _read_raw(path, shape), spec


def write_spectrum(path, values):
    _write_raw(path, np.asarray(values, dtype=np.float64))
    _write_header(path, {"type": "spectrum", "length": int(np.asarray(values).size)})


def write_png(path, img: Image, mu_water=0.02, window=(800.0, 1200.0)):
    """8-bit PNG of the image in modified HU with the given display window."""
    from PIL import Image as PILImage

    hu = img.values * (1000.0 / mu_water)
    lo, hi = window
    scaled = np.clip((hu - lo) / (hi - lo), 0.0, 1.0)
    data = (scaled * 255.0 + 0.5).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
