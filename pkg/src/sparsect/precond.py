"""Circulant preconditioning and condition-number-based parameter selection.

The normal operators are probed with a delta at the center pixel
``(floor(W/2), floor(H/2))``; the response is circularly shifted so the delta
position maps to index (0, 0) and taken to the frequency domain, giving
eigenvalue estimates on the 2D DFT basis.  For block-circulant operators
(wrap-around patches at stride 1) the estimate is exact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

SPECTRUM_FLOOR_REL = 1e-8
IMAG_RESIDUE_TOL = 1e-8


@dataclass
class CirculantPrecond:
    """Inverse-spectrum preconditioner for A^T A + nu * PsiTilde^T PsiTilde."""

    lambda_a: np.ndarray
    lambda_psi: np.ndarray
    nu: float

    def __post_init__(self):
        self.lambda_a = np.asarray(self.lambda_a, dtype=np.float64)
        self.lambda_psi = np.asarray(self.lambda_psi, dtype=np.float64)
        if self.lambda_a.shape != self.lambda_psi.shape:
            raise ConfigError("spectra must share a shape")
        if self.nu <= 0:
            raise ConfigError("nu must be > 0")
        if np.any(self.lambda_psi < 0):
            raise ConfigError("lambda_psi must be >= 0")
        combined = self.lambda_a + self.nu * self.lambda_psi
        if np.any(combined <= 0):
            raise ConfigError("combined spectrum must be positive; floor the estimates")
        self._inv = 1.0 / combined


def _delta_spectrum(normal_op, height, width):
    # For a block-circulant operator the imaginary residue is roundoff
    # (<= 1e-8 relative); for shift-variant ones (fan-beam A^T A) the real
    # part is the standard eigenvalue approximation.
    delta = np.zeros((height, width))
    cy, cx = height // 2, width // 2
    delta[cy, cx] = 1.0
    response = np.asarray(normal_op(delta), dtype=np.float64)
    if response.shape != (height, width):
        raise ConfigError("operator must preserve the image shape")
    response = np.roll(response, (-cy, -cx), axis=(0, 1))
    return np.fft.fft2(response).real


def estimate_spectra(a_normal_op, psi_normal_op, height, width):
    """Eigenvalue estimates (lambda_a, lambda_psi) of two normal operators.

    Each argument maps an (height, width) array through Op^T Op.  lambda_psi
    is floored at zero; lambda_a keeps its raw (possibly negative) estimates,
    to be floored when building the preconditioner.
    """
    lambda_a = _delta_spectrum(a_normal_op, height, width)
    lambda_psi = np.maximum(_delta_spectrum(psi_normal_op, height, width), 0.0)
    return lambda_a, lambda_psi


def floor_spectrum(lambda_a):
    """Clamp nonpositive eigenvalue estimates at a small positive floor."""
    lambda_a = np.asarray(lambda_a, dtype=np.float64)
    top = float(np.max(lambda_a))
    if top <= 0:
        raise NumericalError("spectrum estimate has no positive part")
    return np.maximum(lambda_a, SPECTRUM_FLOOR_REL * top)


def make_precond(lambda_a, lambda_psi, nu):
    return CirculantPrecond(floor_spectrum(lambda_a), np.maximum(lambda_psi, 0.0), nu)


def apply_precond(residual, precond: CirculantPrecond):
    """M r = iFFT(diag(lambda_a + nu*lambda_psi)^{-1} FFT(r)); real output."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != precond.lambda_a.shape:
        raise ConfigError("residual shape does not match spectra")
    out = np.fft.ifft2(np.fft.fft2(residual) * precond._inv)
    return out.real


def select_nu(lambda_a, lambda_psi, kappa_des_nu):
    """Weyl-bound split weight: nu = (max(LA) - k*min(LA)) / (k*min(LP) - max(LP)).

    Feasible only for kappa(LP) < kappa_des_nu < kappa(LA); the bound then
    guarantees kappa(LA + nu*LP) <= kappa_des_nu.
    """
    la = floor_spectrum(lambda_a)
    lp = np.asarray(lambda_psi, dtype=np.float64)
    if np.any(lp < 0):
        raise ConfigError("lambda_psi must be >= 0")
    a_max, a_min = float(la.max()), float(la.min())
    p_max, p_min = float(lp.max()), float(lp.min())
    if p_min <= 0:
        raise NumericalError("lambda_psi has zero entries; nu selection infeasible")
    lo = p_max / p_min
    hi = a_max / a_min
    if not lo < kappa_des_nu < hi:
        raise NumericalError(
            f"kappa_des_nu={kappa_des_nu} infeasible; must lie in ({lo:.6g}, {hi:.6g})"
        )
    return (a_max - kappa_des_nu * a_min) / (kappa_des_nu * p_min - p_max)


def select_mu(weights, kappa_des_mu):
    """Data-term shift: mu = (max(W) - k*min(W)) / (k - 1), exact for diagonal W."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ConfigError("weights must be positive")
    w_max, w_min = float(w.max()), float(w.min())
    cond_w = w_max / w_min
    if not 1.0 < kappa_des_mu < cond_w:
        raise NumericalError(
            f"kappa_des_mu={kappa_des_mu} infeasible; must lie in (1, {cond_w:.6g})"
        )
    return (w_max - kappa_des_mu * w_min) / (kappa_des_mu - 1.0)
