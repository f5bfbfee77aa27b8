"""Square sparsifying-transform learning by alternating minimization.

The training objective over a patch matrix X (patches as columns) is

    sum_j ||Psi x_j - z_j||^2 + gamma' ||z_j||_0
        + tau * (xi * ||Psi||_F^2 - log|det Psi|)

alternating an exact sparse-coding step (hard threshold at sqrt(gamma')) with
a closed-form transform update: factor X X^T + tau*xi*I = L L^T, take the full
SVD L^{-1} X Z^T = U S V^T, and set Psi = 0.5 * V (S + (S^2 + 2 tau I)^{1/2})
U^T L^{-1}.  The objective is nonincreasing at every half-step; the returned
transform is the best seen.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .shrinkage import hard

_MONOTONE_SLACK = 1e-9


@dataclass
class Transform:
    """Learned n x n sparsifying transform with conditioning metadata."""

    psi: np.ndarray
    patch_w: int
    patch_h: int
    metadata: dict = field(default_factory=dict)
    objective_trace: np.ndarray | None = None

    def __post_init__(self):
        self.psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        if self.psi.ndim != 2 or self.psi.shape[0] != self.psi.shape[1]:
            raise ConfigError("psi must be square")
        if self.psi.shape[0] != self.patch_w * self.patch_h:
            raise ConfigError("psi size must equal patch_w * patch_h")
        sign, logdet = np.linalg.slogdet(self.psi)
        if sign == 0 or not np.isfinite(logdet):
            raise ConfigError("psi must be nonsingular")

    @property
    def n(self):
        return self.psi.shape[0]

    @property
    def condition_number(self):
        return float(self.metadata.get("condition_number", np.linalg.cond(self.psi)))


def dct_matrix(patch_w, patch_h):
    """Orthonormal separable 2D DCT-II matching column-major patch order."""

    def dct1d(m):
        k = np.arange(m)[:, None]
        j = np.arange(m)[None, :]
        mat = np.cos(np.pi * (2 * j + 1) * k / (2 * m)) * np.sqrt(2.0 / m)
        mat[0] /= np.sqrt(2.0)
        return mat

    return np.kron(dct1d(patch_w), dct1d(patch_h))


def _objective(psi, x_cols, z_cols, gamma_prime, tau, xi):
    resid = psi @ x_cols - z_cols
    sign, logdet = np.linalg.slogdet(psi)
    if sign == 0:
        return np.inf
    return (
        float(np.sum(resid**2))
        + gamma_prime * int(np.count_nonzero(z_cols))
        + tau * (xi * float(np.sum(psi**2)) - logdet)
    )


def transform_update_gradient(psi, x_cols, z_cols, tau, xi):
    """Gradient of the transform half-step objective at fixed codes."""
    return 2.0 * (psi @ x_cols - z_cols) @ x_cols.T + 2.0 * tau * xi * psi - tau * np.linalg.inv(psi).T


def _sign_fix(u, vt):
    # Largest-magnitude entry of each left-singular column made positive;
    # compensating flips keep U S V^T (and hence Psi) unchanged.
    flips = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])])
    flips[flips == 0] = 1.0
    return u * flips, vt * flips[:, None]


def learn_transform(
    train_patches,
    patch_w,
    patch_h,
    tau,
    gamma_prime,
    xi,
    iters,
    init="dct",
    psi0=None,
    subtract_mean=False,
):
    """Learn a transform from a (J', n) patch matrix.

    ``init`` is ``"dct"`` or ``"given"`` (with ``psi0``).  ``subtract_mean``
    removes each patch's mean before training.  Raises NumericalError if the
    objective ever increases beyond roundoff or goes non-finite.
    """
    if tau <= 0 or gamma_prime <= 0 or xi <= 0:
        raise ConfigError("tau, gamma_prime, xi must be > 0")
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    n = patch_w * patch_h
    x_cols = np.asarray(train_patches, dtype=np.float64).T
    if x_cols.shape[0] != n:
        raise ConfigError(f"train patches must have {n} columns")
    if subtract_mean:
        x_cols = x_cols - x_cols.mean(axis=0, keepdims=True)

    if init == "dct":
        psi = dct_matrix(patch_w, patch_h)
    elif init == "given":
        if psi0 is None:
            raise ConfigError("init='given' requires psi0")
        psi = np.array(psi0, dtype=np.float64)
        if psi.shape != (n, n):
            raise ConfigError(f"psi0 must be {n}x{n}")
    else:
        raise ConfigError(f"unknown init {init!r}")

    gram = x_cols @ x_cols.T
    chol = np.linalg.cholesky(gram + tau * xi * np.eye(n))
    thresh = np.sqrt(gamma_prime)

    trace = np.empty(2 * iters)
    best_obj = np.inf
    best_psi = psi.copy()
    prev = np.inf
    for it in range(iters):
        z_cols = hard(psi @ x_cols, thresh)
        obj = _objective(psi, x_cols, z_cols, gamma_prime, tau, xi)
        _check_monotone(obj, prev, it, "sparse coding")
        trace[2 * it] = obj
        prev = obj
        if obj < best_obj:
            best_obj, best_psi = obj, psi.copy()

        m = np.linalg.solve(chol, x_cols @ z_cols.T)
        u, s, vt = np.linalg.svd(m, full_matrices=True)
        u, vt = _sign_fix(u, vt)
        d = 0.5 * (s + np.sqrt(s**2 + 2.0 * tau))
        b = (vt.T * d) @ u.T
        psi = np.linalg.solve(chol.T, b.T).T
        obj = _objective(psi, x_cols, z_cols, gamma_prime, tau, xi)
        _check_monotone(obj, prev, it, "transform update")
        trace[2 * it + 1] = obj
        prev = obj
        if obj < best_obj:
            best_obj, best_psi = obj, psi.copy()

    meta = {
        "tau": float(tau),
        "gamma_prime": float(gamma_prime),
        "xi": float(xi),
        "iterations": int(iters),
        "condition_number": float(np.linalg.cond(best_psi)),
    }
    return Transform(best_psi, patch_w, patch_h, meta, objective_trace=trace)


def _check_monotone(obj, prev, it, step):
    if not np.isfinite(obj):
        raise NumericalError(f"non-finite objective at iteration {it} ({step})")
    if obj > prev * (1 + _MONOTONE_SLACK) + _MONOTONE_SLACK:
        raise NumericalError(
            f"objective increased at iteration {it} ({step}): {prev} -> {obj}"
        )


def tau_from_scale(train_patches, tau_bar):
    """Dataset-independent conditioning weight: tau = tau_bar * ||X||_F^2."""
    if tau_bar <= 0:
        raise ConfigError("tau_bar must be > 0")
    x = np.asarray(train_patches, dtype=np.float64)
    return float(tau_bar * np.sum(x**2))
