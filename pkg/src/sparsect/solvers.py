"""PWLS reconstruction solvers.

``pwls_st_l1`` alternates a fixed-code ADMM image update (duals reset to zero
each outer iteration, the linear step solved by a few circulant-preconditioned
CG iterations warm-started at the current image) with the closed-form hard
thresholding of the transformed image.  ``pwls_st_l2`` and ``pwls_ep`` are the
quadratic-prior and edge-preserving baselines.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .analysis import excess_kurtosis, rmse_roi
from .errors import ConfigError, NumericalError
from .geometry import Image, Projector, Sinogram
from .patches import PatchSpec, PsiTilde
from .precond import apply_precond, estimate_spectra, make_precond, select_mu, select_nu
from .shrinkage import hard, soft
from .simulate import MU_WATER_DEFAULT, Weights
from .translearn import Transform

_OBJ_SLACK = 1e-9


@dataclass
class ReconParams:
    """Knobs of the l1-prior reconstruction (condition numbers select mu, nu)."""

    lam: float
    gamma_over_lambda: float
    kappa_nu: float = 30.0
    kappa_mu: float = 30.0
    outer_iters: int = 1000
    admm_iters: int = 2
    pcg_iters: int = 2
    pcg_tol: float = 0.0
    init: str = "ep"
    rel_change_tol: float = 0.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("lam must be > 0")
        if self.gamma_over_lambda < 0:
            raise ConfigError("gamma_over_lambda must be >= 0")
        if min(self.kappa_nu, self.kappa_mu) <= 1:
            raise ConfigError("desired condition numbers must be > 1")
        if min(self.outer_iters, self.admm_iters, self.pcg_iters) < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.init not in ("fbp", "ep", "constant", "given"):
            raise ConfigError(f"unknown init {self.init!r}")


@dataclass
class Telemetry:
    """Per-outer-iteration records plus solver-level info."""

    columns: tuple
    rows: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ConfigError("telemetry row width mismatch")
        self.rows.append(tuple(float(v) for v in values))

    def column(self, name):
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(v) for v in row])


def pcg(apply_g, rhs, x0, precond, iters, tol=0.0):
    """Preconditioned CG on G x = rhs, warm-started at x0; fixed iterations
    unless tol > 0 stops on the relative residual early."""
    x = np.array(x0, dtype=np.float64)
    r = rhs - apply_g(x)
    z = apply_precond(r, precond)
    p = z.copy()
    rz = float(np.vdot(r, z))
    rhs_norm = float(np.linalg.norm(rhs))
    used = 0
    for _ in range(iters):
        if tol > 0.0 and float(np.linalg.norm(r)) <= tol * rhs_norm:
            break
        gp = apply_g(p)
        denom = float(np.vdot(p, gp))
        if denom <= 0.0:
            break
        alpha = rz / denom
        x += alpha * p
        r -= alpha * gp
        z = apply_precond(r, precond)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        used += 1
    return x, used


def update_d_a(w, mu, y, ax, b_a):
    """Exact minimizer of the weighted-data auxiliary subproblem (diagonal)."""
    return (w * y + mu * (ax + b_a)) / (w + mu)


def update_d_psi(px, z, b_psi, threshold):
    """Soft shrinkage of the sparsification-error auxiliary variable."""
    return soft(px - z + b_psi, threshold)


def admm_image_rounds(x, z, y, w, proj, psi_op, lam, mu, nu, precond, rounds,
                      pcg_iters, pcg_tol=0.0):
    """Fixed-code ADMM rounds on the image subproblem; duals start at zero.

    Auxiliaries are seeded from their own updates at the current image, then
    each round runs the preconditioned-CG image solve followed by the
    auxiliary and dual-ascent updates.  Returns the image and its forward
    projections plus the total PCG iteration count.
    """
    ax = proj.forward(x)
    px = psi_op.forward(x)
    b_a = np.zeros_like(ax)
    b_psi = np.zeros_like(px)
    thr = lam / (mu * nu)
    d_a = update_d_a(w, mu, y, ax, b_a)
    d_psi = update_d_psi(px, z, b_psi, thr)

    def apply_g(v):
        return proj.adjoint(proj.forward(v)) + nu * psi_op.adjoint(psi_op.forward(v))

    total_pcg = 0
    for _ in range(rounds):
        rhs = proj.adjoint(d_a - b_a) + nu * psi_op.adjoint(d_psi - b_psi + z)
        x, used = pcg(apply_g, rhs, x, precond, pcg_iters, pcg_tol)
        total_pcg += used
        ax = proj.forward(x)
        px = psi_op.forward(x)
        d_a = update_d_a(w, mu, y, ax, b_a)
        d_psi = update_d_psi(px, z, b_psi, thr)
        b_a = b_a - (d_a - ax)
        b_psi = b_psi - (d_psi - (px - z))
    return x, ax, px, total_pcg


def fixed_code_image_update(y, w, proj, psi_op, z, lam, rounds, x0=None,
                            mu=None, nu=None, kappa_nu=30.0, kappa_mu=30.0,
                            pcg_iters=10, pcg_tol=0.0):
    """Solve the convex image update min_x 0.5||y-Ax||_W^2 + lam||Px - z||_1
    by running the ADMM machinery with the code vector held fixed."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    grid = proj.grid
    lambda_a, lambda_psi = estimate_spectra(
        proj.normal, psi_op.normal, grid.height, grid.width
    )
    if nu is None:
        nu = select_nu(lambda_a, lambda_psi, kappa_nu)
    if mu is None:
        mu = select_mu(w, kappa_mu)
    precond = make_precond(lambda_a, lambda_psi, nu)
    x = np.zeros((grid.height, grid.width)) if x0 is None else np.array(
        x0.values if isinstance(x0, Image) else x0, dtype=np.float64
    )
    x, _, _, total = admm_image_rounds(
        x, z, y, w, proj, psi_op, lam, mu, nu, precond, rounds, pcg_iters, pcg_tol
    )
    return x, total


def objective_p(y, w, ax, px, z, lam, gamma):
    """The reconstruction objective: weighted data term plus l1 prior and l0 count."""
    return (
        0.5 * float(np.sum(w * (y - ax) ** 2))
        + lam * float(np.sum(np.abs(px - z)))
        + gamma * int(np.count_nonzero(z))
    )


def pwls_st_l1(y: Sinogram, w: Weights, proj: Projector, transform: Transform,
               spec: PatchSpec, params: ReconParams, x0: Image,
               truth: Image = None, roi=None, mu_water=MU_WATER_DEFAULT):
    """l1-prior reconstruction with a learned transform (ADMM image updates).

    Telemetry per outer iteration: objective, RMSE vs truth (HU, when given),
    PCG iterations, nonzero-code percentage, and the excess kurtosis of the
    sparsification error.
    """
    grid = proj.grid
    psi_op = PsiTilde(transform.psi, spec, grid.height, grid.width)
    yv = y.values
    wv = w.values
    lam = params.lam
    gamma = params.gamma_over_lambda * lam

    lambda_a, lambda_psi = estimate_spectra(
        proj.normal, psi_op.normal, grid.height, grid.width
    )
    nu = select_nu(lambda_a, lambda_psi, params.kappa_nu)
    mu = select_mu(wv, params.kappa_mu)
    precond = make_precond(lambda_a, lambda_psi, nu)

    x = np.array(x0.values, dtype=np.float64)
    px = psi_op.forward(x)
    z = hard(px, params.gamma_over_lambda)

    tele = Telemetry(
        ("iteration", "objective", "rmse_hu", "pcg_iters", "sparsity_pct", "sparsification_kurtosis"),
        info={"nu": nu, "mu": mu, "lam": lam, "gamma": gamma, "method": "st-l1"},
    )
    for it in range(1, params.outer_iters + 1):
        x_prev = x
        x, ax, px, pcg_used = admm_image_rounds(
            x, z, yv, wv, proj, psi_op, lam, mu, nu, precond,
            params.admm_iters, params.pcg_iters, params.pcg_tol,
        )
        obj_before = objective_p(yv, wv, ax, px, z, lam, gamma)
        z = hard(px, params.gamma_over_lambda)
        obj = objective_p(yv, wv, ax, px, z, lam, gamma)
        if not np.isfinite(obj):
            raise NumericalError(f"non-finite objective at outer iteration {it}")
        if obj > obj_before * (1 + _OBJ_SLACK) + _OBJ_SLACK:
            raise NumericalError(
                f"sparse coding increased the objective at iteration {it}"
            )
        rmse = (
            rmse_roi(Image(x, grid.dx, grid.dy), truth, roi, mu_water)
            if truth is not None
            else float("nan")
        )
        sparsity = 100.0 * np.count_nonzero(z) / z.size
        tele.append(it, obj, rmse, pcg_used, sparsity, excess_kurtosis(px - z))
        if params.rel_change_tol > 0:
            denom = float(np.linalg.norm(x_prev))
            if denom > 0 and float(np.linalg.norm(x - x_prev)) < params.rel_change_tol * denom:
                break
    return Image(x, grid.dx, grid.dy), tele


def pwls_st_l2(y: Sinogram, w: Weights, proj: Projector, transform: Transform,
               spec: PatchSpec, lam, gamma, outer_iters, pcg_iters, x0: Image,
               truth: Image = None, roi=None, mu_water=MU_WATER_DEFAULT, pcg_tol=0.0):
    """Quadratic-prior baseline: alternating hard thresholding with a PCG
    solve of (A^T W A + 2 lam P^T P) x = A^T W y + 2 lam P^T z."""
    if lam <= 0 or gamma < 0:
        raise ConfigError("lam must be > 0 and gamma >= 0")
    grid = proj.grid
    psi_op = PsiTilde(transform.psi, spec, grid.height, grid.width)
    yv = y.values
    wv = w.values

    def weighted_normal(v):
        return proj.adjoint(wv * proj.forward(v))

    lambda_a, lambda_psi = estimate_spectra(
        weighted_normal, psi_op.normal, grid.height, grid.width
    )
    precond = make_precond(lambda_a, lambda_psi, 2.0 * lam)

    def apply_g(v):
        return weighted_normal(v) + 2.0 * lam * psi_op.adjoint(psi_op.forward(v))

    x = np.array(x0.values, dtype=np.float64)
    px = psi_op.forward(x)
    threshold = np.sqrt(gamma / lam) if gamma > 0 else 0.0
    aty = proj.adjoint(wv * yv)

    tele = Telemetry(
        ("iteration", "objective", "rmse_hu", "pcg_iters", "sparsity_pct", "sparsification_kurtosis"),
        info={"lam": lam, "gamma": gamma, "method": "st-l2"},
    )
    for it in range(1, outer_iters + 1):
        z = hard(px, threshold)
        rhs = aty + 2.0 * lam * psi_op.adjoint(z)
        x, pcg_used = pcg(apply_g, rhs, x, precond, pcg_iters, pcg_tol)
        px = psi_op.forward(x)
        ax = proj.forward(x)
        obj = (
            0.5 * float(np.sum(wv * (yv - ax) ** 2))
            + lam * float(np.sum((px - z) ** 2))
            + gamma * int(np.count_nonzero(z))
        )
        if not np.isfinite(obj):
            raise NumericalError(f"non-finite objective at outer iteration {it}")
        rmse = (
            rmse_roi(Image(x, grid.dx, grid.dy), truth, roi, mu_water)
            if truth is not None
            else float("nan")
        )
        sparsity = 100.0 * np.count_nonzero(z) / z.size
        tele.append(it, obj, rmse, pcg_used, sparsity, excess_kurtosis(px - z))
    return Image(x, grid.dx, grid.dy), tele


def _hyperbola(t, delta):
    return delta**2 * (np.sqrt(1.0 + (t / delta) ** 2) - 1.0)


def _hyperbola_prime(t, delta):
    return t / np.sqrt(1.0 + (t / delta) ** 2)


_NEIGHBOR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _pair_slices(offset):
    oy, ox = offset
    ay = slice(oy, None) if oy >= 0 else slice(None, oy)
    by = slice(None, -oy) if oy > 0 else (slice(-oy, None) if oy < 0 else slice(None))
    ax = slice(ox, None) if ox >= 0 else slice(None, ox)
    bx = slice(None, -ox) if ox > 0 else (slice(-ox, None) if ox < 0 else slice(None))
    return (ay, ax), (by, bx)


def _ep_value_grad(x, delta):
    # 8-neighborhood with uniform weights: each ordered pair counted once in
    # the double sum, i.e. each unordered pair twice.
    val = 0.0
    grad = np.zeros_like(x)
    for off in _NEIGHBOR_OFFSETS:
        sa, sb = _pair_slices(off)
        diff = x[sa] - x[sb]
        val += 2.0 * float(np.sum(_hyperbola(diff, delta)))
        g = _hyperbola_prime(diff, delta)
        grad[sa] += 2.0 * g
        grad[sb] -= 2.0 * g
    return val, grad


def _ep_curvature(x, d, delta):
    # Majorizer curvature along direction d: sum of w(t) e^2 with w = phi'/t.
    total = 0.0
    for off in _NEIGHBOR_OFFSETS:
        sa, sb = _pair_slices(off)
        t = x[sa] - x[sb]
        e = d[sa] - d[sb]
        total += 2.0 * float(np.sum(e**2 / np.sqrt(1.0 + (t / delta) ** 2)))
    return total


def pwls_ep(y: Sinogram, w: Weights, proj: Projector, beta, delta, iters,
            x0: Image, truth: Image = None, roi=None, mu_water=MU_WATER_DEFAULT,
            line_search_steps=3):
    """Edge-preserving baseline minimized by nonlinear conjugate gradient with
    a quadratic-majorizer line search; the objective never increases."""
    if delta <= 0:
        raise ConfigError("delta must be > 0")
    if beta < 0:
        raise ConfigError("beta must be >= 0")
    grid = proj.grid
    yv = y.values
    wv = w.values
    x = np.array(x0.values, dtype=np.float64)

    def full_objective(ax, xv):
        data = 0.5 * float(np.sum(wv * (yv - ax) ** 2))
        if beta == 0.0:
            return data
        return data + beta * _ep_value_grad(xv, delta)[0]

    ax = proj.forward(x)
    obj = full_objective(ax, x)
    tele = Telemetry(
        ("iteration", "objective", "rmse_hu"),
        info={"beta": beta, "delta": delta, "method": "ep"},
    )
    g_prev = None
    d = None
    for it in range(1, iters + 1):
        grad = proj.adjoint(wv * (ax - yv))
        if beta > 0.0:
            grad = grad + beta * _ep_value_grad(x, delta)[1]
        if d is None:
            d = -grad
        else:
            denom = float(np.vdot(g_prev, g_prev))
            beta_pr = float(np.vdot(grad, grad - g_prev)) / denom if denom > 0 else 0.0
            d = -grad + max(beta_pr, 0.0) * d
            if float(np.vdot(grad, d)) >= 0.0:
                d = -grad
        g_prev = grad

        ad = proj.forward(d)
        data_curv = float(np.sum(wv * ad**2))
        slope0 = float(np.vdot(grad, d))
        if slope0 >= 0.0 or data_curv == 0.0 and beta == 0.0:
            tele.append(it, obj, _maybe_rmse(x, grid, truth, roi, mu_water))
            break
        alpha = 0.0
        for _ in range(line_search_steps):
            xa = x + alpha * d
            slope = float(np.sum(wv * ad * (proj_lin(ax, ad, alpha) - yv)))
            if beta > 0.0:
                slope += beta * _ep_dir_slope(xa, d, delta)
                curv = data_curv + beta * _ep_curvature(xa, d, delta)
            else:
                curv = data_curv
            if curv <= 0.0:
                break
            alpha -= slope / curv
        x = x + alpha * d
        ax = ax + alpha * ad
        new_obj = full_objective(ax, x)
        if not np.isfinite(new_obj):
            raise NumericalError(f"non-finite objective at iteration {it}")
        if new_obj > obj * (1 + _OBJ_SLACK) + _OBJ_SLACK:
            raise NumericalError(f"objective increased at iteration {it}")
        obj = new_obj
        tele.append(it, obj, _maybe_rmse(x, grid, truth, roi, mu_water))
    return Image(x, grid.dx, grid.dy), tele


def proj_lin(ax, ad, alpha):
    return ax + alpha * ad


def _ep_dir_slope(x, d, delta):
    total = 0.0
    for off in _NEIGHBOR_OFFSETS:
        sa, sb = _pair_slices(off)
        t = x[sa] - x[sb]
        e = d[sa] - d[sb]
        total += 2.0 * float(np.sum(_hyperbola_prime(t, delta) * e))
    return total


def _maybe_rmse(x, grid, truth, roi, mu_water):
    if truth is None:
        return float("nan")
    return rmse_roi(Image(x, grid.dx, grid.dy), truth, roi, mu_water)
