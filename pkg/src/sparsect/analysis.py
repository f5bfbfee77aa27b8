"""Metrics, sparsification-error statistics, and MVUE/MMSE analysis.

The estimator analysis applies to the model y = A x + eps, z = PsiTilde x + e
with uncorrelated zero-mean Gaussian noise: the minimum-variance unbiased
estimate solves a weighted normal system, and when both normal operators are
diagonalized by the same orthogonal basis its total variance has the closed
form sum_j 1 / (lambda_A_j / sigma_eps^2 + lambda_Psi_j / sigma_e^2).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .geometry import Image
from .simulate import MU_WATER_DEFAULT


def rmse_roi(recon: Image, truth: Image, roi=None, mu_water=MU_WATER_DEFAULT):
    """Root mean square error in modified HU over a mask, after clipping
    negative reconstruction values at zero."""
    if recon.values.shape != truth.values.shape:
        raise ConfigError("recon and truth must share a shape")
    if roi is None:
        roi = np.ones(recon.values.shape, dtype=bool)
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != recon.values.shape or not np.any(roi):
        raise ConfigError("roi must be a nonempty mask of the image shape")
    diff = np.clip(recon.values, 0.0, None)[roi] - truth.values[roi]
    return float(np.sqrt(np.mean(diff**2)) * (1000.0 / mu_water))


def cg_solve(apply_op, rhs, x0=None, tol=1e-10, max_iters=2000):
    """Plain conjugate gradient on an SPD operator, to a relative residual."""
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - apply_op(x)
    p = r.copy()
    rs = float(np.vdot(r, r))
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * rhs_norm:
            return x
        op_p = apply_op(p)
        denom = float(np.vdot(p, op_p))
        if denom <= 0:
            raise NumericalError("operator not positive definite in CG")
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * op_p
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) > tol * rhs_norm:
        raise NumericalError(f"CG did not reach tol={tol} in {max_iters} iterations")
    return x


def mvue(y, z, a_forward, a_adjoint, psi_forward, psi_adjoint, sigma_eps2, sigma_e2,
         tol=1e-10, max_iters=5000):
    """Minimum-variance unbiased estimate of x from y and denoised codes z.

    Solves (A^T A / sigma_eps^2 + Psi^T Psi / sigma_e2) x =
    A^T y / sigma_eps^2 + Psi^T z / sigma_e2 by CG to the given relative
    residual.
    """
    if sigma_eps2 <= 0 or sigma_e2 <= 0:
        raise ConfigError("noise variances must be > 0")
    we = 1.0 / sigma_eps2
    wz = 1.0 / sigma_e2

    def normal(x):
        return we * a_adjoint(a_forward(x)) + wz * psi_adjoint(psi_forward(x))

    rhs = we * a_adjoint(np.asarray(y, dtype=np.float64)) + wz * psi_adjoint(
        np.asarray(z, dtype=np.float64)
    )
    return cg_solve(normal, rhs, tol=tol, max_iters=max_iters)


@dataclass(frozen=True)
class Prop1Model:
    """Co-diagonalizable spectra and noise variances for the variance formula."""

    a_spectrum: np.ndarray
    psi_spectrum: np.ndarray
    sigma_eps2: float
    sigma_e2: float

    def __post_init__(self):
        a = np.asarray(self.a_spectrum, dtype=np.float64)
        p = np.asarray(self.psi_spectrum, dtype=np.float64)
        if a.shape != p.shape:
            raise ConfigError("spectra must share a shape")
        if np.any(a < 0) or np.any(p < 0):
            raise ConfigError("spectra must be >= 0")
        if np.any(a + p <= 0):
            raise ConfigError("a_spectrum + psi_spectrum must be positive everywhere")
        if self.sigma_eps2 <= 0 or self.sigma_e2 <= 0:
            raise ConfigError("variances must be > 0")
        object.__setattr__(self, "a_spectrum", a)
        object.__setattr__(self, "psi_spectrum", p)


def mmse_closed_form(model: Prop1Model):
    """Total variance floor of the unbiased estimator (sum over modes)."""
    denom = model.a_spectrum / model.sigma_eps2 + model.psi_spectrum / model.sigma_e2
    if np.any(denom <= 0):
        raise NumericalError("estimator variance undefined: a mode has zero information")
    return float(np.sum(1.0 / denom))


def excess_kurtosis(samples):
    samples = np.asarray(samples, dtype=np.float64).ravel()
    centered = samples - samples.mean()
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return float("nan")
    m4 = float(np.mean(centered**4))
    return m4 / m2**2 - 3.0


def sparsification_histogram(codes_x, z, bins=101):
    """Histogram and fit statistics of the sparsification error codes_x - z.

    Returns a dict with the histogram, excess kurtosis, zero-location ML
    Laplace scale (mean absolute error) and Gaussian sigma, their
    log-likelihoods, and a ``degenerate`` flag for an all-zero error.
    """
    codes_x = np.asarray(codes_x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if codes_x.shape != z.shape:
        raise ConfigError("codes_x and z must share a shape")
    err = (codes_x - z).ravel()
    if err.size < 100:
        raise ConfigError("need at least 100 samples")

    laplace_b = float(np.mean(np.abs(err)))
    gauss_sigma = float(np.sqrt(np.mean(err**2)))
    degenerate = gauss_sigma == 0.0
    counts, edges = np.histogram(err, bins=bins)
    result = {
        "counts": counts,
        "edges": edges,
        "excess_kurtosis": excess_kurtosis(err),
        "laplace_scale": laplace_b,
        "gaussian_sigma": gauss_sigma,
        "degenerate": degenerate,
        "laplace_loglik": float("nan"),
        "gaussian_loglik": float("nan"),
    }
    if not degenerate:
        m = err.size
        result["laplace_loglik"] = float(-m * np.log(2.0 * laplace_b) - m)
        result["gaussian_loglik"] = float(
            -0.5 * m * np.log(2.0 * np.pi * gauss_sigma**2) - 0.5 * m
        )
    return result


def row_sum_majorizer_diag(a_forward, a_adjoint, weights, ones_image):
    """Diagonal majorizer of A^T W A by row sums: A^T W (A 1)."""
    return a_adjoint(np.asarray(weights, dtype=np.float64) * a_forward(ones_image))


def lambda_transfer(w_ref, w_new, a_forward, a_adjoint, lambda_ref, image_shape, roi=None):
    """Scale a tuned regularization weight to a new weighting matrix.

    Uses the ratio of ROI means of the row-sum diagonal majorizers of A^T W A
    under the two weightings.
    """
    ones_image = np.ones(image_shape)
    if roi is None:
        roi = np.ones(image_shape, dtype=bool)
    diag_ref = row_sum_majorizer_diag(a_forward, a_adjoint, w_ref, ones_image)[roi]
    diag_new = row_sum_majorizer_diag(a_forward, a_adjoint, w_new, ones_image)[roi]
    mean_ref = float(np.mean(diag_ref))
    mean_new = float(np.mean(diag_new))
    if mean_ref == 0.0 or mean_new == 0.0:
        raise NumericalError("majorizer ROI mean is zero; cannot transfer lambda")
    return lambda_ref * mean_new / mean_ref


def make_circulant_pair(kernel_a, kernel_psi):
    """1D circulant operators from convolution kernels, plus their spectra.

    Both operators are diagonalized by the same DFT, which is exactly the
    regime where the closed-form estimator variance applies.
    """
    kernel_a = np.asarray(kernel_a, dtype=np.float64)
    kernel_psi = np.asarray(kernel_psi, dtype=np.float64)
    if kernel_a.shape != kernel_psi.shape:
        raise ConfigError("kernels must share a length")
    fa = np.fft.fft(kernel_a)
    fp = np.fft.fft(kernel_psi)

    def conv(kernel_fft):
        def apply(x):
            return np.real(np.fft.ifft(np.fft.fft(x) * kernel_fft))

        return apply

    ops = {
        "a_forward": conv(fa),
        "a_adjoint": conv(np.conj(fa)),
        "psi_forward": conv(fp),
        "psi_adjoint": conv(np.conj(fp)),
    }
    return ops, np.abs(fa) ** 2, np.abs(fp) ** 2


def mvue_monte_carlo(kernel_a, kernel_psi, x_true, sigma_eps2, sigma_e2, trials, seed):
    """Empirical total variance of the MVUE on the co-circulant model."""
    ops, spec_a, spec_p = make_circulant_pair(kernel_a, kernel_psi)
    x_true = np.asarray(x_true, dtype=np.float64)
    ax = ops["a_forward"](x_true)
    px = ops["psi_forward"](x_true)
    se = np.sqrt(sigma_eps2)
    sz = np.sqrt(sigma_e2)
    sq_err = 0.0
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t,)))
        y = ax + se * rng.standard_normal(ax.shape)
        z = px + sz * rng.standard_normal(px.shape)
        est = mvue(
            y, z, ops["a_forward"], ops["a_adjoint"], ops["psi_forward"],
            ops["psi_adjoint"], sigma_eps2, sigma_e2,
        )
        sq_err += float(np.sum((est - x_true) ** 2))
    empirical = sq_err / trials
    closed = mmse_closed_form(Prop1Model(spec_a, spec_p, sigma_eps2, sigma_e2))
    return empirical, closed


def empirical_mse_study(y, w, proj, psi_op, x_true, lam, snr_db_levels, realizations,
                        seed, admm_rounds=40, mu=None, nu=None, pcg_iters=10):
    """MSE of the fixed-code image update as the codes degrade.

    Corrupts PsiTilde x_true with white Gaussian noise at each SNR, re-solves
    the convex image update, and returns mean squared errors (HU^2) per level.
    Only the monotone ordering is meaningful across datasets.
    """
    from .solvers import fixed_code_image_update

    px_true = psi_op.forward(x_true.values)
    signal_power = float(np.mean(px_true**2))
    out = []
    for snr_db in snr_db_levels:
        noise_var = signal_power / (10.0 ** (snr_db / 10.0))
        total = 0.0
        for r in range(realizations):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(int(snr_db * 1000), r))
            )
            z = px_true + np.sqrt(noise_var) * rng.standard_normal(px_true.shape)
            xhat, _ = fixed_code_image_update(
                y, w, proj, psi_op, z, lam, rounds=admm_rounds, x0=x_true,
                mu=mu, nu=nu, pcg_iters=pcg_iters,
            )
            scale = 1000.0 / MU_WATER_DEFAULT
            total += float(np.sum(((xhat - x_true.values) * scale) ** 2))
        out.append(total / realizations)
    return out
