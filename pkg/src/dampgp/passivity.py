"""Passivity bounds for the structured damping estimators.

The feasibility region ties the kernel amplitude bounds |sigma_f| to the
scalar factor c = sigma_eps^2 / (sqrt(D) * max|velocity| * ||residual||):
the full model needs c*diag(m_d) - Sigma_f to be positive semidefinite,
the diagonal model needs |sigma_f_n| <= c * m_d_n per dimension.  Models
whose hypervariances satisfy the bound dissipate power at every velocity.

Hypervariances are passed and returned in sigma_f^2 units (matching the
kernel objects); the bound matrix Sigma_f holds |sigma_f|, their square
roots.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibilityError, InputError
from .models import Dataset, FittedModel, PriorMean, predict_torque, predict_torque_batch

_BISECT_RTOL = 1e-10


@dataclass(frozen=True)
class PassivityBound:
    """The scalar bound factor c together with all of its constituents."""

    c: float
    d_count: int
    inf_norm_velocities: float
    residual_norm: float
    hypervariance_matrix: np.ndarray  # Sigma_f, entries |sigma_f_mn|
    mean_coefficients: np.ndarray
    noise_variance: float
    diagonal: bool  # True when built from an N-vector of hypervariances


def _sigma_f_matrix(hypervariances) -> tuple[np.ndarray, bool]:
    hyp = np.asarray(hypervariances, dtype=float)
    if np.any(hyp < 0):
        raise InputError("hypervariances must be nonnegative")
    if hyp.ndim == 1:
        return np.diag(np.sqrt(hyp)), True
    if hyp.ndim == 2 and hyp.shape[0] == hyp.shape[1]:
        return np.sqrt(hyp), False
    raise InputError(
        f"hypervariances must be an N-vector or N x N matrix, got shape {hyp.shape}"
    )


def compute_bound(
    data: Dataset,
    prior_mean: PriorMean,
    noise_variance: float,
    hypervariances,
) -> PassivityBound:
    """Evaluate the bound factor and store everything entering it.

    c is the +inf sentinel (vacuously feasible) when either the velocity
    sup-norm or the stacked residual vanishes.
    """
    sigma_f, diagonal = _sigma_f_matrix(hypervariances)
    q = data.velocities
    resid = data.torques - q * prior_mean.coefficients
    inf_norm = float(np.max(np.abs(q)))
    resid_norm = float(np.linalg.norm(resid.reshape(-1)))
    if inf_norm == 0.0 or resid_norm == 0.0:
        c = math.inf
    else:
        c = noise_variance / (math.sqrt(data.n_samples) * inf_norm * resid_norm)
    return PassivityBound(
        c=c,
        d_count=data.n_samples,
        inf_norm_velocities=inf_norm,
        residual_norm=resid_norm,
        hypervariance_matrix=sigma_f,
        mean_coefficients=prior_mean.coefficients.copy(),
        noise_variance=float(noise_variance),
        diagonal=diagonal,
    )


@dataclass(frozen=True)
class FullCheck:
    feasible: bool
    margin: float  # min eigenvalue of c*diag(m_d) - Sigma_f


@dataclass(frozen=True)
class DiagCheck:
    feasible: bool
    per_dim_margins: np.ndarray  # c*m_d_n - |sigma_f_n|


def _check_full_at(bound: PassivityBound, sigma_f: np.ndarray, c: float) -> FullCheck:
    if math.isinf(c):
        return FullCheck(feasible=True, margin=math.inf)
    residual = c * np.diag(bound.mean_coefficients) - sigma_f
    min_eig = float(np.linalg.eigvalsh(residual)[0])
    tol = 1e-12 * abs(float(np.trace(residual)))
    return FullCheck(feasible=min_eig >= -tol, margin=min_eig)


def check_bound_full(bound: PassivityBound) -> FullCheck:
    """PSD test of c*diag(m_d) - Sigma_f (the full-model sufficient condition)."""
    return _check_full_at(bound, bound.hypervariance_matrix, bound.c)


def _check_diag_at(bound: PassivityBound, sigma_f_vec: np.ndarray, c: float) -> DiagCheck:
    if math.isinf(c):
        return DiagCheck(feasible=True, per_dim_margins=np.full(sigma_f_vec.size, math.inf))
    margins = c * bound.mean_coefficients - sigma_f_vec
    return DiagCheck(feasible=bool(np.all(sigma_f_vec <= c * bound.mean_coefficients)), per_dim_margins=margins)


def check_bound_diag(bound: PassivityBound) -> DiagCheck:
    """Per-dimension test |sigma_f_n| <= c * m_d_n (the diagonal condition)."""
    if not bound.diagonal:
        raise InputError("check_bound_diag requires a bound built from an N-vector")
    return _check_diag_at(bound, np.diag(bound.hypervariance_matrix), bound.c)


def _feasible(bound: PassivityBound, sigma_f: np.ndarray, c: float) -> bool:
    if bound.diagonal:
        return _check_diag_at(bound, np.diag(sigma_f), c).feasible
    return _check_full_at(bound, sigma_f, c).feasible


@dataclass(frozen=True)
class EnforcementResult:
    """Adjusted hyperparameters that satisfy the bound.

    ``hypervariances`` are in sigma_f^2 units, in the same layout as the
    input to ``compute_bound`` (vector or matrix); ``alpha`` is the scale
    applied to |sigma_f| (1.0 in raise_noise mode).
    """

    hypervariances: np.ndarray
    noise_variance: float
    alpha: float
    bound: PassivityBound


def _result(bound: PassivityBound, sigma_f: np.ndarray, noise_variance: float, alpha: float) -> EnforcementResult:
    hyp = np.diag(sigma_f) ** 2 if bound.diagonal else sigma_f ** 2
    new_c = bound.c
    if noise_variance != bound.noise_variance and not math.isinf(bound.c):
        new_c = bound.c * noise_variance / bound.noise_variance
    new_bound = PassivityBound(
        c=new_c,
        d_count=bound.d_count,
        inf_norm_velocities=bound.inf_norm_velocities,
        residual_norm=bound.residual_norm,
        hypervariance_matrix=sigma_f,
        mean_coefficients=bound.mean_coefficients,
        noise_variance=noise_variance,
        diagonal=bound.diagonal,
    )
    return EnforcementResult(
        hypervariances=hyp,
        noise_variance=noise_variance,
        alpha=alpha,
        bound=new_bound,
    )


def enforce_bound(bound: PassivityBound, mode: str = "scale_hypervariances") -> EnforcementResult:
    """Project onto the feasible set.

    scale_hypervariances: largest alpha in (0, 1] with alpha*Sigma_f feasible
    (bisection to 1e-10 relative; alpha = 1 when already feasible).
    raise_noise: smallest noise variance making the unscaled Sigma_f feasible,
    exploiting that c is proportional to it.
    """
    sigma_f = bound.hypervariance_matrix

    if mode == "scale_hypervariances":
        if _feasible(bound, sigma_f, bound.c):
            return _result(bound, sigma_f, bound.noise_variance, 1.0)
        eps = 1e-15
        if not _feasible(bound, eps * sigma_f, bound.c):
            raise InfeasibilityError(
                "no positive hypervariance scale is feasible "
                "(prior mean too small for the data residual)"
            )
        lo, hi = eps, 1.0  # lo feasible, hi infeasible
        while (hi - lo) > _BISECT_RTOL * hi:
            mid = 0.5 * (lo + hi)
            if _feasible(bound, mid * sigma_f, bound.c):
                lo = mid
            else:
                hi = mid
        return _result(bound, lo * sigma_f, bound.noise_variance, lo)

    if mode == "raise_noise":
        if _feasible(bound, sigma_f, bound.c):
            return _result(bound, sigma_f, bound.noise_variance, 1.0)
        if math.isinf(bound.c):
            raise InfeasibilityError("bound is vacuous yet infeasible; inconsistent state")
        scale = bound.c / bound.noise_variance  # c per unit noise variance
        lo = bound.noise_variance
        hi = lo if lo > 0 else 1.0
        grown = 0
        while not _feasible(bound, sigma_f, scale * hi):
            hi *= 2.0
            grown += 1
            if grown > 200:
                raise InfeasibilityError(
                    "no finite noise variance satisfies the bound "
                    "(a prior mean coefficient is zero with nonzero hypervariance)"
                )
        while (hi - lo) > _BISECT_RTOL * hi:
            mid = 0.5 * (lo + hi)
            if _feasible(bound, sigma_f, scale * mid):
                hi = mid
            else:
                lo = mid
        return _result(bound, sigma_f, hi, 1.0)

    raise InputError(f"unknown enforcement mode {mode!r}")


def dissipated_power(model: FittedModel, qd) -> float:
    """P = qd . predicted torque; nonnegative for a passive estimate."""
    qd = np.asarray(qd, dtype=float)
    return float(qd @ predict_torque(model, qd))


@dataclass(frozen=True)
class SweepResult:
    min_power: float
    violation_count: int
    violating_points: np.ndarray  # (k, N)
    points: np.ndarray  # every evaluated point
    powers: np.ndarray  # dissipated power per point
    threshold: float


def passivity_sweep(
    model: FittedModel,
    domain: np.ndarray,
    samples: int,
    seed: int = 0,
) -> SweepResult:
    """Dissipated power over seeded uniform samples, box corners, and origin.

    Violations are powers below -1e-9 times the observed power scale
    (floating-point slack on the exact-arithmetic guarantee).
    """
    box = np.asarray(domain, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] != model.n_dim:
        raise InputError(f"domain must have shape ({model.n_dim}, 2)")
    if not np.all(np.isfinite(box)):
        raise InputError("domain bounds must be finite")
    if samples < 1:
        raise InputError("samples must be >= 1")
    lo, hi = box[:, 0], box[:, 1]

    rng = np.random.default_rng(seed)
    pts = [rng.uniform(lo, hi, size=(samples, model.n_dim))]
    corners = np.array(list(itertools.product(*box)), dtype=float)
    pts.append(corners)
    if np.all(lo <= 0) and np.all(hi >= 0):
        pts.append(np.zeros((1, model.n_dim)))
    points = np.vstack(pts)

    torques = predict_torque_batch(model, points)
    powers = np.sum(points * torques, axis=1)
    scale = max(1.0, float(np.max(np.abs(powers))))
    threshold = -1e-9 * scale
    mask = powers < threshold
    return SweepResult(
        min_power=float(np.min(powers)),
        violation_count=int(np.count_nonzero(mask)),
        violating_points=points[mask],
        points=points,
        powers=powers,
        threshold=threshold,
    )
