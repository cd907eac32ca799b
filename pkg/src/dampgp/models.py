"""The three damping-torque estimators and their training machinery.

Because cross-output covariances vanish under the independence assumption on
the damping elements, the stacked ND x ND system factors into N independent
D x D systems; fitting caches one Gram factorization and one residual solve
per output dimension.  ``gp_core.joint_multi_output_oracle`` provides the
dense reference path the tests compare against.

Estimator kinds:
    "ard"  -- independent zero-mean SE-ARD GP per torque output (baseline)
    "diag" -- diagonal damping matrix model
    "full" -- full damping matrix model
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gp_core
from .errors import InputError, UnsupportedModelError
from .kernels import (
    DiagTorqueKernel,
    FullTorqueKernel,
    SeArdKernelBank,
    _se_correlation,
)

KINDS = ("ard", "diag", "full")


def _check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise InputError(f"unknown model kind {kind!r}, expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class Dataset:
    """Paired velocity/torque observations, one sample per row."""

    velocities: np.ndarray  # (D, N)
    torques: np.ndarray  # (D, N)
    noise_variance_hint: float | None = None

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        y = np.atleast_2d(np.asarray(self.torques, dtype=float))
        if q.shape != y.shape:
            raise InputError(
                f"velocities {q.shape} and torques {y.shape} must have equal shape"
            )
        if q.shape[0] < 1 or q.shape[1] < 1:
            raise InputError("dataset must contain at least one sample and one dimension")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite entries")
        object.__setattr__(self, "velocities", q)
        object.__setattr__(self, "torques", y)

    @property
    def n_samples(self) -> int:
        return self.velocities.shape[0]

    @property
    def n_dim(self) -> int:
        return self.velocities.shape[1]


@dataclass(frozen=True)
class PriorMean:
    """Nonnegative diagonal damping prior; prior torque is diag(coeffs) @ qd."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if c.ndim != 1:
            raise InputError("prior mean coefficients must be a vector")
        if not np.all(c >= 0):
            raise InputError(f"prior mean coefficients must be >= 0, got {c}")
        object.__setattr__(self, "coefficients", c)

    def torque(self, qd: np.ndarray) -> np.ndarray:
        return self.coefficients * np.asarray(qd, dtype=float)

    @classmethod
    def zero(cls, n: int) -> "PriorMean":
        return cls(np.zeros(n))


def fit_prior_mean(data: Dataset) -> PriorMean:
    """Per-dimension least-squares damping coefficient, clamped nonnegative.

    Degenerate columns (all velocities essentially zero) get coefficient 0.
    """
    q = data.velocities
    y = data.torques
    denom = np.sum(q * q, axis=0)
    coeffs = np.zeros(data.n_dim)
    ok = denom >= 1e-12 * data.n_samples
    coeffs[ok] = np.maximum(0.0, np.sum(y * q, axis=0)[ok] / denom[ok])
    return PriorMean(coeffs)


@dataclass(frozen=True)
class FittedModel:
    """Immutable trained estimator with cached per-output factorized data."""

    kind: str
    kernel: object
    prior_mean: PriorMean
    noise_variance: float
    factorizations: tuple
    residual_solves: tuple
    train: Dataset

    @property
    def n_dim(self) -> int:
        return self.train.n_dim


def _prior_torque_matrix(kind: str, prior_mean: PriorMean, q: np.ndarray) -> np.ndarray:
    """Prior torque means, one row per sample.  Zero for the baseline."""
    if kind == "ard":
        return np.zeros_like(q)
    return q * prior_mean.coefficients


def fit(
    kind: str,
    kernel,
    prior_mean: PriorMean | None,
    data: Dataset,
    noise_variance: float,
) -> FittedModel:
    """Assemble, factorize and cache the N per-output training systems."""
    kind = _check_kind(kind)
    if not noise_variance > 0:
        raise InputError(f"noise_variance must be > 0, got {noise_variance}")
    expected = {
        "ard": SeArdKernelBank,
        "diag": DiagTorqueKernel,
        "full": FullTorqueKernel,
    }[kind]
    if not isinstance(kernel, expected):
        raise InputError(
            f"kind {kind!r} requires a {expected.__name__}, got {type(kernel).__name__}"
        )
    if kernel.dim != data.n_dim:
        raise InputError(
            f"kernel dimension {kernel.dim} does not match data dimension {data.n_dim}"
        )
    if prior_mean is None:
        prior_mean = PriorMean.zero(data.n_dim)
    if prior_mean.coefficients.size != data.n_dim:
        raise InputError("prior mean dimension mismatch")
    if kind == "ard" and np.any(prior_mean.coefficients != 0):
        raise InputError("the ard baseline is zero-mean; pass a zero prior mean")

    q = data.velocities
    prior_y = _prior_torque_matrix(kind, prior_mean, q)
    facts = []
    solves = []
    for m in range(data.n_dim):
        km = kernel.output_kernel(m)
        gram = gp_core.assemble_gram(km, q)
        fact = gp_core.factorize(gram, noise_variance)
        facts.append(fact)
        solves.append(fact.solve(data.torques[:, m] - prior_y[:, m]))
    return FittedModel(
        kind=kind,
        kernel=kernel,
        prior_mean=prior_mean,
        noise_variance=float(noise_variance),
        factorizations=tuple(facts),
        residual_solves=tuple(solves),
        train=data,
    )


def predict_torque_batch(model: FittedModel, qd_stars: np.ndarray) -> np.ndarray:
    """Posterior mean torques at each row of ``qd_stars`` (M, N) -> (M, N)."""
    qs = np.atleast_2d(np.asarray(qd_stars, dtype=float))
    if qs.shape[1] != model.n_dim:
        raise InputError(
            f"test velocities have dimension {qs.shape[1]}, expected {model.n_dim}"
        )
    out = _prior_torque_matrix(model.kind, model.prior_mean, qs)
    q_train = model.train.velocities
    for m in range(model.n_dim):
        km = model.kernel.output_kernel(m)
        cross = km.pairwise(q_train, qs)  # (D, M)
        out[:, m] += cross.T @ model.residual_solves[m]
    return out


def predict_torque(model: FittedModel, qd_star) -> np.ndarray:
    """Posterior mean torque vector at a single test velocity."""
    qs = np.asarray(qd_star, dtype=float)
    if qs.ndim != 1:
        raise InputError("qd_star must be a single velocity vector")
    return predict_torque_batch(model, qs[None, :])[0]


def predict_damping(model: FittedModel, qd_star) -> np.ndarray:
    """Posterior damping matrix estimate with D_hat(qd) @ qd == predicted torque.

    Column n collects the prior coefficient plus the data correction weighted
    by the n-th training velocity component.
    """
    if model.kind == "ard":
        raise UnsupportedModelError(
            "the ard baseline estimates torques only, not a damping matrix"
        )
    qs = np.asarray(qd_star, dtype=float)
    if qs.shape != (model.n_dim,):
        raise InputError(f"qd_star must have shape ({model.n_dim},)")
    q_train = model.train.velocities
    corr = _se_correlation(model.kernel.lengthscales, q_train, qs[None, :])[:, 0]
    alphas = np.vstack(model.residual_solves)  # (N, D)
    # G[m, n] = sum_i corr_i * q_train[i, n] * alpha[m, i]
    G = alphas @ (corr[:, None] * q_train)
    if model.kind == "diag":
        d_hat = model.prior_mean.coefficients + model.kernel.hypervariances * np.diag(G)
        return np.diag(d_hat)
    return np.diag(model.prior_mean.coefficients) + model.kernel.hypervariances * G


@dataclass(frozen=True)
class OptimizationResult:
    kernel: object
    val_mse: float
    n_evaluations: int
    projected: bool  # True when the passivity constraint was enforced


def _make_kernel(kind: str, lengthscales: np.ndarray, hyp: np.ndarray):
    if kind == "ard":
        return SeArdKernelBank(lengthscales, hyp)
    if kind == "diag":
        return DiagTorqueKernel(lengthscales, hyp)
    return FullTorqueKernel(lengthscales, hyp)


def _initial_hypervariances(kind: str, data: Dataset, prior_mean: PriorMean) -> np.ndarray:
    """Data-scale starting point: residual variance over velocity power."""
    q = data.velocities
    resid = data.torques - _prior_torque_matrix(kind, prior_mean, q)
    rvar = np.maximum(np.var(resid, axis=0), 1e-12)
    if kind == "ard":
        return rvar
    qpow = np.maximum(np.mean(q * q, axis=0), 1e-12)
    if kind == "diag":
        return rvar / qpow
    n = data.n_dim
    return np.maximum(rvar[:, None] / (n * qpow[None, :]), 1e-12)


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def optimize_hypervariances(
    kind: str,
    data_train: Dataset,
    data_val: Dataset,
    lengthscales,
    noise_variance: float,
    constrained: bool = False,
    budget: int = 60,
    tie_full: bool = True,
    init_hypervariances: np.ndarray | None = None,
    prior_mean: PriorMean | None = None,
) -> OptimizationResult:
    """Derivative-free search over log-hypervariances against validation MSE.

    Coordinate descent with a golden-section line search; fully deterministic
    for fixed inputs and budget (one budget unit = one fit + validation pass).
    When ``constrained`` is set every candidate is projected onto the feasible
    set of the passivity bound before evaluation, so the returned kernel is
    always feasible.  For the full kind with ``tie_full`` the N^2 grid is tied
    to a row-scale times column-scale pattern to keep the search space small.
    """
    from . import passivity  # local import to avoid a module cycle

    kind = _check_kind(kind)
    if budget < 1:
        raise InputError(f"budget must be >= 1, got {budget}")
    if data_val.n_samples < 1:
        raise InputError("validation set is empty")
    if data_val.n_dim != data_train.n_dim:
        raise InputError("train/validation dimension mismatch")
    ell = np.asarray(lengthscales, dtype=float)
    n = data_train.n_dim

    if prior_mean is None:
        prior_mean = (
            PriorMean.zero(n) if kind == "ard" else fit_prior_mean(data_train)
        )

    init = (
        np.asarray(init_hypervariances, dtype=float)
        if init_hypervariances is not None
        else _initial_hypervariances(kind, data_train, prior_mean)
    )

    tied = kind == "full" and tie_full
    if tied:
        # theta = (row log-scales, column log-scales); hyp = exp(r_m + c_n)
        row0 = 0.5 * np.log(np.maximum(init.mean(axis=1), 1e-300))
        col0 = 0.5 * np.log(np.maximum(init.mean(axis=0), 1e-300))
        theta0 = np.concatenate([row0, col0])
    else:
        theta0 = np.log(np.maximum(init.reshape(-1), 1e-300))

    def to_hyp(theta: np.ndarray) -> np.ndarray:
        if tied:
            return np.exp(theta[:n, None] + theta[n:][None, :])
        if kind == "full":
            return np.exp(theta).reshape(n, n)
        return np.exp(theta)

    evals = 0
    best: dict = {"mse": np.inf, "hyp": None}

    def evaluate(theta: np.ndarray) -> float:
        nonlocal evals
        if evals >= budget:
            return np.inf
        evals += 1
        hyp = to_hyp(theta)
        if constrained:
            bound = passivity.compute_bound(
                data_train, prior_mean, noise_variance, hyp
            )
            hyp = passivity.enforce_bound(bound, mode="scale_hypervariances").hypervariances
        model = fit(kind, _make_kernel(kind, ell, hyp), prior_mean, data_train, noise_variance)
        pred = predict_torque_batch(model, data_val.velocities)
        mse = float(np.mean((pred - data_val.torques) ** 2))
        if mse < best["mse"]:
            best["mse"] = mse
            best["hyp"] = hyp
        return mse

    theta = theta0.copy()
    f_theta = evaluate(theta)
    span = 2.0  # half-width of the log-space search bracket
    while evals < budget:
        improved_any = False
        for i in range(theta.size):
            if evals >= budget:
                break
            lo, hi = theta[i] - span, theta[i] + span
            x1 = hi - _GOLDEN * (hi - lo)
            x2 = lo + _GOLDEN * (hi - lo)
            t1, t2 = theta.copy(), theta.copy()
            t1[i], t2[i] = x1, x2
            f1, f2 = evaluate(t1), evaluate(t2)
            for _ in range(4):
                if evals >= budget:
                    break
                if f1 <= f2:
                    hi, x2, f2 = x2, x1, f1
                    x1 = hi - _GOLDEN * (hi - lo)
                    t1 = theta.copy()
                    t1[i] = x1
                    f1 = evaluate(t1)
                else:
                    lo, x1, f1 = x1, x2, f2
                    x2 = lo + _GOLDEN * (hi - lo)
                    t2 = theta.copy()
                    t2[i] = x2
                    f2 = evaluate(t2)
            candidates = [(f1, x1), (f2, x2)]
            f_best_i, x_best_i = min(candidates, key=lambda t: t[0])
            if f_best_i < f_theta:
                theta[i] = x_best_i
                f_theta = f_best_i
                improved_any = True
        span *= 0.5
        if not improved_any and span < 1e-3:
            break

    return OptimizationResult(
        kernel=_make_kernel(kind, ell, best["hyp"]),
        val_mse=best["mse"],
        n_evaluations=evals,
        projected=constrained,
    )
