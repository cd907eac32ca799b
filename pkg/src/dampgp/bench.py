"""Synthetic passive benchmark systems, data generation, metrics and file I/O.

The proprietary aircraft landing simulator is replaced here by analytically
defined damping fields that are positive semidefinite over their whole
domain, so the qualitative claims (structure improves data efficiency,
constraints preserve passivity) stay testable.  The default 3-D domain
mimics an angle/angle/airspeed coordinate: two symmetric wind bands in
[-25, 25] and one strictly positive band in [40, 90].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError
from .models import Dataset

PSD_SWEEP_POINTS = 10_000

# Periodic excitation constants: frequencies and phases per input dimension.
TRAJECTORY_FREQUENCIES = (0.1, 0.2, 0.3)
TRAJECTORY_PHASES = (0.0, 2.0, 3.0)


@dataclass(frozen=True)
class GroundTruthSystem:
    """An analytic velocity-to-damping-matrix map over a box domain."""

    name: str
    kind: str  # "diagonal" or "full"
    damping_fn: object  # qd (N,) -> (N, N)
    domain: np.ndarray  # (N, 2) lo/hi per dimension
    description: str
    default_lengthscales: np.ndarray

    @property
    def n_dim(self) -> int:
        return self.domain.shape[0]

    def damping(self, qd) -> np.ndarray:
        return np.asarray(self.damping_fn(np.asarray(qd, dtype=float)), dtype=float)

    def torque(self, qd) -> np.ndarray:
        qd = np.asarray(qd, dtype=float)
        return self.damping(qd) @ qd

    def torque_batch(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        return np.vstack([self.torque(q) for q in Q])


def _psd_construction_sweep(system: GroundTruthSystem) -> None:
    """Reject systems whose damping field is not PSD across the domain."""
    rng = np.random.default_rng(0)
    lo, hi = system.domain[:, 0], system.domain[:, 1]
    pts = rng.uniform(lo, hi, size=(PSD_SWEEP_POINTS, system.n_dim))
    for q in pts:
        d = system.damping(q)
        d = 0.5 * (d + d.T)
        min_eig = float(np.linalg.eigvalsh(d)[0])
        if min_eig < -1e-10 * abs(float(np.trace(d))):
            raise InputError(
                f"system {system.name!r}: damping matrix not PSD at {q} "
                f"(min eigenvalue {min_eig:g})"
            )


def make_system(name, kind, damping_fn, domain, description, default_lengthscales) -> GroundTruthSystem:
    system = GroundTruthSystem(
        name=name,
        kind=kind,
        damping_fn=damping_fn,
        domain=np.asarray(domain, dtype=float),
        description=description,
        default_lengthscales=np.asarray(default_lengthscales, dtype=float),
    )
    _psd_construction_sweep(system)
    return system


_DIAG3_A = np.array([1.0, 1.5, 2.0])
_DIAG3_B = np.array([0.004, 0.05, 0.5])


def _diag3_damping(qd: np.ndarray) -> np.ndarray:
    return np.diag(
        [
            _DIAG3_A[0] + _DIAG3_B[0] * qd[0] ** 2,
            _DIAG3_A[1] + _DIAG3_B[1] * abs(qd[1]),
            _DIAG3_A[2] + _DIAG3_B[2] * math.tanh(qd[2]) ** 2,
        ]
    )


def _full3_factor(qd: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [1.2, 0.0, 0.0],
            [0.3 + 0.1 * math.tanh(qd[0] / 10.0), 1.0, 0.0],
            [
                0.2,
                0.15 + 0.1 * math.tanh(qd[1] / 10.0),
                1.5 + 0.2 * math.tanh((qd[2] - 65.0) / 20.0),
            ],
        ]
    )


def _full3_damping(qd: np.ndarray) -> np.ndarray:
    L = _full3_factor(qd)
    return L @ L.T + 0.1 * np.eye(3)


_BOX3 = [[-25.0, 25.0], [-25.0, 25.0], [40.0, 90.0]]


def builtin_systems() -> dict[str, GroundTruthSystem]:
    """The shipped ground-truth systems, keyed by id."""
    return {
        "linear1": make_system(
            "linear1",
            "diagonal",
            lambda qd: np.array([[2.0]]),
            [[-25.0, 25.0]],
            "scalar constant damping d = 2 (analytic reference case)",
            [12.0],
        ),
        "diag3": make_system(
            "diag3",
            "diagonal",
            _diag3_damping,
            _BOX3,
            "diagonal damping: quadratic, absolute-value and tanh^2 laws",
            [12.0, 12.0, 12.0],
        ),
        "full3": make_system(
            "full3",
            "full",
            _full3_damping,
            _BOX3,
            "full damping L(qd) L(qd)^T + 0.1 I with smooth triangular factor",
            [12.0, 12.0, 12.0],
        ),
    }


def get_system(system_id: str) -> GroundTruthSystem:
    systems = builtin_systems()
    if system_id not in systems:
        raise InputError(
            f"unknown system id {system_id!r}; available: {sorted(systems)}"
        )
    return systems[system_id]


def sample_trajectory(
    system: GroundTruthSystem,
    count: int,
    seed: int = 0,
    waveform: str = "periodic",
) -> np.ndarray:
    """Velocity samples: sinusoidal sweep of the box or seeded uniform draws.

    Periodic mode places ``count`` equally spaced times over one fundamental
    period of the per-dimension frequencies; the box center and half-width
    give offset and amplitude, so every sample stays inside the domain.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    lo, hi = system.domain[:, 0], system.domain[:, 1]
    if waveform == "uniform":
        rng = np.random.default_rng(seed)
        return rng.uniform(lo, hi, size=(count, system.n_dim))
    if waveform != "periodic":
        raise InputError(f"unknown waveform {waveform!r}")
    center = 0.5 * (lo + hi)
    amplitude = 0.5 * (hi - lo)
    freqs = np.array(TRAJECTORY_FREQUENCIES[: system.n_dim])
    phases = np.array(TRAJECTORY_PHASES[: system.n_dim])
    if freqs.size < system.n_dim:
        raise InputError("periodic waveform supports at most 3 dimensions")
    period = 10.0  # fundamental period of frequencies 0.1, 0.2, 0.3
    t = np.linspace(0.0, period, count, endpoint=False)
    return center + amplitude * np.sin(2.0 * math.pi * freqs * t[:, None] + phases)


def generate_dataset(
    system: GroundTruthSystem,
    velocities: np.ndarray,
    noise_std: float,
    seed: int = 0,
) -> Dataset:
    """Noisy torque observations y_i = D(qd_i) qd_i + N(0, noise_std^2 I)."""
    if noise_std < 0:
        raise InputError("noise_std must be >= 0")
    Q = np.atleast_2d(np.asarray(velocities, dtype=float))
    Y = system.torque_batch(Q)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        Y = Y + rng.normal(0.0, noise_std, size=Y.shape)
    return Dataset(Q, Y, noise_variance_hint=noise_std**2)


def adversarial_dataset(
    size: int = 60,
    seed: int = 0,
    boundary_fraction: float = 0.15,
    noise_std: float = 0.5,
) -> Dataset:
    """Dataset engineered to break unconstrained passivity near the boundary.

    Most samples follow the diag3 ground truth, but a cluster near the upper
    domain corner gets its torque flipped against the velocity so the local
    dissipated power is strongly negative.  An unconstrained fit chases those
    points; a constrained fit cannot.
    """
    system = get_system("diag3")
    rng = np.random.default_rng(seed)
    lo, hi = system.domain[:, 0], system.domain[:, 1]
    n_bad = max(1, int(round(size * boundary_fraction)))
    n_good = size - n_bad
    Q_good = rng.uniform(lo, hi, size=(n_good, system.n_dim))
    # cluster in the top 10% band of every dimension
    Q_bad = rng.uniform(hi - 0.1 * (hi - lo), hi, size=(n_bad, system.n_dim))
    Q = np.vstack([Q_good, Q_bad])
    Y = system.torque_batch(Q)
    # flip: y -> y - 2 * (power / |qd|^2) * qd negates the local power
    for i in range(n_good, size):
        q = Q[i]
        power = float(q @ Y[i])
        Y[i] = Y[i] - 2.0 * (power / float(q @ q)) * q
    Y = Y + rng.normal(0.0, noise_std, size=Y.shape)
    return Dataset(Q, Y, noise_variance_hint=noise_std**2)


@dataclass(frozen=True)
class NmseResult:
    per_output: np.ndarray
    aggregate: float


def nmse(predictions: np.ndarray, truth: np.ndarray) -> NmseResult:
    """Normalized mean squared error per output and averaged over outputs."""
    pred = np.atleast_2d(np.asarray(predictions, dtype=float))
    y = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != y.shape:
        raise InputError(f"shape mismatch: {pred.shape} vs {y.shape}")
    num = np.sum((pred - y) ** 2, axis=0)
    den = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    per = np.empty(y.shape[1])
    for n in range(y.shape[1]):
        if den[n] == 0.0:
            per[n] = 0.0 if num[n] == 0.0 else math.inf
        else:
            per[n] = num[n] / den[n]
    return NmseResult(per_output=per, aggregate=float(np.mean(per)))


@dataclass(frozen=True)
class RelativeErrorResult:
    errors: np.ndarray  # (D, N)
    mean: np.ndarray  # (N,)
    variance: np.ndarray  # (N,)


def relative_error(predictions, truth, normalizer: float) -> RelativeErrorResult:
    """Elementwise (prediction - truth) / normalizer with per-output stats."""
    if not normalizer > 0:
        raise InputError("normalizer must be > 0")
    pred = np.atleast_2d(np.asarray(predictions, dtype=float))
    y = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != y.shape:
        raise InputError(f"shape mismatch: {pred.shape} vs {y.shape}")
    err = (pred - y) / normalizer
    return RelativeErrorResult(
        errors=err, mean=err.mean(axis=0), variance=err.var(axis=0)
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(path, data: Dataset) -> None:
    """Plain CSV: header qd_1..qd_N,tau_1..tau_N, 17-significant-digit rows."""
    n = data.n_dim
    header = ",".join([f"qd_{i+1}" for i in range(n)] + [f"tau_{i+1}" for i in range(n)])
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for q, y in zip(data.velocities, data.torques):
            fh.write(",".join(_fmt(v) for v in (*q, *y)) + "\n")


def read_dataset(path) -> Dataset:
    """Inverse of ``write_dataset``; errors carry the offending line number."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file, no data rows")
    header = lines[0].split(",")
    if len(header) < 2 or len(header) % 2 != 0:
        raise ParseError(f"{path}:1: malformed header {lines[0]!r}")
    n = len(header) // 2
    expected = [f"qd_{i+1}" for i in range(n)] + [f"tau_{i+1}" for i in range(n)]
    if header != expected:
        raise ParseError(f"{path}:1: header columns {header} != {expected}")
    velocities, torques = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2 * n:
            raise ParseError(
                f"{path}:{lineno}: expected {2 * n} columns, found {len(parts)}"
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        velocities.append(vals[:n])
        torques.append(vals[n:])
    if not velocities:
        raise ParseError(f"{path}: no data rows")
    return Dataset(np.array(velocities), np.array(torques))


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description, mirroring the plain-text config keys."""

    system: str = "full3"
    train_sizes: tuple = (50,)
    val_size: int = 100
    test_size: int = 200
    noise_std: float = 1.0
    seeds: tuple = (0, 1, 2)
    kinds: tuple = ("ard", "diag", "full")
    lengthscales: tuple | None = None  # None -> the system default
    noise_variance: float = 100.0
    constrained: bool = False
    budget: int = 40

    def __post_init__(self):
        if self.val_size < 1 or self.test_size < 1:
            raise InputError("val_size and test_size must be >= 1")
        if any(s < 1 for s in self.train_sizes):
            raise InputError("train sizes must be >= 1")
        if self.noise_std < 0:
            raise InputError("noise_std must be >= 0")

    def resolved_lengthscales(self) -> np.ndarray:
        if self.lengthscales is not None:
            return np.asarray(self.lengthscales, dtype=float)
        return get_system(self.system).default_lengthscales


CONFIG_KEYS = {
    "system": "ground-truth system id (linear1, diag3, full3)",
    "train_sizes": "comma-separated training set sizes",
    "val_size": "validation set size",
    "test_size": "test set size",
    "noise_std": "observation noise standard deviation",
    "seeds": "comma-separated seeds",
    "kinds": "comma-separated estimator kinds (ard, diag, full)",
    "lengthscales": "comma-separated shared lengthscales (default: system choice)",
    "noise_variance": "GP noise variance sigma_eps^2",
    "constrained": "true/false: enforce the passivity bound",
    "budget": "hypervariance optimization budget (objective evaluations)",
}


def _parse_tuple(value: str, cast):
    return tuple(cast(v.strip()) for v in value.split(",") if v.strip())


def read_config(path) -> ExperimentConfig:
    """Parse a flat ``key = value`` config file ('#' starts a comment)."""
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise InputError(
                    f"{path}:{lineno}: unknown config key {key!r}; "
                    f"known keys: {sorted(CONFIG_KEYS)}"
                )
            try:
                if key in ("train_sizes", "seeds"):
                    values[key] = _parse_tuple(value, int)
                elif key == "kinds":
                    values[key] = _parse_tuple(value, str)
                elif key == "lengthscales":
                    values[key] = _parse_tuple(value, float)
                elif key in ("val_size", "test_size", "budget"):
                    values[key] = int(value)
                elif key in ("noise_std", "noise_variance"):
                    values[key] = float(value)
                elif key == "constrained":
                    if value not in ("true", "false"):
                        raise ValueError(f"expected true/false, got {value!r}")
                    values[key] = value == "true"
                else:
                    values[key] = value
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return ExperimentConfig(**values)
