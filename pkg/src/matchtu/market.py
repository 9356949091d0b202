"""Domain types for two-sided transferable-utility matching markets.

Candidates are indexed by ``x`` (rows) and employers by ``y`` (columns).
Both preference matrices are stored candidate-major, so ``Q[x, y]`` holds the
employer-to-candidate utility ``q_{y,x}`` and the joint utility is simply
``P + Q``.  Candidate masses are ``n`` and employer masses are ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

MASS_RTOL = 1e-9


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class MarketShape:
    num_candidates: int
    num_employers: int
    factor_dim: int = 0

    def __post_init__(self):
        if self.num_candidates < 1 or self.num_employers < 1:
            raise ValueError(f"market sides must be non-empty, got {self.num_candidates}x{self.num_employers}")
        if self.factor_dim < 0:
            raise ValueError("factor_dim must be non-negative")

    @property
    def pairs(self) -> int:
        return self.num_candidates * self.num_employers


@dataclass(frozen=True)
class DensePreferences:
    """Bilateral score matrices ``P[x, y] = p_{x,y}`` and ``Q[x, y] = q_{y,x}``."""

    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P, 2, "P"))
        object.__setattr__(self, "Q", _frozen(self.Q, 2, "Q"))

    @property
    def shape(self) -> MarketShape:
        return MarketShape(*self.P.shape)

    def phi(self) -> np.ndarray:
        return self.P + self.Q


@dataclass(frozen=True)
class FactorizedPreferences:
    """Factor matrices with ``p_{x,y} = <F[x], G[y]>`` and ``q_{y,x} = <K[x], L[y]>``."""

    F: np.ndarray
    K: np.ndarray
    G: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        for name in ("F", "K", "G", "L"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2, name))

    @property
    def dim(self) -> int:
        return self.F.shape[1]

    @property
    def shape(self) -> MarketShape:
        return MarketShape(self.F.shape[0], self.G.shape[0], self.dim)

    def candidate_factors(self) -> np.ndarray:
        """``[F | K]``, shape ``(|X|, 2D)``."""
        return np.concatenate([self.F, self.K], axis=1)

    def employer_factors(self) -> np.ndarray:
        """``[G | L]``, shape ``(|Y|, 2D)``."""
        return np.concatenate([self.G, self.L], axis=1)

    def phi(self) -> np.ndarray:
        # one |X|x|Y| allocation: <[f,k], [g,l]> = <f,g> + <k,l>
        return self.candidate_factors() @ self.employer_factors().T

    def expand(self) -> DensePreferences:
        return DensePreferences(self.F @ self.G.T, self.K @ self.L.T)


PreferenceModel = Union[DensePreferences, FactorizedPreferences]


@dataclass(frozen=True)
class MassSpec:
    """Candidate masses ``n``, employer masses ``m`` and their common total ``C``."""

    n: np.ndarray
    m: np.ndarray
    C: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "n", _frozen(self.n, 1, "n"))
        object.__setattr__(self, "m", _frozen(self.m, 1, "m"))
        object.__setattr__(self, "C", float(self.C))

    def to_dict(self) -> dict:
        return {"n": self.n.tolist(), "m": self.m.tolist(), "C": self.C}

    @classmethod
    def from_dict(cls, d: dict) -> "MassSpec":
        return cls(np.asarray(d["n"], dtype=float), np.asarray(d["m"], dtype=float), float(d["C"]))


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.0
    max_iters: int = 100
    residual_tol: float = 0.0
    batch_size: int = 100

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"beta must be a positive finite number, got {self.beta}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.residual_tol >= 0:
            raise ValueError(f"residual_tol must be >= 0, got {self.residual_tol}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def clamped_batch_size(self, shape: MarketShape) -> int:
        return min(self.batch_size, max(shape.num_candidates, shape.num_employers))


@dataclass(frozen=True)
class ScalingState:
    """IPFP scaling vectors ``u = sqrt(mu_x0)`` and ``v = sqrt(mu_0y)``."""

    u: np.ndarray
    v: np.ndarray
    iters_run: int
    final_residual: float

    def to_dict(self) -> dict:
        return {"u": self.u.tolist(), "v": self.v.tolist(), "iters": self.iters_run, "residual": self.final_residual}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingState":
        return cls(np.asarray(d["u"], dtype=float), np.asarray(d["v"], dtype=float), int(d["iters"]), float(d["residual"]))


@dataclass(frozen=True)
class DenseMu:
    mu: np.ndarray
    mu_x0: np.ndarray
    mu_0y: np.ndarray


@dataclass(frozen=True)
class FactorizedMu:
    """Stable factor matrices; ``log mu[x, y] = <Psi[x], Xi[y]> / (2 beta)``."""

    Psi: np.ndarray
    Xi: np.ndarray
    beta: float

    def log_mu(self, rows=slice(None), cols=slice(None)) -> np.ndarray:
        return (self.Psi[rows] @ self.Xi[cols].T) / (2.0 * self.beta)

    def dense(self) -> np.ndarray:
        return np.exp(self.log_mu())


MatchingPattern = Union[DenseMu, FactorizedMu]


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.ok

    def __iter__(self):
        return iter(self.issues)

    def __len__(self):
        return len(self.issues)


def validate_market(shape: MarketShape, prefs: PreferenceModel, mass: MassSpec) -> ValidationReport:
    """Collect every violated market invariant; an empty report means solvable."""
    report = ValidationReport()
    add = report.issues.append
    nx, ny = shape.num_candidates, shape.num_employers

    if isinstance(prefs, DensePreferences):
        if prefs.P.shape != prefs.Q.shape:
            add(f"shape: P {prefs.P.shape} and Q {prefs.Q.shape} differ")
        for name, mat in (("P", prefs.P), ("Q", prefs.Q)):
            if mat.shape != (nx, ny):
                add(f"shape: {name} is {mat.shape}, market is {(nx, ny)}")
            if not np.all(np.isfinite(mat)):
                add(f"non-finite: {name} has non-finite entries")
    elif isinstance(prefs, FactorizedPreferences):
        widths = {name: getattr(prefs, name).shape[1] for name in "FKGL"}
        if len(set(widths.values())) > 1:
            add("shape: factor widths differ " + ", ".join(f"{k}={v}" for k, v in widths.items()))
        if min(widths.values()) < 1:
            add("shape: factorized model needs D >= 1")
        if shape.factor_dim and any(w != shape.factor_dim for w in widths.values()):
            add(f"shape: factor widths do not match D={shape.factor_dim}")
        for name, rows in (("F", nx), ("K", nx), ("G", ny), ("L", ny)):
            mat = getattr(prefs, name)
            if mat.shape[0] != rows:
                add(f"shape: {name} has {mat.shape[0]} rows, expected {rows}")
            if not np.all(np.isfinite(mat)):
                add(f"non-finite: {name} has non-finite entries")
    else:
        add(f"type: unsupported preference model {type(prefs).__name__}")

    if mass.n.shape != (nx,):
        add(f"shape: n has length {mass.n.shape}, expected {nx}")
    if mass.m.shape != (ny,):
        add(f"shape: m has length {mass.m.shape}, expected {ny}")
    if not (mass.C > 0 and np.isfinite(mass.C)):
        add(f"mass: total C={mass.C} must be positive")
    for name, vec in (("n", mass.n), ("m", mass.m)):
        if not np.all(np.isfinite(vec)) or np.any(vec <= 0):
            add(f"mass: {name} entries must be finite and strictly positive")
        total = float(np.sum(vec))
        if abs(total - mass.C) > MASS_RTOL * abs(mass.C):
            add(f"mass: sum({name})={total!r} differs from C={mass.C!r}")
    return report


def joint_utility(prefs: PreferenceModel, x: int, y: int) -> float:
    """``phi_{x,y} = p_{x,y} + q_{y,x}``."""
    shape = prefs.shape
    if not (0 <= x < shape.num_candidates and 0 <= y < shape.num_employers):
        raise IndexError(f"pair ({x}, {y}) outside market {shape.num_candidates}x{shape.num_employers}")
    if isinstance(prefs, DensePreferences):
        return float(prefs.P[x, y] + prefs.Q[x, y])
    return float(prefs.F[x] @ prefs.G[y] + prefs.K[x] @ prefs.L[y])


def uniform_mass(shape: MarketShape, C: float = 1.0) -> MassSpec:
    """Equal capacity ``C/|X|`` per candidate and ``C/|Y|`` per employer."""
    if not C > 0:
        raise ValueError(f"total mass must be positive, got {C}")
    return MassSpec(
        np.full(shape.num_candidates, C / shape.num_candidates),
        np.full(shape.num_employers, C / shape.num_employers),
        C,
    )
