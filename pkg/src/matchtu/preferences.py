"""Synthetic markets, simulated interactions, implicit ALS and ratings ingestion.

All randomness comes from numpy's ``PCG64`` bit generator seeded with the
config's integer seed, so every output is a pure function of (config, seed).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .market import DensePreferences, FactorizedPreferences, MarketShape

GENERATOR_NAME = "numpy.random.PCG64"
REG_FLOOR = 1e-8


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class CrowdingConfig:
    lam: float
    seed: int
    shape: MarketShape

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"crowding lambda must lie in [0, 1], got {self.lam}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass(frozen=True)
class ObservationMatrix:
    O_p: np.ndarray
    O_q: np.ndarray


@dataclass(frozen=True)
class FactorizeConfig:
    dim: int = 8
    reg: float = 0.1
    alpha: float = 1.0
    iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.iters < 1:
            raise ValueError("dim and iters must be >= 1")
        if self.reg < 0 or self.alpha < 0:
            raise ValueError("reg and alpha must be non-negative")


def generate_preferences(cfg: CrowdingConfig) -> DensePreferences:
    """Blend i.i.d. uniform scores with an index-proportional shared ranking.

    ``p[x, y] = (1-lam) U[x, y] + lam (y+1)/|Y|`` and
    ``q[x, y] = (1-lam) U'[x, y] + lam (x+1)/|X|``; at ``lam = 1`` every
    candidate ranks employers identically and vice versa.
    """
    nx, ny = cfg.shape.num_candidates, cfg.shape.num_employers
    rng = make_rng(cfg.seed)
    U = rng.random((nx, ny))
    U2 = rng.random((nx, ny))
    lam = cfg.lam
    P = (1.0 - lam) * U + lam * (np.arange(1, ny + 1) / ny)[None, :]
    Q = (1.0 - lam) * U2 + lam * (np.arange(1, nx + 1) / nx)[:, None]
    return DensePreferences(P, Q)


def sample_observations(prefs: DensePreferences, seed: int) -> ObservationMatrix:
    """Independent Bernoulli draws from ``P`` and ``Q`` treated as probabilities."""
    for name, mat in (("P", prefs.P), ("Q", prefs.Q)):
        if np.any(mat < 0) or np.any(mat > 1) or not np.all(np.isfinite(mat)):
            raise ValueError(f"{name} has entries outside [0, 1]; they are not probabilities")
    rng = make_rng(seed)
    O_p = (rng.random(prefs.P.shape) < prefs.P).astype(np.float64)
    O_q = (rng.random(prefs.Q.shape) < prefs.Q).astype(np.float64)
    return ObservationMatrix(O_p, O_q)


def sample_uniform_factors(shape: MarketShape, dim: int, seed: int) -> FactorizedPreferences:
    """Factor vectors drawn from ``U[0, 1/sqrt(D)]``, used for the scaling benchmarks."""
    rng = make_rng(seed)
    hi = 1.0 / np.sqrt(dim)
    nx, ny = shape.num_candidates, shape.num_employers
    return FactorizedPreferences(
        F=rng.uniform(0.0, hi, (nx, dim)),
        K=rng.uniform(0.0, hi, (nx, dim)),
        G=rng.uniform(0.0, hi, (ny, dim)),
        L=rng.uniform(0.0, hi, (ny, dim)),
    )


def ials_objective(obs: np.ndarray, rows: np.ndarray, cols: np.ndarray, reg: float, alpha: float) -> float:
    """``sum c (o - <r, c>)^2 + reg (|R|^2 + |C|^2)`` with confidence ``c = 1 + alpha o``."""
    resid = obs - rows @ cols.T
    conf = 1.0 + alpha * obs
    return float(np.sum(conf * resid * resid) + reg * (np.sum(rows * rows) + np.sum(cols * cols)))


def _ridge_side(obs: np.ndarray, fixed: np.ndarray, reg: float, alpha: float) -> np.ndarray:
    # per row r: (F^T F + alpha F^T diag(o_r) F + reg I) x_r = F^T (c_r * o_r)
    dim = fixed.shape[1]
    outer = np.einsum("yd,ye->yde", fixed, fixed).reshape(fixed.shape[0], dim * dim)
    normal = (alpha * obs) @ outer
    normal = normal.reshape(-1, dim, dim) + (fixed.T @ fixed)[None]
    rhs = ((1.0 + alpha * obs) * obs) @ fixed
    eye = np.eye(dim)
    try:
        return np.linalg.solve(normal + reg * eye, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        warnings.warn(f"singular ALS normal equations; applying regularization floor {REG_FLOOR}", RuntimeWarning)
        return np.linalg.solve(normal + max(reg, REG_FLOOR) * eye, rhs[..., None])[..., 0]


def factorize_implicit(obs, cfg: FactorizeConfig, trace: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-feedback ALS (confidence-weighted ridge alternations).

    Returns ``(row_factors, col_factors)`` with shapes ``(R, D)`` and ``(C, D)``.
    If ``trace`` is given, the training objective after every alternation is
    appended to it.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.size == 0:
        raise ValueError(f"observation matrix must be a non-empty 2-D array, got shape {obs.shape}")
    rng = make_rng(cfg.seed)
    rows = rng.normal(0.0, 0.01, (obs.shape[0], cfg.dim))
    cols = rng.normal(0.0, 0.01, (obs.shape[1], cfg.dim))
    obs_t = np.ascontiguousarray(obs.T)
    for _ in range(cfg.iters):
        rows = _ridge_side(obs, cols, cfg.reg, cfg.alpha)
        if trace is not None:
            trace.append(ials_objective(obs, rows, cols, cfg.reg, cfg.alpha))
        cols = _ridge_side(obs_t, rows, cfg.reg, cfg.alpha)
        if trace is not None:
            trace.append(ials_objective(obs, rows, cols, cfg.reg, cfg.alpha))
    return rows, cols


@dataclass
class RatingsMatrix:
    """Dense ratings over densified id spaces; absent entries are NaN."""

    values: np.ndarray
    rater_index: dict = field(default_factory=dict)
    rated_index: dict = field(default_factory=dict)
    duplicates: int = 0

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)


def _id(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        return token


def _index(ids) -> dict:
    try:
        ordered = sorted(ids)
    except TypeError:
        ordered = sorted(ids, key=str)
    return {k: i for i, k in enumerate(ordered)}


def ingest_ratings(path, shape_hint: tuple[int, int] | None = None) -> RatingsMatrix:
    """Read ``rater_id,rated_id,rating`` rows into a dense matrix.

    Ids are densified in sorted order.  Duplicate pairs keep the last value
    and are counted (one warning total).  ``shape_hint`` pads the matrix to at
    least that shape and rejects files with more ids than it allows.
    """
    triples = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not tok.strip() for tok in row):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields (rater, rated, rating), got {len(row)}")
            try:
                rating = float(row[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: rating {row[2]!r} is not a number") from None
            if not np.isfinite(rating):
                raise ValueError(f"{path}:{lineno}: rating must be finite")
            triples.append((_id(row[0]), _id(row[1]), rating))
    if not triples:
        raise ValueError(f"{path}: no ratings")

    rater_index = _index({t[0] for t in triples})
    rated_index = _index({t[1] for t in triples})
    nr, nc = len(rater_index), len(rated_index)
    if shape_hint is not None:
        if nr > shape_hint[0] or nc > shape_hint[1]:
            raise ValueError(f"{path}: {nr}x{nc} ids exceed shape hint {tuple(shape_hint)}")
        nr, nc = shape_hint
    values = np.full((nr, nc), np.nan)
    duplicates = 0
    for rater, rated, rating in triples:
        i, j = rater_index[rater], rated_index[rated]
        if not np.isnan(values[i, j]):
            duplicates += 1
        values[i, j] = rating
    if duplicates:
        warnings.warn(f"{path}: {duplicates} duplicate (rater, rated) pairs; last value kept", RuntimeWarning)
    return RatingsMatrix(values, rater_index, rated_index, duplicates)
