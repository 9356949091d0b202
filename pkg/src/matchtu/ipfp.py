"""Batch and mini-batch IPFP solvers for the TU matching equilibrium.

Both solvers iterate the square-root fixed point

    u <- sqrt(n + s_u^2) - s_u,   s_u = A v / 2
    v <- sqrt(m + s_v^2) - s_v,   s_v = A^T u / 2

with kernel ``A = exp(phi / 2 beta)``, starting from ``u = v = 1``.  The batch
solver holds ``A`` in memory; the mini-batch solver regenerates ``B`` rows of
it at a time from the factor matrices, so its working set is linear in the
market size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .market import (
    DenseMu,
    DensePreferences,
    FactorizedMu,
    FactorizedPreferences,
    MassSpec,
    MatchingPattern,
    PreferenceModel,
    ScalingState,
    SolverConfig,
    validate_market,
)

MAX_EXP_ARG = 700.0
MAX_DENSE_ENTRIES = 2**31


class NonFiniteKernelError(FloatingPointError):
    def __init__(self, beta: float, max_abs_phi: float):
        self.beta = beta
        self.max_abs_phi = max_abs_phi
        super().__init__(
            f"exp(phi/2beta) overflows: beta={beta!r}, max|phi|={max_abs_phi!r} "
            f"(max|phi|/2beta must be <= {MAX_EXP_ARG})"
        )


class DenseExpansionError(MemoryError):
    pass


@dataclass
class IpfpDiagnostics:
    per_iter_residual: list[float] = field(default_factory=list)
    converged: bool = False
    iters_run: int = 0
    wall_time_per_iter: list[float] = field(default_factory=list)


def ipfp_u_update(s, mass_entry):
    """Positive root of ``u^2 + 2 s u = mass_entry``.

    Written as ``mass / (sqrt(mass + s^2) + s)``, which equals
    ``sqrt(mass + s^2) - s`` without the cancellation at large ``s``.
    Works elementwise on arrays.
    """
    return mass_entry / (np.sqrt(mass_entry + s * s) + s)


def _check_kernel_range(lo: float, hi: float, beta: float) -> None:
    peak = max(hi, -lo)
    if not np.isfinite(peak) or peak / (2.0 * beta) > MAX_EXP_ARG:
        raise NonFiniteKernelError(beta, float(peak))


def _check_solvable(prefs: PreferenceModel, mass: MassSpec) -> None:
    report = validate_market(prefs.shape, prefs, mass)
    if not report.ok:
        raise ValueError("market failed validation: " + "; ".join(report.issues))


def batch_kernel(prefs: PreferenceModel, beta: float) -> np.ndarray:
    """Materialize ``A = exp(phi / 2 beta)`` with a single |X|x|Y| allocation."""
    shape = prefs.shape
    if shape.pairs > MAX_DENSE_ENTRIES:
        raise DenseExpansionError(
            f"dense kernel would hold {shape.pairs} entries (> 2^31); use solve_minibatch for this market"
        )
    if isinstance(prefs, DensePreferences):
        A = np.add(prefs.P, prefs.Q)
    else:
        A = prefs.phi()
    _check_kernel_range(A.min(), A.max(), beta)
    A /= 2.0 * beta
    np.exp(A, out=A)
    return A


def _run(
    u_side: Callable[[np.ndarray], np.ndarray],
    v_side: Callable[[np.ndarray], np.ndarray],
    nx: int,
    ny: int,
    cfg: SolverConfig,
) -> tuple[np.ndarray, np.ndarray, IpfpDiagnostics]:
    u = np.ones(nx)
    v = np.ones(ny)
    diag = IpfpDiagnostics()
    for _ in range(cfg.max_iters):
        t0 = time.perf_counter()
        u_new = u_side(v)
        # Gauss-Seidel: the v-side reads the fully updated u
        v_new = v_side(u_new)
        diag.wall_time_per_iter.append(time.perf_counter() - t0)
        res = max(float(np.max(np.abs(u_new - u) / u_new)), float(np.max(np.abs(v_new - v) / v_new)))
        diag.per_iter_residual.append(res)
        diag.iters_run += 1
        u, v = u_new, v_new
        if cfg.residual_tol > 0 and res < cfg.residual_tol:
            diag.converged = True
            break
    if cfg.residual_tol == 0:
        # fixed-budget protocol: no convergence test, the budget is the contract
        diag.converged = True
    return u, v, diag


def solve_batch(
    prefs: PreferenceModel, mass: MassSpec, cfg: SolverConfig
) -> tuple[DenseMu, ScalingState, IpfpDiagnostics]:
    """Batch IPFP on the materialized kernel.

    Factorized models are expanded to dense once.  The returned ``mu`` is
    ``A * u[:, None] * v[None, :]`` computed in place over the kernel buffer.
    """
    _check_solvable(prefs, mass)
    A = batch_kernel(prefs, cfg.beta)
    n, m = mass.n, mass.m

    def u_side(v):
        s = A @ v
        s *= 0.5
        return ipfp_u_update(s, n)

    def v_side(u):
        s = A.T @ u
        s *= 0.5
        return ipfp_u_update(s, m)

    u, v, diag = _run(u_side, v_side, len(n), len(m), cfg)
    A *= u[:, None]
    A *= v[None, :]
    state = ScalingState(u, v, diag.iters_run, diag.per_iter_residual[-1])
    return DenseMu(A, u * u, v * v), state, diag


def _blockwise_side(rows_f, cols_f, mass, batch, beta, work):
    """One side of a mini-batch sweep: kernel rows ``exp(rows_f[j] @ cols_f.T / 2beta)`` per block."""
    scale = 2.0 * beta
    total = rows_f.shape[0]
    cols_t = cols_f.T

    def update(other):
        out = np.empty(total)
        for start in range(0, total, batch):
            stop = min(start + batch, total)
            blk = work[: stop - start]
            np.matmul(rows_f[start:stop], cols_t, out=blk)
            _check_kernel_range(blk.min(), blk.max(), beta)
            blk /= scale
            np.exp(blk, out=blk)
            s = blk @ other
            s *= 0.5
            out[start:stop] = ipfp_u_update(s, mass[start:stop])
        return out

    return update


def stable_factors(prefs: FactorizedPreferences, u: np.ndarray, v: np.ndarray, beta: float) -> FactorizedMu:
    """Width-(2D+2) factors whose scaled inner products give ``log mu``.

    The scaling columns hold ``beta * log(u^2) = beta * log mu_x0`` (and the
    employer analogue) so that ``<psi_x, xi_y> / 2beta = phi/2beta + log u + log v``.
    """
    ones_x = np.ones((len(u), 1))
    ones_y = np.ones((len(v), 1))
    Psi = np.concatenate([prefs.F, prefs.K, (2.0 * beta * np.log(u))[:, None], ones_x], axis=1)
    Xi = np.concatenate([prefs.G, prefs.L, ones_y, (2.0 * beta * np.log(v))[:, None]], axis=1)
    return FactorizedMu(Psi, Xi, beta)


def solve_minibatch(
    prefs: FactorizedPreferences, mass: MassSpec, cfg: SolverConfig
) -> tuple[FactorizedMu, ScalingState, IpfpDiagnostics]:
    """Mini-batch IPFP: kernel rows are rebuilt from factors, ``B`` at a time."""
    if not isinstance(prefs, FactorizedPreferences):
        raise TypeError("solve_minibatch needs a FactorizedPreferences model; dense models have no factor vectors")
    _check_solvable(prefs, mass)
    shape = prefs.shape
    B = cfg.clamped_batch_size(shape)
    nx, ny = shape.num_candidates, shape.num_employers
    FK = prefs.candidate_factors()
    GL = prefs.employer_factors()
    work_x = np.empty((min(B, nx), ny))
    work_y = np.empty((min(B, ny), nx))

    u_side = _blockwise_side(FK, GL, mass.n, B, cfg.beta, work_x)
    v_side = _blockwise_side(GL, FK, mass.m, B, cfg.beta, work_y)
    u, v, diag = _run(u_side, v_side, nx, ny, cfg)
    del work_x, work_y, FK, GL

    state = ScalingState(u, v, diag.iters_run, diag.per_iter_residual[-1])
    return stable_factors(prefs, u, v, cfg.beta), state, diag


def reconstruct_mu(psi_row, xi_row, beta: float) -> float:
    """``exp(<psi, xi> / 2beta)`` for one candidate/employer pair."""
    psi_row = np.asarray(psi_row, dtype=np.float64)
    xi_row = np.asarray(xi_row, dtype=np.float64)
    if psi_row.shape != xi_row.shape or psi_row.ndim != 1:
        raise ValueError(f"stable factor rows differ in shape: {psi_row.shape} vs {xi_row.shape}")
    if psi_row.size < 4 or psi_row.size % 2:
        raise ValueError(f"stable factor rows must have length 2D+2 with D >= 1, got {psi_row.size}")
    return float(np.exp(psi_row @ xi_row / (2.0 * beta)))


def _dense_mu(pattern: MatchingPattern) -> np.ndarray:
    if isinstance(pattern, DenseMu):
        return pattern.mu
    return pattern.dense()


def stability_residual(prefs: PreferenceModel, pattern: MatchingPattern, state: ScalingState, beta: float) -> float:
    """Max relative gap between ``mu`` and ``exp(phi/2beta) u_x v_y``."""
    shape = prefs.shape
    mu = _dense_mu(pattern)
    expect = (shape.num_candidates, shape.num_employers)
    if mu.shape != expect or state.u.shape != expect[:1] or state.v.shape != expect[1:]:
        raise ValueError(f"pattern {mu.shape} / state ({state.u.shape}, {state.v.shape}) do not fit market {expect}")
    K = batch_kernel(prefs, beta)
    K *= state.u[:, None]
    K *= state.v[None, :]
    return float(np.max(np.abs(mu - K) / mu))


def constraint_residual(pattern: DenseMu, mass: MassSpec) -> float:
    """Max mass-normalized violation of the row and column capacity constraints."""
    mu = pattern.mu
    if mu.shape != (len(mass.n), len(mass.m)) or pattern.mu_x0.shape != mass.n.shape or pattern.mu_0y.shape != mass.m.shape:
        raise ValueError(f"pattern {mu.shape} does not fit masses ({len(mass.n)}, {len(mass.m)})")
    rows = np.abs(pattern.mu_x0 + mu.sum(axis=1) - mass.n) / mass.n
    cols = np.abs(pattern.mu_0y + mu.sum(axis=0) - mass.m) / mass.m
    return float(max(rows.max(), cols.max()))
