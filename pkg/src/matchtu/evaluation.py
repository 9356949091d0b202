"""Reciprocal scoring policies and expected-match evaluation.

Expected matches under the two-sided position-based model:

    W = sum_{x,y} p[x,y] v(rank_x(y)) * q[x,y] v(rank_y(x))

where ``rank_x(y)`` is the 1-based position of employer ``y`` in candidate
``x``'s presented list, ``rank_y(x)`` the position of ``x`` in ``y``'s list,
and ``v`` the examination function.  A pair counts only if both sides examine
and accept each other.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ipfp import solve_batch, solve_minibatch
from .market import (
    DenseMu,
    DensePreferences,
    FactorizedMu,
    FactorizedPreferences,
    MarketShape,
    MatchingPattern,
    SolverConfig,
    uniform_mass,
)
from .preferences import (
    GENERATOR_NAME,
    CrowdingConfig,
    FactorizeConfig,
    factorize_implicit,
    generate_preferences,
    sample_observations,
)

log = logging.getLogger(__name__)

WELFARE_FORMULA = "sum_{x,y} p[x,y]*v(rank_x(y)) * q[x,y]*v(rank_y(x))"


class PolicyKind(str, enum.Enum):
    NAIVE = "naive"
    RECIPROCAL_PRODUCT = "reciprocal"
    CROSS_RATIO = "cross_ratio"
    TU_BATCH = "tu_batch"
    TU_MINIBATCH = "tu_minibatch"

    @property
    def is_tu(self) -> bool:
        return self in (PolicyKind.TU_BATCH, PolicyKind.TU_MINIBATCH)


BASELINES = (PolicyKind.NAIVE, PolicyKind.RECIPROCAL_PRODUCT, PolicyKind.CROSS_RATIO)


def cross_ratio(p, q):
    """Cross-ratio uninorm ``pq / (pq + (1-p)(1-q))``; the 0/0 corner is 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any((p < 0) | (p > 1)) or np.any((q < 0) | (q > 1)):
        raise ValueError("cross-ratio needs preferences in [0, 1]")
    num = p * q
    den = num + (1.0 - p) * (1.0 - q)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)


def score_policy(kind: PolicyKind, prefs: DensePreferences, tu_pattern: MatchingPattern | None = None) -> np.ndarray:
    kind = PolicyKind(kind)
    if kind is PolicyKind.NAIVE:
        return np.array(prefs.P)
    if kind is PolicyKind.RECIPROCAL_PRODUCT:
        return prefs.P * prefs.Q
    if kind is PolicyKind.CROSS_RATIO:
        return cross_ratio(prefs.P, prefs.Q)
    if tu_pattern is None:
        raise ValueError(f"{kind.value} scoring needs a matching pattern from the solver")
    if isinstance(tu_pattern, DenseMu):
        return np.array(tu_pattern.mu)
    return tu_pattern.dense()


@dataclass(frozen=True)
class RankingTable:
    candidate_lists: np.ndarray  # (|X|, |Y|): employers in presentation order
    employer_lists: np.ndarray  # (|Y|, |X|): candidates in presentation order

    def candidate_ranks(self) -> np.ndarray:
        """``rank_x(y)`` as an ``(|X|, |Y|)`` array of 1-based positions."""
        return _inverse_positions(self.candidate_lists)

    def employer_ranks(self) -> np.ndarray:
        """``rank_y(x)`` laid out candidate-major, shape ``(|X|, |Y|)``."""
        return _inverse_positions(self.employer_lists).T


def _inverse_positions(lists: np.ndarray) -> np.ndarray:
    ranks = np.empty_like(lists)
    positions = np.broadcast_to(np.arange(1, lists.shape[1] + 1), lists.shape)
    np.put_along_axis(ranks, lists, positions, axis=1)
    return ranks


def build_rankings(scores) -> RankingTable:
    """Descending sort on both sides, ties broken by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"scores must be a matrix, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    neg = -scores
    return RankingTable(
        candidate_lists=np.argsort(neg, axis=1, kind="stable"),
        employer_lists=np.argsort(neg.T, axis=1, kind="stable"),
    )


def _exp_decay(k):
    return np.exp(-(np.asarray(k, dtype=np.float64) - 1.0))


EXAMINATION = {"exp": _exp_decay}


def examination(k, kind: str = "exp"):
    """Probability of examining rank position ``k`` (1-based)."""
    if kind not in EXAMINATION:
        raise ValueError(f"unknown examination function {kind!r}; known: {sorted(EXAMINATION)}")
    if np.any(np.asarray(k) < 1):
        raise ValueError(f"rank positions start at 1, got {k}")
    out = EXAMINATION[kind](k)
    return out if np.ndim(out) else float(out)


def expected_matches(true_p, true_q, rankings: RankingTable, exam: str = "exp") -> float:
    true_p = np.asarray(true_p, dtype=np.float64)
    true_q = np.asarray(true_q, dtype=np.float64)
    if true_p.shape != true_q.shape or rankings.candidate_lists.shape != true_p.shape:
        raise ValueError(
            f"shape mismatch: p {true_p.shape}, q {true_q.shape}, rankings {rankings.candidate_lists.shape}"
        )
    if rankings.employer_lists.shape != true_p.shape[::-1]:
        raise ValueError(f"employer lists {rankings.employer_lists.shape} do not fit {true_p.shape}")
    vx = examination(rankings.candidate_ranks(), exam)
    vy = examination(rankings.employer_ranks(), exam)
    return float(np.sum(true_p * vx * true_q * vy))


@dataclass(frozen=True)
class ComparisonConfig:
    num_candidates: int = 1000
    num_employers: int = 500
    lam: float = 0.0
    beta: float = 1.0
    exam: str = "exp"
    seed: int = 0
    mass_total: float = 1.0
    solver_iters: int = 100
    batch_size: int = 100
    factorize: FactorizeConfig = field(default_factory=FactorizeConfig)


@dataclass
class PolicyResult:
    values: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def stderr(self) -> float | None:
        if len(self.values) < 2:
            return None
        return float(np.std(self.values, ddof=1) / math.sqrt(len(self.values)))


@dataclass
class WelfareReport:
    per_policy: dict[str, PolicyResult]
    repetitions: int
    config: dict
    formula: str = WELFARE_FORMULA

    def mean(self, kind) -> float:
        return self.per_policy[PolicyKind(kind).value].mean

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "formula": self.formula,
            "repetitions": self.repetitions,
            "policies": {
                name: {"mean": r.mean, "stderr": r.stderr, "values": list(r.values)}
                for name, r in self.per_policy.items()
            },
        }


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"comparison pipeline failed at stage '{stage}': {cause}")


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def _rep_seeds(seed: int, rep: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, rep]).generate_state(4, dtype=np.uint64)]


def run_repetition(cfg: ComparisonConfig, policies, rep: int) -> dict[str, float]:
    """One fresh market: generate, observe, factorize, solve/score, rank, evaluate."""
    shape = MarketShape(cfg.num_candidates, cfg.num_employers)
    gen_seed, obs_seed, fp_seed, fq_seed = _rep_seeds(cfg.seed, rep)
    with _Stage("generate"):
        truth = generate_preferences(CrowdingConfig(cfg.lam, gen_seed, shape))
    with _Stage("observe"):
        obs = sample_observations(truth, obs_seed)
    with _Stage("factorize"):
        fcfg = cfg.factorize
        F, G = factorize_implicit(obs.O_p, FactorizeConfig(fcfg.dim, fcfg.reg, fcfg.alpha, fcfg.iters, fp_seed))
        K, L = factorize_implicit(obs.O_q, FactorizeConfig(fcfg.dim, fcfg.reg, fcfg.alpha, fcfg.iters, fq_seed))
        factors = FactorizedPreferences(F, K, G, L)
        # baselines and batch IPFP see the imputed matrices, clipped to probabilities
        imputed = DensePreferences(np.clip(F @ G.T, 0.0, 1.0), np.clip(K @ L.T, 0.0, 1.0))

    mass = uniform_mass(shape, cfg.mass_total)
    solver = SolverConfig(beta=cfg.beta, max_iters=cfg.solver_iters, batch_size=cfg.batch_size)
    out = {}
    for kind in policies:
        kind = PolicyKind(kind)
        pattern = None
        if kind is PolicyKind.TU_BATCH:
            with _Stage("solve_batch"):
                pattern, _, _ = solve_batch(imputed, mass, solver)
        elif kind is PolicyKind.TU_MINIBATCH:
            with _Stage("solve_minibatch"):
                pattern, _, _ = solve_minibatch(factors, mass, solver)
        with _Stage(f"score:{kind.value}"):
            scores = _ranking_scores(kind, imputed, pattern)
        with _Stage(f"rank:{kind.value}"):
            table = build_rankings(scores)
        with _Stage(f"evaluate:{kind.value}"):
            out[kind.value] = expected_matches(truth.P, truth.Q, table, cfg.exam)
    return out


def _ranking_scores(kind, imputed, pattern):
    if isinstance(pattern, FactorizedMu):
        # log mu orders pairs exactly like mu and cannot underflow
        return pattern.log_mu()
    return score_policy(kind, imputed, pattern)


def run_comparison(cfg: ComparisonConfig, policies, repetitions: int = 10) -> WelfareReport:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    policies = [PolicyKind(p) for p in policies]
    results = {p.value: PolicyResult([]) for p in policies}
    for rep in range(repetitions):
        values = run_repetition(cfg, policies, rep)
        log.info("rep %d: %s", rep, values)
        for name, value in values.items():
            results[name].values.append(value)
    config = asdict(cfg)
    config["policies"] = [p.value for p in policies]
    config["generator"] = GENERATOR_NAME
    return WelfareReport(results, repetitions, config)
