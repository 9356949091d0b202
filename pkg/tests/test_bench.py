import json

import numpy as np
import pytest

from matchtu import bench
from matchtu.bench import (
    BenchConfig,
    BenchRefused,
    ExperimentRecord,
    bench_sweep,
    emit_report,
    load_report,
    loglog_slope,
    measure_memory,
    predicted_bytes,
)
from matchtu.ipfp import solve_batch, solve_minibatch
from matchtu.market import MarketShape, SolverConfig, uniform_mass
from matchtu.preferences import sample_uniform_factors

QUICK = dict(iters=2, warmup=1)


def market(size, dim, seed=0):
    shape = MarketShape(size, size, dim)
    return sample_uniform_factors(shape, dim, seed), uniform_mass(shape)


def test_batch_record_holds_dense_kernel():
    (rec,) = bench_sweep(BenchConfig(sizes=(100,), mode="batch", iters=100, beta=1.0, factor_dims=(50,)))
    assert rec.peak_solver_bytes >= 100 * 100 * 8
    assert rec.batch_size is None and rec.iters == 100 and len(rec.per_iter_times) == 100
    assert rec.mean_time_per_iter == pytest.approx(np.mean(rec.per_iter_times), rel=1e-12)
    assert "cores=" in rec.machine


@pytest.mark.parametrize("size", [50, 200, 400])
def test_batch_memory_lower_bound(size):
    prefs, mass = market(size, 10)
    _, mem = measure_memory(solve_batch, prefs, mass, SolverConfig(max_iters=3))
    assert mem.peak_bytes >= 8 * size * size


@pytest.mark.parametrize("size, B, D", [(300, 1, 5), (300, 10, 50), (1000, 100, 50), (2000, 7, 8)])
def test_minibatch_memory_upper_bound(size, B, D):
    prefs, mass = market(size, D)
    _, mem = measure_memory(solve_minibatch, prefs, mass, SolverConfig(max_iters=3, batch_size=B))
    assert mem.peak_bytes <= 4 * predicted_bytes("minibatch", size, B, D)


def test_memory_counts_are_repeatable():
    prefs, mass = market(500, 16)
    cfg = SolverConfig(max_iters=4, batch_size=32)
    measure_memory(solve_minibatch, prefs, mass, cfg)  # first call fills interpreter caches
    counts = {measure_memory(solve_minibatch, prefs, mass, cfg)[1].peak_bytes for _ in range(3)}
    assert len(counts) == 1


def test_instrumentation_is_observation_only():
    prefs, mass = market(120, 6)
    cfg = SolverConfig(max_iters=15, batch_size=13)
    (plain, plain_state, _) = solve_minibatch(prefs, mass, cfg)
    (traced, traced_state, _), _ = measure_memory(solve_minibatch, prefs, mass, cfg)
    assert np.array_equal(plain.Psi, traced.Psi) and np.array_equal(plain.Xi, traced.Xi)
    assert np.array_equal(plain_state.u, traced_state.u)
    (bplain, _, _) = solve_batch(prefs, mass, cfg)
    (btraced, _, _), _ = measure_memory(solve_batch, prefs, mass, cfg)
    assert np.array_equal(bplain.mu, btraced.mu)


def test_minibatch_memory_sublinear_in_pairs():
    prefs, mass = market(3000, 8)
    _, mem = measure_memory(solve_minibatch, prefs, mass, SolverConfig(max_iters=2, batch_size=50))
    assert mem.peak_bytes < 8 * 3000 * 3000 / 10


def test_unavailable_instrumentation_is_marked(monkeypatch, tmp_path):
    monkeypatch.setattr(bench, "_numpy_is_traced", lambda: False)
    (rec,) = bench_sweep(BenchConfig(sizes=(30,), factor_dims=(4,), batch_sizes=(8,), **QUICK))
    assert rec.peak_solver_bytes is None and rec.memory_method == "unmeasured"
    path = emit_report([rec], tmp_path / "r.csv", "csv")
    assert "unmeasured" in path.read_text()
    assert load_report(path)[0].peak_solver_bytes is None


def test_one_record_per_combination():
    recs = bench_sweep(BenchConfig(sizes=(20, 40), batch_sizes=(1, 5), factor_dims=(2, 3), **QUICK))
    assert [(r.size, r.batch_size, r.factor_dim) for r in recs] == [
        (s, b, d) for s in (20, 40) for b in (1, 5) for d in (2, 3)
    ]


def test_batch_refused_at_1e5_before_allocation(monkeypatch):
    monkeypatch.setattr(bench, "run_one", lambda *a, **k: pytest.fail("allocated"))
    with pytest.raises(BenchRefused, match="2\\^31"):
        bench_sweep(BenchConfig(sizes=(10**5,), mode="batch", allow_large=True))


def test_desk_cap_needs_allow_large():
    with pytest.raises(BenchRefused, match="allow-large"):
        bench.check_admissible(BenchConfig(sizes=(2 * 10**5,), mode="minibatch"))
    bench.check_admissible(BenchConfig(sizes=(2 * 10**5,), mode="minibatch", allow_large=True))


@pytest.mark.parametrize("kwargs", [{"sizes": ()}, {"sizes": (10,), "iters": 0}, {"sizes": (10,), "mode": "gpu"}, {"sizes": (0,)}])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        BenchConfig(**kwargs)


def _record(**over):
    base = dict(
        mode="minibatch", size=100, batch_size=10, factor_dim=5, iters=2, warmup=1, beta=1.0, seed=3,
        mean_time_per_iter=0.1 + 0.2, peak_solver_bytes=12345, memory_method="tracemalloc-peak-delta-4k",
        machine="cpu, with comma; cores=1", per_iter_times=[0.1, 0.2 + 1e-17, 1 / 3],
    )
    base.update(over)
    return ExperimentRecord(**base)


def test_csv_one_row_plus_header(tmp_path):
    path = emit_report([_record()], tmp_path / "r.csv", "csv")
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 2
    assert lines[0].split(",")[0] == "schema_version"


def test_json_csv_json_round_trip(tmp_path):
    recs = [_record(), _record(size=200, batch_size=None, mode="batch", peak_solver_bytes=None, memory_method="unmeasured")]
    j1 = emit_report(recs, tmp_path / "a.json", "json")
    c = emit_report(load_report(j1), tmp_path / "b.csv", "csv")
    j2 = emit_report(load_report(c), tmp_path / "c.json", "json")
    d1, d2 = json.loads(j1.read_text()), json.loads(j2.read_text())
    assert d1["schema_version"] == d2["schema_version"] == 1

    def fmt(obj):
        if isinstance(obj, float):
            return f"{obj:.17g}"
        if isinstance(obj, list):
            return [fmt(o) for o in obj]
        if isinstance(obj, dict):
            return {k: fmt(v) for k, v in obj.items()}
        return obj

    assert fmt(d1) == fmt(d2)


def test_empty_report_refused(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "r.json")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_report([_record()], tmp_path / "missing" / "r.json")


def test_minibatch_time_scaling_band():
    sizes = (10**2, 10**3, 10**4)
    recs = bench_sweep(BenchConfig(sizes=sizes, batch_sizes=(100,), factor_dims=(50,), **QUICK))
    slope = loglog_slope(sizes, [r.mean_time_per_iter for r in recs])
    print(f"mini-batch time exponent {slope:.3f}")
    assert 0.8 <= slope <= 1.4


def test_minibatch_memory_scaling_band():
    sizes = (10**2, 10**3, 10**4)
    recs = bench_sweep(BenchConfig(sizes=sizes, batch_sizes=(100,), factor_dims=(50,), **QUICK))
    slope = loglog_slope(sizes, [r.peak_solver_bytes for r in recs])
    assert 0.8 <= slope <= 1.2
