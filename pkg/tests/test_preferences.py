import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from matchtu.market import DensePreferences, MarketShape
from matchtu.preferences import (
    CrowdingConfig,
    FactorizeConfig,
    factorize_implicit,
    generate_preferences,
    ials_objective,
    ingest_ratings,
    sample_observations,
    sample_uniform_factors,
)


def gini(values):
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    # mean absolute difference over twice the mean, by direct pairwise sum
    return float(np.abs(v[:, None] - v[None, :]).sum() / (2 * n * n * v.mean()))


# ---------------------------------------------------------------- generation


def test_no_crowding_columns_look_alike():
    nx, ny = 4000, 10
    P = generate_preferences(CrowdingConfig(0.0, 3, MarketShape(nx, ny))).P
    z = (P.mean(axis=0) - 0.5) / np.sqrt(1 / 12 / nx)
    assert np.sum(z**2) < stats.chi2.ppf(0.999, df=ny)


def test_full_crowding_is_a_shared_ranking():
    nx, ny = 7, 5
    prefs = generate_preferences(CrowdingConfig(1.0, 9, MarketShape(nx, ny)))
    np.testing.assert_array_equal(prefs.P, np.tile(np.arange(1, ny + 1) / ny, (nx, 1)))
    np.testing.assert_array_equal(prefs.Q, np.tile((np.arange(1, nx + 1) / nx)[:, None], (1, ny)))


def test_half_crowding_gap_two_employers():
    P = generate_preferences(CrowdingConfig(0.5, 123, MarketShape(20_000, 2))).P
    # E[p1 - p0] = 0.5 * (2/2 - 1/2); sd of 0.5 * (U1 - U0) is 0.204, so 4 SE < 0.006
    assert np.mean(P[:, 1] - P[:, 0]) == pytest.approx(0.25, abs=0.006)


@given(st.floats(0, 1), st.integers(0, 2**63), st.integers(1, 30), st.integers(1, 30))
def test_generation_deterministic_and_bounded(lam, seed, nx, ny):
    cfg = CrowdingConfig(lam, seed, MarketShape(nx, ny))
    a, b = generate_preferences(cfg), generate_preferences(cfg)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.Q, b.Q)
    for M in (a.P, a.Q):
        assert M.min() >= 0 and M.max() <= 1


def test_crowding_lambda_range():
    with pytest.raises(ValueError):
        CrowdingConfig(1.5, 0, MarketShape(2, 2))


def test_crowding_raises_column_sum_gini():
    ginis = [gini(generate_preferences(CrowdingConfig(lam, 5, MarketShape(100, 100))).P.sum(axis=0)) for lam in (0, 0.25, 0.5, 0.75)]
    assert all(b >= a for a, b in zip(ginis, ginis[1:]))


def test_uniform_factor_range():
    prefs = sample_uniform_factors(MarketShape(50, 40), 25, 1)
    for M in (prefs.F, prefs.K, prefs.G, prefs.L):
        assert M.min() >= 0 and M.max() <= 1 / 5


# ---------------------------------------------------------------- observations


def test_bernoulli_certain_and_impossible():
    ones = DensePreferences(np.ones((5, 6)), np.zeros((5, 6)))
    obs = sample_observations(ones, 0)
    assert np.all(obs.O_p == 1) and np.all(obs.O_q == 0)


def test_bernoulli_rate():
    prefs = DensePreferences(np.full((100, 100), 0.3), np.full((100, 100), 0.3))
    obs = sample_observations(prefs, 17)
    # 3 sigma binomial bound: 3 * sqrt(0.21 / 1e4) = 0.0137
    assert abs(obs.O_p.mean() - 0.3) <= 0.015
    assert abs(obs.O_q.mean() - 0.3) <= 0.015


def test_bernoulli_rejects_non_probabilities():
    with pytest.raises(ValueError):
        sample_observations(DensePreferences([[1.2]], [[0.5]]), 0)
    with pytest.raises(ValueError):
        sample_observations(DensePreferences([[0.2]], [[-0.1]]), 0)


def test_observations_deterministic():
    prefs = generate_preferences(CrowdingConfig(0.3, 1, MarketShape(20, 30)))
    a, b = sample_observations(prefs, 5), sample_observations(prefs, 5)
    assert np.array_equal(a.O_p, b.O_p) and np.array_equal(a.O_q, b.O_q)
    assert set(np.unique(a.O_p)) <= {0.0, 1.0}


# ---------------------------------------------------------------- implicit ALS


def test_rank_one_pattern_recovered():
    rows = np.zeros(12)
    rows[[1, 4, 5, 9]] = 1
    cols = np.zeros(8)
    cols[[0, 3, 6]] = 1
    obs = np.outer(rows, cols)
    F, G = factorize_implicit(obs, FactorizeConfig(dim=2, reg=0.01, alpha=40, iters=15, seed=0))
    recon = F @ G.T
    assert recon[obs == 1].min() > 0.9
    assert recon[obs == 0].max() < 0.1


def test_all_zero_observations():
    F, G = factorize_implicit(np.zeros((6, 4)), FactorizeConfig(dim=3, reg=0.1, alpha=10, iters=3))
    np.testing.assert_allclose(F @ G.T, 0.0, atol=1e-12)


def test_singular_normal_equations_warn():
    with pytest.warns(RuntimeWarning, match="regularization floor"):
        F, G = factorize_implicit(np.zeros((4, 3)), FactorizeConfig(dim=2, reg=0.0, alpha=1.0, iters=2))
    assert np.all(np.isfinite(F)) and np.all(np.isfinite(G))


@given(st.integers(2, 30), st.integers(2, 30), st.integers(1, 5), st.floats(0, 1), st.floats(0.01, 10), st.floats(0, 50), st.integers(0, 2**32 - 1))
def test_objective_non_increasing(nr, nc, dim, density, reg, alpha, seed):
    obs = (np.random.default_rng(seed).random((nr, nc)) < density).astype(float)
    trace = []
    F, G = factorize_implicit(obs, FactorizeConfig(dim, reg, alpha, 10, seed), trace=trace)
    assert len(trace) == 20
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(trace, trace[1:]))
    assert trace[-1] == pytest.approx(ials_objective(obs, F, G, reg, alpha), rel=1e-12)


def test_factorization_deterministic():
    obs = (np.random.default_rng(0).random((15, 10)) < 0.4).astype(float)
    cfg = FactorizeConfig(dim=3, iters=4, seed=99)
    a, b = factorize_implicit(obs, cfg), factorize_implicit(obs, cfg)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_factorize_rejects_empty():
    with pytest.raises(ValueError):
        factorize_implicit(np.zeros((0, 3)), FactorizeConfig())


def test_factorized_phi_tracks_generating_phi():
    shape = MarketShape(1000, 500)
    truth = generate_preferences(CrowdingConfig(0.0, 1, shape))
    obs = sample_observations(truth, 2)
    F, G = factorize_implicit(obs.O_p, FactorizeConfig(dim=8, seed=3))
    K, L = factorize_implicit(obs.O_q, FactorizeConfig(dim=8, seed=4))
    r = np.corrcoef((F @ G.T + K @ L.T).ravel(), (truth.P + truth.Q).ravel())[0, 1]
    assert r >= 0.5


# ---------------------------------------------------------------- ratings ingestion


def test_ingest_densifies(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("7,2,4.0\n9,2,1.5\n7,2,3.0\n")
    with pytest.warns(RuntimeWarning):
        table = ingest_ratings(path)
    assert table.values.shape == (2, 1)
    assert table.rater_index == {7: 0, 9: 1} and table.rated_index == {2: 0}


def test_ingest_three_rows_no_duplicates(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("7,2,4.0\n9,2,1.5\n")
    table = ingest_ratings(path, shape_hint=(3, 2))
    assert table.values.shape == (3, 2)
    assert table.values[0, 0] == 4.0 and table.values[1, 0] == 1.5
    assert np.isnan(table.values[2, 1]) and table.observed.sum() == 2


def test_ingest_empty(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("")
    with pytest.raises(ValueError, match="no ratings"):
        ingest_ratings(path)


def test_ingest_duplicate_last_wins(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("1,5,2.0\n1,5,3.0\n")
    with pytest.warns(RuntimeWarning) as record:
        table = ingest_ratings(path)
    assert len(record) == 1
    assert table.duplicates == 1 and table.values[0, 0] == 3.0


@pytest.mark.parametrize("body, line", [("1,2,3\n1,2\n", 2), ("1,2,x\n", 1), ("\n1,2,3\n4,5,nan\n", 3)])
def test_ingest_malformed_row_names_line(tmp_path, body, line):
    path = tmp_path / "r.csv"
    path.write_text(body)
    with pytest.raises(ValueError, match=f":{line}:"):
        ingest_ratings(path)


def test_ingest_shape_hint_too_small(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(ValueError, match="shape hint"):
        ingest_ratings(path, shape_hint=(1, 2))
