import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmwaste.engine import RunConfig
from swarmwaste.experiments import (DEFAULT_VALUES, RegressionError, SweepResult, SweepSpec,
                                    compare_baselines, derive_seed, run_sweep,
                                    standardized_regression)
from swarmwaste.scenario import generate_grid


@pytest.fixture(scope="module")
def tiny():
    return generate_grid(6, 6, 100, 8, 30, seed=1)


BASE = RunConfig(n_citizens=40, n_robots=3, n_deposits=2)


def rows_from(x, y, names=("a", "b", "c")):
    return [dict(zip(names, xi), y=yi) for xi, yi in zip(x.tolist(), y.tolist())]


class TestSweep:
    def test_single_cell(self, tiny):
        spec = SweepSpec(tiny, values={k: (v[0],) for k, v in DEFAULT_VALUES.items()},
                         replications=1, base_config=BASE)
        res = run_sweep(spec)
        assert len(res.rows) == 1

    def test_default_grid_size(self, tiny):
        spec = SweepSpec(tiny, base_config=BASE)
        assert len(spec.cells()) * spec.replications == 2430

    def test_seeds_are_stable(self):
        assert derive_seed(0, 3, 4) == derive_seed(0, 3, 4)
        assert len({derive_seed(0, c, r) for c in range(20) for r in range(10)}) == 200

    def test_parallel_matches_serial(self, tiny):
        values = {"n_robots": (2, 4), "n_deposits": (1, 2)}
        a = run_sweep(SweepSpec(tiny, values, 2, 5, BASE, parallelism=1))
        b = run_sweep(SweepSpec(tiny, values, 2, 5, BASE, parallelism=3))
        assert a.to_csv() == b.to_csv()
        assert len(a.rows) == 8

    def test_failures_recorded(self, tiny):
        # 40 deposits cannot fit on 8 bins: every run fails but the sweep completes
        res = run_sweep(SweepSpec(tiny, {"n_deposits": (2, 40)}, 1, 0, BASE))
        assert len(res.rows) == 2 and len(res.failures) == 1
        assert "n_deposits=40" in res.failures[0].error
        summary = res.cell_summary()
        assert summary[1]["failures"] == 1

    def test_csv_round_trip(self, tiny):
        res = run_sweep(SweepSpec(tiny, {"n_robots": (2, 3)}, 2, 0, BASE))
        again = SweepResult.from_csv(res.to_csv(header={"x": 1}))
        assert again.to_csv() == res.to_csv()

    def test_cell_means_within_range(self, tiny):
        res = run_sweep(SweepSpec(tiny, {"n_robots": (2, 3)}, 3, 0, BASE))
        for c in res.cell_summary():
            assert c["aut_pct_min"] <= c["aut_pct_mean"] <= c["aut_pct_max"]
        assert res.heatmap_csv().splitlines()[0].startswith("n_robots,carriable_waste,n_deposits")

    def test_bad_spec(self, tiny):
        with pytest.raises(ValueError):
            SweepSpec(tiny, {"n_robots": ()})
        with pytest.raises(ValueError):
            SweepSpec(tiny, {"speed": (1,)})
        with pytest.raises(ValueError):
            SweepSpec(tiny, replications=0)


class TestRegression:
    def test_identity(self):
        rng = np.random.default_rng(0)
        # orthogonal design: balanced +-1 factorial
        x = np.array([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)], float)
        rep = standardized_regression(rows_from(x, x[:, 1]), ("a", "b", "c"), "y")
        assert rep.betas["b"] == pytest.approx(1.0, abs=1e-12)
        assert rep.betas["a"] == pytest.approx(0.0, abs=1e-12)
        assert rep.betas["c"] == pytest.approx(0.0, abs=1e-12)
        assert rep.r_squared == pytest.approx(1.0)

    def test_simple_slope_is_correlation(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, 500)
        y = -2 * x + rng.normal(0, 0.01, 500)
        rep = standardized_regression([{"x": a, "y": b} for a, b in zip(x, y)], ("x",), "y")
        assert rep.betas["x"] == pytest.approx(-1, abs=0.02)
        assert rep.betas["x"] == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)

    def test_self_regression(self):
        rng = np.random.default_rng(2)
        v = rng.normal(size=50)
        rep = standardized_regression([{"v": a, "w": a} for a in v], ("v",), "w")
        assert abs(rep.betas["v"] - 1.0) <= 1e-12

    @given(shift=st.floats(-1e3, 1e3), scale=st.floats(0.01, 100), col=st.integers(0, 2))
    @settings(max_examples=50, deadline=None)
    def test_affine_invariance(self, shift, scale, col):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(60, 3))
        y = x @ [0.5, -1.0, 0.2] + rng.normal(0, 0.3, 60)
        base = standardized_regression(rows_from(x, y), ("a", "b", "c"), "y")
        x2 = x.copy()
        x2[:, col] = x2[:, col] * scale + shift
        moved = standardized_regression(rows_from(x2, y), ("a", "b", "c"), "y")
        for k in "abc":
            assert moved.betas[k] == pytest.approx(base.betas[k], abs=1e-9)

    def test_errors(self):
        with pytest.raises(RegressionError, match="zero variance"):
            standardized_regression([{"a": 1.0, "y": float(i)} for i in range(10)], ("a",), "y")
        with pytest.raises(RegressionError, match="rank"):
            standardized_regression([{"a": float(i), "b": 2.0 * i, "y": float(i % 3)} for i in range(10)],
                                    ("a", "b"), "y")
        with pytest.raises(RegressionError, match="at least"):
            standardized_regression([{"a": 1.0, "y": 2.0}], ("a",), "y")

    def test_nan_rows_excluded(self):
        rows = [{"a": float(i), "y": float(i * i)} for i in range(10)] + [{"a": 1.0, "y": math.nan}]
        assert standardized_regression(rows, ("a",), "y").excluded == 1


def test_compare_baselines(tiny):
    rep = compare_baselines(tiny, BASE, RunConfig(mode="CPF", n_citizens=40, n_robots=3),
                            RunConfig(mode="TRUCK", n_citizens=40), replications=3)
    d = rep.to_dict()
    assert set(d["stats"]) == {"MPF", "CPF", "TRUCK"}
    assert 0 <= d["pairwise"]["MPF_vs_TRUCK_aut_pct"]["sign_test_p"] <= 1
    with pytest.raises(ValueError):
        compare_baselines(tiny, BASE, BASE, RunConfig(mode="TRUCK"), 1)
