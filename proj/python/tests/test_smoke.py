import math

import numpy as np
import pytest

import qpmc


def test_flat_spectrum():
    ev = qpmc.spectrum("product:k=2", n=64, count=6)
    assert np.allclose(ev, [0, 0, 1, 1, 1, 1], atol=1e-9)


def test_holonomy_spectrum():
    t = 0.2 / (2 * math.pi)
    ev = qpmc.spectrum("twisted:alpha=0.2", n=64, count=4)
    assert np.allclose(ev, [t * t, t * t, (1 - t) ** 2, (1 - t) ** 2], rtol=1e-8)


def test_metric_eval_warped():
    g = qpmc.metric_eval("warped:a=1", [0.5, 0.0])
    assert g.shape == (2, 2)
    assert g[1, 1] == pytest.approx(math.cosh(0.5) ** 2)


def test_berger():
    k2 = 0.25
    assert qpmc.berger_sectional_curvature(0.5, 1, 2) == pytest.approx(k2 * (4 - 3 * k2))
    assert qpmc.berger_sectional_curvature(0.5, 1, 3) == pytest.approx(k2 * k2)


def test_solve_leaf_bump():
    sol = qpmc.solve_leaf("bump:eps=0.01", [0.0, 0.0], n=32)
    assert sol["residual_history"][-1] <= 1e-10
    assert sol["rank_Q"] == 2
    u = np.array(sol["leaf"]["u"])
    assert u.shape == (32, 2)
    assert np.abs(u.mean(axis=0)).max() < 1e-14


def test_errors_map_to_exceptions():
    with pytest.raises(qpmc.ConfigError):
        qpmc.spectrum("nosuch")
    with pytest.raises(qpmc.GapCollapseError):
        qpmc.solve_leaf("twisted:alpha=3.141592653589793", [0, 0], n=32)
    assert issubclass(qpmc.GapCollapseError, qpmc.QpmcError)


def test_variations_flat():
    reports = qpmc.verify_variations("product:k=2", n=64)
    assert [r["formula"] for r in reports] == qpmc.formula_ids()
    assert all(r["pass"] for r in reports)


def test_cli_in_process():
    code, record, _ = qpmc.run("spectrum", "--metric", "product:k=2", "--n", "32", "--count", "3")
    assert code == 0
    assert record["payload"]["rank_Q"] == 2
    code, _, err = qpmc.run("foliate", "--metric", "warped", "--dz", "0")
    assert code == 2
    assert "dz must be positive" in err
