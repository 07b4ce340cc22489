import numpy as np
import pytest

import allocrisk


def table():
    return allocrisk.counterexample_table()


def test_table_shape():
    assert table().shape == (8, 3)


def test_flat_optimum_is_unequal():
    res = allocrisk.optimize(table())
    assert res["control_rows"] == [1, 2, 4]
    assert res["treatment_rows"] == [3, 5, 6, 7, 8]
    assert res["evaluated"] + res["skipped"] == 128


def test_risk_matches_direct_under_proper_prior():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 2))
    prior = {"v0": (2.0 * np.eye(4)).tolist(), "a0": 3.0, "b0": 2.0}
    w = [0, 1, 1, 0, 1, 0]
    got = allocrisk.risk(x, w, prior)["risk"]
    assert got == pytest.approx(allocrisk.risk_direct(x, w, prior), rel=1e-10)


def test_flat_risk_mahalanobis_identity():
    x = table()
    w = [0, 0, 1, 0, 1, 1, 1, 1]
    r = allocrisk.risk(x, w, e_sigma2=1.0)
    n, nc, nt = 8, 3, 5
    expected = n / (nc * nt) / (1 - allocrisk.mahalanobis(x, w) / (n - 1))
    assert r["risk"] == pytest.approx(expected, rel=1e-12)


def test_equal_split_report():
    rep = allocrisk.equal_split_condition(table())
    assert rep["threshold"] == 0.125
    assert rep["condition_met"] is False
    assert round(rep["min_qform_uncentered"], 2) == 0.24


def test_errors_carry_codes():
    with pytest.raises(allocrisk.AllocriskError) as info:
        allocrisk.equal_split_condition(np.ones((7, 2)))
    assert info.value.code == "OddN"
    with pytest.raises(allocrisk.AllocriskError) as info:
        allocrisk.optimize(table(), sizes=(1, 1))
    assert info.value.code == "InfeasibleConstraint"


def test_session_round_trip():
    prior = {"v0": (4.0 * np.eye(5)).tolist(), "a0": 2.0, "b0": 1.0}
    s = allocrisk.Session(prior, 3)
    first = s.allocate(table()[:4])
    s.allocate(table()[4:], quota=(2, 2))
    s.record(first["batch_index"], np.array([1.0, 2.0, 0.5, -1.0]))
    assert s.l_c + s.l_t == 8
    assert s.a == pytest.approx(4.0)
    back = allocrisk.Session.from_json(s.to_json())
    assert np.array_equal(back.gram, s.gram)
    assert back.b == pytest.approx(s.b, rel=1e-14)


def test_selftest_passes():
    assert allocrisk.selftest(seed=1, instances=5)["passed"] is True
