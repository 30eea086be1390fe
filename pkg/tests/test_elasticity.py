"""Unit tests for the elasticity tables and delta-method standard
errors."""

import numpy as np
import pytest

import demandsys as ds
from demandsys import elasticity as el
from demandsys.errors import ZeroShare

from conftest import (
    REF_AIDS,
    REF_ROTTERDAM,
    REF_SHARES,
    random_point,
    random_restricted,
)


def unit_point(w):
    return el.EvaluationPoint(wbar=np.asarray(w), pbar=np.ones(len(w)),
                              ybar=1.0)


def test_rotterdam_reference_row():
    table = el.elasticities_rotterdam(REF_ROTTERDAM, unit_point(REF_SHARES))
    assert table.e_exp[0] == pytest.approx(1.261, abs=0.005)
    assert table.e_comp[0, 0] == pytest.approx(-0.616, abs=0.005)
    assert table.e_unc[0, 0] == pytest.approx(-1.496, abs=0.005)


def test_aids_reference_row():
    table = el.elasticities_aids(REF_AIDS, unit_point(REF_SHARES))
    assert table.e_exp[0] == pytest.approx(1.303, abs=0.005)
    assert table.e_comp[0, 0] == pytest.approx(-0.187, abs=0.01)


def test_aids_homothetic_case():
    params = ds.ParamSet(alpha=[0.2, 0.3, 0.5], gamma=np.zeros((3, 3)),
                         beta=np.zeros(3))
    table = el.elasticities_aids(params, unit_point([0.2, 0.3, 0.5]))
    np.testing.assert_allclose(table.e_exp, 1.0)
    np.testing.assert_allclose(table.e_unc, -np.eye(3))


def test_quaids_reduces_to_aids():
    rng = np.random.default_rng(0)
    for _ in range(20):
        _, params_a = random_restricted(ds.AIDS, 3, rng)
        params_q = ds.ParamSet(params_a.alpha, params_a.gamma,
                               params_a.beta, np.zeros(3))
        pt = random_point(3, rng)
        t_a = el.elasticities_aids(params_a, pt, alpha0=0.2)
        t_q = el.elasticities_quaids(params_q, pt, alpha0=0.2)
        np.testing.assert_array_equal(t_a.flat(), t_q.flat())


@pytest.mark.parametrize("form", [ds.ROTTERDAM, ds.AIDS, ds.QUAIDS])
def test_slutsky_and_engel_identities(form):
    rng = np.random.default_rng(1)
    for _ in range(30):
        spec, params = random_restricted(form, 3, rng)
        pt = random_point(3, rng)
        table = el.elasticities(spec, params, pt)
        np.testing.assert_allclose(
            table.e_comp, table.e_unc + np.outer(table.e_exp, pt.wbar),
            atol=1e-10)
        assert abs(pt.wbar @ table.e_exp - 1.0) < 1e-8
        if form != ds.ROTTERDAM:
            np.testing.assert_allclose(
                table.e_unc.sum(axis=1) + table.e_exp, 0.0, atol=1e-8)


def test_compensated_matrix_symmetric_when_scaled():
    """w_i e^c_ij is symmetric when the evaluation shares are the
    model's own shares at the evaluation prices and expenditure."""
    rng = np.random.default_rng(2)
    done = 0
    for form in (ds.AIDS, ds.QUAIDS):
        while done < 10:
            spec, params = random_restricted(form, 3, rng)
            p = np.exp(rng.normal(0.0, 0.2, 3))
            y = float(np.exp(rng.normal(0.0, 0.2)))
            w = ds.share_eval(spec, params, p, y)
            if np.any(w < 0.05):
                continue
            done += 1
            pt = el.EvaluationPoint(wbar=w / w.sum(), pbar=p, ybar=y)
            table = el.elasticities(spec, params, pt)
            m = pt.wbar[:, None] * table.e_comp
            np.testing.assert_allclose(m, m.T, atol=1e-8)
        done = 0


def test_zero_share_rejected():
    _, params = random_restricted(ds.ROTTERDAM, 3, np.random.default_rng(3))
    pt = unit_point([0.0, 0.5, 0.5])
    with pytest.raises(ZeroShare):
        el.elasticities_rotterdam(params, pt)


def test_delta_method_zero_covariance():
    spec, params = random_restricted(ds.AIDS, 3, np.random.default_rng(4))
    theta = ds.pack(params, spec)
    pt = random_point(3, np.random.default_rng(5))
    table = el.delta_method_se(
        lambda p, q: el.elasticities_aids(p, q), theta,
        np.zeros((7, 7)), spec, pt)
    np.testing.assert_array_equal(table.se_exp, 0.0)
    np.testing.assert_array_equal(table.se_unc, 0.0)


def test_delta_method_matches_analytic_rotterdam():
    """For e_i = alpha_i / w_i the delta SE is SE(alpha_i) / w_i."""
    rng = np.random.default_rng(6)
    spec, params = random_restricted(ds.ROTTERDAM, 3, rng)
    theta = ds.pack(params, spec)
    k = theta.shape[0]
    a = rng.normal(size=(k, k))
    cov = a @ a.T / k
    w = np.array([0.5, 0.3, 0.2])
    pt = unit_point(w)
    table = el.delta_method_se(
        lambda p, q: el.elasticities_rotterdam(p, q), theta, cov, spec, pt)
    for i in range(2):  # free alpha entries
        assert table.se_exp[i] == pytest.approx(np.sqrt(cov[i, i]) / w[i],
                                                abs=1e-8)


def test_evaluation_point_validation_and_means():
    with pytest.raises(Exception):
        el.EvaluationPoint(wbar=[0.5, 0.6], pbar=[1.0, 1.0], ybar=1.0)

    rng = np.random.default_rng(7)
    data = ds.PanelDataset(units=["a"], periods=[1, 2], goods=["x", "y"],
                           price=np.exp(rng.normal(size=(1, 2, 2))),
                           expenditure=np.exp(rng.normal(size=(1, 2, 2))))
    pt = el.EvaluationPoint.from_dataset(data)
    assert pt.wbar.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(
        pt.pbar, np.exp(np.log(data.price.reshape(-1, 2)).mean(axis=0)))


def test_table_text_format():
    table = el.elasticities_rotterdam(REF_ROTTERDAM, unit_point(REF_SHARES),
                                      goods=["private", "local", "inter"])
    table.se_exp = np.full(3, 0.009)
    table.se_unc = np.full((3, 3), 0.1)
    table.se_comp = np.full((3, 3), 0.1)
    text = table.to_text()
    assert "private" in text
    assert "(0.009)" in text
    # 6 significant digits in the text rendering
    assert f"{table.e_exp[0]:.6g}" in text


def test_table_json_round_trip(tmp_path):
    import json

    table = el.elasticities_rotterdam(REF_ROTTERDAM, unit_point(REF_SHARES))
    path = tmp_path / "table.json"
    table.save(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    np.testing.assert_array_equal(doc["expenditure"], table.e_exp)
    np.testing.assert_array_equal(doc["uncompensated"],
                                  table.e_unc.ravel())
