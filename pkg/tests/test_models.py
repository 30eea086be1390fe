"""Unit tests for the share evaluators and the restriction-imposing
parameterization."""

import numpy as np
import pytest

import demandsys as ds
from demandsys.errors import (
    DimensionMismatch,
    NonPositiveExpenditure,
    NonPositivePrice,
    SchemaError,
    WrongForm,
)

from conftest import REF_AIDS, REF_ROTTERDAM, random_restricted


def test_free_parameter_counts():
    assert ds.n_free(ds.ModelSpec(ds.ROTTERDAM, 3)) == 5
    assert ds.n_free(ds.ModelSpec(ds.AIDS, 3)) == 7
    assert ds.n_free(ds.ModelSpec(ds.QUAIDS, 3)) == 9
    assert ds.n_free(ds.ModelSpec(ds.AIDS, 2)) == 3


def test_unpack_zero_theta_aids():
    spec = ds.ModelSpec(ds.AIDS, 3)
    params = ds.unpack(np.zeros(7), spec)
    np.testing.assert_array_equal(params.alpha, [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(params.gamma, np.zeros((3, 3)))
    np.testing.assert_array_equal(params.beta, np.zeros(3))


@pytest.mark.parametrize("form", [ds.ROTTERDAM, ds.AIDS, ds.QUAIDS])
@pytest.mark.parametrize("n", [2, 3, 5])
def test_pack_unpack_round_trip(form, n):
    rng = np.random.default_rng(0)
    spec = ds.ModelSpec(form, n)
    theta = rng.normal(size=ds.n_free(spec))
    np.testing.assert_array_equal(ds.pack(ds.unpack(theta, spec), spec),
                                  theta)


@pytest.mark.parametrize("form", [ds.ROTTERDAM, ds.AIDS, ds.QUAIDS])
def test_unpack_restrictions_exact(form):
    rng = np.random.default_rng(1)
    for _ in range(20):
        spec = ds.ModelSpec(form, 4)
        params = ds.unpack(rng.normal(size=ds.n_free(spec)), spec)
        res = params.restriction_residuals(form)
        assert max(res.values()) < 1e-14


def test_unpack_wrong_length():
    with pytest.raises(DimensionMismatch):
        ds.unpack(np.zeros(6), ds.ModelSpec(ds.AIDS, 3))


def test_reference_estimates_nearly_restricted():
    """The published point estimates are rounded to 3 decimals, so their
    restriction residuals are small but not zero; packing and unpacking
    reproduces them up to that rounding."""
    spec = ds.ModelSpec(ds.AIDS, 3)
    res = REF_AIDS.restriction_residuals(ds.AIDS)
    assert max(res.values()) < 2e-3
    rebuilt = ds.unpack(ds.pack(REF_AIDS, spec), spec)
    np.testing.assert_allclose(rebuilt.alpha, REF_AIDS.alpha, atol=2e-3)
    np.testing.assert_allclose(rebuilt.gamma, REF_AIDS.gamma, atol=2e-3)
    np.testing.assert_allclose(rebuilt.beta, REF_AIDS.beta, atol=2e-3)


def test_price_index_all_ones():
    _, params = random_restricted(ds.AIDS, 3, np.random.default_rng(2))
    assert ds.aids_price_index(np.ones(3), params, alpha0=0.7) == pytest.approx(0.7)


def test_price_index_single_term():
    params = ds.ParamSet(alpha=[1.0, 0.0, 0.0], gamma=np.zeros((3, 3)))
    p = np.array([np.e, 1.0, 1.0])
    assert ds.aids_price_index(p, params, alpha0=0.0) == pytest.approx(1.0)


def test_price_index_matches_double_sum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        _, params = random_restricted(ds.AIDS, 4, rng)
        p = np.exp(rng.normal(size=4))
        lnp = np.log(p)
        brute = 0.3 + params.alpha @ lnp + 0.5 * sum(
            params.gamma[k, j] * lnp[k] * lnp[j]
            for k in range(4) for j in range(4))
        assert ds.aids_price_index(p, params, alpha0=0.3) == pytest.approx(
            brute, abs=1e-12)


def test_price_index_rejects_nonpositive_price():
    _, params = random_restricted(ds.AIDS, 3, np.random.default_rng(4))
    with pytest.raises(NonPositivePrice):
        ds.aids_price_index([1.0, 0.0, 1.0], params)


def test_share_eval_at_unit_prices():
    spec, params = random_restricted(ds.AIDS, 3, np.random.default_rng(5))
    w = ds.share_eval(spec, params, np.ones(3), np.exp(spec.alpha0))
    np.testing.assert_allclose(w, params.alpha, atol=1e-14)


def test_share_eval_sums_to_one():
    rng = np.random.default_rng(6)
    for form in (ds.AIDS, ds.QUAIDS):
        for _ in range(50):
            spec, params = random_restricted(form, 3, rng)
            p = np.exp(rng.normal(size=3))
            y = float(np.exp(rng.normal()))
            w = ds.share_eval(spec, params, p, y)
            assert abs(w.sum() - 1.0) < 1e-12


def test_share_eval_scale_invariance():
    rng = np.random.default_rng(7)
    for form in (ds.AIDS, ds.QUAIDS):
        spec, params = random_restricted(form, 3, rng)
        p = np.exp(rng.normal(size=3))
        y = 2.5
        w = ds.share_eval(spec, params, p, y)
        w_scaled = ds.share_eval(spec, params, 3.7 * p, 3.7 * y)
        np.testing.assert_allclose(w_scaled, w, atol=1e-10)


def test_share_eval_vectorized():
    rng = np.random.default_rng(8)
    spec, params = random_restricted(ds.QUAIDS, 3, rng)
    p = np.exp(rng.normal(size=(4, 5, 3)))
    y = np.exp(rng.normal(size=(4, 5)))
    w = ds.share_eval(spec, params, p, y)
    assert w.shape == (4, 5, 3)
    np.testing.assert_allclose(
        w[2, 3], ds.share_eval(spec, params, p[2, 3], y[2, 3]))


def test_share_eval_errors():
    spec, params = random_restricted(ds.AIDS, 3, np.random.default_rng(9))
    with pytest.raises(WrongForm):
        ds.share_eval(ds.ModelSpec(ds.ROTTERDAM, 3), params, np.ones(3), 1.0)
    with pytest.raises(NonPositivePrice):
        ds.share_eval(spec, params, [1.0, -1.0, 1.0], 1.0)
    with pytest.raises(NonPositiveExpenditure):
        ds.share_eval(spec, params, np.ones(3), 0.0)


def test_rotterdam_rhs_zero_changes():
    _, params = random_restricted(ds.ROTTERDAM, 3, np.random.default_rng(10))
    np.testing.assert_array_equal(
        ds.rotterdam_rhs(params, np.zeros(3), 0.0), np.zeros(3))


def test_rotterdam_rhs_adding_up():
    rng = np.random.default_rng(11)
    for _ in range(50):
        _, params = random_restricted(ds.ROTTERDAM, 4, rng)
        dlnp = rng.normal(size=4)
        dlnQ = float(rng.normal())
        rhs = ds.rotterdam_rhs(params, dlnp, np.asarray(dlnQ))
        assert abs(rhs.sum() - dlnQ) < 1e-12


def test_rotterdam_rhs_reference_values():
    rhs = ds.rotterdam_rhs(REF_ROTTERDAM, np.zeros(3), np.asarray(0.1))
    np.testing.assert_allclose(rhs, [0.088, 0.003, 0.009], atol=1e-12)


def test_expenditure_deflator_unit_prices():
    _, params = random_restricted(ds.QUAIDS, 3, np.random.default_rng(12))
    assert ds.expenditure_deflator(np.ones(3), params) == pytest.approx(1.0)


def test_model_spec_validation():
    with pytest.raises(WrongForm):
        ds.ModelSpec("translog", 3)
    with pytest.raises(DimensionMismatch):
        ds.ModelSpec(ds.AIDS, 1)


def test_params_json_round_trip(tmp_path):
    from demandsys.models import load_params, save_params

    spec, params = random_restricted(ds.QUAIDS, 3, np.random.default_rng(13))
    path = tmp_path / "params.json"
    save_params(path, params, spec)
    spec2, params2 = load_params(path)
    assert spec2 == spec
    np.testing.assert_array_equal(params2.alpha, params.alpha)
    np.testing.assert_array_equal(params2.gamma, params.gamma)
    np.testing.assert_array_equal(params2.lam, params.lam)


def test_params_from_dict_schema_errors():
    from demandsys.models import params_from_dict

    good = {"form": "aids", "n_goods": 3, "alpha": [0.2, 0.3, 0.5],
            "gamma": [0.0] * 9, "beta": [0.1, -0.1, 0.0]}
    params_from_dict(good)  # sanity: valid document parses
    for key, bad_value, fragment in [
            ("gamma", [0.0] * 6, "$.gamma"),
            ("alpha", [0.2, 0.8], "$.alpha"),
            ("beta", None, "$.beta"),
            ("form", "nonsense", "$.form"),
    ]:
        doc = dict(good)
        if bad_value is None:
            del doc[key]
        else:
            doc[key] = bad_value
        with pytest.raises(SchemaError) as exc:
            params_from_dict(doc)
        assert fragment in str(exc.value)
