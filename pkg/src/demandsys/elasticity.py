"""Expenditure and price elasticities at a fixed evaluation point.

Compensated elasticities are always derived from the uncompensated ones
through the Slutsky link e^c_ij = e^u_ij + e_i * w_j, so the two tables
are internally consistent by construction. Standard errors come from
first-order variance propagation with a central-difference gradient in
the free parameters; the evaluation point is treated as nonstochastic.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import (
    DimensionMismatch,
    NegativeVariance,
    NonPositivePrice,
    ZeroShare,
)

FD_STEP = 1e-6


@dataclass(frozen=True)
class EvaluationPoint:
    """Mean shares, prices and expenditure at which tables are evaluated."""

    wbar: np.ndarray
    pbar: np.ndarray
    ybar: float

    def __post_init__(self):
        object.__setattr__(self, "wbar", np.asarray(self.wbar, dtype=float))
        object.__setattr__(self, "pbar", np.asarray(self.pbar, dtype=float))
        if abs(self.wbar.sum() - 1.0) > 1e-10:
            raise DimensionMismatch("mean shares must sum to 1")
        if np.any(self.pbar <= 0) or self.ybar <= 0:
            raise NonPositivePrice("mean prices and expenditure must be positive")

    @classmethod
    def from_dataset(cls, data):
        """Arithmetic-mean shares, geometric-mean prices and expenditure."""
        n = data.n_goods
        price, total, share = data.stacked()
        w = share.mean(axis=0)
        return cls(wbar=w / w.sum(),
                   pbar=np.exp(np.log(price).mean(axis=0)),
                   ybar=float(np.exp(np.log(total).mean())))

    @classmethod
    def from_transform(cls, transform):
        """Mean two-period shares; the Rotterdam tables need only shares."""
        w = transform.wbar.reshape(-1, transform.n_goods).mean(axis=0)
        return cls(wbar=w / w.sum(), pbar=np.ones(transform.n_goods),
                   ybar=1.0)

    def to_dict(self):
        return {"wbar": self.wbar.tolist(), "pbar": self.pbar.tolist(),
                "ybar": self.ybar}

    @classmethod
    def from_dict(cls, d):
        return cls(wbar=np.asarray(d["wbar"], dtype=float),
                   pbar=np.asarray(d["pbar"], dtype=float),
                   ybar=float(d["ybar"]))


@dataclass
class ElasticityTable:
    """Expenditure, uncompensated and compensated price elasticities."""

    goods: list
    e_exp: np.ndarray  # (N,)
    e_unc: np.ndarray  # (N, N)
    e_comp: np.ndarray  # (N, N)
    se_exp: np.ndarray = None
    se_unc: np.ndarray = None
    se_comp: np.ndarray = None

    def flat(self):
        """All elasticities as one vector (expenditure, unc, comp)."""
        return np.concatenate([self.e_exp, self.e_unc.ravel(),
                               self.e_comp.ravel()])

    def to_dict(self):
        d = {"goods": list(self.goods),
             "expenditure": self.e_exp.tolist(),
             "uncompensated": self.e_unc.ravel().tolist(),
             "compensated": self.e_comp.ravel().tolist()}
        if self.se_exp is not None:
            d["se_expenditure"] = self.se_exp.tolist()
            d["se_uncompensated"] = self.se_unc.ravel().tolist()
            d["se_compensated"] = self.se_comp.ravel().tolist()
        return d

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_text(self):
        """Aligned table: one row block per good, SEs in parentheses."""
        n = len(self.goods)
        width = max(12, max(len(str(g)) for g in self.goods) + 2)
        head = ["good".ljust(width), "e_i".rjust(12)]
        head += [f"eu_i{j + 1}".rjust(12) for j in range(n)]
        head += [f"ec_i{j + 1}".rjust(12) for j in range(n)]
        lines = ["".join(head)]

        def fmt(x):
            return f"{x:.6g}".rjust(12)

        for i, good in enumerate(self.goods):
            row = [str(good).ljust(width), fmt(self.e_exp[i])]
            row += [fmt(self.e_unc[i, j]) for j in range(n)]
            row += [fmt(self.e_comp[i, j]) for j in range(n)]
            lines.append("".join(row))
            if self.se_exp is not None:
                se = ["".ljust(width), f"({self.se_exp[i]:.6g})".rjust(12)]
                se += [f"({self.se_unc[i, j]:.6g})".rjust(12) for j in range(n)]
                se += [f"({self.se_comp[i, j]:.6g})".rjust(12) for j in range(n)]
                lines.append("".join(se))
        return "\n".join(lines) + "\n"


def _check_shares(w):
    if np.any(w == 0.0):
        raise ZeroShare("evaluation-point shares must be nonzero")


def _slutsky(goods, e_exp, e_unc, w):
    e_comp = e_unc + np.outer(e_exp, w)
    return ElasticityTable(goods=goods, e_exp=e_exp, e_unc=e_unc,
                           e_comp=e_comp)


def elasticities_rotterdam(params, pt, goods=None):
    """Rotterdam tables: e_i = alpha_i / w_i, compensated e^c_ik =
    gamma_ik / w_i, uncompensated back through the Slutsky link."""
    w = pt.wbar
    _check_shares(w)
    goods = goods if goods is not None else list(range(1, params.n_goods + 1))
    e_exp = params.alpha / w
    e_comp = params.gamma / w[:, None]
    e_unc = e_comp - np.outer(e_exp, w)
    return ElasticityTable(goods=goods, e_exp=e_exp, e_unc=e_unc,
                           e_comp=e_comp)


def elasticities_aids(params, pt, alpha0=0.0, goods=None):
    """AIDS tables at the evaluation point.

    The uncompensated form uses the j-indexed price-aggregator
    derivative alpha_j + sum_k gamma_jk ln p_k.
    """
    w = pt.wbar
    _check_shares(w)
    goods = goods if goods is not None else list(range(1, params.n_goods + 1))
    lnp = np.log(pt.pbar)
    e_exp = 1.0 + params.beta / w
    dlna = params.alpha + params.gamma @ lnp  # d ln a / d ln p_j
    e_unc = (params.gamma - np.outer(params.beta, dlna)) / w[:, None] \
        - np.eye(params.n_goods)
    return _slutsky(goods, e_exp, e_unc, w)


def elasticities_quaids(params, pt, alpha0=0.0, goods=None):
    """QUAIDS tables; reduces exactly to the AIDS formulas at lambda=0."""
    w = pt.wbar
    _check_shares(w)
    goods = goods if goods is not None else list(range(1, params.n_goods + 1))
    lnp = np.log(pt.pbar)
    z = np.log(pt.ybar) - models.aids_price_index(pt.pbar, params, alpha0)
    b = models.expenditure_deflator(pt.pbar, params)
    mu = params.beta + 2.0 * params.lam * z / b  # d w_i / d ln y
    e_exp = 1.0 + mu / w
    dlna = params.alpha + params.gamma @ lnp
    e_unc = (params.gamma - np.outer(mu, dlna)
             - np.outer(params.lam * z ** 2 / b, params.beta)) / w[:, None] \
        - np.eye(params.n_goods)
    return _slutsky(goods, e_exp, e_unc, w)


def elasticities(spec, params, pt, goods=None):
    """Dispatch on the model form."""
    if spec.form == models.ROTTERDAM:
        return elasticities_rotterdam(params, pt, goods=goods)
    if spec.form == models.AIDS:
        return elasticities_aids(params, pt, alpha0=spec.alpha0, goods=goods)
    return elasticities_quaids(params, pt, alpha0=spec.alpha0, goods=goods)


def delta_method_se(table_fn, theta_hat, cov_theta, spec, pt, goods=None):
    """Attach delta-method standard errors to an elasticity table.

    ``table_fn(params, pt)`` must return an ElasticityTable; gradients of
    every elasticity in its ``flat()`` vector are taken by central
    differences in the free parameters with step 1e-6 * max(1, |theta|).
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    k = theta_hat.shape[0]
    base = table_fn(models.unpack(theta_hat, spec), pt)
    grads = np.empty((base.flat().shape[0], k))
    for j in range(k):
        step = FD_STEP * max(1.0, abs(theta_hat[j]))
        tp = theta_hat.copy()
        tp[j] += step
        tm = theta_hat.copy()
        tm[j] -= step
        fp = table_fn(models.unpack(tp, spec), pt).flat()
        fm = table_fn(models.unpack(tm, spec), pt).flat()
        grads[:, j] = (fp - fm) / (2.0 * step)
    var = np.einsum("ik,kl,il->i", grads, cov_theta, grads)
    if np.any(var < -1e-12):
        raise NegativeVariance(
            f"delta-method variance came out negative (min {var.min():.2e})")
    se = np.sqrt(np.clip(var, 0.0, None))
    n = spec.n_goods
    base.se_exp = se[:n]
    base.se_unc = se[n:n + n * n].reshape(n, n)
    base.se_comp = se[n + n * n:].reshape(n, n)
    if goods is not None:
        base.goods = list(goods)
    return base


def table_with_se(spec, result, pt, goods=None):
    """Elasticity table plus SEs from a fitted EstimationResult."""
    def fn(params, point):
        return elasticities(spec, params, point)

    return delta_method_se(fn, result.theta, result.cov_theta, spec, pt,
                           goods=goods)
