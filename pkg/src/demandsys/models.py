"""Share-equation evaluators for the Rotterdam, AIDS and QUAIDS demand systems.

All three forms share one parameter container (``ParamSet``) and a minimal
free parameterization (``pack``/``unpack``) that imposes adding-up,
homogeneity and Slutsky symmetry exactly by construction.
"""

import json

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveExpenditure,
    NonPositivePrice,
    SchemaError,
    WrongForm,
)

ROTTERDAM = "rotterdam"
AIDS = "aids"
QUAIDS = "quaids"
FORMS = (ROTTERDAM, AIDS, QUAIDS)


class ModelSpec:
    """Which functional form to use and its fixed constants.

    Parameters
    ----------
    form : str
        One of ``"rotterdam"``, ``"aids"``, ``"quaids"``.
    n_goods : int
        Number of goods N >= 2.
    alpha0 : float
        Intercept of the log price aggregator for AIDS/QUAIDS. Not
        estimable in practice, so it is a user-set constant (default 0).
    """

    __slots__ = ("form", "n_goods", "alpha0")

    def __init__(self, form, n_goods, alpha0=0.0):
        form = form.lower()
        if form not in FORMS:
            raise WrongForm(f"unknown form {form!r}")
        if n_goods < 2:
            raise DimensionMismatch("need at least 2 goods")
        if not np.isfinite(alpha0):
            raise SchemaError("alpha0 must be finite")
        self.form = form
        self.n_goods = int(n_goods)
        self.alpha0 = float(alpha0)

    def __repr__(self):
        return f"ModelSpec({self.form!r}, n_goods={self.n_goods}, alpha0={self.alpha0})"

    def __eq__(self, other):
        return (isinstance(other, ModelSpec)
                and (self.form, self.n_goods, self.alpha0)
                == (other.form, other.n_goods, other.alpha0))


class ParamSet:
    """Full parameter vector of one demand system.

    ``gamma`` is stored symmetrized; the asymmetric gamma* of the
    quadratic price aggregator is never materialized because only its
    symmetric part is identified.
    """

    __slots__ = ("alpha", "gamma", "beta", "lam")

    def __init__(self, alpha, gamma, beta=None, lam=None):
        self.alpha = np.asarray(alpha, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        n = self.alpha.shape[0]
        if self.gamma.shape != (n, n):
            raise DimensionMismatch(
                f"gamma must be {n}x{n}, got {self.gamma.shape}")
        self.beta = None if beta is None else np.asarray(beta, dtype=float)
        self.lam = None if lam is None else np.asarray(lam, dtype=float)
        for name in ("beta", "lam"):
            v = getattr(self, name)
            if v is not None and v.shape != (n,):
                raise DimensionMismatch(f"{name} must have length {n}")

    @property
    def n_goods(self):
        return self.alpha.shape[0]

    def restriction_residuals(self, form):
        """Max absolute residual of each imposed restriction set.

        Returns a dict with keys ``adding_up``, ``homogeneity``,
        ``symmetry``; all should be ~0 for parameters built by ``unpack``.
        """
        adding = [abs(self.alpha.sum() - 1.0),
                  np.abs(self.gamma.sum(axis=0)).max()]
        if self.beta is not None:
            adding.append(abs(self.beta.sum()))
        if self.lam is not None:
            adding.append(abs(self.lam.sum()))
        return {
            "adding_up": float(max(adding)),
            "homogeneity": float(np.abs(self.gamma.sum(axis=1)).max()),
            "symmetry": float(np.abs(self.gamma - self.gamma.T).max()),
        }


def n_free(spec):
    """Dimension of the free (minimal) parameter vector for ``spec``."""
    n = spec.n_goods
    k = (n - 1) + (n - 1) * n // 2
    if spec.form in (AIDS, QUAIDS):
        k += n - 1
    if spec.form == QUAIDS:
        k += n - 1
    return k


def _triangle_indices(n):
    # upper triangle (incl. diagonal) of the leading (n-1)x(n-1) block
    return [(i, j) for i in range(n - 1) for j in range(i, n - 1)]


def unpack(theta, spec):
    """Expand a free parameter vector into a fully restricted ParamSet.

    Adding-up, homogeneity and symmetry hold exactly for any theta:
    the free gamma entries fill the triangle of the leading
    (N-1)x(N-1) block, the last row/column follows from the zero
    row-sum condition, and the dropped alpha/beta/lambda entries are
    recovered from the adding-up sums.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_free(spec),):
        raise DimensionMismatch(
            f"theta must have length {n_free(spec)}, got {theta.shape}")
    n = spec.n_goods
    pos = 0

    alpha = np.empty(n)
    alpha[:n - 1] = theta[pos:pos + n - 1]
    alpha[n - 1] = 1.0 - alpha[:n - 1].sum()
    pos += n - 1

    gamma = np.zeros((n, n))
    for (i, j) in _triangle_indices(n):
        gamma[i, j] = theta[pos]
        gamma[j, i] = theta[pos]
        pos += 1
    gamma[:n - 1, n - 1] = -gamma[:n - 1, :n - 1].sum(axis=1)
    gamma[n - 1, :n - 1] = gamma[:n - 1, n - 1]
    gamma[n - 1, n - 1] = -gamma[n - 1, :n - 1].sum()

    beta = lam = None
    if spec.form in (AIDS, QUAIDS):
        beta = np.empty(n)
        beta[:n - 1] = theta[pos:pos + n - 1]
        beta[n - 1] = -beta[:n - 1].sum()
        pos += n - 1
    if spec.form == QUAIDS:
        lam = np.empty(n)
        lam[:n - 1] = theta[pos:pos + n - 1]
        lam[n - 1] = -lam[:n - 1].sum()
        pos += n - 1

    return ParamSet(alpha, gamma, beta, lam)


def pack(params, spec):
    """Inverse of ``unpack``: extract the free entries from a ParamSet."""
    n = spec.n_goods
    if params.n_goods != n:
        raise DimensionMismatch("params/spec good count mismatch")
    parts = [params.alpha[:n - 1],
             np.array([params.gamma[i, j] for (i, j) in _triangle_indices(n)])]
    if spec.form in (AIDS, QUAIDS):
        if params.beta is None:
            raise DimensionMismatch(f"{spec.form} requires beta")
        parts.append(params.beta[:n - 1])
    if spec.form == QUAIDS:
        if params.lam is None:
            raise DimensionMismatch("quaids requires lambda")
        parts.append(params.lam[:n - 1])
    return np.concatenate(parts)


def _check_prices(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or not np.all(np.isfinite(p)):
        raise NonPositivePrice("all prices must be positive and finite")
    return p


def aids_price_index(p, params, alpha0=0.0):
    """Log price aggregator ln a(p) with the quadratic log-price term.

    ``p`` may be a single price vector or an array of them (goods on the
    last axis); returns a scalar or an array of matching leading shape.
    """
    p = _check_prices(p)
    lnp = np.log(p)
    quad = 0.5 * np.einsum("...k,kj,...j->...", lnp, params.gamma, lnp)
    return alpha0 + lnp @ params.alpha + quad


def expenditure_deflator(p, params):
    """b(p) = prod_k p_k^beta_k, the Cobb-Douglas price aggregator.

    Normalized with a unit leading constant: the quadratic form's
    ln-expenditure scaling uses b(p) directly.
    """
    p = _check_prices(p)
    return np.exp(np.log(p) @ params.beta)


def share_eval(spec, params, p, y):
    """Model-implied budget shares at prices ``p`` and expenditure ``y``.

    Defined for AIDS and QUAIDS only; the Rotterdam form is stated in
    differences (use ``rotterdam_rhs``). Vectorized: ``p`` of shape
    (..., N) with broadcastable ``y`` yields shares of shape (..., N).
    """
    if spec.form == ROTTERDAM:
        raise WrongForm("share_eval is undefined for the Rotterdam form")
    p = _check_prices(p)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0) or not np.all(np.isfinite(y)):
        raise NonPositiveExpenditure("expenditure must be positive and finite")
    lnp = np.log(p)
    z = np.log(y) - aids_price_index(p, params, spec.alpha0)
    w = params.alpha + lnp @ params.gamma.T + params.beta * z[..., None]
    if spec.form == QUAIDS:
        b = expenditure_deflator(p, params)
        w = w + params.lam * (z ** 2 / b)[..., None]
    return w


def rotterdam_rhs(params, dlnp, dlnQ):
    """Model-implied w-bar-weighted log quantity changes.

    Returns alpha_i * dlnQ + sum_k gamma_ik * dlnp_k, vectorized over
    leading axes of ``dlnp`` (goods last) and broadcastable ``dlnQ``.
    """
    dlnp = np.asarray(dlnp, dtype=float)
    if dlnp.shape[-1] != params.n_goods:
        raise DimensionMismatch("dlnp last axis must match the good count")
    dlnQ = np.asarray(dlnQ, dtype=float)
    return params.alpha * dlnQ[..., None] + dlnp @ params.gamma.T


# --- JSON round-trip used by the CLI audit/elasticity paths ---

def params_to_dict(params, spec):
    d = {
        "form": spec.form,
        "n_goods": spec.n_goods,
        "alpha0": spec.alpha0,
        "alpha": params.alpha.tolist(),
        "gamma": params.gamma.ravel().tolist(),
    }
    if params.beta is not None:
        d["beta"] = params.beta.tolist()
    if params.lam is not None:
        d["lambda"] = params.lam.tolist()
    return d


def params_from_dict(d):
    """Parse a parameter document; returns (spec, params).

    Raises SchemaError with the offending field path on malformed input.
    """
    for key in ("form", "n_goods", "alpha", "gamma"):
        if key not in d:
            raise SchemaError(f"$.{key}: missing")
    try:
        spec = ModelSpec(d["form"], int(d["n_goods"]), float(d.get("alpha0", 0.0)))
    except (WrongForm, DimensionMismatch, ValueError) as exc:
        raise SchemaError(f"$.form/n_goods/alpha0: {exc}") from exc
    n = spec.n_goods
    alpha = np.asarray(d["alpha"], dtype=float)
    if alpha.shape != (n,):
        raise SchemaError(f"$.alpha: expected length {n}")
    gamma = np.asarray(d["gamma"], dtype=float)
    if gamma.size != n * n:
        raise SchemaError(f"$.gamma: expected {n * n} entries (row-major), got {gamma.size}")
    gamma = gamma.reshape(n, n)
    beta = lam = None
    if spec.form in (AIDS, QUAIDS):
        if "beta" not in d:
            raise SchemaError("$.beta: missing")
        beta = np.asarray(d["beta"], dtype=float)
        if beta.shape != (n,):
            raise SchemaError(f"$.beta: expected length {n}")
    if spec.form == QUAIDS:
        if "lambda" not in d:
            raise SchemaError("$.lambda: missing")
        lam = np.asarray(d["lambda"], dtype=float)
        if lam.shape != (n,):
            raise SchemaError(f"$.lambda: expected length {n}")
    return spec, ParamSet(alpha, gamma, beta, lam)


def save_params(path, params, spec):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, spec), fh, indent=2)


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
