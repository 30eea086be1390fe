"""System estimation by feasible GLS with the last share equation dropped.

The adding-up identity makes the N-equation disturbance covariance
singular, so the last equation is dropped and its parameters recovered
from the restrictions (Barten). The Rotterdam system is linear in the
free parameters; AIDS and QUAIDS are fitted by Gauss-Newton with
Levenberg damping on the GLS-whitened share residuals. The residual
covariance is re-estimated in an outer loop until the fit is a joint
fixed point, which makes the result invariant to which equation was
dropped.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import models
from .data import PanelDataset, rotterdam_transform
from .errors import (
    DimensionMismatch,
    RankDeficientDesign,
    RankDeficientJacobian,
    WrongForm,
)

log = logging.getLogger(__name__)

THETA_LAYOUT_VERSION = "1"

XTOL = 1e-8
SIGMA_TOL = 1e-8
MAX_OUTER = 100
MAX_INNER = 200
FD_STEP = 1e-6


@dataclass
class EstimationResult:
    spec: models.ModelSpec
    theta: np.ndarray
    params: models.ParamSet
    cov_theta: np.ndarray
    sigma: np.ndarray  # (N-1)x(N-1) residual covariance
    n_obs: int
    iterations: int
    converged: bool
    objective: float
    deviance: float = None  # n_obs * log det sigma; ranks fits where the
    # iterated-FGLS objective self-normalizes to n_obs * (N-1)
    notes: list = field(default_factory=list)

    def theta_se(self):
        return np.sqrt(np.diag(self.cov_theta))

    def to_dict(self):
        d = models.params_to_dict(self.params, self.spec)
        d.update({
            "theta_layout_version": THETA_LAYOUT_VERSION,
            "theta": self.theta.tolist(),
            "theta_se": self.theta_se().tolist(),
            "cov_theta": self.cov_theta.ravel().tolist(),
            "sigma": self.sigma.ravel().tolist(),
            "n_obs": self.n_obs,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective,
            "deviance": self.deviance
            if self.deviance is not None and np.isfinite(self.deviance)
            else None,
            "notes": list(self.notes),
        })
        return d

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _deviance(sigma, n_obs):
    """Gaussian deviance n * log det sigma; -inf for a singular fit."""
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        return float("-inf")
    return float(n_obs * logdet)


def _whitener(sigma, notes):
    """Cholesky factor C with C @ C.T = sigma^-1, ridging if singular.

    A vanishing covariance (an exact fit) makes the GLS weighting
    arbitrary, so that case degrades to the identity instead of a ridge
    whose inverse would overflow.
    """
    q = sigma.shape[0]
    scale = np.trace(sigma) / q
    # below ~1e-28 the residuals sit at the double rounding floor (an
    # exact fit); GLS weights are then arbitrary and inverting the
    # covariance would only amplify rounding noise
    if not np.isfinite(scale) or scale < 1e-28:
        msg = "residual covariance vanished; using identity weights"
        log.warning(msg)
        if msg not in notes:
            notes.append(msg)
        return np.eye(q)
    try:
        sinv = np.linalg.inv(sigma)
        c = np.linalg.cholesky(sinv)
        if not np.all(np.isfinite(c)):
            raise np.linalg.LinAlgError
        return c
    except np.linalg.LinAlgError:
        ridge = 1e-10 * scale
        msg = f"residual covariance singular; applied ridge {ridge:.2e}"
        log.warning(msg)
        if msg not in notes:
            notes.append(msg)
        sinv = np.linalg.inv(sigma + ridge * np.eye(q))
        return np.linalg.cholesky(sinv)


def _rotterdam_design(transform, spec):
    """Stacked lhs (M, N-1) and linear design tensor (M, N-1, k)."""
    dlnq, dlnp, dlnQ, wbar = transform.stacked()
    n = spec.n_goods
    k = models.n_free(spec)
    lhs = (wbar * dlnq)[:, :n - 1]
    X = np.empty((dlnp.shape[0], n - 1, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0
        pj = models.unpack(e, spec)
        # the first N-1 equations are exactly linear in theta
        X[:, :, j] = models.rotterdam_rhs(pj, dlnp, dlnQ)[:, :n - 1]
    return lhs, X


def estimate_rotterdam(transform, iterate=True, max_iter=MAX_OUTER,
                       sigma_tol=SIGMA_TOL):
    """Fit the Rotterdam system by (iterated) feasible GLS.

    ``transform`` may be a RotterdamTransform or a PanelDataset (which
    is differenced first). ``iterate=False`` stops after one
    OLS -> GLS step (classic two-step SUR).
    """
    if isinstance(transform, PanelDataset):
        transform = rotterdam_transform(transform)
    spec = models.ModelSpec(models.ROTTERDAM, transform.n_goods)
    lhs, X = _rotterdam_design(transform, spec)
    M, q, k = X.shape
    if M * q < 2 * k:
        raise RankDeficientDesign(
            f"{M * q} stacked observations for {k} free parameters")
    if np.linalg.matrix_rank(X.reshape(M * q, k)) < k:
        raise RankDeficientDesign("design matrix is rank deficient")

    notes = []
    sigma = np.eye(q)
    theta = None
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        c = _whitener(sigma, notes)
        Xw = np.einsum("mqk,qr->mrk", X, c)
        yw = lhs @ c
        A = np.einsum("mqk,mql->kl", Xw, Xw)
        b = np.einsum("mqk,mq->k", Xw, yw)
        theta = np.linalg.solve(A, b)
        resid = lhs - np.einsum("mqk,k->mq", X, theta)
        new_sigma = resid.T @ resid / M
        change = np.linalg.norm(new_sigma - sigma, "fro")
        sigma = new_sigma
        if not iterate and iterations >= 2:
            converged = True
            break
        if change < sigma_tol:
            converged = True
            break

    c = _whitener(sigma, notes)
    Xw = np.einsum("mqk,qr->mrk", X, c)
    A = np.einsum("mqk,mql->kl", Xw, Xw)
    cov = np.linalg.inv(A)
    cov = 0.5 * (cov + cov.T)
    rw = (lhs - np.einsum("mqk,k->mq", X, theta)) @ c
    objective = float(np.sum(rw * rw))
    deviance = _deviance(sigma, M)
    if not converged:
        notes.append("residual covariance did not settle within the "
                     "iteration cap")
    return EstimationResult(spec=spec, theta=theta,
                            params=models.unpack(theta, spec),
                            cov_theta=cov, sigma=sigma, n_obs=M,
                            iterations=iterations, converged=converged,
                            objective=objective, deviance=deviance,
                            notes=notes)


def default_init(data, spec):
    """Starting values: mean shares for the alpha block (AIDS/QUAIDS,
    everything else zero), or the plain OLS fit for the Rotterdam form."""
    if spec.form == models.ROTTERDAM:
        transform = data
        if isinstance(data, PanelDataset):
            transform = rotterdam_transform(data)
        lhs, X = _rotterdam_design(transform, spec)
        M, q, k = X.shape
        Xf = X.reshape(M * q, k)
        theta, *_ = np.linalg.lstsq(Xf, lhs.reshape(M * q), rcond=None)
        return theta
    n = spec.n_goods
    theta = np.zeros(models.n_free(spec))
    theta[:n - 1] = data.share.reshape(-1, n).mean(axis=0)[:n - 1]
    return theta


def _residuals(theta, spec, lnshare_args):
    price, total, share = lnshare_args
    params = models.unpack(theta, spec)
    n = spec.n_goods
    w_hat = models.share_eval(spec, params, price, total)
    return share[:, :n - 1] - w_hat[:, :n - 1]


def _jacobian(theta, spec, lnshare_args):
    """Central-difference Jacobian of the stacked residual vector."""
    k = theta.shape[0]
    cols = []
    for j in range(k):
        step = FD_STEP * max(1.0, abs(theta[j]))
        tp = theta.copy()
        tp[j] += step
        tm = theta.copy()
        tm[j] -= step
        rp = _residuals(tp, spec, lnshare_args)
        rm = _residuals(tm, spec, lnshare_args)
        cols.append((rp - rm) / (2.0 * step))
    return np.stack(cols, axis=-1)  # (M, q, k)


def estimate_nonlinear(data, spec, init=None, max_outer=MAX_OUTER,
                       max_inner=MAX_INNER, xtol=XTOL,
                       sigma_tol=SIGMA_TOL, iterate=True):
    """Fit AIDS or QUAIDS by nonlinear feasible GLS.

    Minimizes sum_t e_t' Sigma^-1 e_t over the first N-1 share
    residuals, alternating damped Gauss-Newton steps with residual
    covariance updates. A run that exhausts the iteration caps returns
    its best iterate with ``converged=False`` rather than raising.
    """
    if spec.form not in (models.AIDS, models.QUAIDS):
        raise WrongForm("estimate_nonlinear handles aids/quaids only")
    if data.n_goods != spec.n_goods:
        raise DimensionMismatch("dataset/spec good count mismatch")
    price, total, share = data.stacked()
    args = (price, total, share)
    M = price.shape[0]
    q = spec.n_goods - 1
    k = models.n_free(spec)
    if M * q < 2 * k:
        raise RankDeficientDesign(
            f"{M * q} stacked observations for {k} free parameters")

    theta = np.asarray(init, dtype=float) if init is not None \
        else default_init(data, spec)
    if theta.shape != (k,):
        raise DimensionMismatch(f"init must have length {k}")

    notes = []
    sigma = np.eye(q)
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        c = _whitener(sigma, notes)
        r = _residuals(theta, spec, args)
        obj = np.sum((r @ c) ** 2)
        mu = 0.0
        inner_converged = False
        for _ in range(max_inner):
            J = _jacobian(theta, spec, args)
            Jw = np.einsum("mqk,qr->mrk", J, c).reshape(M * q, k)
            rw = (r @ c).reshape(M * q)
            g = Jw.T @ rw
            H = Jw.T @ Jw
            step_ok = False
            for _try in range(40):
                try:
                    delta = np.linalg.solve(H + mu * np.eye(k), -g)
                except np.linalg.LinAlgError:
                    mu = max(10.0 * mu, 1e-10)
                    continue
                if _try == 0 and np.max(np.abs(delta)) < xtol:
                    # the undamped step is below resolution: already at
                    # a fixed point (e.g. an exact fit, where rounding
                    # noise blocks the descent test below)
                    inner_converged = True
                    break
                r_new = _residuals(theta + delta, spec, args)
                obj_new = np.sum((r_new @ c) ** 2)
                if obj_new <= obj + 1e-14 * max(1.0, obj):
                    step_ok = True
                    break
                mu = max(10.0 * mu, 1e-10)
            if not step_ok:
                break
            theta = theta + delta
            r = r_new
            obj = obj_new
            mu /= 3.0
            if np.max(np.abs(delta)) < xtol:
                inner_converged = True
                break
        new_sigma = r.T @ r / M
        change = np.linalg.norm(new_sigma - sigma, "fro")
        sigma = new_sigma
        if not iterate and outer >= 2:
            converged = inner_converged
            break
        if change < sigma_tol and inner_converged:
            converged = True
            break
    if not converged:
        notes.append("estimation hit the iteration cap; returning the "
                     "best iterate")
        log.warning("nonlinear FGLS did not converge (%s)", spec.form)

    c = _whitener(sigma, notes)
    r = _residuals(theta, spec, args)
    J = _jacobian(theta, spec, args)
    Jw = np.einsum("mqk,qr->mrk", J, c).reshape(M * q, k)
    H = Jw.T @ Jw
    if np.linalg.matrix_rank(Jw) < k:
        raise RankDeficientJacobian(
            "Jacobian is rank deficient at the solution")
    cov = np.linalg.inv(H)
    cov = 0.5 * (cov + cov.T)
    objective = float(np.sum((r @ c) ** 2))
    return EstimationResult(spec=spec, theta=theta,
                            params=models.unpack(theta, spec),
                            cov_theta=cov, sigma=sigma, n_obs=M,
                            iterations=outer, converged=converged,
                            objective=objective,
                            deviance=_deviance(sigma, M), notes=notes)


def estimate(data, spec, init=None, **kwargs):
    """Dispatch to the linear or nonlinear estimator by form."""
    if spec.form == models.ROTTERDAM:
        return estimate_rotterdam(data, **kwargs)
    return estimate_nonlinear(data, spec, init=init, **kwargs)
