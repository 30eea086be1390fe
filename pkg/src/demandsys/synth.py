"""Synthetic panels generated from known parameters.

The generator is the recovery oracle for the estimators: with zero share
noise, estimation must return the generating parameters to numerical
precision. Share noise is degenerate by construction (the last good
absorbs the negative sum) so adding-up holds exactly in every draw.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import models
from .data import PanelDataset
from .errors import DegenerateShares, DimensionMismatch

log = logging.getLogger(__name__)


@dataclass
class SynthConfig:
    spec: models.ModelSpec
    true_params: models.ParamSet
    n_units: int = 31
    n_periods: int = 13
    price_drift: np.ndarray = None  # per-good log price drift
    price_sd: float = 0.05
    expenditure_drift: float = 0.0
    expenditure_sd: float = 0.05
    lny0: float = 0.0  # initial log expenditure (log real volume for Rotterdam)
    share_noise_sd: float = 0.0
    initial_shares: np.ndarray = None  # Rotterdam only; defaults to alpha
    seed: int = 0

    def __post_init__(self):
        if self.price_drift is None:
            self.price_drift = np.zeros(self.spec.n_goods)
        self.price_drift = np.asarray(self.price_drift, dtype=float)
        if self.price_drift.shape != (self.spec.n_goods,):
            raise DimensionMismatch("price_drift must have one entry per good")
        if min(self.price_sd, self.expenditure_sd, self.share_noise_sd) < 0:
            raise DimensionMismatch("standard deviations must be nonnegative")
        res = self.true_params.restriction_residuals(self.spec.form)
        if max(res.values()) > 1e-8:
            raise DimensionMismatch(
                f"true_params violate the restrictions: {res}")


def _add_share_noise(w, sd, rng):
    """Gaussian noise on the first N-1 shares; the last absorbs the sum."""
    if sd == 0.0:
        return w, 0
    eps = np.zeros_like(w)
    eps[..., :-1] = rng.normal(0.0, sd, size=w[..., :-1].shape)
    eps[..., -1] = -eps[..., :-1].sum(axis=-1)
    noisy = w + eps
    bad = int(((noisy <= 0.0) | (noisy >= 1.0)).any(axis=-1).sum())
    if bad > 0.05 * noisy.shape[0] * noisy.shape[1]:
        raise DegenerateShares(
            f"{bad} of {noisy.shape[0] * noisy.shape[1]} observations left "
            "(0,1) after noise; reduce share_noise_sd or recenter the "
            "processes")
    if bad:
        log.warning("clipped %d observations with out-of-range shares", bad)
        noisy = np.clip(noisy, 1e-6, None)
        noisy /= noisy.sum(axis=-1, keepdims=True)
    return noisy, bad


def generate(cfg):
    """Simulate a PanelDataset from the configured truth; deterministic
    for a fixed seed."""
    rng = np.random.default_rng(cfg.seed)
    U, T, N = cfg.n_units, cfg.n_periods, cfg.spec.n_goods
    lnp = np.cumsum(
        cfg.price_drift + rng.normal(0.0, cfg.price_sd, size=(U, T, N)),
        axis=1)

    if cfg.spec.form in (models.AIDS, models.QUAIDS):
        lny = cfg.lny0 + np.cumsum(
            cfg.expenditure_drift
            + rng.normal(0.0, cfg.expenditure_sd, size=(U, T)), axis=1)
        price = np.exp(lnp)
        total = np.exp(lny)
        w = models.share_eval(cfg.spec, cfg.true_params, price, total)
        if np.any(w <= 0.0) or np.any(w >= 1.0):
            bad = int(((w <= 0.0) | (w >= 1.0)).any(axis=-1).sum())
            raise DegenerateShares(
                f"noiseless shares leave (0,1) at {bad} observations; "
                "recenter the price/expenditure processes")
        w, _ = _add_share_noise(w, cfg.share_noise_sd, rng)
        return PanelDataset(units=[f"u{i:02d}" for i in range(U)],
                            periods=list(range(T)),
                            goods=[f"g{i + 1}" for i in range(N)],
                            price=price, expenditure=w * total[..., None])

    return _generate_rotterdam(cfg, rng, lnp)


def _generate_rotterdam(cfg, rng, lnp):
    """Integrate the difference form period by period.

    Each step solves the implicit two-period-average-share equation by
    fixed-point iteration, so the generated panel satisfies the
    estimator's own discretization exactly.
    """
    U, T, N = cfg.n_units, cfg.n_periods, cfg.spec.n_goods
    params = cfg.true_params
    w0 = cfg.initial_shares
    if w0 is None:
        w0 = params.alpha if np.all(params.alpha > 0) else np.full(N, 1.0 / N)
    w0 = np.asarray(w0, dtype=float) / np.sum(w0)

    dlnQ = cfg.expenditure_drift + rng.normal(
        0.0, cfg.expenditure_sd, size=(U, T - 1))
    price = np.exp(lnp)
    q = np.empty((U, T, N))
    y0 = np.exp(cfg.lny0)
    q[:, 0, :] = y0 * w0 / price[:, 0, :]
    for t in range(1, T):
        dlnp = lnp[:, t, :] - lnp[:, t - 1, :]
        w_prev = (price[:, t - 1, :] * q[:, t - 1, :])
        w_prev /= w_prev.sum(axis=-1, keepdims=True)
        wbar = w_prev.copy()
        for _ in range(200):
            rhs = models.rotterdam_rhs(params, dlnp, dlnQ[:, t - 1])
            dlnq = rhs / wbar
            q_t = q[:, t - 1, :] * np.exp(dlnq)
            y_t = price[:, t, :] * q_t
            w_t = y_t / y_t.sum(axis=-1, keepdims=True)
            wbar_new = 0.5 * (w_prev + w_t)
            if np.max(np.abs(wbar_new - wbar)) < 1e-14:
                wbar = wbar_new
                break
            wbar = wbar_new
        q[:, t, :] = q[:, t - 1, :] * np.exp(rhs / wbar)

    exp_ = price * q
    w = exp_ / exp_.sum(axis=-1, keepdims=True)
    if np.any(w <= 0.0):
        raise DegenerateShares("Rotterdam integration produced nonpositive "
                               "shares; reduce the process volatility")
    total = exp_.sum(axis=-1)
    w, _ = _add_share_noise(w, cfg.share_noise_sd, rng)
    return PanelDataset(units=[f"u{i:02d}" for i in range(U)],
                        periods=list(range(T)),
                        goods=[f"g{i + 1}" for i in range(N)],
                        price=price, expenditure=w * total[..., None])


# Example parameter sets with three goods, usable as demo truths for the
# synth CLI path and scenario tests. Shares near (0.70, 0.09, 0.21).

def demo_params(form):
    gamma_rot = np.array([
        [-0.430, 0.118, 0.312],
        [0.118, -0.213, 0.095],
        [0.312, 0.095, -0.407],
    ])
    gamma_aids = np.array([
        [0.331, -0.125, -0.206],
        [-0.125, 0.090, 0.035],
        [-0.206, 0.035, 0.171],
    ])
    if form == models.ROTTERDAM:
        return models.ParamSet(alpha=np.array([0.880, 0.030, 0.090]),
                               gamma=gamma_rot)
    if form == models.AIDS:
        return models.ParamSet(alpha=np.array([1.879, -0.278, -0.601]),
                               gamma=gamma_aids,
                               beta=np.array([0.211, -0.066, -0.145]))
    return models.ParamSet(alpha=np.array([0.406, 0.182, 0.412]),
                           gamma=np.array([
                               [-0.143, 0.029, 0.114],
                               [0.029, 0.037, -0.066],
                               [0.114, -0.066, -0.048],
                           ]),
                           beta=np.array([0.131, -0.041, -0.090]),
                           lam=np.array([-0.007, 0.002, 0.005]))


def demo_config(form, n_units=31, n_periods=13, share_noise_sd=0.0, seed=0):
    """A ready-to-run configuration whose processes are centered so the
    simulated shares stay well inside (0,1)."""
    params = demo_params(form)
    spec = models.ModelSpec(form, 3)
    if form == models.ROTTERDAM:
        return SynthConfig(spec=spec, true_params=params,
                           n_units=n_units, n_periods=n_periods,
                           price_sd=0.02, expenditure_sd=0.02,
                           initial_shares=np.array([0.698, 0.090, 0.212]),
                           share_noise_sd=share_noise_sd, seed=seed)
    target = np.array([0.698, 0.090, 0.212])
    if form == models.AIDS:
        # alpha + beta * z = target  =>  z from the first good
        z = (target[0] - params.alpha[0]) / params.beta[0]
    else:
        # solve alpha1 + beta1 z + lam1 z^2 = target1 (smaller root branch)
        a, b, c = params.lam[0], params.beta[0], params.alpha[0] - target[0]
        z = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    # the quadratic term needs real expenditure variation to be identified
    exp_sd = 0.03 if form == models.AIDS else 0.20
    return SynthConfig(spec=spec, true_params=params,
                       n_units=n_units, n_periods=n_periods,
                       price_sd=0.03, expenditure_sd=exp_sd, lny0=float(z),
                       share_noise_sd=share_noise_sd, seed=seed)
