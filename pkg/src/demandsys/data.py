"""Panel ingestion and the first-difference transform.

The canonical long CSV layout has one row per (unit, period, good) with a
price and either an expenditure or a quantity column. A column-mapping
schema (canonical field -> CSV column name) adapts foreign layouts.
"""

import json
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import pandas as pd

from .errors import (
    DuplicateKey,
    InsufficientPeriods,
    MissingColumn,
    NonPositiveValue,
    UnbalancedPanel,
    UnitMismatch,
    UnmappedVehicleClass,
)

log = logging.getLogger(__name__)

SHARE_TOL = 1e-10

DEFAULT_SCHEMA = {
    "unit": "unit",
    "period": "period",
    "good": "good",
    "price": "price",
    "expenditure": "expenditure",
    "quantity": "quantity",
}


@dataclass
class PanelDataset:
    """Balanced panel of prices, expenditures and budget shares.

    Arrays are indexed [unit, period, good]. Shares sum to one per
    (unit, period) within ``SHARE_TOL`` by construction.
    """

    units: list
    periods: list
    goods: list
    price: np.ndarray
    expenditure: np.ndarray  # per-good expenditure y_i
    total: np.ndarray = field(default=None)  # total expenditure y
    share: np.ndarray = field(default=None)
    balanced: bool = True

    def __post_init__(self):
        U, T, N = len(self.units), len(self.periods), len(self.goods)
        self.price = np.asarray(self.price, dtype=float)
        self.expenditure = np.asarray(self.expenditure, dtype=float)
        if self.price.shape != (U, T, N) or self.expenditure.shape != (U, T, N):
            raise ValueError(f"arrays must have shape ({U}, {T}, {N})")
        if self.total is None:
            self.total = self.expenditure.sum(axis=2)
        if self.share is None:
            self.share = self.expenditure / self.total[:, :, None]
        if np.any(self.price <= 0) or not np.all(np.isfinite(self.price)):
            raise NonPositiveValue("price", "panel array")
        if np.any(self.total <= 0):
            raise NonPositiveValue("total expenditure", "panel array")
        err = np.abs(self.share.sum(axis=2) - 1.0).max()
        if err > SHARE_TOL:
            raise ValueError(f"shares do not sum to 1 (max error {err:.2e})")

    @property
    def n_goods(self):
        return len(self.goods)

    def quantity(self):
        """Implied quantities q_i = y_i / p_i."""
        return self.expenditure / self.price

    def stacked(self):
        """Flatten to (n_obs, N) arrays: prices, totals, shares."""
        N = self.n_goods
        return (self.price.reshape(-1, N),
                self.total.reshape(-1),
                self.share.reshape(-1, N))


@dataclass
class RotterdamTransform:
    """Log first differences with two-period average shares.

    One fewer period per unit than the source panel; the Divisia volume
    index is the wbar-weighted sum of log quantity changes.
    """

    units: list
    periods: list  # periods t >= 1 of the source panel
    goods: list
    dlnq: np.ndarray
    dlnp: np.ndarray
    dlnQ: np.ndarray
    wbar: np.ndarray

    @property
    def n_goods(self):
        return len(self.goods)

    def stacked(self):
        N = self.n_goods
        return (self.dlnq.reshape(-1, N), self.dlnp.reshape(-1, N),
                self.dlnQ.reshape(-1), self.wbar.reshape(-1, N))


def _resolve(schema):
    s = dict(DEFAULT_SCHEMA)
    if schema:
        s.update(schema)
    return s


def load_panel_csv(path, schema=None, allow_unbalanced=False,
                   price_is_index=False):
    """Load a long-format panel CSV into a PanelDataset.

    Parameters
    ----------
    path : str or Path
        CSV file, UTF-8, header row required.
    schema : dict, optional
        Mapping canonical field -> CSV column name. Canonical fields:
        unit, period, good, price, expenditure, quantity. Expenditure is
        used when present, otherwise quantity * price.
    allow_unbalanced : bool
        Keep units with incomplete periods by listwise-deleting the
        incomplete (unit, period) rows instead of raising.
    price_is_index : bool
        Treat the price column as a previous-period=100 index and chain
        it to a level series per (unit, good) before use.
    """
    s = _resolve(schema)
    df = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    for key in ("unit", "period", "good", "price"):
        if s[key] not in df.columns:
            raise MissingColumn(s[key])
    has_exp = s["expenditure"] in df.columns
    has_qty = s["quantity"] in df.columns
    if not has_exp and not has_qty:
        raise MissingColumn(f"{s['expenditure']} (or {s['quantity']})")

    df = df.rename(columns={s["unit"]: "unit", s["period"]: "period",
                            s["good"]: "good", s["price"]: "price"})
    if has_exp:
        df = df.rename(columns={s["expenditure"]: "expenditure"})
    else:
        df = df.rename(columns={s["quantity"]: "quantity"})

    dup = df.duplicated(subset=["unit", "period", "good"])
    if dup.any():
        first = df.loc[dup.idxmax(), ["unit", "period", "good"]].tolist()
        raise DuplicateKey(f"duplicate (unit, period, good) key: {first}")

    for col in ["price"] + (["expenditure"] if has_exp else ["quantity"]):
        bad = ~(df[col] > 0) | ~np.isfinite(df[col])
        if bad.any():
            raise NonPositiveValue(col, int(df.index[bad][0]))

    if price_is_index:
        df = df.sort_values(["unit", "good", "period"])
        df["price"] = (df.groupby(["unit", "good"])["price"]
                       .transform(lambda x: (x / 100.0).cumprod()))

    if not has_exp:
        df["expenditure"] = df["quantity"] * df["price"]

    goods = sorted(df["good"].unique().tolist())
    periods = sorted(df["period"].unique().tolist())
    units = sorted(df["unit"].unique().tolist())

    counts = df.groupby(["unit", "period"]).size()
    complete = counts[counts == len(goods)].index
    cells = df.set_index(["unit", "period"]).index
    keep = cells.isin(complete)
    if not keep.all() or len(complete) < len(units) * len(periods):
        if not allow_unbalanced:
            raise UnbalancedPanel(
                "panel is unbalanced; pass allow_unbalanced=True to "
                "listwise-delete incomplete (unit, period) cells")
        df = df[keep]
        # drop periods not present for every remaining unit
        present = df.groupby("period")["unit"].nunique()
        periods = sorted(present[present == len(units)].index.tolist())
        df = df[df["period"].isin(periods)]
        if not periods:
            raise UnbalancedPanel("no common periods remain after deletion")

    wide_p = df.pivot_table(index=["unit", "period"], columns="good",
                            values="price", sort=True)
    wide_y = df.pivot_table(index=["unit", "period"], columns="good",
                            values="expenditure", sort=True)
    U, T, N = len(units), len(periods), len(goods)
    price = wide_p.to_numpy().reshape(U, T, N)
    exp = wide_y.to_numpy().reshape(U, T, N)
    if np.isnan(price).any() or np.isnan(exp).any():
        raise UnbalancedPanel("missing (unit, period, good) cells")

    return PanelDataset(units=units, periods=periods, goods=goods,
                        price=price, expenditure=exp,
                        balanced=(len(complete) == U * T))


def save_panel_csv(data, path):
    """Write a PanelDataset in the long layout ``load_panel_csv`` reads."""
    rows = []
    for u, unit in enumerate(data.units):
        for t, period in enumerate(data.periods):
            for g, good in enumerate(data.goods):
                rows.append((unit, period, good,
                             repr(float(data.price[u, t, g])),
                             repr(float(data.expenditure[u, t, g]))))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("unit,period,good,price,expenditure\n")
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")


# --- expenditure construction from vehicle stocks ---

def default_vehicle_config():
    """Sample per-class mileage/fuel-economy constants and the default
    class -> aggregate-good mapping."""
    text = (resources.files("demandsys") / "configs" /
            "vehicle_constants.json").read_text(encoding="utf-8")
    return json.loads(text)


def build_expenditure(raw, aggregation, constants=None, schema=None,
                      good_prices=None):
    """Aggregate vehicle-class fuel expenditures into a PanelDataset.

    Each class contributes Q * VMT * 1000 * (FE / 100) * P per year:
    VMT is in thousand km per vehicle, FE in litres per 100 km, so the
    litre count is VMT*1000*FE/100 and the product with the fuel price
    is the class's annual fuel expenditure.

    Parameters
    ----------
    raw : pandas.DataFrame
        Columns (canonical names, remappable via ``schema``): unit,
        period, vehicle_class, quantity, fuel_price, and optionally
        vmt / fuel_economy. Missing vmt / fuel_economy fall back to the
        per-class constants.
    aggregation : dict
        vehicle_class -> aggregate good id. Every class in ``raw`` must
        be mapped.
    constants : dict, optional
        vehicle_class -> {"vmt": ..., "fuel_economy": ...}; defaults to
        the shipped sample constants.
    good_prices : pandas.DataFrame, optional
        Columns unit, period, good, price giving the price index of each
        aggregate good. When absent, the expenditure-weighted mean fuel
        price of the member classes is used.
    """
    s = {"unit": "unit", "period": "period", "vehicle_class": "vehicle_class",
         "quantity": "quantity", "vmt": "vmt", "fuel_economy": "fuel_economy",
         "fuel_price": "fuel_price"}
    if schema:
        s.update(schema)
    df = raw.rename(columns={v: k for k, v in s.items()}).copy()
    for key in ("unit", "period", "vehicle_class", "quantity", "fuel_price"):
        if key not in df.columns:
            raise MissingColumn(s[key])

    if constants is None:
        constants = default_vehicle_config()["classes"]

    for col, const_key in (("vmt", "vmt"), ("fuel_economy", "fuel_economy")):
        if col not in df.columns:
            try:
                df[col] = df["vehicle_class"].map(
                    lambda c: constants[c][const_key])
            except KeyError as exc:
                raise UnmappedVehicleClass(exc.args[0]) from exc
        if df[col].isna().any():
            missing = df.loc[df[col].isna(), "vehicle_class"].iloc[0]
            raise UnmappedVehicleClass(missing)

    unmapped = set(df["vehicle_class"]) - set(aggregation)
    if unmapped:
        raise UnmappedVehicleClass(sorted(unmapped)[0])
    for col in ("vmt", "fuel_economy", "fuel_price"):
        bad = ~(df[col] > 0) | ~np.isfinite(df[col])
        if bad.any():
            raise NonPositiveValue(col, int(df.index[bad][0]))
    if (df["quantity"] < 0).any():
        raise NonPositiveValue("quantity",
                               int(df.index[(df["quantity"] < 0)][0]))
    if (df["vmt"] > 500).any() or (df["fuel_economy"] > 100).any():
        raise UnitMismatch(
            "vmt must be in 1000 km and fuel_economy in L/100km; "
            "values look like a different unit convention")

    df["good"] = df["vehicle_class"].map(aggregation)
    df["spend"] = (df["quantity"] * df["vmt"] * 1000.0
                   * (df["fuel_economy"] / 100.0) * df["fuel_price"])

    grouped = df.groupby(["unit", "period", "good"])
    agg = grouped["spend"].sum().rename("expenditure").reset_index()
    if good_prices is not None:
        agg = agg.merge(good_prices, on=["unit", "period", "good"],
                        how="left")
        if agg["price"].isna().any():
            raise MissingColumn("price (good_prices is missing cells)")
    else:
        # fall back to the class-expenditure-weighted mean fuel price
        wp = grouped.apply(
            lambda g: np.average(g["fuel_price"], weights=g["spend"])
            if g["spend"].sum() > 0 else g["fuel_price"].mean(),
            include_groups=False).rename("price").reset_index()
        agg = agg.merge(wp, on=["unit", "period", "good"])

    units = sorted(agg["unit"].unique().tolist())
    periods = sorted(agg["period"].unique().tolist())
    goods = sorted(agg["good"].unique().tolist())
    U, T, N = len(units), len(periods), len(goods)
    price = (agg.pivot_table(index=["unit", "period"], columns="good",
                             values="price", sort=True)
             .to_numpy().reshape(U, T, N))
    exp = (agg.pivot_table(index=["unit", "period"], columns="good",
                           values="expenditure", sort=True)
           .to_numpy().reshape(U, T, N))
    if np.isnan(price).any() or np.isnan(exp).any():
        raise UnbalancedPanel("vehicle panel has missing cells")
    return PanelDataset(units=units, periods=periods, goods=goods,
                        price=price, expenditure=exp)


def rotterdam_transform(data):
    """Within-unit log first differences, average shares and the Divisia
    volume index.

    Quantities are recovered as y_i / p_i; the first period of each unit
    is dropped. The Divisia index is computed from quantities (the
    wbar-weighted sum), which coincides with the expenditure-based form
    up to the discretization error of the differences.
    """
    if len(data.periods) < 2:
        raise InsufficientPeriods("need at least 2 periods per unit")
    lnq = np.log(data.quantity())
    lnp = np.log(data.price)
    dlnq = np.diff(lnq, axis=1)
    dlnp = np.diff(lnp, axis=1)
    wbar = 0.5 * (data.share[:, 1:, :] + data.share[:, :-1, :])
    dlnQ = np.einsum("utn,utn->ut", wbar, dlnq)
    return RotterdamTransform(units=list(data.units),
                              periods=list(data.periods[1:]),
                              goods=list(data.goods),
                              dlnq=dlnq, dlnp=dlnp, dlnQ=dlnQ, wbar=wbar)
