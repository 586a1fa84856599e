"""Inventory dynamics between replenishment instants, constraints and rewards.

All inventory quantities are normalized to shelf capacity, so a level of 1
means a full shelf. Orders ``W`` are expressed in the same normalized units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

#: Tolerance used when checking that a replenished level stays on the shelf.
SHELF_TOL = 1e-9


@dataclass(frozen=True)
class ProductCatalog:
    """Per-product metadata.

    ``unit_volume`` and ``unit_weight`` are the volume and mass of one full
    shelf of the product, i.e. the multipliers applied to normalized
    replenishment quantities.
    """

    spoilage_rate: np.ndarray
    unit_volume: np.ndarray
    unit_weight: np.ndarray
    threshold: np.ndarray
    shelf_life: np.ndarray = None
    forecast_error_std: np.ndarray = None
    product_ids: tuple = None

    def __post_init__(self):
        a = _as_vector(self.spoilage_rate, "spoilage_rate")
        p = a.size
        if p == 0:
            raise ValueError("catalog must contain at least one product")
        v = _as_vector(self.unit_volume, "unit_volume", p)
        c = _as_vector(self.unit_weight, "unit_weight", p)
        tau = _as_vector(self.threshold, "threshold", p)
        if np.any(a < 0):
            raise ValueError("spoilage rates must be non-negative")
        if np.any(v <= 0) or np.any(c <= 0):
            raise ValueError("unit volume and weight must be strictly positive")
        if np.any(tau < 0) or np.any(tau >= 1):
            raise ValueError("thresholds must lie in [0, 1)")
        life = np.ones(p) if self.shelf_life is None else _as_vector(self.shelf_life, "shelf_life", p)
        if np.any(life < 0) or np.any(life > 1):
            raise ValueError("shelf life statistic must lie in [0, 1]")
        sigma = (
            np.zeros(p)
            if self.forecast_error_std is None
            else _as_vector(self.forecast_error_std, "forecast_error_std", p)
        )
        if np.any(sigma < 0):
            raise ValueError("forecast error std must be non-negative")
        ids = tuple(str(i) for i in range(p)) if self.product_ids is None else tuple(self.product_ids)
        if len(ids) != p:
            raise ValueError(f"expected {p} product ids, got {len(ids)}")
        if len(set(ids)) != p:
            raise ValueError("duplicate product id in catalog")
        for name, value in [
            ("spoilage_rate", a),
            ("unit_volume", v),
            ("unit_weight", c),
            ("threshold", tau),
            ("shelf_life", life),
            ("forecast_error_std", sigma),
            ("product_ids", ids),
        ]:
            object.__setattr__(self, name, value)

    @property
    def p(self) -> int:
        return self.spoilage_rate.size

    def with_statistics(self, shelf_life=None, forecast_error_std=None) -> "ProductCatalog":
        changes = {}
        if shelf_life is not None:
            changes["shelf_life"] = shelf_life
        if forecast_error_std is not None:
            changes["forecast_error_std"] = forecast_error_std
        return replace(self, **changes)


@dataclass(frozen=True)
class CapacityConfig:
    """Transport capacity per replenishment plus reward coefficients."""

    v_max: float
    c_max: float
    alpha: float = 0.5
    gamma: float = 0.99

    def __post_init__(self):
        if not (self.v_max > 0 and self.c_max > 0):
            raise ValueError("v_max and c_max must be strictly positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass(frozen=True)
class InventoryState:
    levels: np.ndarray
    period: int = 0

    def __post_init__(self):
        x = _as_vector(self.levels, "levels")
        if np.any(x < 0) or np.any(x > 1 + SHELF_TOL):
            raise ValueError("inventory levels must lie in [0, 1]")
        if self.period < 0:
            raise ValueError("period must be non-negative")
        object.__setattr__(self, "levels", x)


@dataclass(frozen=True)
class PeriodOutcome:
    """What happened to each product over one unit period."""

    start_levels: np.ndarray
    end_levels: np.ndarray
    served: np.ndarray
    waste: np.ndarray
    rejected: np.ndarray
    empty_flags: np.ndarray
    rho: float = 0.0
    stockout_time: np.ndarray = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.end_levels.size


def _as_vector(values, name, size=None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = np.atleast_1d(arr)
        if arr.ndim != 1:
            raise ValueError(f"{name} must be one-dimensional")
    if size is not None and arr.size != size:
        raise ValueError(f"{name} has length {arr.size}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def apply_replenishment(state: InventoryState, u_con) -> InventoryState:
    """Add the (already feasible) replenishment to the current levels."""
    u = _as_vector(u_con, "u_con", state.levels.size)
    if np.any(u < 0):
        raise ValueError("replenishment must be non-negative")
    x_plus = state.levels + u
    if np.any(x_plus > 1 + SHELF_TOL):
        worst = int(np.argmax(x_plus))
        raise ValueError(
            f"replenishment overfills product {worst}: level {x_plus[worst]!r} > 1"
        )
    return InventoryState(np.minimum(x_plus, 1.0), state.period)


def _decay_fraction(a: np.ndarray) -> np.ndarray:
    # (1 - e^{-a}) / a, with the a -> 0 limit 1
    out = np.ones_like(a)
    nz = a > 0
    out[nz] = -np.expm1(-a[nz]) / a[nz]
    return out


def propagate_period(state_plus: InventoryState, orders, catalog: ProductCatalog) -> PeriodOutcome:
    """Integrate ``dx/dz = -a x - W`` over one unit period for every product.

    Orders arriving after a product runs out are rejected, so the level is
    held at zero from the stockout instant to the end of the period.
    """
    x = state_plus.levels
    p = x.size
    W = _as_vector(orders, "orders", p)
    if np.any(W < 0):
        raise ValueError("orders must be non-negative")
    if catalog.p != p:
        raise ValueError(f"catalog has {catalog.p} products, state has {p}")
    a = catalog.spoilage_rate

    decay = _decay_fraction(a)
    end = np.exp(-a) * x - W * decay
    stockout = end < 0
    served = W.copy()
    z_star = np.ones(p)
    if np.any(stockout):
        xs, Ws, as_ = x[stockout], W[stockout], a[stockout]
        z = np.empty_like(xs)
        lin = as_ == 0
        z[lin] = xs[lin] / Ws[lin]
        z[~lin] = np.log1p(as_[~lin] * xs[~lin] / Ws[~lin]) / as_[~lin]
        z_star[stockout] = z
        served[stockout] = Ws * z
        end = np.where(stockout, 0.0, end)
    waste = np.maximum(x - end - served, 0.0)
    # exact spoilage is zero for a = 0; keep rounding noise out of the books
    waste[a == 0] = 0.0
    end = np.where(a == 0, x - served, end)
    end = np.maximum(end, 0.0)
    rejected = np.maximum(W - served, 0.0)
    return PeriodOutcome(
        start_levels=x.copy(),
        end_levels=end,
        served=served,
        waste=waste,
        rejected=rejected,
        empty_flags=end <= catalog.threshold,
        stockout_time=z_star,
    )


def project_actions(u, state: InventoryState, catalog: ProductCatalog, capacity: CapacityConfig) -> np.ndarray:
    """Clip to the free shelf space, then scale down to fit truck capacity."""
    x = state.levels
    u = _as_vector(u, "u", x.size)
    if np.any(u < 0):
        raise ValueError("desired actions must be non-negative")
    u = np.minimum(u, np.maximum(1.0 - x, 0.0))
    vol = catalog.unit_volume @ u
    wgt = catalog.unit_weight @ u
    scale = 1.0
    if vol > capacity.v_max:
        scale = min(scale, capacity.v_max / vol)
    if wgt > capacity.c_max:
        scale = min(scale, capacity.c_max / wgt)
    return u * scale


def compute_rho(u, catalog: ProductCatalog, capacity: CapacityConfig) -> float:
    """Requested volume or weight relative to the available capacity."""
    u = _as_vector(u, "u", catalog.p)
    return float(
        max(
            catalog.unit_volume @ u / capacity.v_max,
            catalog.unit_weight @ u / capacity.c_max,
        )
    )


def is_feasible(u_con, state: InventoryState, catalog: ProductCatalog, capacity: CapacityConfig, rtol: float = 1e-12) -> bool:
    """Check the executed action against shelf and capacity constraints."""
    u = np.asarray(u_con, dtype=np.float64)
    x = state.levels
    if np.any(u < 0) or np.any(u > 1 + rtol):
        return False
    if np.any(x + u > 1 + rtol):
        return False
    if catalog.unit_volume @ u > capacity.v_max * (1 + rtol):
        return False
    return bool(catalog.unit_weight @ u <= capacity.c_max * (1 + rtol))


def percentile_spread(levels) -> float:
    """Difference between the 95th and 5th percentile of inventory levels."""
    x = np.asarray(levels, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("percentile spread of an empty vector")
    lo, hi = np.percentile(x, [5.0, 95.0], method="linear")
    return float(hi - lo)


def system_reward(outcome: PeriodOutcome, end_levels=None) -> float:
    """Business reward of one period, in [-2, 1]."""
    x = outcome.end_levels if end_levels is None else np.asarray(end_levels, dtype=np.float64)
    p = x.size
    p_empty = np.count_nonzero(outcome.empty_flags)
    return float(1.0 - p_empty / p - outcome.waste.sum() / p - percentile_spread(x))


def per_product_rewards(outcome: PeriodOutcome, end_levels=None, rho: float = None, capacity: CapacityConfig = None, alpha: float = None) -> np.ndarray:
    """Reward returned to each product's agent.

    The spread term and the capacity penalty are shared by all products.
    """
    x = outcome.end_levels if end_levels is None else np.asarray(end_levels, dtype=np.float64)
    if rho is None:
        rho = outcome.rho
    if alpha is None:
        alpha = 0.0 if capacity is None else capacity.alpha
    common = percentile_spread(x) + alpha * max(rho - 1.0, 0.0)
    return 1.0 - outcome.empty_flags.astype(np.float64) - outcome.waste - common
