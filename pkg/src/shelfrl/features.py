"""Per-product state features shared by every agent type."""

from __future__ import annotations

import numpy as np

from .dynamics import CapacityConfig, ProductCatalog
from .forecasting import ForecastSnapshot

FEATURE_NAMES = (
    "inventory",
    "forecast",
    "forecast_error_std",
    "unit_volume",
    "unit_weight",
    "shelf_life",
    "forecast_total_volume",
    "forecast_total_weight",
)
N_FEATURES = len(FEATURE_NAMES)


def build_features(levels, snapshot: ForecastSnapshot, catalog: ProductCatalog, capacity: CapacityConfig = None, scale: bool = True) -> np.ndarray:
    """One row of eight features per product.

    With ``scale`` the catalog multipliers are divided by their catalog
    maxima and the forecast totals by the matching capacity, so every
    column is O(1). Inventory, forecast and sigma are already normalized.
    """
    x = np.asarray(levels, dtype=np.float64)
    w_hat = np.asarray(snapshot.orders, dtype=np.float64)
    p = catalog.p
    if x.shape != (p,) or w_hat.shape != (p,):
        raise ValueError("levels and forecast must have one entry per product")
    v, c = catalog.unit_volume, catalog.unit_weight
    total_v, total_c = snapshot.total_volume, snapshot.total_weight
    if scale:
        if capacity is None:
            raise ValueError("scaling needs the capacity configuration")
        v = v / v.max()
        c = c / c.max()
        total_v = total_v / capacity.v_max
        total_c = total_c / capacity.c_max
    F = np.empty((p, N_FEATURES))
    F[:, 0] = x
    F[:, 1] = w_hat
    F[:, 2] = catalog.forecast_error_std
    F[:, 3] = v
    F[:, 4] = c
    F[:, 5] = catalog.shelf_life
    F[:, 6] = total_v
    F[:, 7] = total_c
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite feature values")
    return F
