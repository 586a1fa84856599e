"""Trailing-average order forecasts and the empirical product statistics."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

DEFAULT_WINDOW = 28


class OrderHistory:
    """Ring of the most recent ``window`` per-period order vectors."""

    def __init__(self, p: int, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be a positive number of periods")
        self.p = int(p)
        self.window = int(window)
        self._rows = deque(maxlen=self.window)
        self._sum = np.zeros(self.p)

    def __len__(self):
        return len(self._rows)

    def update(self, orders) -> "OrderHistory":
        w = np.asarray(orders, dtype=np.float64).reshape(-1)
        if w.size != self.p:
            raise ValueError(f"expected {self.p} order values, got {w.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("orders must be finite and non-negative")
        self._rows.append(w.copy())
        # recompute rather than accumulate to avoid drift over long episodes
        self._sum = np.sum(self._rows, axis=0)
        return self

    def extend(self, rows) -> "OrderHistory":
        for row in np.atleast_2d(rows):
            self.update(row)
        return self

    def retained(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.p))
        return np.array(self._rows)

    def mean(self) -> np.ndarray:
        if not self._rows:
            return np.zeros(self.p)
        return self._sum / len(self._rows)

    def clear(self):
        self._rows.clear()
        self._sum = np.zeros(self.p)


@dataclass(frozen=True)
class ForecastSnapshot:
    orders: np.ndarray
    total_volume: float
    total_weight: float


def update_history(history: OrderHistory, orders) -> OrderHistory:
    return history.update(orders)


def forecast(history: OrderHistory, unit_volume=None, unit_weight=None) -> ForecastSnapshot:
    """Trailing mean of the retained window, plus the catalog-weighted totals.

    Before any period has been recorded the forecast is zero.
    """
    w_hat = history.mean()
    vol = 0.0 if unit_volume is None else float(np.asarray(unit_volume) @ w_hat)
    wgt = 0.0 if unit_weight is None else float(np.asarray(unit_weight) @ w_hat)
    return ForecastSnapshot(w_hat, vol, wgt)


def trailing_forecasts(orders, window: int = DEFAULT_WINDOW, history=None) -> np.ndarray:
    """Forecast issued at the start of every period of ``orders``.

    Row ``t`` averages the ``window`` periods preceding ``t``. ``history``
    optionally supplies earlier periods that precede the first row.
    """
    W = np.asarray(orders, dtype=np.float64)
    if history is not None and len(history):
        prev = np.asarray(history, dtype=np.float64)
        full = np.vstack([prev, W])
        offset = prev.shape[0]
    else:
        full, offset = W, 0
    csum = np.vstack([np.zeros((1, full.shape[1])), np.cumsum(full, axis=0)])
    out = np.zeros_like(W)
    for t in range(W.shape[0]):
        end = offset + t
        start = max(0, end - window)
        if end > start:
            out[t] = (csum[end] - csum[start]) / (end - start)
    return out


def forecast_error_std(forecasts, realized) -> tuple[np.ndarray, bool]:
    """Population std of ``realized - forecast`` per product.

    Returns ``(sigma, warm)``; with fewer than two paired observations sigma
    is zero and ``warm`` is False.
    """
    f = np.atleast_2d(np.asarray(forecasts, dtype=np.float64))
    r = np.atleast_2d(np.asarray(realized, dtype=np.float64))
    if f.shape != r.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {r.shape}")
    if f.shape[0] < 2:
        return np.zeros(f.shape[1]), False
    return np.std(r - f, axis=0, ddof=0), True


def shelf_life_statistic(losses) -> np.ndarray:
    """Min-max normalized inverse of the mean per-period unexplained loss.

    ``losses`` has one row per period and one column per product. Products
    that never lose inventory get 1, as does every product when all inverses
    coincide.
    """
    L = np.atleast_2d(np.asarray(losses, dtype=np.float64))
    if L.shape[0] < 1:
        raise ValueError("need at least one period of loss observations")
    mean_loss = L.mean(axis=0)
    if np.any(mean_loss < 0):
        raise ValueError("average inventory loss must be non-negative")
    zero = mean_loss <= 0
    inv = np.zeros_like(mean_loss)
    inv[~zero] = 1.0 / mean_loss[~zero]
    out = np.ones_like(mean_loss)
    finite = inv[~zero]
    if finite.size:
        lo, hi = finite.min(), finite.max()
        if hi > lo:
            out[~zero] = (finite - lo) / (hi - lo)
    return out


class TrailingAverageForecaster(BaseEstimator):
    """Moving-average order forecaster.

    ``fit`` freezes the per-product forecast error std on training data;
    ``predict`` returns the forecast issued before each period of a series.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        self.window = window

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if self.window < 1:
            raise ValueError("window must be positive")
        if np.any(X < 0):
            raise ValueError("orders must be non-negative")
        self.n_features_in_ = X.shape[1]
        f = trailing_forecasts(X, self.window)
        # the first period has no forecast to compare against
        sigma, warm = forecast_error_std(f[1:], X[1:])
        if not warm:
            warnings.warn("fewer than two forecast/actual pairs; sigma set to 0", stacklevel=2)
        self.forecast_error_std_ = sigma
        self.tail_ = X[-self.window:].copy()
        return self

    def predict(self, X, continue_history: bool = False):
        check_is_fitted(self, "forecast_error_std_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} products, got {X.shape[1]}")
        return trailing_forecasts(X, self.window, self.tail_ if continue_history else None)
