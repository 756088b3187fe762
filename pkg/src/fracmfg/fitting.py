"""Least-squares exponential fits for decay series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FLOOR = 1e-13


@dataclass
class ExponentialFit:
    amplitude: float
    rate: float
    r_squared: float
    window: tuple[float, float]
    floored: bool

    def envelope(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-self.rate * t)


def fit_exponential(t: np.ndarray, w: np.ndarray, window: tuple[float, float],
                    reversed_time: float | None = None) -> ExponentialFit:
    """Fit w ~ K exp(-rate * t) on the window by log-linear least squares.

    With reversed_time=T the fit is against exp(-rate * (T - t)).  Samples at
    or below the numeric floor trigger floor handling: the rate is a lower
    bound from the last clean sample and no R^2 is reported.
    """
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=float)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 10:
        raise ValueError(f"fit window [{lo}, {hi}] holds {int(sel.sum())} samples; need >= 10")
    ts, ws = t[sel], w[sel]
    tau = (reversed_time - ts) if reversed_time is not None else ts

    clean = ws > FLOOR
    if not clean.all():
        if not clean.any():
            return ExponentialFit(0.0, np.inf, np.nan, window, True)
        # rate lower bound between the first clean sample and the floor
        i0 = np.argmax(clean)
        ilast = len(clean) - 1 - np.argmax(clean[::-1])
        span = abs(tau[i0] - tau[ilast])
        rate = np.log(ws[i0] / FLOOR) / max(span, 1e-12)
        return ExponentialFit(float(ws[i0]), float(rate), np.nan, window, True)

    y = np.log(ws)
    A = np.vstack([np.ones_like(tau), -tau]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(float(np.exp(coef[0])), float(coef[1]), r2, window, False)
