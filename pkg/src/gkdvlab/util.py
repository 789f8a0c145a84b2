"""Small numerics helpers shared across modules."""

from __future__ import annotations

import numpy as np


def spectral_derivative(values: np.ndarray, h: float, order: int = 1) -> np.ndarray:
    """d^order/dx^order via FFT; values must be (effectively) periodic."""
    n = len(values)
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
    return np.fft.irfft((1j * k) ** order * np.fft.rfft(values), n=n)


def h1_norm_uniform(values: np.ndarray, h: float,
                    deriv: np.ndarray | None = None) -> float:
    """H^1 norm on a uniform grid of a decaying-or-periodic sample."""
    if deriv is None:
        deriv = spectral_derivative(values, h)
    return float(np.sqrt(h * np.sum(values ** 2 + deriv ** 2)))


def l2_norm_uniform(values: np.ndarray, h: float) -> float:
    return float(np.sqrt(h * np.sum(values ** 2)))


def windowed_h1(values: np.ndarray, x: np.ndarray, h: float,
                left: float, right: float,
                deriv: np.ndarray | None = None) -> float:
    if deriv is None:
        deriv = spectral_derivative(values, h)
    mask = (x >= left) & (x <= right)
    return float(np.sqrt(h * np.sum(values[mask] ** 2 + deriv[mask] ** 2)))


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
