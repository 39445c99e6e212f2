"""Statistical estimators for checking generated fields and kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Kernel2D, MotionField, ParameterError


@dataclass
class RadialCurve:
    """Radially binned curve: values[k] is the average over lags that
    round to k pixels."""

    lags: np.ndarray
    values: np.ndarray


def _lag_geometry(h: int, w: int):
    """Lag-vector radii, bin indices, and overlap counts on the padded
    (2h, 2w) grid used by the autocorrelation estimator."""
    vy = np.arange(2 * h) - h
    vx = np.arange(2 * w) - w
    counts = np.maximum(h - np.abs(vy), 0)[:, None] * np.maximum(w - np.abs(vx), 0)[None, :]
    radius = np.hypot(vy[:, None], vx[None, :])
    return radius, np.rint(radius).astype(int), counts


def radial_profile_curve(func, shape: tuple, max_lag: int) -> RadialCurve:
    """Bin an analytic radial function exactly like the estimator does.

    Within a 1-px bin the function is averaged over the same discrete
    lag vectors the estimator uses, which matters wherever the profile
    is strongly curved; this is the curve an unbiased estimate
    converges to.
    """
    h, w = shape
    radius, rbin, counts = _lag_geometry(h, w)
    valid = counts > 0
    lags = np.arange(max_lag + 1)
    values = np.empty(max_lag + 1)
    for k in lags:
        sel = (rbin == k) & valid
        values[k] = float(np.mean(func(radius[sel])))
    return RadialCurve(lags=lags, values=values)


def empirical_autocorrelation(
    fields: Sequence[MotionField], max_lag: int
) -> RadialCurve:
    """Unbiased estimate of C(v) = E[e(p) . e(p + v)], radially binned.

    The two-dimensional numerators are accumulated over the whole
    ensemble first (each divided by the per-lag overlap count), then
    averaged over 1-px radial bins; every lag vector lands in exactly
    one bin. No mean is subtracted: the fields are modeled as zero-mean
    and the estimator measures the raw second moment.
    """
    if not fields:
        raise ParameterError("need at least one field")
    h, w = fields[0].shape
    if max_lag < 0 or max_lag >= min(h, w):
        raise ParameterError(f"max_lag must lie in [0, {min(h, w) - 1}], got {max_lag}")
    acc = np.zeros((2 * h, 2 * w))
    for fld in fields:
        if fld.shape != (h, w):
            raise ParameterError("all fields must share one shape")
        for plane in (fld.dx, fld.dy):
            padded = np.zeros((2 * h, 2 * w))
            padded[:h, :w] = plane
            freq = np.fft.fft2(padded)
            acc += np.fft.ifft2(freq * np.conj(freq)).real
    acc /= len(fields)

    centered = np.fft.fftshift(acc)
    radius, rbin, counts = _lag_geometry(h, w)

    lags = np.arange(max_lag + 1)
    values = np.empty(max_lag + 1)
    valid = counts > 0
    for k in lags:
        sel = (rbin == k) & valid
        values[k] = np.mean(centered[sel] / counts[sel])
    return RadialCurve(lags=lags, values=values)


def field_moment_report(fields: Sequence[MotionField]) -> dict:
    """Mean vector, pooled variance, and peak magnitude of an ensemble."""
    if not fields:
        raise ParameterError("need at least one field")
    dx = np.concatenate([f.dx.ravel() for f in fields])
    dy = np.concatenate([f.dy.ravel() for f in fields])
    return {
        "count": len(fields),
        "mean_dx": float(dx.mean()),
        "mean_dy": float(dy.mean()),
        "variance": float(dx.var() + dy.var()),
        "max_magnitude": float(np.hypot(dx, dy).max()),
    }


def kernel_report(kernels: Sequence[Kernel2D]) -> list[dict]:
    """Per-kernel sum, centroid, central second moments, negativity.

    Centroids are measured from the geometric center of the tap grid,
    so a symmetric blur kernel reports (0, 0).
    """
    out = []
    for kern in kernels:
        w = kern.weights
        side = kern.side
        c = np.arange(side, dtype=np.float64) - (side - 1) / 2.0
        total = float(w.sum())
        if total == 0:
            raise ParameterError("kernel sums to zero; moments undefined")
        cy = float((w.sum(axis=1) * c).sum() / total)
        cx = float((w.sum(axis=0) * c).sum() / total)
        m2y = float((w.sum(axis=1) * (c - cy) ** 2).sum() / total)
        m2x = float((w.sum(axis=0) * (c - cx) ** 2).sum() / total)
        out.append(
            {
                "sum": total,
                "centroid_y": cy,
                "centroid_x": cx,
                "second_moment_y": m2y,
                "second_moment_x": m2x,
                "negative_taps": int((w < 0).sum()),
                "min_tap": float(w.min()),
            }
        )
    return out
