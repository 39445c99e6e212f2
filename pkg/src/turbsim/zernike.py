"""Zernike modes on the unit disk, Noll-indexed and Noll-normalized.

Modes are orthonormal under the disk-average inner product: the mean
over in-disk samples of Z_i * Z_j approaches delta_ij as the grid is
refined. Mode strength statistics for Kolmogorov turbulence follow the
classical residual-error table, with the usual power-law continuation
above mode 21.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .core import ParameterError


def noll_to_nm(j: int) -> tuple[int, int]:
    """Map a Noll index (1-based) to radial degree n and azimuthal m.

    Negative m denotes the sine mode (odd j), positive the cosine mode
    (even j), zero the rotationally symmetric mode.
    """
    if j < 1:
        raise ParameterError(f"Noll index must be >= 1, got {j}")
    n = 0
    j1 = j - 1
    while j1 > n:
        n += 1
        j1 -= n
    m = (-1) ** j * ((n % 2) + 2 * ((j1 + ((n + 1) % 2)) // 2))
    return n, m


def _radial_polynomial(n: int, m: int, r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    for s in range((n - m) // 2 + 1):
        coef = (
            (-1) ** s
            * math.factorial(n - s)
            / (
                math.factorial(s)
                * math.factorial((n + m) // 2 - s)
                * math.factorial((n - m) // 2 - s)
            )
        )
        out += coef * r ** (n - 2 * s)
    return out


def disk_grid(resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-disk sample grid: pixel-center coords in [-1, 1] and the
    in-disk mask."""
    if resolution < 2:
        raise ParameterError(f"grid resolution must be >= 2, got {resolution}")
    c = (2.0 * (np.arange(resolution) + 0.5) / resolution) - 1.0
    x = np.broadcast_to(c[None, :], (resolution, resolution))
    y = np.broadcast_to(c[:, None], (resolution, resolution))
    mask = x**2 + y**2 <= 1.0
    return x, y, mask


@lru_cache(maxsize=256)
def zernike_mode(noll_index: int, resolution: int) -> np.ndarray:
    """Evaluate one mode on the unit-disk grid; zero outside the disk.

    The returned array is cached and read-only.
    """
    n, m = noll_to_nm(noll_index)
    x, y, mask = disk_grid(resolution)
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    rad = _radial_polynomial(n, abs(m), r)
    if m == 0:
        z = math.sqrt(n + 1.0) * rad
    elif m > 0:
        z = math.sqrt(2.0 * (n + 1.0)) * rad * np.cos(m * theta)
    else:
        z = math.sqrt(2.0 * (n + 1.0)) * rad * np.sin(-m * theta)
    z = np.where(mask, z, 0.0)
    z.flags.writeable = False
    return z


@lru_cache(maxsize=8)
def zernike_stack(noll_indices: tuple[int, ...], resolution: int) -> np.ndarray:
    """Stack of modes, shape (len(noll_indices), resolution, resolution)."""
    stack = np.stack([zernike_mode(j, resolution) for j in noll_indices])
    stack.flags.writeable = False
    return stack


# Residual mean-square phase after removing modes 1..J, in units of
# (D/r0)^(5/3) rad^2; the tabulated values continue as a power law in J.
_RESIDUALS = {
    1: 1.0299, 2: 0.582, 3: 0.134, 4: 0.111, 5: 0.0880, 6: 0.0648,
    7: 0.0587, 8: 0.0525, 9: 0.0463, 10: 0.0401, 11: 0.0377, 12: 0.0352,
    13: 0.0328, 14: 0.0304, 15: 0.0279, 16: 0.0267, 17: 0.0255,
    18: 0.0243, 19: 0.0232, 20: 0.0220, 21: 0.0208,
}


def kolmogorov_residual(j: int) -> float:
    """Residual phase variance after fitting modes 1..j, per (D/r0)^(5/3)."""
    if j < 1:
        raise ParameterError(f"mode count must be >= 1, got {j}")
    if j in _RESIDUALS:
        return _RESIDUALS[j]
    return 0.2944 * j ** (-math.sqrt(3.0) / 2.0)


def mode_variance(j: int) -> float:
    """Kolmogorov variance of mode j's coefficient, per (D/r0)^(5/3)."""
    if j < 2:
        raise ParameterError(f"mode variance is defined for j >= 2, got {j}")
    return kolmogorov_residual(j - 1) - kolmogorov_residual(j)
