"""Compactly supported test functions on a chart C^2 with closed-form Laplacians.

Coordinates are real: z = u + i v, w = s + i t.  ``zzbar`` and ``wwbar`` return
the mixed derivatives d^2/dz dzbar = (1/4) Laplacian in (u, v), resp. (s, t).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def bump(x: np.ndarray, p: int) -> np.ndarray:
    """(1 - x^2)^p on |x| < 1, zero outside."""
    q = np.clip(1.0 - np.asarray(x) ** 2, 0.0, None)
    return q ** p


def bump_d2(x: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(x)
    q = np.clip(1.0 - x ** 2, 0.0, None)
    return (-2 * p * q ** (p - 1) + 4 * p * (p - 1) * x ** 2 * q ** (p - 2)) * (np.abs(x) < 1)


@dataclass(frozen=True)
class TestFn:
    """Product bump ``amp * prod_i b((x_i - c_i) / r_i)`` with b(x) = (1 - x^2)^p.

    With ``radial_w`` set, the (s, t) factor is replaced by b(|w - w_c| / R) using
    ``r[2]`` as R, so the function depends on w only through |w - w_c|^2.
    """

    center: tuple[float, float, float, float]
    radius: tuple[float, float, float, float]
    amp: float = 1.0
    power: int = 4
    radial_w: bool = False
    name: str = ""

    __test__ = False  # keep pytest from collecting the class

    def __post_init__(self):
        if len(self.center) != 4 or len(self.radius) != 4:
            raise ValueError("center and radius need 4 real entries")
        if min(self.radius) <= 0:
            raise ValueError("radii must be positive")
        if self.power < 3:
            raise ValueError("power >= 3 keeps second derivatives continuous")

    def scaled(self, k: float) -> "TestFn":
        return TestFn(self.center, self.radius, self.amp * k, self.power, self.radial_w, self.name)

    def support_box(self) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        r = np.asarray(self.radius, dtype=float)
        if self.radial_w:
            r = r.copy()
            r[3] = r[2]
        return np.stack([c - r, c + r], axis=1)

    def support_w_radius(self) -> float:
        """Largest |w| on the support."""
        c = self.center
        if self.radial_w:
            return float(np.hypot(c[2], c[3]) + self.radius[2])
        return float(np.hypot(abs(c[2]) + self.radius[2], abs(c[3]) + self.radius[3]))

    # -- factors ------------------------------------------------------
    def _x(self, i, x):
        return (np.asarray(x, dtype=float) - self.center[i]) / self.radius[i]

    def _f(self, i, x):
        return bump(self._x(i, x), self.power)

    def _f2(self, i, x):
        return bump_d2(self._x(i, x), self.power) / self.radius[i] ** 2

    def _radial(self, s, t):
        R = self.radius[2]
        q = ((np.asarray(s) - self.center[2]) ** 2 + (np.asarray(t) - self.center[3]) ** 2) / R ** 2
        return q, R

    def _w_factor(self, s, t):
        if self.radial_w:
            q, _ = self._radial(s, t)
            return np.clip(1.0 - q, 0.0, None) ** self.power
        return self._f(2, s) * self._f(3, t)

    def _w_lap4(self, s, t):
        """(1/4) Laplacian in (s, t) of the w factor."""
        if self.radial_w:
            # f(q) with q = |w - w_c|^2 / R^2: (1/4) Lap = (f'(q) + q f''(q)) / R^2
            q, R = self._radial(s, t)
            p = self.power
            m = np.clip(1.0 - q, 0.0, None)
            f1 = -p * m ** (p - 1)
            f2 = p * (p - 1) * m ** (p - 2)
            return (f1 + q * f2) * (q < 1) / R ** 2
        return 0.25 * (self._f2(2, s) * self._f(3, t) + self._f(2, s) * self._f2(3, t))

    # -- public evaluators -------------------------------------------
    def __call__(self, u, v, s, t):
        return self.amp * self._f(0, u) * self._f(1, v) * self._w_factor(s, t)

    def zzbar(self, u, v, s, t):
        lap = 0.25 * (self._f2(0, u) * self._f(1, v) + self._f(0, u) * self._f2(1, v))
        return self.amp * lap * self._w_factor(s, t)

    def wwbar(self, u, v, s, t):
        return self.amp * self._f(0, u) * self._f(1, v) * self._w_lap4(s, t)

    def at(self, z, w):
        z = np.asarray(z)
        w = np.asarray(w)
        return self(z.real, z.imag, w.real, w.imag)


def standard_suite() -> list[TestFn]:
    """Test functions straddling M0 = {Re z + |w|^2 = 0} with varied centers, widths
    and w-anisotropy; all compactly supported in D = ]-1,1[^2 x unit disc.

    Amplitudes are chosen so that <T11, phi> is of order one, which makes the
    absolute floor of the pairing tolerance act as a relative one.
    """
    return [
        TestFn((-0.15, 0.0, 0.0, 0.0), (0.6, 0.7, 0.6, 0.6), amp=32.0, name="centered"),
        TestFn((-0.3, 0.2, 0.2, -0.1), (0.5, 0.5, 0.45, 0.5), amp=128.0, name="shifted"),
        TestFn((-0.1, -0.3, 0.0, 0.0), (0.5, 0.6, 0.7, 0.3), amp=64.0, name="anisotropic"),
        TestFn((-0.25, 0.1, 0.0, 0.0), (0.6, 0.6, 0.8, 0.8), amp=32.0, radial_w=True, name="w-radial"),
        TestFn((0.0, 0.0, -0.3, 0.25), (0.7, 0.8, 0.4, 0.45), amp=64.0, name="offcenter"),
        TestFn((-0.4, 0.0, 0.1, 0.1), (0.45, 0.9, 0.5, 0.5), amp=1024.0, power=5, name="narrow-u"),
    ]
