"""Exact local model of the Green current near a regular point of the boundary of the basin.

Potential G0(z, w) = Re z + |w|^2 on D = ]-1,1[^2 x unit disc, with
Omega = {G0 > 0}, M0 = {G0 = 0} parametrised by
Phi(u, v, th) = (u + i v, sqrt(-u) e^{i th}) and Leb_M0 the push-forward of
Lebesgue measure on the parameter box ]-1,0] x ]-1,1[ x ]0,2 pi[.

Every pairing is computed twice: from its defining integral against the
potential and from the closed-form measure, by independent quadratures.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OutOfDomain, SupportViolation
from .testfn import TestFn

TWO_PI = 2.0 * np.pi
REL_TOL = 1e-3
RES_4D = 48
RES_3D = 96
RES_2D = 512

Integrand = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def g0(u, v, s, t):
    return u + s * s + t * t


def g0_eval(z: complex, w: complex) -> float:
    if not (abs(z.real) < 1 and abs(z.imag) < 1 and abs(w) < 1):
        raise OutOfDomain(f"({z}, {w}) is not in D")
    return z.real + abs(w) ** 2


@dataclass(frozen=True)
class LocalDomain:
    """D, Omega, M0 and the parametrisation Phi of M0."""

    param_box: tuple = ((-1.0, 0.0), (-1.0, 1.0), (0.0, TWO_PI))

    @staticmethod
    def contains(z, w) -> np.ndarray:
        z, w = np.asarray(z), np.asarray(w)
        return (np.abs(z.real) < 1) & (np.abs(z.imag) < 1) & (np.abs(w) < 1)

    @staticmethod
    def in_omega(z, w) -> np.ndarray:
        z, w = np.asarray(z), np.asarray(w)
        return LocalDomain.contains(z, w) & (z.real + np.abs(w) ** 2 > 0)

    @staticmethod
    def m0_defect(z, w) -> np.ndarray:
        """|G0| -- zero exactly on M0."""
        z, w = np.asarray(z), np.asarray(w)
        return np.abs(z.real + np.abs(w) ** 2)

    @staticmethod
    def phi(u, v, th):
        r = np.sqrt(-np.asarray(u, dtype=float))
        return np.asarray(u) + 1j * np.asarray(v), r * np.exp(1j * np.asarray(th))


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    res: int


@dataclass
class PairingCheck:
    name: str
    test_fn: str
    lhs: float
    rhs: float
    lhs_error: float
    rhs_error: float
    extra: dict = field(default_factory=dict)

    @property
    def tolerance(self) -> float:
        return self.lhs_error + self.rhs_error + REL_TOL * max(abs(self.lhs), abs(self.rhs), 1.0)

    @property
    def discrepancy(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return bool(self.discrepancy <= self.tolerance)

    def record(self) -> dict:
        return {"operation": self.name, "test_function": self.test_fn, "lhs": self.lhs, "rhs": self.rhs,
                "lhs_error": self.lhs_error, "rhs_error": self.rhs_error,
                "discrepancy": self.discrepancy, "tolerance": self.tolerance,
                "verdict": "pass" if self.passed else "fail", **self.extra}


def _midpoints(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * h, h


def _omega_sum(integrand: Integrand, res: int, block: int = 8) -> float:
    x, h = _midpoints(-1.0, 1.0, res)
    v = x[None, :, None, None]
    s = x[None, None, :, None]
    t = x[None, None, None, :]
    partial = []
    for i in range(0, res, block):
        u = x[i:i + block, None, None, None]
        mask = (g0(u, v, s, t) > 0) & (s * s + t * t < 1.0)
        vals = np.where(mask, integrand(u, v, s, t), 0.0)
        partial.append(np.sum(vals))
    return float(np.sum(partial)) * h ** 4


def quad_omega(integrand: Integrand, res: int = RES_4D) -> QuadResult:
    """4D tensor midpoint rule for the integral of integrand * 1_Omega over D.

    The error estimate is |Q(res) - Q(res/2)|.
    """
    fine = _omega_sum(integrand, res)
    coarse = _omega_sum(integrand, res // 2)
    return QuadResult(fine, abs(fine - coarse), res)


def _m0_sum(integrand: Integrand, res: int) -> float:
    u, hu = _midpoints(-1.0, 0.0, res)
    v, hv = _midpoints(-1.0, 1.0, res)
    th, ht = _midpoints(0.0, TWO_PI, res)
    z, w = LocalDomain.phi(u[:, None, None], v[None, :, None], th[None, None, :])
    vals = integrand(z.real, z.imag, w.real, w.imag)
    return float(np.sum(np.broadcast_to(vals, (res, res, res)))) * hu * hv * ht


def quad_m0(integrand: Integrand, res: int = RES_3D) -> QuadResult:
    """Integral against Leb_M0: midpoint rule for integrand o Phi on the parameter box."""
    fine = _m0_sum(integrand, res)
    coarse = _m0_sum(integrand, res // 2)
    return QuadResult(fine, abs(fine - coarse), res)


def check_support(phi: TestFn) -> None:
    box = phi.support_box()
    if np.any(box[:2, 0] <= -1.0) or np.any(box[:2, 1] >= 1.0) or phi.support_w_radius() >= 1.0:
        raise SupportViolation(f"support of {phi.name or 'test function'} is not compact in D")


def pair_T11(phi: TestFn, res: int = RES_4D, res3: int | None = None) -> PairingCheck:
    """<T11, phi> = int_Omega G0 phi_zzbar  versus  (1/8) int_M0 phi dLeb_M0."""
    check_support(phi)
    lhs = quad_omega(lambda u, v, s, t: g0(u, v, s, t) * phi.zzbar(u, v, s, t), res)
    rhs = quad_m0(phi, res3 or 2 * res)
    return PairingCheck("pair_T11", phi.name, lhs.value, rhs.value / 8, lhs.error, rhs.error / 8)


def pair_T22(phi: TestFn, res: int = RES_4D, res3: int | None = None) -> PairingCheck:
    """<T22, phi> = int_Omega G0 phi_wwbar  versus  int_Omega phi + int_M0 (|w|^2/2) phi."""
    check_support(phi)
    lhs = quad_omega(lambda u, v, s, t: g0(u, v, s, t) * phi.wwbar(u, v, s, t), res)
    vol = quad_omega(phi, res)
    surf = quad_m0(lambda u, v, s, t: 0.5 * (s * s + t * t) * phi(u, v, s, t), res3 or 2 * res)
    return PairingCheck("pair_T22", phi.name, lhs.value, vol.value + surf.value, lhs.error,
                        vol.error + surf.error, {"omega_part": vol.value, "m0_part": surf.value})


def psi0(s2):
    """Density of mu0 with respect to the trace T0 ^ omega0 on M0, as a function of |w|^2."""
    return 1.0 / (1.0 + 4.0 * np.asarray(s2))


def pair_mu0(phi: TestFn, res: int = RES_4D, res3: int | None = None,
             t11: PairingCheck | None = None) -> PairingCheck:
    """mu0 = (1/8) Leb_M0 = T0 ^ dd^c|w|^2, plus the psi0 identity.

    ``psi_identity`` is the discrepancy between int_M0 psi0 (1/8 + |w|^2/2) phi and
    (1/8) int_M0 phi, computed on the same nodes.
    """
    check_support(phi)
    r3 = res3 or 2 * res
    m0 = quad_m0(phi, r3)
    t11 = t11 or pair_T11(phi, res, r3)
    trace = quad_m0(lambda u, v, s, t: psi0(s * s + t * t) * (0.125 + 0.5 * (s * s + t * t)) * phi(u, v, s, t), r3)
    psi_gap = abs(trace.value - m0.value / 8)
    return PairingCheck("pair_mu0", phi.name, m0.value / 8, t11.lhs, m0.error / 8, t11.lhs_error,
                        {"psi_identity": psi_gap})


def psi_algebraic_gap(s2) -> np.ndarray:
    """(1/8 + s/2) / (1 + 4 s) - 1/8; zero identically."""
    s2 = np.asarray(s2, dtype=float)
    return (0.125 + 0.5 * s2) / (1.0 + 4.0 * s2) - 0.125


# ---------------------------------------------------------------------------
# slices along vertical discs

def _polar_disc(f: Callable[[np.ndarray, np.ndarray], np.ndarray], r0: float, res: int) -> float:
    """int over r0 < |w| < 1 of f(s, t) dLeb, midpoint rule in polar coordinates."""
    r, hr = _midpoints(r0, 1.0, res)
    th, ht = _midpoints(0.0, TWO_PI, 2 * res)
    R, TH = r[:, None], th[None, :]
    return float(np.sum(f(R * np.cos(TH), R * np.sin(TH)) * R)) * hr * ht


def _circle(f: Callable[[np.ndarray, np.ndarray], np.ndarray], r0: float, res: int) -> float:
    th, ht = _midpoints(0.0, TWO_PI, res)
    return float(np.sum(f(r0 * np.cos(th), r0 * np.sin(th)))) * ht


def _cartesian_disc(f: Callable[[np.ndarray, np.ndarray], np.ndarray], res: int) -> float:
    x, h = _midpoints(-1.0, 1.0, res)
    S, T = x[:, None], x[None, :]
    return float(np.sum(np.where(S * S + T * T < 1, f(S, T), 0.0))) * h * h


def lemma_coupe_check(u: float, v: float, phi: TestFn, res: int = RES_2D) -> PairingCheck:
    """J_{u,v}(phi) = int G0 phi_wwbar over the vertical slice, versus its closed form.

    For u >= 0 the closed form is int_disc phi(z, .); for u < 0 it is the integral of
    phi over the annulus sqrt(-u) < |w| < 1 plus (-u/2) int_0^2pi phi(z, sqrt(-u) e^{i th}).
    """
    if not (-1 < u < 1 and -1 < v < 1):
        raise OutOfDomain("(u, v) must lie in ]-1,1[^2")

    def direct(res_):
        return _cartesian_disc(lambda s, t: np.maximum(g0(u, v, s, t), 0.0) * phi.wwbar(u, v, s, t), res_)

    def closed(res_):
        r0 = np.sqrt(-u) if u < 0 else 0.0
        val = _polar_disc(lambda s, t: phi(u, v, s, t), r0, res_)
        if u < 0:
            val += -0.5 * u * _circle(lambda s, t: phi(u, v, s, t), r0, 2 * res_)
        return val

    d1, d0 = direct(res), direct(res // 2)
    c1, c0 = closed(res), closed(res // 2)
    item = 1 if u >= 0 else 2
    return PairingCheck("lemma_coupe", phi.name, d1, c1, abs(d1 - d0), abs(c1 - c0),
                        {"u": u, "v": v, "item": item})
