"""Backward orbits along Newton-refined inverse branches and their contraction rates.

The inverse branch f^-n along a backward orbit x_0, x_-1, ..., x_-n is the local
inverse of the forward cocycle D_n = df(x_-1) ... df(x_-n) (right-multiplied as n
grows).  Its Lipschitz constants are 1/s_min(D_n) and 1/s_max(D_n), so the
contraction rates are read off the singular values of the forward cocycle.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CriticalCollision, Indeterminate, InsufficientData, NewtonStall
from .measures import branch_choices, preimages_fibered
from .projspace import (CHART_AXES, HomPoint, HomPolyMap, TangentFrame, chart_matrices, chordal_distance_array,
                        eval_map_array, fs_matrices, normalize, tangent_map)

MAX_ORBIT = 60
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 30
RESIDUAL_TOL = 1e-10
DET_FLOOR = 1e-12
COLLISION_TOL = 1e-8
FIT_START = 10
EPS = 0.1
MIN_PROFILES = 50
RATIO_TOL = 0.05


# ---------------------------------------------------------------------------
# Newton refinement

def newton_refine(F: HomPolyMap, target: HomPoint, approx: HomPoint,
                  tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> tuple[HomPoint, int]:
    """Newton on the chart map x -> F(x) - target; returns the point and the step count."""
    src, dst = approx.chart_hint, target.chart_hint
    axes_s, axes_d = CHART_AXES[src], CHART_AXES[dst]
    x = approx.array / approx.array[src]
    goal = target.array[list(axes_d)] / target.array[dst]
    steps = 0
    for steps in range(1, max_iter + 1):
        try:
            A, a, b, _ = chart_matrices(F, x[None, :], src, dst)
        except Indeterminate as exc:
            raise NewtonStall("iterate left the target chart") from exc
        det = A[0, 0, 0] * A[0, 1, 1] - A[0, 0, 1] * A[0, 1, 0]
        if not abs(det) > DET_FLOOR:
            raise NewtonStall(f"singular Jacobian (|det| = {abs(det):.2g}) at step {steps}")
        delta = np.linalg.solve(A[0], b[0] - goal)
        x[list(axes_s)] = a[0] - delta
        if np.max(np.abs(delta)) < tol:
            break
    p = normalize(x)
    res = chordal_distance_array(eval_map_array(F, p.array[None, :])[0], target.array[None, :])[0]
    if not res <= RESIDUAL_TOL:
        raise NewtonStall(f"forward residual {res:.3g} after {steps} steps")
    return p, steps


def refine_preimage_newton(F: HomPolyMap, target: HomPoint, approx: HomPoint) -> HomPoint:
    return newton_refine(F, target, approx)[0]


# ---------------------------------------------------------------------------
# backward orbits

@dataclass
class BackwardOrbit:
    """x_0, x_-1, ..., x_-n with the tangent maps of f at x_-1, ..., x_-n."""

    points: list[HomPoint]
    cocycle: list[TangentFrame]
    seed: int
    resamples: int = 0

    def __len__(self) -> int:
        return len(self.points) - 1

    @property
    def array(self) -> np.ndarray:
        return np.array([p.array for p in self.points])

    def forward_residuals(self, F: HomPolyMap) -> np.ndarray:
        X = self.array
        return chordal_distance_array(eval_map_array(F, X[1:])[0], X[:-1])

    def frame_defects(self, F: HomPolyMap) -> np.ndarray:
        out = []
        for p, fr in zip(self.points[1:], self.cocycle):
            A, *_ = chart_matrices(F, p.array[None, :], fr.chart, fr.image_chart)
            out.append(np.max(np.abs(A[0] - fr.matrix)) / max(1.0, np.max(np.abs(fr.matrix))))
        return np.array(out)

    def base_defects(self, F: HomPolyMap) -> np.ndarray:
        """Chordal residual of theta(pi(x_-k-1)) against pi(x_-k) on P^1."""
        P, Q = F.base_forms()
        X = self.array
        z, w = X[1:, 0], X[1:, 1]
        d = F.degree
        pw = np.array([z ** i * w ** (d - i) for i in range(d + 1)])
        img = np.stack([P @ pw, Q @ pw], axis=1)
        tgt = X[:-1, :2]
        wedge = np.abs(img[:, 0] * tgt[:, 1] - img[:, 1] * tgt[:, 0])
        return wedge / (np.linalg.norm(img, axis=1) * np.linalg.norm(tgt, axis=1))


def _collides(X: np.ndarray, i: int) -> bool:
    dist = chordal_distance_array(np.repeat(X[i:i + 1], X.shape[0], axis=0), X)
    dist[i] = np.inf
    return bool(dist.min() < COLLISION_TOL)


def backward_orbit(F: HomPolyMap, x0: HomPoint, n: int, seed: int) -> BackwardOrbit:
    """Random backward orbit of length n, each step a uniformly chosen refined preimage.

    A choice that lands within 1e-8 of another preimage (a critical value nearby) is
    resampled with the next branch index, and the resample is counted.
    """
    if not F.fibered:
        raise ValueError("backward orbits need a fibered map")
    if not 1 <= n <= MAX_ORBIT:
        raise ValueError(f"orbit length must lie in [1, {MAX_ORBIT}]")
    d2 = F.degree ** 2
    points, frames = [x0], []
    resamples = 0
    for k in range(n):
        target = points[-1]
        pre = preimages_fibered(F, target)
        X = np.array([p.array for p in pre])
        i = int(branch_choices(seed, k, 1, F.degree)[0])
        for shift in range(d2):
            j = (i + shift) % d2
            if not _collides(X, j):
                break
            resamples += 1
        else:
            raise CriticalCollision(f"all preimages collide at step {k}")
        q = refine_preimage_newton(F, target, pre[j])
        points.append(q)
        frames.append(tangent_map(F, q))
    return BackwardOrbit(points, frames, seed, resamples)


# ---------------------------------------------------------------------------
# contraction profiles

@dataclass(frozen=True)
class ContractionProfile:
    n_values: np.ndarray
    log_s_min: np.ndarray
    log_s_max: np.ndarray
    fitted_rates: tuple[float, float]       # slopes of (log s_min, log s_max)
    fitted_intercepts: tuple[float, float]
    orbit_id: int = 0

    @property
    def s_min(self) -> np.ndarray:
        return np.exp(self.log_s_min)

    @property
    def s_max(self) -> np.ndarray:
        return np.exp(self.log_s_max)

    @property
    def log_det(self) -> np.ndarray:
        return self.log_s_min + self.log_s_max


def _fit(n: np.ndarray, y: np.ndarray, start: int = FIT_START) -> tuple[float, float]:
    m = n >= start
    slope, icpt = np.polyfit(n[m], y[m], 1)
    return float(slope), float(icpt)


def log_singular_values(F: HomPolyMap, X: np.ndarray, force_chart: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """log s_min, log s_max of D_n for n = 1..len(X)-1, X ordered x_0, x_-1, ...

    Frames are Fubini-Study orthonormal with each point's frame shared between
    consecutive steps.  s_min comes from log|det| - log s_max, which stays accurate
    when s_min/s_max underflows double precision.
    """
    charts = np.argmax(np.abs(X), axis=1) if force_chart is None else np.full(len(X), force_chart)
    B, _ = fs_matrices(F, X[1:], src=charts[1:], dst=charts[:-1])
    logdet = np.cumsum(np.log(np.abs(B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0])))
    M = np.eye(2, dtype=complex)
    scale = 0.0
    lmax = np.empty(len(B))
    for k, Bk in enumerate(B):
        M = M @ Bk
        nrm = np.linalg.norm(M)
        M /= nrm
        scale += np.log(nrm)
        lmax[k] = scale + np.log(np.linalg.norm(M, 2))
    return logdet - lmax, lmax


def contraction_profile(F: HomPolyMap, orbit: BackwardOrbit, force_chart: int | None = None,
                        orbit_id: int = 0) -> ContractionProfile:
    if len(orbit) < 20:
        raise ValueError("contraction profiles need orbits of length >= 20")
    lmin, lmax = log_singular_values(F, orbit.array, force_chart)
    n = np.arange(1, len(orbit) + 1)
    r0, i0 = _fit(n, lmin)
    r1, i1 = _fit(n, lmax)
    return ContractionProfile(n, lmin, lmax, (r0, r1), (i0, i1), orbit_id)


def export_profiles(profiles: Sequence[ContractionProfile], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["orbit", "n", "s_min", "s_max", "log_s_min", "log_s_max"])
        for k, pr in enumerate(profiles):
            for n, a, b in zip(pr.n_values, pr.log_s_min, pr.log_s_max):
                wr.writerow([pr.orbit_id or k, int(n), repr(float(np.exp(a))), repr(float(np.exp(b))),
                             repr(float(a)), repr(float(b))])


# ---------------------------------------------------------------------------
# diagnostics

def classify_ratio(ratio: float, tol: float = RATIO_TOL) -> tuple[str, int | None]:
    if abs(ratio - 1.0) <= tol:
        return "equal", 1
    k = int(round(ratio))
    if k >= 2 and abs(ratio - k) <= tol * k:
        return "resonant", k
    return "nonresonant", None


@dataclass
class DecayReport:
    d: int
    count: int
    n_range: tuple[int, int]
    prefactor_slope: float
    prefactor_target: float
    band_C: float
    band_passed: bool
    ratio: float
    resonance: str
    resonance_k: int | None
    lambda1: float
    lambda2: float
    extra: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _stack(profiles: Sequence[ContractionProfile], n_lo: int, n_hi: int):
    n = profiles[0].n_values
    m = (n >= n_lo) & (n <= n_hi)
    lmin = np.array([p.log_s_min[m] for p in profiles])
    lmax = np.array([p.log_s_max[m] for p in profiles])
    return n[m], lmin, lmax


def decay_diagnostics(profiles: Sequence[ContractionProfile], d: int, n_range: tuple[int, int] = (10, 40),
                      band_C: float = 10.0) -> DecayReport:
    """(a) slope of log(d^n / (s_min s_max)), (b) the band for d^n / s_min^2 and
    (c) the resonance class of lambda_1 / lambda_2, all from orbit averages.

    The band uses the geometric mean over orbits at each n.
    """
    if len(profiles) < MIN_PROFILES:
        raise InsufficientData(f"{len(profiles)} profiles, need >= {MIN_PROFILES}")
    n_hi = min(n_range[1], int(min(p.n_values[-1] for p in profiles)))
    n, lmin, lmax = _stack(profiles, n_range[0], n_hi)
    logd = np.log(d)
    pref = (n * logd - lmin - lmax).mean(axis=0)
    slope_a = float(np.polyfit(n, pref, 1)[0])
    band = (n * logd - 2 * lmin).mean(axis=0)
    C = float(np.exp(np.max(np.abs(band))))
    lam2 = float(np.mean([p.fitted_rates[0] for p in profiles]))
    lam1 = float(np.mean([p.fitted_rates[1] for p in profiles]))
    ratio = lam1 / lam2
    kind, k = classify_ratio(ratio)
    return DecayReport(d, len(profiles), (n_range[0], n_hi), slope_a, logd - lam1 - lam2, C, C <= band_C,
                       ratio, kind, k, lam1, lam2,
                       {"band_log_min": float(band.min()), "band_log_max": float(band.max())})


@dataclass(frozen=True)
class FloorCheck:
    fraction: float
    passed: bool
    constants: np.ndarray
    slopes: np.ndarray
    rate: float


def lemma_floor_check(profiles: Sequence[ContractionProfile], lambda2: float, eps: float = EPS,
                      required: float = 0.95) -> FloorCheck:
    """s_min(n) >= c e^{n(lambda_2 - 2 eps)} along each orbit.

    c is the best constant min_n s_min(n) e^{-n(lambda_2 - 2 eps)}; an orbit passes when c
    is a positive finite number and the orbit's fitted growth rate is at least the floor
    rate, so the bound is not propped up by the finite horizon alone.
    """
    rate = lambda2 - 2 * eps
    cs, slopes = [], []
    for p in profiles:
        cs.append(np.exp(np.min(p.log_s_min - p.n_values * rate)))
        slopes.append(p.fitted_rates[0])
    cs, slopes = np.array(cs), np.array(slopes)
    ok = np.isfinite(cs) & (cs > 0) & (slopes >= rate)
    frac = float(ok.mean())
    return FloorCheck(frac, frac >= required, cs, slopes, rate)
