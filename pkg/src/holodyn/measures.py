"""Equilibrium-measure clouds from random backward walks, and pairings with test functions.

Backward iteration is restricted to fibered maps f = [P : Q : c t^d]: a preimage
of [a : b : c'] is a root of the binary form b P - a Q together with a d-th root
for the t coordinate, so the d^2 preimages come from two univariate problems.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateFiber, ExceptionalStart, IllConditioned, RootFailure, SupportViolation
from .greenfn import PotentialGrid
from .projspace import (
    HomPoint,
    HomPolyMap,
    array_to_points,
    chordal_distance_array,
    newton_preimages,
    normalize_array,
)
from .testfn import TestFn

ROOT_RTOL = 1e-8
FORWARD_TOL = 1e-8
MAX_ROOT_DEGREE = 16


# ---------------------------------------------------------------------------
# univariate roots

def _horner(c: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """p(x), p'(x) and sum |c_k| |x|^k for coefficients ``c`` (highest degree first, last axis)."""
    p = np.zeros(x.shape, dtype=complex)
    dp = np.zeros(x.shape, dtype=complex)
    scale = np.zeros(x.shape)
    ax = np.abs(x)
    for k in range(c.shape[-1]):
        ck = c[..., k, None] if c.ndim > 1 else c[k]
        dp = dp * x + p
        p = p * x + ck
        scale = scale * ax + np.abs(ck)
    return p, dp, scale


def _companion_roots(c: np.ndarray) -> np.ndarray:
    """Eigenvalues of the companion matrices of the rows of ``c`` (leading coefficient first)."""
    c = np.atleast_2d(c)
    n = c.shape[1] - 1
    C = np.zeros((c.shape[0], n, n), dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        C[:, 0, :] = -c[:, 1:] / c[:, :1]
    if not np.all(np.isfinite(C)):
        raise IllConditioned("companion matrix overflows; rescale the coefficients")
    if n > 1:
        C[:, np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(C)


def _polish(c: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p, dp, scale = _horner(c, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(dp != 0, p / dp, 0.0)
    r1 = r - step
    p1, _, scale1 = _horner(c, r1)
    better = np.isfinite(r1) & (np.abs(p1) <= np.abs(p))
    r = np.where(better, r1, r)
    p = np.where(better, p1, p)
    scale = np.where(better, scale1, scale)
    return r, np.abs(p) / np.maximum(scale, np.finfo(float).tiny)


def roots_univariate(coeffs: Sequence[complex]) -> np.ndarray:
    """All roots (with multiplicity) of c[0] x^n + ... + c[n].

    Companion-matrix eigenvalues followed by one Newton step per root; each root
    must satisfy |p(r)| <= 1e-8 sum |c_k| |r|^k.
    """
    c = np.asarray(coeffs, dtype=complex)
    if c.ndim != 1 or len(c) < 2:
        raise ValueError("need a polynomial of degree >= 1")
    if c[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    if len(c) - 1 > MAX_ROOT_DEGREE:
        raise ValueError(f"degree > {MAX_ROOT_DEGREE} is not supported")
    r = _companion_roots(c[None, :])[0]
    r, rel = _polish(c, r)
    if np.any(rel > ROOT_RTOL):
        raise IllConditioned(f"root residual {rel.max():.3g} exceeds {ROOT_RTOL}")
    return r


def batched_roots(c: np.ndarray) -> np.ndarray:
    """``roots_univariate`` for every row of ``c``; raises RootFailure on a bad residual."""
    try:
        r = _companion_roots(c)
    except IllConditioned as exc:
        raise RootFailure(str(exc)) from exc
    r, rel = _polish(c, r)
    if np.any(rel > ROOT_RTOL):
        raise RootFailure(f"root residual {rel.max():.3g} exceeds {ROOT_RTOL}")
    return r


# ---------------------------------------------------------------------------
# preimages of fibered maps

def _base_roots(F: HomPolyMap, T: np.ndarray) -> np.ndarray:
    """Roots [z : w] of b P - a Q for targets T = [a : b : c]; shape (N, d, 2), sup-normalised."""
    P, Q = F.base_forms()
    d = F.degree
    a, b = T[:, 0:1], T[:, 1:2]
    if np.any(np.maximum(np.abs(a), np.abs(b))[:, 0] < 1e-300):
        raise DegenerateFiber("target [0:0:1] has a whole line of preimages")
    H = b * P[None, :] - a * Q[None, :]          # H[:, i] multiplies z^i w^(d-i)
    use_z = np.abs(H[:, d]) >= np.abs(H[:, 0])
    out = np.empty((T.shape[0], d, 2), dtype=complex)
    scale = np.max(np.abs(H), axis=1)
    if np.any(scale == 0):
        raise DegenerateFiber("b P - a Q vanishes identically")
    for flag in (True, False):
        idx = np.flatnonzero(use_z == flag)
        if idx.size == 0:
            continue
        # in zeta = z/w the polynomial is sum H[i] zeta^i: leading coefficient H[d]
        c = H[idx, ::-1] if flag else H[idx, :]
        lead = np.abs(c[:, 0]) / scale[idx]
        if np.any(lead < 1e-14):
            raise RootFailure("base polynomial has a root at infinity in both charts")
        r = batched_roots(c)
        if flag:
            Z = np.stack([r, np.ones_like(r)], axis=-1)
        else:
            Z = np.stack([np.ones_like(r), r], axis=-1)
        out[idx] = Z / np.max(np.abs(Z), axis=-1, keepdims=True)
    return out


def _lift_preimages(F: HomPolyMap, T: np.ndarray, Z: np.ndarray, tsel: np.ndarray | None = None) -> np.ndarray:
    """Complete base roots Z (N, k, 2) with t-coordinates.

    With ``tsel`` (N,) only that d-th root of unity is used, giving (N, k, 3);
    otherwise all d roots, giving (N, k*d, 3).
    """
    d = F.degree
    c = F.t_coefficient()
    N, k, _ = Z.shape
    X = np.zeros((N, k, 3), dtype=complex)
    X[..., :2] = Z
    PQ = F.evaluate(X.reshape(-1, 3)).reshape(N, k, 3)[..., :2]
    a, b, cc = T[:, 0, None], T[:, 1, None], T[:, 2, None]
    use_a = np.abs(a) >= np.abs(b)
    kappa = np.where(use_a, PQ[..., 0] / np.where(use_a, a, 1.0), PQ[..., 1] / np.where(use_a, 1.0, b))
    td = kappa * cc / c                           # t^d
    root = np.abs(td) ** (1.0 / d) * np.exp(1j * np.angle(td) / d)
    unity = np.exp(2j * np.pi * np.arange(d) / d)
    if tsel is not None:
        X[..., 2] = root * unity[tsel][:, None]
        return X
    out = np.repeat(X[:, :, None, :], d, axis=2)
    out[..., 2] = root[:, :, None] * unity[None, None, :]
    return out.reshape(N, k * d, 3)


def _check_forward(F: HomPolyMap, Q: np.ndarray, T: np.ndarray, tol: float) -> np.ndarray:
    """Return preimage rows, Newton-polished where the forward residual exceeds ``tol``."""
    res = chordal_distance_array(F.evaluate(Q), T)
    bad = res > 1e-12
    if np.any(bad):
        Q = Q.copy()
        fixed, ok = newton_preimages(F, T[bad], Q[bad], tol=1e-12, max_iter=8)
        Q[bad] = np.where(ok[:, None], fixed, Q[bad])
        res = chordal_distance_array(F.evaluate(Q), T)
    if np.any(res > tol):
        raise RootFailure(f"forward residual {res.max():.3g} exceeds {tol}")
    return Q


def preimages_fibered(F: HomPolyMap, p: HomPoint) -> list[HomPoint]:
    """All d^2 preimages of ``p`` with multiplicity, each passing the forward check."""
    if not F.fibered:
        raise ValueError("preimages are only computed for fibered maps")
    T = p.array[None, :]
    Z = _base_roots(F, T)
    X = _lift_preimages(F, T, Z)[0]
    X, _ = normalize_array(X)
    X = _check_forward(F, X, np.repeat(T, X.shape[0], axis=0), FORWARD_TOL)
    return array_to_points(X)


def random_preimages(F: HomPolyMap, T: np.ndarray, choice: np.ndarray, tol: float = FORWARD_TOL) -> np.ndarray:
    """One preimage per row of T: branch ``choice`` in [0, d^2), base root ``choice // d``,
    t-root ``choice % d``.  Rows of T must be normalised."""
    d = F.degree
    Z = _base_roots(F, T)
    bi = choice // d
    Zc = Z[np.arange(T.shape[0]), bi][:, None, :]
    X = _lift_preimages(F, T, Zc, tsel=choice % d)[:, 0, :]
    X, _ = normalize_array(X)
    return _check_forward(F, X, T, tol)


# ---------------------------------------------------------------------------
# clouds

@dataclass
class PointCloudMeasure:
    """Weighted sample of normalised points (rows of ``X``)."""

    X: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X, _ = normalize_array(np.atleast_2d(self.X))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.X.shape[0],):
            raise ValueError("one weight per point")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    def __len__(self):
        return self.X.shape[0]

    @property
    def points(self) -> list[HomPoint]:
        return array_to_points(self.X)

    def chart_coords(self, chart: int = 2) -> np.ndarray:
        """Affine coordinates in ``chart``; rows off the chart get nan."""
        from .projspace import CHART_AXES
        piv = self.X[:, chart]
        with np.errstate(divide="ignore", invalid="ignore"):
            A = self.X[:, list(CHART_AXES[chart])] / piv[:, None]
        A[np.abs(piv) < 1e-300] = np.nan
        return A

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re0", "im0", "re1", "im1", "re2", "im2", "weight"])
            for x, w in zip(self.X, self.weights):
                wr.writerow([repr(float(v)) for v in (x[0].real, x[0].imag, x[1].real, x[1].imag,
                                                       x[2].real, x[2].imag, w)])
        path.with_suffix(".meta.json").write_text(json.dumps(self.meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "PointCloudMeasure":
        path = Path(path)
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        X = raw[:, 0:6:2] + 1j * raw[:, 1:6:2]
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(X, raw[:, 6], meta)


def branch_choices(seed: int, step: int, count: int, d: int) -> np.ndarray:
    """Uniform branch indices in [0, d^2) for every walk at one step.

    Keyed by (seed, step) through a counter-based Philox stream; walk i always
    receives entry i, whatever the batching.
    """
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, step], dtype=np.uint64)))
    return gen.integers(0, d * d, size=count)


def backward_walks(F: HomPolyMap, start: np.ndarray, depth: int, seed: int,
                   record: bool = False, step_offset: int = 0) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run independent uniform backward walks from each row of ``start``.

    Returns the endpoints and, if ``record``, the list of visited point arrays
    (``[x_0, x_-1, ..., x_-depth]``).
    """
    X, _ = normalize_array(np.atleast_2d(start))
    path = [X] if record else []
    for k in range(depth):
        choice = branch_choices(seed, step_offset + k, X.shape[0], F.degree)
        X = random_preimages(F, X, choice)
        if record:
            path.append(X)
    return X, path


def _exceptional(F: HomPolyMap, p: np.ndarray) -> bool:
    if max(abs(p[0]), abs(p[1])) < 1e-12:
        return True
    Z = _base_roots(F, p[None, :])[0]
    # a totally ramified base point that is its own preimage is exceptional for theta
    same = np.max(np.abs(Z[:, 0, None] * Z[None, :, 1] - Z[:, 1, None] * Z[None, :, 0])) < 1e-6
    fixed = abs(Z[0, 0] * p[1] - Z[0, 1] * p[0]) < 1e-6
    return bool(same and fixed)


def sample_equilibrium(F: HomPolyMap, start: HomPoint, depth: int, count: int, seed: int) -> PointCloudMeasure:
    """Endpoints of ``count`` random backward walks of length ``depth``, uniform weights."""
    if not F.fibered:
        raise ValueError("sampling needs a fibered map")
    if depth < 10 or count < 1000:
        raise ValueError("need depth >= 10 and count >= 1000")
    if _exceptional(F, start.array):
        raise ExceptionalStart(f"start {start.coords} is exceptional")
    X0 = np.repeat(start.array[None, :], count, axis=0)
    try:
        X, _ = backward_walks(F, X0, depth, seed)
    except DegenerateFiber as exc:
        raise ExceptionalStart("walks reached the point [0:0:1]") from exc
    meta = {"map": F.name, "depth": depth, "count": count, "seed": seed}
    return PointCloudMeasure(X, np.full(count, 1.0 / count), meta)


# ---------------------------------------------------------------------------
# pairings

def _evaluate_on_cloud(cloud: PointCloudMeasure, phi) -> np.ndarray:
    if isinstance(phi, TestFn):
        A = cloud.chart_coords(2)
        off = np.isnan(A[:, 0])
        A = np.where(off[:, None], 10.0, A)  # off-chart points are outside any support
        return np.where(off, 0.0, phi.at(A[:, 0], A[:, 1]))
    return np.broadcast_to(np.asarray(phi(cloud.X), dtype=float), (len(cloud),))


def pair_cloud(cloud: PointCloudMeasure, phi: TestFn | Callable[[np.ndarray], np.ndarray]) -> float:
    """sum_i w_i phi(p_i); plain callables receive the (N, 3) point array."""
    return float(np.sum(cloud.weights * _evaluate_on_cloud(cloud, phi)))


def pair_cloud_se(cloud: PointCloudMeasure, phi) -> tuple[float, float]:
    """Pairing and its Monte Carlo standard error."""
    vals = _evaluate_on_cloud(cloud, phi)
    w = cloud.weights
    mean = float(np.sum(w * vals))
    var = float(np.sum(w * (vals - mean) ** 2))
    n_eff = 1.0 / float(np.sum(w ** 2))
    return mean, float(np.sqrt(var / n_eff))


@dataclass(frozen=True)
class PairingResult:
    name: str
    value: float
    error_estimate: float
    parameters: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"name": self.name, "value": self.value, "error_estimate": self.error_estimate,
                "parameters": self.parameters}


def _check_grid_support(grid: PotentialGrid, phi: TestFn) -> None:
    sb = phi.support_box()
    if np.any(sb[:, 0] <= grid.box[:, 0]) or np.any(sb[:, 1] >= grid.box[:, 1]):
        raise SupportViolation("support of the test function touches the grid box boundary")


def _grid_sum(grid: PotentialGrid, dphi: Callable, stride: int) -> float:
    axes = grid.axes()
    u = axes[0][::stride]
    v = axes[1][::stride][None, :, None, None]
    s = axes[2][::stride][None, None, :, None]
    t = axes[3][::stride][None, None, None, :]
    vals = grid.values[::stride, ::stride, ::stride, ::stride]
    partial = []
    for i in range(0, len(u), 8):
        partial.append(np.sum(vals[i:i + 8] * dphi(u[i:i + 8, None, None, None], v, s, t)))
    return float(np.sum(partial)) * grid.cell_volume() * stride ** 4


def slice_pairing(grid: PotentialGrid, phi: TestFn, direction: str = "W") -> PairingResult:
    """<T ^ dd^c|W|^2, phi> = int g phi_zzbar  (direction "W"), or against phi_wwbar ("Z").

    Midpoint rule on the grid nodes; the error estimate compares with the rule on
    every other node (spacing 2h).
    """
    _check_grid_support(grid, phi)
    if direction.upper() == "W":
        dphi = phi.zzbar
    elif direction.upper() == "Z":
        dphi = phi.wwbar
    else:
        raise ValueError("direction must be 'Z' or 'W'")
    fine = _grid_sum(grid, dphi, 1)
    coarse = _grid_sum(grid, dphi, 2)
    return PairingResult(f"slice_{direction.upper()}", fine, abs(fine - coarse),
                         {"test_function": phi.name, "resolution": list(grid.resolution), "chart": grid.chart})


def trace_pairing(grid: PotentialGrid, phi: TestFn) -> PairingResult:
    """Sum of the two slice pairings (flat trace measure in the chart)."""
    a = slice_pairing(grid, phi, "W")
    b = slice_pairing(grid, phi, "Z")
    return PairingResult("trace", a.value + b.value, a.error_estimate + b.error_estimate,
                         {"test_function": phi.name, "resolution": list(grid.resolution), "chart": grid.chart})
