"""Green functions of homogeneous lifts and gridded local potentials of the Green current.

The lift is measured in the sup-norm, matching the max-modulus normalisation of
points.  With that choice the power map [z^d : w^d : t^d] has Green function
exactly ``log max |x_i|``.
"""
from __future__ import annotations

import csv
import struct
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import Indeterminate, NoConvergence
from .projspace import CHART_AXES, ZERO_THRESHOLD, HomPolyMap, normalize_array, random_points

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200
BOUND_SAMPLES = 20000

_bounds: "weakref.WeakKeyDictionary[HomPolyMap, float]" = weakref.WeakKeyDictionary()
_base_bounds: "weakref.WeakKeyDictionary[HomPolyMap, float]" = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class GreenEval:
    value: float
    iterations: int
    residual: float
    converged: bool = True


def term_bound(F: HomPolyMap) -> float:
    """Uniform bound M on |log |F(y)|_inf| over sup-normalised y.

    The upper side is the coefficient bound; the lower side is the smallest
    value seen on a fixed sample of the unit polysphere.
    """
    if F not in _bounds:
        rng = np.random.default_rng(12345)
        Y, _ = normalize_array(random_points(rng, BOUND_SAMPLES))
        low = float(np.min(np.max(np.abs(F.evaluate(Y)), axis=1)))
        if low < ZERO_THRESHOLD:
            raise Indeterminate(f"map {F.name or '?'} vanishes on the sample")
        _bounds[F] = max(np.log(F.coefficient_bound()), -np.log(low), 0.0)
    return _bounds[F]


def _escape_sum(step: Callable[[np.ndarray], np.ndarray], X: np.ndarray, d: int, M: float,
                tol: float, max_iter: int):
    mod = np.max(np.abs(X), axis=1)
    with np.errstate(divide="ignore"):
        G = np.log(mod)
    Y = X / np.where(mod > 0, mod, 1.0)[:, None]
    resid = np.inf
    n = 0
    while n < max_iter:
        Z = step(Y)
        nz = np.max(np.abs(Z), axis=1)
        if np.any((nz < ZERO_THRESHOLD) & (mod > 0)):
            raise Indeterminate("lift vanished along an orbit")
        G = G + np.log(np.where(mod > 0, nz, 1.0)) / float(d) ** (n + 1)
        Y = Z / np.where(nz > 0, nz, 1.0)[:, None]
        n += 1
        resid = M / (float(d) ** n * (d - 1))
        if resid < tol:
            break
    return G, n, resid


def green_values(F: HomPolyMap, X: np.ndarray, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, int, float]:
    """Vectorised Green function of the lift: ``(values, iterations, residual)``.

    G(x) = log|x| + sum_n d^-(n+1) log |F(x_n)| with x_n the sup-normalised orbit;
    the residual is the geometric tail bound M d^-n / (d - 1).
    """
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    if np.any(np.max(np.abs(X), axis=1) < ZERO_THRESHOLD):
        raise Indeterminate("Green function is undefined at the origin")
    return _escape_sum(F.evaluate, X, F.degree, term_bound(F), tol, max_iter)


def green_value(F: HomPolyMap, x, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> GreenEval:
    if tol <= 0:
        raise ValueError("tol must be positive")
    G, n, resid = green_values(F, np.asarray(x, dtype=complex)[None, :], tol, max_iter)
    return GreenEval(float(G[0]), n, float(resid), bool(resid <= tol))


def green_value_strict(F: HomPolyMap, x, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> GreenEval:
    ev = green_value(F, x, tol, max_iter)
    if not ev.converged:
        raise NoConvergence(f"residual {ev.residual:.3g} > tol {tol:.3g} after {ev.iterations} iterations")
    return ev


def invariance_residuals(F: HomPolyMap, X: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """|G(F(x)) - d G(x)| for each row of X (raw lifts, no renormalisation)."""
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    G0, _, r0 = green_values(F, X, tol)
    G1, _, r1 = green_values(F, F.evaluate(X), tol)
    if max(r0, r1) > tol:
        raise NoConvergence("Green function did not reach tolerance")
    return np.abs(G1 - F.degree * G0)


def invariance_residual(F: HomPolyMap, x, tol: float = DEFAULT_TOL) -> float:
    return float(invariance_residuals(F, np.asarray(x, dtype=complex)[None, :], tol)[0])


# ---------------------------------------------------------------------------
# base dynamics of fibered maps

def _base_step(F: HomPolyMap) -> Callable[[np.ndarray], np.ndarray]:
    def step(Z):
        X = np.zeros((Z.shape[0], 3), dtype=complex)
        X[:, :2] = Z
        return F.evaluate(X)[:, :2]
    return step


def base_term_bound(F: HomPolyMap) -> float:
    if F not in _base_bounds:
        rng = np.random.default_rng(54321)
        Z = rng.standard_normal((BOUND_SAMPLES, 2)) + 1j * rng.standard_normal((BOUND_SAMPLES, 2))
        Z /= np.max(np.abs(Z), axis=1, keepdims=True)
        low = float(np.min(np.max(np.abs(_base_step(F)(Z)), axis=1)))
        up = float(np.max(np.sum(np.abs(F.coeffs[:2]), axis=1)))
        _base_bounds[F] = max(np.log(up), -np.log(low), 0.0)
    return _base_bounds[F]


def base_green_values(F: HomPolyMap, Z: np.ndarray, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """G_theta on C^2: escape rate of the polynomial map (P, Q) of a fibered F.

    Negative inside the bounded basin of (0, 0), zero on its boundary, and
    ``-inf`` at the origin.
    """
    if not F.fibered:
        raise ValueError("base Green function needs a fibered map")
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    G, _, _ = _escape_sum(_base_step(F), Z, F.degree, base_term_bound(F), tol, max_iter)
    return G


def in_basin(F: HomPolyMap, Z: np.ndarray, max_iter: int = 500, small: float = 1e-8,
             big: float = 1e8) -> np.ndarray:
    """Bounded-orbit test for the basin A of (0,0) under (P, Q).

    Returns +1 (orbit tends to 0), -1 (orbit escapes) or 0 (undecided).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex)).copy()
    step = _base_step(F)
    verdict = np.zeros(Z.shape[0], dtype=int)
    live = np.ones(Z.shape[0], dtype=bool)
    for _ in range(max_iter):
        if not live.any():
            break
        Z[live] = step(Z[live])
        r = np.max(np.abs(Z), axis=1)
        inside = live & (r < small)
        out = live & ~(r < big)  # also catches overflow to inf/nan
        verdict[inside] = 1
        verdict[out] = -1
        live &= ~(inside | out)
    return verdict


# ---------------------------------------------------------------------------
# local potentials and grids

def embed_chart(chart: int, A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    X = np.ones((A.shape[0], 3), dtype=complex)
    X[:, list(CHART_AXES[chart])] = A
    return X


def local_potentials(F: HomPolyMap, chart: int, A: np.ndarray, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, float]:
    """Potential g of T on an affine chart: the Green function of the chart section.

    On chart 2 of a fibered map this is max{G_theta, 0}.
    """
    G, _, resid = green_values(F, embed_chart(chart, A), tol, max_iter)
    return G, resid


def local_potential(F: HomPolyMap, chart: int, p, tol: float = DEFAULT_TOL) -> float:
    G, resid = local_potentials(F, chart, np.asarray(p, dtype=complex)[None, :], tol)
    if resid > tol:
        raise NoConvergence(f"residual {resid:.3g} > tol")
    return float(G[0])


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    """Potential samples at the cell midpoints of a tensor grid.

    Axes are (Re z, Im z, Re w, Im w) of the affine chart; node k of axis i sits at
    ``box[i,0] + (k + 1/2) * h[i]``.
    """

    chart: int
    box: np.ndarray
    resolution: tuple[int, int, int, int]
    values: np.ndarray
    flagged: int = 0

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float).reshape(4, 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("grid box has an empty side")
        if tuple(self.values.shape) != tuple(self.resolution):
            raise ValueError("values shape does not match resolution")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite potential value")
        object.__setattr__(self, "box", box)

    @property
    def spacing(self) -> np.ndarray:
        return (self.box[:, 1] - self.box[:, 0]) / np.asarray(self.resolution)

    def axes(self) -> list[np.ndarray]:
        h = self.spacing
        return [self.box[i, 0] + (np.arange(n) + 0.5) * h[i] for i, n in enumerate(self.resolution)]

    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    # -- serialisation ------------------------------------------------
    _MAGIC = b"HDPG"

    def to_bytes(self) -> bytes:
        head = struct.pack("<4sIi8d4i", self._MAGIC, 1, self.chart, *self.box.ravel(), *self.resolution)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "PotentialGrid":
        fmt = "<4sIi8d4i"
        n = struct.calcsize(fmt)
        magic, version, chart, *rest = struct.unpack(fmt, raw[:n])
        if magic != cls._MAGIC or version != 1:
            raise ValueError("not a potential grid file")
        box = np.array(rest[:8]).reshape(4, 2)
        res = tuple(int(v) for v in rest[8:])
        values = np.frombuffer(raw[n:], dtype="<f8").reshape(res).copy()
        return cls(chart, box, res, values)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "PotentialGrid":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path: str | Path) -> None:
        ax = np.meshgrid(*self.axes(), indexing="ij")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re_z", "im_z", "re_w", "im_w", "g"])
            for row in zip(*(a.ravel() for a in ax), self.values.ravel()):
                wr.writerow([repr(float(v)) for v in row])


def grid_nodes(box, resolution) -> np.ndarray:
    """Affine chart points (z, w) at the cell midpoints, shape ``resolution + (2,)``."""
    box = np.asarray(box, dtype=float).reshape(4, 2)
    h = (box[:, 1] - box[:, 0]) / np.asarray(resolution)
    ax = [box[i, 0] + (np.arange(n) + 0.5) * h[i] for i, n in enumerate(resolution)]
    U, V, S, T = np.meshgrid(*ax, indexing="ij", sparse=True)
    return np.stack(np.broadcast_arrays(U + 1j * V, S + 1j * T), axis=-1)


def _chunks(n: int, size: int):
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def potential_grid(F: HomPolyMap, chart: int, box, resolution, tol: float = DEFAULT_TOL,
                   workers: int = 1, max_flag_fraction: float = 1e-3) -> PotentialGrid:
    """Tabulate ``local_potentials`` on the midpoint grid of ``box``.

    Node values do not depend on ``workers``: each node is evaluated by the same
    elementwise operations whatever the batching.
    """
    resolution = tuple(int(r) for r in resolution)
    if min(resolution) < 16:
        raise ValueError("resolution must be >= 16 per axis")
    pts = grid_nodes(box, resolution).reshape(-1, 2)
    out = np.empty(pts.shape[0])
    flags = np.zeros(pts.shape[0], dtype=bool)

    def fill(lo_hi):
        lo, hi = lo_hi
        G, resid = local_potentials(F, chart, pts[lo:hi], tol)
        out[lo:hi] = G
        flags[lo:hi] = resid > tol

    chunks = _chunks(pts.shape[0], 65536)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(fill, chunks))
    else:
        for c in chunks:
            fill(c)
    nflag = int(flags.sum())
    if nflag > max_flag_fraction * pts.shape[0]:
        raise NoConvergence(f"{nflag} of {pts.shape[0]} grid nodes did not converge")
    return PotentialGrid(chart, np.asarray(box, dtype=float), resolution, out.reshape(resolution), nflag)


def grid_from_function(g: Callable[[np.ndarray, np.ndarray], np.ndarray], box, resolution,
                       chart: int = 2) -> PotentialGrid:
    """Grid of an explicit potential ``g(z, w)`` (vectorised over complex arrays)."""
    resolution = tuple(int(r) for r in resolution)
    nodes = grid_nodes(box, resolution)
    vals = np.asarray(g(nodes[..., 0], nodes[..., 1]), dtype=float)
    return PotentialGrid(chart, np.asarray(box, dtype=float), resolution, np.broadcast_to(vals, resolution).copy())
