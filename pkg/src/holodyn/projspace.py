"""Homogeneous coordinates on P^2, polynomial endomorphisms and their tangent maps.

Points are stored divided by their coordinate of largest modulus, so every
stored modulus is <= 1 and repeated evaluation of degree-d maps cannot
overflow.  Almost everything has a vectorised form operating on ``(N, 3)``
complex arrays; the scalar API (``HomPoint``, ``eval_map``, ...) wraps it.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateMap, Indeterminate, ZeroVector

ZERO_THRESHOLD = 1e-300
EQ_TOL = 1e-12
TIE_RTOL = 8 * np.finfo(float).eps
MAX_DEGREE = 8

# affine coordinates of chart c are the homogeneous coordinates other than c
CHART_AXES = ((1, 2), (0, 2), (0, 1))


def normalize_array(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Divide each row of ``X`` by its max-modulus entry.

    Returns the normalised rows and the chart hints.  Rows that are (numerically)
    zero raise ``ZeroVector``.
    """
    X = np.asarray(X, dtype=complex)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    mod = np.abs(X)
    top = mod.max(axis=1)
    # lowest index among entries tied with the maximum up to rounding, so that an
    # already normalised row keeps its pivot
    hint = np.argmax(mod >= top[:, None] * (1.0 - TIE_RTOL), axis=1)
    rows = np.arange(X.shape[0])
    piv = X[rows, hint]
    if np.any(top < ZERO_THRESHOLD) or not np.all(np.isfinite(X)):
        raise ZeroVector("cannot normalise a zero (or non-finite) coordinate triple")
    out = X / piv[:, None]
    out[rows, hint] = 1.0
    big = np.abs(out) > 1.0
    if big.any():
        out[big] /= np.abs(out[big])
    if single:
        return out[0], hint[0]
    return out, hint


@dataclass(frozen=True, eq=False)
class HomPoint:
    coords: tuple[complex, complex, complex]
    chart_hint: int

    def __eq__(self, other):
        if not isinstance(other, HomPoint):
            return NotImplemented
        return bool(np.max(np.abs(self.array - other.array)) <= EQ_TOL)

    __hash__ = None

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=complex)

    def affine(self, chart: int | None = None) -> np.ndarray:
        """Affine coordinates in ``chart`` (default: the chart hint)."""
        c = self.chart_hint if chart is None else chart
        x = self.array
        if abs(x[c]) < ZERO_THRESHOLD:
            raise ZeroVector(f"point has no coordinates in chart {c}")
        return x[list(CHART_AXES[c])] / x[c]

    @classmethod
    def from_affine(cls, a: Sequence[complex], chart: int = 2) -> "HomPoint":
        x = np.ones(3, dtype=complex)
        x[list(CHART_AXES[chart])] = a
        return normalize(x)


def normalize(raw: Sequence[complex]) -> HomPoint:
    x, hint = normalize_array(np.asarray(raw, dtype=complex))
    return HomPoint(tuple(complex(v) for v in x), int(hint))


def points_to_array(points: Sequence[HomPoint]) -> np.ndarray:
    return np.array([p.coords for p in points], dtype=complex).reshape(-1, 3)


def array_to_points(X: np.ndarray) -> list[HomPoint]:
    Xn, hint = normalize_array(X)
    return [HomPoint(tuple(complex(v) for v in row), int(h)) for row, h in zip(Xn, hint)]


def monomial_exponents(degree: int, nvars: int = 3) -> np.ndarray:
    """All exponent tuples of total degree ``degree``, lexicographically descending."""
    exps = [e for e in itertools.product(range(degree, -1, -1), repeat=nvars) if sum(e) == degree]
    return np.array(exps, dtype=int)


def _accumulate(mono: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    # fixed-order sum over monomials: results do not depend on how rows are batched
    out = np.zeros((mono.shape[0], coeffs.shape[0]), dtype=complex)
    for m in np.flatnonzero(np.any(coeffs != 0, axis=0)):
        out += mono[:, m, None] * coeffs[None, :, m]
    return out


@dataclass(frozen=True, eq=False)
class HomPolyMap:
    """Three homogeneous polynomials of degree ``degree`` in (z, w, t).

    ``coeffs[c, m]`` is the coefficient of the monomial ``exps[m]`` in component c.
    A fibered map has the form [P(z,w) : Q(z,w) : c t^d].
    """

    degree: int
    coeffs: np.ndarray
    fibered: bool = False
    name: str = ""
    exps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.degree
        if not (2 <= d <= MAX_DEGREE):
            raise ValueError(f"degree must be in [2, {MAX_DEGREE}], got {d}")
        exps = monomial_exponents(d)
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (3, len(exps)):
            raise ValueError(f"coefficient table must have shape (3, {len(exps)})")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite coefficient")
        if np.any(np.all(coeffs == 0, axis=1)):
            raise ValueError("a component is identically zero")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "exps", exps)
        if self.fibered:
            uses_t = exps[:, 2] > 0
            if np.any(coeffs[:2, uses_t] != 0):
                raise ValueError("fibered map: first two components may not involve t")
            pure_t = exps[:, 2] == d
            if np.any(coeffs[2, ~pure_t] != 0) or coeffs[2, pure_t][0] == 0:
                raise ValueError("fibered map: third component must be c*t^d with c != 0")

    # -- constructors -------------------------------------------------
    @classmethod
    def from_terms(cls, degree: int, components: Sequence[Mapping[tuple, complex]], **kw) -> "HomPolyMap":
        exps = monomial_exponents(degree)
        index = {tuple(e): m for m, e in enumerate(exps)}
        coeffs = np.zeros((3, len(exps)), dtype=complex)
        for c, terms in enumerate(components):
            for e, val in terms.items():
                e = tuple(int(v) for v in e)
                if e not in index:
                    raise ValueError(f"exponent {e} is not homogeneous of degree {degree}")
                coeffs[c, index[e]] += val
        return cls(degree, coeffs, **kw)

    @classmethod
    def suspension(cls, P: Sequence[complex], Q: Sequence[complex], t_coeff: complex = 1.0,
                   name: str = "") -> "HomPolyMap":
        """Suspension [P : Q : c t^d] of the binary forms P, Q.

        ``P[i]`` is the coefficient of z^i w^(d-i).
        """
        d = len(P) - 1
        if len(Q) != d + 1:
            raise ValueError("P and Q must have the same degree")
        comps = [
            {(i, d - i, 0): P[i] for i in range(d + 1) if P[i] != 0},
            {(i, d - i, 0): Q[i] for i in range(d + 1) if Q[i] != 0},
            {(0, 0, d): t_coeff},
        ]
        return cls.from_terms(d, comps, fibered=True, name=name)

    # -- evaluation ---------------------------------------------------
    def _powers(self, X: np.ndarray) -> np.ndarray:
        d = self.degree
        pw = np.empty(X.shape + (d + 1,), dtype=complex)
        pw[..., 0] = 1.0
        for e in range(1, d + 1):
            pw[..., e] = pw[..., e - 1] * X
        return pw

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Raw homogeneous images of the rows of ``X`` (no normalisation)."""
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        pw = self._powers(X)
        e = self.exps
        mono = pw[:, 0, e[:, 0]] * pw[:, 1, e[:, 1]] * pw[:, 2, e[:, 2]]
        return _accumulate(mono, self.coeffs)

    def jacobian(self, X: np.ndarray) -> np.ndarray:
        """Homogeneous Jacobian, ``J[n, c, m] = dF_c/dx_m`` at row n."""
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        pw = self._powers(X)
        e = self.exps
        J = np.empty((X.shape[0], 3, 3), dtype=complex)
        for m in range(3):
            em = e.copy()
            em[:, m] -= 1
            ok = em[:, m] >= 0
            em = em[ok]
            mono = pw[:, 0, em[:, 0]] * pw[:, 1, em[:, 1]] * pw[:, 2, em[:, 2]]
            J[:, :, m] = _accumulate(mono, self.coeffs[:, ok] * e[ok, m])
        return J

    def coefficient_bound(self) -> float:
        """max_c sum |coeffs| -- bounds |F(x)|_inf for |x|_inf <= 1."""
        return float(np.max(np.sum(np.abs(self.coeffs), axis=1)))

    # -- fibered structure -------------------------------------------
    def base_forms(self) -> tuple[np.ndarray, np.ndarray]:
        """Binary forms P, Q of a fibered map, ``P[i]`` the coefficient of z^i w^(d-i)."""
        if not self.fibered:
            raise ValueError("map is not fibered")
        d = self.degree
        P = np.zeros(d + 1, dtype=complex)
        Q = np.zeros(d + 1, dtype=complex)
        for m, (i, j, k) in enumerate(self.exps):
            if k == 0:
                P[i] = self.coeffs[0, m]
                Q[i] = self.coeffs[1, m]
        return P, Q

    def t_coefficient(self) -> complex:
        return complex(self.coeffs[2, np.flatnonzero(self.exps[:, 2] == self.degree)[0]])


# ---------------------------------------------------------------------------
# bundled maps

def power_map(d: int) -> HomPolyMap:
    return HomPolyMap.from_terms(
        d, [{(d, 0, 0): 1}, {(0, d, 0): 1}, {(0, 0, d): 1}], fibered=True, name=f"power{d}")


def lattes4_forms() -> tuple[np.ndarray, np.ndarray]:
    """theta(zeta) = (zeta^2 + 1)^2 / (4 zeta (zeta^2 - 1)) as binary forms of degree 4."""
    P = np.array([1, 0, 2, 0, 1], dtype=complex)      # w^4 + 2 z^2 w^2 + z^4
    Q = np.array([0, -4, 0, 4, 0], dtype=complex)     # 4 z^3 w - 4 z w^3
    return P, Q


def lattes4_suspension() -> HomPolyMap:
    P, Q = lattes4_forms()
    return HomPolyMap.suspension(P, Q, name="lattes4susp")


# ---------------------------------------------------------------------------
# scalar API

def eval_map_array(F: HomPolyMap, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Y = F.evaluate(X)
    try:
        return normalize_array(Y)
    except ZeroVector as exc:
        raise Indeterminate(f"map {F.name or '?'} vanishes at an input point") from exc


def eval_map(F: HomPolyMap, p: HomPoint) -> HomPoint:
    Y, hint = eval_map_array(F, p.array[None, :])
    return HomPoint(tuple(complex(v) for v in Y[0]), int(hint[0]))


@dataclass(frozen=True)
class TangentFrame:
    base: HomPoint
    chart: int
    image_chart: int
    matrix: np.ndarray


def chart_matrices(F: HomPolyMap, X: np.ndarray, src: np.ndarray | int | None = None,
                   dst: np.ndarray | int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Differential of F in affine charts, vectorised over the rows of ``X``.

    ``src``/``dst`` default to the max-modulus charts of X and F(X).  Returns
    ``(A, a, b, FX)``: the (N, 2, 2) matrices, affine source and image
    coordinates, and the raw images.
    """
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    N = X.shape[0]
    rows = np.arange(N)
    FX = F.evaluate(X)
    src = np.argmax(np.abs(X), axis=1) if src is None else np.broadcast_to(src, (N,))
    dst = np.argmax(np.abs(FX), axis=1) if dst is None else np.broadcast_to(dst, (N,))
    axes = np.array(CHART_AXES)
    # rescale so that the source chart coordinate is exactly 1
    xs = X[rows, src]
    Xc = X / xs[:, None]
    FX = FX / xs[:, None] ** F.degree
    J = F.jacobian(Xc)
    fd = FX[rows, dst]
    if np.any(np.abs(fd) < ZERO_THRESHOLD):
        raise Indeterminate("image has no coordinates in the requested chart")
    sa, da = axes[src], axes[dst]
    Fk = FX[rows[:, None], da]                        # (N, 2)
    Jk = J[rows[:, None, None], da[:, :, None], sa[:, None, :]]  # (N, 2, 2)
    Jd = J[rows[:, None], dst[:, None], sa]           # (N, 2)
    A = (Jk * fd[:, None, None] - Fk[:, :, None] * Jd[:, None, :]) / fd[:, None, None] ** 2
    a = Xc[rows[:, None], sa]
    b = Fk / fd[:, None]
    return A, a, b, FX


def tangent_map(F: HomPolyMap, p: HomPoint) -> TangentFrame:
    A, _, _, FX = chart_matrices(F, p.array[None, :], src=p.chart_hint)
    dst = int(np.argmax(np.abs(FX[0])))
    return TangentFrame(p, p.chart_hint, dst, A[0])


def fs_root(a: np.ndarray) -> np.ndarray:
    """Hermitian square root L(a) of the Fubini-Study metric in affine coordinates.

    ``|L(a) v|^2 = (|v|^2 (1+|a|^2) - |<a, v>|^2) / (1+|a|^2)^2``.
    """
    a = np.atleast_2d(a)
    s = np.sum(np.abs(a) ** 2, axis=1)
    r = 1.0 / np.sqrt(1.0 + s)
    # c = (1 - (1+s)^(-1/2)) / s, written to stay accurate as s -> 0
    c = 1.0 / (np.sqrt(1.0 + s) * (1.0 + np.sqrt(1.0 + s)))
    aa = a[:, :, None] * np.conj(a[:, None, :])
    L = np.eye(2)[None] - c[:, None, None] * aa
    return r[:, None, None] * L


def fs_log_det_correction(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log|det L(b)| - log|det L(a)|, with det L(x) = (1+|x|^2)^(-3/2)."""
    sa = np.sum(np.abs(np.atleast_2d(a)) ** 2, axis=1)
    sb = np.sum(np.abs(np.atleast_2d(b)) ** 2, axis=1)
    return 1.5 * (np.log1p(sa) - np.log1p(sb))


def fs_matrices(F: HomPolyMap, X: np.ndarray, src=None, dst=None) -> tuple[np.ndarray, np.ndarray]:
    """Differentials in orthonormal Fubini-Study frames: L(b) A L(a)^-1.

    These do not depend on the charts used; returns the matrices and the raw images.
    """
    A, a, b, FX = chart_matrices(F, X, src, dst)
    La = fs_root(a)
    Lb = fs_root(b)
    B = Lb @ A @ np.linalg.inv(La)
    return B, FX


def chordal_distance_array(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """sin of the Fubini-Study angle, via |x ^ y| / (|x| |y|) (stable near 0)."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    # scale rows first; moduli are <= 1 after normalisation anyway
    X = X / np.max(np.abs(X), axis=1, keepdims=True)
    Y = Y / np.max(np.abs(Y), axis=1, keepdims=True)
    wedge = 0.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        wedge = wedge + np.abs(X[:, i] * Y[:, j] - X[:, j] * Y[:, i]) ** 2
    nx = np.sum(np.abs(X) ** 2, axis=1)
    ny = np.sum(np.abs(Y) ** 2, axis=1)
    return np.minimum(np.sqrt(wedge / (nx * ny)), 1.0)


def chordal_distance(p: HomPoint, q: HomPoint) -> float:
    return float(chordal_distance_array(p.array[None], q.array[None])[0])


# ---------------------------------------------------------------------------
# nondegeneracy

@dataclass(frozen=True)
class NondegeneracyReport:
    passed: bool
    min_ratio: float
    trials: int
    floor: float


def random_points(rng: np.random.Generator, n: int, zero_prob: float = 1 / 3) -> np.ndarray:
    """Gaussian points of C^3, each coordinate zeroed with probability ``zero_prob``.

    Zeroing puts mass on coordinate subspaces, where common zeros of the
    components typically sit.
    """
    X = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
    mask = rng.random((n, 3)) < zero_prob
    mask[mask.all(axis=1), rng.integers(0, 3)] = False
    X[mask] = 0.0
    return X


def check_nondegenerate(F: HomPolyMap, trials: int = 1000, seed: int = 0,
                        floor: float = 1e-6) -> NondegeneracyReport:
    if trials < 100:
        raise ValueError("need at least 100 trials")
    rng = np.random.default_rng(seed)
    X, _ = normalize_array(random_points(rng, trials))
    Y = F.evaluate(X)
    ratio = np.max(np.abs(Y), axis=1)  # |x|_inf = 1 after normalisation
    if np.any(ratio < ZERO_THRESHOLD):
        raise DegenerateMap(f"map {F.name or '?'} has a common zero off the origin "
                            f"({int(np.sum(ratio < ZERO_THRESHOLD))} of {trials} trials)")
    m = float(ratio.min())
    return NondegeneracyReport(m > floor, m, trials, floor)


# ---------------------------------------------------------------------------
# map specification files

def map_to_dict(F: HomPolyMap) -> dict:
    comps = []
    for c in range(3):
        terms = [{"exps": [int(v) for v in F.exps[m]], "re": float(F.coeffs[c, m].real),
                  "im": float(F.coeffs[c, m].imag)}
                 for m in range(len(F.exps)) if F.coeffs[c, m] != 0]
        comps.append(terms)
    out = {"degree": F.degree, "components": comps, "fibered": bool(F.fibered)}
    if F.name:
        out["name"] = F.name
    return out


def map_from_dict(spec: Mapping) -> HomPolyMap:
    """Parse a map specification.

    Three components give a map of P^2.  Two components in (z, w) describe a
    base map theta of P^1 and yield its suspension [P : Q : t^d].
    """
    d = int(spec["degree"])
    comps = spec["components"]
    name = spec.get("name", "")
    parsed = [{tuple(term["exps"]): complex(term.get("re", 0.0), term.get("im", 0.0)) for term in comp}
              for comp in comps]
    if len(parsed) == 2:
        P = np.zeros(d + 1, dtype=complex)
        Q = np.zeros(d + 1, dtype=complex)
        for arr, terms in zip((P, Q), parsed):
            for e, v in terms.items():
                if len(e) != 2 or sum(e) != d:
                    raise ValueError(f"base exponent {e} is not homogeneous of degree {d}")
                arr[e[0]] += v
        return HomPolyMap.suspension(P, Q, name=name)
    if len(parsed) != 3:
        raise ValueError("a map needs 3 components (or 2 for a base map)")
    return HomPolyMap.from_terms(d, parsed, fibered=bool(spec.get("fibered", False)), name=name)


def load_map(path: str | Path) -> HomPolyMap:
    path = Path(path)
    F = map_from_dict(json.loads(path.read_text()))
    if not F.name:
        object.__setattr__(F, "name", path.stem)
    return F


def dump_map(F: HomPolyMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(map_to_dict(F), indent=1) + "\n")


def newton_preimages(F: HomPolyMap, T: np.ndarray, X0: np.ndarray, tol: float = 1e-12,
                     max_iter: int = 30, det_floor: float = 1e-12,
                     residual_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Newton's method for F(x) = T row by row, in the charts of X0 and T.

    Returns the refined (normalised) points and a success mask: the Jacobian
    stayed invertible and the final chordal forward residual is <= residual_tol.
    """
    T, dst = normalize_array(np.atleast_2d(T))
    X0 = np.atleast_2d(np.asarray(X0, dtype=complex))
    N = X0.shape[0]
    rows = np.arange(N)
    src = np.argmax(np.abs(X0), axis=1)
    axes = np.array(CHART_AXES)
    X = X0 / X0[rows, src][:, None]
    target = T[rows[:, None], axes[dst]]
    ok = np.ones(N, dtype=bool)
    live = np.ones(N, dtype=bool)
    for _ in range(max_iter):
        if not live.any():
            break
        idx = np.flatnonzero(live)
        try:
            A, a, b, _ = chart_matrices(F, X[idx], src[idx], dst[idx])
        except Indeterminate:
            ok[idx] = False
            break
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        sing = ~(np.abs(det) > det_floor)
        ok[idx[sing]] = False
        live[idx[sing]] = False
        A = np.where(sing[:, None, None], np.eye(2), A)
        step = np.linalg.solve(A, (b - target[idx])[..., None])[..., 0]
        step[sing] = 0.0
        a = a - step
        X[idx[:, None], axes[src[idx]]] = a
        done = np.max(np.abs(step), axis=1) < tol
        live[idx[done]] = False
    Xn, _ = normalize_array(X)
    res = chordal_distance_array(F.evaluate(Xn), T)
    ok &= res <= residual_tol
    return Xn, ok
