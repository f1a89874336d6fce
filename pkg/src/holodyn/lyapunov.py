"""Lyapunov exponents of the equilibrium measure from derivative cocycles.

Orbit segments are taken from the natural extension: each cloud point x_0 is
continued by a random backward walk x_-1, ..., x_-L, and the cocycle is
evaluated forward along x_-L -> ... -> x_0.  Backward steps contract, so the
segment is an accurate orbit; a forward iteration of x_0 would leave the
repelling support after ~log(1/eps)/lambda_1 steps.

Differentials are expressed in Fubini-Study orthonormal frames (``fs_matrices``),
which makes every quantity chart independent.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CriticalHit, InconsistentCocycle, NoSplitting
from .measures import PointCloudMeasure, backward_walks
from .projspace import CHART_AXES, HomPoint, HomPolyMap, eval_map_array, fs_log_det_correction, fs_matrices, fs_root, chart_matrices

N_BATCHES = 32
DEFAULT_N = 40
DEFAULT_BURN_IN = 10
DET_FLOOR = 1e-300
MAX_DROP_FRACTION = 5e-3
SPLIT_FLOOR = 1e-9
# walks used for orbit segments draw from a stream disjoint from the sampling walks
SEGMENT_STEP_OFFSET = 1 << 20


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda1: float
    lambda2: float
    orbit_len: int
    sample_count: int
    se1: float
    se2: float
    sum_via_det: float
    se_det: float = 0.0
    dropped: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return int(self.meta.get("degree", 0))

    def ordered(self) -> bool:
        return self.lambda1 >= self.lambda2 - self.se1 - self.se2

    def consistent(self) -> bool:
        return abs(self.lambda1 + self.lambda2 - self.sum_via_det) <= 3 * (self.se1 + self.se2) + 1e-9

    def above_floor(self, d: int | None = None) -> bool:
        d = d or self.degree
        return self.lambda2 >= 0.5 * np.log(d) - 3 * self.se2 - 1e-12

    def record(self) -> dict:
        rec = asdict(self)
        meta = rec.pop("meta")
        return {"map": meta.get("map", ""), **rec, "n": self.orbit_len, "N": self.sample_count,
                "seed": meta.get("seed")}


def batch_mean_se(values: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error (fixed, in-order batches)."""
    values = np.asarray(values, dtype=float)
    batches = np.array_split(values, n_batches)
    means = np.array([b.mean() for b in batches if b.size])
    return float(values.mean()), float(means.std(ddof=1) / np.sqrt(len(means)))


def _charts(X: np.ndarray, force_chart: int | None) -> np.ndarray:
    if force_chart is None:
        return np.argmax(np.abs(X), axis=1)
    return np.full(X.shape[0], force_chart)


def step_matrices(F: HomPolyMap, X: np.ndarray, Y: np.ndarray, force_chart: int | None = None) -> np.ndarray:
    """FS-frame differentials at X, with the image frame taken in the chart of Y = F(X).

    Consecutive steps then share the frame at each intermediate point.
    """
    B, _ = fs_matrices(F, X, src=_charts(X, force_chart), dst=_charts(Y, force_chart))
    return B


def orbit_segments(F: HomPolyMap, cloud: PointCloudMeasure, length: int, seed: int) -> list[np.ndarray]:
    """Forward-ordered orbit segments ``[x_-L, ..., x_0]`` ending at the cloud points."""
    _, path = backward_walks(F, cloud.X, length, seed, record=True, step_offset=SEGMENT_STEP_OFFSET)
    return path[::-1]


def qr_growth(F: HomPolyMap, segment: list[np.ndarray], burn_in: int,
              force_chart: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accumulated log|R_11|, log|R_22| along the segments after ``burn_in`` steps.

    Returns the two sums per orbit and a mask of orbits that met a critical point.
    """
    N = segment[0].shape[0]
    Q = np.broadcast_to(np.eye(2, dtype=complex), (N, 2, 2)).copy()
    acc = np.zeros((N, 2))
    critical = np.zeros(N, dtype=bool)
    for k in range(len(segment) - 1):
        B = step_matrices(F, segment[k], segment[k + 1], force_chart)
        Q, R = np.linalg.qr(B @ Q)
        diag = np.abs(np.stack([R[:, 0, 0], R[:, 1, 1]], axis=1))
        critical |= diag.min(axis=1) < DET_FLOOR
        if k >= burn_in:
            with np.errstate(divide="ignore"):
                acc += np.log(np.maximum(diag, DET_FLOOR))
    return acc[:, 0], acc[:, 1], critical


def _check_drops(dropped: int, total: int) -> None:
    if dropped > MAX_DROP_FRACTION * total:
        raise CriticalHit(f"{dropped} of {total} samples hit the critical set")


def log_det_samples(F: HomPolyMap, X: np.ndarray) -> np.ndarray:
    """log |det df| in Fubini-Study frames at the rows of X."""
    A, a, b, _ = chart_matrices(F, X)
    det = np.abs(A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0])
    with np.errstate(divide="ignore"):
        return np.log(det) + fs_log_det_correction(a, b)


def sum_exponents(F: HomPolyMap, cloud: PointCloudMeasure) -> tuple[float, float]:
    """lambda_1 + lambda_2 as the mean of log|det df| over the cloud, with its standard error."""
    vals = log_det_samples(F, cloud.X)
    keep = np.isfinite(vals) & (vals > np.log(DET_FLOOR))
    _check_drops(int((~keep).sum()), len(vals))
    return batch_mean_se(vals[keep])


def _segment_growth(F, cloud, n, burn_in, seed, force_chart, want_det=False):
    if n < 20:
        raise ValueError("orbit length n must be >= 20")
    seed = cloud.meta.get("seed", 0) if seed is None else seed
    seg = orbit_segments(F, cloud, n + burn_in, seed)
    g1, g2, crit = qr_growth(F, seg, burn_in, force_chart)
    _check_drops(int(crit.sum()), len(crit))
    det = None
    if want_det:
        # every segment point is mu-distributed, so the orbit average of log|det| is
        # an estimator of lambda_1 + lambda_2 with the same variance scale as the QR sums
        det = sum(log_det_samples(F, seg[k]) for k in range(burn_in, burn_in + n)) / n
        det = det[~crit]
    return g1[~crit] / n, g2[~crit] / n, int(crit.sum()), seed, det


def top_exponent(F: HomPolyMap, cloud: PointCloudMeasure, n: int = DEFAULT_N, burn_in: int = DEFAULT_BURN_IN,
                 seed: int | None = None) -> tuple[float, float]:
    l1, _, _, _, _ = _segment_growth(F, cloud, n, burn_in, seed, None)
    return batch_mean_se(l1)


def finite_time_exponents(F: HomPolyMap, cloud: PointCloudMeasure, n: int = DEFAULT_N,
                          burn_in: int = DEFAULT_BURN_IN, seed: int | None = None,
                          force_chart: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-orbit finite-time exponents (for histograms)."""
    l1, l2, _, _, _ = _segment_growth(F, cloud, n, burn_in, seed, force_chart)
    return l1, l2


def exponent_pair(F: HomPolyMap, cloud: PointCloudMeasure, n: int = DEFAULT_N, burn_in: int = DEFAULT_BURN_IN,
                  seed: int | None = None, force_chart: int | None = None,
                  check: bool = True) -> LyapunovEstimate:
    """(lambda_1, lambda_2) by QR-reorthonormalised growth along natural-extension segments."""
    l1, l2, dropped, seed, det = _segment_growth(F, cloud, n, burn_in, seed, force_chart, True)
    m1, se1 = batch_mean_se(l1)
    m2, se2 = batch_mean_se(l2)
    s, se_det = batch_mean_se(det)
    est = LyapunovEstimate(m1, m2, n, len(l1), se1, se2, s, se_det, dropped,
                           {"map": F.name, "seed": seed, "burn_in": burn_in, "degree": F.degree})
    if check and not est.consistent():
        raise InconsistentCocycle(
            f"lambda1 + lambda2 = {m1 + m2:.5f} but mean log|det| = {s:.5f} (3 sigma = {3 * (se1 + se2):.2g})")
    return est


# ---------------------------------------------------------------------------
# Oseledec directions

@dataclass(frozen=True)
class StableDirectionReport:
    defect: float
    singular_gap: float
    chart: int


def _normalized_product(mats: list[np.ndarray]) -> np.ndarray:
    M = np.broadcast_to(np.eye(2, dtype=complex), mats[0].shape).copy()
    for B in mats:
        M = B @ M
        M /= np.linalg.norm(M, axis=(1, 2), keepdims=True)
    return M


def _slow_vectors(mats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    M = _normalized_product(mats)
    _, sv, Vh = np.linalg.svd(M)
    return np.conj(Vh[:, -1, :]), sv[:, 0] / np.maximum(sv[:, 1], DET_FLOOR)


def line_distance(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Chordal distance between the complex lines spanned by rows of u and v in C^2."""
    wedge = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    return wedge / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))


def forward_path(F: HomPolyMap, x: np.ndarray, steps: int) -> list[np.ndarray]:
    path = [np.atleast_2d(x)]
    for _ in range(steps):
        path.append(eval_map_array(F, path[-1])[0])
    return path


def stable_directions(F: HomPolyMap, path: list[np.ndarray], n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slow right-singular vectors of the n-step cocycle at path[0], in FS frames.

    ``path`` holds at least n + 2 forward-ordered point arrays.  Returns the FS-frame
    vectors at path[0], the equivariance defects, and the singular gaps.
    """
    if len(path) < n + 2:
        raise ValueError("path too short for the equivariance check")
    mats = [step_matrices(F, path[k], path[k + 1]) for k in range(n + 1)]
    vs0, gap = _slow_vectors(mats[:n])
    vs1, _ = _slow_vectors(mats[1:n + 1])
    pushed = (mats[0] @ vs0[..., None])[..., 0]
    return vs0, line_distance(pushed, vs1), gap


def fs_to_chart(X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Convert FS-frame tangent vectors at X into unit vectors of the max-modulus chart."""
    rows = np.arange(X.shape[0])
    c = np.argmax(np.abs(X), axis=1)
    a = X[rows[:, None], np.array(CHART_AXES)[c]] / X[rows, c][:, None]
    W = np.linalg.solve(fs_root(a), V[..., None])[..., 0]
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def require_splitting(est: LyapunovEstimate) -> None:
    # the absolute floor covers maps whose finite-time exponents are exact, where
    # the standard errors collapse to rounding noise
    if not est.lambda1 - est.lambda2 > 5 * (est.se1 + est.se2) + SPLIT_FLOOR:
        raise NoSplitting(f"lambda1 - lambda2 = {est.lambda1 - est.lambda2:.3g} is within "
                          f"5 sigma = {5 * (est.se1 + est.se2):.3g}; no Oseledec splitting")


def stable_direction(F: HomPolyMap, orbit_start: HomPoint, n: int, estimate: LyapunovEstimate,
                     path: list[np.ndarray] | None = None) -> tuple[np.ndarray, StableDirectionReport]:
    """v_s at ``orbit_start`` as a unit vector of its max-modulus chart.

    Without ``path`` the forward orbit is computed by iteration, which is only
    accurate while eps * exp(k lambda_1) stays small; pass a natural-extension
    segment for long orbits.
    """
    require_splitting(estimate)
    x = orbit_start.array[None, :]
    if path is None:
        path = forward_path(F, x, n + 1)
    vs, defect, gap = stable_directions(F, path, n)
    v = fs_to_chart(path[0], vs)[0]
    return v, StableDirectionReport(float(defect[0]), float(gap[0]), int(orbit_start.chart_hint))


def fiber_angles(path0: np.ndarray, vs_fs: np.ndarray) -> np.ndarray:
    """Angle between v_s (FS frame) and the fiber of [z:w:t] -> [z:w] through each point."""
    X = path0
    rows = np.arange(X.shape[0])
    c = np.argmax(np.abs(X), axis=1)
    axes = np.array(CHART_AXES)[c]
    xc = X[rows, c]
    # the fiber is t -> [x0 : x1 : t]; its homogeneous velocity is (0, 0, 1)
    V = np.zeros_like(X)
    V[:, 2] = 1.0
    da = (V[rows[:, None], axes] * xc[:, None] - X[rows[:, None], axes] * V[rows, c][:, None]) / xc[:, None] ** 2
    a = X[rows[:, None], axes] / xc[:, None]
    fib = (fs_root(a) @ da[..., None])[..., 0]
    cos = np.abs(np.sum(np.conj(fib) * vs_fs, axis=1)) / (np.linalg.norm(fib, axis=1) * np.linalg.norm(vs_fs, axis=1))
    return np.arccos(np.clip(cos, 0.0, 1.0))


def vector_growth(F: HomPolyMap, segment: list[np.ndarray], V: np.ndarray) -> np.ndarray:
    """(1/n) log |df^n v| along forward segments, for FS-frame vectors V at segment[0]."""
    v = V / np.linalg.norm(V, axis=1, keepdims=True)
    total = np.zeros(V.shape[0])
    for k in range(len(segment) - 1):
        v = (step_matrices(F, segment[k], segment[k + 1]) @ v[..., None])[..., 0]
        nv = np.linalg.norm(v, axis=1)
        total += np.log(nv)
        v /= nv[:, None]
    return total / (len(segment) - 1)
