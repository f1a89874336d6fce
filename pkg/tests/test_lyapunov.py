import numpy as np
import pytest

from holodyn.errors import CriticalHit, InconsistentCocycle, NoSplitting
from holodyn.lyapunov import (LyapunovEstimate, batch_mean_se, exponent_pair, fiber_angles, finite_time_exponents,
                              fs_to_chart, line_distance, orbit_segments, stable_direction, stable_directions,
                              sum_exponents, top_exponent, vector_growth)
from holodyn.measures import PointCloudMeasure, sample_equilibrium
from holodyn.projspace import normalize, power_map

LOG2, LOG4 = np.log(2), np.log(4)


@pytest.fixture(scope="module")
def lattes_est(lattes, lattes_cloud):
    return exponent_pair(lattes, lattes_cloud, 40)


@pytest.fixture(scope="module")
def power_est(power2, power_cloud):
    return exponent_pair(power2, power_cloud, 40)


def test_power_map_exponents(power_est):
    assert abs(power_est.lambda1 - LOG2) <= max(3 * power_est.se1, 1e-8)
    assert abs(power_est.lambda2 - LOG2) <= max(3 * power_est.se2, 1e-8)


def test_power_sum_on_torus(power2, power_cloud):
    s, se = sum_exponents(power2, power_cloud)
    assert abs(s - 2 * LOG2) <= max(3 * se, 1e-12)


def test_sum_scales_with_degree():
    s2, _ = sum_exponents(power_map(2), sample_equilibrium(power_map(2), normalize([1, 1, 1]), 12, 2000, 1))
    s4, _ = sum_exponents(power_map(4), sample_equilibrium(power_map(4), normalize([1, 1, 1]), 12, 2000, 1))
    assert s4 / s2 == pytest.approx(LOG4 / LOG2, rel=1e-10)


def test_lattes_exponents(lattes_est):
    assert abs(lattes_est.lambda2 - LOG2) <= 0.05
    assert abs(lattes_est.lambda1 - LOG4) <= 0.05
    assert lattes_est.lambda1 / lattes_est.lambda2 == pytest.approx(2.0, rel=0.05)
    assert abs(lattes_est.sum_via_det - 1.5 * LOG4) <= 0.05


def test_estimate_invariants(lattes_est, power_est):
    for est in (lattes_est, power_est):
        assert est.ordered() and est.consistent() and est.above_floor()


def test_sum_exponents_cloud_estimator(lattes, lattes_cloud, lattes_est):
    s, se = sum_exponents(lattes, lattes_cloud)
    assert abs(s - 1.5 * LOG4) <= 4 * se
    assert abs(s - lattes_est.sum_via_det) <= 4 * (se + lattes_est.se_det)


def test_top_exponent_converges_in_n(lattes, lattes_cloud):
    a, sa = top_exponent(lattes, lattes_cloud, 20)
    b, sb = top_exponent(lattes, lattes_cloud, 40)
    assert abs(a - b) <= 2 * max(sa, sb) + 1e-3


def test_top_exponent_needs_long_orbits(lattes, lattes_cloud):
    with pytest.raises(ValueError):
        top_exponent(lattes, lattes_cloud, 10)


def test_chart_independence(lattes, lattes_cloud):
    base = exponent_pair(lattes, lattes_cloud, 20)
    for chart in range(3):
        est = exponent_pair(lattes, lattes_cloud, 20, force_chart=chart)
        assert abs(est.lambda1 - base.lambda1) < base.se1 + 1e-12
        assert abs(est.lambda2 - base.lambda2) < base.se2 + 1e-12


def test_random_vectors_grow_at_top_rate(lattes, lattes_cloud, lattes_est):
    rng = np.random.default_rng(3)
    seg = orbit_segments(lattes, lattes_cloud, 40, 5)
    V = rng.standard_normal((len(lattes_cloud), 2)) + 1j * rng.standard_normal((len(lattes_cloud), 2))
    g = vector_growth(lattes, seg, V)
    m, se = batch_mean_se(g)
    # the O(1/n) projection of v onto the fast direction is the only bias
    assert abs(m - lattes_est.lambda1) <= 2 * np.hypot(se, lattes_est.se1) + 2.0 / 40


def test_stable_direction_power_map(power2, power_est):
    with pytest.raises(NoSplitting):
        stable_direction(power2, normalize([1, 1, 1]), 30, power_est)


def test_stable_direction_equivariance(lattes, lattes_est):
    cloud = sample_equilibrium(lattes, normalize([0.3 + 0.1j, 0.7 - 0.2j, 1.0]), 20, 1000, 8)
    defects = []
    for n in (10, 30):
        seg = orbit_segments(lattes, cloud, n + 1, 9)
        vs, defect, _ = stable_directions(lattes, seg, n)
        defects.append(np.median(defect))
        if n == 30:
            assert np.mean(defect <= 0.05) >= 0.9
            assert np.mean(fiber_angles(seg[0], vs) >= 0.1) >= 0.9
    assert defects[1] < defects[0]


def test_stable_direction_single_point(lattes, lattes_est):
    cloud = sample_equilibrium(lattes, normalize([0.3 + 0.1j, 0.7 - 0.2j, 1.0]), 20, 1000, 8)
    seg = orbit_segments(lattes, cloud, 31, 9)
    x = normalize(seg[0][0])
    path = [s[:1] for s in seg]
    v, rep = stable_direction(lattes, x, 30, lattes_est, path=path)
    assert np.linalg.norm(v) == pytest.approx(1.0) and rep.defect <= 0.05


def test_line_distance():
    u = np.array([[1, 0], [1, 1j]], dtype=complex)
    assert np.allclose(line_distance(u, 3j * u), 0)
    assert line_distance(np.array([[1, 0]]), np.array([[0, 1]]))[0] == pytest.approx(1.0)


def test_fs_to_chart_unit(lattes_cloud):
    V = np.ones((len(lattes_cloud), 2), dtype=complex)
    W = fs_to_chart(lattes_cloud.X, V)
    assert np.allclose(np.linalg.norm(W, axis=1), 1)


def test_inconsistent_cocycle_detected(lattes, lattes_cloud, monkeypatch):
    import holodyn.lyapunov as ly
    real = ly.log_det_samples
    monkeypatch.setattr(ly, "log_det_samples", lambda F, X: real(F, X) + 0.1)
    with pytest.raises(InconsistentCocycle):
        ly.exponent_pair(lattes, lattes_cloud, 20)


def test_critical_hit(power2):
    cloud = PointCloudMeasure(np.array([[0, 0, 1]] * 10 + [[1, 1, 1]] * 990, dtype=complex), np.full(1000, 1e-3))
    with pytest.raises(CriticalHit):
        sum_exponents(power2, cloud)


def test_finite_time_exponents_shape(lattes, lattes_cloud):
    l1, l2 = finite_time_exponents(lattes, lattes_cloud, 20)
    assert l1.shape == l2.shape == (len(lattes_cloud),) and np.all(l1 >= l2 - 1e-12)


def test_record_fields(lattes_est):
    rec = lattes_est.record()
    for k in ("map", "lambda1", "lambda2", "se1", "se2", "sum_via_det", "n", "N", "seed"):
        assert k in rec


def test_deterministic(lattes, lattes_cloud):
    a = exponent_pair(lattes, lattes_cloud, 20)
    b = exponent_pair(lattes, lattes_cloud, 20)
    assert a == b
