import numpy as np
import pytest

from holodyn.errors import DegenerateFiber, ExceptionalStart, IllConditioned, SupportViolation
from holodyn.greenfn import base_green_values, grid_from_function
from holodyn import localmodel as lm
from holodyn.measures import (PointCloudMeasure, backward_walks, batched_roots, branch_choices, pair_cloud,
                              pair_cloud_se, preimages_fibered, random_preimages, roots_univariate, sample_equilibrium,
                              slice_pairing, trace_pairing)
from holodyn.projspace import chordal_distance_array, eval_map_array, normalize, normalize_array
from holodyn.testfn import TestFn, standard_suite

BOX = np.array([[-1.0, 1.0]] * 4)


def _match(found, expected, tol):
    found = list(found)
    for e in expected:
        k = int(np.argmin([abs(f - e) for f in found]))
        assert abs(found[k] - e) < tol
        found.pop(k)


def test_roots_examples():
    _match(roots_univariate([1, 0, -1]), [1, -1], 1e-14)
    _match(roots_univariate([1, 0, 1]), [1j, -1j], 1e-14)


def test_planted_roots(rng):
    for _ in range(20):
        r = rng.uniform(-1, 1, 8) + 1j * rng.uniform(-1, 1, 8)
        _match(roots_univariate(np.poly(r)), r, 1e-7)


def test_batched_roots_agree(rng):
    c = rng.standard_normal((50, 5)) + 1j * rng.standard_normal((50, 5))
    b = batched_roots(c)
    for row, roots in zip(c, b):
        assert np.allclose(np.sort_complex(roots), np.sort_complex(roots_univariate(row)), atol=1e-12)


def test_roots_rejects_bad_input():
    with pytest.raises(ValueError):
        roots_univariate([0, 1, 1])
    with pytest.raises(ValueError):
        roots_univariate(np.ones(18))


def test_roots_ill_conditioned():
    with pytest.raises(IllConditioned):
        roots_univariate([1e-300, 0, 1e300])


def test_power_map_preimages(power2):
    pre = preimages_fibered(power2, normalize([1, 1, 1]))
    assert len(pre) == 4
    expect = [normalize([1, a, b]) for a in (1, -1) for b in (1, -1)]
    for e in expect:
        assert any(p == e for p in pre)
    pre0 = preimages_fibered(power2, normalize([1, 1, 0]))
    assert len(pre0) == 4
    assert all(abs(p.coords[2]) < 1e-12 for p in pre0)
    bases = {(round(p.coords[1].real, 9), round(p.coords[1].imag, 9)) for p in pre0}
    assert len(bases) == 2


def test_lattes_preimages_forward_check(lattes, rng):
    for _ in range(10):
        p = normalize(rng.standard_normal(3) + 1j * rng.standard_normal(3))
        pre = preimages_fibered(lattes, p)
        assert len(pre) == 16
        X = np.array([q.array for q in pre])
        assert np.all(chordal_distance_array(eval_map_array(lattes, X)[0], p.array[None]) <= 1e-8)


def test_degenerate_fiber(lattes):
    with pytest.raises(DegenerateFiber):
        preimages_fibered(lattes, normalize([0, 0, 1]))


def test_branch_choices_are_reproducible():
    a = branch_choices(5, 3, 1000, 4)
    b = branch_choices(5, 3, 2000, 4)
    assert np.array_equal(a, b[:1000]) and a.min() >= 0 and a.max() < 16
    assert not np.array_equal(a, branch_choices(5, 4, 1000, 4))


def test_walks_independent_of_batching(lattes):
    start = np.repeat(normalize([0.3 + 0.1j, 0.7 - 0.2j, 1.0]).array[None], 200, axis=0)
    full, _ = backward_walks(lattes, start, 12, 9)
    part, _ = backward_walks(lattes, start[:50], 12, 9)
    assert np.array_equal(full[:50], part)


def test_power_cloud_is_haar_on_torus(power2):
    cloud = sample_equilibrium(power2, normalize([1, 1, 1]), 20, 100_000, 1)
    X = cloud.X
    assert np.allclose(np.abs(X), 1.0, atol=1e-12)
    lz = np.log(np.abs(X[:, 0] / X[:, 2]))
    assert abs(lz.mean()) <= 3 * lz.std() / np.sqrt(len(lz)) + 1e-15
    # Haar: first angular moments vanish
    m = np.mean(X[:, 0] / X[:, 2])
    assert abs(m) <= 4 / np.sqrt(len(X))
    assert pair_cloud(cloud, lambda X: np.ones(len(X))) == pytest.approx(1.0, abs=1e-12)


def test_lattes_cloud_on_basin_boundary(lattes_cloud, lattes):
    Z = lattes_cloud.X[:, :2] / lattes_cloud.X[:, 2:3]
    assert np.max(np.abs(base_green_values(lattes, Z))) <= 0.02


def test_exceptional_start(lattes, power2):
    with pytest.raises(ExceptionalStart):
        sample_equilibrium(lattes, normalize([0, 0, 1]), 10, 1000, 0)
    with pytest.raises(ExceptionalStart):
        sample_equilibrium(power2, normalize([1, 0, 1]), 10, 1000, 0)


def test_pair_cloud_trivial(lattes_cloud):
    assert pair_cloud(lattes_cloud, lambda X: np.zeros(len(X))) == 0.0
    assert pair_cloud(lattes_cloud, lambda X: np.ones(len(X))) == pytest.approx(1.0, abs=1e-12)


def test_independent_seeds_agree(lattes):
    phi = lambda X: np.abs(X[:, 0]) ** 2
    a, sa = pair_cloud_se(sample_equilibrium(lattes, normalize([0.3, 0.7, 1]), 20, 4000, 1), phi)
    b, sb = pair_cloud_se(sample_equilibrium(lattes, normalize([0.3, 0.7, 1]), 20, 4000, 2), phi)
    assert abs(a - b) <= 4 * np.hypot(sa, sb)


def test_pullback_invariance(lattes):
    """F pushes a depth-n cloud to a depth-(n-1) cloud: compare moments at 3 sigma."""
    start = normalize([0.3 + 0.1j, 0.7 - 0.2j, 1.0])
    deep = sample_equilibrium(lattes, start, 21, 8000, 4)
    pushed = PointCloudMeasure(eval_map_array(lattes, deep.X)[0], deep.weights)
    ref = sample_equilibrium(lattes, start, 20, 8000, 5)
    tests = [lambda X: np.abs(X[:, 0] / X[:, 2]) ** 2, lambda X: np.real(X[:, 1] / X[:, 2]),
             lambda X: np.imag(X[:, 0] * np.conj(X[:, 1])) / np.abs(X[:, 2]) ** 2]
    for f in tests:
        a, sa = pair_cloud_se(pushed, f)
        b, sb = pair_cloud_se(ref, f)
        assert abs(a - b) <= 3 * np.hypot(sa, sb)


def test_cloud_csv_roundtrip(tmp_path, lattes_cloud):
    lattes_cloud.to_csv(tmp_path / "c.csv")
    back = PointCloudMeasure.from_csv(tmp_path / "c.csv")
    assert np.array_equal(back.X, lattes_cloud.X) and back.meta == lattes_cloud.meta


def test_cloud_validation():
    with pytest.raises(ValueError):
        PointCloudMeasure(np.ones((2, 3)), np.array([0.5, 0.6]))


def _centered_phi():
    return TestFn((0.0, 0.0, 0.0, 0.0), (0.6, 0.6, 0.6, 0.6))


def test_slice_of_flat_potential():
    phi = _centered_phi()
    g = grid_from_function(lambda z, w: np.abs(z) ** 2, BOX, (32,) * 4)
    integral = lm.quad_omega(lambda u, v, s, t: phi(u, v, s, t) * np.ones_like(u + v + s + t), 32)
    full = np.sum(phi(*np.meshgrid(*g.axes(), indexing="ij", sparse=True))) * g.cell_volume()
    res = slice_pairing(g, phi, "W")
    assert res.value == pytest.approx(full, rel=2e-2)
    assert integral.value < full  # Omega is a proper part of the box
    zero = grid_from_function(lambda z, w: 0 * z.real, BOX, (16,) * 4)
    assert slice_pairing(zero, phi, "W").value == 0.0
    tr = trace_pairing(grid_from_function(lambda z, w: np.abs(z) ** 2 + np.abs(w) ** 2, BOX, (32,) * 4), phi)
    assert tr.value == pytest.approx(2 * full, rel=2e-2)
    assert trace_pairing(zero, phi).value == 0.0


def test_slice_matches_local_model():
    g = grid_from_function(lambda z, w: np.maximum(z.real + np.abs(w) ** 2, 0.0), BOX, (40,) * 4)
    for phi in standard_suite()[:2]:
        s = slice_pairing(g, phi, "W")
        c = lm.pair_T11(phi)
        assert abs(s.value - c.rhs) <= s.error_estimate + c.lhs_error + c.rhs_error + 1e-3 * max(abs(c.rhs), 1)
        t = trace_pairing(g, phi)
        c22 = lm.pair_T22(phi)
        tol = t.error_estimate + c.tolerance + c22.tolerance
        assert abs(t.value - (c.rhs + c22.rhs)) <= tol


def test_slice_refinement_stability():
    phi = standard_suite()[0]
    f = lambda z, w: np.maximum(z.real + np.abs(w) ** 2, 0.0)
    a = slice_pairing(grid_from_function(f, BOX, (24,) * 4), phi, "W")
    b = slice_pairing(grid_from_function(f, BOX, (48,) * 4), phi, "W")
    assert abs(a.value - b.value) <= a.error_estimate


def test_slice_linearity(rng):
    phi = standard_suite()[0]
    psi = standard_suite()[2]
    g1 = grid_from_function(lambda z, w: np.maximum(z.real + np.abs(w) ** 2, 0.0), BOX, (20,) * 4)
    g2 = grid_from_function(lambda z, w: np.abs(z - 0.1) ** 2 * np.abs(w), BOX, (20,) * 4)
    gs = grid_from_function(lambda z, w: np.maximum(z.real + np.abs(w) ** 2, 0.0)
                            + 0.7 * np.abs(z - 0.1) ** 2 * np.abs(w), BOX, (20,) * 4)
    a, b, s = (slice_pairing(g, phi, "Z").value for g in (g1, g2, gs))
    assert s == pytest.approx(a + 0.7 * b, rel=1e-10)
    both = TestFn(phi.center, phi.radius, 1.0, phi.power)
    p1 = slice_pairing(g1, both, "W").value
    p2 = slice_pairing(g1, both.scaled(-3.0), "W").value
    assert p2 == pytest.approx(-3 * p1, rel=1e-12)


def test_slice_support_violation():
    g = grid_from_function(lambda z, w: 0 * z.real, np.array([[-0.5, 0.5]] * 4), (16,) * 4)
    with pytest.raises(SupportViolation):
        slice_pairing(g, _centered_phi(), "W")
