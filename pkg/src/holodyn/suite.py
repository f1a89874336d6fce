"""Verification checks shared by the CLI ``verify`` command and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from . import greenfn, invbranch, localmodel, lyapunov, measures
from .errors import HolodynError, NoSplitting
from .projspace import HomPolyMap, load_map, normalize
from .testfn import TestFn, standard_suite

BUNDLED = ("power2", "power4", "lattes4", "lattes4susp")
DEFAULT_START = (0.3 + 0.1j, 0.7 - 0.2j, 1.0)


def bundled_map(name: str) -> HomPolyMap:
    ref = resources.files("holodyn") / "data" / f"{name}.map"
    with resources.as_file(ref) as path:
        return load_map(path)


@dataclass
class CheckResult:
    name: str
    anchor: str
    passed: bool
    details: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"check": self.name, "anchor": self.anchor, "verdict": "pass" if self.passed else "fail",
                "details": self.details}


@dataclass(frozen=True)
class Level:
    name: str
    count: int          # cloud size for exponents
    depth: int
    n: int
    orbits: int
    res4: int
    n_fns: int
    coupe_res: int
    grid_res: int
    tol_lattes: float   # tolerance on lambda_1, lambda_2 for the Lattes suspension


LEVELS = {
    "quick": Level("quick", 4000, 20, 20, 50, 48, 5, 256, 40, 0.05),
    "full": Level("full", 20000, 25, 40, 100, 48, 6, 512, 48, 0.05),
}


def _cloud(F: HomPolyMap, lv: Level, seed: int) -> measures.PointCloudMeasure:
    start = normalize([1, 1, 1]) if F.name.startswith("power") else normalize(DEFAULT_START)
    return measures.sample_equilibrium(F, start, lv.depth, lv.count, seed)


def check_power_green() -> CheckResult:
    F = bundled_map("power2")
    pts = [(2, 0, 0), (1, 3j, 0.5), (0.2, -0.1, 0.05j)]
    worst = 0.0
    for p in pts:
        ev = greenfn.green_value(F, np.array(p, dtype=complex))
        worst = max(worst, abs(ev.value - np.log(max(abs(np.array(p))))), ev.residual)
    return CheckResult("power_green", "sup-norm Green function of the power map equals log max|x_i|",
                       worst < 1e-12, {"max_error": worst})


def check_exponents(name: str, lv: Level, seed: int = 7) -> list[CheckResult]:
    """Briend-Duval floor on one map, plus the minimal-exponent targets for Lattes maps
    and the no-splitting outcome for maps with equal exponents."""
    F = bundled_map(name)
    est = lyapunov.exponent_pair(F, _cloud(F, lv, seed), lv.n)
    d = F.degree
    rec = est.record()
    out = [CheckResult(f"briend_duval_floor[{name}]", "lambda_2 >= (1/2) log d",
                       est.lambda2 + 3 * est.se2 >= 0.5 * np.log(d), rec)]
    if name.startswith("lattes"):
        ok = (abs(est.lambda2 - 0.5 * np.log(d)) <= lv.tol_lattes and abs(est.lambda1 - np.log(d)) <= lv.tol_lattes
              and abs(est.lambda1 / est.lambda2 - 2) <= 0.1)
        out.append(CheckResult(f"minimal_exponent[{name}]",
                               "suspension of a Lattes map: lambda_2 = (1/2) log d, lambda_1 = log d, resonant k = 2",
                               ok, rec))
    else:
        try:
            lyapunov.require_splitting(est)
            split = False
        except NoSplitting:
            split = True
        out.append(CheckResult(f"equal_exponents[{name}]", "power map: lambda_1 = lambda_2 = log d, no splitting",
                               split and abs(est.lambda1 - np.log(d)) <= 0.02 and abs(est.lambda2 - np.log(d)) <= 0.02,
                               rec))
    return out


def check_pairings(lv: Level) -> list[CheckResult]:
    out = []
    for phi in standard_suite()[:lv.n_fns]:
        t11 = localmodel.pair_T11(phi, lv.res4)
        t22 = localmodel.pair_T22(phi, lv.res4)
        mu = localmodel.pair_mu0(phi, lv.res4, t11=t11)
        for chk, anchor in ((t11, "<T11, phi> = (1/8) int_M0 phi dLeb_M0"),
                            (t22, "<T22, phi> = int_Omega phi + int_M0 (|w|^2/2) phi"),
                            (mu, "mu0 = (1/8) Leb_M0 = T0 ^ dd^c|w|^2")):
            ok = chk.passed and chk.extra.get("psi_identity", 0.0) < 1e-12 * max(1.0, abs(chk.lhs))
            out.append(CheckResult(f"{chk.name}[{phi.name}]", anchor, ok, chk.record()))
    s = np.linspace(0, 4, 41)
    gap = float(np.max(np.abs(localmodel.psi_algebraic_gap(s))))
    out.append(CheckResult("psi0_identity", "(1/8 + s/2) / (1 + 4 s) = 1/8", gap <= 1e-15, {"max_gap": gap}))
    return out


# (u, v) inside the support of the first three suite functions, five per sign of u
COUPE_POINTS = ((0.15, 0.0), (0.1, 0.2), (0.05, -0.2), (0.02, 0.1), (0.12, -0.05),
                (-0.25, 0.0), (-0.1, 0.2), (-0.4, -0.1), (-0.5, 0.05), (-0.05, -0.2))


def check_coupe(lv: Level) -> list[CheckResult]:
    out = []
    for phi in standard_suite()[:3]:
        for u, v in COUPE_POINTS:
            chk = localmodel.lemma_coupe_check(u, v, phi, lv.coupe_res)
            out.append(CheckResult(f"lemma_coupe[{phi.name},u={u},v={v}]",
                                   "vertical slices of G0: disc integral (u >= 0), annulus plus circle term (u < 0)",
                                   chk.passed, chk.record()))
    return out


def check_decay(lv: Level, seed: int = 11) -> list[CheckResult]:
    F = bundled_map("lattes4susp")
    start = normalize(DEFAULT_START)
    profiles = [invbranch.contraction_profile(F, invbranch.backward_orbit(F, start, 40, seed + k), orbit_id=k)
                for k in range(lv.orbits)]
    rep = invbranch.decay_diagnostics(profiles, F.degree)
    rec = rep.record()
    ok_a = abs(rep.prefactor_slope + 0.5 * np.log(4)) <= 0.1
    floor = invbranch.lemma_floor_check(profiles, rep.lambda2)
    power = bundled_map("power4")
    neg_profiles = [invbranch.contraction_profile(power, invbranch.backward_orbit(power, normalize([1, 1, 1]), 40,
                                                                                   seed + k))
                    for k in range(invbranch.MIN_PROFILES)]
    neg = invbranch.decay_diagnostics(neg_profiles, 4)
    return [
        CheckResult("decay_prefactor", "J_n prefactor e^{-n(lambda_1 + lambda_2 - log d)}", ok_a, rec),
        CheckResult("decay_band", "d^n |beta_n|^2 stays bounded above and below", rep.band_passed, rec),
        CheckResult("resonance", "lambda_1 = k lambda_2 with k = 2", rep.resonance == "resonant" and rep.resonance_k == 2,
                    rec),
        CheckResult("contraction_floor", "(f^n)^* omega >= beta^-2 e^{2n(lambda_2 - 2 eps)}", floor.passed,
                    {"fraction": floor.fraction, "rate": floor.rate}),
        CheckResult("band_negative_control", "profiles with lambda_2 != (1/2) log d leave the band",
                    not neg.band_passed, neg.record()),
    ]


def check_cross_path(lv: Level) -> list[CheckResult]:
    box = np.array([[-1.0, 1.0]] * 4)
    grid = greenfn.grid_from_function(lambda z, w: np.maximum(z.real + np.abs(w) ** 2, 0.0), box, (lv.grid_res,) * 4)
    out = []
    for phi in standard_suite()[:2]:
        sl = measures.slice_pairing(grid, phi, "W")
        t11 = localmodel.pair_T11(phi, lv.res4)
        tol = sl.error_estimate + t11.lhs_error + t11.rhs_error + localmodel.REL_TOL * max(abs(sl.value), 1.0)
        out.append(CheckResult(f"slice_vs_T11[{phi.name}]", "slice measure T ^ dd^c|w|^2 equals T11 in the local model",
                               abs(sl.value - t11.rhs) <= tol,
                               {"slice": sl.value, "t11": t11.rhs, "tolerance": tol}))
    return out


GROUPS: dict[str, Callable[[Level, tuple[str, ...]], list[CheckResult]]] = {
    "green": lambda lv, maps: [check_power_green()],
    "exponents": lambda lv, maps: [c for m in maps for c in check_exponents(m, lv)],
    "pairings": lambda lv, maps: check_pairings(lv),
    "coupe": lambda lv, maps: check_coupe(lv),
    "decay": lambda lv, maps: check_decay(lv),
    "crosspath": lambda lv, maps: check_cross_path(lv),
}
MAP_GROUPS = ("green", "exponents")


def run_suite(level: str = "quick", maps: tuple[str, ...] = BUNDLED,
              groups: tuple[str, ...] | None = None) -> list[CheckResult]:
    lv = LEVELS[level]
    if groups is None:
        # restricting to maps only makes sense for the map-dependent checks
        groups = tuple(GROUPS) if tuple(maps) == BUNDLED else MAP_GROUPS
    results = []
    for g in groups:
        try:
            results.extend(GROUPS[g](lv, tuple(maps)))
        except HolodynError as exc:
            results.append(CheckResult(g, "", False, {"error": f"{type(exc).__name__}: {exc}"}))
    return results
