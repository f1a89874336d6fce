"""Command-line entry point: ``holodyn <command> [options]``.

Exit codes: 0 success, 1 scientific failure (a module error or a failed
verdict), 2 usage or configuration error.  Every common flag can also be set
through an environment variable ``HOLODYN_<FLAG>`` (e.g. ``HOLODYN_SEED``).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import greenfn, invbranch, localmodel, lyapunov, measures, suite
from .errors import ConfigError, HolodynError
from .projspace import HomPolyMap, load_map, map_from_dict, normalize
from .testfn import standard_suite

ENV_PREFIX = "HOLODYN_"
COMMON = ("map", "seed", "out", "workers", "tol")
STOCHASTIC = {"sample-mu", "lyapunov", "orbit"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# helpers

def resolve_map(spec: str | None) -> HomPolyMap:
    if not spec:
        raise ConfigError("--map is required")
    if spec in suite.BUNDLED:
        return suite.bundled_map(spec)
    stem = Path(spec).stem
    if not Path(spec).exists() and stem in suite.BUNDLED:
        return suite.bundled_map(stem)
    if spec.lstrip().startswith("{"):
        try:
            return map_from_dict(json.loads(spec))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad inline map: {exc}") from exc
    try:
        return load_map(spec)
    except FileNotFoundError as exc:
        raise ConfigError(f"map file not found: {spec}") from exc
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad map file {spec}: {exc}") from exc


def parse_point(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}") from exc
    if len(vals) == 3:
        return np.array(vals, dtype=complex)
    if len(vals) == 6:
        return np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    raise ConfigError("a point needs 3 real or 6 (re, im) values")


def _range(name: str, value, lo, hi=None):
    if value is None or value < lo or (hi is not None and value > hi):
        raise ConfigError(f"--{name} must lie in [{lo}, {hi if hi is not None else 'inf'}]")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def emit(args, command: str, record: dict) -> None:
    text = json.dumps(_jsonable({"command": command, **record}), indent=1, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}.json").write_text(text)


def _out_path(args, name: str) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


# ---------------------------------------------------------------------------
# commands

def cmd_green(args) -> int:
    F = resolve_map(args.map)
    x = parse_point(args.point)
    ev = greenfn.green_value(F, x, tol=args.tol or greenfn.DEFAULT_TOL)
    emit(args, "green", {"map": F.name, "point": [[v.real, v.imag] for v in x], "value": ev.value,
                         "iterations": ev.iterations, "residual": ev.residual, "converged": ev.converged})
    return 0 if ev.converged else 1


def _start(args, F: HomPolyMap):
    if args.start:
        return normalize(parse_point(args.start))
    return normalize([1, 1, 1]) if F.name.startswith("power") else normalize(suite.DEFAULT_START)


def cmd_sample(args) -> int:
    F = resolve_map(args.map)
    _range("depth", args.depth, 10)
    _range("count", args.count, 1000)
    cloud = measures.sample_equilibrium(F, _start(args, F), args.depth, args.count, args.seed)
    path = _out_path(args, "cloud.csv")
    if path:
        cloud.to_csv(path)
    rec = {"map": F.name, **cloud.meta}
    for phi in standard_suite()[:2]:
        m, se = measures.pair_cloud_se(cloud, phi)
        rec[f"pairing[{phi.name}]"] = {"value": m, "se": se}
    emit(args, "sample-mu", rec)
    return 0


def cmd_lyapunov(args) -> int:
    F = resolve_map(args.map)
    _range("depth", args.depth, 10)
    _range("count", args.count, 1000)
    _range("n", args.n, 20, invbranch.MAX_ORBIT)
    cloud = measures.sample_equilibrium(F, _start(args, F), args.depth, args.count, args.seed)
    est = lyapunov.exponent_pair(F, cloud, args.n, seed=args.seed)
    path = _out_path(args, "finite_time_exponents.csv")
    if path:
        l1, l2 = lyapunov.finite_time_exponents(F, cloud, args.n, seed=args.seed)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["point", "lambda1", "lambda2"])
            for i, (a, b) in enumerate(zip(l1, l2)):
                wr.writerow([i, repr(float(a)), repr(float(b))])
    rec = est.record()
    rec["briend_duval_floor"] = est.above_floor(F.degree)
    emit(args, "lyapunov", rec)
    return 0 if rec["briend_duval_floor"] else 1


def cmd_orbit(args) -> int:
    F = resolve_map(args.map)
    _range("n", args.n, 20, invbranch.MAX_ORBIT)
    _range("orbits", args.orbits, 1)
    start = _start(args, F)
    profiles = [invbranch.contraction_profile(F, invbranch.backward_orbit(F, start, args.n, args.seed + k), orbit_id=k)
                for k in range(args.orbits)]
    path = _out_path(args, "profiles.csv")
    if path:
        invbranch.export_profiles(profiles, path)
    rec = {"map": F.name, "orbits": args.orbits, "n": args.n, "seed": args.seed}
    if args.orbits >= invbranch.MIN_PROFILES:
        rep = invbranch.decay_diagnostics(profiles, F.degree)
        floor = invbranch.lemma_floor_check(profiles, rep.lambda2)
        rec["decay"] = rep.record()
        rec["floor"] = {"fraction": floor.fraction, "passed": floor.passed, "rate": floor.rate}
    else:
        rec["rates"] = [list(p.fitted_rates) for p in profiles]
    emit(args, "orbit", rec)
    return 0


def _test_fn(name: str):
    for phi in standard_suite():
        if phi.name == name:
            return phi
    raise ConfigError(f"unknown test function {name!r}; choose from {[p.name for p in standard_suite()]}")


def cmd_slice(args) -> int:
    phi = _test_fn(args.test_fn)
    box = np.array([[-1.0, 1.0]] * 4)
    if args.map in (None, "", "localmodel"):
        grid = greenfn.grid_from_function(lambda z, w: np.maximum(z.real + np.abs(w) ** 2, 0.0), box, (args.res,) * 4)
        label = "localmodel"
    else:
        F = resolve_map(args.map)
        grid = greenfn.potential_grid(F, args.chart, box, (args.res,) * 4, workers=args.workers or 1)
        label = F.name
    path = _out_path(args, "grid.hdpg")
    if path:
        grid.save(path)
    res = measures.slice_pairing(grid, phi, args.direction)
    emit(args, "slice", {"map": label, **res.record()})
    return 0


def cmd_localmodel(args) -> int:
    records = []
    for phi in standard_suite():
        t11 = localmodel.pair_T11(phi, args.res)
        records += [t11.record(), localmodel.pair_T22(phi, args.res).record(),
                    localmodel.pair_mu0(phi, args.res, t11=t11).record()]
    for phi in standard_suite()[:3]:
        for u, v in suite.COUPE_POINTS:
            records.append(localmodel.lemma_coupe_check(u, v, phi, args.coupe_res).record())
    path = _out_path(args, "localmodel.csv")
    if path:
        keys = ["operation", "test_function", "lhs", "rhs", "lhs_error", "rhs_error", "discrepancy", "tolerance",
                "verdict"]
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, keys, extrasaction="ignore")
            wr.writeheader()
            wr.writerows(records)
    failed = [f"{r['operation']}[{r['test_function']}]" for r in records if r["verdict"] != "pass"]
    emit(args, "localmodel", {"records": records, "failed": failed})
    return 1 if failed else 0


def cmd_verify(args) -> int:
    maps = tuple(args.maps.split(",")) if args.maps else suite.BUNDLED
    for m in maps:
        if m not in suite.BUNDLED:
            raise ConfigError(f"unknown bundled map {m!r}")
    groups = tuple(args.checks.split(",")) if args.checks else None
    if groups:
        for g in groups:
            if g not in suite.GROUPS:
                raise ConfigError(f"unknown check group {g!r}")
    results = suite.run_suite(args.level, maps, groups)
    failed = [r.name for r in results if not r.passed]
    for r in results:
        sys.stderr.write(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.anchor}\n")
    emit(args, "verify", {"level": args.level, "maps": list(maps), "checks": [r.record() for r in results],
                          "failed": failed})
    return 1 if failed else 0


def export_report(results_dir: str | Path, out: str | Path | None = None) -> dict:
    """Merge result records in a directory and write per-figure CSVs next to the report."""
    src = Path(results_dir)
    files = sorted(src.glob("*.json")) if src.is_dir() else []
    records = []
    for f in files:
        if f.name == "report.json" or f.name.endswith(".meta.json"):
            continue
        try:
            rec = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed record {f.name}: {exc}") from exc
        if not isinstance(rec, dict) or "command" not in rec:
            raise ConfigError(f"malformed record {f.name}: no command field")
        records.append(rec)
    if not records:
        raise ConfigError(f"no result records in {src}")
    dest = Path(out) if out else src
    dest.mkdir(parents=True, exist_ok=True)
    summary = []
    lyap = [r for r in records if r["command"] == "lyapunov"]
    if lyap:
        keys = ["map", "lambda1", "lambda2", "se1", "se2", "sum_via_det", "n", "N", "seed"]
        with open(dest / "exponents_summary.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, keys, extrasaction="ignore")
            wr.writeheader()
            wr.writerows(lyap)
    pair_rows = []
    for r in records:
        for rec in r.get("records", []):
            pair_rows.append(rec)
        for chk in r.get("checks", []):
            det = chk.get("details", {})
            if "lhs" in det:
                pair_rows.append(det)
    if pair_rows:
        keys = ["operation", "test_function", "lhs", "rhs", "discrepancy", "tolerance", "verdict"]
        with open(dest / "pairings.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, keys, extrasaction="ignore")
            wr.writeheader()
            wr.writerows(pair_rows)
    decay = [r for r in records if r["command"] == "orbit" and "decay" in r]
    if decay:
        with open(dest / "contraction_rates.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["map", "lambda1", "lambda2", "prefactor_slope", "band_C", "resonance"])
            for r in decay:
                dd = r["decay"]
                wr.writerow([r["map"], dd["lambda1"], dd["lambda2"], dd["prefactor_slope"], dd["band_C"],
                             dd["resonance"]])
    checks = []
    for r in records:
        summary.append({k: r[k] for k in ("command", "map", "lambda1", "lambda2", "level") if k in r})
        checks += [{"check": c["check"], "anchor": c["anchor"], "verdict": c["verdict"]} for c in r.get("checks", [])]
    report = {"records": len(records), "summary": summary, "checks": checks}
    (dest / "report.json").write_text(json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n")
    return report


def cmd_report(args) -> int:
    report = export_report(args.results, args.out)
    sys.stdout.write(json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--map", help="bundled map name, map file, or inline JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)

    p = _Parser(prog="holodyn", description="Dynamics of holomorphic endomorphisms of P^2: "
                                             "Green functions, equilibrium measures, exponents.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("green", parents=[common], help="Green function at a point")
    g.add_argument("--point", required=True, help="x0,x1,x2 or re0,im0,re1,im1,re2,im2")
    g.set_defaults(func=cmd_green)

    for name, func, extra in (("sample-mu", cmd_sample, ()), ("lyapunov", cmd_lyapunov, ("n",))):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--depth", type=int, default=25)
        s.add_argument("--count", type=int, default=20000)
        s.add_argument("--start", default=None)
        if "n" in extra:
            s.add_argument("--n", type=int, default=lyapunov.DEFAULT_N)
        s.set_defaults(func=func)

    o = sub.add_parser("orbit", parents=[common], help="backward orbits and contraction diagnostics")
    o.add_argument("--n", type=int, default=40)
    o.add_argument("--orbits", type=int, default=100)
    o.add_argument("--start", default=None)
    o.set_defaults(func=cmd_orbit)

    s = sub.add_parser("slice", parents=[common], help="slice pairing on a potential grid")
    s.add_argument("--test-fn", default="centered")
    s.add_argument("--res", type=int, default=40)
    s.add_argument("--chart", type=int, default=2)
    s.add_argument("--direction", choices=("W", "Z"), default="W")
    s.set_defaults(func=cmd_slice)

    lm = sub.add_parser("localmodel", parents=[common], help="local model identities")
    lm.add_argument("--res", type=int, default=localmodel.RES_4D)
    lm.add_argument("--coupe-res", type=int, default=localmodel.RES_2D)
    lm.set_defaults(func=cmd_localmodel)

    v = sub.add_parser("verify", parents=[common], help="verification suite")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--maps", default=None, help="comma-separated bundled maps")
    v.add_argument("--checks", default=None, help=f"comma-separated groups from {sorted(suite.GROUPS)}")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", parents=[common], help="merge result records")
    r.add_argument("--results", required=True)
    r.set_defaults(func=cmd_report)
    return p


def _apply_env(args) -> None:
    for flag in COMMON:
        env = os.environ.get(ENV_PREFIX + flag.upper())
        if env is not None and getattr(args, flag, None) is None:
            conv = {"seed": int, "workers": int, "tol": float}.get(flag, str)
            try:
                setattr(args, flag, conv(env))
            except ValueError as exc:
                raise ConfigError(f"bad {ENV_PREFIX + flag.upper()}={env!r}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _apply_env(args)
        if args.command in STOCHASTIC and args.seed is None:
            raise ConfigError(f"{args.command} is stochastic: --seed is required")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"holodyn: configuration error: {exc}\n")
        return 2
    except HolodynError as exc:
        op = getattr(locals().get("args"), "command", "?")
        sys.stderr.write(f"holodyn {op}: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
