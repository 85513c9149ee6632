"""Experiment harness: reference management, convergence studies, long-time
error tracking, stability maps, and single solves.

Config resolution: flat key=value file (--config) overridden by CLI flags.
Exit codes: 0 ok, 2 config error, 3 reference build failure, 4 every
requested run blew up.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .integrators import FAMILIES, make_method, integrate
from .spectral import (RepartitionSpec, HyperviscositySpec, build_zds,
                       build_kdv, apply_repartition, apply_hyperviscosity,
                       write_spectrum, read_spectrum)
from . import stability as stab

__all__ = [
    "ConfigError", "ReferenceFailure", "RunRecord", "relative_error",
    "cache_dir", "ensure_reference", "run_convergence", "run_longtime",
    "run_stability_maps", "run_solve", "main",
    "EXIT_OK", "EXIT_CONFIG", "EXIT_REFERENCE", "EXIT_ALL_BLOWUP",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFERENCE = 3
EXIT_ALL_BLOWUP = 4

# default stability-map windows (k2 band per method, k1 in (0, 60])
K2_BANDS = {"erk4": 12.0, "esdc6": 25.0, "epbm5": 4.0, "imrk4": 12.0,
            "rk4": 12.0, "exp_euler": 12.0}


class ConfigError(Exception):
    pass


class ReferenceFailure(Exception):
    pass


@dataclass
class RunRecord:
    method: str
    modification: str
    n_steps: int
    h: float
    relative_error: float
    observed_order: float
    wall_time: float
    status: str          # ok | nonconverged | blowup


def relative_error(y: np.ndarray, y_ref: np.ndarray) -> float:
    """max-norm relative error ||y_ref - y||_inf / ||y_ref||_inf."""
    ref = float(np.max(np.abs(y_ref)))
    if ref == 0.0:
        raise ValueError("reference has zero norm")
    return float(np.max(np.abs(y_ref - y)) / ref)


def cache_dir() -> str:
    env = os.environ.get("EXPSTAB_CACHE_DIR")
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "expstab")


def _build_problem(problem: str, nx: int):
    if problem == "zds":
        return build_zds(nx)
    if problem == "kdv":
        return build_kdv(nx)
    raise ConfigError("unknown problem: %r" % (problem,))


# --- single-run task (picklable description, rebuilt inside workers) ---------

def _mod_tuple(mod) -> tuple:
    if mod is None:
        return ("none",)
    if isinstance(mod, RepartitionSpec):
        return ("rep", mod.kind, mod.rho, mod.epsilon)
    if isinstance(mod, HyperviscositySpec):
        return ("hyper", mod.m, mod.gamma, mod.q)
    raise ConfigError("unknown modification: %r" % (mod,))


def _mod_from_tuple(t):
    if t[0] == "none":
        return None
    if t[0] == "rep":
        return RepartitionSpec(kind=t[1], rho=t[2], epsilon=t[3])
    return HyperviscositySpec(m=t[1], gamma=t[2], q=t[3])


def _mod_describe(mod) -> str:
    return "none" if mod is None else mod.describe()


def _run_single(task: tuple) -> dict:
    (problem_name, nx, family, n_steps, t_end, mod_t, sample_times) = task
    problem, u0 = _build_problem(problem_name, nx)
    mod = _mod_from_tuple(mod_t)
    rep = mod if isinstance(mod, RepartitionSpec) else None
    hyper = mod if isinstance(mod, HyperviscositySpec) else None
    start = time.perf_counter()
    res = integrate(problem, make_method(family), u0, (0.0, t_end), n_steps,
                    repartition=rep, hyperviscosity=hyper,
                    sample_times=sample_times)
    wall = time.perf_counter() - start
    return {"ok": res.ok, "blowup_step": res.blowup_step, "t": res.t,
            "y": res.y, "samples": res.samples, "h": res.h, "wall": wall}


def _run_many(tasks: Sequence[tuple], workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [_run_single(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_single, tasks))


# --- reference cache ----------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def ensure_reference(problem: str, nx: int, method: str, n_steps: int,
                     t_end: float, sample_times: Sequence[float]) -> list:
    """Return reference spectra at the given sample times, building and
    caching on first use.  The cache entry is published atomically
    (temp dir + rename), so a killed build never leaves a truncated entry."""
    sample_times = [float(s) for s in sample_times]
    payload = "problem=%s nx=%d method=%s n=%d t_end=%s samples=%s" % (
        problem, nx, method, n_steps, _fmt(t_end),
        ",".join(_fmt(s) for s in sample_times))
    digest = hashlib.sha1(payload.encode()).hexdigest()[:16]
    entry = os.path.join(cache_dir(), "%s-nx%d-%s-n%d-%s"
                         % (problem, nx, method, n_steps, digest))

    if not os.path.isdir(entry):
        res = _run_single((problem, nx, method, n_steps, t_end,
                           ("none",), sample_times))
        if not res["ok"]:
            raise ReferenceFailure(
                "reference run (%s, n=%d) blew up at step %s"
                % (method, n_steps, res["blowup_step"]))
        tmp = entry + ".tmp.%d" % os.getpid()
        os.makedirs(tmp, exist_ok=True)
        with open(os.path.join(tmp, "meta.txt"), "w", newline="\n") as f:
            f.write(payload + "\n")
        for i, (t_actual, y) in enumerate(res["samples"]):
            write_spectrum(os.path.join(tmp, "snap-%04d.txt" % i),
                           problem, t_actual, y)
        try:
            os.replace(tmp, entry)
        except OSError:
            if not os.path.isdir(entry):   # lost a race and target is broken
                raise
    with open(os.path.join(entry, "meta.txt")) as f:
        if f.read().strip() != payload:
            raise ReferenceFailure("cache entry %s does not match its key" % entry)
    out = []
    for i in range(len(sample_times)):
        meta, u = read_spectrum(os.path.join(entry, "snap-%04d.txt" % i))
        out.append((meta["t"], u))
    return out


# --- experiment drivers ---------------------------------------------------------

def _check_steps(steps) -> list:
    steps = [int(s) for s in steps]
    if not steps or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ConfigError("step counts must be strictly increasing")
    return steps


def _check_methods(methods) -> None:
    for m in methods:
        if m not in FAMILIES:
            raise ConfigError("unknown method: %r (choices: %s)"
                              % (m, ", ".join(FAMILIES)))


def run_convergence(problem: str = "zds", nx: int = 128, t_end: float = 40.0,
                    methods: Sequence[str] = ("erk4",),
                    steps: Sequence[int] = (500, 1000),
                    modification=None,
                    ref_method: str = "rk4", ref_steps: int = 200000,
                    workers: int = 1, out_csv=None) -> list[RunRecord]:
    """Fixed-step refinement study against a cached fine reference."""
    steps = _check_steps(steps)
    _check_methods(methods)
    _check_methods([ref_method])
    if ref_steps < 10 * max(steps):
        raise ConfigError("reference steps must be >= 10x the largest "
                          "experiment step count")
    ref = ensure_reference(problem, nx, ref_method, ref_steps, t_end, [t_end])
    y_ref = ref[0][1]
    mod_t = _mod_tuple(modification)
    mod_s = _mod_describe(modification)
    tasks = [(problem, nx, m, n, t_end, mod_t, None)
             for m in methods for n in steps]
    results = _run_many(tasks, workers)

    records = []
    for mi, m in enumerate(methods):
        prev = None   # (h, err) of previous ok run for observed order
        for ni, n in enumerate(steps):
            res = results[mi * len(steps) + ni]
            h = (t_end - 0.0) / n
            if not res["ok"]:
                records.append(RunRecord(m, mod_s, n, h, float("nan"),
                                         float("nan"), res["wall"], "blowup"))
                prev = None
                continue
            err = relative_error(res["y"], y_ref)
            status = "ok" if err <= 1.0 else "nonconverged"
            order = float("nan")
            if prev is not None and err > 0 and prev[1] > 0:
                order = math.log(prev[1] / err) / math.log(prev[0] / h)
            records.append(RunRecord(m, mod_s, n, h, err, order,
                                     res["wall"], status))
            prev = (h, err) if status == "ok" else None
    if out_csv:
        _write_records(records, out_csv)
    return records


def _write_records(records: list[RunRecord], path) -> None:
    lines = ["method,modification,n_steps,h,relative_error,observed_order,"
             "wall_time_seconds,status"]
    for r in records:
        lines.append("%s,%s,%d,%s,%s,%s,%s,%s"
                     % (r.method, r.modification, r.n_steps, _fmt(r.h),
                        _fmt(r.relative_error), _fmt(r.observed_order),
                        _fmt(r.wall_time), r.status))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def run_longtime(problem: str = "kdv", nx: int = 512, t_end: float = 160.0,
                 n_steps: int = 56000,
                 runs: Sequence[tuple] = (("erk4", None),),
                 n_samples: int = 30,
                 ref_method: str = "imrk4", ref_steps: int = 560000,
                 workers: int = 1, out_csv=None) -> dict:
    """Error-vs-time series for (method, modification) pairs against a cached
    reference sampled on an even time grid."""
    _check_methods([m for m, _ in runs] + [ref_method])
    if ref_steps < 10 * n_steps:
        raise ConfigError("reference steps must be >= 10x the run step count")
    sample_times = [t_end * i / n_samples for i in range(1, n_samples + 1)]
    ref = ensure_reference(problem, nx, ref_method, ref_steps, t_end,
                           sample_times)
    tasks = [(problem, nx, m, n_steps, t_end, _mod_tuple(mod), sample_times)
             for (m, mod) in runs]
    results = _run_many(tasks, workers)

    series = {}
    for (m, mod), res in zip(runs, results):
        key = (m, _mod_describe(mod))
        rows = []
        for (sample, refsample) in zip(res["samples"], ref):
            if sample is None:
                continue
            t_actual, y = sample
            rows.append((t_actual, relative_error(y, refsample[1]), "ok"))
        if not res["ok"]:
            rows.append((res["t"], float("nan"), "blowup"))
        series[key] = rows
    if out_csv:
        lines = ["method,modification,t,relative_error,status"]
        for (m, mod_s), rows in series.items():
            for (t, err, status) in rows:
                lines.append("%s,%s,%s,%s,%s" % (m, mod_s, _fmt(t),
                                                 _fmt(err), status))
        with open(out_csv, "w", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    return series


def run_stability_maps(methods: Sequence[str], rhos: Sequence[float],
                       out_dir, resolution=(600, 200), k1_max: float = 60.0,
                       k2_max: Optional[float] = None) -> list:
    """One classified grid CSV per (method, rho)."""
    os.makedirs(out_dir, exist_ok=True)
    n1 = int(resolution[0])
    paths = []
    for m in methods:
        band = k2_max if k2_max is not None else K2_BANDS[m]
        for rho in rhos:
            angle = stab.RepartitionAngle(rho) if rho else None
            grid = stab.region_grid(make_method(m), (k1_max / n1, k1_max),
                                    (0.0, band), resolution, angle)
            path = os.path.join(out_dir, "stability-%s-rho%.10g.csv" % (m, rho))
            stab.grid_to_csv(grid, path)
            paths.append(path)
    return paths


def run_solve(problem: str, nx: int, method: str, n_steps: int, t_end: float,
              modification=None, out_path=None):
    """Single integration; snapshot written with a blow-up flag if needed."""
    _check_methods([method])
    res = _run_single((problem, nx, method, n_steps, t_end,
                       _mod_tuple(modification), [t_end]))
    if out_path:
        status = "ok" if res["ok"] else "blowup"
        write_spectrum(out_path, problem, res["t"], res["y"], status=status)
    return res


# --- argument and config parsing ------------------------------------------------

def _parse_angle(s: str) -> float:
    s = s.strip()
    try:
        if s.startswith("pi"):
            rest = s[2:]
            if not rest:
                return math.pi
            if rest.startswith("/"):
                return math.pi / float(rest[1:])
            raise ValueError
        return float(s)
    except ValueError:
        raise ConfigError("cannot parse angle: %r" % (s,)) from None


def _parse_repartition(s: str) -> RepartitionSpec:
    parts = s.strip().split(":")
    kind = parts[0]
    rho = eps = None
    for p in parts[1:]:
        if p.startswith("rho="):
            rho = _parse_angle(p[4:])
        elif p.startswith("eps="):
            eps = float(p[4:])
        elif p:
            if kind == "identity":
                eps = float(p)
            else:
                rho = _parse_angle(p)
    try:
        return RepartitionSpec(kind=kind, rho=rho, epsilon=eps)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _parse_hyperviscosity(s: str) -> HyperviscositySpec:
    parts = s.strip().split(":")
    m = gamma = None
    plain = []
    for p in parts:
        if p.startswith("m="):
            m = int(p[2:])
        elif p.startswith("gamma="):
            gamma = float(p[6:])
        elif p:
            plain.append(p)
    if m is None and plain:
        m = int(plain.pop(0))
    if gamma is None and plain:
        gamma = float(plain.pop(0))
    if m is None or gamma is None:
        raise ConfigError("hyperviscosity needs m and gamma (m:gamma)")
    try:
        return HyperviscositySpec(m=m, gamma=gamma)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _load_config(path) -> dict:
    cfg = {}
    try:
        with open(path) as f:
            for ln, raw in enumerate(f, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError("config line %d is not key=value" % ln)
                key, _, val = line.partition("=")
                cfg[key.strip()] = val.strip()
    except OSError as e:
        raise ConfigError("cannot read config: %s" % e) from None
    return cfg


def _get(args, cfg: dict, key: str, default=None, cast=str):
    """CLI flag wins, then config file, then default."""
    val = getattr(args, key, None)
    if val is None and key in cfg:
        val = cfg[key]
    if val is None:
        return default
    try:
        return cast(val)
    except (TypeError, ValueError) as e:
        raise ConfigError("bad value for %s: %s" % (key, e)) from None


def _csv_list(s, cast):
    return [cast(p) for p in str(s).split(",") if p]


def _build_modification(args, cfg):
    rep_s = _get(args, cfg, "repartition")
    hyper_s = _get(args, cfg, "hyperviscosity")
    if rep_s and hyper_s:
        raise ConfigError("at most one of repartition/hyperviscosity")
    if rep_s:
        return _parse_repartition(rep_s)
    if hyper_s:
        return _parse_hyperviscosity(hyper_s)
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="expstab",
        description="partitioned exponential integrator experiments")
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stability", help="classified stability-region maps")
    p.add_argument("--methods")
    p.add_argument("--rho", help="comma list of angles (e.g. 0,pi/2048)")
    p.add_argument("--resolution", help="N1xN2, default 600x200")
    p.add_argument("--k2-max", dest="k2_max", type=float)
    p.add_argument("--out")

    p = sub.add_parser("converge", help="fixed-step refinement study")
    p.add_argument("--problem")
    p.add_argument("--nx", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--methods")
    p.add_argument("--steps")
    p.add_argument("--repartition")
    p.add_argument("--hyperviscosity")
    p.add_argument("--ref-method", dest="ref_method")
    p.add_argument("--ref-steps", dest="ref_steps", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = sub.add_parser("longtime", help="error-vs-time series")
    p.add_argument("--problem")
    p.add_argument("--nx", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--steps", help="single step count")
    p.add_argument("--runs", help="semicolon list: method[:modspec];...")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--ref-method", dest="ref_method")
    p.add_argument("--ref-steps", dest="ref_steps", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = sub.add_parser("solve", help="single run, snapshot output")
    p.add_argument("--problem")
    p.add_argument("--nx", type=int)
    p.add_argument("--method")
    p.add_argument("--steps")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--repartition")
    p.add_argument("--hyperviscosity")
    p.add_argument("--out")

    p = sub.add_parser("reference", help="prebuild a cached reference")
    p.add_argument("--problem")
    p.add_argument("--nx", type=int)
    p.add_argument("--method")
    p.add_argument("--steps")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--samples", help="comma list of sample times")

    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config) if args.config else {}
        return _dispatch(args, cfg)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except ReferenceFailure as e:
        print("reference failure: %s" % e, file=sys.stderr)
        return EXIT_REFERENCE


def _dispatch(args, cfg) -> int:
    cmd = args.command
    if cmd == "stability":
        methods = _csv_list(_get(args, cfg, "methods", "erk4"), str)
        rhos = [_parse_angle(s) for s in
                _csv_list(_get(args, cfg, "rho", "0"), str)]
        res_s = _get(args, cfg, "resolution", "600x200")
        try:
            n1, n2 = (int(v) for v in str(res_s).lower().split("x"))
        except ValueError:
            raise ConfigError("resolution must look like 600x200") from None
        out = _get(args, cfg, "out", "stability-maps")
        for m in methods:
            if m not in K2_BANDS:
                raise ConfigError("unknown method: %r" % (m,))
        run_stability_maps(methods, rhos, out, (n1, n2),
                           k2_max=_get(args, cfg, "k2_max", None, float))
        return EXIT_OK

    if cmd == "converge":
        records = run_convergence(
            problem=_get(args, cfg, "problem", "zds"),
            nx=_get(args, cfg, "nx", 128, int),
            t_end=_get(args, cfg, "t_end", 40.0, float),
            methods=_csv_list(_get(args, cfg, "methods", "erk4"), str),
            steps=_csv_list(_get(args, cfg, "steps", "500,1000"), int),
            modification=_build_modification(args, cfg),
            ref_method=_get(args, cfg, "ref_method", "rk4"),
            ref_steps=_get(args, cfg, "ref_steps", 200000, int),
            workers=_get(args, cfg, "workers", os.cpu_count() or 1, int),
            out_csv=_get(args, cfg, "out", "converge.csv"))
        if all(r.status == "blowup" for r in records):
            return EXIT_ALL_BLOWUP
        return EXIT_OK

    if cmd == "longtime":
        runs = []
        for item in str(_get(args, cfg, "runs", "erk4")).split(";"):
            item = item.strip()
            if not item:
                continue
            name, _, modspec = item.partition(":")
            mod = None
            if modspec and modspec != "none":
                if modspec.startswith("hyperviscosity:"):
                    mod = _parse_hyperviscosity(modspec.split(":", 1)[1])
                else:
                    mod = _parse_repartition(modspec)
            runs.append((name, mod))
        series = run_longtime(
            problem=_get(args, cfg, "problem", "kdv"),
            nx=_get(args, cfg, "nx", 512, int),
            t_end=_get(args, cfg, "t_end", 160.0, float),
            n_steps=_get(args, cfg, "steps", 56000, int),
            runs=runs,
            n_samples=_get(args, cfg, "n_samples", 30, int),
            ref_method=_get(args, cfg, "ref_method", "imrk4"),
            ref_steps=_get(args, cfg, "ref_steps", 560000, int),
            workers=_get(args, cfg, "workers", os.cpu_count() or 1, int),
            out_csv=_get(args, cfg, "out", "longtime.csv"))
        if all(rows and rows[-1][2] == "blowup" for rows in series.values()):
            return EXIT_ALL_BLOWUP
        return EXIT_OK

    if cmd == "solve":
        res = run_solve(
            problem=_get(args, cfg, "problem", "zds"),
            nx=_get(args, cfg, "nx", 128, int),
            method=_get(args, cfg, "method", "erk4"),
            n_steps=_get(args, cfg, "steps", 1000, int),
            t_end=_get(args, cfg, "t_end", 40.0, float),
            modification=_build_modification(args, cfg),
            out_path=_get(args, cfg, "out", "solution.txt"))
        return EXIT_OK if res["ok"] else EXIT_ALL_BLOWUP

    if cmd == "reference":
        t_end = _get(args, cfg, "t_end", 40.0, float)
        samples_s = _get(args, cfg, "samples")
        sample_times = ([float(s) for s in _csv_list(samples_s, float)]
                        if samples_s else [t_end])
        ensure_reference(_get(args, cfg, "problem", "zds"),
                         _get(args, cfg, "nx", 128, int),
                         _get(args, cfg, "method", "rk4"),
                         _get(args, cfg, "steps", 200000, int),
                         t_end, sample_times)
        return EXIT_OK

    raise ConfigError("unknown command: %r" % (cmd,))


if __name__ == "__main__":
    sys.exit(main())
