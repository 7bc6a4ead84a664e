"""Command line entry point: ``uamo <command> [flags]``.

Every command writes its CSV/JSON output plus a ``*.manifest.json`` echoing
the resolved parameters. Errors go to stderr as JSON {code, message} with
exit code 2 (bad arguments), 3 (numerical failure) or 4 (I/O).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cmv import cmv_equals_walk, verblunsky_records, walk_to_verblunsky
from .cocycle import (CocycleSpec, acceleration_profile, argument_derivative_check, epsilon0,
                      log_integral_closed, log_integral_quadrature, lyapunov_estimate,
                      lyapunov_exact, realify, reflection_check)
from .core import CouplingPair, Frequency, convergents, lambda0
from .duality import dual_residual, dual_solution, localized_eigenpairs, truncate_to_tail_mass
from .errors import InvalidParameterError, UAMOError
from .spectrum import BandSet, band_measure_trend, band_set, butterfly, union_band_set
from .walk import SpinorField, evolve, scaling_exponent
from .walk2d import magnetic_shift, walk2d_build, walk2d_spectrum

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("butterfly", "dynamics", "lyapunov", "acceleration", "duality", "cmv-check",
            "cocycle-verify", "measure-trend", "walk2d-check")

# built-in defaults, applied after flags and config file
DEFAULTS = {
    "lambda1": 1 / math.sqrt(2),
    "lambda2": 1 / math.sqrt(2),
    "phi": "golden",
    "theta": 0.0,
    "qmax": 34,
    "theta_mode": "single",
    "steps": 10_000,
    "n": 1_000_000,
    "eps_min": None,
    "eps_max": None,
    "eps_count": None,
    "seed": 0,
    "threads": None,
    "z": "auto-spectrum",
    "z_count": 8,
    "variant": "B",
    "tau": 1e-8,
    "xi_count": 16,
    "top_m": 3,
    "m": 6,
    "L": 20,
    "out": None,
}

DEFAULT_OUT = {
    "butterfly": "butterfly.csv",
    "dynamics": "dynamics.csv",
    "lyapunov": "lyapunov.csv",
    "acceleration": "acceleration.csv",
    "duality": "duality.csv",
    "cmv-check": "verblunsky.json",
    "cocycle-verify": "cocycle_verify.json",
    "measure-trend": "measure_trend.csv",
    "walk2d-check": "spectrum2d.csv",
}


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(EXIT_ARGS, message)


def fmt(x) -> str:
    """17 significant digits; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uamo", description="Unitary almost-Mathieu walk experiments.")
    parser.add_argument("--version", action="version", version=f"uamo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML file with the same keys as the flags")
        p.add_argument("--lambda1", type=float)
        p.add_argument("--lambda2", type=float)
        p.add_argument("--phi", help="'golden', 'p/q' or a decimal in (0, 1)")
        p.add_argument("--theta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker cap (default: $UAMO_THREADS or 1)")
        p.add_argument("--out", help=f"output path (default {DEFAULT_OUT[name]})")
        if name in ("butterfly", "measure-trend"):
            p.add_argument("--qmax", type=int)
        if name == "butterfly":
            p.add_argument("--theta-mode", dest="theta_mode", choices=("single", "union"),
                           help="bands at --theta only, or the union over 8 phases per period")
        if name == "dynamics":
            p.add_argument("--steps", type=int)
        if name in ("lyapunov", "acceleration"):
            p.add_argument("--n", type=int, help="cocycle iterations N")
            p.add_argument("--z", help="'auto-spectrum' or an angle in radians")
            p.add_argument("--variant", choices=("A", "B", "A_sharp"))
            p.add_argument("--eps-min", dest="eps_min", type=float)
            p.add_argument("--eps-max", dest="eps_max", type=float)
            p.add_argument("--eps-count", dest="eps_count", type=int)
        if name == "lyapunov":
            p.add_argument("--z-count", dest="z_count", type=int)
        if name == "duality":
            p.add_argument("--tau", type=float)
            p.add_argument("--xi-count", dest="xi_count", type=int)
            p.add_argument("--top-m", dest="top_m", type=int)
        if name == "cmv-check":
            p.add_argument("--m", type=int, help="sites -m..m")
        if name == "walk2d-check":
            p.add_argument("--L", type=int, help="torus side, a multiple of 2q")
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise CLIError(EXIT_ARGS, f"bad config {path}: {exc}") from exc
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in DEFAULTS:
            raise CLIError(EXIT_ARGS, f"unknown config key {k!r}")
        out[key] = v
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config over defaults and range-check everything."""
    given = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    cfg = _load_config(args.config) if args.config else {}
    cmd = args.command
    p = dict(DEFAULTS)
    p.update(cfg)
    p.update(given)
    if p["threads"] is None:
        env = os.environ.get("UAMO_THREADS")
        try:
            p["threads"] = int(env) if env else 1
        except ValueError:
            raise CLIError(EXIT_ARGS, f"UAMO_THREADS must be an integer, got {env!r}")
    if cmd == "acceleration":
        p["eps_min"] = -0.35 if p["eps_min"] is None else p["eps_min"]
        p["eps_max"] = 0.35 if p["eps_max"] is None else p["eps_max"]
        p["eps_count"] = 41 if p["eps_count"] is None else p["eps_count"]
    else:
        p["eps_min"] = 0.0 if p["eps_min"] is None else p["eps_min"]
        p["eps_max"] = p["eps_min"] if p["eps_max"] is None else p["eps_max"]
        p["eps_count"] = 1 if p["eps_count"] is None else p["eps_count"]
    if p["out"] is None:
        p["out"] = DEFAULT_OUT[cmd]
    _validate(cmd, p)
    return p


def _validate(cmd: str, p: dict):
    def bad(msg):
        raise CLIError(EXIT_ARGS, msg)

    try:
        p["pair"] = CouplingPair(float(p["lambda1"]), float(p["lambda2"]))
        p["freq"] = Frequency.parse(p["phi"])
    except (InvalidParameterError, TypeError, ValueError) as exc:
        bad(str(exc))
    for key in ("theta", "eps_min", "eps_max", "tau"):
        if not math.isfinite(float(p[key])):
            bad(f"{key} must be finite")
    if p["threads"] < 1:
        bad("threads must be >= 1")
    if cmd == "dynamics" and int(p["steps"]) < 1:
        bad("steps must be >= 1")
    if cmd in ("butterfly", "measure-trend") and int(p["qmax"]) < 2:
        bad("qmax must be >= 2")
    if cmd in ("lyapunov", "acceleration"):
        if int(p["n"]) < 10 ** 4:
            bad("n must be at least 10^4")
        if int(p["eps_count"]) < 1 or p["eps_max"] < p["eps_min"]:
            bad("need eps_count >= 1 and eps_max >= eps_min")
        if int(p["eps_count"]) == 1 and p["eps_max"] != p["eps_min"]:
            bad("a single epsilon needs eps_min == eps_max")
        if p["z"] != "auto-spectrum":
            try:
                p["z"] = float(p["z"])
            except (TypeError, ValueError):
                bad("z must be 'auto-spectrum' or an angle in radians")
        if p["variant"] not in ("A", "B", "A_sharp"):
            bad("variant must be A, B or A_sharp")
        if p["pair"].lambda1 == 0 or (p["variant"] == "A_sharp" and p["pair"].lambda2 == 0):
            bad("the chosen cocycle needs nonzero couplings")
    if cmd == "lyapunov" and int(p["z_count"]) < 1:
        bad("z_count must be >= 1")
    if cmd == "acceleration":
        if int(p["eps_count"]) < 5:
            bad("eps_count must be >= 5")
        if abs(p["eps_min"] + p["eps_max"]) > 1e-12:
            bad("the epsilon grid must be symmetric: eps_min = -eps_max")
    if cmd == "duality":
        if not 0 < float(p["tau"]) < 1:
            bad("tau must lie in (0, 1)")
        if int(p["xi_count"]) < 1 or int(p["top_m"]) < 1:
            bad("xi_count and top_m must be >= 1")
    if cmd == "cmv-check" and int(p["m"]) < 3:
        bad("m must be >= 3")
    if cmd == "walk2d-check":
        if not p["freq"].is_rational:
            bad("walk2d-check needs a rational flux --phi p/q")
        if int(p["L"]) <= 0 or int(p["L"]) % (2 * p["freq"].q):
            bad(f"L must be a positive multiple of 2q = {2 * p['freq'].q}")


def _rational_for(freq: Frequency, q_cap: int) -> Frequency:
    """freq itself if rational, else its last continued-fraction convergent with q <= q_cap."""
    if freq.is_rational:
        return freq
    convs = [c for c in convergents(freq.value, 64) if c[1] <= q_cap]
    p, q = convs[-1]
    return Frequency.rational(p, q)


def _write_csv(path: str, header: list[str], rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) if isinstance(v, (int, float, np.integer, np.floating)) else v
                            for v in r])
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _write_json(path: str, obj):
    try:
        with open(path, "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def manifest_path(out: str) -> str:
    return str(Path(out).with_suffix(".manifest.json"))


# ---------------------------------------------------------------------------
# commands; each returns (summary dict, ok flag)


def cmd_butterfly(p, pool_map):
    rows = butterfly(p["pair"], int(p["qmax"]), theta_mode=p["theta_mode"], theta=float(p["theta"]),
                     map_fn=pool_map)
    out = [(r.p, r.q, r.phi, lo, hi) for r in rows for lo, hi in r.bands]
    _write_csv(p["out"], ["p", "q", "phi", "arc_lo", "arc_hi"], out)
    return {"rows": len(rows), "arcs": len(out)}, True


def cmd_dynamics(p, pool_map):
    psi0 = SpinorField.delta(0, 1)
    series = evolve(p["pair"], p["freq"], float(p["theta"]), psi0, int(p["steps"]))
    _write_csv(p["out"], ["t", "norm", "mean", "sigma2"],
               zip(series.t, series.norm, series.mean, series.sigma2))
    summary = {"initial_state": "delta_0^+", "final_sigma": float(series.sigma[-1])}
    if int(p["steps"]) >= 30:
        try:
            fit = scaling_exponent(series)
            summary.update(slope=fit.slope, slope_stderr=fit.stderr, fit_window=[series.t[-1] / 10, series.t[-1]])
        except UAMOError as exc:
            summary.update(slope=None, note=str(exc))
    return summary, True


def _eps_grid(p):
    return np.linspace(float(p["eps_min"]), float(p["eps_max"]), int(p["eps_count"]))


def _auto_z(p, count: int) -> list[float]:
    """Band-center angles of the q <= 55 approximant, spread over the bands."""
    f = _rational_for(p["freq"], 55)
    bands = band_set(p["pair"], f, float(p["theta"]))
    mids = [0.5 * (lo + hi) for lo, hi in bands]
    if not mids:
        raise InvalidParameterError("empty spectrum")
    idx = np.unique(np.linspace(0, len(mids) - 1, min(count, len(mids))).round().astype(int))
    return [float(mids[i]) for i in idx]


def cmd_lyapunov(p, pool_map):
    angles = _auto_z(p, int(p["z_count"])) if p["z"] == "auto-spectrum" else [float(p["z"])]
    eps = _eps_grid(p)
    jobs = [(a, float(e)) for a in angles for e in eps]

    def one(job):
        a, e = job
        spec = CocycleSpec(p["variant"], p["pair"], complex(math.cos(a), math.sin(a)), e)
        return lyapunov_estimate(spec, p["freq"], int(p["n"]), float(p["theta"]))

    res = list(pool_map(one, jobs))
    _write_csv(p["out"], ["z_angle", "epsilon", "L", "stderr"],
               [(a, e, L, se) for (a, e), (L, se) in zip(jobs, res)])
    Ls = [r[0] for r in res]
    summary = {"z_angles": angles, "L_median": float(np.median(Ls)), "L_min": min(Ls), "L_max": max(Ls)}
    if p["pair"].lambda2 > 0:
        summary["L_exact_on_spectrum"] = lyapunov_exact(p["pair"])
    return summary, True


def cmd_acceleration(p, pool_map):
    angle = _auto_z(p, 1)[0] if p["z"] == "auto-spectrum" else float(p["z"])
    z = complex(math.cos(angle), math.sin(angle))
    prof = acceleration_profile(p["pair"], z, p["freq"], int(p["n"]), _eps_grid(p), p["variant"],
                                float(p["theta"]), map_fn=pool_map)
    rows = []
    for e, L, s in zip(prof.epsilons, prof.L_values, prof.point_slopes):
        omega = "" if math.isnan(s) else int(round(s / (2 * math.pi)))
        rows.append((e, L, "nan" if math.isnan(s) else s, omega))
    _write_csv(p["out"], ["epsilon", "L", "slope", "omega"], rows)
    summary = {"z_angle": angle, "accelerations": [int(a) for a in prof.accelerations],
               "slopes_over_2pi": [s / (2 * math.pi) for s in prof.slopes],
               "kinks": prof.kinks, "asymmetry": prof.asymmetry(), "max_fit_residual": prof.max_residual}
    if p["variant"] == "B" and p["pair"].lambda2 > 0:
        summary["log_lambda0"] = math.log(lambda0(p["pair"]))
    return summary, True


def cmd_duality(p, pool_map):
    f = _rational_for(p["freq"], 144)
    pair, tau = p["pair"], float(p["tau"])
    eigs = localized_eigenpairs(pair, f, float(p["theta"]), int(p["top_m"]))
    cuts = [truncate_to_tail_mass(e.psi, tau) for e in eigs]
    half = f.q // 2 + 8
    xis = [j / int(p["xi_count"]) for j in range(int(p["xi_count"]))]

    def one(xi):
        res = [dual_residual(pair, e.z, dual_solution(c, float(p["theta"]), f, xi, (-half, half)), f, xi)
               for e, (c, _) in zip(eigs, cuts)]
        return xi, max(res), float(np.median(res)), max(m for _, m in cuts)

    rows = list(pool_map(one, xis))
    _write_csv(p["out"], ["xi", "residual_max", "residual_median", "tail_mass"], rows)
    worst = max(r[1] for r in rows)
    return {"frequency": str(f), "bound_10_sqrt_tau": 10 * math.sqrt(tau), "residual_max": worst}, True


def cmd_cmv(p, pool_map):
    m = int(p["m"])
    dev = cmv_equals_walk(p["pair"], p["freq"], float(p["theta"]), m)
    pairs = walk_to_verblunsky(p["pair"], p["freq"], float(p["theta"]), (-m, m))
    _write_json(p["out"], verblunsky_records(pairs))
    return {"max_deviation": dev}, dev <= 1e-12


def cmd_cocycle_verify(p, pool_map):
    rng = np.random.default_rng(int(p["seed"]))
    refl = 0.0
    for _ in range(1000):
        l1, l2 = rng.uniform(0.05, 0.95, 2)
        z = np.exp(1j * rng.uniform(0, 2 * math.pi)) * rng.uniform(0.5, 2.0)
        spec = CocycleSpec("A", CouplingPair(l1, l2), z, float(rng.uniform(-0.1, 0.1)))
        refl = max(refl, reflection_check(spec, float(rng.uniform(0, 1))))
    ts = np.linspace(0, 1, 9)
    es = np.linspace(-0.3, 0.3, 7)
    quad = max(abs(log_integral_quadrature(t, e) - log_integral_closed(t, e)) for t in ts for e in es)
    real = 0.0
    for _ in range(200):
        pair = CouplingPair(*rng.uniform(0.05, 0.95, 2))
        A = realify(pair, np.exp(1j * rng.uniform(0, 2 * math.pi)), float(rng.uniform(0, 1)))
        real = max(real, float(np.max(np.abs(A.imag))), abs(float(np.linalg.det(A.real)) - 1.0))
    mono = min(argument_derivative_check(CouplingPair(*rng.uniform(0.1, 0.9, 2)), float(rng.uniform(0, 1)))
               for _ in range(5))
    e0 = epsilon0(1 / math.sqrt(2))
    report = {
        "reflection_max_residual": refl,
        "log_integral_max_error": quad,
        "realify_max_error": real,
        "min_argument_derivative": mono,
        "epsilon0_at_inv_sqrt2": e0,
    }
    ok = refl < 1e-12 and quad < 1e-8 and real < 1e-12 and mono > 0 and round(e0, 4) == 0.1403
    report["ok"] = ok
    _write_json(p["out"], report)
    return report, ok


def cmd_measure_trend(p, pool_map):
    f = p["freq"]
    if f.is_rational:
        raise InvalidParameterError("measure-trend needs an irrational --phi (uses its convergents)")
    convs = [c for c in convergents(f.value, 64) if 2 <= c[1] <= int(p["qmax"])]
    trend = band_measure_trend(p["pair"], convs, float(p["theta"]))
    _write_csv(p["out"], ["q", "measure"], zip(trend.qs, trend.measures))
    return {"qs": trend.qs, "strictly_decreasing": trend.strictly_decreasing}, True


def cmd_walk2d(p, pool_map):
    f, L = p["freq"], int(p["L"])
    tw = walk2d_build(p["pair"], f, L)
    W = tw.matrix
    unit = float(np.max(np.abs(W.conj().T @ W - np.eye(W.shape[0]))))
    U1, U2 = magnetic_shift(1, f, L), magnetic_shift(2, f, L)
    comm = float(np.max(np.abs(U1 @ U2 - np.exp(-2j * math.pi * f.value) * U2 @ U1)))
    ang = walk2d_spectrum(tw)
    _write_csv(p["out"], ["angle"], ([a] for a in ang))
    summary = {"unitarity_residual": unit, "commutation_residual": comm}
    if p["pair"].lambda1 > 0 and p["pair"].lambda2 > 0:
        thetas = [j / (8 * f.q) for j in range(8)]
        bands = union_band_set(p["pair"], f, thetas, map_fn=pool_map)
        summary["hausdorff_to_1d"] = BandSet([(a, a) for a in ang], tol=0.0).hausdorff(bands)
    return summary, unit < 1e-10 and comm < 1e-12


HANDLERS = {
    "butterfly": cmd_butterfly,
    "dynamics": cmd_dynamics,
    "lyapunov": cmd_lyapunov,
    "acceleration": cmd_acceleration,
    "duality": cmd_duality,
    "cmv-check": cmd_cmv,
    "cocycle-verify": cmd_cocycle_verify,
    "measure-trend": cmd_measure_trend,
    "walk2d-check": cmd_walk2d,
}


def _echo(p: dict, keys) -> dict:
    """Resolved values of the flags the command accepts."""
    out = {k: p[k] for k in sorted(keys) if k in p and k not in ("pair", "freq")}
    out["phi_resolved"] = str(p["freq"])
    out["phi_value"] = p["freq"].value
    return out


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        p = resolve(args)
        cmd = args.command
        threads = int(p["threads"])
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                summary, ok = HANDLERS[cmd](p, ex.map)
        else:
            summary, ok = HANDLERS[cmd](p, map)
        _write_json(manifest_path(p["out"]), {
            "command": cmd, "version": __version__, "parameters": _echo(p, set(vars(args)) - {"command", "config"}),
            "outputs": [p["out"]], "summary": summary, "ok": ok,
        })
        print(json.dumps(_jsonable(summary), sort_keys=True))
        if not ok:
            raise CLIError(EXIT_NUMERIC, f"{cmd}: verification failed")
        return EXIT_OK
    except CLIError as exc:
        code, msg = exc.code, str(exc)
    except InvalidParameterError as exc:
        code, msg = EXIT_ARGS, str(exc)
    except UAMOError as exc:
        code, msg = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, str(exc)
    print(json.dumps({"code": code, "message": msg}), file=sys.stderr)
    return code


def main():  # pragma: no cover - console script
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
