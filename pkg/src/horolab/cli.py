"""Command-line driver: configuration, experiment runners and persistence.

Every subcommand resolves its parameters from built-in defaults, then an
optional ``key = value`` config file, then command-line flags (flags win).
Results go to ``<out>/<command>.csv`` (or ``.json``) together with a
deterministic ``<command>.summary.json``; timings live only in the separate
``<command>.manifest.json`` so reruns give byte-identical result files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, sl2
from .averages import SamplingScheme, empirical_correlation, l2_norms, orbit_frames, reversibility_drift
from .dimension import MODES, GridSpec, box_count_bad, predicted_bound
from .errors import (
    DegenerateFitError,
    DomainError,
    HorolabError,
    InvalidElementError,
    ParameterError,
    ResourceError,
)
from .expsum import as_poly, exact_grid_size, moment_integral, weyl_sum_many
from .fitting import fit_power_law
from .funcspace import make_height_band, zero
from .parallel import default_threads
from .specfun import KirillovFunction, bn_spectral_norms

ENV_OUT = "HOROLAB_OUT"
DEFAULT_OUT = "horolab_out"
EXIT_OK, EXIT_TOL, EXIT_USAGE = 0, 1, 2
GAP_FREE_CEILING = 0.2


class UsageError(Exception):
    """Invalid configuration detected before any computation starts."""


# ---------------------------------------------------------------- value parsers

def _int(v) -> int:
    try:
        f = float(v)
    except ValueError:
        raise UsageError(f"expected an integer, got {v!r}") from None
    if f != int(f):
        raise UsageError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v) -> float:
    try:
        return float(Fraction(str(v).strip())) if "/" in str(v) else float(v)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"expected a number, got {v!r}") from None


def _bool(v) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {v!r}")


def _items(v) -> list[str]:
    return [s.strip() for s in str(v).replace(";", ",").split(",") if s.strip()]


def int_list(v) -> list[int]:
    """Comma list of integers; ``2^a..2^b`` expands to consecutive powers of two."""
    out = []
    for item in _items(v):
        if ".." in item:
            lo, hi = item.split("..")
            if lo.startswith("2^") and hi.startswith("2^"):
                out.extend(2**k for k in range(_int(lo[2:]), _int(hi[2:]) + 1))
            else:
                out.extend(range(_int(lo), _int(hi) + 1))
        else:
            out.append(_int(item))
    return out


def float_list(v) -> list[float]:
    return [_float(x) for x in _items(v)]


def rational_list(v) -> list[Fraction]:
    try:
        return [Fraction(x) for x in _items(v)]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"expected rationals such as 1/2 or 0.2, got {v!r}") from None


def _range(v) -> tuple[float, float]:
    vals = float_list(v)
    if len(vals) != 2:
        raise UsageError(f"expected 'lo,hi', got {v!r}")
    return vals[0], vals[1]


def _complex(v) -> complex:
    try:
        return complex(str(v).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise UsageError(f"expected a complex number such as 0.1+1.3j, got {v!r}") from None


def _choice(*options) -> Callable:
    def conv(v):
        if str(v) not in options:
            raise UsageError(f"expected one of {', '.join(options)}, got {v!r}")
        return str(v)

    return conv


def _poly(v) -> tuple[int, ...]:
    return tuple(_int(x) for x in _items(v))


def _scheme(v) -> SamplingScheme:
    s = str(v).strip()
    if s == "squares":
        return SamplingScheme.squares()
    if s == "linear":
        return SamplingScheme.linear()
    if s == "primes":
        return SamplingScheme.primes()
    if s.startswith("poly:"):
        return SamplingScheme.polynomial(_poly(s[5:]))
    raise UsageError(f"unknown scheme {s!r}; use squares, linear, primes or poly:c0,c1,...")


def _weights(v) -> tuple:
    out = []
    for item in _items(v):
        n, _, c = item.partition(":")
        out.append((_int(n), complex(c.replace("i", "j")) if c else 1.0))
    return tuple(out)


# ---------------------------------------------------------------- configuration

COMMON = {
    "seed": (_int, None),
    "threads": (_int, None),
    "out": (str, None),
    "tol": (_float, None),
    "format": (_choice("csv", "json"), "csv"),
}

BAND = {
    "observable": (_choice("band", "zero"), "band"),
    "band_y0": (_float, 1.5),
    "band_y1": (_float, 2.5),
    "band_w": (_float, 0.5),
    "band_mode": (_int, 0),
    "mean_samples": (_int, 1_000_000),
}

OPTIONS: dict[str, dict[str, tuple]] = {
    "orbit": {"scheme": (str, "squares"), "N": (_int, 16), "z": (str, "1j"), "theta": (_float, 0.0)},
    "decay": {**BAND, "scheme": (str, "squares"), "Ns": (str, "2^4..2^9"), "samples": (_int, 20000),
              "orbit_mode": (_choice("flow", "iid"), "flow")},
    "moments": {"poly": (str, "0,0,1"), "q": (_int, 4), "Ns": (str, "2^5..2^11")},
    "weyl": {"poly": (str, "0,0,1"), "N": (_int, 100), "ts": (str, ""), "grid": (_int, 64)},
    "bn-norm": {"poly": (str, "0,0,1"), "Ns": (str, "2^4..2^10"), "s": (str, "0.05,0.15,0.30,0.45"),
                "weights": (str, "0:1"), "alpha": (_float, 0.2), "beta": (_float, 0.1)},
    "boxdim": {**BAND, "scheme": (str, "squares"), "N": (_int, 256), "gamma": (_float, 0.05),
               "delta": (_float, 0.05), "x_range": (str, "-0.5,0.5"), "y_range": (str, "1.0,2.0"),
               "theta_range": (str, f"0,{repr(sl2.TWO_PI)}"), "probe": (_choice("center", "three"), "center"),
               "alpha2": (str, ""), "eps": (_float, 0.0), "predict_mode": (str, "mixing"), "rate": (str, "1/2")},
    "predict": {"modes": (str, ""), "d": (str, "2"), "rates": (str, "")},
    "correlate": {**BAND, "ks": (str, "1,2,4,8,16,32,64"), "samples": (_int, 20000)},
}

STOCHASTIC = {"decay", "correlate"}


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Parse a ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


@dataclass
class RunConfig:
    """Fully resolved and validated parameters of one run."""

    command: str
    params: dict
    seed: int | None
    threads: int
    out: Path | None
    tol: float | None
    fmt: str

    def echo(self) -> dict:
        return {"command": self.command, "seed": self.seed, "tol": self.tol, **self.params}

    def digest(self) -> str:
        blob = json.dumps(_jsonable(self.echo()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def resolve(command: str, flags: dict) -> RunConfig:
    """Defaults < config file < flags; unknown keys and bad values are usage errors."""
    spec = {**COMMON, **OPTIONS[command]}
    raw = {k: v for k, (_, v) in spec.items()}
    if flags.get("config"):
        from_file = read_config(flags["config"])
        unknown = sorted(set(from_file) - set(spec))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        raw.update(from_file)
    raw.update({k: v for k, v in flags.items() if k != "config" and v is not None})
    vals = {}
    for key, (conv, default) in spec.items():
        v = raw[key]
        vals[key] = v if v is None or v is default else conv(v)
    if command in STOCHASTIC and vals["seed"] is None:
        raise UsageError(f"{command} is stochastic and needs --seed")
    if vals["seed"] is not None and not 0 <= vals["seed"] < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    threads = default_threads() if vals["threads"] is None else vals["threads"]
    if threads < 1:
        raise UsageError("threads must be at least 1")
    out = vals["out"] if vals["out"] is not None else os.environ.get(ENV_OUT)
    params = {k: vals[k] for k in OPTIONS[command]}
    return RunConfig(command, params, vals["seed"], threads, Path(out) if out else None, vals["tol"], vals["format"])


# ---------------------------------------------------------------- persistence

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(cfg: RunConfig, columns: list[str], units: list[str], rows) -> str:
    lines = [
        f"# horolab {cfg.command} {__version__}",
        f"# columns: {','.join(columns)}",
        f"# units: {','.join(units)}",
        f"# config_sha256: {cfg.digest()}",
        ",".join(columns),
    ]
    lines += [",".join(fmt_value(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def render_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class Table:
    columns: list[str]
    units: list[str]
    rows: list = field(default_factory=list)


@dataclass
class RunManifest:
    """Config echo, timings and summary of a finished run (the only non-deterministic output)."""

    config: dict
    config_sha256: str
    version: str = __version__
    status: str = "ok"
    failures: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    outputs: list = field(default_factory=list)


class Run:
    """Bookkeeping for one subcommand: stage timers, failures and output files."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.t0 = time.perf_counter()
        self.stages: dict[str, float] = {}
        self.failures: list[str] = []
        self.summary: dict = {}

    def stage(self, name: str, fn: Callable, *args, **kw):
        t = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t

    def fail(self, msg: str) -> None:
        self.failures.append(msg)

    def finish(self, table: Table | None, stream=None) -> int:
        cfg = self.cfg
        outputs = []
        if cfg.out is not None:
            base = cfg.out / cfg.command
            if table is not None:
                if cfg.fmt == "csv":
                    path = base.with_suffix(".csv")
                    atomic_write(path, render_csv(cfg, table.columns, table.units, table.rows))
                else:
                    path = base.with_suffix(".json")
                    atomic_write(path, render_json({"command": cfg.command, "config_sha256": cfg.digest(),
                                                    "columns": table.columns, "units": table.units,
                                                    "rows": table.rows, "summary": self.summary}))
                outputs.append(path.name)
            summ = cfg.out / f"{cfg.command}.summary.json"
            atomic_write(summ, render_json({"config": cfg.echo(), "config_sha256": cfg.digest(),
                                            "status": self.status, "failures": self.failures,
                                            "summary": self.summary}))
            outputs.append(summ.name)
            man = RunManifest(cfg.echo(), cfg.digest(), status=self.status, failures=self.failures,
                              stages=self.stages, summary=self.summary,
                              wall_time_s=time.perf_counter() - self.t0, outputs=outputs)
            man.config["threads"] = cfg.threads
            atomic_write(cfg.out / f"{cfg.command}.manifest.json", render_json(man.__dict__))
        for msg in self.failures:
            print(f"horolab: tolerance failure: {msg}", file=sys.stderr)
        return EXIT_OK if not self.failures else EXIT_TOL

    @property
    def status(self) -> str:
        return "ok" if not self.failures else "tolerance_failure"


def _observable(p: dict):
    if p["observable"] == "zero":
        return zero()
    return make_height_band(p["band_y0"], p["band_y1"], p["band_w"], mode=p["band_mode"],
                            mean_samples=p["mean_samples"])


def _fit(Ns, values, errors=None) -> dict:
    """Power-law fit summary, or the reason it was refused."""
    pairs = [(n, v, e) for n, v, e in zip(Ns, values, errors or [None] * len(Ns)) if v > 0]
    if len({n for n, _, _ in pairs}) < 2:
        return {"exponent": None, "stderr": None, "refused": "need at least two distinct positive points"}
    try:
        fit = fit_power_law([q[0] for q in pairs], [q[1] for q in pairs],
                            [q[2] for q in pairs] if errors is not None else None)
    except DegenerateFitError as exc:
        return {"exponent": None, "stderr": None, "refused": str(exc)}
    return {"exponent": fit.exponent, "stderr": fit.stderr}


# ---------------------------------------------------------------- subcommands

def cmd_orbit(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    scheme = _scheme(p["scheme"])
    if p["N"] < 0:
        raise UsageError("N must be nonnegative")
    x = sl2.PointX.at(_complex(p["z"]), p["theta"])
    times = scheme.times(p["N"]) if p["N"] else np.zeros(0, dtype=np.int64)
    frames = run.stage("orbit", orbit_frames, x, times)
    table = Table(["n", "p_n", "re_z", "im_z", "theta"], ["1", "time", "1", "1", "rad"])
    if len(frames):
        z, th = sl2.coords_from_frame(frames[:, 0], frames[:, 1], frames[:, 2], frames[:, 3])
        table.rows = [(n, int(t) if isinstance(t, (int, np.integer)) else float(t), float(zz.real), float(zz.imag),
                       float(tt)) for n, (t, zz, tt) in enumerate(zip(times, np.atleast_1d(z), np.atleast_1d(th)))]
        tol = 1e-6 if cfg.tol is None else cfg.tol
        drift = run.stage("reversibility", reversibility_drift, x, times)
        run.summary["reversibility_drift"] = drift
        if drift > tol:
            run.fail(f"orbit reversibility drift {drift:.3g} exceeds {tol:.3g}")
    run.summary["N"] = p["N"]
    return table


def cmd_decay(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    Ns = int_list(p["Ns"])
    if not Ns or min(Ns) < 1:
        raise UsageError("Ns must be a nonempty list of positive integers")
    scheme = _scheme(p["scheme"])
    f = run.stage("observable", _observable, p)
    norms, errs = run.stage("sampling", l2_norms, f, scheme, Ns, p["samples"], cfg.seed,
                            threads=cfg.threads, orbit=p["orbit_mode"])
    Ns = sorted(set(Ns))
    run.summary["fit"] = _fit(Ns, norms, errs)
    return Table(["N", "norm", "stderr"], ["1", "L2", "L2"], list(zip(Ns, norms, errs)))


def cmd_moments(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    poly = as_poly(_poly(p["poly"]))
    q = p["q"]
    if q < 2 or q % 2:
        raise UsageError("q must be a positive even integer")
    Ns = int_list(p["Ns"])
    if not Ns or min(Ns) < 1:
        raise UsageError("Ns must be a nonempty list of positive integers")
    tol = 1e-6 if cfg.tol is None else cfg.tol
    table = Table(["N", "grid", "moment", "moment_doubled"], ["1", "1", "1", "1"])
    for N in sorted(set(Ns)):
        need = exact_grid_size(poly, N, q)
        G = 1 << (need - 1).bit_length()
        m1 = run.stage("moments", moment_integral, poly, N, q, G)
        m2 = run.stage("check", moment_integral, poly, N, q, 2 * G)
        table.rows.append((N, G, m1, m2))
        if abs(m2 - m1) > tol * abs(m1):
            run.fail(f"N={N}: grid doubling moved the moment by {abs(m2 - m1):.3g}")
    Nu = [r[0] for r in table.rows]
    vals = [r[2] for r in table.rows]
    if len(Nu) >= 4:
        fit = fit_power_law(Nu, vals)
        run.summary["level"] = {"exponent": fit.exponent, "stderr": fit.stderr}
    else:
        run.summary["level"] = {"exponent": None, "stderr": None, "refused": "need at least four distinct N"}
    run.summary["q"] = q
    return table


def cmd_weyl(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    poly = as_poly(_poly(p["poly"]))
    if p["N"] < 0:
        raise UsageError("N must be nonnegative")
    if p["ts"]:
        ts = np.array(float_list(p["ts"]))
    else:
        if p["grid"] < 1:
            raise UsageError("grid must be positive")
        ts = np.arange(p["grid"]) / p["grid"]
    S = run.stage("weyl", weyl_sum_many, poly, p["N"], ts) if p["N"] else np.zeros(len(ts), complex)
    rows = [(float(t), float(s.real), float(s.imag), float(abs(s))) for t, s in zip(ts, S)]
    return Table(["t", "re_S", "im_S", "abs_S"], ["1", "1", "1", "1"], rows)


def cmd_bn_norm(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    poly = as_poly(_poly(p["poly"]))
    Ns = int_list(p["Ns"])
    if not Ns or min(Ns) < 1:
        raise UsageError("Ns must be a nonempty list of positive integers")
    svals = float_list(p["s"])
    if not svals:
        raise UsageError("need at least one spectral parameter s")
    weights = _weights(p["weights"])
    fhats = [KirillovFunction(s, weights) for s in svals]
    table = Table(["N", "s", "total", "zone_gap", "zone_moment", "zone_tail", "error", "beyond_cut",
                   "t1", "t2", "t_cut", "grid"], ["1", "1", "L2^2", "L2^2", "L2^2", "L2^2", "L2^2", "L2^2",
                                                   "freq", "freq", "freq", "1"])
    per_s = {s: [] for s in svals}
    for N in sorted(set(Ns)):
        res = run.stage("bn_norm", bn_spectral_norms, poly, N, fhats, alpha=p["alpha"], beta=p["beta"])
        for s, r in zip(svals, res):
            table.rows.append((N, s, r.total, r.zones["gap"], r.zones["moment"], r.zones["tail"], r.error,
                               r.beyond_cut, *r.boundaries, r.grid))
            per_s[s].append(r.total)
            if cfg.tol is not None and r.error > cfg.tol * max(abs(r.total), 1e-300):
                run.fail(f"N={N}, s={s}: error estimate {r.error:.3g} exceeds tol * total")
    Nu = sorted(set(Ns))
    fits = {}
    for s, vals in per_s.items():
        fit = _fit(Nu, vals)
        delta = None if fit["exponent"] is None else fit["exponent"] / 2.0
        fits[repr(s)] = {"two_delta": fit["exponent"], "delta": delta,
                         "stderr": None if fit["stderr"] is None else fit["stderr"] / 2.0,
                         **({"refused": fit["refused"]} if "refused" in fit else {})}
    run.summary["fits"] = fits
    deltas = [v["delta"] for v in fits.values() if v["delta"] is not None]
    run.summary["delta_spread"] = max(deltas) - min(deltas) if deltas else None
    run.summary["delta_ceiling"] = GAP_FREE_CEILING
    return table


def cmd_boxdim(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    scheme = _scheme(p["scheme"])
    grid = GridSpec(_range(p["x_range"]), _range(p["y_range"]), _range(p["theta_range"]), p["delta"])
    if p["probe"] == "three" and cfg.seed is None:
        raise UsageError("three-probe mode is stochastic and needs --seed")
    alpha2 = _float(p["alpha2"]) if p["alpha2"] else None
    f = run.stage("observable", _observable, p)
    est = run.stage("classify", box_count_bad, f, p["N"], p["gamma"], grid, scheme, mode=p["probe"],
                    rng=cfg.seed, alpha2=alpha2, eps=p["eps"])
    rate = rational_list(p["rate"])
    if len(rate) != 1:
        raise UsageError("rate must be a single value")
    d = scheme.degree or 1
    run.summary.update({
        "N": est.N, "gamma": est.gamma, "delta": est.delta, "good": est.good, "bad": est.bad,
        "total": est.total, "bad_fraction": est.bad_fraction, "bad_fraction_stderr": est.bad_fraction_stderr,
        "empirical_ratio": est.ratio, "packing_ratio": est.packing, "probe": est.mode,
        "predicted_bound": {"mode": p["predict_mode"], "d": d, "rate": rate[0],
                            "value": predicted_bound(p["predict_mode"], d, rate[0])},
    })
    rows = [(float(c[0]), float(c[1]), float(c[2]), float(a), bool(g))
            for c, a, g in zip(est.cells, est.averages, est.flags)]
    return Table(["re_z", "im_z", "theta", "average", "good"], ["1", "1", "rad", "1", "bool"], rows)


def predict_rows(p: dict) -> list[tuple]:
    ds = [_int(v) for v in _items(p["d"])]
    if not ds:
        raise UsageError("need at least one degree d")
    if p["modes"] or p["rates"]:
        modes = _items(p["modes"]) or list(MODES)
        rates = rational_list(p["rates"]) or [Fraction(1, 2)]
        for m in modes:
            if m not in MODES:
                raise UsageError(f"invalid mode {m!r}; expected one of {', '.join(MODES)}")
        cases = [(m, d, r) for m in modes for d in ds for r in rates]
    else:
        # the three reference cases: Re(s1) = 1/2, Re(s1) = 25/64 and the gap-free ceiling
        cases = [("spectral", d, Fraction(1, 2)) for d in ds] + [("spectral", d, Fraction(25, 64)) for d in ds] \
            + [("gap_free", d, Fraction(1, 5)) for d in ds]
    rows = []
    for m, d, r in cases:
        recipes = ("printed", "stated") if m == "spectral" else ("printed",)
        for rec in recipes:
            b = predicted_bound(m, d, r, recipe=rec)
            rows.append((m, d, r, rec, b, float(b)))
    return rows


def cmd_predict(cfg: RunConfig, run: Run) -> Table:
    rows = predict_rows(cfg.params)
    table = Table(["mode", "d", "rate", "recipe", "bound", "value"], ["", "1", "1", "", "dim", "dim"], rows)
    if cfg.fmt == "json":
        text = render_json([dict(zip(table.columns, r)) for r in rows])
    else:
        # shortest round-trip floats so the text and JSON tables print the same numbers
        cells = [[repr(v) if isinstance(v, float) else fmt_value(v) for v in r] for r in rows]
        text = "\n".join([",".join(table.columns)] + [",".join(c) for c in cells]) + "\n"
    sys.stdout.write(text)
    return table


def cmd_correlate(cfg: RunConfig, run: Run) -> Table:
    p = cfg.params
    ks = float_list(p["ks"])
    if not ks:
        raise UsageError("ks must be a nonempty list")
    f = run.stage("observable", _observable, p)
    rows = []
    for j, k in enumerate(ks):
        # one child seed per lag so adding lags leaves earlier rows unchanged
        seed = np.random.SeedSequence([cfg.seed, j])
        c, se = run.stage("sampling", empirical_correlation, f, k, p["samples"], seed, threads=cfg.threads)
        rows.append((k, c, se))
    pos = [(k, abs(c), se) for k, c, se in rows if k > 0 and c != 0]
    run.summary["fit"] = _fit([r[0] for r in pos], [r[1] for r in pos], [r[2] for r in pos])
    return Table(["k", "correlation", "stderr"], ["time", "1", "1"], rows)


COMMANDS = {
    "orbit": cmd_orbit, "decay": cmd_decay, "moments": cmd_moments, "weyl": cmd_weyl,
    "bn-norm": cmd_bn_norm, "boxdim": cmd_boxdim, "predict": cmd_predict, "correlate": cmd_correlate,
}

HELP = {
    "orbit": "sparse orbit of a point as (n, p(n), Re z, Im z, theta)",
    "decay": "Monte Carlo L2 norms of sparse averages and their decay exponent",
    "moments": "exact Weyl-sum moments and the fitted cancellation level",
    "weyl": "Weyl sums S_N(t) on a list or grid of t",
    "bn-norm": "spectral norm of B_N per zone and the fitted gap-free exponent",
    "boxdim": "box count of cells without good points, with predicted bounds",
    "predict": "table of predicted dimension bounds",
    "correlate": "Monte Carlo correlations <u_k f, f>",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horolab", description="Sparse horocycle averages on the modular surface.")
    parser.add_argument("--version", action="version", version=f"horolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", metavar="PATH", help="key = value file; flags override it")
        sp.add_argument("--seed", metavar="U64")
        sp.add_argument("--threads", metavar="N", help="worker threads (default: all cores)")
        sp.add_argument("--out", metavar="DIR", help=f"output directory (default: ${ENV_OUT} or ./{DEFAULT_OUT})")
        sp.add_argument("--tol", metavar="REAL")
        sp.add_argument("--format", choices=("csv", "json"))
        for key, (_, default) in OPTIONS[name].items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="VALUE",
                            help=f"default: {default}" if default not in (None, "") else None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        cfg = resolve(args.command, flags)
        if cfg.out is None and args.command != "predict":
            cfg.out = Path(DEFAULT_OUT)
        run = Run(cfg)
        table = COMMANDS[args.command](cfg, run)
        return run.finish(table)
    except (UsageError, ParameterError, DomainError, InvalidElementError, ResourceError) as exc:
        print(f"horolab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HorolabError as exc:
        print(f"horolab {args.command}: failure: {exc}", file=sys.stderr)
        return EXIT_TOL


if __name__ == "__main__":
    sys.exit(main())
