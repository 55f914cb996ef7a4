"""Command-line interface: ``csc gen|fit|eval|compare``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

import argparse
import configparser
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import struct
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .admm_baselines import AdmmConfig, cscl1_fit, cscl2_fit, wcsc_bcd_solve
from .csc_core import random_init, reconstruct
from .errors import CSCError, NumericalError
from .gcsc_em import GcscConfig, first_m_step_problem
from .gcsc_em import fit as gcsc_fit
from .signal_fft import set_workers
from .synth_bench import (DEFAULT_BETA, METHODS, ExperimentConfig, NoiseSpec, SynthConfig,
                          make_dataset, mae, rmse, run_experiment)
from .wcsc_niapg import niapg_solve

log = logging.getLogger("gcsc")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
MAGIC = b"CSCSIG01"
FLOAT_FMT = "%.17g"
CLI_METHODS = ("gcsc", "cscl2", "cscl1", "wcsc-bcd")


class UsageError(Exception):
    """Bad arguments, config or input files (exit code 2)."""


def fmt(x):
    return FLOAT_FMT % x


# ----------------------------------------------------------------- file formats

def write_signals(path, X):
    """Binary SignalFile: magic, uint64 N, uint64 P, little-endian f64 payload."""
    X = np.ascontiguousarray(X, dtype="<f8")
    if X.ndim != 2:
        raise ValueError("signal arrays must be 2-D")
    path = Path(path)
    if path.suffix == ".csv":
        write_csv_rows(path, X)
        return
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", *X.shape))
        fh.write(X.tobytes())


def read_signals(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{path}: no such file")
    if path.suffix == ".csv":
        return read_csv_rows(path)
    raw = path.read_bytes()
    if len(raw) < 24 or raw[:8] != MAGIC:
        raise UsageError(f"{path}: not a signal file (bad header)")
    N, P = struct.unpack("<QQ", raw[8:24])
    if len(raw) - 24 != N * P * 8:
        raise UsageError(f"{path}: payload has {len(raw) - 24} bytes, header says {N * P * 8}")
    X = np.frombuffer(raw, dtype="<f8", offset=24).reshape(N, P).astype(np.float64)
    if not np.all(np.isfinite(X)):
        raise UsageError(f"{path}: contains NaN or Inf")
    return X


def write_csv_rows(path, A):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(A):
            w.writerow([fmt(v) for v in row])


def read_csv_rows(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise UsageError(f"{path}: empty file")
    if len({len(r) for r in rows}) != 1:
        raise UsageError(f"{path}: rows have different lengths")
    try:
        A = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(A)):
        raise UsageError(f"{path}: contains NaN or Inf")
    return A


def write_codes(path, Z):
    N, K, P = Z.shape
    write_signals(path, Z.reshape(N * K, P))


def read_codes(path, K):
    A = read_signals(path)
    if A.shape[0] % K:
        raise UsageError(f"{path}: {A.shape[0]} rows is not a multiple of K={K}")
    return A.reshape(A.shape[0] // K, K, A.shape[1])


def write_gmm(path, params):
    lines = [f"G = {params.G}"]
    for g in range(params.G):
        lines.append(f"pi_{g} = {fmt(params.pi[g])}")
        lines.append(f"mu_{g} = " + " ".join(fmt(v) for v in params.mu[g]))
        lines.append(f"var_{g} = " + " ".join(fmt(v) for v in params.var[g]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_gmm(path):
    """Parse ``gmm.txt`` into ``(pi, mu, var)`` arrays."""
    kv = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            kv[k.strip()] = v.split()
    G = int(kv["G"][0])
    pi = np.array([float(kv[f"pi_{g}"][0]) for g in range(G)])
    mu = np.array([[float(x) for x in kv[f"mu_{g}"]] for g in range(G)])
    var = np.array([[float(x) for x in kv[f"var_{g}"]] for g in range(G)])
    return pi, mu, var


def write_trace(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective", "seconds"])
        for it, obj, sec in rows:
            w.writerow([it, fmt(obj), fmt(sec)])


def write_dat(path, times, values):
    with open(path, "w") as fh:
        for t, v in zip(times, values):
            fh.write(f"{fmt(t)} {fmt(v)}\n")


def _hash_inputs(paths, config_text):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    h.update(config_text.encode())
    return h.hexdigest()


def write_manifest(out, command, config, seed, inputs, config_text, started):
    man = {
        "command": command,
        "version": __version__,
        "backend": _accel.backend(),
        "seed": seed,
        "config": config,
        "input_hash": _hash_inputs(inputs, config_text),
        "inputs": [str(p) for p in inputs],
        "started": started,
        "finished": _now(),
    }
    Path(out, "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True, default=str)
                                          + "\n")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


# ----------------------------------------------------------------------- config

SYNTH_KEYS = {"n": int, "p": int, "k": int, "m": int, "shapes": str, "seed": int}
NOISE_KEYS = {"kind": str, "scale": float, "membership": str, "seed": int}
FIT_KEYS = {"method": str, "beta": float, "g": int, "em_tol": float, "em_max_iter": int,
            "inner_tol": float, "inner_max_iter": int, "merge_threshold": float,
            "merge_normalize": bool, "mu_update": str, "solver": str, "init_codes": str,
            "warmup_max_iter": int, "min_component_mass": float, "seed": int,
            "rho": float, "admm_inner_tol": float, "admm_max_inner": int,
            "admm_outer_tol": float, "admm_max_outer": int}
COMPARE_KEYS = {"kinds": str, "methods": str, "seeds": str, "solver_max_iter": int,
                "solver_tol": float}
SECTIONS = {"synth": SYNTH_KEYS, "noise": NOISE_KEYS, "fit": FIT_KEYS, "compare": COMPARE_KEYS}


def load_config(path):
    """Read an INI config and return ``(values, raw_text)``.

    ``values`` maps section -> {key: typed value}; unknown sections or keys
    and unparsable values raise :class:`UsageError` naming the key.
    """
    if path is None:
        return {s: {} for s in SECTIONS}, ""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{path}: no such config file")
    text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from None
    out = {s: {} for s in SECTIONS}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise UsageError(f"{path}: unknown section [{sec}]")
        schema = SECTIONS[sec]
        for key, raw in cp.items(sec):
            if key not in schema:
                raise UsageError(f"{path}: unknown key '{key}' in [{sec}]")
            typ = schema[key]
            try:
                out[sec][key] = cp.getboolean(sec, key) if typ is bool else typ(raw)
            except ValueError:
                raise UsageError(f"{path}: [{sec}] {key} = {raw!r} is not a valid "
                                 f"{typ.__name__}") from None
    return out, text


def _synth_config(cfg, seed=None):
    s = dict(cfg["synth"])
    kw = {k.upper() if k in ("n", "p", "k", "m") else k: v for k, v in s.items()}
    if "shapes" in kw:
        kw["shapes"] = tuple(x.strip() for x in kw["shapes"].split(",") if x.strip())
    if seed is not None:
        kw["seed"] = seed
    return SynthConfig(**kw)


def _noise_spec(cfg, synth_seed):
    kw = dict(cfg["noise"])
    kw.setdefault("seed", synth_seed)
    return NoiseSpec(**kw)


def _admm_config(f):
    kw = {"rho": f.get("rho"), "inner_tol": f.get("admm_inner_tol"),
          "max_inner": f.get("admm_max_inner"), "outer_tol": f.get("admm_outer_tol"),
          "max_outer": f.get("admm_max_outer")}
    return AdmmConfig(**{k: v for k, v in kw.items() if v is not None})


def _gcsc_config(f, K, M, beta, seed, solver=None):
    names = {"g": "G", "em_tol": "em_tol", "em_max_iter": "em_max_iter", "inner_tol": "inner_tol",
             "inner_max_iter": "inner_max_iter", "merge_threshold": "merge_threshold",
             "merge_normalize": "merge_normalize", "mu_update": "mu_update",
             "solver": "solver", "init_codes": "init_codes",
             "warmup_max_iter": "warmup_max_iter", "min_component_mass": "min_component_mass"}
    kw = {names[k]: v for k, v in f.items() if k in names}
    if solver is not None:
        kw["solver"] = solver
    return GcscConfig(K=K, M=M, beta=beta, seed=seed, admm=_admm_config(f), **kw)


def _method_key(name):
    key = name.replace("-", "_")
    if key not in METHODS:
        raise UsageError(f"unknown method {name!r}; choose from {', '.join(CLI_METHODS)}")
    return key


# --------------------------------------------------------------------- commands

def cmd_gen(args):
    cfg, text = load_config(args.config)
    synth = _synth_config(cfg, args.seed)
    noise = _noise_spec(cfg, synth.seed)
    out = _out_dir(args)
    started = _now()
    data = make_dataset(synth, noise)
    write_signals(out / "clean.sig", data.clean)
    write_signals(out / "noisy.sig", data.noisy)
    write_csv_rows(out / "true_filters.csv", data.D)
    write_codes(out / "true_codes.sig", data.Z)
    snap = {"synth": asdict(synth), "noise": asdict(noise)}
    write_manifest(out, "gen", snap, synth.seed, [], text, started)
    log.info("wrote dataset N=%d P=%d to %s", synth.N, synth.P, out)
    return EXIT_OK


def cmd_fit(args):
    cfg, text = load_config(args.config)
    f = cfg["fit"]
    if args.data is None:
        raise UsageError("fit needs --data")
    name = args.method or f.get("method", "gcsc")
    method = _method_key(name)
    X = read_signals(args.data)
    N, P = X.shape
    s = cfg["synth"]
    for key, have in (("n", N), ("p", P)):
        if key in s and s[key] != have:
            raise UsageError(f"data has {key.upper()}={have} but config says {s[key]}")
    K, M = s.get("k", 3), s.get("m", 65)
    if M > P:
        raise UsageError(f"filter length M={M} exceeds signal length P={P}")
    seed = args.seed if args.seed is not None else f.get("seed", s.get("seed", 0))
    beta = f.get("beta", DEFAULT_BETA[method])
    out = _out_dir(args)
    started = _now()
    snap = {"method": name, "K": K, "M": M, "beta": beta, "fit": f}
    inputs = [args.data]

    params = None
    if method in ("gcsc", "wcsc_bcd"):
        gcfg = _gcsc_config(f, K, M, beta, seed, "bcd" if method == "wcsc_bcd" else None)
        snap["gcsc"] = asdict(gcfg)
        try:
            model, trace = gcsc_fit(X, gcfg)
        except NumericalError as exc:
            _flush_em_trace(out, exc.partial)
            raise
        D, Z, params = model.D, model.Z, model.params
        rows = _em_rows(trace)
    else:
        acfg = _admm_config(f)
        snap["admm"] = asdict(acfg)
        D0, Z0 = random_init(N, K, M, P, np.random.default_rng(seed))
        fitter = cscl2_fit if method == "cscl2" else cscl1_fit
        try:
            res = fitter(X, D0, Z0, beta, acfg)
        except NumericalError as exc:
            if exc.partial is not None:
                write_trace(out / "trace.csv", _bcd_rows(exc.partial))
            raise
        D, Z = res.D, res.Z
        rows = _bcd_rows(res)
    write_csv_rows(out / "filters.csv", D)
    write_codes(out / "codes.sig", Z)
    if params is not None:
        write_gmm(out / "gmm.txt", params)
    write_trace(out / "trace.csv", rows)
    write_manifest(out, "fit", snap, seed, inputs, text, started)
    return EXIT_OK


def _em_rows(trace):
    rows = [(0, trace.initial_log_posterior, 0.0)]
    rows += [(r.iteration, r.log_posterior, r.seconds) for r in trace.records]
    return rows


def _flush_em_trace(out, trace):
    if trace is not None:
        write_trace(out / "trace.csv", _em_rows(trace))


def _bcd_rows(res):
    return list(zip(range(len(res.trace)), res.trace, res.times))


def cmd_eval(args):
    model = Path(args.model or args.out or ".")
    if args.data is None:
        raise UsageError("eval needs --data <clean signal file>")
    for name in ("filters.csv", "codes.sig", "manifest.json"):
        if not (model / name).is_file():
            raise UsageError(f"{model}: missing {name}")
    D = read_csv_rows(model / "filters.csv")
    Z = read_codes(model / "codes.sig", D.shape[0])
    clean = read_signals(args.data)
    if clean.shape != (Z.shape[0], Z.shape[2]):
        raise UsageError(f"clean data shape {clean.shape} does not match model "
                         f"({Z.shape[0]}, {Z.shape[2]})")
    man = json.loads((model / "manifest.json").read_text())
    method = man.get("config", {}).get("method", "unknown")
    trace = model / "trace.csv"
    seconds = 0.0
    if trace.is_file():
        with open(trace, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows:
            seconds = float(rows[-1]["seconds"])
    rec = reconstruct(D, Z)
    out = Path(args.out) if args.out else model
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mae", "rmse", "seconds"])
        w.writerow([method, fmt(mae(clean, rec)), fmt(rmse(clean, rec)), fmt(seconds)])
    return EXIT_OK


def cmd_compare(args):
    cfg, text = load_config(args.config)
    c = cfg["compare"]
    synth = _synth_config(cfg)
    kinds = _split(c.get("kinds", "gaussian"))
    names = _split(c.get("methods", "gcsc,cscl2,cscl1"))
    methods = [_method_key(m) for m in names]
    seeds = [int(x) for x in _split(c.get("seeds", "0"))] if args.seed is None else [args.seed]
    f = cfg["fit"]
    betas = dict(DEFAULT_BETA)
    if "beta" in f:
        betas = {m: f["beta"] for m in betas}
    exp = ExperimentConfig(betas=betas, gcsc=_gcsc_config(f, synth.K, synth.M, 1.0, 0),
                           admm=_admm_config(f))
    out = _out_dir(args)
    started = _now()
    rows = []
    for kind in kinds:
        noise = replace(_noise_spec(cfg, synth.seed), kind=kind)
        rows += run_experiment(synth, noise, methods, seeds, exp)
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise", "method", "mae_mean", "mae_std", "rmse_mean", "rmse_std",
                    "seconds_mean", "seconds_std"])
        for r in rows:
            w.writerow([r.noise, r.method.replace("_", "-")] +
                       [fmt(v) for v in (r.mae_mean, r.mae_std, r.rmse_mean, r.rmse_std,
                                         r.seconds_mean, r.seconds_std)])
    _solver_curves(out, synth, cfg, kinds[0], seeds[0], betas["gcsc"], c)
    snap = {"synth": asdict(synth), "kinds": kinds, "methods": names, "seeds": seeds,
            "betas": betas}
    write_manifest(out, "compare", snap, seeds[0], [], text, started)
    nan = [r for r in rows if not np.isfinite(r.mae_mean)]
    if rows and len(nan) == len(rows):
        log.error("every run failed")
        return EXIT_NUMERIC
    if nan:
        log.warning("%d row(s) contain failed runs (NaN)", len(nan))
    return EXIT_OK


def _solver_curves(out, synth, cfg, kind, seed, beta, c):
    """(time, objective) curves of niAPG and BCD on the first M-step problem."""
    data = make_dataset(replace(synth, seed=seed),
                        replace(_noise_spec(cfg, seed), kind=kind, seed=seed))
    gcfg = _gcsc_config(cfg["fit"], synth.K, synth.M, beta, seed)
    prob, init = first_m_step_problem(data.noisy, gcfg)
    tol = c.get("solver_tol", 1e-6)
    n = c.get("solver_max_iter", 1000)
    try:
        r1 = niapg_solve(prob, init, gcfg.line_search, tol, n)
        write_dat(out / "niapg.dat", r1.times, r1.trace)
        r2 = wcsc_bcd_solve(prob, init, replace(gcfg.admm, outer_tol=tol, max_outer=n))
        write_dat(out / "bcd.dat", r2.times, r2.trace)
    except NumericalError as exc:
        log.warning("solver comparison failed: %s", exc)


def _split(s):
    return [x.strip() for x in str(s).split(",") if x.strip()]


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "eval": cmd_eval, "compare": cmd_compare}


def build_parser():
    p = argparse.ArgumentParser(prog="csc", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI config file")
    p.add_argument("--data", help="input signal file (.sig binary or .csv)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", help="model directory (eval)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--method", help="one of " + ", ".join(CLI_METHODS))
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _setup_logging():
    level = os.environ.get("CSC_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.threads < 1:
        print("csc: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    set_workers(args.threads)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"csc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, CSCError, ValueError, OSError) as exc:
        print(f"csc: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
