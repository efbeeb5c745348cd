"""Command-line front end: ``fbmlab <subcommand> [options]``.

Parameters come from an optional flat ``key = value`` file (``--config``),
then ``--set key=value`` overrides, then dedicated flags; later sources win.
Unknown keys are rejected.  Every run writes its CSV outputs plus a
``manifest.json`` from which ``fbmlab rerun`` reproduces it byte for byte.

Exit codes: 0 success, 2 numerical divergence, 3 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, drift, errors, longtime, noise, plotting, solver, verify

EXIT_OK, EXIT_DIVERGENCE, EXIT_CONFIG = 0, 2, 3

_DRIFT_KEYS = {
    "drift.kind": (str, "none"),
    "drift.gamma": (float, None),
    "drift.amplitude": (float, 1.0),
    "drift.n_terms": (int, 12),
    "drift.j_min": (int, 0),
    "drift.center": (float, 0.0),
    "drift.path": (str, ""),
}

SCHEMA = {
    "fbm": {
        "hurst": (float, 0.5), "n": (int, 1024), "h": (float, 2.0 ** -8), "paths": (int, 4), "d": (int, 1),
        "split": (bool, False), "t_hist": (float, None), "seed": (int, 0),
    },
    "norm": {
        "gamma": (float, None), "eps_min": (float, 2.0 ** -20), "grid": (int, None), "d": (int, 1),
        "box_lo": (float, -5.0), "box_hi": (float, 5.0), **_DRIFT_KEYS,
    },
    "simulate": {
        "hurst": (float, 0.5), "d": (int, 1), "h": (float, 2.0 ** -8), "T": (float, 1.0), "k": (int, 1),
        "ensemble": (int, 100), "seed": (int, 0), "x0": (float, 0.0), "kappa1": (float, 1.0), "m": (float, 2.0),
        "alpha": (float, 0.5), "selector": (str, "X-B"), "window_lo": (float, 0.0), "window_hi": (float, 1.0),
        **_DRIFT_KEYS,
    },
    "couple": {
        "hurst": (float, 0.5), "d": (int, 1), "h": (float, 0.01), "T": (float, 10.0), "k": (int, 1),
        "ensemble": (int, 100), "seed": (int, 0), "x": (float, 1.0), "y": (float, -1.0), "kappa1": (float, 1.0),
        "m": (float, 2.0), **_DRIFT_KEYS,
    },
    "invariant": {
        "hurst": (float, 0.5), "d": (int, 1), "h": (float, 0.01), "k": (int, 1), "seed": (int, 0),
        "x0": (float, 0.0), "kappa1": (float, 1.0), "burn_in": (float, 20.0), "spacing": (float, 1.0),
        "n_samples": (int, 20), "chains": (int, 200), "shift": (float, 10.0), "window": (float, None),
        "m": (float, 2.0), **_DRIFT_KEYS,
    },
    "verify": {
        "prop": (str, "reg1"), "f": (str, "point_mass"), "hurst": (float, 0.25), "gamma": (float, -1.0),
        "m": (float, 2.0), "n": (int, 10_000), "seed": (int, 0), "lag_min": (float, 2.0 ** -8),
        "lag_max": (float, 1.0), "c": (float, 1.0), "z": (float, 1e-4), "v": (float, 1.0),
        "psi": (float, 0.0), "n_terms": (int, 15), "j_min": (int, -4), "n_sub": (int, verify.N_SUB),
    },
}

# dedicated flags: flag -> key
FLAGS = {
    "fbm": {"--hurst": "hurst", "--n": "n", "--h": "h", "--paths": "paths", "--seed": "seed", "--d": "d"},
    "norm": {"--gamma": "gamma", "--eps-min": "eps_min", "--grid": "grid", "--drift": "drift.kind"},
    "simulate": {"--hurst": "hurst", "--h": "h", "--T": "T", "--ensemble": "ensemble", "--seed": "seed",
                 "--drift": "drift.kind", "--kappa1": "kappa1"},
    "couple": {"--hurst": "hurst", "--h": "h", "--T": "T", "--ensemble": "ensemble", "--seed": "seed",
               "--drift": "drift.kind", "--kappa1": "kappa1"},
    "invariant": {"--hurst": "hurst", "--h": "h", "--seed": "seed", "--drift": "drift.kind",
                  "--kappa1": "kappa1", "--chains": "chains"},
    "verify": {"--prop": "prop", "--hurst": "hurst", "--gamma": "gamma", "--n": "n", "--seed": "seed"},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one subcommand run."""

    subcommand: str
    params: dict

    def get(self, key):
        return self.params[key]

    def drift_cfg(self):
        return {k.split(".", 1)[1]: v for k, v in self.params.items() if k.startswith("drift.") and v is not None}


def _parse_value(kind, raw, key):
    if raw is None or isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    if text.lower() in ("none", "") and kind is not str:
        return None
    try:
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            val = float(text)
            if val != int(val):
                raise ValueError(text)
            return int(val)
        return kind(text)
    except ValueError:
        raise errors.ConfigError(f"cannot parse {key}={raw!r} as {kind.__name__}") from None


def read_config_file(path):
    """Flat ``key = value`` pairs; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise errors.ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def build_config(subcommand, sources):
    """Merge raw key-value mappings (later wins) and validate against the schema."""
    schema = SCHEMA[subcommand]
    merged = {}
    for src in sources:
        for key, value in src.items():
            if key not in schema:
                raise errors.ConfigError(f"unknown key {key!r} for {subcommand}")
            merged[key] = value
    params = {key: _parse_value(kind, merged.get(key, default), key) for key, (kind, default) in schema.items()}
    cfg = RunConfig(subcommand, params)
    _validate(cfg)
    return cfg


def _validate(cfg):
    p = cfg.params
    if "hurst" in p:
        try:
            noise.check_hurst(p["hurst"])
        except errors.DomainError as exc:
            raise errors.ConfigError(str(exc)) from None
    for key in ("h", "T", "spacing", "eps_min"):
        if key in p and p[key] is not None and not p[key] > 0:
            raise errors.ConfigError(f"{key} must be positive")
    for key in ("n", "paths", "d", "ensemble", "n_samples", "chains", "k", "n_sub"):
        if key in p and p[key] is not None and p[key] < 1:
            raise errors.ConfigError(f"{key} must be a positive integer")
    if "m" in p and p["m"] < 1:
        raise errors.ConfigError("m must be >= 1")
    if cfg.subcommand == "verify" and p["prop"] not in ("reg1", "reg2", "reg3", "reg4"):
        raise errors.ConfigError("prop must be one of reg1, reg2, reg3, reg4")
    if cfg.subcommand == "verify" and not (0 < p["lag_min"] < p["lag_max"] <= 1):
        raise errors.ConfigError("lags must satisfy 0 < lag_min < lag_max <= 1")
    if "drift.kind" in p and p["drift.kind"] == "samples" and not p["drift.path"]:
        raise errors.ConfigError("drift.kind = samples needs drift.path")


# --------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _drift(cfg, d):
    dc = cfg.drift_cfg()
    if dc.get("kind") == "weierstrass":
        gamma = float(dc.get("gamma", 0.5))
        rep = drift.weierstrass(gamma, int(dc.get("n_terms", 12)), d, float(dc.get("amplitude", 1.0)),
                                int(dc.get("j_min", 0)))
        return drift.SingularDrift(gamma, rep)
    return drift.load_drift(dc, d)


def _b_or_none(cfg, d):
    return None if cfg.get("drift.kind") in ("none", "zero") else _drift(cfg, d)


def _solver_cfg(cfg, T=None, ensemble=1):
    p = cfg.params
    return solver.SolverConfig(h=p["h"], T=p["T"] if T is None else T, k=p.get("k", 1),
                               m=max(p.get("m", 2.0), 2.0), ensemble=ensemble, seed=p["seed"])


# --------------------------------------------------------------------------
# subcommands


def cmd_fbm(cfg, out, workers):
    p = cfg.params
    H, d = p["hurst"], p["d"]
    grid = noise.Grid(0.0, p["h"], p["n"])
    derived = {"alpha_H": noise.mvn_constant(H)}
    times = grid.times
    if p["split"]:
        rec = noise.sample_wiener_record(grid, d, p["seed"], n_paths=p["paths"], T_hist=p["t_hist"])
        sp = noise.mvn_split(rec, H)
        derived.update({k: sp.metadata[k] for k in ("truncation_bound", "T_hist", "tail_std_uncorrected")})
        total = sp.history + sp.innovation
        header = ["path", "t"] + [f"B_{j + 1}" for j in range(d)] + [f"Bbar_{j + 1}" for j in range(d)] \
            + [f"Btilde_{j + 1}" for j in range(d)]
        rows = ([i, t, *total[i, k], *sp.history[i, k], *sp.innovation[i, k]]
                for i in range(p["paths"]) for k, t in enumerate(times))
    else:
        path = noise.sample_fbm_circulant(grid, H, d, p["seed"], n_paths=p["paths"], workers=workers)
        derived["embedding_size"] = path.source.embedding_size
        header = ["path", "t"] + [f"B_{j + 1}" for j in range(d)]
        rows = ([i, t, *path.values[i, k]] for i in range(p["paths"]) for k, t in enumerate(times))
    write_csv(os.path.join(out, "fbm.csv"), header, rows)
    return {"outputs": ["fbm.csv"], "derived": derived}


def cmd_norm(cfg, out, workers):
    p = cfg.params
    d = p["d"]
    b = _drift(cfg, d)
    gamma = b.gamma if p["gamma"] is None else p["gamma"]
    n_axis = p["grid"]
    x_grid = drift.audit_grid(d, (p["box_lo"], p["box_hi"]), n_axis)
    rows = []
    if gamma < 0:
        j_max = int(np.floor(-np.log2(p["eps_min"]) + 1e-9))
        eps_set = [2.0 ** -j for j in range(j_max + 1)]
        for eps in eps_set:
            rows.append([eps, drift.besov_norm(b, gamma, [eps], x_grid)])
        value = max(r[1] for r in rows)
    else:
        value = drift.besov_norm(b, gamma, x_grid=x_grid)
        rows.append([0.0, value])
    write_csv(os.path.join(out, "norm.csv"), ["eps", "value"], rows)
    write_json(os.path.join(out, "norm.json"), {"gamma": gamma, "norm": value, "grid_points": len(x_grid)})
    return {"outputs": ["norm.csv", "norm.json"], "derived": {"norm": value}}


def cmd_simulate(cfg, out, workers):
    p = cfg.params
    d, H = p["d"], p["hurst"]
    scfg = _solver_cfg(cfg, ensemble=p["ensemble"])
    path = noise.sample_fbm_circulant(scfg.grid, H, d, p["seed"], n_paths=p["ensemble"], workers=workers)
    F = drift.linear_drift(p["kappa1"], d)
    b = _b_or_none(cfg, d)
    traj = solver.integrate(np.full(d, p["x0"]), F, solver.resolve_drift(b, scfg.k), path, scfg)
    curve = solver.moment_curve(traj, scfg.m, p["kappa1"], seed=p["seed"])
    write_csv(os.path.join(out, "moments.csv"), ["t", "moment", "stderr", "bound_shape"],
              zip(curve.times, curve.values, curve.stderr, curve.bound_shape))
    semi = solver.holder_seminorm(traj, p["selector"], p["alpha"], scfg.m, (p["window_lo"], p["window_hi"]))
    summary = {"sup_moment": curve.sup, "seminorm": semi.value, "seminorm_stderr": semi.std_error,
               "seminorm_argmax": semi.argmax, "alpha": semi.alpha, "selector": semi.label,
               "identity_residual": traj.identity_residual(F)}
    write_json(os.path.join(out, "simulate.json"), summary)
    return {"outputs": ["moments.csv", "simulate.json"], "derived": {"alpha_H": noise.mvn_constant(H)},
            "plots": [("moments.csv", "moments.svg", "t", ["moment"])]}


def cmd_couple(cfg, out, workers):
    p = cfg.params
    d = p["d"]
    scfg = _solver_cfg(cfg, T=1.0, ensemble=p["ensemble"])
    F = drift.linear_drift(p["kappa1"], d)
    b = _b_or_none(cfg, d)
    b_norm = None if b is None else drift.besov_norm(b, b.gamma)
    res = longtime.couple(np.full(d, p["x"]), np.full(d, p["y"]), F, b, p["T"], scfg, p["seed"], p["hurst"],
                          m=p["m"], b_norm=b_norm, workers=workers)
    write_csv(os.path.join(out, "coupling.csv"), ["t", "dist", "stderr"], zip(res.times, res.dist, res.stderr))
    write_json(os.path.join(out, "coupling.json"), res.summary())
    return {"outputs": ["coupling.csv", "coupling.json"], "derived": {"alpha_H": noise.mvn_constant(p["hurst"])},
            "plots": [("coupling.csv", "coupling.svg", "t", ["dist"])]}


def cmd_invariant(cfg, out, workers):
    p = cfg.params
    d, H = p["d"], p["hurst"]
    scfg = solver.SolverConfig(h=p["h"], T=1.0, k=p["k"], seed=p["seed"])
    F = drift.linear_drift(p["kappa1"], d)
    b = _b_or_none(cfg, d)
    rep = longtime.stationarity_test(np.full(d, p["x0"]), F, b, p["burn_in"], p["spacing"], p["n_samples"],
                                     scfg, p["seed"], H, p["chains"], shift=p["shift"], m=p["m"],
                                     window=p["window"])
    mu = rep.early
    write_csv(os.path.join(out, "samples.csv"), ["sample_index"] + [f"x_{j + 1}" for j in range(d)],
              ([i, *row] for i, row in enumerate(mu.samples)))
    summary = {"variance": mu.variance(), "second_moment": mu.moment(2.0), "w_shift": rep.distance,
               "noise_floor": rep.noise_floor, "stationary": rep.passed, "shift": rep.shift, "n": mu.n}
    if b is None and d == 1 and p["kappa1"] > 0:
        summary["oracle_variance"] = longtime.fou_stationary_variance(p["kappa1"], H, p["h"])
    write_json(os.path.join(out, "invariant.json"), summary)
    return {"outputs": ["samples.csv", "invariant.json"], "derived": {"alpha_H": noise.mvn_constant(H)}}


def _verify_f(p):
    kind = p["f"]
    H = p["hurst"]
    if kind == "point_mass":
        return verify.mollified_point_mass(H, p["lag_min"])
    if kind == "weierstrass":
        return drift.weierstrass(p["gamma"], p["n_terms"], 1, 1.0, p["j_min"])
    if kind == "sin":
        return drift.sine(1.0)
    if kind == "constant":
        return drift.Constant(1.0)
    raise errors.ConfigError(f"unknown test function {kind!r}")


def cmd_verify(cfg, out, workers):
    p = cfg.params
    f = _verify_f(p)
    lags = 2.0 ** np.arange(np.round(np.log2(p["lag_min"])), np.round(np.log2(p["lag_max"])) + 1)
    common = dict(gamma=p["gamma"], H=p["hurst"], m=p["m"], lags=lags, n=p["n"], seed=p["seed"], n_sub=p["n_sub"])
    prop = p["prop"]
    if prop == "reg1":
        exp = verify.run_reg1(f, p["psi"], **common)
    elif prop == "reg2":
        exp = verify.run_reg2(f, p["psi"] + p["z"], p["psi"], **common)
    elif prop == "reg3":
        exp = verify.run_reg3(f, p["psi"] + p["z"], p["psi"], p["c"], **common)
    else:
        exp = verify.run_reg4(f, p["psi"], p["v"], p["c"], **common)
    exp.to_csv(os.path.join(out, f"verify_{prop}.csv"))
    write_json(os.path.join(out, f"verify_{prop}.json"), exp.summary())
    return {"outputs": [f"verify_{prop}.csv", f"verify_{prop}.json"],
            "derived": {"alpha_H": noise.mvn_constant(p["hurst"]), "crossover_lag": exp.crossover},
            "plots": [(f"verify_{prop}.csv", f"verify_{prop}.svg", "lag", ["lhs_norm"])]}


COMMANDS = {"fbm": cmd_fbm, "norm": cmd_norm, "simulate": cmd_simulate, "couple": cmd_couple,
            "invariant": cmd_invariant, "verify": cmd_verify}


def run(cfg, out, workers=1, plots=False):
    """Execute ``cfg`` into directory ``out`` and write its manifest."""
    os.makedirs(out, exist_ok=True)
    info = COMMANDS[cfg.subcommand](cfg, out, workers)
    svgs = []
    if plots:
        for csv_name, svg_name, x, ys in info.get("plots", []):
            log = cfg.subcommand == "verify"
            plotting.plot_csv(os.path.join(out, csv_name), os.path.join(out, svg_name), x, ys,
                              title=cfg.subcommand, logx=log, logy=log or cfg.subcommand == "couple")
            svgs.append(svg_name)
    manifest = {"subcommand": cfg.subcommand, "config": cfg.params, "version": __version__,
                "derived": info.get("derived", {}), "outputs": info["outputs"], "plots": svgs}
    write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


# --------------------------------------------------------------------------
# argument parsing


def _parser():
    ap = argparse.ArgumentParser(prog="fbmlab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"fbmlab {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SCHEMA:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
        sp.add_argument("--out", help="output directory (env FBMLAB_OUT)")
        sp.add_argument("--workers", type=int, help="worker pool size (env FBMLAB_THREADS)")
        sp.add_argument("--plot", action="store_true", help="also render SVG plots from the CSVs")
        for flag, key in FLAGS[name].items():
            sp.add_argument(flag, dest=f"flag:{key}", metavar=key.upper())
        if name == "fbm":
            sp.add_argument("--split", dest="flag:split", action="store_const", const="true")
    rr = sub.add_parser("rerun", help="re-execute a run from its manifest")
    rr.add_argument("manifest")
    rr.add_argument("--out", help="output directory (default: a sibling 'rerun' directory)")
    rr.add_argument("--workers", type=int)
    return ap


def _workers(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("FBMLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise errors.ConfigError("FBMLAB_THREADS must be an integer") from None
    return os.cpu_count() or 1


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        workers = _workers(args.workers)
        if args.subcommand == "rerun":
            with open(args.manifest) as fh:
                man = json.load(fh)
            cfg = build_config(man["subcommand"], [man["config"]])
            out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.manifest)), "rerun")
            run(cfg, out, workers, plots=bool(man.get("plots")))
            print(out)
            return EXIT_OK
        sources = []
        if args.config:
            sources.append(read_config_file(args.config))
        sets = {}
        for item in args.set:
            if "=" not in item:
                raise errors.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            sets[k.strip()] = v.strip()
        sources.append(sets)
        sources.append({k.split(":", 1)[1]: v for k, v in vars(args).items()
                        if k.startswith("flag:") and v is not None})
        cfg = build_config(args.subcommand, sources)
        out = args.out or os.environ.get("FBMLAB_OUT") or os.path.join("fbmlab_out", args.subcommand)
        run(cfg, out, workers, plots=args.plot)
        print(out)
        return EXIT_OK
    except errors.DivergenceError as exc:
        print(f"fbmlab: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (errors.ConfigError, errors.InputError, errors.DomainError, errors.UnsupportedRegularityError,
            OSError, KeyError) as exc:
        print(f"fbmlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
