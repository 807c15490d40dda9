"""Command line entry point: ``uipt <subcommand> [flags]``.

Every run writes ``run.cfg`` (the resolved configuration) next to its
outputs; ``uipt <subcommand> --config run.cfg`` reproduces it.  Values given
on the command line override the config file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from uipt import combinatorics as C
from uipt import experiments as E
from uipt.boundary_chain import pow2_checkpoints, run_chain
from uipt.peeling import BudgetExceeded, grow_uipt
from uipt.percolation import crossing, run_full, run_reduced, wilson_interval
from uipt.rng import RandomSource
from uipt.triangulation import bfs_distances, export_edges, export_vertices

CONFIG_VERSION = 1
OUT_ENV = "UIPT_OUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# parameters: name -> (type, default, help) per subcommand

COMMON = {
    "seed": (int, 0, "master seed"),
    "replicas": (int, 1, "independent replicas"),
    "out_dir": (str, None, f"output directory (default ${OUT_ENV} or ./uipt-out)"),
    "threads": (int, 1, "worker processes for replica-level parallelism"),
}

PARAMS = {
    "laws": {
        "step_law": (int, None, "boundary step law at this m"),
        "marked_law": (int, None, "marked peeling law at this m"),
        "free_peel_law": (int, None, "free peeling law at this m"),
        "free_size_law": (int, None, "free size law at this m (up to --n-max)"),
        "hitting": (int, None, "probabilities of ever reaching 0..n-1 from n"),
        "n_max": (int, 20, "largest size listed by --free-size-law"),
    },
    "chain": {
        "m0": (int, 1, "starting boundary parameter"),
        "horizon": (int, 10 ** 4, "number of steps"),
        "targets": (str, "", "comma separated target states"),
        "absorb": (bool, False, "stop at 0 instead of stepping to 1"),
    },
    "grow": {
        "r_max": (int, 8, "radius of the last completed hull"),
        "mode": (str, "skeleton", "skeleton or full"),
        "trace_steps": (int, 0, "per-step records kept per replica (-1: all)"),
        "export_mesh": (bool, False, "full mode: export the mesh of replica 0"),
        "step_cap": (int, 10 ** 9, "peeling step budget per replica"),
    },
    "perc": {
        "p": (float, None, "colouring probability"),
        "p_list": (str, "", "comma separated probabilities (sweep)"),
        "horizon": (int, 10 ** 4, "peeling steps"),
        "engine": (str, "reduced", "reduced or full"),
        "threshold": (float, 0.1, "survival level for the sweep crossing"),
    },
    "gof": {
        "test": (str, "step", "step, free-size or stable"),
        "m": (int, 5, "boundary parameter"),
        "draws": (int, 10 ** 5, "samples (step and free-size tests)"),
        "alpha": (float, 0.001, "significance level"),
        "ks_max": (float, 0.1, "KS threshold (stable test)"),
    },
    "report": {
        "r_max": (int, 32, "radius for the growth fits"),
        "horizon": (int, 10 ** 5, "chain horizon"),
        "draws": (int, 10 ** 5, "step draws per m"),
        "m_list": (str, "1,5,50", "m values for the step test"),
        "stable_m": (int, 50, "m for the stable-limit test"),
    },
}


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _convert(kind, value, key):
    if value is None or (value == "" and kind is not str):
        return None
    try:
        return _bool(value) if kind is bool else kind(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {key}: {value!r}") from err


def read_config(path):
    """Flat ``key = value`` file; ``schema_version`` must match."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            parser.read_string("[run]\n" + f.read())
    except (OSError, configparser.Error) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    items = dict(parser["run"])
    ver = items.pop("schema_version", None)
    if ver is None or int(ver) != CONFIG_VERSION:
        raise ConfigError(f"config schema_version must be {CONFIG_VERSION}")
    return items


def write_config(cfg, path):
    with open(path, "w") as f:
        f.write(f"schema_version = {CONFIG_VERSION}\n")
        for k in sorted(cfg):
            v = cfg[k]
            f.write(f"{k} = {'' if v is None else v}\n")


def resolve(command, flags, file_values):
    spec = dict(COMMON, **PARAMS[command])
    cfg = {}
    for key, (kind, default, _) in spec.items():
        val = default
        if key in file_values:
            val = _convert(kind, file_values.pop(key), key)
        if flags.get(key) is not None:
            val = flags[key]
        cfg[key] = val
    file_values.pop("command", None)
    if file_values:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(file_values))}")
    if cfg["out_dir"] is None:
        cfg["out_dir"] = os.environ.get(OUT_ENV, "uipt-out")
    if cfg["replicas"] < 1:
        raise ConfigError("replicas must be positive")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be positive")
    cfg["command"] = command
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="uipt", description="UIPT peeling sampler and measurement lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in PARAMS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value run configuration")
        for key, (kind, _, hlp) in dict(COMMON, **params).items():
            flag = "--" + key.replace("_", "-")
            if kind is bool:
                sp.add_argument(flag, dest=key, default=None, type=_bool, nargs="?", const=True, help=hlp)
            else:
                sp.add_argument(flag, dest=key, default=None, type=kind, help=hlp)
    return parser


# --------------------------------------------------------------------------
# helpers


def _pmap(fn, items, threads):
    """Ordered map; results do not depend on the number of workers."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def _ints(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


def _floats(s):
    return [float(x) for x in str(s).split(",") if x.strip()]


def _write_json(obj, path):
    with open(path, "w") as f:
        json.dump(E._plain(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def _csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------
# subcommands


def cmd_laws(cfg, out):
    tables = []
    if cfg["step_law"] is not None:
        law = C.step_law(cfg["step_law"])
        tables.append(("step_law", [(1, law.p_up)] + [(-k, p) for k, p in enumerate(law.p_down, 1)]))
    if cfg["marked_law"] is not None:
        tables.append(("marked_law", list(C.marked_step_law(cfg["marked_law"]).rows())))
    if cfg["free_peel_law"] is not None:
        tables.append(("free_peel_law", list(C.free_peel_law(cfg["free_peel_law"]).rows())))
    if cfg["free_size_law"] is not None:
        law = C.free_size_law(cfg["free_size_law"], cfg["n_max"])
        tables.append(("free_size_law", list(law.rows()) + [(f">{cfg['n_max']}", law.tail_mass)]))
    if cfg["hitting"] is not None:
        n = cfg["hitting"]
        tables.append(("hitting", [(k, C.hitting_prob(n, k)) for k in range(n)]))
    if not tables:
        raise ConfigError("laws: choose at least one table")
    for name, rows in tables:
        body = [(i, p.numerator, p.denominator, repr(float(p))) for i, p in rows]
        _csv(os.path.join(out, f"{name}.csv"), ["index", "numerator", "denominator", "decimal"], body)
        if len(tables) > 1:
            print(f"# {name}")
        print("index,numerator,denominator,decimal")
        for r in body:
            print(",".join(str(x) for x in r))


def _chain_job(args):
    seed, i, m0, horizon, targets, absorb = args
    tr = run_chain(m0, horizon, targets, RandomSource(seed, i), absorb=absorb)
    return tr.checkpoints.tolist(), tr.values.tolist(), tr.hits, tr.absorbed_at


def cmd_chain(cfg, out):
    m0, horizon = cfg["m0"], cfg["horizon"]
    if m0 < 0 or (cfg["absorb"] and m0 < 1) or horizon < 0:
        raise ConfigError("chain: need m0 >= 0 (>= 1 with --absorb) and horizon >= 0")
    targets = _ints(cfg["targets"])
    if any(t < 0 for t in targets):
        raise ConfigError("chain: targets must be non-negative")
    jobs = [(cfg["seed"], i, m0, horizon, targets, cfg["absorb"]) for i in range(cfg["replicas"])]
    res = _pmap(_chain_job, jobs, cfg["threads"])
    rows = []
    hits = {t: 0 for t in targets}
    absorbed = 0
    for i, (cps, vals, h, ab) in enumerate(res):
        rows += [(i, c, v) for c, v in zip(cps, vals) if v >= 0]
        for t in targets:
            hits[t] += h[t]
        absorbed += ab is not None
    _csv(os.path.join(out, "chain.csv"), ["replica", "checkpoint", "M"], rows)
    n = cfg["replicas"]
    summary = {"m0": m0, "horizon": horizon, "replicas": n, "absorbed": absorbed,
               "hits": {str(t): {"frequency": hits[t] / n,
                                 "ci": list(wilson_interval(hits[t], n)),
                                 "exact_ever": float(C.hitting_prob(m0, t)) if t < m0 else 1.0}
                        for t in targets}}
    if horizon >= 1000 and not cfg["absorb"]:
        cps = pow2_checkpoints(horizon)
        keep = cps >= np.sqrt(horizon)
        slopes = [np.polyfit(np.log(np.array(c)[keep]), np.log(np.array(v)[keep]), 1)[0]
                  for c, v, _, _ in res if min(np.array(v)[keep]) > 0]
        if slopes:
            summary["growth_slope"] = float(np.mean(slopes))
    _write_json(summary, os.path.join(out, "summary.json"))


def _grow_job(args):
    seed, i, r_max, mode, trace_steps, step_cap, export_dir = args
    tr = grow_uipt(r_max, RandomSource(seed, i), mode=mode, trace_steps=trace_steps,
                   step_cap=step_cap)
    rows = [(i,) + row for row in tr.layers()]
    steps = None
    if trace_steps:
        steps = [(i, t + 1, int(tr.X[t]), int(tr.Y[t]), int(tr.M_t[t]), int(tr.layer_t[t]))
                 for t in range(len(tr.X))]
    if export_dir is not None and tr.mesh is not None:
        export_edges(tr.mesh, os.path.join(export_dir, "mesh_edges.txt"))
        export_vertices(tr.mesh, os.path.join(export_dir, "mesh_vertices.csv"),
                        bfs_distances(tr.mesh, 0))
    return rows, steps


def cmd_grow(cfg, out):
    if cfg["mode"] not in ("skeleton", "full"):
        raise ConfigError("grow: mode must be skeleton or full")
    if cfg["r_max"] < 1:
        raise ConfigError("grow: r_max must be positive")
    exp = out if cfg["export_mesh"] and cfg["mode"] == "full" else None
    jobs = [(cfg["seed"], i, cfg["r_max"], cfg["mode"], cfg["trace_steps"], cfg["step_cap"],
             exp if i == 0 else None)
            for i in range(cfg["replicas"])]
    res = _pmap(_grow_job, jobs, cfg["threads"])
    rows = [r for layer_rows, _ in res for r in layer_rows]
    _csv(os.path.join(out, "layers.csv"), ["replica", "r", "T_r", "M_Tr", "hull_vol", "ball_vol"], rows)
    if cfg["trace_steps"]:
        _csv(os.path.join(out, "steps.csv"), ["replica", "t", "X", "Y", "M", "layer"],
             [r for _, st in res for r in st])
    arr = np.array(rows)
    table = {"T": arr[:, 2], "M": arr[:, 3], "hull_vol": arr[:, 4]}
    if cfg["mode"] == "full":
        table["ball_vol"] = arr[:, 5]
    table = {k: v.reshape(cfg["replicas"], cfg["r_max"]) for k, v in table.items()}
    fits = {}
    for q in table:
        try:
            fits[q] = E.fit_exponent(table, q, (max(1, cfg["r_max"] // 8), cfg["r_max"]))
        except E.InsufficientData:
            pass
    summary = {"r_max": cfg["r_max"], "mode": cfg["mode"], "replicas": cfg["replicas"],
               "mean": {q: v.mean(axis=0) for q, v in table.items()}, "fits": fits}
    _write_json(summary, os.path.join(out, "summary.json"))


def _perc_job(args):
    seed, j, i, p, horizon, engine = args
    run = run_reduced if engine == "reduced" else run_full
    o = run(p, horizon, RandomSource(seed + 7919 * j, i))
    return o.verdict, o.death_step, o.max_b


def cmd_perc(cfg, out):
    ps = _floats(cfg["p_list"]) if cfg["p_list"] else ([cfg["p"]] if cfg["p"] is not None else [])
    if not ps:
        raise ConfigError("perc: give --p or --p-list")
    if any(not 0 <= p <= 1 for p in ps) or cfg["horizon"] < 0:
        raise ConfigError("perc: p must lie in [0, 1] and horizon be non-negative")
    if cfg["engine"] not in ("reduced", "full"):
        raise ConfigError("perc: engine must be reduced or full")
    n = cfg["replicas"]
    jobs = [(cfg["seed"], j, i, p, cfg["horizon"], cfg["engine"])
            for j, p in enumerate(ps) for i in range(n)]
    res = _pmap(_perc_job, jobs, cfg["threads"])
    rows, summary_rows = [], []
    for j, p in enumerate(ps):
        chunk = res[j * n:(j + 1) * n]
        rows += [(repr(p), i, v, d, b) for i, (v, d, b) in enumerate(chunk)]
        k = sum(v == "survived" for v, _, _ in chunk)
        summary_rows.append({"p": p, "survived": k, "fraction": k / n,
                             "ci": list(wilson_interval(k, n)),
                             "median_max_b": float(np.median([b for _, _, b in chunk]))})
    _csv(os.path.join(out, "perc.csv"), ["p", "replica", "verdict", "death_step", "max_B"], rows)
    summary = {"horizon": cfg["horizon"], "replicas": n, "engine": cfg["engine"], "level": 0.95,
               "rows": summary_rows}
    if len(ps) > 1:
        summary["crossing"] = crossing(ps, [r["fraction"] for r in summary_rows], cfg["threshold"])
    _write_json(summary, os.path.join(out, "summary.json"))


def _gof_config(cfg):
    conf = dict(E.DEFAULT_CONFIG)
    conf["alpha"] = cfg["alpha"]
    conf["ks_max"] = cfg["ks_max"]
    return conf


def cmd_gof(cfg, out):
    conf = _gof_config(cfg)
    src = RandomSource(cfg["seed"], 0)
    test, m = cfg["test"], cfg["m"]
    if m < 0:
        raise ConfigError("gof: m must be non-negative")
    if test == "step":
        if m < 1 or cfg["draws"] < 10 ** 4:
            raise ConfigError("gof step: need m >= 1 and draws >= 1e4")
        rep = E.step_law_gof(m, cfg["draws"], src, config=conf)
    elif test == "free-size":
        rep = E.free_size_gof(m, cfg["draws"], src, config=conf)
    elif test == "stable":
        if cfg["replicas"] < 1000 or m < 1:
            raise ConfigError("gof stable: need m >= 1 and replicas >= 1000")
        rep = E.stable_limit_gof(m, cfg["replicas"], src, config=conf)
    else:
        raise ConfigError("gof: test must be step, free-size or stable")
    E.emit_report({f"{test}_m{m}": rep}, out, conf, {"seed": cfg["seed"]})
    print(f"{test} m={m}: statistic={rep.statistic:.6g} threshold={rep.threshold:.6g} "
          f"{'pass' if rep.passed else 'fail'}")
    return rep.passed


def cmd_report(cfg, out):
    """A compact run of the measurement suite at the configured scale."""
    conf = E.DEFAULT_CONFIG
    seed, n = cfg["seed"], cfg["replicas"]
    results = {}
    for j, m in enumerate(_ints(cfg["m_list"])):
        results[f"step_m{m}"] = E.step_law_gof(m, cfg["draws"], RandomSource(seed, 100 + j), config=conf)
    results["free_size_m3"] = E.free_size_gof(3, cfg["draws"], RandomSource(seed, 200), config=conf)
    results["stable"] = E.stable_limit_gof(cfg["stable_m"], max(1000, n), RandomSource(seed, 300),
                                           config=conf)
    fits, _ = E.growth_fits(cfg["r_max"], n, seed + 1)
    results.update({f"fit_{q}": f for q, f in fits.items()})
    if cfg["horizon"] >= 1000:
        results["fit_chain"] = E.chain_growth_fit(cfg["horizon"], n, seed + 2)
    if cfg["horizon"] >= 10 ** 4:
        tr = run_chain(1, cfg["horizon"], (), RandomSource(seed + 3, 0), checkpoints=[0],
                       absorb=False, keep_trace=True).trace
        for g in (2, 3):
            results[f"heavy_tail_{g}"] = E.heavy_tail_probe(tr, g)
    E.emit_report(results, out, conf, {"seed": seed, "replicas": n})
    for k in sorted(results):
        r = results[k]
        val = r.statistic if isinstance(r, E.GofReport) else r.slope
        print(f"{k}: {val:.6g}")


COMMANDS = {"laws": cmd_laws, "chain": cmd_chain, "grow": cmd_grow, "perc": cmd_perc,
            "gof": cmd_gof, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_OK
    flags = vars(args)
    command = flags.pop("command")
    try:
        file_values = read_config(flags.pop("config")) if flags.get("config") else {}
        flags.pop("config", None)
        if file_values.get("command", command) != command:
            raise ConfigError(f"config is for {file_values['command']!r}, not {command!r}")
        cfg = resolve(command, flags, file_values)
        out = cfg["out_dir"]
        try:
            os.makedirs(out, exist_ok=True)
            write_config(cfg, os.path.join(out, "run.cfg"))
        except OSError as err:
            raise ConfigError(f"output directory {out!r} is not writable: {err}") from err
        COMMANDS[command](cfg, out)
    except ConfigError as err:
        print(f"uipt: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as err:
        print(f"uipt: invalid parameters: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as err:
        print(f"uipt: aborted: {err}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
