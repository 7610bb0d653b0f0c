"""Command-line front end.

Subcommands ``sensitivity``, ``relative``, ``hedge``, ``worst-case`` and
``sweep`` read a JSON config, write CSV/JSON/SVG into the output directory and
always leave a ``manifest.json`` echoing the resolved config. Exit codes: 0
success, 2 config error, 3 numerical failure (``diagnostics.json`` written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import api
from . import scenarios as _sc
from . import svg
from .criteria import american_put, constant, criterion_value, expression, forward_start
from .errors import ConfigError, NumericalError
from .models import Bachelier, BlackScholes, Empirical
from .problem import Problem
from .reports import CONSTRAINTS, METRICS

SCATTER_CAP = 5000

DEFAULTS = {
    "model": {"kind": "black_scholes", "sigma": 0.4, "spot": None, "trunc": [1e-3, 1e-3], "grid": 512,
              "quad_order": 64, "path": None, "bandwidth": None},
    "criterion": {"kind": "forward_start"},
    "p": 2.0,
    "constraints": ["none", "M", "m1", "M_m1"],
    "metrics": ["adapted", "standard"],
    "sampling": {"mode": "quadrature", "n": 200000},
    "seed": 0,
    "sweep": None,
    "scenario": {"r": 0.5, "n": 5000, "constraint": "M", "metric": "adapted", "recentre": False,
                 "radii": [0.1, 0.05, 0.025]},
    "output": "out",
}

CRITERION_DEFAULTS = {
    "forward_start": {},
    "american_put": {"strike": 0.8, "rate": 0.05, "discount_convention": "t12"},
    "constant": {"value": 1.0},
    "expression": {"expr": None},
}


def fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if not math.isfinite(v):
        return "nan"
    return format(v, ".12g")


# config ---------------------------------------------------------------------------

def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"{path}{k}", "unknown field")
        if isinstance(base[k], dict) and v is not None:
            if not isinstance(v, dict):
                raise ConfigError(f"{path}{k}", "must be an object")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def _num(cfg, key, path, positive=False, minimum=None):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, "must be a finite number")
    if positive and not v > 0:
        raise ConfigError(path, "must be positive")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be at least {minimum}")
    return v


def resolve_config(raw: dict) -> dict:
    """Merge defaults and validate; raises ConfigError naming the field path."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    raw = dict(raw)
    crit_raw = raw.pop("criterion", None)
    cfg = _merge({k: v for k, v in DEFAULTS.items() if k != "criterion"}, raw)
    crit = {"kind": "forward_start"}
    if crit_raw is not None:
        if not isinstance(crit_raw, dict) or "kind" not in crit_raw:
            raise ConfigError("criterion.kind", "missing")
        kind = crit_raw["kind"]
        if kind not in CRITERION_DEFAULTS:
            raise ConfigError("criterion.kind", f"must be one of {sorted(CRITERION_DEFAULTS)}")
        crit = _merge({"kind": kind, **CRITERION_DEFAULTS[kind]}, crit_raw, "criterion.")
    cfg["criterion"] = crit

    m = cfg["model"]
    if m["kind"] not in ("bachelier", "black_scholes", "empirical"):
        raise ConfigError("model.kind", "must be 'bachelier', 'black_scholes' or 'empirical'")
    if m["kind"] == "empirical":
        if not m["path"]:
            raise ConfigError("model.path", "empirical models need a CSV path")
        if m["bandwidth"] is None:
            raise ConfigError("model.bandwidth", "empirical models need an explicit bandwidth")
        _num(m, "bandwidth", "model.bandwidth", positive=True)
    else:
        _num(m, "sigma", "model.sigma", positive=True)
        if m["spot"] is None:
            m["spot"] = 0.0 if m["kind"] == "bachelier" else 1.0
        _num(m, "spot", "model.spot", positive=m["kind"] == "black_scholes")
    if not (isinstance(m["trunc"], list) and len(m["trunc"]) == 2
            and all(isinstance(t, (int, float)) and 0 < t < 0.5 for t in m["trunc"])):
        raise ConfigError("model.trunc", "must be two quantiles in (0, 0.5)")
    if not isinstance(m["grid"], int) or m["grid"] < 4:
        raise ConfigError("model.grid", "must be an integer >= 4")
    if not isinstance(m["quad_order"], int) or m["quad_order"] < 2:
        raise ConfigError("model.quad_order", "must be an integer >= 2")

    c = cfg["criterion"]
    if c["kind"] == "american_put":
        _num(c, "strike", "criterion.strike", positive=True)
        _num(c, "rate", "criterion.rate")
        if c["discount_convention"] not in ("t12", "t01"):
            raise ConfigError("criterion.discount_convention", "must be 't12' or 't01'")
    elif c["kind"] == "constant":
        _num(c, "value", "criterion.value")
    elif c["kind"] == "expression":
        if not isinstance(c["expr"], str):
            raise ConfigError("criterion.expr", "must be a string")
        try:
            expression(c["expr"])
        except ValueError as exc:
            raise ConfigError("criterion.expr", str(exc)) from None

    p = _num(cfg, "p", "p")
    if not p > 1:
        raise ConfigError("p", "must be greater than 1")
    for key, allowed in (("constraints", CONSTRAINTS), ("metrics", METRICS)):
        v = cfg[key]
        if not isinstance(v, list) or not v:
            raise ConfigError(key, "must be a non-empty list")
        for i, item in enumerate(v):
            if item not in allowed:
                raise ConfigError(f"{key}[{i}]", f"must be one of {list(allowed)}")
    s = cfg["sampling"]
    if s["mode"] not in ("quadrature", "mc", "data"):
        raise ConfigError("sampling.mode", "must be 'quadrature', 'mc' or 'data'")
    if m["kind"] == "empirical" and s["mode"] == "quadrature":
        s["mode"] = "data"
    if m["kind"] != "empirical" and s["mode"] == "data":
        raise ConfigError("sampling.mode", "'data' needs an empirical model")
    if not isinstance(s["n"], int) or s["n"] < 1000:
        raise ConfigError("sampling.n", "must be an integer >= 1000")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    sw = cfg["sweep"]
    if sw is not None:
        if not isinstance(sw, dict) or set(sw) != {"sigma"} or not isinstance(sw["sigma"], list) or not sw["sigma"]:
            raise ConfigError("sweep", "must be {\"sigma\": [non-empty list]}")
        if m["kind"] == "empirical":
            raise ConfigError("sweep", "volatility sweeps need an analytic model")
        for i, v in enumerate(sw["sigma"]):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"sweep.sigma[{i}]", "must be positive")
    sc = cfg["scenario"]
    _num(sc, "r", "scenario.r", minimum=0)
    if not isinstance(sc["n"], int) or sc["n"] < 1:
        raise ConfigError("scenario.n", "must be a positive integer")
    if sc["constraint"] not in CONSTRAINTS:
        raise ConfigError("scenario.constraint", f"must be one of {list(CONSTRAINTS)}")
    if sc["metric"] not in METRICS:
        raise ConfigError("scenario.metric", f"must be one of {list(METRICS)}")
    if not api.supported(sc["metric"], sc["constraint"], p):
        raise ConfigError("scenario.constraint", "unsupported for this metric and p")
    r = sc["radii"]
    if not (isinstance(r, list) and len(r) == 3 and all(isinstance(x, (int, float)) and x > 0 for x in r)
            and np.allclose(np.array(r[1:]) / np.array(r[:-1]), 0.5)):
        raise ConfigError("scenario.radii", "must be [r, r/2, r/4] with r > 0")
    if not isinstance(sc["recentre"], bool):
        raise ConfigError("scenario.recentre", "must be true or false")
    return cfg


def build_model(mcfg: dict, sigma=None):
    kind = mcfg["kind"]
    common = {"trunc": tuple(mcfg["trunc"]), "grid_size": mcfg["grid"], "quad_order": mcfg["quad_order"]}
    if kind == "empirical":
        pts = load_points(mcfg["path"])
        return Empirical(points=pts, bandwidth=float(mcfg["bandwidth"]), **common)
    s = float(mcfg["sigma"] if sigma is None else sigma)
    cls = Bachelier if kind == "bachelier" else BlackScholes
    return cls(sigma=s, spot=float(mcfg["spot"]), **common)


def load_points(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("model.path", f"cannot read: {exc}") from None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(t) for t in line.split(",")])
        except ValueError:
            if rows:
                raise ConfigError("model.path", f"non-numeric row: {line!r}") from None
    if len(rows) < 2 or len({len(r) for r in rows}) != 1 or len(rows[0]) % 2:
        raise ConfigError("model.path", "need at least two rows with an even number of columns")
    return np.array(rows)


def build_criterion(c: dict):
    k = c["kind"]
    if k == "forward_start":
        return forward_start()
    if k == "american_put":
        return american_put(c["strike"], c["rate"], c["discount_convention"])
    if k == "constant":
        return constant(c["value"])
    return expression(c["expr"])


# computation ---------------------------------------------------------------------------

def _pairs(cfg):
    p = cfg["p"]
    pairs, skipped = [], []
    for m in cfg["metrics"]:
        for c in ["none"] + [c for c in cfg["constraints"] if c != "none"]:
            if api.supported(m, c, p):
                if (m, c) not in pairs:
                    pairs.append((m, c))
            else:
                skipped.append(f"{m}/{c}")
    return pairs, skipped


def _sigmas(cfg):
    if cfg["sweep"]:
        return [float(s) for s in cfg["sweep"]["sigma"]]
    if cfg["model"]["kind"] == "empirical":
        return [None]
    return [float(cfg["model"]["sigma"])]


def _point_seed(seed, i):
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def _make_problem(cfg, i, sigma):
    model = build_model(cfg["model"], sigma)
    crit = build_criterion(cfg["criterion"])
    s = cfg["sampling"]
    return Problem(crit, model, mode=s["mode"], n=s["n"], seed=_point_seed(cfg["seed"], i))


def _run_point(cfg, i, sigma, pairs):
    pb = _make_problem(cfg, i, sigma)
    reps = api.sensitivities(pb.criterion, pb.model, cfg["p"], pairs, problem=pb)
    bad = api.check_ordering(reps)
    gval = criterion_value(pb.criterion, (pb.sample.x1, pb.sample.x2), pb.model, pb.sample.w)
    gse = pb.sample.stderr(_payoff(pb))
    return {"sigma": sigma, "reports": reps, "violations": bad, "g": gval, "g_stderr": gse}


def _payoff(pb):
    from .criteria import payoff_value

    return payoff_value(pb.criterion, pb.model, pb.sample.x1, pb.sample.x2)


def run_sweep(cfg, threads=1):
    pairs, skipped = _pairs(cfg)
    sig = _sigmas(cfg)
    if threads > 1 and len(sig) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futs = [ex.submit(_run_point, cfg, i, s, pairs) for i, s in enumerate(sig)]
            results = [f.result() for f in futs]
    else:
        results = [_run_point(cfg, i, s, pairs) for i, s in enumerate(sig)]
    viol = [dict(v, sigma=r["sigma"]) for r in results for v in r["violations"]]
    if viol:
        raise NumericalError("ordering invariant violated", {"violations": viol})
    return results, pairs, skipped


def _csv(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _sens_rows(results, pairs, p, relative=False):
    rows = []
    for res in results:
        for key in pairs:
            rep = res["reports"].get(key)
            if rep is None:
                continue
            val, se = rep.value, rep.stderr
            if relative:
                if abs(res["g"]) < 1e-12:
                    raise NumericalError("criterion value is zero; relative sensitivity undefined",
                                         {"sigma": res["sigma"], "g": res["g"]})
                val, se = val / abs(res["g"]), se / abs(res["g"])
            rows.append([fmt(res["sigma"]), key[1], key[0], fmt(p), fmt(val), fmt(se)])
    return rows


def _curves(results, pairs, relative=False):
    xs = [r["sigma"] if r["sigma"] is not None else 0.0 for r in results]
    series = []
    for key in pairs:
        ys = []
        for r in results:
            v = r["reports"][key].value
            ys.append(v / abs(r["g"]) if relative else v)
        series.append((f"{key[0]}/{key[1]}", xs, ys))
    return series


SENS_HEADER = ["sigma", "constraint", "metric", "p", "value", "stderr"]


class Runner:
    def __init__(self, cfg, out: Path, threads: int):
        self.cfg, self.out, self.threads = cfg, out, threads
        self.files = []
        self.extra = {}

    def write(self, name, text):
        (self.out / name).write_text(text)
        self.files.append(name)

    def sensitivity(self, relative=False, plots=False):
        results, pairs, skipped = run_sweep(self.cfg, self.threads)
        self.extra["skipped"] = skipped
        p = self.cfg["p"]
        if not relative or plots:
            self.write("sensitivity.csv", _csv(_sens_rows(results, pairs, p), SENS_HEADER))
        if relative or plots:
            self.write("relative.csv", _csv(_sens_rows(results, pairs, p, relative=True), SENS_HEADER))
            self.write("criterion_value.csv", _csv([[fmt(r["sigma"]), fmt(r["g"]), fmt(r["g_stderr"])] for r in results],
                                                   ["sigma", "value", "stderr"]))
        reports = [{"sigma": r["sigma"], "criterion_value": r["g"],
                    "reports": [rep.to_dict(with_hedges=False) for rep in r["reports"].values()]} for r in results]
        self.write("reports.json", json.dumps(reports, indent=2, sort_keys=True) + "\n")
        if plots:
            self.write("sensitivity.svg", svg.line_plot(_curves(results, pairs), "Sensitivities", "sigma", "sensitivity"))
            self.write("relative.svg", svg.line_plot(_curves(results, pairs, True), "Relative sensitivities",
                                                     "sigma", "sensitivity / criterion value"))
            self.extra["relative_gap"] = _gaps(results, pairs)
        return reports

    def hedge(self):
        pb = _make_problem(self.cfg, 0, _sigmas(self.cfg)[0])
        pairs, skipped = _pairs(self.cfg)
        self.extra["skipped"] = skipped
        reps = api.sensitivities(pb.criterion, pb.model, self.cfg["p"], pairs, problem=pb)
        bad = api.check_ordering(reps)
        if bad:
            raise NumericalError("ordering invariant violated", {"violations": bad})
        series, gaps = [], {}
        grid = pb.grid
        for (m, c), rep in reps.items():
            if not rep.hedges:
                continue
            cols = ["x1"] + list(rep.hedges)
            rows = [[fmt(x)] + [fmt(rep.hedges[k](x)) for k in rep.hedges] for x in grid]
            self.write(f"hedge_{m}_{c}.csv", _csv(rows, cols))
            for k, h in rep.hedges.items():
                series.append((f"{m}/{c} {k}", grid.tolist(), h(grid).tolist()))
            if "h_fredholm" in rep.hedges:
                gaps[f"{m}/{c}"] = float(np.max(np.abs(rep.hedges["h"](grid) - rep.hedges["h_fredholm"](grid))))
        note = "; ".join(f"{k}: max |direct - integral eq.| = {v:.3g}" for k, v in gaps.items()) or None
        self.write("hedges.svg", svg.line_plot(series, "Optimal hedges", "x1", "hedge", note))
        self.extra["hedge_gaps"] = gaps
        doc = [rep.to_dict(with_hedges=False) for rep in reps.values()]
        self.write("reports.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return doc

    def worst_case(self):
        sc = self.cfg["scenario"]
        pb = _make_problem(self.cfg, 0, _sigmas(self.cfg)[0])
        d = _sc.displacement_direction(pb.criterion, pb.model, self.cfg["p"], sc["constraint"], sc["metric"], problem=pb)
        scen = _sc.pushforward_scenario(pb.model, d, float(sc["r"]), sc["n"], _point_seed(self.cfg["seed"], 10_000),
                                        sc["recentre"])
        tab = _sc.first_order_gain(pb.criterion, pb.model, d, sc["radii"])
        k = min(SCATTER_CAP, scen.base.shape[0])
        rows = [[fmt(v) for v in (*scen.base[i], *scen.displaced[i])] for i in range(k)]
        self.write("scenario.csv", _csv(rows, ["x1", "x2", "x1_prime", "x2_prime"]))
        self.write("gain.csv", _csv([[fmt(r), fmt(g), fmt(s)] for r, g, s in tab.rows()], ["r", "gain", "stderr"]))
        summ = scen.summary()
        summ.update({"extrapolated_gain": tab.extrapolated, "sensitivity": tab.sensitivity,
                     "gain_relative_error": tab.relative_error})
        self.write("summary.json", json.dumps(summ, indent=2, sort_keys=True) + "\n")
        self.write("scatter.svg", svg.scatter_plot(
            [("reference", "#d62728", scen.base[:k, 0], scen.base[:k, 1]),
             (f"worst case r={fmt(sc['r'])}", "#1f77b4", scen.displaced[:k, 0], scen.displaced[:k, 1])],
            f"Worst-case scenario ({sc['metric']}/{sc['constraint']})", "x1", "x2",
            f"diagonal mass {summ['diagonal_mass_base']:.3f} -> {summ['diagonal_mass_displaced']:.3f}"))
        return summ


def _gaps(results, pairs):
    out = []
    for r in results:
        vals = [r["reports"][k].value / abs(r["g"]) for k in pairs]
        out.append({"sigma": r["sigma"], "max_pairwise_gap": float(max(vals) - min(vals))})
    return out


# entry point ------------------------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="modelrisk", description="First-order model-risk sensitivities.")
    ap.add_argument("command", choices=["sensitivity", "relative", "hedge", "worst-case", "sweep"])
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="master seed (overrides config)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    return ap


def _failed_manifest(args, raw, exc):
    """Best-effort manifest for runs rejected before the config resolved."""
    target = args.out or (raw.get("output") if isinstance(raw, dict) else None)
    if not isinstance(target, str):
        return
    try:
        out = Path(target)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"command": args.command, "config": raw, "exit_code": 2, "files": [],
               "error": {"path": exc.path, "message": str(exc)}}
        (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    except OSError:
        pass


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    raw = {}
    out = None
    try:
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("--config", f"cannot load: {exc}") from None
        if args.seed is not None:
            if not isinstance(raw, dict):
                raise ConfigError("<root>", "config must be a JSON object")
            raw["seed"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        cfg = resolve_config(raw)
        if args.out:
            cfg["output"] = args.out
        if args.command == "sweep" and not cfg["sweep"]:
            raise ConfigError("sweep", "the sweep command needs a sigma list")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _failed_manifest(args, raw, exc)
        return 2
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    runner = Runner(cfg, out, args.threads)
    manifest = {"command": args.command, "config": cfg}
    code = 0
    try:
        if args.command == "sensitivity":
            doc = runner.sensitivity()
        elif args.command == "relative":
            doc = runner.sensitivity(relative=True)
        elif args.command == "sweep":
            doc = runner.sensitivity(plots=True)
        elif args.command == "hedge":
            doc = runner.hedge()
        else:
            doc = runner.worst_case()
        print(json.dumps(doc, indent=2, sort_keys=True))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        diag = {"error": str(exc), "type": type(exc).__name__}
        diag.update(getattr(exc, "diagnostics", {}))
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True, default=str) + "\n")
        runner.files.append("diagnostics.json")
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = 3
    manifest.update({"exit_code": code, "files": runner.files, **runner.extra})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
