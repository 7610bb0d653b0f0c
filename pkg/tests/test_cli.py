import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from modelrisk.cli import main, resolve_config
from modelrisk.errors import ConfigError

HEADER = ["sigma", "constraint", "metric", "p", "value", "stderr"]


def run(tmp_path, cfg, cmd="sensitivity", name="out", extra=()):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main([cmd, "--config", str(path), "--out", str(out), *extra])
    return code, out


def rows(path):
    with open(path) as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


def by_key(body):
    out = {}
    for s, con, met, p, v, se in body:
        out.setdefault((met, con), []).append((float(s), float(v)))
    return out


def test_bachelier_sweep_is_flat(tmp_path):
    cfg = {"model": {"kind": "bachelier"}, "sweep": {"sigma": [0.1, 0.4, 0.7, 1.0]}}
    code, out = run(tmp_path, cfg, "sweep")
    assert code == 0
    head, body = rows(out / "sensitivity.csv")
    assert head == HEADER
    curves = by_key(body)
    want = {("standard", "none"): 1.0, ("adapted", "none"): np.sqrt(3) / 2, ("adapted", "M"): 0.5}
    for key, v in want.items():
        assert np.allclose([y for _, y in curves[key]], v, atol=1e-9)
    sm = [y for _, y in curves[("standard", "M")]]
    assert max(sm) / min(sm) < 1.0001
    for f in ("sensitivity.svg", "relative.svg"):
        ET.parse(out / f)


def test_black_scholes_sweep_decreases(tmp_path):
    cfg = {"sweep": {"sigma": [0.2, 0.4, 0.6, 0.8]}, "metrics": ["adapted"]}
    code, out = run(tmp_path, cfg, "sweep")
    assert code == 0
    for key, pts in by_key(rows(out / "sensitivity.csv")[1]).items():
        ys = [y for _, y in sorted(pts)]
        assert np.all(np.diff(ys) < 0), key


def test_manifest_echoes_defaults(tmp_path):
    code, out = run(tmp_path, {"model": {"sigma": 0.3}, "constraints": ["M"]})
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["model"]["grid"] == 512
    assert man["config"]["model"]["spot"] == 1.0
    assert man["config"]["sampling"] == {"mode": "quadrature", "n": 200000}
    assert man["exit_code"] == 0
    assert "sensitivity.csv" in man["files"]
    _, body = rows(out / "sensitivity.csv")
    # unconstrained values are always computed
    assert {(r[2], r[1]) for r in body} >= {("adapted", "none"), ("standard", "none"), ("adapted", "M")}


@pytest.mark.parametrize("cfg,path", [
    ({"model": {"kind": "bachelier", "sigma": -1}}, "model.sigma"),
    ({"model": {"kind": "heston"}}, "model.kind"),
    ({"criterion": {"kind": "american_put", "discount_convention": "t99"}}, "criterion.discount_convention"),
    ({"criterion": {"kind": "expression", "expr": "max(x1"}}, "criterion.expr"),
    ({"constraints": ["M", "bogus"]}, "constraints[1]"),
    ({"sampling": {"mode": "mc", "n": 10}}, "sampling.n"),
    ({"p": 1.0}, "p"),
    ({"sweep": {"sigma": [0.2, 0]}}, "sweep.sigma[1]"),
    ({"model": {"kind": "empirical", "path": "x.csv"}}, "model.bandwidth"),
    ({"scenario": {"radii": [0.1, 0.07, 0.01]}}, "scenario.radii"),
    ({"colour": "red"}, "colour"),
])
def test_config_errors_name_the_field(tmp_path, capsys, cfg, path):
    with pytest.raises(ConfigError) as e:
        resolve_config(cfg)
    assert e.value.path == path
    code, out = run(tmp_path, cfg)
    assert code == 2
    assert path in capsys.readouterr().err
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 2 and man["error"]["path"] == path


def test_sweep_command_needs_sigma_list(tmp_path):
    code, _ = run(tmp_path, {}, "sweep")
    assert code == 2


def test_relative_of_constant_payoff_is_zero(tmp_path):
    code, out = run(tmp_path, {"criterion": {"kind": "constant", "value": 1.0}}, "relative")
    assert code == 0
    head, body = rows(out / "relative.csv")
    assert head == HEADER
    assert all(float(r[4]) == 0.0 for r in body)


def test_relative_guard_exits_3_with_diagnostics(tmp_path):
    code, out = run(tmp_path, {"criterion": {"kind": "constant", "value": 0.0}}, "relative")
    assert code == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["type"] == "NumericalError"
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == 3


def test_relative_gaps_shrink_with_volatility(tmp_path):
    cfg = {"sweep": {"sigma": [0.2, 1.0]}}
    code, out = run(tmp_path, cfg, "relative")
    assert code == 0
    gaps = {}
    for s, con, met, p, v, se in rows(out / "relative.csv")[1]:
        gaps.setdefault(float(s), []).append(float(v))
    assert max(gaps[1.0]) - min(gaps[1.0]) < max(gaps[0.2]) - min(gaps[0.2])


def test_hedge_outputs(tmp_path):
    code, out = run(tmp_path, {"model": {"kind": "bachelier", "sigma": 1.0}}, "hedge")
    assert code == 0
    head, body = rows(out / "hedge_adapted_M.csv")
    assert head == ["x1", "h"]
    assert np.allclose([float(r[1]) for r in body], -0.5)
    head, _ = rows(out / "hedge_standard_M.csv")
    assert head == ["x1", "h", "h_fredholm"]
    assert rows(out / "hedge_adapted_M_m1.csv")[0] == ["x1", "h", "f"]
    svg = (out / "hedges.svg").read_text()
    ET.fromstring(svg)
    assert "max |direct - integral eq.|" in svg


def test_worst_case_outputs(tmp_path):
    code, out = run(tmp_path, {"scenario": {"n": 3000}}, "worst-case")
    assert code == 0
    head, body = rows(out / "scenario.csv")
    assert head == ["x1", "x2", "x1_prime", "x2_prime"]
    assert len(body) == 3000
    assert rows(out / "gain.csv")[0] == ["r", "gain", "stderr"]
    summ = json.loads((out / "summary.json").read_text())
    assert summ["diagonal_mass_decrease"] > 0
    ET.parse(out / "scatter.svg")


def test_worst_case_marginal_keeps_columns(tmp_path):
    code, out = run(tmp_path, {"scenario": {"n": 500, "constraint": "m1"}}, "worst-case")
    assert code == 0
    _, body = rows(out / "scenario.csv")
    assert all(r[0] == r[2] for r in body)


def test_worst_case_zero_radius(tmp_path):
    code, out = run(tmp_path, {"scenario": {"n": 200, "r": 0}}, "worst-case")
    assert code == 0
    _, body = rows(out / "scenario.csv")
    assert all(r[:2] == r[2:] for r in body)


def test_outputs_are_byte_identical(tmp_path):
    cfg = {"sweep": {"sigma": [0.3, 0.6]}, "sampling": {"mode": "mc", "n": 20000}, "seed": 9}
    _, a = run(tmp_path, cfg, "sweep", "a")
    _, b = run(tmp_path, cfg, "sweep", "b", extra=("--threads", "3"))
    for f in ("sensitivity.csv", "relative.csv", "criterion_value.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    _, c = run(tmp_path, cfg, "sweep", "c", extra=("--seed", "10"))
    assert (a / "sensitivity.csv").read_bytes() != (c / "sensitivity.csv").read_bytes()


def test_empirical_model_from_csv(tmp_path):
    rng = np.random.default_rng(0)
    x1 = rng.standard_normal(3000)
    pts = np.column_stack([x1, x1 + rng.standard_normal(3000)])
    data = tmp_path / "pts.csv"
    np.savetxt(data, pts, delimiter=",", header="x1,x2", comments="")
    cfg = {"model": {"kind": "empirical", "path": str(data), "bandwidth": 0.25}, "metrics": ["adapted"]}
    code, out = run(tmp_path, cfg)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["sampling"]["mode"] == "data"


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"kind": "bachelier"}, "metrics": ["adapted"]}))
    res = subprocess.run([sys.executable, "-m", "modelrisk", "sensitivity", "--config", str(cfg),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    doc = json.loads(res.stdout)
    assert doc[0]["reports"]
