import json
import subprocess
import sys

import numpy as np
import pytest

from radonrisk import __version__
from radonrisk.cli import RunConfig, main
from radonrisk.core import bundled_path, load_mortality_table
from radonrisk.mortality import load_rate_distributions, sample_mortality_table


def run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(list(argv) + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_point_reference(tmp_path):
    code, doc = run(["point"], tmp_path)
    assert code == 0
    assert doc["measures"]["lear"] == pytest.approx(0.0572, rel=0.10)
    assert doc["linear_constant"] == pytest.approx(4.27, rel=0.10)
    m = doc["measures"]
    assert m["elr"] <= m["reid"] <= m["lear"] <= m["rads"]
    assert doc["version"] == __version__ and doc["seed"] is None and len(doc["config_hash"]) == 64


def test_point_parametric_and_zero_exposure(tmp_path):
    _, doc = run(["point", "--model", "parametric_sub"], tmp_path)
    for k, v in {"elr": 6.21, "reid": 6.45, "lear": 6.70, "rads": 8.88}.items():
        assert doc["percent"][k] == pytest.approx(v, rel=0.10)
    cfg = tmp_path / "zero.cfg"
    cfg.write_text("annual_wlm = 0\n")
    _, doc = run(["point", "--config", str(cfg)], tmp_path)
    assert all(v == 0 for v in doc["measures"].values())


def test_stdout_json_and_console_summary(capsys):
    assert main(["point"]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["command"] == "point"
    assert "LEAR" in captured.err


def test_uncertainty_ana(tmp_path):
    code, doc = run(["uncertainty", "--method", "ana", "--seed", "1"], tmp_path)
    assert code == 0
    res, an = doc["result"], doc["details"]["analytic"]
    assert res["method"] == "percentile" and res["n"] == 100_000 and res["seed"] == 1
    assert abs(res["percent"]["lower"] - an["percent"]["lower"]) < 0.05
    assert abs(res["percent"]["upper"] - an["percent"]["upper"]) < 0.05


def test_uncertainty_bayes_mh_reproducible(tmp_path):
    argv = ["uncertainty", "--method", "bayes-mh", "--seed", "5", "--model", "parametric_sub",
            "--cohort", str(bundled_path("synthetic_cohort.csv")), "--samples", "3000",
            "--burn-in", "500"]
    code, a = run(argv, tmp_path, "a.json")
    _, b = run(argv, tmp_path, "b.json")
    assert code == 0 and a == b
    assert a["result"]["method"] == "hpdi"
    assert 0.1 <= a["details"]["acceptance_rate"] <= 0.7
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_include_and_relative_paths(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    (sub / "model.json").write_text(json.dumps({"family": "SimpleLinear", "theta": [0.0134],
                                                "se": [0.003005]}))
    (sub / "model.cfg").write_text("model = model.json  # relative to this file\n")
    (tmp_path / "run.cfg").write_text("include = cfg/model.cfg\nmethod = ana\nseed = 3\n"
                                      "samples = 2000\nmeasure = reid\n")
    code, doc = run(["uncertainty", "--config", str(tmp_path / "run.cfg")], tmp_path)
    assert code == 0 and doc["measure"] == "reid" and doc["seed"] == 3
    # flags override the file
    _, doc2 = run(["uncertainty", "--config", str(tmp_path / "run.cfg"), "--seed", "4"], tmp_path)
    assert doc2["seed"] == 4 and doc2["config_hash"] != doc["config_hash"]


def test_config_hash_ignores_outputs_and_workers(tmp_path):
    a = RunConfig.build(None, {"seed": 1, "workers": 1, "out": "a.json"})
    b = RunConfig.build(None, {"seed": 1, "workers": 8, "out": "b.json"})
    c = RunConfig.build(None, {"seed": 2})
    assert a.hash() == b.hash() != c.hash()
    model = tmp_path / "m.json"
    model.write_text(json.dumps({"family": "SimpleLinear", "theta": [0.0134]}))
    h1 = RunConfig.build(None, {"model": str(model)}).hash()
    model.write_text(json.dumps({"family": "SimpleLinear", "theta": [0.0135]}))
    assert RunConfig.build(None, {"model": str(model)}).hash() != h1


@pytest.mark.parametrize("argv,text,code", [
    (["uncertainty", "--method", "ana"], None, 2),
    (["uncertainty", "--method", "ana", "--seed", "1", "--samples", "10"], None, 2),
    (["uncertainty", "--config", "{cfg}"], "include = {cfg}\n", 2),
    (["uncertainty", "--config", "{cfg}"], "method = magic\nseed = 1\n", 2),
    (["point", "--config", "{cfg}"], "annual_wlm = lots\n", 2),
    (["point", "--config", "{dir}/missing.cfg"], None, 2),
    (["point", "--model", "{dir}/missing.json"], None, 2),
    (["point", "--model", "{bad_model}"], None, 3),
    (["point", "--config", "{cfg}"], "mortality_table = {bad}\n", 3),
    (["uncertainty", "--method", "bayes-reject", "--seed", "1", "--samples", "100",
      "--config", "{cfg}"], "reject_lo = -10\nreject_hi = -5\ncohort = {cohort}\n", 4),
])
def test_exit_codes(tmp_path, argv, text, code):
    cfg = tmp_path / "run.cfg"
    bad = tmp_path / "bad.csv"
    bad.write_text("age_start,age_end,r0,q0\n0,94,0.5,0.1\n")
    bad_model = tmp_path / "m.json"
    bad_model.write_text('{"family": "SimpleLinear", "theta": [0.01, 0.02]}')
    fmt = dict(cfg=cfg, dir=tmp_path, bad=bad, bad_model=bad_model,
               cohort=bundled_path("synthetic_cohort.csv"))
    if text is not None:
        cfg.write_text(text.format(**fmt))
    assert main([a.format(**fmt) for a in argv]) == code


@pytest.mark.parametrize("method,extra", [
    ("ana", []),
    ("mortality", []),
    ("joint", ["--model", "parametric_sub"]),
    ("exposure-sim", []),
])
def test_outputs_identical_across_workers(tmp_path, method, extra):
    files = {}
    for w in (1, 3):
        d = tmp_path / f"w{w}"
        d.mkdir()
        argv = ["uncertainty", "--method", method, "--seed", "11", "--samples", "5000",
                "--workers", str(w), "--samples-out", str(d / "s.csv"),
                "--density-out", str(d / "k.csv"), "--out", str(d / "r.json")] + extra
        assert main(argv) == 0
        files[w] = [(d / f).read_bytes() for f in ("s.csv", "k.csv", "r.json")]
    assert files[1] == files[3]


def test_fit_mortality_pipeline(tmp_path):
    obs = str(bundled_path("synthetic_obs_r0.csv"))
    code, doc = run(["fit-mortality", "--observations", obs], tmp_path, "fit.json")
    assert code == 0 and doc["rate"] == "r0"
    fit = tmp_path / "dists.json"
    fit.write_text(json.dumps({"r0": {k: v for k, v in doc.items()
                                      if k not in ("provenance", "group_means")}}))
    table = load_mortality_table()
    sampled = sample_mortality_table(load_rate_distributions(fit), table,
                                     np.random.default_rng(0), vary=("r0",))
    assert np.all(sampled.r0[20:] > 0)

    _, doc = run(["fit-mortality", "--observations", obs, "--family", "lognormal"], tmp_path)
    assert all(g["params"][1] > 0 for g in doc["groups"])

    _, doc = run(["fit-mortality", "--observations", obs, "--centered"], tmp_path)
    for key, mean in doc["group_means"].items():
        assert mean == pytest.approx(table.r0[int(key.split("-")[0])], rel=1e-12)


def _subjects(path, rows):
    path.write_text("id,exit_age,event,cumulative_wlm\n"
                    + "".join(f"{i},{a},{e},{w}\n" for i, (a, e, w) in enumerate(rows, 1)))
    return str(path)


def test_km_command(tmp_path):
    subj = _subjects(tmp_path / "s.csv", [(60, 1, 0), (65, 0, 0), (75, 1, 0), (90, 0, 0),
                                          (70, 1, 200), (88, 0, 300)])
    code, doc = run(["km", "--subjects", subj, "--curves-out", str(tmp_path / "c.csv")], tmp_path)
    assert code == 0
    assert doc["categories"]["none"]["survival_at_cut"] == pytest.approx(0.375)
    assert doc["naive_lear"]["[100,500)"]["estimate"] == pytest.approx(0.375 - 0.5)
    assert (tmp_path / "c.csv").read_text().startswith("category,t,n_at_risk,d,S,var,lo,hi")


def test_km_single_stratum_warns(tmp_path):
    subj = _subjects(tmp_path / "s.csv", [(60, 1, 0), (65, 0, 0), (75, 1, 0)])
    with pytest.warns(UserWarning, match="naive LEAR skipped"):
        code, doc = run(["km", "--subjects", subj], tmp_path)
    assert code == 0 and doc["naive_lear"] == {}


def test_km_via_uncertainty_method(tmp_path):
    subj = str(bundled_path("synthetic_subjects.csv"))
    code, doc = run(["uncertainty", "--method", "km", "--subjects", subj], tmp_path)
    assert code == 0 and len(doc["naive_lear"]) >= 3
    assert all(v["method"] == "naive-km" for v in doc["naive_lear"].values())


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "radonrisk.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert __version__ in out.stdout
