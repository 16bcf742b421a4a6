import json

import numpy as np
import pytest

from emvkit.cli import main


def run(args, out_dir):
    return main(args + ["--out-dir", str(out_dir)])


def read(path) -> bytes:
    return path.read_bytes()


@pytest.fixture()
def panel_dir(tmp_path):
    d = tmp_path / "gen"
    assert run(["generate", "--a", "10", "--t", "40", "--seed", "3", "--exogenous",
                "macro:0.08,-0.05", "--future-months", "6"], d) == 0
    return d


def test_generate_outputs(panel_dir):
    assert (panel_dir / "panel.csv").exists()
    assert (panel_dir / "truth.json").exists()
    assert (panel_dir / "macro.csv").exists()


def test_fit_and_identify_round_trip(panel_dir, tmp_path):
    fit_dir = tmp_path / "fit"
    assert run(["fit", "--panel", str(panel_dir / "panel.csv"), "--kind", "maturity-slope",
                "--k", "-0.01", "--a-star", "6", "--dump-design"], fit_dir) == 0
    design_lines = (fit_dir / "design.csv").read_text().splitlines()
    assert design_lines[0].startswith("age,time,intercept,age_0")
    assert design_lines[-1].startswith("c,,")
    dec = json.loads((fit_dir / "decomposition.json").read_text())
    assert dec["constraint"]["kind"] == "maturity-slope"
    ages = np.array([e["age"] for e in dec["maturity"]], dtype=float)
    vals = np.array([e["value"] for e in dec["maturity"]])
    sel = ages > 6
    xc = ages[sel] - ages[sel].mean()
    slope = float(xc @ vals[sel] / (xc @ xc))
    assert slope == pytest.approx(-0.01, abs=1e-10)

    id_dir = tmp_path / "re-id"
    assert run(["identify", "--fit", str(fit_dir / "fit.json"), "--kind", "vintage-trend-zero",
                "--window", "12"], id_dir) == 0
    dec2 = json.loads((id_dir / "decomposition.json").read_text())
    v = np.array([e["value"] for e in dec2["vintage"]][-12:])
    idx = np.array([e["vintage"] for e in dec2["vintage"]][-12:], dtype=float)
    xc = idx - idx.mean()
    assert float(xc @ v / (xc @ xc)) == pytest.approx(0.0, abs=1e-10)


def test_byte_identical_reruns(panel_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["sweep", "--panel", str(panel_dir / "panel.csv"), "--k", "0,-0.01,-0.02",
                    "--a-star", "6"], d) == 0
    for name in ("sweep.json", "sweep.csv", "sweep.svg"):
        assert read(a / name) == read(b / name)
    g1, g2 = tmp_path / "g1", tmp_path / "g2"
    for d in (g1, g2):
        assert run(["generate", "--a", "6", "--t", "20", "--seed", "5"], d) == 0
    assert read(g1 / "panel.csv") == read(g2 / "panel.csv")
    assert read(g1 / "truth.json") == read(g2 / "truth.json")


def test_sweep_chart_has_csv_twin(panel_dir, tmp_path):
    d = tmp_path / "sw"
    assert run(["sweep", "--panel", str(panel_dir / "panel.csv"), "--k", "0,-0.01",
                "--a-star", "6"], d) == 0
    payload = json.loads((d / "sweep.json").read_text())
    csv_lines = (d / "sweep.csv").read_text().splitlines()
    n_entries = sum(
        len(dec["maturity"]) + len(dec["exogenous"]) + len(dec["vintage"])
        for dec in payload["decompositions"]
    )
    assert len(csv_lines) == 1 + n_entries
    svg = (d / "sweep.svg").read_text()
    assert svg.count("<polyline") >= 6  # 2 series per panel, 3 panels
    # spot-check: every plotted number comes from the JSON
    first = csv_lines[1].split(",")
    assert first[0] == "maturity"
    assert float(first[3]) == payload["decompositions"][0]["maturity"][0]["value"]


def test_fit_macro_cli(panel_dir, tmp_path):
    d = tmp_path / "fm"
    assert run(["fit-macro", "--panel", str(panel_dir / "panel.csv"), "--macro",
                str(panel_dir / "macro.csv")], d) == 0
    payload = json.loads((d / "macro_fit.json").read_text())
    assert set(payload) == {"semiparametric", "comparable_nonparametric", "nonparametric_r_squared"}
    assert payload["comparable_nonparametric"]["constraint"]["kind"] == "match-parametric"
    assert "se" in payload["comparable_nonparametric"]["maturity"][0]
    assert (d / "macro_fit.svg").exists()
    assert (d / "comparable_decomposition.csv").exists()


def test_fit_re_cli(panel_dir, tmp_path):
    d = tmp_path / "re"
    assert run(["fit-re", "--panel", str(panel_dir / "panel.csv"), "--process", "iid",
                "--kind", "vintage-trend-zero", "--window", "9999"], d) == 0
    payload = json.loads((d / "random_effects.json").read_text())
    assert payload["process"]["kind"] == "iid-normal"
    assert payload["process"]["sigma2_v"] >= 0
    assert len(payload["shrinkage"]) == len(payload["vintage"])
    assert (d / "vintage_effects.csv").exists()
    assert (d / "vintage_effects.svg").exists()


def test_forecast_cli(panel_dir, tmp_path):
    d = tmp_path / "fc"
    assert run(["forecast", "--panel", str(panel_dir / "panel.csv"), "--macro",
                str(panel_dir / "macro.csv"), "--horizon", "6", "--maturity-tail", "hold-last"], d) == 0
    lines = (d / "forecast.csv").read_text().splitlines()
    assert lines[0] == "age,time,vintage,theta_hat,extrapolation"
    payload = json.loads((d / "forecast.json").read_text())
    assert payload["spec"]["horizon_months"] == 6
    assert len(payload["forecast"]) == len(lines) - 1


def test_simulate_frailty_cli(tmp_path):
    d = tmp_path / "fr"
    assert run(["simulate-frailty", "--horizon", "60"], d) == 0
    header = (d / "frailty.csv").read_text().splitlines()[0]
    assert header.startswith("age,q10_log_hazard")
    assert (d / "frailty.svg").read_text().startswith("<svg")


def test_empty_panel_exits_one(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("age,time,value\n")
    code = main(["fit", "--panel", str(empty), "--out-dir", str(tmp_path)])
    assert code == 1
    assert "no observations" in capsys.readouterr().err


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_out_dir_env_default(panel_dir, tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv("EMVKIT_OUT_DIR", str(target))
    assert main(["simulate-frailty", "--horizon", "24"]) == 0
    assert (target / "frailty.csv").exists()
