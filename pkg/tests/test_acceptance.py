"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report. Tolerances are pinned here, not configurable.
"""

import sys
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from emvkit.cli import main
from emvkit.design import build_design
from emvkit.estimator import estimable_se, fit_glm, fit_linear
from emvkit.frailty import FrailtyScenario, simulate_vintage_hazard
from emvkit.identify import ConstraintSpec, Decomposition, apply_constraint, drift_report, intrinsic
from emvkit.macro import comparable_nonparametric, fit_semiparametric
from emvkit.panel import PanelGrid, grid_to_csv
from emvkit.service import create_app
from emvkit.synth import ExogenousSource, GeneratorSpec, VintageSource, generate
from emvkit.vintage_effects import fit_random_effects

from conftest import random_grid_spec
from reml_oracle import problem_arrays, profiled_neg2_rll

RE_CONSTRAINT = ConstraintSpec("vintage-trend-zero", window=10_000)


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} - {name}"
    if detail:
        line += f" ({detail})"
    print(line, file=sys.stderr)
    assert ok, line


def ols_slope(x, y):
    xc = np.asarray(x, dtype=float) - np.mean(x)
    return float(xc @ y / (xc @ xc))


@pytest.fixture(scope="module")
def headline_panel():
    """A=24, T=84 macro-driven triangle panel used by several criteria."""
    syn = generate(
        GeneratorSpec(
            A=24,
            T=84,
            exogenous=ExogenousSource(kind="macro", coefficients=(0.08, -0.05)),
            vintage=VintageSource(kind="iid", sigma2=0.0155),
            noise_sd=0.05,
            seed=2024,
        )
    )
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    return syn, design, fit


def test_null_vector_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(555)
    worst = 0.0
    for _ in range(50):
        syn = generate(random_grid_spec(rng))
        design = build_design(syn.grid)
        ratio = np.abs(design.X @ design.c).max() / np.abs(design.X).max()
        worst = max(worst, ratio)
    elapsed = time.perf_counter() - t0
    report(
        "null-vector identity on 50 random grids",
        worst <= 1e-10 and elapsed < 10.0,
        f"worst |Xc|/|X| = {worst:.2e}, {elapsed:.1f}s",
    )


def test_constraint_invariance_six_kinds(headline_panel):
    t0 = time.perf_counter()
    syn, design, fit = headline_panel
    semi = fit_semiparametric(syn.grid, syn.macro)
    decs = [
        apply_constraint(fit, design, ConstraintSpec("last-two-vintages-equal")),
        apply_constraint(fit, design, ConstraintSpec("first-last-vintages-equal")),
        intrinsic(fit, design),
        apply_constraint(fit, design, ConstraintSpec("vintage-trend-zero", window=18)),
        apply_constraint(fit, design, ConstraintSpec("maturity-slope", k=-0.01, a_star=12)),
        comparable_nonparametric(fit, design, semi),
    ]
    fitted_dev = max(
        float(np.abs(d.theta_at(design.cells[:, 0], design.cells[:, 1]) - fit.fitted).max())
        for d in decs
    )
    c = design.layout.null_vector()
    pair_dev = 0.0
    for i in range(len(decs)):
        for j in range(i + 1, len(decs)):
            delta = decs[i].stacked() - decs[j].stacked()
            gamma = float(delta @ c / (c @ c))
            pair_dev = max(pair_dev, float(np.abs(delta - gamma * c).max()))
    elapsed = time.perf_counter() - t0
    report(
        "constraint invariance across 6 kinds",
        fitted_dev <= 1e-8 and pair_dev <= 1e-8 and elapsed < 30.0,
        f"fitted dev {fitted_dev:.2e}, pairwise dev {pair_dev:.2e}, {elapsed:.1f}s",
    )


def test_gamma_shift_correctness(headline_panel):
    _, design, fit = headline_panel
    lay = design.layout
    ok = True
    details = []
    for k in (0.0, -0.01, -0.02):
        dec = apply_constraint(fit, design, ConstraintSpec("maturity-slope", k=k, a_star=12))
        sel = lay.ages > 12
        resid = abs(ols_slope(lay.ages[sel], dec.maturity[sel]) - k)
        ok &= resid <= 1e-10
        details.append(f"slope k={k}: {resid:.1e}")
    dec = apply_constraint(fit, design, ConstraintSpec("vintage-trend-zero", window=18))
    resid = abs(ols_slope(lay.vintages[-18:], dec.vintage[-18:]))
    ok &= resid <= 1e-10
    details.append(f"trend: {resid:.1e}")
    dec = apply_constraint(fit, design, ConstraintSpec("last-two-vintages-equal"))
    resid = abs(dec.vintage[-1] - dec.vintage[-2])
    ok &= resid <= 1e-10
    details.append(f"pairwise: {resid:.1e}")

    base = intrinsic(fit, design)
    c = lay.null_vector()
    for gamma in (-1.0, -0.1, 0.1, 1.0):
        shifted = Decomposition(
            layout=lay,
            intercept=base.intercept + gamma * c[0],
            maturity=base.maturity + gamma * c[lay.age_slice],
            exogenous=base.exogenous + gamma * c[lay.time_slice],
            vintage=base.vintage + gamma * c[lay.vintage_slice],
        )
        got = drift_report(base, shifted)
        ok &= abs(got - gamma) <= 1e-12
    details.append("drift recovered for gamma in {-1,-0.1,0.1,1}")
    report("constraint functionals hit their targets; drift gamma recovered", ok, "; ".join(details))


def test_intrinsic_estimator(headline_panel):
    _, design, fit = headline_panel
    d1 = intrinsic(fit, design)
    d2 = intrinsic(d1)
    idem = float(np.abs(d1.stacked() - d2.stacked()).max())
    c = design.layout.null_vector()
    base_norm = float(np.linalg.norm(d1.stacked()))
    minimal = all(
        base_norm <= float(np.linalg.norm(d1.stacked() + g * c)) + 1e-12
        for g in np.linspace(-2.0, 2.0, 41)
    )
    report(
        "intrinsic estimator idempotent and minimum-norm",
        idem <= 1e-12 and minimal,
        f"idempotence dev {idem:.2e}",
    )


def test_oracle_recovery_noiseless_and_coverage():
    t0 = time.perf_counter()
    worst = 0.0
    for pattern, seed in (("bottom-left-triangle", 1), ("rectangular", 2), ("random", 3)):
        syn = generate(GeneratorSpec(A=10, T=36, missing_pattern=pattern, noise_sd=0.0, seed=seed))
        design = build_design(syn.grid)
        fit = fit_linear(design, syn.grid)
        rec = intrinsic(fit, design)
        tru = intrinsic(syn.truth)
        for block in ("maturity", "exogenous", "vintage"):
            worst = max(worst, float(np.abs(getattr(rec, block) - getattr(tru, block)).max()))
        worst = max(worst, abs(rec.intercept - tru.intercept))
    noiseless_ok = worst <= 1e-8

    # noisy coverage of estimable contrasts: 95% nominal within +/- 4pp
    n_seeds = 200
    spec0 = GeneratorSpec(A=8, T=24, missing_pattern="rectangular", noise_sd=0.05, seed=0)
    probe = generate(spec0)
    d_probe = build_design(probe.grid)
    lay = d_probe.layout
    contrasts = []
    for block_slice, pos in ((lay.age_slice, 4), (lay.time_slice, 10), (lay.vintage_slice, 12)):
        l = np.zeros(lay.size)
        l[block_slice.start + pos - 1] = 1.0
        l[block_slice.start + pos] = -2.0
        l[block_slice.start + pos + 1] = 1.0
        contrasts.append(l)
    hits = np.zeros(len(contrasts))
    for seed in range(n_seeds):
        syn = generate(GeneratorSpec(A=8, T=24, missing_pattern="rectangular", noise_sd=0.05, seed=seed))
        design = build_design(syn.grid)
        fit = fit_linear(design, syn.grid)
        truth_stack = syn.truth.stacked()
        for i, l in enumerate(contrasts):
            est = float(l @ fit.beta_hat)
            true_val = float(l @ truth_stack)
            se = estimable_se(fit, l)
            hits[i] += abs(est - true_val) <= 1.959964 * se
    coverage = hits / n_seeds
    cover_ok = bool(np.all((coverage >= 0.91) & (coverage <= 0.99)))
    elapsed = time.perf_counter() - t0
    report(
        "oracle recovery (noiseless equality, noisy coverage)",
        noiseless_ok and cover_ok and elapsed < 180.0,
        f"noiseless dev {worst:.2e}; coverage {np.round(coverage, 3).tolist()}; {elapsed:.0f}s",
    )


def test_comparable_constraint_gamma(headline_panel):
    syn, design, fit = headline_panel
    semi = fit_semiparametric(syn.grid, syn.macro)
    comp = comparable_nonparametric(fit, design, semi)
    s_np = ols_slope(comp.layout.times, comp.exogenous)
    s_par = ols_slope(semi.layout.times, semi.implied_time_effects)
    dev = abs(s_np - s_par)
    report("comparable-constraint gamma equalizes time drift", dev <= 1e-10, f"slope dev {dev:.2e}")


def test_random_effects_criteria():
    t0 = time.perf_counter()
    rhos, s2s = [], []
    for seed in range(20):
        syn = generate(
            GeneratorSpec(A=24, T=84, vintage=VintageSource(kind="ar1", rho=0.822, sigma2=0.0155),
                          noise_sd=0.05, seed=700 + seed)
        )
        fit = fit_random_effects(syn.grid, None, "ar1", RE_CONSTRAINT)
        rhos.append(fit.process.rho)
        s2s.append(fit.process.sigma2_v)
    rho_med = float(np.median(rhos))
    s2_med = float(np.median(s2s))
    rho_ok = 0.65 <= rho_med <= 0.95
    s2_ok = 0.5 * 0.0155 <= s2_med <= 1.5 * 0.0155

    # shrinkage monotone in per-vintage observation count (iid, triangle design)
    syn = generate(
        GeneratorSpec(A=24, T=84, vintage=VintageSource(kind="iid", sigma2=0.0155),
                      noise_sd=0.05, seed=900)
    )
    iid_fit = fit_random_effects(syn.grid, None, "iid-normal", RE_CONSTRAINT)
    order = np.argsort(iid_fit.cells_per_vintage, kind="stable")
    ratios = iid_fit.shrinkage_ratio[order]
    counts = iid_fit.cells_per_vintage[order]
    mono_ok = all(
        ratios[i] >= ratios[i - 1] - 1e-10 or counts[i] == counts[i - 1]
        for i in range(1, counts.size)
    )

    # REML optimum within one step of the dense brute-force grid oracle
    syn_small = generate(
        GeneratorSpec(A=6, T=30, vintage=VintageSource(kind="ar1", rho=0.7, sigma2=0.01),
                      noise_sd=0.05, seed=13)
    )
    spec = ConstraintSpec("maturity-slope", k=0.0, a_star=3)
    fit_small = fit_random_effects(syn_small.grid, None, "ar1", spec)
    y, xf, z_index, vintages = problem_arrays(syn_small.grid, spec)
    s2v_grid = np.geomspace(0.01 / 4, 0.01 * 4, 7)
    rho_grid = np.linspace(-0.9, 0.9, 13)
    table = np.empty((s2v_grid.size, rho_grid.size))
    for i, s2v in enumerate(s2v_grid):
        for j, rho in enumerate(rho_grid):
            table[i, j], _ = profiled_neg2_rll(y, xf, z_index, vintages, s2v, rho)
    oi, oj = np.unravel_index(np.argmin(table), table.shape)
    pi = int(np.argmin(np.abs(np.log(s2v_grid) - np.log(fit_small.process.sigma2_v))))
    pj = int(np.argmin(np.abs(rho_grid - fit_small.process.rho)))
    oracle_ok = abs(pi - oi) <= 1 and abs(pj - oj) <= 1

    elapsed = time.perf_counter() - t0
    report(
        "random effects: AR(1) recovery, shrinkage monotonicity, REML oracle",
        rho_ok and s2_ok and mono_ok and oracle_ok and elapsed < 300.0,
        f"median rho {rho_med:.3f}, median sigma2_v {s2_med:.4f}, oracle step ({abs(pi-oi)},{abs(pj-oj)}), {elapsed:.0f}s",
    )


def test_frailty_mechanism():
    t0 = time.perf_counter()
    sc = FrailtyScenario(omega=0.5, horizon=120)
    curves = simulate_vintage_hazard(sc)
    v = curves.vintage_hazard
    peak = int(np.argmax(v))
    decline_ok = bool(np.all(np.diff(np.log(v[peak:])) < 0))

    rng = np.random.default_rng(77)
    ages = np.arange(sc.horizon + 1, dtype=float)
    rise = 1.0 - np.exp(-ages / sc.tau)
    num = np.zeros(sc.horizon + 1)
    den = np.zeros(sc.horizon + 1)
    remaining = 1_000_000
    while remaining > 0:
        m = min(50_000, remaining)
        remaining -= m
        z = rng.lognormal(0.0, sc.omega, m)
        h = np.clip(z[:, None] * sc.h0 * rise[None, :], 0.0, 1.0 - 1e-12)
        surv = np.ones_like(h)
        surv[:, 1:] = np.cumprod(1.0 - h[:, :-1], axis=1)
        num += (h * surv).sum(axis=0)
        den += surv.sum(axis=0)
    mc = num / den
    rel = float((np.abs(v[1:] - mc[1:]) / mc[1:]).max())
    mc_ok = rel <= 0.02

    flat = simulate_vintage_hazard(FrailtyScenario(omega=0.0, horizon=600))
    flat_ok = flat.vintage_hazard[-1] == 0.02

    elapsed = time.perf_counter() - t0
    report(
        "frailty: strict post-peak decline, MC agreement, flat limit",
        decline_ok and mc_ok and flat_ok and elapsed < 60.0,
        f"peak {peak}, max rel dev vs MC {rel:.4f}, {elapsed:.0f}s",
    )


def test_glm_criteria():
    syn = generate(GeneratorSpec(A=8, T=24, missing_pattern="rectangular", noise_sd=0.05, seed=15))
    design = build_design(syn.grid)
    lin = fit_linear(design, syn.grid)
    gau = fit_glm(design, syn.grid, "gaussian-identity")
    gau_dev = max(
        float(np.abs(gau.beta_hat - lin.beta_hat).max()), float(np.abs(gau.fitted - lin.fitted).max())
    )

    syn_p = generate(GeneratorSpec(A=6, T=18, missing_pattern="rectangular", beta0=-4.5,
                                   noise_sd=0.0, seed=16))
    design_p = build_design(syn_p.grid)
    theta = syn_p.truth.theta_at(design_p.cells[:, 0], design_p.cells[:, 1])
    exposure = 1e6
    counts = exposure * np.exp(theta)
    values = syn_p.grid.values.copy()
    a_obs, t_obs = syn_p.grid.observed_cells()
    values[a_obs - syn_p.grid.ages[0], t_obs - syn_p.grid.times[0]] = counts
    grid_p = PanelGrid(ages=syn_p.grid.ages.copy(), times=syn_p.grid.times.copy(), values=values,
                       mask=syn_p.grid.mask.copy(), weights=syn_p.grid.weights.copy())
    fit_p = fit_glm(design_p, grid_p, "poisson-log", offset=np.full(counts.size, np.log(exposure)))
    rec = intrinsic(fit_p, design_p)
    tru = intrinsic(syn_p.truth)
    pois_dev = max(
        float(np.abs(getattr(rec, b) - getattr(tru, b)).max())
        for b in ("maturity", "exogenous", "vintage")
    )
    pois_dev = max(pois_dev, abs(rec.intercept - tru.intercept))
    report(
        "GLM: gaussian IRLS equals linear fit; poisson recovers truth",
        gau_dev <= 1e-10 and pois_dev <= 1e-3,
        f"gaussian dev {gau_dev:.2e}, poisson dev {pois_dev:.2e}",
    )


def test_cli_determinism(tmp_path):
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    for d in dirs:
        gen = d / "gen"
        assert main(["generate", "--a", "10", "--t", "36", "--seed", "77", "--exogenous",
                     "macro:0.08,-0.05", "--out-dir", str(gen)]) == 0
        assert main(["fit", "--panel", str(gen / "panel.csv"), "--kind", "maturity-slope",
                     "--k", "-0.01", "--a-star", "6", "--out-dir", str(d / "fit")]) == 0
        assert main(["sweep", "--panel", str(gen / "panel.csv"), "--k", "0,-0.01,-0.02",
                     "--a-star", "6", "--out-dir", str(d / "sweep")]) == 0
        assert main(["fit-macro", "--panel", str(gen / "panel.csv"), "--macro",
                     str(gen / "macro.csv"), "--out-dir", str(d / "macro")]) == 0
    files = [
        "gen/panel.csv", "gen/truth.json", "gen/macro.csv",
        "fit/fit.json", "fit/decomposition.json", "fit/decomposition.csv",
        "sweep/sweep.json", "sweep/sweep.csv",
        "macro/macro_fit.json", "macro/comparable_decomposition.csv",
    ]
    same = all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
    report("CLI determinism: byte-identical CSV/JSON", same, f"{len(files)} artifacts compared")


def test_secondary_service_matches_cli(tmp_path):
    syn = generate(GeneratorSpec(A=10, T=36, seed=77, exogenous=ExogenousSource(kind="macro")))
    csv_text = grid_to_csv(syn.grid)
    client = TestClient(create_app())
    r = client.post("/sessions", content=csv_text, headers={"content-type": "text/csv"})
    sid = r.json()["session_id"]
    served = client.get(f"/sessions/{sid}/sweep", params={"ks": "0,-0.01,-0.02", "a_star": 6})
    panel_path = tmp_path / "panel.csv"
    panel_path.write_text(csv_text)
    out = tmp_path / "out"
    assert main(["sweep", "--panel", str(panel_path), "--k", "0,-0.01,-0.02", "--a-star", "6",
                 "--out-dir", str(out)]) == 0
    same = served.content == (out / "sweep.json").read_bytes()
    report("[secondary] service sweep JSON equals CLI output byte-for-byte", same)
