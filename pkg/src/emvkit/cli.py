"""Command-line entry point: fit, re-identify, sweep, macro and random-effects
fits, forecasting, frailty simulation, synthetic data generation, HTTP serving.

Every chart written has a CSV twin holding exactly the plotted numbers, and
identical invocations produce byte-identical CSV/JSON output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import charts
from .design import build_design, design_to_csv
from .estimator import fit_linear, fit_to_json, fit_from_json
from .forecast import ForecastSpec, forecast
from .frailty import FrailtyScenario, simulate_vintage_hazard
from .identify import (
    ConstraintSpec,
    apply_constraint,
    apply_constraint_to_vector,
    constraint_sweep,
    decomposition_to_csv,
    decomposition_to_json,
    decomposition_to_json_dict,
)
from .macro import load_macro, fit_semiparametric, comparable_nonparametric, semiparametric_to_json_dict
from .panel import PanelGrid, ResponseTransform, load_panel, grid_to_csv
from .synth import ExogenousSource, GeneratorSpec, MaturityShape, VintageSource, generate
from .vintage_effects import fit_random_effects, random_effects_to_json_dict

__all__ = ["main"]

CONSTRAINT_CHOICES = (
    "intrinsic",
    "last-two-vintages-equal",
    "first-last-vintages-equal",
    "vintage-trend-zero",
    "maturity-slope",
)


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get("EMVKIT_OUT_DIR", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _constraint_from_args(args) -> ConstraintSpec:
    return ConstraintSpec(
        kind=args.kind,
        k=args.k,
        a_star=args.a_star,
        window=args.window,
    )


def _add_constraint_flags(p: argparse.ArgumentParser, default_kind: str = "intrinsic") -> None:
    p.add_argument("--kind", choices=CONSTRAINT_CHOICES, default=default_kind,
                   help="identifiability constraint kind")
    p.add_argument("--k", type=float, default=0.0, help="target maturity slope per month (maturity-slope)")
    p.add_argument("--a-star", type=int, default=60, help="age threshold for the maturity tail")
    p.add_argument("--window", type=int, default=18, help="number of most recent vintages in C_V")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=None, help="output directory (default $EMVKIT_OUT_DIR or .)")


def _transform_from_args(args) -> ResponseTransform:
    return ResponseTransform(kind=args.transform, epsilon=args.epsilon)


def _add_transform_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--transform", choices=("identity", "log", "logit"), default="identity")
    p.add_argument("--epsilon", type=float, default=1e-9)


def _parse_ks(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ValueError(f"could not parse k list {text!r}; expected comma-separated numbers") from None


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_generate(args) -> int:
    out = _out_dir(args)
    if args.vintage.startswith("ar1:"):
        rho, sig2 = (float(v) for v in args.vintage[4:].split(","))
        vintage = VintageSource(kind="ar1", rho=rho, sigma2=sig2)
    elif args.vintage.startswith("iid:"):
        vintage = VintageSource(kind="iid", sigma2=float(args.vintage[4:]))
    else:
        raise ValueError(f"unknown vintage source {args.vintage!r}; use iid:<sigma2> or ar1:<rho>,<sigma2>")
    if args.exogenous == "bump":
        exo = ExogenousSource(kind="bump")
    elif args.exogenous.startswith("macro:"):
        coefs = tuple(float(v) for v in args.exogenous[6:].split(","))
        exo = ExogenousSource(kind="macro", coefficients=coefs)
    else:
        raise ValueError(f"unknown exogenous source {args.exogenous!r}; use bump or macro:<c1>,<c2>,...")
    spec = GeneratorSpec(
        A=args.a,
        T=args.t,
        beta0=args.beta0,
        maturity=MaturityShape(amp=args.maturity_amp, tau=args.maturity_tau, tail_slope=args.maturity_tail_slope),
        exogenous=exo,
        vintage=vintage,
        noise_sd=args.noise_sd,
        missing_pattern=args.pattern,
        missing_p=args.missing_p,
        future_months=args.future_months,
        seed=args.seed,
    )
    syn = generate(spec)
    _write(out / "panel.csv", grid_to_csv(syn.grid))
    _write(out / "truth.json", decomposition_to_json(syn.truth))
    if syn.macro is not None:
        _write(out / "macro.csv", syn.macro.to_csv())
    return 0


def _cmd_fit(args) -> int:
    out = _out_dir(args)
    grid = load_panel(args.panel)
    g = _transform_from_args(args)
    design = build_design(grid)
    fit = fit_linear(design, grid, g)
    _write(out / "fit.json", fit_to_json(fit))
    if args.dump_design:
        _write(out / "design.csv", design_to_csv(design))
    spec = _constraint_from_args(args)
    dec = apply_constraint(fit, design, spec, include_se=args.se)
    _write(out / "decomposition.json", decomposition_to_json(dec))
    _write(out / "decomposition.csv", decomposition_to_csv(dec))
    _write(out / "decomposition.svg", charts.decomposition_chart([dec], [spec.kind]))
    return 0


def _cmd_identify(args) -> int:
    out = _out_dir(args)
    layout, beta, _ = fit_from_json(Path(args.fit).read_text(encoding="utf-8"))
    spec = _constraint_from_args(args)
    dec = apply_constraint_to_vector(layout, beta, spec)
    _write(out / "decomposition.json", decomposition_to_json(dec))
    _write(out / "decomposition.csv", decomposition_to_csv(dec))
    _write(out / "decomposition.svg", charts.decomposition_chart([dec], [spec.kind]))
    return 0


def sweep_payload(fit, design, a_star: int, ks: list[float]) -> dict:
    decs = constraint_sweep(fit, design, a_star, ks)
    return {
        "a_star": int(a_star),
        "ks": [float(k) for k in ks],
        "decompositions": [decomposition_to_json_dict(d) for d in decs],
    }


def sweep_csv(payload: dict) -> str:
    lines = ["component,index,k,value"]
    for k, dec in zip(payload["ks"], payload["decompositions"]):
        for block, key in (("maturity", "age"), ("exogenous", "time"), ("vintage", "vintage")):
            for entry in dec[block]:
                lines.append(f"{block},{entry[key]},{float(k)!r},{entry['value']!r}")
    return "\n".join(lines) + "\n"


def _cmd_sweep(args) -> int:
    out = _out_dir(args)
    grid = load_panel(args.panel)
    g = _transform_from_args(args)
    design = build_design(grid)
    fit = fit_linear(design, grid, g)
    ks = _parse_ks(args.k)
    payload = sweep_payload(fit, design, args.a_star, ks)
    decs = constraint_sweep(fit, design, args.a_star, ks)
    _write(out / "sweep.json", _dump(payload))
    _write(out / "sweep.csv", sweep_csv(payload))
    _write(out / "sweep.svg", charts.decomposition_chart(decs, [f"k={k}" for k in ks]))
    return 0


def macro_fit_payload(grid: PanelGrid, macro_panel, g: ResponseTransform) -> tuple[dict, object, object]:
    semi = fit_semiparametric(grid, macro_panel, g)
    design = build_design(grid)
    np_fit = fit_linear(design, grid, g)
    comp = comparable_nonparametric(np_fit, design, semi)
    payload = {
        "semiparametric": semiparametric_to_json_dict(semi),
        "comparable_nonparametric": decomposition_to_json_dict(comp),
        "nonparametric_r_squared": float(np_fit.r_squared),
    }
    return payload, semi, comp


def _cmd_fit_macro(args) -> int:
    out = _out_dir(args)
    grid = load_panel(args.panel)
    macro_panel = load_macro(args.macro)
    g = _transform_from_args(args)
    payload, semi, comp = macro_fit_payload(grid, macro_panel, g)
    _write(out / "macro_fit.json", _dump(payload))
    _write(out / "comparable_decomposition.csv", decomposition_to_csv(comp))
    implied = charts.Series("implied parametric", semi.layout.times, semi.implied_time_effects, "dashed")
    e_np = charts.Series("nonparametric (comparable)", comp.layout.times, comp.exogenous, "solid",
                         band=comp.exogenous_se)
    panel_e = charts.line_panel([e_np, implied], "Exogenous effects: nonparametric vs parametric",
                                "time (month)", "effect", 0)
    m_np = charts.Series("nonparametric (comparable)", comp.layout.ages, comp.maturity, "solid",
                         band=comp.maturity_se)
    m_semi = charts.Series("semiparametric", semi.layout.ages, semi.maturity, "dashed")
    panel_m = charts.line_panel([m_np, m_semi], "Maturity effects", "age (months on book)", "effect",
                                charts.PANEL_H)
    v_np = charts.Series("nonparametric (comparable)", comp.layout.vintages, comp.vintage, "solid",
                         band=comp.vintage_se)
    v_semi = charts.Series("semiparametric", semi.layout.vintages, semi.vintage, "dashed")
    panel_v = charts.line_panel([v_np, v_semi], "Vintage effects", "vintage", "effect", 2 * charts.PANEL_H)
    _write(out / "macro_fit.svg", charts.svg_document([panel_e, panel_m, panel_v]))
    return 0


def _cmd_fit_re(args) -> int:
    out = _out_dir(args)
    grid = load_panel(args.panel)
    g = _transform_from_args(args)
    if args.macro:
        handling = load_macro(args.macro)
    else:
        handling = _constraint_from_args(args)
    process_kind = {"iid": "iid-normal", "ar1": "ar1"}[args.process]
    fit = fit_random_effects(grid, g, process_kind, handling)
    _write(out / "random_effects.json", _dump(random_effects_to_json_dict(fit)))
    lines = ["vintage,fixed_value,shrunk_value,ratio,cells"]
    for v, fx, sh, r, c in zip(
        fit.vintages, fit.fixed_vintage, fit.decomposition.vintage, fit.shrinkage_ratio, fit.cells_per_vintage
    ):
        lines.append(f"{int(v)},{float(fx)!r},{float(sh)!r},{float(r)!r},{int(c)}")
    _write(out / "vintage_effects.csv", "\n".join(lines) + "\n")
    fixed = charts.Series("fixed effects", fit.vintages, fit.fixed_vintage, "solid")
    shrunk = charts.Series(f"{process_kind} random effects", fit.vintages, fit.decomposition.vintage, "dashed")
    _write(
        out / "vintage_effects.svg",
        charts.svg_document([charts.line_panel([fixed, shrunk], "Vintage effects", "vintage", "effect", 0)]),
    )
    return 0


def _cmd_forecast(args) -> int:
    out = _out_dir(args)
    grid = load_panel(args.panel)
    g = _transform_from_args(args)
    macro_panel = load_macro(args.macro) if args.macro else None
    override = None
    if args.override:
        override = {}
        for part in args.override.split(","):
            kstr, vstr = part.split("=")
            override[int(kstr)] = float(vstr)
    spec = ForecastSpec(
        horizon_months=args.horizon,
        maturity_tail=args.maturity_tail,
        a_star=args.a_star,
        vintage_mode=args.vintage_mode,
        vintage_window=args.window,
        vintage_override=override,
        macro_future=macro_panel,
        original_scale=args.original_scale,
    )
    if args.vintage_mode == "ar1-process":
        handling = macro_panel if macro_panel is not None else _constraint_from_args(args)
        source = fit_random_effects(grid, g, "ar1", handling)
    elif macro_panel is not None:
        source = fit_semiparametric(grid, macro_panel, g)
    else:
        design = build_design(grid)
        fit = fit_linear(design, grid, g)
        source = apply_constraint(fit, design, _constraint_from_args(args))
    result = forecast(source, spec, grid=grid, transform=g)
    _write(out / "forecast.csv", result.to_csv())
    _write(out / "forecast.json", result.to_json())
    return 0


def _cmd_simulate_frailty(args) -> int:
    out = _out_dir(args)
    quantiles = tuple(float(q) for q in args.quantiles.split(","))
    scenario = FrailtyScenario(
        h0=args.h0, tau=args.tau, omega=args.omega, quantiles=quantiles, horizon=args.horizon
    )
    curves = simulate_vintage_hazard(scenario)
    _write(out / "frailty.csv", curves.to_csv())
    _write(out / "frailty.svg", charts.frailty_chart(curves))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        persist_dir=args.persist_dir,
        fit_async_threshold=args.async_threshold,
        ui_dir=args.ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emvkit", description="EMV decomposition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic panel with known truth")
    p.add_argument("--a", type=int, default=24)
    p.add_argument("--t", type=int, default=84)
    p.add_argument("--beta0", type=float, default=0.0)
    p.add_argument("--maturity-amp", type=float, default=0.5)
    p.add_argument("--maturity-tau", type=float, default=8.0)
    p.add_argument("--maturity-tail-slope", type=float, default=0.0)
    p.add_argument("--exogenous", default="bump", help="bump or macro:<c1>,<c2>,...")
    p.add_argument("--vintage", default="iid:0.0155", help="iid:<sigma2> or ar1:<rho>,<sigma2>")
    p.add_argument("--noise-sd", type=float, default=0.05)
    p.add_argument("--pattern", choices=("rectangular", "bottom-left-triangle", "random"),
                   default="bottom-left-triangle")
    p.add_argument("--missing-p", type=float, default=0.3)
    p.add_argument("--future-months", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit", help="nonparametric fit: minimum-norm plus requested constraint")
    p.add_argument("--panel", required=True)
    p.add_argument("--se", action="store_true", help="include pointwise standard errors")
    p.add_argument("--dump-design", action="store_true",
                   help="also write the dense model matrix as design.csv")
    _add_transform_flags(p)
    _add_constraint_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("identify", help="re-constrain a saved fit")
    p.add_argument("--fit", required=True, help="fit.json written by the fit subcommand")
    _add_constraint_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("sweep", help="maturity-slope constraint sweep over k values")
    p.add_argument("--panel", required=True)
    p.add_argument("--k", default="0,-0.01,-0.02", help="comma-separated slope targets")
    p.add_argument("--a-star", type=int, default=60)
    _add_transform_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit-macro", help="semiparametric macro fit plus comparable nonparametric")
    p.add_argument("--panel", required=True)
    p.add_argument("--macro", required=True)
    _add_transform_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fit_macro)

    p = sub.add_parser("fit-re", help="random-effects vintage fit (iid or AR(1))")
    p.add_argument("--panel", required=True)
    p.add_argument("--process", choices=("iid", "ar1"), default="iid")
    p.add_argument("--macro", default=None, help="macro CSV for the exogenous block")
    _add_transform_flags(p)
    _add_constraint_flags(p, default_kind="maturity-slope")
    _add_common(p)
    p.set_defaults(func=_cmd_fit_re)

    p = sub.add_parser("forecast", help="project the panel forward in calendar time")
    p.add_argument("--panel", required=True)
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--maturity-tail", choices=("hold-last", "straight-line"), default="straight-line")
    p.add_argument("--vintage-mode", choices=("recent-level", "ar1-process", "business-override"),
                   default="recent-level")
    p.add_argument("--override", default=None, help="vintage=value pairs, comma separated")
    p.add_argument("--macro", default=None, help="macro CSV including forecast rows")
    p.add_argument("--original-scale", action="store_true")
    _add_transform_flags(p)
    _add_constraint_flags(p, default_kind="maturity-slope")
    _add_common(p)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("simulate-frailty", help="account-level frailty vs vintage hazard curves")
    p.add_argument("--h0", type=float, default=0.02)
    p.add_argument("--tau", type=float, default=6.0)
    p.add_argument("--omega", type=float, default=0.5)
    p.add_argument("--horizon", type=int, default=120)
    p.add_argument("--quantiles", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate_frailty)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--persist-dir", default=None)
    p.add_argument("--async-threshold", type=int, default=200_000)
    p.add_argument("--ui-dir", default=None, help="built frontend directory to serve statically")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
