import numpy as np
import pytest

from emvkit.design import ParameterLayout, build_design
from emvkit.estimator import fit_linear
from emvkit.forecast import ForecastError, ForecastSpec, extrapolate_maturity, forecast
from emvkit.identify import ConstraintSpec, Decomposition, apply_constraint
from emvkit.macro import fit_semiparametric
from emvkit.synth import ExogenousSource, GeneratorSpec, MaturityShape, VintageSource, generate
from emvkit.vintage_effects import fit_random_effects


def make_decomposition(maturity, ages=None) -> Decomposition:
    maturity = np.asarray(maturity, dtype=float)
    ages = np.arange(maturity.size) if ages is None else np.asarray(ages)
    layout = ParameterLayout(
        ages=ages,
        times=np.arange(1, 7),
        vintages=np.arange(1, 7),
    )
    return Decomposition(
        layout=layout,
        intercept=0.0,
        maturity=maturity,
        exogenous=np.zeros(6),
        vintage=np.linspace(-0.1, 0.1, 6),
    )


def test_refuses_raw_fit():
    syn = generate(GeneratorSpec(A=6, T=20, seed=41))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    with pytest.raises(ForecastError, match="constraint"):
        forecast(fit, ForecastSpec(horizon_months=3))


def test_linear_tail_extrapolates_exactly():
    m = -0.01 * np.arange(20.0)
    dec = make_decomposition(m - m.mean())
    out = extrapolate_maturity(dec, a_star=5, target_ages=[25, 30])
    expected = -0.01 * np.array([25.0, 30.0]) - m.mean()
    assert np.allclose(out, expected, atol=1e-12)


def test_hold_last_mode_constant():
    dec = make_decomposition(np.linspace(0, 1, 12))
    out = extrapolate_maturity(dec, a_star=4, target_ages=[15, 40], mode="hold-last")
    assert np.all(out == dec.maturity[-1])


def test_noisy_tail_slope_recovery():
    rng = np.random.default_rng(55)
    ages = np.arange(40)
    m = -0.01 * ages + 0.005 * rng.standard_normal(40)
    dec = make_decomposition(m - m.mean(), ages=ages)
    out = extrapolate_maturity(dec, a_star=15, target_ages=[50, 51])
    slope = out[1] - out[0]
    # OLS sampling sd of the slope over a 24-point tail
    tail = ages[ages > 15].astype(float)
    se = 0.005 / np.sqrt(((tail - tail.mean()) ** 2).sum())
    assert abs(slope - (-0.01)) <= max(3 * se, 1e-4)
    assert abs(slope - (-0.01)) <= 0.005


def test_insufficient_tail_points():
    dec = make_decomposition(np.linspace(0, 1, 8))
    with pytest.raises(ForecastError, match="insufficient tail points"):
        extrapolate_maturity(dec, a_star=6, target_ages=[10])


def test_recent_level_uses_window_mean():
    syn = generate(GeneratorSpec(A=6, T=24, noise_sd=0.0, seed=42))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("vintage-trend-zero", window=6))
    spec = ForecastSpec(horizon_months=1, maturity_tail="hold-last", vintage_mode="recent-level",
                        vintage_window=3)
    res = forecast(dec, spec)
    new_cells = [i for i in range(res.theta.size) if "vintage" in res.flags[i]]
    assert len(new_cells) == 1
    i = new_cells[0]
    expected = dec.intercept + dec.maturity[0] + dec.exogenous[-3:].mean() + dec.vintage[-3:].mean()
    assert res.theta[i] == pytest.approx(expected, abs=1e-12)


def test_default_future_exogenous_holds_recent_mean():
    syn = generate(GeneratorSpec(A=6, T=24, noise_sd=0.0, seed=43))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    res = forecast(dec, ForecastSpec(horizon_months=4, maturity_tail="hold-last", vintage_window=5))
    # same vintage observed at successive future times: theta differences only
    # from maturity, since the default future exogenous level is constant
    level = dec.exogenous[-3:].mean()
    sel = res.vintages == 10
    th = res.theta[sel]
    # ages for vintage 10 at t=25..28 all exceed A, so hold-last pins maturity
    # and theta is constant across the horizon at the recent exogenous mean
    expected = dec.intercept + dec.maturity[-1] + level + \
        dec.vintage[np.searchsorted(dec.layout.vintages, 10)]
    assert np.allclose(th, expected, atol=1e-12)


def test_explicit_future_exogenous_series():
    syn = generate(GeneratorSpec(A=6, T=24, noise_sd=0.0, seed=44))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    series = np.array([0.5, -0.5])
    res = forecast(dec, ForecastSpec(horizon_months=2, maturity_tail="hold-last",
                                     exogenous_future=series))
    sel = (res.vintages == 5)
    diff = res.theta[sel & (res.times == 26)] - res.theta[sel & (res.times == 25)]
    m_diff = (dec.maturity[np.searchsorted(dec.layout.ages, 21 - 0)] if False else 0.0)
    # age moves beyond the observed range on both cells under hold-last, so the
    # theta difference is exactly the exogenous step
    assert diff[0] == pytest.approx(-1.0, abs=1e-12)


def test_business_override_and_missing_value_error():
    syn = generate(GeneratorSpec(A=6, T=24, noise_sd=0.0, seed=45))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    spec = ForecastSpec(horizon_months=2, maturity_tail="hold-last", vintage_mode="business-override",
                        vintage_override={25: 0.3, 26: -0.2})
    res = forecast(dec, spec)
    i25 = [i for i in range(res.theta.size) if res.vintages[i] == 25][0]
    base = dec.intercept + dec.maturity[0] + dec.exogenous[-3:].mean()
    assert res.theta[i25] == pytest.approx(base + 0.3, abs=1e-12)
    bad = ForecastSpec(horizon_months=2, maturity_tail="hold-last", vintage_mode="business-override",
                       vintage_override={25: 0.3})
    with pytest.raises(ForecastError, match="missing values for vintages \\[26\\]"):
        forecast(dec, bad)


def test_ar1_mode_requires_ar1_fit():
    syn = generate(GeneratorSpec(A=6, T=24, noise_sd=0.0, seed=46))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    with pytest.raises(ForecastError, match="AR\\(1\\)"):
        forecast(dec, ForecastSpec(horizon_months=2, maturity_tail="hold-last", vintage_mode="ar1-process"))


def test_ar1_mode_decays_from_last_effect():
    syn = generate(
        GeneratorSpec(A=8, T=40, vintage=VintageSource(kind="ar1", rho=0.8, sigma2=0.01),
                      noise_sd=0.03, seed=47)
    )
    re_fit = fit_random_effects(syn.grid, None, "ar1", ConstraintSpec("vintage-trend-zero", window=12))
    res = forecast(re_fit, ForecastSpec(horizon_months=2, maturity_tail="hold-last", vintage_mode="ar1-process"))
    dec = re_fit.decomposition
    rho = re_fit.process.rho
    last = dec.vintage[-1]
    i41 = [i for i in range(res.theta.size) if res.vintages[i] == 41 and res.times[i] == 41][0]
    expected = dec.intercept + dec.maturity[0] + dec.exogenous[-3:].mean() + rho * last
    assert res.theta[i41] == pytest.approx(expected, abs=1e-10)


def test_missing_future_macro_row_names_time():
    syn = generate(
        GeneratorSpec(A=6, T=20, exogenous=ExogenousSource(kind="macro"), noise_sd=0.02, seed=48)
    )
    semi = fit_semiparametric(syn.grid, syn.macro)
    spec = ForecastSpec(horizon_months=3, maturity_tail="hold-last", macro_future=syn.macro)
    with pytest.raises(Exception, match="missing for time 21"):
        forecast(semi, spec)
    with pytest.raises(ForecastError, match="macro_future"):
        forecast(semi, ForecastSpec(horizon_months=3, maturity_tail="hold-last"))


def test_horizon_zero_reproduces_fitted():
    syn = generate(
        GeneratorSpec(A=6, T=20, exogenous=ExogenousSource(kind="macro"), noise_sd=0.02, seed=49)
    )
    semi = fit_semiparametric(syn.grid, syn.macro)
    res = forecast(semi, ForecastSpec(horizon_months=0), grid=syn.grid)
    assert np.abs(res.theta - semi.fitted).max() == 0.0
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    res2 = forecast(dec, ForecastSpec(horizon_months=0), grid=syn.grid)
    assert np.abs(res2.theta - fit.fitted).max() <= 1e-8


def test_both_unobserved_flag_composition():
    syn = generate(GeneratorSpec(A=3, T=12, noise_sd=0.0, seed=50))
    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    res = forecast(dec, ForecastSpec(horizon_months=8, maturity_tail="hold-last", vintage_window=4))
    kinds = set(res.flags)
    assert "" in kinds and "age" in kinds and "vintage" in kinds and "age+vintage" in kinds
    # a cell from a horizon vintage that has itself aged past A
    i = res.flags.index("age+vintage")
    assert res.vintages[i] > 12 and res.ages[i] > 3


def test_forecast_error_within_twice_residual_scale():
    spec = GeneratorSpec(
        A=24,
        T=72,
        maturity=MaturityShape(amp=0.5, tau=3.0),
        exogenous=ExogenousSource(kind="macro", coefficients=(0.08, -0.05)),
        vintage=VintageSource(kind="iid", sigma2=0.005),
        noise_sd=0.05,
        future_months=12,
        seed=51,
    )
    syn = generate(spec)
    semi = fit_semiparametric(syn.grid, syn.macro)
    fspec = ForecastSpec(horizon_months=12, maturity_tail="hold-last", vintage_mode="recent-level",
                         vintage_window=18, macro_future=syn.macro)
    res = forecast(semi, fspec)
    truth = syn.extended.theta(res.ages, res.times)
    mae = float(np.abs(res.theta - truth).mean())
    assert mae <= 2 * spec.noise_sd


def test_original_scale_output():
    syn = generate(GeneratorSpec(A=6, T=20, beta0=-3.0, noise_sd=0.0, seed=52))
    from emvkit.panel import ResponseTransform

    design = build_design(syn.grid)
    fit = fit_linear(design, syn.grid)
    dec = apply_constraint(fit, design, ConstraintSpec("intrinsic"))
    res = forecast(dec, ForecastSpec(horizon_months=1, maturity_tail="hold-last", original_scale=True),
                   transform=ResponseTransform("log"))
    assert res.y is not None
    assert np.allclose(res.y, np.exp(res.theta), atol=1e-15)
    text = res.to_csv()
    assert text.splitlines()[0] == "age,time,vintage,theta_hat,y_hat,extrapolation"


def test_spec_validation():
    with pytest.raises(ForecastError):
        ForecastSpec(horizon_months=-1)
    with pytest.raises(ForecastError):
        ForecastSpec(maturity_tail="spline")
    with pytest.raises(ForecastError):
        ForecastSpec(vintage_mode="hope")
    with pytest.raises(ForecastError):
        ForecastSpec(vintage_mode="recent-level", vintage_window=0)
