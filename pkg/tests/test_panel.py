import numpy as np
import pytest

from emvkit.panel import (
    PanelError,
    ResponseTransform,
    grid_to_csv,
    grid_to_json,
    grid_to_records,
    load_panel,
    transform_response,
    vintage_of,
)


def test_vintage_of_labelling_convention():
    assert vintage_of(0, 1) == 1  # first vintage originates in the first period
    assert vintage_of(2, 1) == -1
    for a in (0, 3, 17):
        assert vintage_of(a, a) == 0


def test_load_small_records():
    grid = load_panel([(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)])
    assert grid.values.shape == (2, 2)
    assert grid.mask[0, 0] and grid.mask[0, 1] and grid.mask[1, 1]
    assert not grid.mask[1, 0]
    assert grid.weights[grid.mask].tolist() == [1.0, 1.0, 1.0]


def test_full_3x3_vintage_span():
    grid = load_panel([(a, t, 1.0) for a in range(3) for t in range(1, 4)])
    # enumerate v = t - a over all 9 cells by hand: spans -1..3
    assert grid.vintage_levels().tolist() == [-1, 0, 1, 2, 3]


def test_empty_input_rejected():
    with pytest.raises(PanelError, match="no observations"):
        load_panel([])
    with pytest.raises(PanelError, match="no observations"):
        load_panel("age,time,value\n")


def test_duplicate_cell_named():
    with pytest.raises(PanelError, match=r"duplicate cell \(age=1, time=2\)"):
        load_panel([(0, 1, 0.1), (1, 2, 0.2), (1, 2, 0.3)])


def test_non_numeric_value_names_row():
    with pytest.raises(PanelError, match="row 2"):
        load_panel("age,time,value\n0,1,0.5\n0,2,oops\n")


def test_header_required():
    with pytest.raises(PanelError, match="header"):
        load_panel("a,b,c\n0,1,0.5\n")


def test_invalid_indices_rejected():
    with pytest.raises(PanelError, match="age"):
        load_panel([(-1, 1, 0.1)])
    with pytest.raises(PanelError, match="time"):
        load_panel([(0, 0, 0.1)])
    with pytest.raises(PanelError, match="integer"):
        load_panel([(0.5, 1, 0.1)])


def test_weight_validation():
    with pytest.raises(PanelError, match="weight"):
        load_panel([(0, 1, 0.1, 0.0), (0, 2, 0.2, 1.0), (1, 2, 0.2, 1.0)])


def test_csv_round_trip_bit_exact():
    rng = np.random.default_rng(0)
    records = [
        (a, t, float(rng.normal()), float(rng.uniform(0.5, 2.0)))
        for a in range(4)
        for t in range(1, 9)
        if rng.random() > 0.3
    ]
    grid = load_panel(records)
    text = grid_to_csv(grid)
    grid2 = load_panel(text)
    assert np.array_equal(grid.mask, grid2.mask)
    assert np.array_equal(grid.values[grid.mask], grid2.values[grid2.mask])
    assert np.array_equal(grid.weights[grid.mask], grid2.weights[grid2.mask])
    assert grid_to_csv(grid2) == text
    assert grid_to_records(grid2) == grid_to_records(grid)
    assert grid_to_json(grid2) == grid_to_json(grid)


def test_grid_immutable():
    grid = load_panel([(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)])
    with pytest.raises(ValueError):
        grid.values[0, 0] = 9.9


def test_identity_transform_is_identity():
    grid = load_panel([(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)])
    out = transform_response(grid, ResponseTransform("identity"))
    assert np.array_equal(out.values, grid.values)
    assert np.array_equal(out.mask, grid.mask)
    assert np.array_equal(out.weights, grid.weights)


def test_log_and_logit_values():
    grid = load_panel([(0, 1, 1.0), (0, 2, 0.5), (1, 2, 0.25)])
    logged = transform_response(grid, ResponseTransform("log"))
    assert logged.values[0, 0] == pytest.approx(0.0, abs=1e-15)  # log(1) = 0
    logit = transform_response(grid, ResponseTransform("logit"))
    assert logit.values[0, 1] == pytest.approx(0.0, abs=1e-15)  # logit(0.5) = 0


def test_transform_epsilon_guards_zero():
    grid = load_panel([(0, 1, 0.0), (0, 2, 0.5), (1, 2, 1.0)])
    logged = transform_response(grid, ResponseTransform("log", epsilon=1e-9))
    assert logged.values[0, 0] == pytest.approx(np.log(1e-9))
    logit = transform_response(grid, ResponseTransform("logit", epsilon=1e-9))
    assert np.isfinite(logit.values[1, 1])  # logit(1) clipped


def test_transform_domain_violation_names_cell():
    grid = load_panel([(0, 1, -0.5), (0, 2, 0.5), (1, 2, 0.2)])
    with pytest.raises(PanelError, match=r"\(age=0, time=1\).*log"):
        transform_response(grid, ResponseTransform("log"))
    with pytest.raises(PanelError, match="logit"):
        transform_response(
            load_panel([(0, 1, 1.5), (0, 2, 0.5), (1, 2, 0.2)]), ResponseTransform("logit")
        )


def test_vintage_identity_property():
    rng = np.random.default_rng(3)
    records = [(a, t, float(rng.normal())) for a in range(6) for t in range(1, 15) if rng.random() > 0.2]
    grid = load_panel(records)
    a_obs, t_obs = grid.observed_cells()
    for a, t in zip(a_obs, t_obs):
        assert vintage_of(a, t) + a - t == 0
