import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmgbm.errors import (
    NegativeOffDiagonal,
    NonConservativeRateMatrix,
    NonpositiveVolatility,
    ParseError,
    ValidationError,
)
from mmgbm.model import (
    Contract,
    Grid,
    MarketScenario,
    ModelParams,
    dump_config,
    load_config,
    reference_model,
    parse_config,
)

REFERENCE_INI = """
[model]
rate_matrix = -10, 20/3, 10/3; 10, -20, 10; 10/3, 20/3, -10
drift = 0.08, 0.09, 0.1
volatility = 0.2, 0.3, 0.4
interest_rate = 0.05

[contract]
strike = 1
maturity = 0.1

[grid]
n_time = 51
n_space = 400
space_bound = 1.5
"""


def test_reference_jump_chain(model):
    p = model.jump_matrix
    np.testing.assert_allclose(p, [[0, 2 / 3, 1 / 3], [0.5, 0, 0.5], [1 / 3, 2 / 3, 0]], atol=1e-15)
    np.testing.assert_allclose(model.exit_rates, [10, 20, 10])
    assert model.norm_inf() == pytest.approx(40.0)


def test_stationary_distribution(model):
    np.testing.assert_allclose(model.stationary_distribution(), [0.375, 0.25, 0.375], atol=1e-12)


def test_two_state_stationary():
    m = ModelParams([[-1, 1], [2, -2]], [0, 0], [0.1, 0.2])
    np.testing.assert_allclose(m.stationary_distribution(), [2 / 3, 1 / 3], atol=1e-12)


def test_absorbing_row_gets_identity_jump():
    m = ModelParams([[0, 0], [3, -3]], [0, 0], [0.1, 0.2])
    np.testing.assert_array_equal(m.jump_matrix, [[1, 0], [1, 0]])
    assert m.exit_rates[0] == 0


def test_zero_rate_matrix_is_valid():
    m = ModelParams(np.zeros((3, 3)), [0.1] * 3, [0.2, 0.3, 0.4])
    np.testing.assert_array_equal(m.jump_matrix, np.eye(3))


@pytest.mark.parametrize(
    "rates, vols, exc",
    [
        ([[-1, 1], [1, -0.5]], [0.1, 0.2], NonConservativeRateMatrix),
        ([[1, -1], [1, -1]], [0.1, 0.2], NegativeOffDiagonal),
        ([[-1, 1], [1, -1]], [0.1, 0.0], NonpositiveVolatility),
        ([[-1, 1], [1, -1]], [0.1, -0.2], NonpositiveVolatility),
    ],
)
def test_validation_errors(rates, vols, exc):
    with pytest.raises(exc):
        ModelParams(rates, [0, 0], vols)


def test_shape_and_rate_errors():
    with pytest.raises(ValidationError):
        ModelParams([[-1, 1], [1, -1]], [0, 0, 0], [0.1, 0.2])
    with pytest.raises(ValidationError):
        ModelParams([[-1, 1], [1, -1]], [0, 0], [0.1, 0.2], interest_rate=-0.01)


def test_params_are_immutable(model):
    with pytest.raises(ValueError):
        model.volatility[0] = 1.0


@given(
    st.lists(st.floats(0.0, 50.0), min_size=2, max_size=5).flatmap(
        lambda lam: st.tuples(
            st.just(lam),
            st.lists(st.lists(st.floats(0.01, 1.0), min_size=len(lam), max_size=len(lam)),
                     min_size=len(lam), max_size=len(lam)),
        )
    )
)
def test_from_jump_chain_roundtrip(data):
    lam, raw = data
    k = len(lam)
    p = np.array(raw)
    np.fill_diagonal(p, 0.0)
    p /= p.sum(axis=1, keepdims=True)
    m = ModelParams.from_jump_chain(lam, p, [0.0] * k, [0.2] * k)
    np.testing.assert_allclose(m.rate_matrix.sum(axis=1), 0.0, atol=1e-12 * max(1, max(lam)))
    for i in range(k):
        if lam[i] > 0:
            np.testing.assert_allclose(m.jump_matrix[i], p[i], atol=1e-12)
    np.testing.assert_allclose(m.jump_matrix.sum(axis=1), 1.0, atol=1e-12)


def test_contract_and_grid_checks():
    with pytest.raises(ValidationError):
        Contract(strike=0.0, maturity=1.0)
    with pytest.raises(ValidationError):
        Contract(strike=1.0, maturity=1.0, evaluation_time=2.0)
    with pytest.raises(ValidationError):
        Grid(10, 401, 1.5)
    with pytest.raises(ValidationError):
        Grid(10, 400, 1.0).check_contract(Contract(1.0, 0.1))
    g = Grid(51, 400, 1.5)
    assert g.ds == pytest.approx(0.00375)
    assert g.dt(0.1) == pytest.approx(0.1 / 51)
    assert len(g.spots) == 401


def test_parse_reference_config(model):
    scenario, contract, grid = parse_config(REFERENCE_INI)
    assert scenario.model == model
    assert contract.strike == 1.0 and contract.maturity == 0.1
    assert (grid.n_time, grid.n_space, grid.space_bound) == (51, 400, 1.5)
    assert scenario.initial_regime == 0


def test_dump_roundtrip_is_exact():
    scenario, contract, grid = parse_config(REFERENCE_INI)
    text = dump_config(scenario, contract, grid)
    again = parse_config(text)
    assert again[0].model == scenario.model
    assert dump_config(*again) == text


def test_shipped_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.ini")):
        load_config(path)


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        (REFERENCE_INI + "\n[bogus]\nx = 1\n", 17),
        (REFERENCE_INI.replace("maturity = 0.1", "maturity = 0.1\ncolour = red"), 11),
        (REFERENCE_INI.replace("n_space = 400", "n_space = abc"), 14),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line


def test_parse_missing_section():
    with pytest.raises(ParseError):
        parse_config(REFERENCE_INI.split("[grid]")[0])


def test_parse_semantic_errors_are_validation_errors():
    with pytest.raises(NonConservativeRateMatrix):
        parse_config(REFERENCE_INI.replace("10, -20, 10", "10, -20, 11"))
    with pytest.raises(ValidationError):
        parse_config(REFERENCE_INI.replace("n_space = 400", "n_space = 401"))


def test_scenario_validation():
    m = reference_model()
    with pytest.raises(ValidationError):
        MarketScenario(m, initial_regime=3)
    with pytest.raises(ValidationError):
        MarketScenario(m, initial_price=0.0)
    with pytest.raises(ValidationError):
        MarketScenario(m, rng_seed=-1)
