import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiff import FitError, InputError
from netdiff.compartmental import (
    SirParams,
    fit_gmm,
    fit_many,
    forecast_errors,
    network_sir_fits,
    r0_from_params,
    simulate_sir,
    trace_to_ir,
)
from netdiff.diffusion import run_diffusion, sample_percolation
from netdiff.generators import generate_lattice_random


def test_first_step_by_hand():
    tr = simulate_sir(SirParams(0.5, 0.25), 1000, 1, 3)
    # S1 = 999 - 0.5*999*1/1000, I1 = 1 + 0.4995 - 0.25, R1 = 0.25
    assert tr.S[1] == pytest.approx(998.5005, abs=1e-9)
    assert tr.I[1] == pytest.approx(1.2495, abs=1e-9)
    assert tr.R[1] == pytest.approx(0.25, abs=1e-12)


def test_no_removal_keeps_r_at_zero():
    assert np.all(simulate_sir(SirParams(0.7, 0.0), 500, 2, 30).R == 0)


def test_no_transmission_decays_geometrically():
    tr = simulate_sir(SirParams(0.0, 0.3), 100, 5, 12)
    assert np.allclose(tr.I, 5 * 0.7 ** np.arange(13))


def test_r0_cases():
    assert r0_from_params(SirParams(0.5, 0.25)) == 2.0
    assert r0_from_params(SirParams(0.0, 0.25)) == 0.0
    with pytest.raises(InputError):
        SirParams(-1.0, 0.5)
    with pytest.raises(InputError):
        SirParams(1.0, 1.5)


@settings(max_examples=100)
@given(st.floats(0, 5), st.floats(0, 1), st.integers(10, 10_000), st.integers(0, 60))
def test_conservation_and_monotonicity(s, r, n, T):
    tr = simulate_sir(SirParams(s, r), n, 1, T)
    if not tr.clamped:
        assert np.allclose(tr.S + tr.I + tr.R, n, rtol=1e-12)
    assert np.all(np.diff(tr.R) >= -1e-12)
    assert np.all(np.diff(tr.S) <= 1e-12)


@pytest.mark.parametrize("s,r", [(1.2, 0.4), (0.6, 0.2), (2.0, 0.9)])
def test_self_fit_recovers_parameters(s, r):
    n, I0, T = 4000, 1, 12
    tr = simulate_sir(SirParams(s, r), n, I0, T)
    params, obj = fit_gmm(tr.I, tr.R, n, I0, T)
    assert params.s == pytest.approx(s, rel=1e-3)
    assert params.r == pytest.approx(r, rel=1e-3)
    assert r0_from_params(params) == pytest.approx(s / r, rel=1e-3)
    assert obj < 1e-8


def test_fit_is_no_worse_than_any_start():
    rng = np.random.default_rng(3)
    tr = simulate_sir(SirParams(1.5, 0.5), 1000, 1, 10)
    noisy = tr.I + rng.normal(0, 0.5, tr.I.shape)
    fit = fit_many([(noisy, tr.R)], 1000, 1, 10)[0]
    assert fit.objective <= fit.start_objective_min


def test_all_zero_series_cannot_be_fitted():
    with pytest.raises(FitError):
        fit_gmm(np.zeros(10), np.zeros(10), 100, 1, 8)


def test_observation_mapping(path3):
    perc = sample_percolation(path3, 1.0, rng=np.random.default_rng(0))
    I, R = trace_to_ir(run_diffusion(perc, [0], 3))
    assert I.tolist() == [1, 1, 1, 0]
    assert R.tolist() == [0, 1, 2, 3]


def test_forecast_errors_zero_on_model_data():
    tr = simulate_sir(SirParams(1.0, 0.5), 1000, 1, 20)
    fit = fit_many([(tr.I, tr.R)], 1000, 1, 10)[0]
    ins, outs = forecast_errors(fit, tr.ever, 10)
    assert ins < 1e-4 and outs < 1e-3


def test_network_fit_report_shape():
    L, _ = generate_lattice_random(300, 2, 15, np.random.default_rng(0))
    res = network_sir_fits(L, 0.0, 112, 2.5 / L.degrees.mean(), 40, 6, seed=4)
    assert res["T_fit"] == 10 and len(res["fits"]) == 6
    assert res["r0_hat"] == pytest.approx(np.mean([f.r0 for f in res["fits"]]))
    assert all(f.rmse_in >= 0 for f in res["fits"])
