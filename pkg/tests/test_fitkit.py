import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinwave import fitkit
from spinwave.fitkit import (
    MODELS,
    FitInputError,
    ModelSelectionError,
    _rss,
    _starts,
    fit,
    fit_all,
    fit_arrays,
    select_model,
)

from conftest import curve_of, noisy

TRUTH = {
    "gauss1": [1.0, 320e-6, 0.0],
    "exp1": [0.8, 50e-6, 0.1],
    "exp2": [0.6, 10e-6, 0.4, 80e-6, 0.0],
}


@pytest.mark.parametrize("model", sorted(TRUTH))
def test_noiseless_recovery(model):
    t = np.linspace(0, 600e-6, 50)
    y = MODELS[model].evaluate(t, TRUTH[model])
    res = fit_arrays(t, y, model)
    assert res.converged
    for got, want in zip(res.values, TRUTH[model]):
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("model", sorted(TRUTH))
def test_jacobian_matches_central_differences(model):
    m = MODELS[model]
    rng = np.random.default_rng(1)
    t = np.linspace(0, 300e-6, 40)
    for _ in range(10):
        nat = np.array(TRUTH[model]) * rng.uniform(0.5, 2.0, m.n_params)
        if model == "exp2" and nat[3] <= nat[1]:
            nat[3] = 2 * nat[1]
        theta = m.internal(nat) + rng.normal(0, 0.1, m.n_params)
        _, jac = m.value_and_jacobian(t, theta)
        for j in range(m.n_params):
            h = 1e-6 * max(1.0, abs(theta[j]))
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            fd = (m.value_and_jacobian(t, up)[0] - m.value_and_jacobian(t, dn)[0]) / (2 * h)
            scale = np.max(np.abs(fd)) or 1.0
            assert np.max(np.abs(jac[:, j] - fd)) <= 1e-6 * scale


def test_internal_round_trip_and_exp2_ordering():
    m = MODELS["exp2"]
    nat = m.natural(m.internal([0.4, 80e-6, 0.6, 10e-6, 0.01]))
    np.testing.assert_allclose(nat, [0.6, 10e-6, 0.4, 80e-6, 0.01], rtol=1e-12)
    t = np.linspace(0, 300e-6, 60)
    res = fit_arrays(t, m.evaluate(t, [0.6, 10e-6, 0.4, 80e-6, 0.0]), "exp2")
    assert res.params["tau1"] < res.params["tau2"]


def test_optimum_beats_every_start():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 300e-6, 100)
    for model in TRUTH:
        y = noisy(rng, MODELS[model].evaluate(t, TRUTH[model]))
        res = fit_arrays(t, y, model)
        m = MODELS[model]
        sw = np.ones_like(y)
        for start in _starts(m, t, y):
            assert res.rss <= _rss(m, t, y, sw, start)


def test_time_unit_equivariance():
    rng = np.random.default_rng(3)
    t = np.linspace(0, 300e-6, 100)
    y = noisy(rng, MODELS["exp2"].evaluate(t, TRUTH["exp2"]))
    s = 1e6
    order = []
    for tt in (t, t * s):
        fits = fit_all(curve_of(tt, y), ["exp1", "gauss1", "exp2"])
        order.append([f.model for f in sorted(fits, key=lambda f: f.aic)])
        if tt is t:
            base = fits
        else:
            for a, b in zip(base, fits):
                for name in a.names:
                    if name.startswith("tau"):
                        assert b.params[name] == pytest.approx(a.params[name] * s, rel=1e-9)
    assert order[0] == order[1]


def test_amplitude_scale_equivariance():
    rng = np.random.default_rng(4)
    t = np.linspace(0, 300e-6, 100)
    y = noisy(rng, MODELS["exp2"].evaluate(t, TRUTH["exp2"]))
    a = 37.5
    for model in ("exp1", "gauss1", "exp2"):
        f1, f2 = fit_arrays(t, y, model), fit_arrays(t, a * y, model)
        for name in f1.names:
            want = f1.params[name] * (1 if name.startswith("tau") else a)
            assert f2.params[name] == pytest.approx(want, rel=1e-6, abs=1e-9 * a)
    assert select_model(curve_of(t, y))[1] == select_model(curve_of(t, a * y))[1]


@settings(max_examples=15, deadline=None)
@given(s=st.floats(min_value=1e-3, max_value=1e3), seed=st.integers(0, 1000))
def test_time_rescaling_property(s, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 300e-6, 60)
    y = noisy(rng, MODELS["exp1"].evaluate(t, TRUTH["exp1"]))
    a, b = fit_arrays(t, y, "exp1"), fit_arrays(t * s, y, "exp1")
    assert b.params["tau"] == pytest.approx(a.params["tau"] * s, rel=1e-9)


def test_constant_curve_is_flagged():
    res = fit_arrays(np.arange(30.0), np.full(30, 0.5), "exp1")
    assert res.at_bound or not res.converged
    assert res.params["c"] == pytest.approx(0.5)


def test_input_errors():
    with pytest.raises(FitInputError):
        fit_arrays(np.arange(4.0), np.ones(4), "exp1")
    with pytest.raises(FitInputError):
        fit_arrays(np.array([0.0, 2.0, 1.0, 3.0, 4.0, 5.0]), np.ones(6), "exp1")
    with pytest.raises(FitInputError):
        fit_arrays(np.arange(-1.0, 5.0), np.ones(6), "exp1")
    with pytest.raises(ValueError):
        fit_arrays(np.arange(10.0), np.ones(10), "exp3")


def test_weights_use_stat_error():
    t = np.linspace(0, 300e-6, 40)
    y = MODELS["exp1"].evaluate(t, [1.0, 50e-6, 0.0])
    y_bad = y.copy()
    y_bad[20] += 0.5
    err = np.full(40, 1e-3)
    err[20] = 1e3  # outlier effectively ignored
    weighted = fit(curve_of(t, y_bad, err), "exp1")
    assert weighted.weighted
    assert weighted.params["tau"] == pytest.approx(50e-6, rel=1e-3)
    unweighted = fit(curve_of(t, y_bad), "exp1")
    assert not unweighted.weighted
    assert abs(unweighted.params["tau"] / 50e-6 - 1) > 1e-3


def test_uncertainties_are_sensible():
    rng = np.random.default_rng(5)
    t = np.linspace(0, 300e-6, 100)
    y = MODELS["exp1"].evaluate(t, [1.0, 50e-6, 0.0]) + 0.01 * rng.standard_normal(100)
    res = fit_arrays(t, y, "exp1")
    assert np.all(res.sigmas >= 0)
    assert abs(res.params["tau"] - 50e-6) < 4 * res.sigmas[1]


def test_selection_rules():
    t = np.linspace(0, 300e-6, 100)
    y = noisy(np.random.default_rng(6), MODELS["exp1"].evaluate(t, [1.0, 60e-6, 0.0]))
    only, name = select_model(curve_of(t, y), ["gauss1"])
    assert name == "gauss1" and only.model == "gauss1"
    # exp2 nests exp1: parsimony keeps the simpler one
    assert select_model(curve_of(t, y), ["exp1", "exp2"])[1] == "exp1"
    with pytest.raises(FitInputError):
        select_model(curve_of(t, y), [])


def test_selection_error_when_nothing_converges(monkeypatch):
    monkeypatch.setattr(fitkit, "MAX_ITER", 1)
    t = np.linspace(0, 300e-6, 100)
    y = noisy(np.random.default_rng(7), MODELS["exp2"].evaluate(t, TRUTH["exp2"]))
    with pytest.raises(ModelSelectionError):
        select_model(curve_of(t, y))


def test_json_layout():
    t = np.linspace(0, 600e-6, 50)
    res = fit_arrays(t, MODELS["gauss1"].evaluate(t, TRUTH["gauss1"]), "gauss1")
    d = json.loads(res.to_json())
    assert d["model"] == "gauss1"
    assert [p["name"] for p in d["parameters"]] == ["A", "tau", "c"]
    assert set(d["parameters"][0]) == {"name", "value", "sigma"}
    for key in ("rss", "aic", "converged", "iterations"):
        assert key in d
    assert res.dominant_tau == pytest.approx(320e-6)


def test_dominant_tau_of_exp2_is_larger_amplitude_component():
    t = np.linspace(0, 300e-6, 80)
    res = fit_arrays(t, MODELS["exp2"].evaluate(t, [0.2, 10e-6, 0.8, 80e-6, 0.0]), "exp2")
    assert res.dominant_tau == pytest.approx(80e-6, rel=1e-6)
    res = fit_arrays(t, MODELS["exp2"].evaluate(t, [0.8, 10e-6, 0.2, 80e-6, 0.0]), "exp2")
    assert res.dominant_tau == pytest.approx(10e-6, rel=1e-6)
