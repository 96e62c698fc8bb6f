from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdlab.envs import ENV_NAMES, MdpEnv, build_env, stationary_distribution
from tdlab.errors import InvalidHyper
from tdlab.learners import (
    AlgoSpec,
    FollowOn,
    LearnerState,
    RegFn,
    StepSchedule,
    apply_reg_fn,
    btd_step,
    etd_step,
    expected_update,
    gtd2,
    step,
    tdc2_step,
    tdc_fast,
    tdc_slow_step,
    tdcpp_original,
    tdcpp_step,
    td_step,
)
from tdlab.rng import Xoshiro256
from tdlab.tdcore import Transition, make_transitions, sample_indices

from . import reference
from .conftest import env_bundle


def _t(phi, phi_next, r, rho, gamma):
    return Transition(0, 0, 0, r, rho, np.asarray(phi, float), np.asarray(phi_next, float), gamma)


def _random_case(rng, n=5):
    return dict(
        lam=rng.normal(size=n),
        xi=rng.normal(size=n),
        phi=rng.normal(size=n),
        phi_next=rng.normal(size=n),
        r=float(rng.normal()),
        rho=float(rng.uniform(0, 3)),
        gamma=float(rng.uniform(0, 1)),
        alpha=float(rng.uniform(0.001, 0.2)),
    )


def _close(a, b, tol=1e-15):
    a, b = np.asarray(a), np.asarray(b)
    return np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b)))


# --------------------------------------------------------------------------
# one-step oracles


def test_btd_single_step_oracle():
    t = _t([1.0, 0.0], [0.0, 1.0], 1.0, 1.0, 0.9)
    s = LearnerState(np.array([1.0, 1.0]), np.zeros(2))
    out = btd_step(s, t, 0.1, 0.5)
    lam, xi = reference.btd([1.0, 1.0], [0.0, 0.0], [1, 0], [0, 1], 1.0, 1.0, 0.9, 0.1, 0.5)
    np.testing.assert_allclose(out.lam, lam, atol=1e-12)
    np.testing.assert_allclose(out.xi, xi, atol=1e-12)
    # hand arithmetic: delta = 1, phi.lam = 1, phi'.lam = 1
    np.testing.assert_allclose(out.lam, [1.0 + 0.1 * (-0.5 - 0.45 + 1.0), 1.0], atol=1e-15)
    np.testing.assert_allclose(out.xi, [0.1 * (-0.25 - 0.225 + 0.5 + 1.0), -0.09], atol=1e-15)
    assert out.step_index == 1


@pytest.mark.parametrize(
    "fn,kw",
    [
        (btd_step, {"eta": 0.7}),
        (tdc_slow_step, {"beta": 2.0}),
        (tdc2_step, {"eta": 0.7}),
        (tdcpp_step, {"eta": 0.7, "beta": 0.5, "kappa": 1.5}),
    ],
)
def test_zero_lambda_and_zero_error_is_a_fixed_point(fn, kw):
    xi = np.array([0.3, -1.2])
    phi, phi_next, gamma = np.array([1.0, 2.0]), np.array([0.5, -1.0]), 0.9
    r = phi @ xi - gamma * phi_next @ xi
    out = fn(LearnerState(np.zeros(2), xi), _t(phi, phi_next, r, 1.3, gamma), 0.1, **kw)
    np.testing.assert_allclose(out.lam, 0.0, atol=1e-15)
    np.testing.assert_allclose(out.xi, xi, atol=1e-15)


def test_td_step_zero_error_unchanged():
    xi = np.array([1.0, 2.0])
    out = td_step(LearnerState(np.zeros(2), xi), _t([1, 0], [0, 1], 1.0 - 0.5 * 2.0, 1.0, 0.5), 0.3)
    np.testing.assert_array_equal(out.xi, xi)


def test_td_one_state_contracts_monotonically():
    # one state, reward 1 - gamma pays a fixed point of exactly 1
    gamma = 0.5
    t = _t([1.0], [1.0], 1.0 - gamma, 1.0, gamma)
    s = LearnerState(np.zeros(1), np.zeros(1))
    gaps = []
    for _ in range(200):
        s = td_step(s, t, 0.1)
        gaps.append(abs(1.0 - s.xi[0]))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-4


def test_td_diverges_on_baird():
    env, d, _, _, _ = env_bundle("baird")
    s, a, s2 = sample_indices(env, d, Xoshiro256(0), 5000)
    state = LearnerState.initial(env.initial_xi)
    start = np.linalg.norm(state.xi)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(5000):
            state = td_step(state, make_transitions(env, s[k], a[k], s2[k]), 0.01)
    assert not np.isfinite(np.linalg.norm(state.xi)) or np.linalg.norm(state.xi) >= 10 * start


def test_tdc_slow_and_tdc2_differ_by_one_term(rng):
    for _ in range(100):
        c = _random_case(rng)
        s = LearnerState(c["lam"], c["xi"])
        t = _t(c["phi"], c["phi_next"], c["r"], c["rho"], c["gamma"])
        slow = tdc_slow_step(s, t, c["alpha"], 1.0)
        two = tdc2_step(s, t, c["alpha"], 1.0)
        term = -1.0 * (c["phi"] @ c["lam"]) * c["phi"]
        np.testing.assert_allclose(two.xi - slow.xi, c["alpha"] * term, atol=1e-13)


# --------------------------------------------------------------------------
# reduction identities


def test_btd_eta_zero_is_gtd2(rng):
    for _ in range(2000):
        c = _random_case(rng)
        out = btd_step(LearnerState(c["lam"], c["xi"]), _t(c["phi"], c["phi_next"], c["r"], c["rho"], c["gamma"]), c["alpha"], 0.0)
        lam, xi = reference.gtd2_vec(**c)
        assert _close(out.lam, lam) and _close(out.xi, xi)
        slam, sxi = reference.gtd2(**c)
        np.testing.assert_allclose(lam, slam, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(xi, sxi, rtol=1e-12, atol=1e-12)


def test_tdcpp_with_inverse_kappa_is_original(rng):
    for _ in range(2000):
        c = _random_case(rng)
        eta, beta = float(rng.uniform(0.05, 4)), float(rng.uniform(0, 2))
        spec = tdcpp_original(eta, beta)
        out = tdcpp_step(LearnerState(c["lam"], c["xi"]), _t(c["phi"], c["phi_next"], c["r"], c["rho"], c["gamma"]), c["alpha"], spec.eta, spec.beta, spec.kappa)
        lam, xi = reference.tdcpp_original_vec(**c, eta=eta, beta=beta)
        assert _close(out.lam, lam) and _close(out.xi, xi)


def test_tdcpp_beta_zero_is_tdc_fast(rng):
    for _ in range(2000):
        c = _random_case(rng)
        eta = float(rng.uniform(0.05, 4))
        spec = tdc_fast(eta)
        out = tdcpp_step(LearnerState(c["lam"], c["xi"]), _t(c["phi"], c["phi_next"], c["r"], c["rho"], c["gamma"]), c["alpha"], spec.eta, spec.beta, spec.kappa)
        lam, xi = reference.tdc_fast_vec(**c, eta=eta)
        assert _close(out.lam, lam) and _close(out.xi, xi)


def test_leaky_relu_slope_one_is_identity(rng):
    for _ in range(500):
        c = _random_case(rng)
        s = LearnerState(c["lam"], c["xi"])
        t = _t(c["phi"], c["phi_next"], c["r"], c["rho"], c["gamma"])
        a = tdcpp_step(s, t, c["alpha"], 0.8, 0.6, 1.3, RegFn("leaky_relu", 1.0))
        b = tdcpp_step(s, t, c["alpha"], 0.8, 0.6, 1.3, RegFn("identity"))
        np.testing.assert_array_equal(a.lam, b.lam)
        np.testing.assert_array_equal(a.xi, b.xi)


def test_gtd2_preset():
    assert gtd2().family == "btd" and gtd2().eta == 0.0


# --------------------------------------------------------------------------
# regularizers


def test_relu_examples():
    f = RegFn("relu")
    np.testing.assert_array_equal(apply_reg_fn(f, np.zeros(3)), np.zeros(3))
    np.testing.assert_array_equal(apply_reg_fn(f, np.array([-1.0, 2.0])), [0.0, 2.0])
    np.testing.assert_array_equal(apply_reg_fn(RegFn("leaky_relu", 0.1), np.array([-1.0, 2.0])), [-0.1, 2.0])


@settings(max_examples=1000, deadline=None)
@given(
    arrays(np.float64, 6, elements=st.floats(-1e6, 1e6)),
    st.sampled_from([RegFn("relu"), RegFn("leaky_relu", 0.01), RegFn("leaky_relu", 0.5)]),
)
def test_growth_condition_with_unit_constant(v, f):
    assert np.sum(apply_reg_fn(f, v) ** 2) <= np.sum(v**2)


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, 4, elements=st.floats(-100, 100)),
    st.floats(0.01, 100),
    st.sampled_from(["identity", "relu", "leaky_relu"]),
)
def test_positive_homogeneity(v, c, kind):
    f = RegFn(kind)
    np.testing.assert_allclose(apply_reg_fn(f, c * v), c * apply_reg_fn(f, v), rtol=1e-12, atol=1e-300)


def test_reg_fn_validation():
    with pytest.raises(InvalidHyper):
        RegFn("tanh")
    with pytest.raises(InvalidHyper):
        RegFn("leaky_relu", 0.0)
    with pytest.raises(InvalidHyper):
        AlgoSpec("btd", reg_fn=RegFn("relu"))


# --------------------------------------------------------------------------
# emphatic TD


def test_etd_with_zero_discount_is_td(rng):
    for _ in range(50):
        c = _random_case(rng)
        s = LearnerState(c["lam"], c["xi"])
        t = _t(c["phi"], c["phi_next"], c["r"], c["rho"], 0.0)
        fo = FollowOn(float(rng.uniform(0, 5)), float(rng.uniform(0, 3)))
        out, fo2 = etd_step(s, t, c["alpha"], fo)
        assert fo2.value == 1.0
        np.testing.assert_array_equal(out.xi, td_step(s, t, c["alpha"]).xi)


def test_etd_follow_on_converges_to_geometric_limit():
    t = _t([1.0], [1.0], 0.0, 1.0, 0.5)
    s = LearnerState(np.zeros(1), np.zeros(1))
    fo = FollowOn()
    values = []
    for _ in range(60):
        s, fo = etd_step(s, t, 0.0, fo)
        values.append(fo.value)
    assert values[0] == 1.0
    assert abs(values[-1] - 2.0) < 1e-15
    gaps = np.abs(2.0 - np.array(values[:40]))
    np.testing.assert_allclose(gaps[1:] / gaps[:-1], 0.5, rtol=1e-6)


# --------------------------------------------------------------------------
# expected updates


ALL_SPECS = [
    AlgoSpec("td"),
    AlgoSpec("btd", eta=0.0),
    AlgoSpec("btd", eta=0.5),
    AlgoSpec("btd", eta=2.0),
    AlgoSpec("tdc_slow", beta=0.3),
    AlgoSpec("tdc2", eta=1.5),
    AlgoSpec("tdcpp", eta=0.5, beta=0.2, kappa=2.0),
    tdc_fast(1.0),
    tdcpp_original(2.0, 1.0),
    AlgoSpec("tdcpp", eta=1.0, beta=1.0, kappa=1.0, reg_fn=RegFn("relu")),
    AlgoSpec("tdcpp", eta=1.0, beta=1.0, kappa=1.0, reg_fn=RegFn("leaky_relu", 0.1)),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label())
def test_expected_update_vanishes_at_fixed_point(bundle, spec):
    env, d, km, trans, w = bundle
    d_lam, d_xi = expected_update(spec, trans, w, np.zeros(km.n), km.xi_star)
    assert np.max(np.abs(d_lam)) <= 1e-9
    assert np.max(np.abs(d_xi)) <= 1e-9


@pytest.mark.parametrize("spec", [s for s in ALL_SPECS if s.reg_fn.is_linear], ids=lambda s: s.label())
def test_linear_families_are_homogeneous(bundle, spec, rng):
    env, d, km, trans, w = bundle
    for _ in range(5):
        lam, x = rng.normal(size=km.n), rng.normal(size=km.n)
        one = expected_update(spec, trans, w, lam, km.xi_star + x)
        two = expected_update(spec, trans, w, 2 * lam, km.xi_star + 2 * x)
        for a, b in zip(one, two):
            np.testing.assert_allclose(b, 2 * a, atol=1e-9)


def test_relu_family_is_not_homogeneous_but_positively_homogeneous():
    env, d, km, trans, w = env_bundle("boyan")
    spec = AlgoSpec("tdcpp", eta=1.0, beta=1.0, kappa=1.0, reg_fn=RegFn("relu"))
    lam = np.array([1.0, -2.0, 0.5, -0.3])
    x = np.array([0.2, 0.1, -0.4, 0.3])
    plus = expected_update(spec, trans, w, lam, km.xi_star + x)
    minus = expected_update(spec, trans, w, -lam, km.xi_star - x)
    # odd symmetry fails because relu is not odd
    assert np.max(np.abs(np.concatenate(minus) + np.concatenate(plus))) > 1e-3
    scaled = expected_update(spec, trans, w, 3 * lam, km.xi_star + 3 * x)
    np.testing.assert_allclose(np.concatenate(scaled), 3 * np.concatenate(plus), atol=1e-9)


def test_expected_update_rejects_etd():
    env, d, km, trans, w = env_bundle("boyan")
    with pytest.raises(InvalidHyper):
        expected_update(AlgoSpec("etd"), trans, w, np.zeros(4), np.zeros(4))


# --------------------------------------------------------------------------
# value types


def test_algospec_json_round_trip():
    spec = AlgoSpec(
        "tdcpp", eta=0.5, beta=1.0, kappa=1.0, reg_fn=RegFn("leaky_relu", 0.01), schedule=StepSchedule("constant", alpha=0.01)
    )
    doc = json.loads(json.dumps(spec.to_dict()))
    assert doc == {
        "family": "tdcpp",
        "eta": 0.5,
        "beta": 1.0,
        "kappa": 1.0,
        "reg_fn": {"kind": "leaky_relu", "slope": 0.01},
        "schedule": {"kind": "constant", "alpha": 0.01},
    }
    assert AlgoSpec.from_dict(doc) == spec


def test_irrelevant_fields_still_parse():
    spec = AlgoSpec.from_dict({"family": "td", "eta": 3, "beta": -1, "kappa": 9})
    assert spec.family == "td" and spec.beta == -1.0


def test_algospec_validation():
    with pytest.raises(InvalidHyper):
        AlgoSpec("q_learning")
    with pytest.raises(InvalidHyper):
        AlgoSpec("tdcpp", eta=0.0)
    with pytest.raises(InvalidHyper):
        AlgoSpec.from_dict({"family": "td", "lr": 0.1})
    with pytest.raises(InvalidHyper):
        tdcpp_step(LearnerState(np.zeros(1), np.zeros(1)), _t([1.0], [1.0], 0.0, 1.0, 0.5), 0.1, 0.0, 1.0, 1.0)


def test_step_schedule():
    assert StepSchedule("constant", alpha=0.01)(123) == 0.01
    poly = StepSchedule("polynomial", a=1.0, p=0.75)
    assert poly(0) == 1.0 and poly(15) == pytest.approx(16**-0.75)
    assert poly.robbins_monro
    assert not StepSchedule("polynomial", a=1.0, p=0.5).robbins_monro
    assert not StepSchedule("polynomial", a=1.0, p=1.5).robbins_monro
    assert not StepSchedule("constant", alpha=0.1).robbins_monro
    with pytest.raises(InvalidHyper):
        StepSchedule("cosine")


def test_nonfinite_flag():
    assert not LearnerState(np.zeros(2), np.ones(2)).nonfinite
    assert LearnerState(np.zeros(2), np.array([1.0, np.inf])).nonfinite
    batch = LearnerState(np.zeros((2, 2)), np.array([[1.0, 1.0], [np.nan, 0.0]]))
    np.testing.assert_array_equal(batch.nonfinite, [False, True])


def test_step_is_deterministic():
    env, d, _, _, _ = env_bundle("baird")
    spec = AlgoSpec("btd", eta=0.5)

    def trajectory():
        s, a, s2 = sample_indices(env, d, Xoshiro256(5), 300)
        st_ = LearnerState.initial(env.initial_xi)
        out = []
        for k in range(300):
            st_, _ = step(spec, st_, make_transitions(env, s[k], a[k], s2[k]), 0.01)
            out.append(np.concatenate([st_.lam, st_.xi]))
        return np.array(out)

    np.testing.assert_array_equal(trajectory(), trajectory())


def test_batched_step_matches_row_by_row(rng):
    spec = AlgoSpec("tdcpp", eta=0.5, beta=0.3, kappa=2.0, reg_fn=RegFn("relu"))
    B, n = 4, 3
    lam, xi = rng.normal(size=(B, n)), rng.normal(size=(B, n))
    phi, phi_next = rng.normal(size=(B, n)), rng.normal(size=(B, n))
    r, rho = rng.normal(size=B), rng.uniform(0, 2, size=B)
    alpha = np.array([0.1, 0.0, 0.05, 0.2])
    batch, _ = step(spec, LearnerState(lam, xi), Transition(0, 0, 0, r, rho, phi, phi_next, 0.9), alpha)
    for i in range(B):
        one, _ = step(spec, LearnerState(lam[i], xi[i]), Transition(0, 0, 0, r[i], rho[i], phi[i], phi_next[i], 0.9), alpha[i])
        np.testing.assert_allclose(batch.lam[i], one.lam, atol=1e-15)
        np.testing.assert_allclose(batch.xi[i], one.xi, atol=1e-15)
    np.testing.assert_array_equal(batch.xi[1], xi[1])


def test_scalar_and_vector_references_agree(rng):
    for _ in range(200):
        c = _random_case(rng)
        eta, beta = float(rng.uniform(0.05, 4)), float(rng.uniform(0, 2))
        for a, b in zip(reference.tdcpp_original(**c, eta=eta, beta=beta), reference.tdcpp_original_vec(**c, eta=eta, beta=beta)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        for a, b in zip(reference.tdc_fast(**c, eta=eta), reference.tdc_fast_vec(**c, eta=eta)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("eta", [49.0, 0.1, 3.0, 7.0, 0.3])
def test_inverse_kappa_rounding_is_absorbed(eta):
    c = _random_case(np.random.default_rng(1))
    spec = tdcpp_original(eta, 0.4)
    out = tdcpp_step(LearnerState(c["lam"], c["xi"]), _t(c["phi"], c["phi_next"], c["r"], c["rho"], c["gamma"]), c["alpha"], spec.eta, spec.beta, spec.kappa)
    lam, xi = reference.tdcpp_original_vec(**c, eta=eta, beta=0.4)
    np.testing.assert_array_equal(out.lam, lam)
    np.testing.assert_array_equal(out.xi, xi)
