from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import gamma

import oracles
from oatmetro import circuits, collective, objective
from oatmetro.circuits import AnsatzSpec
from oatmetro.noisemodel import NoiseSpec
from oatmetro.objective import MomentCurve, Prior, ProtocolObjective, gauss_hermite


def random_protocol(label, n, seed):
    spec = circuits.parse_ansatz(label, n)
    return circuits.build(spec, np.random.default_rng(seed).uniform(-np.pi, np.pi, spec.param_count))


def curve_for(label, n, seed, prior, rule):
    enc, dec = random_protocol(label, n, seed)
    return objective.moment_curve(enc, dec, prior, rule, n_qubits=n)


def test_gauss_hermite_small_rules():
    r1 = gauss_hermite(1)
    assert np.allclose(r1.nodes, [0]) and np.allclose(r1.weights, [np.sqrt(np.pi)])
    r2 = gauss_hermite(2)
    assert np.allclose(np.sort(r2.nodes), [-2**-0.5, 2**-0.5], atol=1e-15)
    assert abs(r2.weights @ r2.nodes**2 - np.sqrt(np.pi) / 2) < 1e-15


@given(st.integers(1, 40), st.data())
def test_gauss_hermite_exactness(n, data):
    k = data.draw(st.integers(0, 2 * n - 1))
    rule = gauss_hermite(n)
    exact = 0.0 if k % 2 else gamma((k + 1) / 2)
    got = rule.weights @ rule.nodes**k
    # odd moments cancel to zero; measure error against the size of the summands
    scale = rule.weights @ np.abs(rule.nodes) ** k
    assert abs(got - exact) <= 1e-12 * max(1.0, scale)


def test_gauss_hermite_500_is_finite():
    rule = gauss_hermite(500)
    assert np.all(np.isfinite(rule.weights)) and abs(rule.prior_weights().sum() - 1) < 1e-12


def test_validation():
    with pytest.raises(ValueError):
        Prior(0.0)
    with pytest.raises(ValueError):
        gauss_hermite(0)
    with pytest.raises(ValueError):
        MomentCurve([0.0], [1.0], [0.5])
    with pytest.raises(ValueError):
        objective.EstimatorConfig(np.inf)
    n = 3
    enc, dec = random_protocol("AAT_1_1", n, 0)
    with pytest.raises(ValueError):
        objective.protocol_moments(n, enc, dec, [0.1], noise=NoiseSpec(0.1))


def test_identity_circuit_moments():
    n = 6
    spec = AnsatzSpec("AAT", 1, 1, n)
    enc, dec = circuits.build(spec, np.zeros(spec.param_count))
    jz, jz2 = objective.protocol_moments(n, enc, dec, [0.0])
    assert abs(jz[0]) < 1e-12 and abs(jz2[0] - n / 4) < 1e-12
    ref = oracles.protocol_moments_pure(n, enc, dec, 0.0)
    assert np.allclose([jz[0], jz2[0]], ref, atol=1e-12)


def test_engines_agree_n8():
    n, prior, rule = 8, Prior(0.6), gauss_hermite(40)
    enc, dec = random_protocol("AAT_1_1", n, 1)
    a = objective.moment_curve(enc, dec, prior, rule, n_qubits=n)
    b = objective.moment_curve(enc, dec, prior, rule, n_qubits=n, engine="tensornet")
    assert np.max(np.abs(a.jz - b.jz)) < 1e-10 and np.max(np.abs(a.jz2 - b.jz2)) < 1e-10


def test_noisy_curve_matches_dense_oracle():
    n, prior, rule = 4, Prior(0.5), gauss_hermite(6)
    enc, dec = random_protocol("AAT_1_1", n, 2)
    curve = objective.moment_curve(enc, dec, prior, rule, n_qubits=n, engine="tensornet", noise=NoiseSpec(0.1))
    for phi, jz, jz2 in zip(curve.phis, curve.jz, curve.jz2):
        assert np.allclose((jz, jz2), oracles.protocol_moments_noisy(n, enc, dec, phi, c1=0.1), atol=1e-10)


def test_a_opt_linear_case():
    prior, rule = Prior(0.1), gauss_hermite(20)
    k = 2.5
    phis = rule.phis(prior)
    # noiseless linear response: <J_z^2> = (k phi)^2 gives the unbiased a = 1/k
    curve = MomentCurve(phis, k * phis, (k * phis) ** 2)
    assert abs(objective.a_opt(curve, prior, rule).a - 1 / k) < 1e-12
    assert abs(objective.bmse(curve, prior, rule, 1 / k)) < 1e-14
    # constant second moment k^2: a = k dphi^2 / k^2
    curve = MomentCurve(phis, k * phis, np.full_like(phis, k * k))
    assert abs(objective.a_opt(curve, prior, rule).a - prior.variance / k) < 1e-14


def stationarity(curve, prior, rule, a, h=1e-6):
    return (objective.bmse(curve, prior, rule, a + h) - objective.bmse(curve, prior, rule, a - h)) / (2 * h)


def test_a_opt_stationary_for_symmetric_curves():
    prior, rule = Prior(0.7), gauss_hermite(60)
    phis = rule.phis(prior)
    curve = MomentCurve(phis, 3 * np.sin(phis), 9.5 + np.cos(phis))
    a = objective.a_opt(curve, prior, rule).a
    assert np.isfinite(a) and abs(stationarity(curve, prior, rule, a)) < 1e-8


def test_a_opt_matches_golden_section():
    n, prior, rule = 4, Prior(0.7), gauss_hermite(100)
    spec = AnsatzSpec("AAT", 1, 1, n)
    from oatmetro.optimize import OptimizerConfig, optimize_ansatz

    res = optimize_ansatz(spec, 0.7, OptimizerConfig(quad_order=100))
    enc, dec = circuits.build(spec, res.x)
    curve = objective.moment_curve(enc, dec, prior, rule, n_qubits=n)
    a = objective.a_opt(curve, prior, rule).a
    gs = minimize_scalar(lambda x: objective.bmse(curve, prior, rule, x), bracket=(-5, 5), method="golden",
                         options={"xtol": 1e-12})
    assert abs(a - gs.x) < 1e-6


def test_bmse_examples():
    prior, rule = Prior(0.45), gauss_hermite(80)
    curve = curve_for("AAT_1_2", 5, 3, prior, rule)
    assert abs(objective.bmse(curve, prior, rule, 0.0) - prior.variance) < 1e-15
    cross, second = objective.prior_averages(curve, prior, rule)
    a = objective.a_opt(curve, prior, rule)
    assert abs(objective.bmse(curve, prior, rule, a) - (prior.variance - cross**2 / second)) < 1e-14


def direct_bmse(n, enc, dec, a, dphi, points=10_000):
    """Outcome sum and trapezoid prior integral of (a (N-2w)/2 - phi)^2."""
    phis = np.linspace(-10 * dphi, 10 * dphi, points)
    est = a * (n - 2 * np.arange(n + 1)) / 2
    vals = []
    for phi in phis:
        state = circuits.apply_sequence(collective.spin_coherent_plus(n),
                                        list(enc) + [circuits.R(collective.Z, phi)] + list(dec))
        vals.append(collective.weight_distribution(state) @ (est - phi) ** 2)
    dens = np.exp(-phis**2 / (2 * dphi**2)) / np.sqrt(2 * np.pi * dphi**2)
    return np.trapezoid(np.array(vals) * dens, phis)


def test_bmse_matches_definition_classical():
    n, dphi = 4, 0.3
    prior, rule = Prior(dphi), gauss_hermite(100)
    spec = circuits.classical_baseline_spec(n)
    enc, dec = circuits.build(spec, [0.4, -0.3, 0.2, 0.1])
    curve = objective.moment_curve(enc, dec, prior, rule, n_qubits=n)
    a = objective.a_opt(curve, prior, rule).a
    assert abs(objective.bmse(curve, prior, rule, a) - direct_bmse(n, enc, dec, a, dphi)) < 1e-9


@given(st.integers(2, 6), st.integers(0, 10**6), st.floats(0.1, 1.2))
def test_bias_variance_decomposition(n, seed, dphi):
    prior, rule = Prior(dphi), gauss_hermite(120)
    enc, dec = random_protocol("AAT_1_1", n, seed)
    curve = objective.moment_curve(enc, dec, prior, rule, n_qubits=n)
    a, value = objective.optimal_bmse(curve, prior, rule)
    phis = np.linspace(-9 * dphi, 9 * dphi, 4001)
    c = objective.estimator_curves(enc, dec, a, phis, n_qubits=n)
    dens = np.exp(-phis**2 / (2 * dphi**2)) / np.sqrt(2 * np.pi * dphi**2)
    dense = np.trapezoid((c["variance"] + c["bias"] ** 2) * dens, phis)
    assert abs(value - dense) < 1e-8


@given(st.integers(1, 8), st.integers(0, 10**6), st.floats(0.05, 1.5), st.floats(-20, 20))
def test_a_opt_is_optimal_and_beats_prior(n, seed, dphi, a):
    prior, rule = Prior(dphi), gauss_hermite(60)
    curve = curve_for("AAT_1_1", n, seed, prior, rule)
    _, best = objective.optimal_bmse(curve, prior, rule)
    assert best <= objective.bmse(curve, prior, rule, a) + 1e-12
    assert best <= prior.variance + 1e-15


def test_degenerate_fallback():
    prior, rule = Prior(0.5), gauss_hermite(10)
    phis = rule.phis(prior)
    curve = MomentCurve(phis, np.zeros_like(phis), np.zeros_like(phis))
    with pytest.raises(objective.DegenerateEstimatorError):
        objective.a_opt(curve, prior, rule)
    assert objective.optimal_bmse(curve, prior, rule) == (0.0, prior.variance)


def test_estimator_curves_parity_and_variance():
    n = 7
    spec = AnsatzSpec("PAR", 2, 2, n)
    enc, dec = circuits.build(spec, np.random.default_rng(4).uniform(-3, 3, spec.param_count))
    phis = np.linspace(-1.2, 1.2, 25)
    c = objective.estimator_curves(enc, dec, 0.8, phis, n_qubits=n)
    assert np.max(np.abs(c["mean"] + c["mean"][::-1])) < 1e-9
    assert abs(c["mean"][12]) < 1e-9 and abs(c["bias"][12]) < 1e-9
    assert np.all(c["variance"] >= 0)
    cls = circuits.classical_baseline_spec(n)
    enc, dec = circuits.build(cls, [np.pi / 2, 0, 0, 0])
    c0 = objective.estimator_curves(enc, dec, 1.0, [0.0], n_qubits=n)
    assert c0["variance"][0] > 0


def test_protocol_objective():
    spec = AnsatzSpec("AAT", 1, 1, 4)
    obj = ProtocolObjective(spec, Prior(0.7), gauss_hermite(50))
    x = np.random.default_rng(5).normal(size=spec.param_count)
    a, ratio = obj.evaluate(x)
    assert 0 < ratio <= 1 and obj(x) == ratio and obj.n_calls == 2
    tn = ProtocolObjective(spec, Prior(0.7), gauss_hermite(50), engine="tensornet")
    assert abs(tn(x) - ratio) < 1e-12


@given(st.sampled_from(["AAT_0_0", "AAT_1_0", "AAT_1_2", "AAT_2_1", "PAR_2_2", "PAR_4_2"]), st.integers(1, 9),
       st.integers(0, 10**6), st.floats(0.05, 1.5))
def test_fast_kernel_matches_curve_route(label, n, seed, dphi):
    spec = circuits.parse_ansatz(label, n)
    x = np.random.default_rng(seed).uniform(-np.pi, np.pi, spec.param_count)
    obj = ProtocolObjective(spec, Prior(dphi), gauss_hermite(64))
    a, ratio = obj.evaluate(x)
    a_ref, value = objective.optimal_bmse(obj.curve(x), obj.prior, obj.rule)
    assert abs(ratio - value / obj.prior.variance) < 1e-13
    assert abs(a - a_ref) < 1e-11 * max(1.0, abs(a_ref))
    with pytest.raises(ValueError):
        obj.evaluate(np.zeros(spec.param_count + 1))
