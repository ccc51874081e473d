import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsflab import circuit, linalg, states
from qsflab import stateprep as sp
from qsflab.coefficients import STANDARD, VARIANT, PolySpec, entropy_taylor_spec
from qsflab.errors import CapacityError, ValidationError


def ry(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def dense_qsf(spec, rho, prep):
    # gate-level oracle: V on A, then for each j a block controlled on |j-1>_A:
    # Ry(theta_j) on A' followed by P_j on B controlled by A'
    n, deg, d = spec.n, spec.degree, rho.dim
    db = d**deg
    dim = 2 * n * db
    u = np.kron(np.kron(np.eye(2), prep.unitary), np.eye(db))
    for j in range(1, n + 1):
        if spec.alphas[j] == 0.0:
            continue
        proj = np.zeros((n, n))
        proj[j - 1, j - 1] = 1
        rot = np.kron(np.kron(ry(spec.thetas[j]), proj), np.eye(db)) + np.kron(
            np.kron(np.eye(2), np.eye(n) - proj), np.eye(db)
        )
        perm = linalg.permutation_matrix(linalg.cycle_permutation(j, deg, d))
        one = np.diag([0.0, 1.0])
        cperm = np.kron(np.kron(np.diag([1.0, 0.0]), np.eye(n)), np.eye(db))
        cperm = cperm + np.kron(np.kron(one, np.eye(n) - proj), np.eye(db)) + np.kron(np.kron(one, proj), perm)
        u = cperm @ rot @ u
    init = np.zeros((2 * n, 2 * n))
    init[0, 0] = 1
    full = np.kron(init, linalg.kron_list([rho.matrix] * deg))
    assert full.shape == (dim, dim)
    return u @ full @ u.conj().T


def x_expectation(density):
    x = np.array([[0, 1], [1, 0]])
    rest = density.shape[0] // 2
    return float(np.trace(np.kron(x, np.eye(rest)) @ density).real)


# --- examples ------------------------------------------------------------------


def test_alpha1_examples():
    spec = PolySpec({1: 1.0})
    rho = states.random_state(2, seed=0)
    out = circuit.simulate_full(spec, rho)
    assert circuit.expectation_x(out.density, out.layout) == pytest.approx(1.0, abs=1e-12)
    dist = circuit.joint_from_output(out)
    assert dist.probabilities[(1, +1)] == pytest.approx(1.0, abs=1e-12)


def test_purity_examples():
    spec = PolySpec({2: 1.0})
    pure = states.DensityMatrix.pure([0.6, 0.8j])
    out = circuit.simulate_full(spec, pure)
    assert out.layout.total_dim == 16
    assert circuit.expectation_x(out.density, out.layout) == pytest.approx(1.0, abs=1e-12)
    mixed = states.DensityMatrix.maximally_mixed(2)
    out = circuit.simulate_full(spec, mixed)
    assert circuit.expectation_x(out.density, out.layout) == pytest.approx(0.5, abs=1e-12)
    assert x_expectation(dense_qsf(spec, mixed, circuit.default_prep(spec))) == pytest.approx(0.5, abs=1e-12)


def test_entropy2_on_mixed():
    spec = entropy_taylor_spec(2)
    assert spec.gamma == 4.0
    mixed = states.DensityMatrix.maximally_mixed(2)
    out = circuit.simulate_full(spec, mixed)
    expected = states.poly_function_exact(spec, mixed) / 4.0
    assert expected == pytest.approx(0.625 / 4, abs=1e-14)
    assert circuit.expectation_x(out.density, out.layout) == pytest.approx(expected, abs=1e-12)


def test_sign_flip_negates():
    spec = entropy_taylor_spec(3)
    rho = states.random_state(2, seed=4)
    a = circuit.simulate_full(spec, rho)
    b = circuit.simulate_full(spec.negated(), rho)
    assert circuit.expectation_x(b.density, b.layout) == pytest.approx(-circuit.expectation_x(a.density, a.layout), abs=1e-12)


def test_variant_examples():
    spec = PolySpec({1: 2.0, 3: 0.5}, mode=VARIANT)
    rho = states.random_state(2, seed=1)
    alone = PolySpec({1: 2.0}, mode=VARIANT)
    assert circuit.variant_expectation(alone, rho) == pytest.approx(1 / alone.n)
    # the alpha_1 = gamma branch contributes 1/n; alpha_3 = gamma/4 adds tr(rho^3)/(4n)
    expected = (1 + 0.25 * states.trace_power(rho, 3)) / 4
    assert circuit.variant_expectation(spec, rho) == pytest.approx(expected, abs=1e-14)
    out = circuit.simulate_full(spec, rho)
    assert out.layout.a_dim == 4
    assert circuit.expectation_x(out.density, out.layout) == pytest.approx(circuit.variant_expectation(spec, rho), abs=1e-12)
    ent = entropy_taylor_spec(6, VARIANT)
    std = entropy_taylor_spec(6)
    for seed in range(5):
        rho = states.random_state(2, seed=seed)
        exact = states.poly_function_exact(std, rho)
        assert ent.scale() * circuit.variant_expectation(ent, rho) == pytest.approx(exact, abs=1e-9)
        assert std.gamma * circuit.standard_expectation(std, rho) == pytest.approx(exact, abs=1e-9)
    with pytest.raises(ValidationError):
        circuit.variant_expectation(std, rho)
    with pytest.raises(ValidationError):
        circuit.standard_expectation(ent, rho)


# --- full simulation vs oracles ---------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(
    coeffs=st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=4),
    seed=st.integers(0, 10**6),
    mode=st.sampled_from([STANDARD, VARIANT]),
)
def test_full_matches_gate_oracle_and_eq4(coeffs, seed, mode):
    if abs(coeffs[-1]) < 1e-3:
        coeffs[-1] = 1.0
    spec = PolySpec({j: c for j, c in enumerate(coeffs, 1)}, mode=mode)
    rho = states.random_state(2, seed=seed)
    out = circuit.simulate_full(spec, rho)
    ref = dense_qsf(spec, rho, circuit.default_prep(spec))
    assert np.allclose(out.density, ref, atol=1e-10)
    ex = circuit.expectation_x(out.density, out.layout)
    if mode == STANDARD:
        expected = sum(a * states.trace_power(rho, j) for j, a in spec.alphas.items()) / spec.gamma
    else:
        expected = circuit.variant_expectation(spec, rho)
    assert abs(ex - expected) < 1e-9
    dist = circuit.joint_from_output(out)
    assert abs(dist.expectation_x() - ex) < 1e-10
    marg = np.abs(list(spec.alphas.values())) / spec.gamma if mode == STANDARD else np.full(spec.n, 1 / spec.n)
    assert np.allclose(dist.p_j, marg, atol=1e-10)


@pytest.mark.parametrize("n_coeffs", [1, 2, 3, 4])
def test_unitarity(n_coeffs):
    rng = np.random.default_rng(n_coeffs)
    spec = PolySpec({j: float(rng.standard_normal()) for j in range(1, n_coeffs + 1)})
    u = circuit.circuit_unitary(spec, 2)
    assert np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-9)


def test_entropy6_full_vs_analytic():
    spec = entropy_taylor_spec(6)
    rho = states.random_state(2, seed=11)
    full = circuit.joint_distribution(spec, rho, "full")
    ana = circuit.joint_distribution(spec, rho, "analytic")
    assert np.max(np.abs(full.table() - ana.table())) < 1e-9
    assert np.allclose(ana.p_j, [abs(spec.alphas[j]) / spec.gamma for j in range(1, 9)], atol=1e-12)
    with pytest.raises(ValidationError):
        circuit.joint_distribution(spec, rho, "other")


def test_measurement_order_independent():
    spec = PolySpec({1: 0.5, 2: -1.0, 3: 0.25})
    rho = states.random_state(2, seed=2)
    out = circuit.simulate_full(spec, rho)
    a = circuit.measure_joint(out, "x_first").table()
    b = circuit.measure_joint(out, "z_first").table()
    c = circuit.joint_from_output(out).table()
    assert np.allclose(a, b, atol=1e-12) and np.allclose(a, c, atol=1e-12)
    assert abs(a.sum() - 1) < 1e-10
    with pytest.raises(ValidationError):
        circuit.measure_joint(out, "sideways")


def test_interleaved_register_gives_product_traces():
    rho = states.random_state(2, seed=5)
    sigma = states.random_state(2, seed=6)
    prod = rho.matrix @ sigma.matrix
    for alphas in ({1: 1.0}, {2: 1.0}, {1: 0.4, 2: -0.6}):
        spec = PolySpec(alphas)
        out = circuit.simulate_full(spec, rho, sigma=sigma)
        expected = sum(a * np.trace(np.linalg.matrix_power(prod, j)).real for j, a in spec.alphas.items())
        assert circuit.expectation_x(out.density, out.layout) == pytest.approx(expected / spec.gamma, abs=1e-10)


def test_prep_joint_matches_full_for_trained_prep():
    spec = entropy_taylor_spec(2)
    target = spec.amplitudes()
    params, _ = sp.train_pqc(target, layers=2, seed=0, target_infidelity=1e-2)
    prep = sp.pqc_prep(params, target)
    rho = states.random_state(2, seed=7)
    full = circuit.joint_from_output(circuit.simulate_full(spec, rho, prep))
    fast = circuit.prep_joint_distribution(spec, circuit.state_traces(spec, rho), prep)
    assert np.max(np.abs(full.table() - fast.table())) < 1e-10


def test_capacity_and_prep_checks():
    spec = entropy_taylor_spec(10)
    with pytest.raises(CapacityError):
        circuit.simulate_full(spec, states.random_state(2, seed=0))
    with pytest.raises(CapacityError):
        circuit.simulate_full(PolySpec({4: 1.0}), states.random_state(8, seed=0))
    with pytest.raises(ValidationError):
        circuit.simulate_full(PolySpec({1: 1.0, 2: 1.0}), states.random_state(2, seed=0), sp.hadamard_prep(4))


def test_joint_distribution_validation():
    with pytest.raises(ValidationError):
        circuit.JointDistribution([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValidationError):
        circuit.JointDistribution([0.5, 0.5], [1.5, 0.5])
    dist = circuit.JointDistribution([0.25, 0.75], [1.0, 0.0])
    assert dist.expectation_x() == pytest.approx(-0.5)
    assert dist.expected_power() == pytest.approx(1.75)
