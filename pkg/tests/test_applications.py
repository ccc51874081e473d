import math

import numpy as np
import pytest

from qsflab import applications as app
from qsflab import linalg, states
from qsflab import stateprep as sp
from qsflab.coefficients import VARIANT, entropy_taylor_spec, sqrt_taylor_order
from qsflab.errors import ApproximationError, CapacityError, SearchError, ValidationError
from qsflab.states import DensityMatrix


def replay_brackets(result):
    # bracket before each bisection probe of the first pass
    left, right = 0.0, 1.0
    out = []
    for h in result.history:
        if h.action in ("jump_check", "degenerate"):
            break
        out.append((left, right))
        if h.action == "raise_left":
            left = h.beta
        elif h.action == "lower_right":
            right = h.beta
        else:
            break
    out.append((left, right))
    return out


# --- polynomial / entropy ----------------------------------------------------------


def test_estimate_polynomial_full_and_analytic_agree():
    spec = entropy_taylor_spec(2)
    rho = states.random_state(2, seed=3)
    a = app.estimate_polynomial(spec, rho, 20_000, seed=1)
    b = app.estimate_polynomial(spec, rho, 20_000, seed=1, method="full")
    # both paths give the same distribution to 1e-12, so the draws coincide
    assert a.estimate == b.estimate
    assert a.exact_value == pytest.approx(states.poly_function_exact(spec, rho))
    with pytest.raises(ValidationError):
        app.estimate_polynomial(spec, rho, 10, method="other")


def test_entropy_mixed_within_epsilon():
    mixed = DensityMatrix.maximally_mixed(2)
    fails = 0
    for seed in range(20):
        rep = app.estimate_entropy(mixed, epsilon=0.1, delta=0.05, seed=seed)
        assert rep.spec_degree == 7
        fails += abs(rep.estimate - math.log(2)) > 0.1
    assert fails <= 2
    assert rep.reference_value == pytest.approx(math.log(2))


def test_entropy_pure_state():
    pure = DensityMatrix.pure([0.6, 0.8])
    for order in (1, 3, 6):
        assert abs(states.poly_function_exact(entropy_taylor_spec(order), pure)) < 1e-12
    rep = app.estimate_entropy(pure, epsilon=0.1, order=6, shots=100_000, seed=4)
    assert rep.exact_value == pytest.approx(0.0, abs=1e-12)
    assert abs(rep.estimate) <= 4 * rep.std_error


def test_entropy_random_state_brackets_s6():
    rho = states.random_state(2, seed=21)
    reps = [app.estimate_entropy(rho, order=6, shots=100_000, seed=s) for s in range(10)]
    est = [r.estimate for r in reps]
    assert min(est) <= reps[0].exact_value <= max(est)


def test_entropy_variant_and_pqc_prep():
    rho = states.random_state(2, seed=2)
    var = app.estimate_entropy(rho, order=6, shots=200_000, seed=1, mode=VARIANT, prep=sp.hadamard_prep(8))
    assert var.mode == VARIANT
    assert abs(var.estimate - var.exact_value) <= 4 * var.std_error
    target = entropy_taylor_spec(6).amplitudes()
    params, _ = sp.train_pqc(target, layers=4, seed=0)
    rep = app.estimate_entropy(rho, order=6, shots=200_000, seed=1, prep=sp.pqc_prep(params, target))
    assert abs(rep.estimate - rep.exact_value) <= 4 * rep.std_error + 0.01


def test_entropy_shot_planning_and_caps():
    rho = states.random_state(2, seed=0)
    with pytest.raises(CapacityError):
        app.estimate_entropy(rho, epsilon=0.01, order=6, max_shots=10**6)
    with pytest.raises(ArithmeticError):
        app.estimate_entropy(DensityMatrix.from_diagonal([0.99, 0.01]), epsilon=0.01)
    with pytest.raises(ValidationError):
        app.estimate_entropy(rho, epsilon=1.5)
    with pytest.raises(ValidationError):
        app.estimate_entropy(rho, delta=0.0)
    logged = []
    rep = app.estimate_entropy(rho, order=2, shots=1000, seed=0, shot_sink=logged.append)
    assert len(logged[0]) == 1000 and rep.shots == 1000


# --- fidelity --------------------------------------------------------------------


def test_eq8_dense_identity():
    for d in (2, 3):
        rho = states.random_state(d, seed=d)
        sigma = states.random_state(d, seed=d + 10)
        prob = app.FidelityProblem(rho, sigma)
        for k in (1, 2):
            big = linalg.kron_list([rho.matrix, sigma.matrix] * k)
            perm = linalg.permutation_matrix(linalg.cycle_permutation(2 * k, 2 * k, d))
            dense = np.trace(perm @ big)
            assert abs(dense.imag) < 1e-10
            assert abs(dense.real - prob.trace_power(k)) < 1e-10
            assert prob.trace_power(k) >= -1e-10


def test_fidelity_problem_basics():
    rho = DensityMatrix.from_diagonal([0.75, 0.25])
    prob = app.FidelityProblem(rho, DensityMatrix.maximally_mixed(2))
    assert prob.rank == 2 and prob.kappa == pytest.approx(0.125)
    assert prob.exact_fidelity() == pytest.approx(0.5 * (math.sqrt(0.75) + math.sqrt(0.25)) ** 2)
    with pytest.raises(ValidationError):
        app.FidelityProblem(rho, DensityMatrix.maximally_mixed(3))


def test_fidelity_pure_self():
    pure = DensityMatrix.pure([1, 1j])
    rep = app.estimate_fidelity(pure, pure, order=6, shots=100_000, seed=0)
    assert rep.exact_value == pytest.approx(1.0, abs=1e-12)
    assert abs(rep.raw_estimate - 1.0) <= 4 * rep.std_error + 1e-12
    assert 0.0 <= rep.estimate <= 1.0


def blend(rho, p):
    return DensityMatrix((1 - p) * rho.matrix + p * np.eye(rho.dim) / rho.dim)


def test_fidelity_chain():
    eps = 0.1
    checked = 0
    for seed in range(200):
        # pull random pairs toward I/2 so that kappa(rho sigma) >= 0.2 occurs
        rho = blend(states.random_state(2, seed=seed), 0.8)
        sigma = blend(states.random_state(2, seed=seed + 1000), 0.8)
        prob = app.FidelityProblem(rho, sigma)
        if prob.kappa < 0.2:
            continue
        order = sqrt_taylor_order(eps, prob.kappa)
        assert abs(app.fidelity_poly_value(prob, order) - prob.exact_fidelity()) <= eps
        checked += 1
    assert checked >= 10


def test_fidelity_random_vs_mixed_brackets_poly():
    rho = states.random_state(2, seed=8)
    mixed = DensityMatrix.maximally_mixed(2)
    reps = [app.estimate_fidelity(rho, mixed, order=6, shots=100_000, seed=s) for s in range(10)]
    raw = [r.raw_estimate for r in reps]
    assert min(raw) <= reps[0].exact_value <= max(raw)
    assert reps[0].copies.fresh_copies_total % 2 == 0
    assert reps[0].extras["sqrt_std_error"] > 0


def test_fidelity_degree_search_failure():
    rho = states.random_state(2, seed=0)
    sigma = DensityMatrix.pure([1, 0])
    with pytest.raises(ApproximationError):
        app.estimate_fidelity(DensityMatrix.from_diagonal([0.999, 0.001]), DensityMatrix.from_diagonal([0.001, 0.999]))
    rep = app.estimate_fidelity(rho, sigma, order=4, shots=1000, seed=0)
    assert rep.spec_degree == 4


# --- maximal eigenvalue ----------------------------------------------------------


def test_maxeig_exact_probes():
    for diag, top in (([0.7, 0.3], 0.7), ([0.6, 0.25, 0.15], 0.6)):
        res = app.max_eigenvalue(DensityMatrix.from_diagonal(diag), probes="exact")
        assert abs(res.beta - top) <= 0.02
        assert not res.degenerate and res.terminated_by == "band"


def test_maxeig_pure_state():
    res = app.max_eigenvalue(DensityMatrix.from_diagonal([1.0, 0.0]), probes="exact")
    assert abs(res.beta - 1.0) <= 0.02
    assert not res.degenerate


def test_maxeig_sampled_probes():
    res = app.max_eigenvalue(DensityMatrix.from_diagonal([0.7, 0.3]), shots=100_000, seed=3)
    assert 0.65 <= res.beta <= 0.75
    assert all(h.step >= 1 for h in res.history)


def test_maxeig_degenerate_mixed():
    for probes in ("exact", "sampled"):
        res = app.max_eigenvalue(DensityMatrix.maximally_mixed(2), probes=probes, seed=1)
        assert res.degenerate
        assert res.terminated_by == "width"
        assert res.bracket[1] - res.bracket[0] < 2**-8
        assert abs(res.beta - 0.5) < 0.05


@pytest.mark.parametrize("diag", [[0.7, 0.3], [0.6, 0.25, 0.15], [0.55, 0.3, 0.15], [0.9, 0.1]])
def test_bisection_brackets_contain_band_crossings(diag):
    rho = DensityMatrix.from_diagonal(diag)
    tol = app.DEFAULT_TOL["exact"]
    crossings = app.exact_band_crossings(rho, tol)
    assert crossings
    res = app.max_eigenvalue(rho, probes="exact")
    for left, right in replay_brackets(res):
        assert all(left - 1e-2 <= c <= right + 1e-2 for c in crossings)


def test_maxeig_argument_errors_and_search_error(monkeypatch):
    rho = DensityMatrix.from_diagonal([0.7, 0.3])
    with pytest.raises(ValidationError):
        app.max_eigenvalue(rho, tol=0.6)
    with pytest.raises(ValidationError):
        app.max_eigenvalue(rho, width_cutoff=0.0)
    with pytest.raises(ValidationError):
        app.max_eigenvalue(rho, probes="psychic")
    monkeypatch.setattr(app, "MAX_BISECTIONS", 3)
    with pytest.raises(SearchError):
        app.max_eigenvalue(rho, probes="exact", width_cutoff=1e-9)


def test_maxeig_history_lines():
    res = app.max_eigenvalue(DensityMatrix.from_diagonal([0.7, 0.3]), probes="exact")
    lines = res.history_lines()
    assert len(lines) == len(res.history)
    assert lines[0].startswith("1,0.5,")
    assert lines[-1].endswith("stop_band")
