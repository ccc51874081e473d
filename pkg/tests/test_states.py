import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from qsflab import states
from qsflab.coefficients import PolySpec, entropy_taylor_spec
from qsflab.errors import PSDError, ValidationError
from qsflab.states import DensityMatrix


def test_validation():
    with pytest.raises(ValidationError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.eye(2))
    with pytest.raises(PSDError):
        DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.ones((2, 3)))
    rho = DensityMatrix(np.diag([0.6, 0.4]))
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_random_state_examples():
    pure = states.random_state(2, rank=1, seed=5)
    assert abs(states.trace_power(pure, 2) - 1) < 1e-10
    a = states.random_state(3, seed=9)
    b = states.random_state(3, seed=9)
    assert np.array_equal(a.matrix, b.matrix)
    with pytest.raises(ValidationError):
        states.random_state(2, rank=3)


def test_random_state_matches_independent_ginibre():
    gaps_lib, gaps_ref = [], []
    for seed in range(1000):
        lam = states.random_state(2, 2, seed).eigenvalues
        gaps_lib.append(lam[1] - lam[0])
        rng = np.random.default_rng(seed)
        re = rng.standard_normal((2, 2))
        im = rng.standard_normal((2, 2))
        g = re + 1j * im
        w = g @ g.conj().T
        gaps_ref.append(np.ptp(np.linalg.eigvalsh(w / np.trace(w).real)))
    assert np.allclose(gaps_lib, gaps_ref, atol=1e-10)
    # square Ginibre gives the Hilbert-Schmidt ensemble: Bloch radius r has
    # density 3 r**2, and the eigenvalue gap equals r, so E[gap] = 3/4
    assert abs(np.mean(gaps_lib) - 0.75) < 0.03


def test_trace_power_examples():
    mixed = DensityMatrix.maximally_mixed(2)
    assert abs(states.trace_power(mixed, 4) - 0.125) < 1e-15
    pure = DensityMatrix.pure([1, 1j, 0])
    assert all(abs(states.trace_power(pure, j) - 1) < 1e-12 for j in range(1, 6))
    rho = states.random_state(2, seed=1)
    lam = np.linalg.eigvalsh(rho.matrix)
    assert abs(states.trace_power(rho, 5) - np.sum(lam**5)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 5), seed=st.integers(0, 10**6))
def test_trace_power_monotone(d, seed):
    rho = states.random_state(d, seed=seed)
    vals = [states.trace_power(rho, j) for j in range(1, 8)]
    assert abs(vals[0] - 1) < 1e-12
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_entropy_examples():
    assert abs(states.von_neumann_entropy(DensityMatrix.maximally_mixed(2)) - math.log(2)) < 1e-12
    assert abs(states.von_neumann_entropy(DensityMatrix.pure([0.6, 0.8]))) < 1e-12
    expected = -0.7 * math.log(0.7) - 0.3 * math.log(0.3)
    assert abs(states.von_neumann_entropy(DensityMatrix.from_diagonal([0.7, 0.3])) - expected) < 1e-12


def test_fidelity_examples():
    rho = states.random_state(3, seed=2)
    assert abs(states.fidelity_exact(rho, rho) - 1) < 1e-9
    assert states.fidelity_exact(DensityMatrix.pure([1, 0]), DensityMatrix.pure([0, 1])) < 1e-12
    q = states.random_state(2, seed=4)
    mixed = DensityMatrix.maximally_mixed(2)
    prod = np.linalg.eigvals(q.matrix @ mixed.matrix)
    second_form = np.sum(np.sqrt(np.clip(prod.real, 0, None))) ** 2
    assert abs(states.fidelity_exact(q, mixed) - second_form) < 1e-9
    with pytest.raises(ValidationError):
        states.fidelity_exact(q, rho)


@settings(max_examples=25, deadline=None)
@given(d=st.integers(2, 4), s1=st.integers(0, 10**6), s2=st.integers(0, 10**6), r=st.integers(1, 4))
def test_fidelity_symmetric_and_scipy_oracle(d, s1, s2, r):
    rho = states.random_state(d, min(r, d), s1)
    sigma = states.random_state(d, seed=s2)
    f = states.fidelity_exact(rho, sigma)
    assert abs(f - states.fidelity_exact(sigma, rho)) < 1e-9
    root = scipy.linalg.sqrtm(rho.matrix)
    ref = np.trace(scipy.linalg.sqrtm(root @ sigma.matrix @ root)).real ** 2
    assert abs(f - ref) < 1e-7


def test_min_nonzero_eigenvalue():
    assert states.min_nonzero_eigenvalue(DensityMatrix.maximally_mixed(2)) == pytest.approx(0.5)
    assert states.min_nonzero_eigenvalue(DensityMatrix.from_diagonal([0.9, 0.1])) == pytest.approx(0.1)
    proj = DensityMatrix.pure([0.5, 0.5, 0.5, 0.5j])
    assert states.min_nonzero_eigenvalue(proj) == pytest.approx(1.0)


def test_poly_function_examples():
    pure = DensityMatrix.pure([1, 1])
    assert states.poly_function_exact(PolySpec({2: 1.0}), pure) == pytest.approx(1.0)
    rho = states.random_state(3, seed=1)
    assert states.poly_function_exact(PolySpec({1: 1.0}), rho) == pytest.approx(1.0)
    mixed = DensityMatrix.maximally_mixed(2)
    assert states.poly_function_exact(entropy_taylor_spec(2), mixed) == pytest.approx(0.625, abs=1e-14)


def test_poly_transform_examples():
    rho = states.random_state(3, seed=8)
    assert np.allclose(states.poly_transform_exact(PolySpec({1: 1.0}), rho), rho.matrix, atol=1e-14)
    proj = DensityMatrix.pure([1, 2j, 0])
    assert np.allclose(states.poly_transform_exact(PolySpec({2: 1.0}), proj), proj.matrix, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), order=st.integers(1, 8), const=st.floats(-2, 2))
def test_poly_transform_trace_linearity(seed, order, const):
    rho = states.random_state(3, seed=seed)
    spec = entropy_taylor_spec(order).with_const(const)
    tr = np.trace(states.poly_transform_exact(spec, rho)).real
    assert abs(tr - (states.poly_function_exact(spec, rho) - const)) < 1e-10


def test_state_text_roundtrip(tmp_path):
    rho = states.random_state(3, seed=12)
    path = tmp_path / "rho.txt"
    states.save_state(rho, path)
    back = states.load_state(path)
    assert np.array_equal(back.matrix, rho.matrix)
    text = "2\n0.5+0j 0+0j\n0+0j 0.5+0j\n"
    assert np.allclose(states.parse_state(text).matrix, np.eye(2) / 2)
    with pytest.raises(ValidationError):
        states.parse_state("3\n1 0\n0 0\n")
    with pytest.raises(ValidationError):
        states.parse_state("2\nfoo bar\n0 1\n")


def test_entropy_series_value_matches_monomial_form():
    rho = states.random_state(2, seed=3)
    for order in (1, 2, 6, 12):
        spec = entropy_taylor_spec(order)
        assert abs(states.entropy_series_value(rho.eigenvalues, order) - states.poly_function_exact(spec, rho)) < 1e-9
