"""End-to-end estimators: von Neumann entropy, Uhlmann fidelity and the
maximal-eigenvalue binary search."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import linalg
from .circuit import analytic_joint_distribution, joint_distribution, prep_joint_distribution, state_traces
from .coefficients import (
    STANDARD,
    PolySpec,
    entropy_taylor_spec,
    entropy_truncation_order,
    shots_for,
    sqrt_taylor_coefficients,
    sqrt_taylor_order,
    sqrt_taylor_spec,
    step_poly_spec,
)
from .errors import CapacityError, SearchError, ValidationError
from .sampler import EstimateReport, Seed, ShotBatch, estimate, sample_shots, sample_tally
from .states import (
    RANK_CUTOFF,
    DensityMatrix,
    fidelity_exact,
    min_nonzero_eigenvalue,
    trace_power,
    von_neumann_entropy,
)
from .stateprep import PrepCircuit

DEFAULT_MAX_SHOTS = 10**9


def _check_precision(epsilon: float, delta: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")


def _plan_shots(spec: PolySpec, epsilon: float, delta: float, shots: int | None, max_shots: int) -> int:
    if shots is None:
        shots = shots_for(epsilon / 2.0, delta, spec.scale())
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    if shots > max_shots:
        raise CapacityError(
            f"run needs {shots} shots (gamma {spec.scale():.4g}), above the cap {max_shots}; "
            "pass an explicit shot count or a lower degree"
        )
    return shots


def _sample(
    spec: PolySpec,
    traces: dict[int, float],
    shots: int,
    seed: Seed,
    prep: PrepCircuit | None,
    workers: int,
    copies_per_power: int = 1,
    shot_sink: Callable[[ShotBatch], None] | None = None,
):
    if prep is None:
        dist = analytic_joint_distribution(spec, traces)
    else:
        dist = prep_joint_distribution(spec, traces, prep)
    if shot_sink is None:
        return sample_tally(dist, shots, seed, workers, copies_per_power)
    batch = sample_shots(dist, shots, seed, workers, copies_per_power)
    shot_sink(batch)
    return batch.tally(spec.n)


def estimate_polynomial(
    spec: PolySpec,
    rho: DensityMatrix,
    shots: int,
    seed: Seed = 0,
    prep: PrepCircuit | None = None,
    method: str = "analytic",
    workers: int = 1,
    pessimistic: bool = False,
    shot_sink: Callable[[ShotBatch], None] | None = None,
) -> EstimateReport:
    """Sample const_term + sum_j alpha_j tr(rho**j) for an arbitrary spec.

    ``method="full"`` takes the joint distribution from the density-matrix
    simulation instead of the trace atoms.
    """
    traces = state_traces(spec, rho)
    if method == "full":
        dist = joint_distribution(spec, rho, "full", prep)
    elif method == "analytic":
        dist = None
    else:
        raise ValidationError(f"unknown method {method!r}")
    if dist is None:
        tally = _sample(spec, traces, shots, seed, prep, workers, shot_sink=shot_sink)
    elif shot_sink is None:
        tally = sample_tally(dist, shots, seed, workers)
    else:
        batch = sample_shots(dist, shots, seed, workers)
        shot_sink(batch)
        tally = batch.tally(spec.n)
    return estimate(tally, spec, pessimistic=pessimistic, exact_value=spec.evaluate_traces(traces))


# --- entropy ---------------------------------------------------------------


def estimate_entropy(
    rho: DensityMatrix,
    epsilon: float = 0.1,
    delta: float = 0.05,
    seed: Seed = 0,
    order: int | None = None,
    shots: int | None = None,
    mode: str = STANDARD,
    prep: PrepCircuit | None = None,
    workers: int = 1,
    pessimistic: bool = False,
    max_shots: int = DEFAULT_MAX_SHOTS,
    shot_sink: Callable[[ShotBatch], None] | None = None,
) -> EstimateReport:
    """Sample S_N(rho) with N from the kappa rule unless ``order`` is given.

    ``exact_value`` is S_N(rho); ``reference_value`` is S(rho). ``shot_sink``
    receives the raw shot log when given.
    """
    _check_precision(epsilon, delta)
    if order is None:
        order = entropy_truncation_order(epsilon, min_nonzero_eigenvalue(rho))
    spec = entropy_taylor_spec(order, mode)
    traces = {j: trace_power(rho, j) for j, a in spec.alphas.items() if a != 0.0}
    n_shots = _plan_shots(spec, epsilon, delta, shots, max_shots)
    tally = _sample(spec, traces, n_shots, seed, prep, workers, shot_sink=shot_sink)
    return estimate(
        tally,
        spec,
        pessimistic=pessimistic,
        exact_value=spec.evaluate_traces(traces),
        reference_value=von_neumann_entropy(rho),
    )


# --- fidelity --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FidelityProblem:
    """A pair of equal-dimension states and the spectrum of rho sigma.

    rho sigma is similar to sqrt(rho) sigma sqrt(rho), so its eigenvalues
    are real and nonnegative; ``product_eigenvalues`` holds them ascending.
    """

    rho: DensityMatrix
    sigma: DensityMatrix
    product_eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.rho.dim != self.sigma.dim:
            raise ValidationError(f"dimension mismatch: {self.rho.dim} vs {self.sigma.dim}")
        root = linalg.matrix_sqrt_psd(self.rho.matrix)
        inner = root @ self.sigma.matrix @ root
        lam = linalg.eigvalsh(0.5 * (inner + inner.conj().T))
        if lam[0] < -1e-10:
            raise ValidationError(f"rho sigma has eigenvalue {lam[0]:.3e} < 0")
        object.__setattr__(self, "product_eigenvalues", np.clip(lam, 0.0, None))

    def trace_power(self, k: int) -> float:
        """tr[(rho sigma)**k] from the spectrum."""
        return float(np.sum(self.product_eigenvalues**k))

    def product_trace_powers(self, degree: int) -> dict[int, float]:
        return {k: self.trace_power(k) for k in range(1, degree + 1)}

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.product_eigenvalues > RANK_CUTOFF))

    @property
    def kappa(self) -> float:
        lam = self.product_eigenvalues
        return float(lam[lam > RANK_CUTOFF].min())

    def exact_fidelity(self) -> float:
        return fidelity_exact(self.rho, self.sigma)


def fidelity_spec(problem: FidelityProblem, order: int, mode: str = STANDARD) -> PolySpec:
    """Taylor polynomial of sqrt summed over the nonzero eigenvalues of rho sigma.

    The x**0 coefficient is counted once per nonzero eigenvalue, so
    const_term = c0 * rank(rho sigma).
    """
    c0 = float(sqrt_taylor_coefficients(order)[0])
    return sqrt_taylor_spec(order, mode).with_const(c0 * problem.rank)


def fidelity_poly_value(problem: FidelityProblem, order: int) -> float:
    """Noise-free (p(rho sigma) summed)**2, the value the sampler targets."""
    spec = fidelity_spec(problem, order)
    return spec.evaluate_traces(problem.product_trace_powers(spec.n)) ** 2


def estimate_fidelity(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    epsilon: float = 0.1,
    delta: float = 0.05,
    seed: Seed = 0,
    order: int | None = None,
    shots: int | None = None,
    mode: str = STANDARD,
    prep: PrepCircuit | None = None,
    workers: int = 1,
    pessimistic: bool = False,
    max_shots: int = DEFAULT_MAX_SHOTS,
    shot_sink: Callable[[ShotBatch], None] | None = None,
) -> EstimateReport:
    """Sample sqrt-fidelity f and report F = f**2 clamped to [0, 1].

    Each shot with outcome k consumes k copies of rho and k of sigma.
    ``raw_estimate`` is the unclamped f**2, ``exact_value`` the noise-free
    polynomial F and ``reference_value`` the exact fidelity.
    """
    _check_precision(epsilon, delta)
    problem = FidelityProblem(rho, sigma)
    if order is None:
        order = sqrt_taylor_order(epsilon, problem.kappa)
    spec = fidelity_spec(problem, order, mode)
    traces = problem.product_trace_powers(spec.n)
    n_shots = _plan_shots(spec, epsilon, delta, shots, max_shots)
    tally = _sample(spec, traces, n_shots, seed, prep, workers, 2, shot_sink)
    report = estimate(tally, spec, pessimistic=pessimistic)
    root_hat = report.estimate
    raw = root_hat * root_hat
    return EstimateReport(
        estimate=min(max(raw, 0.0), 1.0),
        std_error=2.0 * abs(root_hat) * report.std_error,
        shots=report.shots,
        copies=report.copies,
        spec_degree=spec.degree,
        mode=spec.mode,
        exact_value=spec.evaluate_traces(traces) ** 2,
        reference_value=problem.exact_fidelity(),
        raw_estimate=raw,
        extras={"sqrt_estimate": root_hat, "sqrt_std_error": report.std_error},
    )


# --- maximal eigenvalue ----------------------------------------------------

EXACT_PROBES = "exact"
SAMPLED_PROBES = "sampled"

# Band and budget defaults per probe kind; see max_eigenvalue.
DEFAULT_TOL = {EXACT_PROBES: 0.3, SAMPLED_PROBES: 0.45}
DEFAULT_L1_BUDGET = {EXACT_PROBES: None, SAMPLED_PROBES: 10.0}
DEFAULT_STEEPNESS = {EXACT_PROBES: None, SAMPLED_PROBES: 16.0}
DEFAULT_JUMP_OFFSET = {EXACT_PROBES: 0.08, SAMPLED_PROBES: 0.2}
DEGENERATE_JUMP = 1.5  # in lone-eigenvalue units
MAX_BISECTIONS = 64


@dataclass(frozen=True)
class BisectionStep:
    step: int
    beta: float
    o_beta: float
    action: str


@dataclass(frozen=True)
class MaxEigenResult:
    beta: float
    history: tuple[BisectionStep, ...]
    degenerate: bool
    terminated_by: str
    bracket: tuple[float, float]
    probes: str

    def history_lines(self) -> list[str]:
        return [f"{h.step},{h.beta:.12g},{h.o_beta:.12g},{h.action}" for h in self.history]


@lru_cache(maxsize=512)
def _step_spec(beta: float, degree: int, steepness: float | None, l1_budget: float | None) -> PolySpec:
    return step_poly_spec(beta, degree, steepness, l1_budget=l1_budget, max_residual=None).spec


def max_eigenvalue(
    rho: DensityMatrix,
    tol: float | None = None,
    degree: int = 16,
    shots: int = 100_000,
    width_cutoff: float = 2.0**-8,
    seed: Seed = 0,
    probes: str = SAMPLED_PROBES,
    l1_budget: float | None | str = "auto",
    steepness: float | None | str = "auto",
    jump_offset: float | None = None,
    workers: int = 1,
) -> MaxEigenResult:
    """Bisect for the threshold beta where o_beta = tr g_beta(rho) drops through the band.

    o_beta approximates the number of eigenvalues above beta. A probe below
    ``tol`` lowers the right end, one above ``1 - tol`` raises the left end,
    and one inside the band stops the search unless the eigenvalue at the
    edge is degenerate. Degeneracy is detected by probing beta -+ offset: a
    drop of ``DEGENERATE_JUMP`` times what a lone eigenvalue would give means
    several eigenvalues share the edge. The search then restarts on the rule
    o_beta > m/2, m the rounded multiplicity, and runs until the bracket is
    narrower than ``width_cutoff``.

    ``probes="exact"`` evaluates o_beta from the trace powers; ``"sampled"``
    runs the QSF estimator with ``shots`` per probe. Sampled probes default
    to an l1-budgeted, softer step so the estimator's normalisation stays
    small, and to a narrow band around o_beta = 1/2.
    """
    if probes not in DEFAULT_TOL:
        raise ValidationError(f"unknown probe kind {probes!r}")
    if tol is None:
        tol = DEFAULT_TOL[probes]
    if not 0.0 < tol < 0.5:
        raise ValidationError(f"tol must lie in (0, 1/2), got {tol}")
    if width_cutoff <= 0.0:
        raise ValidationError(f"width_cutoff must be positive, got {width_cutoff}")
    if l1_budget == "auto":
        l1_budget = DEFAULT_L1_BUDGET[probes]
    if steepness == "auto":
        steepness = DEFAULT_STEEPNESS[probes]
    if jump_offset is None:
        jump_offset = DEFAULT_JUMP_OFFSET[probes]
    d = rho.dim
    trace_cache: dict[int, float] = {}
    history: list[BisectionStep] = []
    counter = [0]

    def probe(beta: float) -> float:
        spec = _step_spec(round(beta, 15), degree, steepness, l1_budget)
        spec = spec.with_const(spec.const_term * d)
        for j in spec.alphas:
            if j not in trace_cache:
                trace_cache[j] = trace_power(rho, j)
        if probes == EXACT_PROBES:
            return spec.evaluate_traces(trace_cache)
        counter[0] += 1
        traces = {j: trace_cache[j] for j, a in spec.alphas.items() if a != 0.0}
        tally = sample_tally(analytic_joint_distribution(spec, traces), shots, _probe_seed(seed, counter[0]), workers)
        return estimate(tally, spec).estimate

    def jump_at(beta: float, step: int) -> float:
        """Drop of o across beta -+ offset, in units of the drop a lone eigenvalue at beta gives."""
        b_lo, b_hi = max(beta - jump_offset, 1e-6), min(beta + jump_offset, 1.0 - 1e-6)
        lone = float(
            _step_spec(round(b_lo, 15), degree, steepness, l1_budget).evaluate_scalar(beta)
            - _step_spec(round(b_hi, 15), degree, steepness, l1_budget).evaluate_scalar(beta)
        )
        count = (probe(b_lo) - probe(b_hi)) / lone
        history.append(BisectionStep(step, beta, count, "jump_check"))
        return count

    steps = [0]

    def bisect(split: float | None):
        """One bisection pass from [0, 1]; ``split`` switches to the o > split rule.

        Returns (beta, bracket, terminated_by, multiplicity) where
        ``multiplicity`` is set when a band hit revealed a degenerate edge.
        """
        left, right = 0.0, 1.0
        while steps[0] < MAX_BISECTIONS:
            steps[0] += 1
            step = steps[0]
            beta = 0.5 * (left + right)
            o = probe(beta)
            if split is not None:
                action = "raise_left" if o > split else "lower_right"
            elif o < tol:
                action = "lower_right"
            elif o > 1.0 - tol:
                action = "raise_left"
            else:
                count = jump_at(beta, step)
                if count >= DEGENERATE_JUMP:
                    history.append(BisectionStep(step, beta, o, "degenerate"))
                    return beta, (left, right), "band", max(2, round(count))
                history.append(BisectionStep(step, beta, o, "stop_band"))
                return beta, (left, right), "band", None
            history.append(BisectionStep(step, beta, o, action))
            if action == "raise_left":
                left = beta
            else:
                right = beta
            if right - left < width_cutoff:
                return 0.5 * (left + right), (left, right), "width", None
        raise SearchError(
            "bisection did not terminate; probe trajectory: "
            + "; ".join(f"{h.beta:.6g}->{h.o_beta:.4g}" for h in history)
        )

    beta, bracket, terminated_by, mult = bisect(None)
    if mult is None and terminated_by == "width":
        count = jump_at(beta, steps[0])
        mult = max(2, round(count)) if count >= DEGENERATE_JUMP else None
    degenerate = mult is not None
    if degenerate:
        # m eigenvalues share the edge: o falls from ~m to ~0 and passes m/2 there
        beta, bracket, terminated_by, _ = bisect(0.5 * mult)
    return MaxEigenResult(beta, tuple(history), degenerate, terminated_by, bracket, probes)


def _probe_seed(seed: Seed, index: int) -> list[int]:
    base = [seed] if isinstance(seed, int) else list(seed)
    return base + [index]


def exact_band_crossings(rho: DensityMatrix, tol: float, degree: int = 16, grid: int = 401) -> list[float]:
    """Grid points where the exact o_beta enters or leaves the (tol, 1 - tol) band."""
    lam = rho.eigenvalues
    betas = np.linspace(1.0 / grid, 1.0 - 1.0 / grid, grid)
    vals = []
    for b in betas:
        spec = _step_spec(round(float(b), 15), degree, None, None)
        vals.append(float(np.sum(spec.evaluate_scalar(lam))))
    state = np.digitize(vals, [tol, 1.0 - tol])
    return [float(betas[i]) for i in range(1, grid) if state[i] != state[i - 1]]

