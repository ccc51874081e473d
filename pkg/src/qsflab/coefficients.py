"""Target polynomials and shot planning.

A :class:`PolySpec` holds the coefficients of ``sum_j alpha_j tr(rho**j)``
together with the normalisation and Ry angles the circuit needs. The
builders here produce the entropy Taylor series, the square-root Taylor
polynomial used for fidelity, and a smooth step for eigenvalue filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from .errors import ApproximationError, ValidationError

STANDARD = "standard"
VARIANT = "variant"
MODES = (STANDARD, VARIANT)

MAX_ORDER = 60
STEP_FIT_GRID = 1001
STEP_MAX_RESIDUAL = 0.15


def next_power_of_two(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass(frozen=True)
class PolySpec:
    """Polynomial ``const_term + sum_j alphas[j] * tr(rho**j)``.

    ``gamma`` and ``thetas`` are derived from ``alphas`` and ``mode``:
    standard mode uses gamma = sum |alpha_j| and theta_j = sign(alpha_j) pi/2;
    variant mode uses gamma = max |alpha_j| and theta_j = arcsin(alpha_j/gamma).
    ``alphas`` is zero-padded up to ``n``, the next power of two above the
    degree.
    """

    alphas: Mapping[int, float]
    const_term: float = 0.0
    mode: str = STANDARD
    gamma: float = field(init=False)
    thetas: Mapping[int, float] = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        alphas = {int(j): float(a) for j, a in self.alphas.items()}
        if any(j < 1 for j in alphas):
            raise ValidationError("powers must be >= 1")
        nonzero = [j for j, a in alphas.items() if a != 0.0]
        if not nonzero:
            raise ValidationError("polynomial has no nonzero circuit-encoded coefficient")
        n = next_power_of_two(max(nonzero))
        if max(alphas) > n:
            raise ValidationError("explicit zero coefficients beyond the padded register")
        padded = {j: alphas.get(j, 0.0) for j in range(1, n + 1)}
        mags = [abs(a) for a in padded.values()]
        if self.mode == STANDARD:
            gamma = math.fsum(mags)
            thetas = {j: math.copysign(math.pi / 2, a) if a != 0.0 else 0.0 for j, a in padded.items()}
        else:
            gamma = max(mags)
            thetas = {j: math.asin(max(-1.0, min(1.0, a / gamma))) for j, a in padded.items()}
        object.__setattr__(self, "alphas", padded)
        object.__setattr__(self, "const_term", float(self.const_term))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "thetas", thetas)

    @property
    def degree(self) -> int:
        """Largest power with a nonzero coefficient."""
        return max(j for j, a in self.alphas.items() if a != 0.0)

    @property
    def n(self) -> int:
        """Padded register size (a power of two)."""
        return len(self.alphas)

    @property
    def qubits(self) -> int:
        return self.n.bit_length() - 1

    def with_mode(self, mode: str) -> "PolySpec":
        return PolySpec(dict(self.alphas), self.const_term, mode)

    def with_const(self, const_term: float) -> "PolySpec":
        return PolySpec(dict(self.alphas), const_term, self.mode)

    def negated(self) -> "PolySpec":
        return PolySpec({j: -a for j, a in self.alphas.items()}, -self.const_term, self.mode)

    def amplitudes(self) -> np.ndarray:
        """Control-register amplitudes sqrt(|alpha_j| / gamma_standard), j = 1..n."""
        mags = np.array([abs(self.alphas[j]) for j in range(1, self.n + 1)])
        return np.sqrt(mags / mags.sum())

    def scale(self) -> float:
        """Factor turning the ancilla's +-1 mean into the polynomial value."""
        return self.gamma if self.mode == STANDARD else self.n * self.gamma

    def evaluate_scalar(self, x):
        """const_term + sum_j alpha_j x**j for scalar or array ``x``."""
        coef = [self.const_term] + [self.alphas[j] for j in range(1, self.n + 1)]
        return Polynomial(coef)(x)

    def evaluate_traces(self, traces: Mapping[int, float]) -> float:
        """const_term + sum_j alpha_j traces[j]."""
        return self.const_term + math.fsum(a * traces[j] for j, a in self.alphas.items() if a != 0.0)


def entropy_taylor_spec(order: int, mode: str = STANDARD) -> PolySpec:
    """Truncated Taylor series of the von Neumann entropy.

    S_N(rho) = sum_{j=1}^N (1/j) tr[rho (I - rho)**j], expanded so that the
    coefficient of tr(rho**(j+1)) is sum_{k=1}^N (-1)**j C(k, j) / k. The sum
    is done in exact rationals.
    """
    if order < 1:
        raise ValidationError(f"truncation order must be >= 1, got {order}")
    if order > MAX_ORDER:
        raise ArithmeticError(f"truncation order {order} exceeds the cap {MAX_ORDER}")
    alphas = {}
    for j in range(order + 1):
        exact = sum(Fraction((-1) ** j * math.comb(k, j), k) for k in range(1, order + 1))
        alphas[j + 1] = float(exact)
    return PolySpec(alphas, 0.0, mode)


def entropy_truncation_order(epsilon: float, kappa: float) -> int:
    """N = ceil(ln(2/(eps kappa)) / ln(1/(1-kappa))), kappa clamped to 1/2."""
    if epsilon <= 0 or kappa <= 0:
        raise ValidationError("epsilon and kappa must be positive")
    if epsilon > 1:
        raise ValidationError(f"epsilon must be <= 1, got {epsilon}")
    kappa = min(kappa, 0.5)
    return max(1, math.ceil(math.log(2.0 / (epsilon * kappa)) / math.log(1.0 / (1.0 - kappa))))


def _binom_half(k: int) -> Fraction:
    """Generalised binomial C(1/2, k)."""
    out = Fraction(1)
    for i in range(k):
        out *= (Fraction(1, 2) - i) / (i + 1)
    return out


def sqrt_taylor_coefficients(order: int) -> list[Fraction]:
    """Exact monomial coefficients c_0..c_N of the Taylor polynomial of sqrt(x) at 1."""
    if order < 1:
        raise ValidationError(f"degree must be >= 1, got {order}")
    if order > MAX_ORDER:
        raise ArithmeticError(f"degree {order} exceeds the cap {MAX_ORDER}")
    coef = [Fraction(0)] * (order + 1)
    for k in range(order + 1):
        b = _binom_half(k)
        # (x - 1)**k = sum_i C(k, i) x**i (-1)**(k - i)
        for i in range(k + 1):
            coef[i] += b * math.comb(k, i) * (-1) ** (k - i)
    return coef


def sqrt_taylor_spec(order: int, mode: str = STANDARD) -> PolySpec:
    """Degree-N Taylor polynomial of sqrt(x) about 1; x**0 goes to const_term."""
    coef = sqrt_taylor_coefficients(order)
    return PolySpec({i: float(c) for i, c in enumerate(coef) if i >= 1}, float(coef[0]), mode)


def sqrt_taylor_deviation(order: int, kappa: float, points: int = 2001) -> float:
    """Max |p_N(x) - sqrt(x)| over a uniform grid on [kappa, 1].

    Evaluated in the centred form sum C(1/2,k) (x-1)**k, which stays accurate
    at orders where the monomial coefficients are large.
    """
    x = np.linspace(kappa, 1.0, points)
    t = x - 1.0
    acc = np.zeros_like(x)
    for k in range(order, -1, -1):
        acc = acc * t + float(_binom_half(k))
    return float(np.max(np.abs(acc - np.sqrt(x))))


def sqrt_taylor_order(epsilon: float, kappa: float, max_order: int = MAX_ORDER) -> int:
    """Smallest N <= max_order whose scalar deviation on [kappa, 1] is <= epsilon/4."""
    if not 0 < kappa <= 1:
        raise ValidationError(f"kappa must lie in (0, 1], got {kappa}")
    for order in range(1, max_order + 1):
        if sqrt_taylor_deviation(order, kappa) <= epsilon / 4:
            return order
    raise ApproximationError(
        f"no sqrt Taylor polynomial of degree <= {max_order} reaches {epsilon / 4:.3g} on [{kappa:.3g}, 1]"
    )


@dataclass(frozen=True)
class StepFit:
    spec: PolySpec
    residual: float
    beta: float
    steepness: float


def _logistic(x, beta, steepness):
    return 0.5 * (1.0 + np.tanh(0.5 * steepness * (x - beta)))


def step_poly_spec(
    beta: float,
    degree: int,
    steepness: float | None = None,
    l1_budget: float | None = None,
    max_residual: float | None = STEP_MAX_RESIDUAL,
) -> StepFit:
    """Polynomial surrogate of the step g_beta on [0, 1].

    Fits the logistic 1/(1 + exp(-s (x - beta))) with ``s = 4 * degree`` by
    default. Without ``l1_budget`` this is an ordinary least-squares fit in
    the Chebyshev basis on Chebyshev nodes mapped to [0, 1], converted to
    monomials. With ``l1_budget`` the monomial coefficients of powers >= 1 are
    constrained to sum(|alpha_j|) <= l1_budget, which bounds the sampling
    normalisation at the price of a softer edge; the residual check is then
    skipped.

    The residual is the max deviation from the logistic on a uniform
    1001-point grid with |x - beta| < 2/s excluded.
    """
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {beta}")
    if degree < 4:
        raise ValidationError(f"step polynomial degree must be >= 4, got {degree}")
    if steepness is None:
        steepness = 4.0 * degree
    k = np.arange(STEP_FIT_GRID)
    nodes = 0.5 - 0.5 * np.cos(np.pi * (k + 0.5) / STEP_FIT_GRID)
    target = _logistic(nodes, beta, steepness)
    if l1_budget is None:
        cheb = Chebyshev.fit(nodes, target, degree, domain=[0.0, 1.0])
        coef = cheb.convert(kind=Polynomial, domain=[-1.0, 1.0], window=[-1.0, 1.0]).coef
    else:
        coef = _l1_budget_fit(nodes, target, degree, l1_budget)
    coef = np.pad(coef, (0, degree + 1 - coef.size))
    grid = np.linspace(0.0, 1.0, STEP_FIT_GRID)
    mask = np.abs(grid - beta) >= 2.0 / steepness
    residual = float(np.max(np.abs(Polynomial(coef)(grid[mask]) - _logistic(grid[mask], beta, steepness))))
    if l1_budget is None and max_residual is not None and residual > max_residual:
        raise ApproximationError(
            f"step fit residual {residual:.3f} exceeds {max_residual}; raise the degree"
        )
    spec = PolySpec({j: float(coef[j]) for j in range(1, degree + 1)}, float(coef[0]))
    return StepFit(spec, residual, beta, steepness)


def _l1_budget_fit(x: np.ndarray, y: np.ndarray, degree: int, budget: float) -> np.ndarray:
    import cvxpy as cp

    vander = np.vander(x, degree + 1, increasing=True)
    a = cp.Variable(degree + 1)
    problem = cp.Problem(
        cp.Minimize(cp.sum_squares(vander @ a - y)),
        [cp.norm1(a[1:]) <= budget],
    )
    problem.solve(solver=cp.CLARABEL)
    if a.value is None:
        raise ApproximationError(f"budgeted step fit failed: {problem.status}")
    return np.asarray(a.value, dtype=float)


def shots_for(epsilon: float, delta: float, gamma: float) -> int:
    """Hoeffding shot count ceil(2 gamma**2 ln(2/delta) / eps**2)."""
    if epsilon <= 0 or delta <= 0 or gamma <= 0:
        raise ValidationError("epsilon, delta and gamma must be positive")
    if delta >= 1:
        raise ValidationError(f"delta must be < 1, got {delta}")
    # round before ceil so exact plug-in cases are not bumped by float noise
    return math.ceil(round(2.0 * gamma**2 * math.log(2.0 / delta) / epsilon**2, 9))


# --- text format -----------------------------------------------------------


def format_spec(spec: PolySpec) -> str:
    lines = [f"mode {spec.mode}", f"const_term {spec.const_term:.17g}"]
    lines += [f"{j} {a:.17g}" for j, a in spec.alphas.items() if a != 0.0]
    return "\n".join(lines) + "\n"


def parse_spec(text: str, mode: str | None = None) -> PolySpec:
    """Parse ``mode``/``const_term`` headers and ``j alpha_j`` lines.

    ``mode`` overrides the value recorded in the file when given.
    """
    file_mode = STANDARD
    const = 0.0
    alphas: dict[int, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition(" ")
        value = value.strip()
        try:
            if key == "mode":
                file_mode = value
            elif key == "const_term":
                const = float(value)
            else:
                j = int(key)
                if j in alphas:
                    raise ValidationError(f"line {lineno}: duplicate power {j}")
                alphas[j] = float(value)
        except ValueError:
            raise ValidationError(f"line {lineno}: cannot parse {raw!r}") from None
    return PolySpec(alphas, const, mode or file_mode)


def load_spec(path, mode: str | None = None) -> PolySpec:
    return parse_spec(Path(path).read_text(), mode)


def save_spec(spec: PolySpec, path) -> None:
    Path(path).write_text(format_spec(spec))

