"""Monte-Carlo shots, the QSF estimator, copy accounting and the per-term baseline.

Shots are drawn from the exact joint distribution in fixed chunks of
``CHUNK_SHOTS``. Chunk ``c`` of a run seeded with ``seed`` uses its own
Philox stream keyed by ``(seed, c)``, so the shot sequence does not depend on
how chunks are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .circuit import JointDistribution
from .coefficients import STANDARD, PolySpec
from .errors import ValidationError
from .states import DensityMatrix, trace_power

CHUNK_SHOTS = 4096

Seed = int | Sequence[int]


def chunk_rng(seed: Seed, chunk: int) -> np.random.Generator:
    entropy = [seed] if isinstance(seed, int) else list(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy, spawn_key=(chunk,))))


@dataclass(frozen=True)
class ShotRecord:
    j_outcome: int
    x_outcome: int
    copies_consumed: int


@dataclass(frozen=True, eq=False)
class ShotBatch:
    """Columnar shot log: control outcomes ``j`` (1-based) and ancilla outcomes ``x``."""

    j: np.ndarray
    x: np.ndarray
    copies_per_power: int = 1

    def __len__(self) -> int:
        return int(self.j.size)

    def __iter__(self) -> Iterator[ShotRecord]:
        cpp = self.copies_per_power
        for j, x in zip(self.j.tolist(), self.x.tolist()):
            yield ShotRecord(j, x, cpp * j)

    def tally(self, n: int) -> "ShotTally":
        counts = np.bincount(self.j - 1, minlength=n)
        plus = int(np.count_nonzero(self.x > 0))
        return ShotTally(len(self), plus, len(self) - plus, counts, self.copies_per_power)


@dataclass(frozen=True, eq=False)
class ShotTally:
    """Sufficient statistics of a run: outcome counts and per-power frequencies."""

    shots: int
    plus: int
    minus: int
    power_counts: np.ndarray
    copies_per_power: int = 1

    def __add__(self, other: "ShotTally") -> "ShotTally":
        return ShotTally(
            self.shots + other.shots,
            self.plus + other.plus,
            self.minus + other.minus,
            self.power_counts + other.power_counts,
            self.copies_per_power,
        )


@dataclass(frozen=True)
class CopyLedger:
    shots: int
    fresh_copies_total: int
    reclaimed_total: int
    expected_per_shot: float

    @property
    def mean_per_shot(self) -> float:
        return self.fresh_copies_total / self.shots if self.shots else 0.0


@dataclass(frozen=True)
class EstimateReport:
    """Outcome of one estimator run.

    ``exact_value`` is the noise-free value of the sampled polynomial;
    ``reference_value`` is the functional it approximates (entropy, fidelity)
    when that differs. ``raw_estimate`` keeps the unclamped value when
    ``estimate`` has been clamped.
    """

    estimate: float
    std_error: float
    shots: int
    copies: CopyLedger
    spec_degree: int
    mode: str = STANDARD
    exact_value: float | None = None
    reference_value: float | None = None
    raw_estimate: float | None = None
    extras: Mapping[str, float] = field(default_factory=dict)

    def as_record(self) -> dict[str, object]:
        rec: dict[str, object] = {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "shots": self.shots,
            "mode": self.mode,
            "spec_degree": self.spec_degree,
            "fresh_copies_total": self.copies.fresh_copies_total,
            "reclaimed_total": self.copies.reclaimed_total,
            "copies_per_shot_expected": self.copies.expected_per_shot,
            "copies_per_shot_observed": self.copies.mean_per_shot,
        }
        if self.raw_estimate is not None:
            rec["raw_estimate"] = self.raw_estimate
        if self.exact_value is not None:
            rec["exact_value"] = self.exact_value
        if self.reference_value is not None:
            rec["reference_value"] = self.reference_value
        rec.update(self.extras)
        return rec


def _cumulative(dist: JointDistribution) -> np.ndarray:
    cum = np.cumsum(dist.p_j)
    last = int(np.flatnonzero(dist.p_j > 0)[-1])
    cum[last:] = 1.0
    return cum


def _draw_chunk(dist: JointDistribution, cum: np.ndarray, seed: Seed, chunk: int, size: int):
    u = chunk_rng(seed, chunk).random((2, size))
    j = np.searchsorted(cum, u[0], side="right")
    x = np.where(u[1] < dist.p_plus[j], 1, -1).astype(np.int8)
    return (j + 1).astype(np.int32), x


def _chunk_sizes(n_shots: int) -> list[int]:
    full, rest = divmod(n_shots, CHUNK_SHOTS)
    return [CHUNK_SHOTS] * full + ([rest] if rest else [])


def _map_chunks(fn, sizes: list[int], workers: int):
    if workers <= 1 or len(sizes) <= 1:
        return [fn(c, s) for c, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def sample_shots(
    dist: JointDistribution,
    n_shots: int,
    seed: Seed,
    workers: int = 1,
    copies_per_power: int = 1,
) -> ShotBatch:
    """Draw ``n_shots`` i.i.d. (j, x) pairs: j from the marginal, then x given j."""
    if n_shots < 1:
        raise ValidationError(f"need at least one shot, got {n_shots}")
    cum = _cumulative(dist)
    parts = _map_chunks(lambda c, s: _draw_chunk(dist, cum, seed, c, s), _chunk_sizes(n_shots), workers)
    j = np.concatenate([p[0] for p in parts])
    x = np.concatenate([p[1] for p in parts])
    return ShotBatch(j, x, copies_per_power)


def sample_tally(
    dist: JointDistribution,
    n_shots: int,
    seed: Seed,
    workers: int = 1,
    copies_per_power: int = 1,
) -> ShotTally:
    """Same draws as :func:`sample_shots`, reduced chunk by chunk to counts."""
    if n_shots < 1:
        raise ValidationError(f"need at least one shot, got {n_shots}")
    cum = _cumulative(dist)
    n = dist.n

    def one(c, s):
        j, x = _draw_chunk(dist, cum, seed, c, s)
        return ShotBatch(j, x, copies_per_power).tally(n)

    parts = _map_chunks(one, _chunk_sizes(n_shots), workers)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def expected_copies_per_shot(spec: PolySpec, copies_per_power: int = 1, pessimistic: bool = False) -> float:
    """sum_j P(j) * copies charged for outcome j."""
    if pessimistic:
        return float(copies_per_power * spec.degree)
    if spec.mode == STANDARD:
        pj = {j: abs(a) / spec.gamma for j, a in spec.alphas.items()}
    else:
        pj = {j: 1.0 / spec.n for j in spec.alphas}
    return copies_per_power * math.fsum(p * min(j, spec.degree) for j, p in pj.items())


def copy_ledger(tally: ShotTally, spec: PolySpec, pessimistic: bool = False) -> CopyLedger:
    """Fresh-copy accounting: outcome j uses j copies and hands back degree - j.

    Padded branches (j > degree) touch no copy beyond the register, so they
    are charged ``degree``. ``pessimistic`` charges the whole register per shot.
    """
    cpp = tally.copies_per_power
    deg = spec.degree
    powers = np.minimum(np.arange(1, tally.power_counts.size + 1), deg)
    if pessimistic:
        fresh = cpp * deg * tally.shots
    else:
        fresh = int(cpp * np.sum(powers * tally.power_counts))
    reclaimed = cpp * deg * tally.shots - fresh
    return CopyLedger(tally.shots, int(fresh), int(reclaimed), expected_copies_per_shot(spec, cpp, pessimistic))


def estimate(
    records: ShotBatch | ShotTally | Sequence[ShotRecord],
    spec: PolySpec,
    pessimistic: bool = False,
    exact_value: float | None = None,
    reference_value: float | None = None,
) -> EstimateReport:
    """const_term + scale * (P+ - P-) / N with scale gamma (standard) or n*gamma (variant)."""
    if isinstance(records, ShotTally):
        tally = records
    elif isinstance(records, ShotBatch):
        tally = records.tally(spec.n)
    else:
        records = list(records)
        if not records:
            raise ValidationError("cannot estimate from an empty shot list")
        j = np.array([r.j_outcome for r in records], dtype=np.int32)
        x = np.array([r.x_outcome for r in records], dtype=np.int8)
        cpp = records[0].copies_consumed // records[0].j_outcome
        tally = ShotBatch(j, x, cpp).tally(spec.n)
    if tally.shots < 1:
        raise ValidationError("cannot estimate from an empty shot list")
    mean = (tally.plus - tally.minus) / tally.shots
    scale = spec.scale()
    value = spec.const_term + scale * mean
    std_error = scale * math.sqrt(max(0.0, 1.0 - mean * mean)) / math.sqrt(tally.shots)
    return EstimateReport(
        estimate=value,
        std_error=std_error,
        shots=tally.shots,
        copies=copy_ledger(tally, spec, pessimistic),
        spec_degree=spec.degree,
        mode=spec.mode,
        exact_value=exact_value,
        reference_value=reference_value,
    )


def baseline_generalized_swap(
    spec: PolySpec,
    rho: DensityMatrix,
    shots_per_term: int,
    seed: Seed,
    traces: Mapping[int, float] | None = None,
) -> EstimateReport:
    """Estimate every tr(rho**j) with its own SWAP-type test and sum classically.

    Each term gets ``shots_per_term`` ancilla outcomes with P(+) = (1 + t_j)/2;
    every shot for power j consumes j fresh copies and none are reused.
    """
    if shots_per_term < 1:
        raise ValidationError(f"shots_per_term must be >= 1, got {shots_per_term}")
    terms = [j for j, a in spec.alphas.items() if a != 0.0]
    if traces is None:
        traces = {j: trace_power(rho, j) for j in terms}
    value = spec.const_term
    variance = 0.0
    for j in terms:
        p = min(1.0, max(0.0, 0.5 * (1.0 + traces[j])))
        hits = int(chunk_rng(seed, j).binomial(shots_per_term, p))
        t_hat = 2.0 * hits / shots_per_term - 1.0
        a = spec.alphas[j]
        value += a * t_hat
        variance += a * a * (1.0 - t_hat * t_hat) / shots_per_term
    per_round = sum(terms)
    fresh = shots_per_term * per_round
    ledger = CopyLedger(shots_per_term * len(terms), fresh, 0, per_round / len(terms))
    return EstimateReport(
        estimate=value,
        std_error=math.sqrt(variance),
        shots=ledger.shots,
        copies=ledger,
        spec_degree=spec.degree,
        mode="baseline",
        exact_value=spec.evaluate_traces(traces),
    )


# --- shot dump -------------------------------------------------------------


def format_shots(batch: ShotBatch) -> str:
    return "".join(f"{j} {x}\n" for j, x in zip(batch.j.tolist(), batch.x.tolist()))


def parse_shots(text: str, copies_per_power: int = 1) -> ShotBatch:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        j = np.array([int(r[0]) for r in rows], dtype=np.int32)
        x = np.array([int(r[1]) for r in rows], dtype=np.int8)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"malformed shot log: {exc}") from None
    if np.any(j < 1) or np.any(np.abs(x) != 1):
        raise ValidationError("shot log holds out-of-range outcomes")
    return ShotBatch(j, x, copies_per_power)


def write_shots(batch: ShotBatch, path) -> None:
    Path(path).write_text(format_shots(batch))
