"""Optimizer and transfer quality metrics, reuse savings, random-walk baseline."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .optimizers import MINIMIZE


@dataclass(frozen=True)
class SpaceCDF:
    """Sorted objective values of the deployable points of a characterized space."""

    values: tuple
    direction: str = MINIMIZE

    @classmethod
    def from_values(cls, values, direction: str = MINIMIZE) -> "SpaceCDF":
        finite = sorted(float(v) for v in values if v is not None and math.isfinite(v))
        return cls(tuple(finite), direction)

    def __len__(self):
        return len(self.values)

    @property
    def best(self) -> float:
        return self.values[0] if self.direction == MINIMIZE else self.values[-1]


def best_percentile(value: float, cdf: SpaceCDF) -> float:
    """Percent of deployable points that ``value`` beats or ties."""
    if len(cdf) == 0:
        raise ValueError("empty CDF")
    vals = np.asarray(cdf.values)
    if cdf.direction == MINIMIZE:
        covered = int(np.count_nonzero(vals >= value))
    else:
        covered = int(np.count_nonzero(vals <= value))
    return 100.0 * covered / len(vals)


def rank_ids(values: dict, direction: str = MINIMIZE) -> list:
    """Ids sorted best-first by value; ties go to the lower id."""
    sign = 1.0 if direction == MINIMIZE else -1.0
    return sorted(values, key=lambda k: (sign * values[k], k))


def top5_overlap(predicted_ranking: Sequence, true_ranking: Sequence) -> float:
    if len(predicted_ranking) < 5 or len(true_ranking) < 5:
        raise ValueError("top5 overlap needs at least 5 ranked points")
    return len(set(predicted_ranking[:5]) & set(true_ranking[:5])) / 5 * 100.0


def rank_resolution(predicted, true) -> int:
    """Smallest rank gap whose mean true-value spacing reaches the mean prediction error."""
    predicted = np.asarray(predicted, dtype=float)
    true = np.asarray(true, dtype=float)
    n = len(true)
    if n < 2 or predicted.shape != true.shape:
        raise ValueError("rank resolution needs at least 2 paired values")
    error = float(np.mean(np.abs(predicted - true)))
    ordered = np.sort(true)
    for gap in range(1, n):
        if float(np.mean(np.abs(ordered[gap:] - ordered[:-gap]))) >= error:
            return gap
    return n


def normalized_cost(result) -> float:
    total = result.new_measurements + result.reused
    if total <= 0:
        raise ValueError("operation took no steps")
    return result.new_measurements / total


def _proposal_ids(run) -> list:
    return list(getattr(run, "proposals", run))


def average_normalized_cost(runs, permutations: int = 100, seed: int = 0) -> list[float]:
    """Mean normalized cost of the i-th run over random orderings of ``runs``.

    Each run is a proposal sequence (or an object with ``proposals``). Within
    one ordering a point costs a measurement only the first time any run
    proposes it.
    """
    seqs = [_proposal_ids(r) for r in runs]
    if not seqs:
        return []
    rng = np.random.default_rng(seed)
    totals = np.zeros(len(seqs))
    for _ in range(permutations):
        seen: set = set()
        for pos, idx in enumerate(rng.permutation(len(seqs))):
            seq = seqs[idx]
            new = 0
            for cid in seq:
                if cid not in seen:
                    new += 1
                    seen.add(cid)
            totals[pos] += new / len(seq) if seq else 0.0
    return list(totals / permutations)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def hypergeometric_success(N: int, K: int, n: int) -> float:
    """P(at least one of n draws without replacement lands among K targets of N)."""
    if not (0 <= K <= N) or n < 0:
        raise ValueError(f"invalid hypergeometric parameters N={N} K={K} n={n}")
    if n > N:
        raise ValueError(f"cannot draw {n} from {N}")
    if n == 0 or K == 0:
        return 0.0
    if n > N - K:
        return 1.0
    return 1.0 - math.exp(_log_comb(N - K, n) - _log_comb(N, n))


def target_region_size(n_ok: int, fraction: float = 0.05) -> int:
    """Points in the top ``fraction`` of a space; at least one."""
    return max(1, math.ceil(round(fraction * n_ok, 9)))


def percent_savings(new_measurements: int, total_points: int, per_point_cost: float = 1.0) -> float:
    if total_points <= 0 or new_measurements > total_points:
        raise ValueError("need 0 <= new_measurements <= total_points")
    return (1.0 - (new_measurements * per_point_cost) / (total_points * per_point_cost)) * 100.0


def percent_savings_from_costs(measured_costs, all_costs) -> float:
    total = float(sum(all_costs))
    return (1.0 - float(sum(measured_costs)) / total) * 100.0


# -- CSV emitters ------------------------------------------------------------

SAVINGS_COLUMNS = ["run_index", "mean_normalized_cost", "percent_saved"]
BASELINE_COLUMNS = ["draws", "probability"]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def savings_csv(means: Sequence[float]) -> str:
    return _csv(SAVINGS_COLUMNS, [
        (i + 1, repr(float(m)), repr(float((1.0 - m) * 100.0))) for i, m in enumerate(means)
    ])


def baseline_csv(N: int, K: int, max_draws: int) -> str:
    return _csv(BASELINE_COLUMNS, [
        (n, repr(hypergeometric_success(N, K, n))) for n in range(0, max_draws + 1)
    ])

