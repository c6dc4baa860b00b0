"""Closed-form predictions for the attack's phase-1 behavior.

These calculators quantify why the greedy first pass misses some of the
per-register maxima and what that costs the final estimate:

* during the low-range (linear counting) regime only the first element
  per register is visible, so the largest-rank element of a register is
  missed when it lands early but not first;
* once the harmonic-mean estimate is in use, a register update changes
  the denominator Z by delta = 2**-c_old - 2**-c_new, which moves the
  rounded integer estimate only when the resulting increment reaches
  0.5.

All functions are pure; ``alpha`` defaults to the same bias-correction
constant the sketch uses for that register count.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from .sketch import alpha_for_registers

__all__ = [
    "expected_missed_lpca",
    "z_delta",
    "estimate_increment",
    "IncrementPrediction",
    "undetectable_delta_threshold",
    "miss_condition_register_value",
    "expected_register_value",
    "predicted_phase1_ratio",
]


def expected_missed_lpca(register_count: int, distinct_items: int) -> float:
    """Expected count of per-register maxima hidden by the low-range regime.

    Approximately 1.5 * R**2 / N for a stream of N distinct items: R
    times the chance that a register's maximum arrives during the
    linear-counting window without being the register's first element.
    """
    if distinct_items < register_count:
        raise ValueError(
            "approximation requires at least as many items as registers"
        )
    return 1.5 * register_count * register_count / distinct_items


def z_delta(c_old: int, c_new: int) -> float:
    """Change of the denominator Z when a register moves c_old -> c_new."""
    if c_old < 0 or c_new < c_old:
        raise ValueError("requires 0 <= c_old <= c_new")
    return 2.0**-c_old - 2.0**-c_new


class IncrementPrediction(NamedTuple):
    exact: float
    approx: float


def estimate_increment(
    delta: float,
    estimate: float,
    register_count: int,
    alpha: float | None = None,
    z: float | None = None,
) -> IncrementPrediction:
    """Estimate change caused by a register update of denominator-delta.

    exact  = alpha * R**2 * delta / (Z * (Z - delta))
    approx = delta * estimate**2 / (alpha * R**2)

    ``z`` defaults to alpha * R**2 / estimate (the denominator consistent
    with the given estimate). The approximation converges on the exact
    value as delta/Z -> 0.
    """
    if alpha is None:
        alpha = alpha_for_registers(register_count)
    alpha_r2 = alpha * register_count * register_count
    if z is None:
        if estimate <= 0:
            raise ValueError("estimate must be positive when z is not given")
        z = alpha_r2 / estimate
    if not 0 < delta < z:
        raise ValueError(f"requires 0 < delta < Z, got delta={delta} Z={z}")
    exact = alpha_r2 * delta / (z * (z - delta))
    approx = delta * estimate * estimate / alpha_r2
    return IncrementPrediction(exact, approx)


def undetectable_delta_threshold(
    register_count: int, estimate: float, alpha: float | None = None
) -> float:
    """Largest denominator-delta whose rounded estimate change stays < 0.5."""
    if estimate < 1:
        raise ValueError("estimate must be at least 1")
    if alpha is None:
        alpha = alpha_for_registers(register_count)
    return 0.5 * alpha * register_count * register_count / (estimate * estimate)


def miss_condition_register_value(
    register_count: int, estimate: float, alpha: float | None = None
) -> float:
    """Register value above which an update can escape the rounded estimate.

    Solving 2**-c_old < 0.5 * alpha * R**2 / estimate**2 for c_old gives
    c_old > 1 - log2(alpha) + 2 * log2(estimate / R). Compare with
    ``expected_register_value``: the gap is what makes such misses rare.
    """
    if estimate < register_count:
        raise ValueError("requires estimate >= register_count")
    if alpha is None:
        alpha = alpha_for_registers(register_count)
    return 1.0 - math.log2(alpha) + 2.0 * math.log2(estimate / register_count)


def expected_register_value(register_count: int, estimate: float) -> float:
    """Typical register value when the sketch estimates ``estimate``."""
    if estimate < register_count:
        raise ValueError("requires estimate >= register_count")
    return 1.0 + math.log2(estimate / register_count)


def predicted_phase1_ratio(
    register_count: int, target_cardinality: int, z_full: float
) -> float:
    """Predicted ratio of the phase-1 set's estimate to the full stream's.

    Roughly R**2/C registers lose their maximum to the low-range window
    and revert to the first-arriving element (average value close to 2,
    contributing 2**-2 each instead of their previous average share of
    about R/C). Adding that correction to the full-stream denominator
    Z gives the predicted attacked estimate, hence the ratio
    z_full / (z_full + (R**2/C) * (2**-2 - R/C)).
    """
    if target_cardinality < 5 * register_count:
        raise ValueError("approximation requires target_cardinality >= 5 * R")
    if z_full <= 0:
        raise ValueError("z_full must be positive")
    affected = register_count * register_count / target_cardinality
    adjusted = z_full + affected * (0.25 - register_count / target_cardinality)
    return z_full / adjusted
