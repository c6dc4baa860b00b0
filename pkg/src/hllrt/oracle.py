"""Black-box cardinality oracle: the attacker's only view of a sketch.

The oracle contract is deliberately tiny: reset, insert, integer
estimate. The attack code is written against this interface alone, so
anything implementing it (in-process sketch, remote Redis key) is a
valid target.
"""

from __future__ import annotations

import abc

from .sketch import HllParams, HllSketch

__all__ = ["CardinalityOracle", "InProcessOracle", "CountingOracle", "make_oracle"]


class CardinalityOracle(abc.ABC):
    """reset / insert / estimate — nothing else is observable."""

    @abc.abstractmethod
    def reset(self) -> None:
        """Return the target to its empty state."""

    @abc.abstractmethod
    def insert(self, element: bytes) -> None:
        """Insert one element."""

    @abc.abstractmethod
    def estimate(self) -> int:
        """Current integer cardinality estimate (side-effect free)."""


class InProcessOracle(CardinalityOracle):
    """Oracle backed by a local HllSketch.

    Oracles built from equal params share hash functions, matching the
    adversarial assumption that the attacker can instantiate sketches
    hash-compatible with the target.
    """

    def __init__(self, params: HllParams) -> None:
        self._sketch = HllSketch(params)
        # Bound kernel methods keep the per-query overhead flat; the
        # attack issues millions of estimate calls.
        self._insert = self._sketch._core.insert
        self._estimate = self._sketch._core.estimate

    @property
    def sketch(self) -> HllSketch:
        """The underlying sketch (evaluation plumbing, not attack surface)."""
        return self._sketch

    def reset(self) -> None:
        self._sketch.reset()

    def insert(self, element: bytes) -> None:
        if not element:
            raise ValueError("element must be non-empty")
        self._insert(element)

    def estimate(self) -> int:
        return self._estimate()


def make_oracle(params: HllParams) -> InProcessOracle:
    """Fresh in-process oracle; estimate() == 0 until something is inserted."""
    return InProcessOracle(params)


class CountingOracle(CardinalityOracle):
    """Wrapper counting every interface call made against another oracle.

    Used to instrument attack cost (oracle insertions are the unit the
    complexity bound is stated in) and to demonstrate that the attack
    touches nothing beyond the black-box interface: this wrapper exposes
    only the three oracle methods plus counters.
    """

    def __init__(self, inner: CardinalityOracle) -> None:
        self._inner = inner
        self.insertions = 0
        self.estimate_queries = 0
        self.resets = 0

    def reset(self) -> None:
        self.resets += 1
        self._inner.reset()

    def insert(self, element: bytes) -> None:
        self.insertions += 1
        self._inner.insert(element)

    def estimate(self) -> int:
        self.estimate_queries += 1
        return self._inner.estimate()
