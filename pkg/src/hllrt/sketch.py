"""HyperLogLog sketch: hashing, insertion, estimation and merging.

The sketch is an array of R registers, each keeping the maximum rank
(one plus the leading-zero count of the value hash) among the elements
routed to it. Cardinality is estimated from the inverse harmonic mean
of the register contents, switching to a linear-counting estimate while
the count of zero registers still carries more information.

The hot loop lives in ``hllrt._kernel`` (compiled extension when
available, pure Python otherwise); this module owns parameters,
validation, serialization and the merge/witness algebra.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from ._kernel import BACKEND, RegisterFile, hash64

__all__ = [
    "HllParams",
    "HllSketch",
    "HashSplit",
    "alpha_for_registers",
    "hash_split",
    "merge",
    "witness_subset",
    "kernel_backend",
]

_MASK64 = (1 << 64) - 1
_SNAPSHOT_MAGIC = b"HLLS"
_SNAPSHOT_HEADER = struct.Struct("<4sIBBQ")  # magic, R, width, salted, salt

MIN_REGISTERS = 16
MAX_REGISTERS = 1 << 20


def alpha_for_registers(register_count: int) -> float:
    """Bias-correction constant for the harmonic-mean estimate.

    The small-R values (16/32/64) are the classical ones; larger R uses
    the asymptotic formula. Pinned by the accuracy acceptance test.
    """
    if register_count == 16:
        return 0.673
    if register_count == 32:
        return 0.697
    if register_count == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / register_count)


def kernel_backend() -> str:
    """Which kernel is active: "compiled" or "pure"."""
    return BACKEND


@dataclass(frozen=True)
class HllParams:
    """Sketch configuration.

    register_count must be a power of two in [16, 2**20]; register_width
    (bits per register) in [4, 8]. ``salt`` keys the hash functions: two
    sketches can only be merged when they share R, width and salt.
    ``switch_factor`` sets the estimator crossover at switch_factor * R.
    """

    register_count: int
    register_width: int = 6
    salt: int | None = None
    switch_factor: float = 2.5

    def __post_init__(self) -> None:
        m = self.register_count
        if not isinstance(m, int) or m & (m - 1) or not MIN_REGISTERS <= m <= MAX_REGISTERS:
            raise ValueError(
                f"register_count must be a power of two in "
                f"[{MIN_REGISTERS}, {MAX_REGISTERS}], got {self.register_count!r}"
            )
        if self.register_width not in (4, 5, 6, 7, 8):
            raise ValueError(
                f"register_width must be in [4, 8], got {self.register_width!r}"
            )
        if self.salt is not None and not 0 <= self.salt <= _MASK64:
            raise ValueError("salt must be a 64-bit unsigned value")
        if not self.switch_factor > 0:
            raise ValueError("switch_factor must be positive")

    @property
    def salted(self) -> bool:
        return self.salt is not None

    @property
    def salt_value(self) -> int:
        return self.salt or 0

    @property
    def index_bits(self) -> int:
        return self.register_count.bit_length() - 1

    @property
    def max_register(self) -> int:
        return (1 << self.register_width) - 1

    @property
    def alpha(self) -> float:
        return alpha_for_registers(self.register_count)


@dataclass(frozen=True)
class HashSplit:
    """Register index and rank an element maps to."""

    index: int
    rank: int


def hash_split(element: bytes, params: HllParams) -> HashSplit:
    """Split an element's 64-bit hash into (register index, rank).

    The low log2(R) bits select the register; the rank is one plus the
    leading-zero count of the remaining bits, clamped to the register's
    maximum storable value.
    """
    if not element:
        raise ValueError("element must be non-empty")
    h = hash64(element, params.salt_value)
    bits = params.index_bits
    index = h & (params.register_count - 1)
    g = h >> bits
    rank = 1 + (64 - bits) - g.bit_length()
    return HashSplit(index, min(rank, params.max_register, 63))


def _make_core(params: HllParams) -> RegisterFile:
    return RegisterFile(
        params.register_count,
        params.register_width,
        params.salt_value,
        params.alpha,
        params.switch_factor,
    )


class HllSketch:
    """A HyperLogLog register array plus its parameters.

    Value-like and single-writer: no internal locking, safe to hand
    between threads when not mutated concurrently; merge is pure.
    """

    __slots__ = ("params", "_core")

    def __init__(self, params: HllParams) -> None:
        self.params = params
        self._core = _make_core(params)

    # -- updates ---------------------------------------------------------

    def insert(self, element: bytes) -> bool:
        """Insert an element; True iff a register value increased."""
        if not element:
            raise ValueError("element must be non-empty")
        return self._core.insert(element) > 0

    def insert_increment(self, element: bytes) -> int:
        """Insert an element; return the register increment (0 if none)."""
        if not element:
            raise ValueError("element must be non-empty")
        return self._core.insert(element)

    def insert_many(self, elements: Iterable[bytes]) -> int:
        """Insert a batch of elements; return how many changed a register."""
        return self._core.insert_many(elements)

    # -- estimates -------------------------------------------------------

    def raw_estimate(self) -> float:
        """Harmonic-mean estimate alpha_R * R**2 / Z, Z = sum(2**-r_i)."""
        return self._core.raw_estimate()

    def linear_counting_estimate(self) -> float:
        """Low-range estimate R * ln(R / V) from the V zero registers.

        Falls through to the raw estimate when no register is zero.
        """
        return self._core.linear_estimate()

    def estimate(self) -> int:
        """Integer cardinality estimate with the low-range crossover."""
        return self._core.estimate()

    def z_denominator(self) -> float:
        """Current value of Z = sum(2**-r_i)."""
        return self._core.z_sum()

    def zero_register_count(self) -> int:
        return self._core.zero_registers()

    # -- register access -------------------------------------------------

    @property
    def registers(self) -> bytes:
        return self._core.dump_registers()

    def get_register(self, index: int) -> int:
        return self._core.get_register(index)

    def set_register(self, index: int, value: int) -> None:
        """Directly set a register (deserialization / test plumbing)."""
        self._core.set_register(index, value)

    def reset(self) -> None:
        self._core.reset()

    def copy(self) -> "HllSketch":
        clone = HllSketch(self.params)
        clone._core.load_registers(self._core.dump_registers())
        return clone

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HllSketch):
            return NotImplemented
        return self.params == other.params and self.registers == other.registers

    def __repr__(self) -> str:
        return (
            f"HllSketch(R={self.params.register_count}, "
            f"width={self.params.register_width}, estimate={self.estimate()})"
        )

    # -- snapshots ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Flat little-endian snapshot: HLLS, u32 R, u8 width, u8 salted,
        u64 salt, then R register bytes."""
        p = self.params
        header = _SNAPSHOT_HEADER.pack(
            _SNAPSHOT_MAGIC,
            p.register_count,
            p.register_width,
            1 if p.salted else 0,
            p.salt_value,
        )
        return header + self.registers

    @classmethod
    def from_bytes(cls, data: bytes, switch_factor: float = 2.5) -> "HllSketch":
        if len(data) < _SNAPSHOT_HEADER.size:
            raise ValueError("snapshot truncated")
        magic, m, width, salted, salt = _SNAPSHOT_HEADER.unpack_from(data)
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        body = data[_SNAPSHOT_HEADER.size :]
        if len(body) != m:
            raise ValueError(f"expected {m} register bytes, got {len(body)}")
        params = HllParams(
            register_count=m,
            register_width=width,
            salt=salt if salted else None,
            switch_factor=switch_factor,
        )
        sketch = cls(params)
        sketch._core.load_registers(body)
        return sketch

    def to_json(self) -> str:
        p = self.params
        return json.dumps(
            {
                "magic": _SNAPSHOT_MAGIC.decode("ascii"),
                "register_count": p.register_count,
                "register_width": p.register_width,
                "salted": p.salted,
                "salt": p.salt_value,
                "registers": list(self.registers),
            }
        )

    @classmethod
    def from_json(cls, text: str, switch_factor: float = 2.5) -> "HllSketch":
        obj = json.loads(text)
        if obj.get("magic") != _SNAPSHOT_MAGIC.decode("ascii"):
            raise ValueError("bad snapshot magic")
        params = HllParams(
            register_count=obj["register_count"],
            register_width=obj["register_width"],
            salt=obj["salt"] if obj["salted"] else None,
            switch_factor=switch_factor,
        )
        sketch = cls(params)
        sketch._core.load_registers(bytes(obj["registers"]))
        return sketch


def merge(a: HllSketch, b: HllSketch) -> HllSketch:
    """Union of two sketches by elementwise register maximum.

    Requires identical parameters: merging sketches with different salts
    (or R / width) estimates nothing meaningful.
    """
    if a.params != b.params:
        raise ValueError(
            f"cannot merge sketches with different parameters: "
            f"{a.params} vs {b.params}"
        )
    result = a.copy()
    result._core.merge_registers(b.registers)
    return result


def witness_subset(elements: Sequence[bytes], params: HllParams) -> list[bytes]:
    """At most R elements of the stream that reproduce its register array.

    For each register this picks the first element achieving the
    register's final value; inserting the returned subset into a fresh
    sketch yields the same registers (hence the same estimate) as the
    full stream.
    """
    final = HllSketch(params)
    final.insert_many(elements)
    target = final.registers
    witnesses: dict[int, bytes] = {}
    for element in elements:
        split = hash_split(element, params)
        if split.index not in witnesses and split.rank == target[split.index]:
            witnesses[split.index] = element
    return [witnesses[i] for i in sorted(witnesses)]
