"""Per-slot FIFO semantic caches and the index-substitution protocol.

Both ends of the link run one of these: the transmitter plans which slot
vectors can be replaced by cache indices (cosine similarity against its
own history), the receiver resolves those indices against its cache and
re-inserts whatever arrived over the channel.  Cache positions are
logical FIFO positions (0 = oldest surviving entry), computed identically
on both sides, so an index is meaningful without timestamps.

Hits never refresh recency; only missed (fully transmitted) vectors are
inserted.  The receiver therefore accumulates noisy copies of what the
transmitter stored clean, and the two caches stay positionally aligned
as long as every index resolves.  A dangling index means the protocol
state has diverged, which is fatal: :class:`ProtocolDesyncError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .latent import SemanticLatent

NEVER = math.inf  # threshold sentinel: similarity can never reach it


class ProtocolDesyncError(RuntimeError):
    """Raised when an index references a cache position that does not exist."""


@dataclass(frozen=True)
class ThresholdProfile:
    """Per-slot similarity thresholds; ``NEVER`` disables caching for a slot."""

    gamma: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(g) for g in self.gamma)
        for i, g in enumerate(vals):
            if math.isnan(g):
                raise ValueError(f"threshold {i} is NaN")
            if g != NEVER and not -1.0 <= g <= 1.0:
                raise ValueError(f"threshold {i} outside [-1, 1]: {g}")
        object.__setattr__(self, "gamma", vals)

    def __len__(self) -> int:
        return len(self.gamma)

    def is_never(self, i: int) -> bool:
        return self.gamma[i] == NEVER

    @classmethod
    def uniform(cls, n_slots: int, value: float) -> "ThresholdProfile":
        return cls(tuple([value] * n_slots))

    @classmethod
    def never(cls, n_slots: int) -> "ThresholdProfile":
        return cls(tuple([NEVER] * n_slots))


class CacheMemory:
    """N_S independent ring buffers of up to N_C vectors each, FIFO eviction."""

    def __init__(self, n_slots: int, capacity: int, slot_len: int):
        if n_slots < 1 or capacity < 1 or slot_len < 1:
            raise ValueError("n_slots, capacity and slot_len must be positive")
        self.n_slots = n_slots
        self.capacity = capacity
        self.slot_len = slot_len
        self._slots: list[list[np.ndarray]] = [[] for _ in range(n_slots)]
        self._inserted: list[int] = [0] * n_slots

    def occupancy(self, i: int) -> int:
        return len(self._slots[i])

    def entries(self, i: int) -> list[np.ndarray]:
        """Entries of slot i in logical order (0 = oldest surviving)."""
        return list(self._slots[i])

    def entry(self, i: int, j: int) -> np.ndarray:
        return self._slots[i][j]

    def insert_count(self, i: int) -> int:
        return self._inserted[i]

    def insert(self, i: int, vec: np.ndarray) -> None:
        vec = np.array(vec, dtype=np.float64, copy=True)
        if vec.shape != (self.slot_len,):
            raise ValueError(f"entry shape {vec.shape} != ({self.slot_len},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError("non-finite cache entry")
        slot = self._slots[i]
        slot.append(vec)
        if len(slot) > self.capacity:
            slot.pop(0)
        self._inserted[i] += 1

    def total_entries(self) -> int:
        return sum(len(s) for s in self._slots)

    def copy(self) -> "CacheMemory":
        dup = CacheMemory(self.n_slots, self.capacity, self.slot_len)
        dup._slots = [[v.copy() for v in slot] for slot in self._slots]
        dup._inserted = list(self._inserted)
        return dup

    def equals(self, other: "CacheMemory") -> bool:
        """Bit-exact equality of contents, order and counters."""
        if (self.n_slots, self.capacity, self.slot_len) != (
            other.n_slots,
            other.capacity,
            other.slot_len,
        ):
            return False
        if self._inserted != other._inserted:
            return False
        for a, b in zip(self._slots, other._slots):
            if len(a) != len(b):
                return False
            for u, v in zip(a, b):
                if not np.array_equal(u, v):
                    return False
        return True


@dataclass
class TransmissionPlan:
    """Partition of one latent's slots into transmitted vectors and cache hits."""

    kept: list[tuple[int, np.ndarray]] = field(default_factory=list)
    hits: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def n_s(self) -> int:
        return len(self.kept)

    def kept_matrix(self) -> np.ndarray:
        if not self.kept:
            return np.zeros((0, 0))
        return np.stack([v for _, v in self.kept])

    def with_kept_vectors(self, vectors: np.ndarray) -> "TransmissionPlan":
        """Same partition, different payload vectors (e.g. after block PN)."""
        if len(vectors) != len(self.kept):
            raise ValueError("vector count does not match kept slots")
        kept = [(i, np.asarray(v, dtype=np.float64)) for (i, _), v in zip(self.kept, vectors)]
        return TransmissionPlan(kept=kept, hits=list(self.hits))


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; 0 if either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    uu = float(np.dot(u, u))
    vv = float(np.dot(v, v))
    if uu == 0.0 or vv == 0.0:
        return 0.0
    # sqrt of the product (one rounding, not two) keeps exact cases exact
    return float(np.clip(float(np.dot(u, v)) / math.sqrt(uu * vv), -1.0, 1.0))


def lookup(cache: CacheMemory, i: int, z_i: np.ndarray) -> tuple[int, float] | None:
    """Most-similar entry of slot i, or None if the slot is empty.

    Ties go to the smallest index (the oldest entry).
    """
    if not 0 <= i < cache.n_slots:
        raise ValueError(f"slot index {i} out of range")
    best: tuple[int, float] | None = None
    for j in range(cache.occupancy(i)):
        sim = cosine(z_i, cache.entry(i, j))
        if best is None or sim > best[1]:
            best = (j, sim)
    return best


def plan_transmission(
    z: SemanticLatent, cache: CacheMemory, thresholds: ThresholdProfile
) -> TransmissionPlan:
    """Decide per slot whether to transmit the vector or an index.

    Slot i is a hit iff its best cached similarity reaches gamma_i; every
    slot lands in exactly one of the two lists.  n_s counts the misses,
    i.e. the vectors that still need channel symbols.
    """
    if len(thresholds) != z.n_slots:
        raise ValueError("threshold count != slot count")
    if cache.n_slots != z.n_slots or cache.slot_len != z.slot_len:
        raise ValueError("cache dimensions do not match latent")
    plan = TransmissionPlan()
    for i in range(z.n_slots):
        found = None if thresholds.is_never(i) else lookup(cache, i, z.row(i))
        if found is not None and found[1] >= thresholds.gamma[i]:
            plan.hits.append((i, found[0], found[1]))
        else:
            plan.kept.append((i, z.row(i).copy()))
    return plan


def tx_update(cache: CacheMemory, plan: TransmissionPlan) -> None:
    """Insert exactly the missed vectors; hits leave the cache untouched."""
    for i, vec in plan.kept:
        cache.insert(i, vec)


def rx_reconstruct(
    received: np.ndarray | list[np.ndarray],
    hits: list[tuple[int, int, float]] | list[tuple[int, int]],
    cache: CacheMemory,
) -> SemanticLatent:
    """Rebuild the full latent from received vectors plus cache references,
    then store the received vectors in the receiver cache (FIFO).

    ``received`` holds the missed vectors in ascending slot order.  A hit
    referencing an unoccupied position is a protocol desync and fatal.
    """
    hit_slots = {h[0]: h[1] for h in hits}
    if len(hit_slots) != len(hits):
        raise ProtocolDesyncError("duplicate hit slot in index list")
    miss_slots = [i for i in range(cache.n_slots) if i not in hit_slots]
    received = [np.asarray(v, dtype=np.float64) for v in received]
    if len(received) != len(miss_slots):
        raise ProtocolDesyncError(
            f"received {len(received)} vectors for {len(miss_slots)} missed slots"
        )
    rows = np.zeros((cache.n_slots, cache.slot_len))
    for i, j in hit_slots.items():
        if not 0 <= i < cache.n_slots:
            raise ProtocolDesyncError(f"hit references unknown slot {i}")
        if j >= cache.occupancy(i) or j < 0:
            raise ProtocolDesyncError(
                f"hit references cache position {j} of slot {i} "
                f"(occupancy {cache.occupancy(i)})"
            )
        rows[i] = cache.entry(i, j)
    for i, vec in zip(miss_slots, received):
        rows[i] = vec
    # Inserting after resolution mirrors the transmitter's plan-then-update
    # order; hit and miss slots are disjoint so this cannot shift any j.
    for i, vec in zip(miss_slots, received):
        cache.insert(i, vec)
    return SemanticLatent(rows)
