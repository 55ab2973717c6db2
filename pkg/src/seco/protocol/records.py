"""Per-party share records, view logs and slot-layout helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from seco.protocol.messages import ProtocolError

GATEWAY, TRANSITION, REMOTE = "gateway", "transition", "remote"


@dataclass(eq=False)
class ShareRecord:
    """Preprocessed material a party holds for one stage; consumed once online."""

    party: str
    stage: int
    layer_class: str
    values: dict
    consumed: bool = False

    def take(self) -> dict:
        if self.consumed:
            raise ProtocolError(f"share record for stage {self.stage} already used", self.stage)
        self.consumed = True
        return self.values


class RecordBook:
    def __init__(self, party: str):
        self.party = party
        self.records: dict[int, ShareRecord] = {}
        self.history: list[ShareRecord] = []

    def put(self, stage: int, layer_class: str, **values) -> ShareRecord:
        rec = ShareRecord(self.party, stage, layer_class, values)
        self.records[stage] = rec
        self.history.append(rec)
        return rec

    def get(self, stage: int) -> ShareRecord:
        rec = self.records.get(stage)
        if rec is None:
            raise ProtocolError(f"{self.party} has no preprocessed material for stage {stage}", stage)
        return rec

    def take(self, stage: int) -> dict:
        return self.get(stage).take()

    def require_fresh(self, stages):
        for st in stages:
            rec = self.records.get(st)
            if rec is None or rec.consumed:
                raise ProtocolError(
                    f"{self.party}: stage {st} has no unused preprocessing; run preprocessing again", st)

    def clear(self):
        self.records = {}


@dataclass
class ViewEntry:
    phase: str
    stage: int
    name: str
    value: np.ndarray


@dataclass
class ViewLog:
    """Plaintext values a party holds during a run, for hygiene audits."""

    party: str
    entries: list = field(default_factory=list)
    enabled: bool = True

    def add(self, phase: str, stage: int, name: str, value):
        if self.enabled:
            self.entries.append(ViewEntry(phase, stage, name, np.asarray(value, dtype=object).copy()))


def masked(x, r, t: int) -> np.ndarray:
    return np.mod(np.asarray(x, dtype=object) - np.asarray(r, dtype=object), t)


def sample_mask(rng: np.random.Generator, size, t: int, zero: bool = False) -> np.ndarray:
    """Uniform vector over Z_t (all zeros under the test-only zero-randomness switch)."""
    if zero:
        return np.zeros(size, dtype=object)
    return rng.integers(0, t, size=size, dtype=np.int64).astype(object)


def matvec(m: np.ndarray, v, t: int) -> np.ndarray:
    return np.mod(np.asarray(m, dtype=object).dot(np.asarray(v, dtype=object)), t)


# -- expanded slot layout for products under the collective key -----------------
#
# A w x q matrix is cut into chunks of `rows = n // q` rows.  Slot j*q + i of a
# chunk holds F[j][i]; the mask ciphertext repeats r in every row, so the
# slot-wise product holds F[j][i] r[i] and a row sum recovers (F r)_j.

def rows_per_chunk(q: int, n: int) -> int:
    if q > n:
        raise ProtocolError(f"layer input size {q} exceeds the {n} plaintext slots")
    return n // q


def chunk_bounds(w: int, q: int, n: int) -> list[tuple[int, int]]:
    step = rows_per_chunk(q, n)
    return [(a, min(a + step, w)) for a in range(0, w, step)]


def expand_vector(r, q: int, n: int) -> np.ndarray:
    return np.tile(np.asarray(r, dtype=object), rows_per_chunk(q, n))


def expand_matrix(f_chunk) -> np.ndarray:
    return np.asarray(f_chunk, dtype=object).reshape(-1)


def spread_rowsum(s_chunk, q: int, t: int, rng: np.random.Generator, zero: bool = False) -> np.ndarray:
    """Per-slot values whose row sums equal s_chunk, uniform otherwise."""
    rows = len(s_chunk)
    if zero or q == 1:
        out = np.zeros((rows, q), dtype=object)
        out[:, 0] = np.asarray(s_chunk, dtype=object)
        return out.reshape(-1)
    out = rng.integers(0, t, size=(rows, q), dtype=np.int64).astype(object)
    out[:, -1] = np.mod(np.asarray(s_chunk, dtype=object) - out[:, :-1].sum(axis=1), t)
    return out.reshape(-1)


def collapse_rows(slots, rows: int, q: int, t: int) -> np.ndarray:
    arr = np.asarray(slots, dtype=object)[: rows * q].reshape(rows, q)
    return np.mod(arr.sum(axis=1), t)
