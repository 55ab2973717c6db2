"""Point-and-permute garbling with free XOR, vectorised over many circuit copies.

Labels are 128-bit values stored as pairs of uint64 words; the low bit of
the first word is the permute (colour) bit.  AND gates carry four rows of
24 bytes: the encrypted output label plus a 64-bit zero tag checked during
evaluation.  Row pads come from fixed-key AES in a Matyas-Meyer-Oseas
style construction with a per-gate, per-row, per-copy tweak.
"""
from __future__ import annotations

import struct
import threading
import weakref
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from seco.gc.circuit import AND, NOT, XOR, BoolCircuit

LABEL_BYTES = 16
ROW_WORDS = 3
_FIXED_KEY = bytes(range(16))
_PAD2 = np.array([0, 1 << 63], dtype=np.uint64)


class GcError(ValueError):
    pass


_local = threading.local()


def _aes(blocks: np.ndarray) -> np.ndarray:
    """Fixed-key AES over an (..., 2) uint64 array of blocks."""
    enc = getattr(_local, "aes", None)
    if enc is None:
        enc = _local.aes = Cipher(algorithms.AES(_FIXED_KEY), modes.ECB()).encryptor()
    raw = np.ascontiguousarray(blocks, dtype="<u8").tobytes()
    return np.frombuffer(enc.update(raw), dtype="<u8").reshape(blocks.shape).astype(np.uint64)


def _rot1(x: np.ndarray) -> np.ndarray:
    """Rotate a 128-bit value left by one bit."""
    lo, hi = x[..., 0], x[..., 1]
    one, top = np.uint64(1), np.uint64(63)
    return np.stack([(lo << one) | (hi >> top), (hi << one) | (lo >> top)], axis=-1)


def _pad(a: np.ndarray, b: np.ndarray, tweak: np.ndarray) -> np.ndarray:
    """24-byte row pad H(a, b, tweak) as (..., 3) uint64 words."""
    k = a ^ _rot1(b) ^ tweak
    k2 = k ^ _PAD2
    enc = _aes(np.stack([k, k2]))
    h1 = enc[0] ^ k
    h2 = enc[1] ^ k2
    return np.concatenate([h1, h2[..., :1]], axis=-1)


def _tweaks(gate_index, rows, copies: np.ndarray) -> np.ndarray:
    """(gate*4 + row, copy) per label; gate_index and rows broadcast against copies."""
    lo = np.asarray(gate_index, dtype=np.uint64) * np.uint64(4) + np.asarray(rows, dtype=np.uint64)
    lo, hi = np.broadcast_arrays(lo, copies)
    out = np.empty(lo.shape + (2,), dtype=np.uint64)
    out[..., 0] = lo
    out[..., 1] = hi
    return out


@dataclass(frozen=True, eq=False)
class _AndBatch:
    gate: np.ndarray  # gate indices (tweak input)
    table: np.ndarray  # row of the garbled table
    a: np.ndarray
    b: np.ndarray
    out: np.ndarray


_SCHEDULES: "weakref.WeakKeyDictionary[BoolCircuit, list]" = weakref.WeakKeyDictionary()


def _schedule(circuit: BoolCircuit) -> list:
    """Gates grouped so every AND batch only reads wires produced earlier.

    Free gates stay individual (op, a, b, out) tuples in their original
    order; AND gates of equal AND-depth become one _AndBatch.
    """
    cached = _SCHEDULES.get(circuit)
    if cached is not None:
        return cached
    depth = np.zeros(circuit.num_wires, dtype=np.int64)
    free: dict[int, list] = {}
    ands: dict[int, list] = {}
    k = 0
    for gi, (op, a, b, out) in enumerate(circuit.gates):
        d = max(depth[a], depth[b] if b >= 0 else 0)
        if op == AND:
            ands.setdefault(d, []).append((gi, k, a, b, out))
            k += 1
            d += 1
        else:
            free.setdefault(d, []).append((op, a, b, out))
        depth[out] = d
    steps: list = []
    for d in range(int(depth.max(initial=0)) + 1):
        steps.extend(free.get(d, []))
        if d in ands:
            cols = np.array(ands[d], dtype=np.int64).T
            steps.append(_AndBatch(cols[0].astype(np.uint64), cols[1], cols[2], cols[3], cols[4]))
    _SCHEDULES[circuit] = steps
    return steps


def random_labels(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, np.iinfo(np.uint64).max, size=tuple(shape) + (2,), dtype=np.uint64, endpoint=True)


@dataclass(eq=False)
class GarbledCircuit:
    circuit: BoolCircuit
    copies: int
    tables: np.ndarray  # (and gates, copies, 4, 3)
    decode: dict  # output name -> (width, copies) uint8

    def to_bytes(self) -> bytes:
        c = self.circuit
        head = struct.pack("<32sHII", c.digest(), c.bitwidth, self.copies, self.tables.shape[0])
        dec = b"".join(np.packbits(self.decode[name].ravel()).tobytes() for name, _ in c.outputs)
        return head + np.ascontiguousarray(self.tables, dtype="<u8").tobytes() + dec

    @classmethod
    def from_bytes(cls, circuit: BoolCircuit, blob: bytes) -> "GarbledCircuit":
        digest, _width, copies, n_and = struct.unpack_from("<32sHII", blob, 0)
        if digest != circuit.digest():
            raise GcError("garbled circuit does not match the expected circuit")
        off = struct.calcsize("<32sHII")
        count = n_and * copies * 4 * ROW_WORDS
        tables = np.frombuffer(blob, dtype="<u8", count=count, offset=off).astype(np.uint64)
        tables = tables.reshape(n_and, copies, 4, ROW_WORDS)
        off += 8 * count
        decode = {}
        for name, wires in circuit.outputs:
            nbits = len(wires) * copies
            nbytes = (nbits + 7) // 8
            bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8, count=nbytes, offset=off))[:nbits]
            decode[name] = bits.reshape(len(wires), copies)
            off += nbytes
        return cls(circuit, copies, tables, decode)


@dataclass(eq=False)
class InputEncoding:
    """Garbler-side secret: the zero label of every input wire plus the global offset."""

    circuit: BoolCircuit
    zero: dict  # group name -> (width, copies, 2)
    delta: np.ndarray  # (2,)

    def encode(self, name: str, values) -> np.ndarray:
        """Active labels for `values` (one per copy): (width, copies, 2)."""
        z = self.zero[name]
        width = z.shape[0]
        vals = np.array([int(v) for v in np.asarray(values, dtype=object).reshape(-1)], dtype=np.uint64)
        bits = (vals[None, :] >> np.arange(width, dtype=np.uint64)[:, None]) & np.uint64(1)
        return z ^ (bits[..., None] * self.delta)

    def pairs(self, name: str) -> np.ndarray:
        """Both labels for each wire/copy: (width, copies, 2 choices, 2 words)."""
        z = self.zero[name]
        return np.stack([z, z ^ self.delta], axis=2)


def garble(circuit: BoolCircuit, rng: np.random.Generator, copies: int = 1) -> tuple[GarbledCircuit, InputEncoding]:
    delta = random_labels(rng, ())
    delta[0] |= np.uint64(1)
    wires = np.zeros((circuit.num_wires, copies, 2), dtype=np.uint64)
    zero = {}
    for g in circuit.inputs:
        z = random_labels(rng, (len(g.wires), copies))
        zero[g.name] = z
        wires[list(g.wires)] = z
    n_and = circuit.and_count
    tables = np.empty((n_and, copies, 4, ROW_WORDS), dtype=np.uint64)
    fresh = random_labels(rng, (n_and, copies))
    copy_idx = np.arange(copies, dtype=np.uint64)
    one = np.uint64(1)
    row_a = np.array([0, 0, 1, 1], dtype=np.uint64)[:, None, None]
    row_b = np.array([0, 1, 0, 1], dtype=np.uint64)[:, None, None]
    rows = np.arange(4, dtype=np.uint64)[:, None, None]
    for step in _schedule(circuit):
        if not isinstance(step, _AndBatch):
            op, a, b, out = step
            wires[out] = wires[a] ^ (wires[b] if op == XOR else delta)
            continue
        a0, b0 = wires[step.a], wires[step.b]  # (m, copies, 2)
        va = row_a ^ (a0[..., 0] & one)  # (4, m, copies)
        vb = row_b ^ (b0[..., 0] & one)
        la = a0 ^ va[..., None] * delta
        lb = b0 ^ vb[..., None] * delta
        c0 = fresh[step.table]
        pads = _pad(la, lb, _tweaks(step.gate[:, None], rows, copy_idx))  # (4, m, copies, 3)
        pads[..., :2] ^= c0 ^ (va & vb)[..., None] * delta
        tables[step.table] = pads.transpose(1, 2, 0, 3)
        wires[step.out] = c0
    decode = {}
    for name, ws in circuit.outputs:
        decode[name] = (wires[list(ws), :, 0] & one).astype(np.uint8)
    return GarbledCircuit(circuit, copies, tables, decode), InputEncoding(circuit, zero, delta)


def evaluate(gc: GarbledCircuit, labels: dict) -> dict:
    """Evaluate with one active label per input wire; returns decoded outputs per copy."""
    circuit = gc.circuit
    wires = np.zeros((circuit.num_wires, gc.copies, 2), dtype=np.uint64)
    for g in circuit.inputs:
        if g.name not in labels:
            raise GcError(f"missing labels for input {g.name!r}")
        arr = np.asarray(labels[g.name], dtype=np.uint64)
        if arr.shape != (len(g.wires), gc.copies, 2):
            raise GcError(f"labels for {g.name!r} have shape {arr.shape}")
        wires[list(g.wires)] = arr
    copy_idx = np.arange(gc.copies, dtype=np.uint64)
    sel = np.arange(gc.copies)
    one = np.uint64(1)
    for step in _schedule(circuit):
        if not isinstance(step, _AndBatch):
            op, a, b, out = step
            wires[out] = wires[a] ^ wires[b] if op == XOR else wires[a]
            continue
        la, lb = wires[step.a], wires[step.b]
        row = ((la[..., 0] & one) << one) | (lb[..., 0] & one)  # (m, copies)
        pad = _pad(la, lb, _tweaks(step.gate[:, None], row, copy_idx))
        plain = gc.tables[step.table[:, None], sel, row.astype(np.int64)] ^ pad
        if np.any(plain[..., 2]):
            bad = int(step.gate[np.nonzero(plain[..., 2].any(axis=1))[0][0]])
            raise GcError(f"garbled row failed authentication at gate {bad}")
        wires[step.out] = plain[..., :2]
    out = {}
    for name, ws in circuit.outputs:
        bits = (wires[list(ws), :, 0] & one).astype(np.uint64) ^ gc.decode[name]
        acc = (bits << np.arange(len(ws), dtype=np.uint64)[:, None]).sum(axis=0, dtype=np.uint64)
        out[name] = acc.astype(object)
    return out


def labels_to_bytes(labels: np.ndarray) -> bytes:
    return np.ascontiguousarray(labels, dtype="<u8").tobytes()


def labels_from_bytes(blob: bytes, width: int, copies: int) -> np.ndarray:
    arr = np.frombuffer(blob, dtype="<u8").astype(np.uint64)
    if arr.size != width * copies * 2:
        raise GcError("label blob has the wrong size")
    return arr.reshape(width, copies, 2)
