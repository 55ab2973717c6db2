"""Party ids, phases, message kinds and payload codecs."""
from __future__ import annotations

import struct
from enum import IntEnum

import numpy as np

from seco import bfv


class PartyId(IntEnum):
    USER = 0
    A = 1
    B = 2
    C = 3


class Phase(IntEnum):
    SETUP = 0
    PREPROCESS = 1
    ONLINE = 2


class Kind(IntEnum):
    # setup
    P1_SEED = 1
    PK_SHARE = 2
    CPK = 3
    WEIGHT_SHARES = 4
    # preprocessing: keys
    USER_PK = 10
    USER_PK_FWD = 11
    CPK_USER = 12
    # preprocessing: remote linear layers under the collective key
    R_CT = 20
    F_CT = 21
    S_CT = 22
    FOLD_REQ = 23
    FOLD_SHARE = 24
    DEC_REQ = 25
    PARTIAL_DEC = 26
    # preprocessing: gateway linear layers under the user's key
    GW_R_CT = 30
    GW_LIN_CT = 31
    # preprocessing: garbled circuits
    GC_TABLES = 40
    GC_LABELS = 41
    BASE_OT_HELLO = 42
    BASE_OT_REPLY = 43
    BASE_OT_PAYLOAD = 44
    GC_LABELS_FWD = 45
    OT_EXT_REQUEST = 46
    OT_EXT_REPLY = 47
    # online
    MASKED_INPUT = 50
    GW_A_LABELS = 51
    GW_MASKED_OUT = 52
    TRANSITION = 53
    RM_LABELS = 54
    RM_LABELS_FWD = 55
    RM_MASKED_OUT = 56
    OUT_SHARE_CT = 57
    OUT_CT = 58
    OUT_PLAIN = 59
    PROBE_CT = 60
    PROBE_PD = 61


class ProtocolError(RuntimeError):
    """Raised when a party sees an unexpected message or an inconsistent state."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


def pack_vector(v) -> bytes:
    arr = np.array([int(x) for x in np.asarray(v, dtype=object).reshape(-1)], dtype="<u8")
    return arr.tobytes()


def unpack_vector(blob: bytes) -> np.ndarray:
    return np.frombuffer(blob, dtype="<u8").astype(np.int64).astype(object)


def pack_matrix(m) -> bytes:
    m = np.asarray(m, dtype=np.int64)
    return struct.pack("<II", *m.shape) + np.ascontiguousarray(m, dtype="<i8").tobytes()


def unpack_matrix(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    rows, cols = struct.unpack_from("<II", blob, offset)
    offset += 8
    m = np.frombuffer(blob, dtype="<i8", count=rows * cols, offset=offset).astype(np.int64).reshape(rows, cols)
    return m, offset + 8 * rows * cols


def pack_blobs(blobs) -> bytes:
    out = []
    for b in blobs:
        out.append(struct.pack("<I", len(b)))
        out.append(b)
    return b"".join(out)


def unpack_blobs(blob: bytes) -> list[bytes]:
    out, off = [], 0
    while off < len(blob):
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        out.append(blob[off:off + n])
        off += n
    return out


def pack_cts(cts) -> bytes:
    return pack_blobs(ct.to_bytes() for ct in cts)


def unpack_cts(blob: bytes) -> list[bfv.Ciphertext]:
    return [bfv.Ciphertext.from_bytes(b) for b in unpack_blobs(blob)]


def pack_elements(params_name: str, elements) -> bytes:
    return pack_blobs(bfv.serialize_elements(params_name, [e]) for e in elements)


def unpack_elements(blob: bytes):
    return [bfv.deserialize_elements(b)[1][0] for b in unpack_blobs(blob)]
