"""Batched 1-of-2 oblivious transfer of 128-bit labels.

The real protocol is the Chou-Orlandi "simplest OT" over the 2048-bit
MODP group from RFC 3526 (prime-order subgroup generated by 2):

    sender:   A = g^a                                   -> receiver
    receiver: B_i = g^b_i        (choice 0)
              B_i = A * g^b_i    (choice 1)            -> sender
    sender:   k0_i = H(i, B_i^a), k1_i = H(i, (B_i/A)^a)
              e_i = (m0_i ^ k0_i, m1_i ^ k1_i)          -> receiver
    receiver: m_c_i = e_i[c_i] ^ H(i, A^b_i)

Transfers between a fixed pair of parties use IKNP extension on top of
that: 128 base transfers run once per pair (with the roles reversed) and
every later batch costs only AES.

    setup:    receiver base-sends seed pairs (k0_i, k1_i); sender picks s in {0,1}^128
              and base-receives k_{s_i}
    batch:    receiver: t_i = G(k0_i), u_i = t_i ^ G(k1_i) ^ r   (column i, m bits) -> sender
              sender:   q_i = G(k_{s_i}) ^ s_i u_i, so row q_j = t_j ^ r_j s
                        y_j = (m0_j ^ H(j, q_j), m1_j ^ H(j, q_j ^ s))   -> receiver
              receiver: m_{r_j} = y_j[r_j] ^ H(j, t_j)

A dealer variant hands the chosen labels over in-process; it leaks both
labels to whoever runs the dealer and exists only for fast test sweeps.
"""
from __future__ import annotations

import hashlib
import queue
import struct
import threading

import gmpy2
import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
GENERATOR = 2
ELEMENT_BYTES = 256
EXPONENT_BYTES = 32

_P = gmpy2.mpz(MODP_2048)
_Q = (_P - 1) // 2


class OtError(ValueError):
    pass


def _exponent(rng: np.random.Generator) -> gmpy2.mpz:
    return gmpy2.mpz(int.from_bytes(rng.bytes(EXPONENT_BYTES), "little")) % _Q or gmpy2.mpz(1)


def _enc(x) -> bytes:
    return int(x).to_bytes(ELEMENT_BYTES, "big")


def _dec(blob: bytes) -> gmpy2.mpz:
    x = gmpy2.mpz(int.from_bytes(blob, "big"))
    if not 1 < x < _P - 1:
        raise OtError("group element out of range")
    return x


def _key(index: int, point) -> np.ndarray:
    d = hashlib.sha256(index.to_bytes(8, "little") + _enc(point)).digest()
    return np.frombuffer(d[:16], dtype="<u8").astype(np.uint64)


class OtSender:
    def __init__(self, rng: np.random.Generator):
        self._a = _exponent(rng)
        self._A = gmpy2.powmod(GENERATOR, self._a, _P)

    def first_message(self) -> bytes:
        return _enc(self._A)

    def respond(self, receiver_msg: bytes, pairs: np.ndarray) -> bytes:
        """pairs: (N, 2, 2) uint64, both messages of each transfer."""
        pairs = np.asarray(pairs, dtype=np.uint64).reshape(-1, 2, 2)
        count = pairs.shape[0]
        if len(receiver_msg) != count * ELEMENT_BYTES:
            raise OtError("receiver message has the wrong number of elements")
        a_inv = gmpy2.invert(self._A, _P)
        out = np.empty_like(pairs)
        for i in range(count):
            b = _dec(receiver_msg[i * ELEMENT_BYTES:(i + 1) * ELEMENT_BYTES])
            k0 = _key(i, gmpy2.powmod(b, self._a, _P))
            k1 = _key(i, gmpy2.powmod(b * a_inv % _P, self._a, _P))
            out[i, 0] = pairs[i, 0] ^ k0
            out[i, 1] = pairs[i, 1] ^ k1
        return np.ascontiguousarray(out, dtype="<u8").tobytes()


class OtReceiver:
    def __init__(self, choices, rng: np.random.Generator):
        self.choices = np.asarray(choices, dtype=np.uint8).reshape(-1)
        self._rng = rng
        self._b = None
        self._A = None

    def respond(self, sender_msg: bytes) -> bytes:
        self._A = _dec(sender_msg)
        self._b = [_exponent(self._rng) for _ in self.choices]
        parts = []
        for c, b in zip(self.choices, self._b):
            gb = gmpy2.powmod(GENERATOR, b, _P)
            parts.append(_enc(gb * self._A % _P if c else gb))
        return b"".join(parts)

    def finish(self, sender_msg: bytes) -> np.ndarray:
        """Returns the chosen messages, (N, 2) uint64."""
        count = len(self.choices)
        enc = np.frombuffer(sender_msg, dtype="<u8").astype(np.uint64)
        if enc.size != count * 4:
            raise OtError("sender message has the wrong size")
        enc = enc.reshape(count, 2, 2)
        out = np.empty((count, 2), dtype=np.uint64)
        for i, (c, b) in enumerate(zip(self.choices, self._b)):
            out[i] = enc[i, c] ^ _key(i, gmpy2.powmod(self._A, b, _P))
        return out


def ot_transfer(pairs: np.ndarray, choices, rng: np.random.Generator) -> np.ndarray:
    """Run both sides in one process; used for testing the real protocol."""
    sender = OtSender(rng)
    receiver = OtReceiver(choices, rng)
    reply = receiver.respond(sender.first_message())
    return receiver.finish(sender.respond(reply, pairs))


KAPPA = 128
_HASH_KEY = bytes(range(16, 32))


def _prg(seeds: np.ndarray, batch: int, nbytes: int) -> np.ndarray:
    """AES-CTR stream of nbytes per 128-bit seed; (KAPPA, 2) uint64 -> (KAPPA, nbytes) uint8."""
    nonce = struct.pack("<QQ", batch, 0)
    zeros = bytes(nbytes)
    rows = []
    for seed in np.ascontiguousarray(seeds, dtype="<u8"):
        enc = Cipher(algorithms.AES(seed.tobytes()), modes.CTR(nonce)).encryptor()
        rows.append(np.frombuffer(enc.update(zeros), dtype=np.uint8))
    return np.stack(rows)


def _transpose(cols: np.ndarray, m: int) -> np.ndarray:
    """(KAPPA, ceil(m/8)) packed columns -> (m, 2) uint64 rows."""
    bits = np.unpackbits(cols, axis=1, bitorder="little")[:, :m]
    rows = np.packbits(np.ascontiguousarray(bits.T), axis=1, bitorder="little")
    return rows.view("<u8").astype(np.uint64)


def _row_hash(rows: np.ndarray, offset: int) -> np.ndarray:
    """H(j, x) = AES_k(x ^ j) ^ x ^ j under a fixed key, j = offset + row index."""
    tweak = np.zeros_like(rows)
    tweak[:, 0] = np.arange(offset, offset + rows.shape[0], dtype=np.uint64)
    x = np.ascontiguousarray(rows ^ tweak, dtype="<u8")
    enc = Cipher(algorithms.AES(_HASH_KEY), modes.ECB()).encryptor()
    out = np.frombuffer(enc.update(x.tobytes()), dtype="<u8").reshape(x.shape).astype(np.uint64)
    return out ^ x


class _Extension:
    def __init__(self):
        self.batch = 0
        self.offset = 0

    def _advance(self, m: int) -> tuple[int, int]:
        at = (self.batch, self.offset)
        self.batch += 1
        self.offset += m
        return at


class ExtSender(_Extension):
    """Sender side of IKNP; plays the receiver in the base transfers."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        self.s = rng.integers(0, 2, size=KAPPA, dtype=np.uint8)
        self._s_word = np.packbits(self.s, bitorder="little").view("<u8").astype(np.uint64)
        self._base = OtReceiver(self.s, rng)
        self._keys = None

    @property
    def ready(self) -> bool:
        return self._keys is not None

    def base_reply(self, hello: bytes) -> bytes:
        return self._base.respond(hello)

    def base_finish(self, payload: bytes):
        self._keys = self._base.finish(payload)

    def send(self, request: bytes, pairs: np.ndarray) -> bytes:
        if not self.ready:
            raise OtError("extension used before the base transfers completed")
        pairs = np.asarray(pairs, dtype=np.uint64).reshape(-1, 2, 2)
        m = pairs.shape[0]
        nbytes = (m + 7) // 8
        if len(request) != KAPPA * nbytes:
            raise OtError("extension request has the wrong size")
        batch, offset = self._advance(m)
        u = np.frombuffer(request, dtype=np.uint8).reshape(KAPPA, nbytes)
        q = _prg(self._keys, batch, nbytes) ^ (u * self.s[:, None])
        rows = _transpose(q, m)
        out = np.empty_like(pairs)
        out[:, 0] = pairs[:, 0] ^ _row_hash(rows, offset)
        out[:, 1] = pairs[:, 1] ^ _row_hash(rows ^ self._s_word, offset)
        return np.ascontiguousarray(out, dtype="<u8").tobytes()


class ExtReceiver(_Extension):
    """Receiver side of IKNP; plays the sender in the base transfers."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        self._seeds = rng.integers(0, np.iinfo(np.uint64).max, size=(KAPPA, 2, 2), dtype=np.uint64,
                                   endpoint=True)
        self._base = OtSender(rng)
        self.ready = False
        self._pending = None

    def base_hello(self) -> bytes:
        return self._base.first_message()

    def base_payload(self, reply: bytes) -> bytes:
        self.ready = True
        return self._base.respond(reply, self._seeds)

    def request(self, choices) -> bytes:
        r = np.asarray(choices, dtype=np.uint8).reshape(-1)
        m = r.shape[0]
        nbytes = (m + 7) // 8
        batch, offset = self._advance(m)
        t0 = _prg(self._seeds[:, 0], batch, nbytes)
        t1 = _prg(self._seeds[:, 1], batch, nbytes)
        packed = np.packbits(r, bitorder="little")
        u = t0 ^ t1 ^ packed[None, :]
        self._pending = (r, _transpose(t0, m), offset)
        return u.tobytes()

    def finish(self, reply: bytes) -> np.ndarray:
        r, rows, offset = self._pending
        self._pending = None
        m = r.shape[0]
        y = np.frombuffer(reply, dtype="<u8").astype(np.uint64)
        if y.size != m * 4:
            raise OtError("extension reply has the wrong size")
        y = y.reshape(m, 2, 2)
        return y[np.arange(m), r.astype(np.int64)] ^ _row_hash(rows, offset)


def ext_transfer(pairs: np.ndarray, choices, rng: np.random.Generator,
                 sender: ExtSender | None = None, receiver: ExtReceiver | None = None) -> np.ndarray:
    """Both IKNP sides in one process (base transfers included on first use)."""
    sender = sender or ExtSender(rng)
    receiver = receiver or ExtReceiver(rng)
    if not sender.ready:
        sender.base_finish(receiver.base_payload(sender.base_reply(receiver.base_hello())))
    return receiver.finish(sender.send(receiver.request(choices), pairs))


class Dealer:
    """INSECURE in-process label delivery keyed by a transfer tag.

    The sender deposits both labels, the receiver deposits its choice bits,
    and the receiver picks up only the chosen labels.
    """

    def __init__(self, timeout: float = 120.0):
        self._lock = threading.Lock()
        self._slots: dict = {}
        self.timeout = timeout

    def _slot(self, tag) -> queue.Queue:
        with self._lock:
            return self._slots.setdefault(tag, queue.Queue(maxsize=1))

    def offer(self, tag, pairs: np.ndarray):
        self._slot(tag).put(np.asarray(pairs, dtype=np.uint64).reshape(-1, 2, 2))

    def choose(self, tag, choices) -> np.ndarray:
        try:
            pairs = self._slot(tag).get(timeout=self.timeout)
        except queue.Empty:
            raise OtError(f"dealer transfer {tag!r} timed out") from None
        with self._lock:
            self._slots.pop(tag, None)
        c = np.asarray(choices, dtype=np.int64).reshape(-1)
        if c.shape[0] != pairs.shape[0]:
            raise OtError("choice count does not match the offered pairs")
        return pairs[np.arange(c.shape[0]), c]


def choice_bits(values, width: int) -> np.ndarray:
    """Bits of each value in wire order (width-major, then copy), matching InputEncoding.pairs."""
    vals = np.asarray(values, dtype=object).reshape(-1)
    return np.array([[(int(v) >> i) & 1 for v in vals] for i in range(width)], dtype=np.uint8).reshape(-1)
