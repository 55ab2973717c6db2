"""Plain BFV: keys, slot encoding, encryption, decryption and evaluation.

Ciphertexts are kept in the NTT domain.  Rotations use Galois key
switching with an RNS digit decomposition (one digit per prime of q);
ciphertext-ciphertext products are tensored exactly in an auxiliary RNS
basis and returned unrelinearised as three-part ciphertexts.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from seco import ring
from seco.ring import RingElement, RingParams


class BfvError(ValueError):
    pass


class MissingGaloisKey(BfvError):
    pass


@lru_cache(maxsize=None)
def _slot_index(n: int) -> np.ndarray:
    """NTT output position of each slot; slots j and n/2 + j are the two rows."""
    half = n // 2
    idx = np.empty(n, dtype=np.int64)
    g = 1
    for j in range(half):
        idx[j] = (g - 1) // 2
        idx[half + j] = (2 * n - g - 1) // 2
        g = g * 5 % (2 * n)
    return idx


@lru_cache(maxsize=None)
def _galois_perm(n: int, g: int) -> np.ndarray:
    """Evaluation-domain index map for a(X) -> a(X^g)."""
    i = np.arange(n, dtype=np.int64)
    return (((2 * i + 1) * g) % (2 * n) - 1) // 2


def galois_element(n: int, step: int) -> int:
    """Galois element rotating both slot rows left by `step`."""
    return pow(5, step % (n // 2), 2 * n)


@dataclass(frozen=True)
class Plaintext:
    """Polynomial over R_t; slot-batched encoding."""

    poly: RingElement
    encoding: str = "slots"

    def lifted(self, moduli: tuple[int, ...]) -> RingElement:
        """Centered lift of the coefficients into the ciphertext basis, NTT form."""
        return _lift_cached(self, moduli)


_LIFT_CACHE: dict = {}


def _lift_cached(pt: Plaintext, moduli):
    key = (id(pt), moduli)
    hit = _LIFT_CACHE.get(key)
    if hit is not None and hit[0] is pt:
        return hit[1]
    t = pt.poly.moduli[0]
    coeffs = pt.poly.data[0]
    if pt.poly.data.dtype == object:
        signed = np.array([int(c) - t if int(c) > t // 2 else int(c) for c in coeffs], dtype=object)
    else:
        signed = coeffs.astype(np.int64)
        signed = np.where(signed > t // 2, signed - t, signed)
    out = ring.from_ints(signed, moduli).to_ntt()
    if len(_LIFT_CACHE) > 4096:
        _LIFT_CACHE.clear()
    _LIFT_CACHE[key] = (pt, out)
    return out


class SlotEncoder:
    """Maps integer vectors of length <= n into R_t so that ring products act slot-wise."""

    def __init__(self, params: RingParams):
        self.params = params
        self.t_moduli = (params.t,)
        self.index = _slot_index(params.n)
        self.tables = ring.ntt_tables(self.t_moduli, params.n)

    @property
    def row(self) -> int:
        return self.params.n // 2

    def encode(self, values) -> Plaintext:
        n = self.params.n
        vals = np.asarray(values)
        if vals.ndim != 1 or vals.shape[0] > n:
            raise BfvError(f"slot vector must have at most {n} entries")
        dtype = self.tables.dtype
        evals = np.zeros((1, n), dtype=object)
        evals[0, self.index[: vals.shape[0]]] = [int(v) % self.params.t for v in vals]
        coeffs = self.tables.inverse(evals.astype(dtype))
        return Plaintext(RingElement(coeffs, self.t_moduli))

    def encode_many(self, rows) -> list[Plaintext]:
        """Batch encode a 2-D array of slot vectors (one NTT call)."""
        rows = np.asarray(rows, dtype=object)
        m, width = rows.shape
        n = self.params.n
        evals = np.zeros((m, 1, n), dtype=object)
        evals[:, 0, self.index[:width]] = rows % self.params.t
        coeffs = self.tables.inverse(evals.astype(self.tables.dtype))
        return [Plaintext(RingElement(np.ascontiguousarray(c), self.t_moduli)) for c in coeffs]

    def decode(self, pt: Plaintext) -> np.ndarray:
        evals = self.tables.forward(pt.poly.data)
        return evals[0, self.index].astype(object)


@dataclass(frozen=True, eq=False)
class SecretKey:
    params: RingParams
    s: np.ndarray  # int8 ternary (or small signed) coefficients

    def poly(self, moduli: tuple[int, ...] | None = None) -> RingElement:
        moduli = moduli or self.params.q_primes
        return _secret_ntt(self, moduli)

    def __add__(self, other: "SecretKey") -> "SecretKey":
        return SecretKey(self.params, self.s.astype(np.int64) + other.s.astype(np.int64))


_SK_CACHE: dict = {}
_SK_CACHE_SIZE = 64


def _secret_ntt(sk: SecretKey, moduli):
    key = (id(sk), moduli)
    hit = _SK_CACHE.get(key)
    if hit is not None and hit[0] is sk:
        return hit[1]
    out = ring.from_ints(sk.s.astype(np.int64), moduli).to_ntt()
    if len(_SK_CACHE) >= _SK_CACHE_SIZE:
        _SK_CACHE.pop(next(iter(_SK_CACHE)))
    _SK_CACHE[key] = (sk, out)
    return out


@dataclass(frozen=True, eq=False)
class GaloisKey:
    step: int
    b: np.ndarray  # (digits, k, n) NTT form
    a: np.ndarray


@dataclass(frozen=True, eq=False)
class PublicKey:
    params: RingParams
    p0: RingElement  # NTT form
    p1: RingElement
    galois: dict = field(default_factory=dict)

    def with_galois(self, keys: dict) -> "PublicKey":
        return PublicKey(self.params, self.p0, self.p1, {**self.galois, **keys})


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """Two (or, after a ct-ct product, three) ring elements in NTT form."""

    params: RingParams
    parts: tuple[RingElement, ...]

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.parts[0].moduli

    @property
    def degree(self) -> int:
        return len(self.parts) - 1

    @property
    def c0(self) -> RingElement:
        return self.parts[0]

    @property
    def c1(self) -> RingElement:
        return self.parts[1]

    def to_bytes(self) -> bytes:
        return serialize_elements(self.params.name, self.parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Ciphertext":
        name, parts = deserialize_elements(blob)
        return cls(ring.profile(name), tuple(parts))


DEFAULT_STEPS = "powers-of-two"


def keygen(params: RingParams, rng: np.random.Generator, galois_steps=DEFAULT_STEPS,
           p1: RingElement | None = None) -> tuple[PublicKey, SecretKey]:
    """Sample s ternary, p1 uniform (unless supplied), e Gaussian; pk = (-s p1 + e, p1)."""
    s = rng.integers(-1, 2, size=params.n).astype(np.int8)
    sk = SecretKey(params, s)
    if p1 is None:
        p1 = ring.sample_uniform(params.q_primes, params.n, rng)
    p1 = p1.to_ntt()
    e = ring.sample_gaussian(params, rng).to_ntt()
    p0 = e - sk.poly() * p1
    pk = PublicKey(params, p0, p1)
    if galois_steps == DEFAULT_STEPS:
        galois_steps = power_of_two_steps(params.n)
    if galois_steps:
        pk = pk.with_galois(galois_keygen(sk, galois_steps, rng))
    return pk, sk


def power_of_two_steps(n: int) -> tuple[int, ...]:
    steps, s = [], 1
    while s < n // 2:
        steps.append(s)
        s *= 2
    return tuple(steps)


def _digit_weights(params: RingParams, moduli) -> list[np.ndarray]:
    """RNS gadget: digit i is the residue mod q_i, weighted by the CRT idempotent."""
    k = len(moduli)
    weights = []
    for i in range(k):
        col = np.zeros((k, 1), dtype=np.uint64)
        col[i, 0] = 1
        weights.append(col)
    return weights


def galois_keygen(sk: SecretKey, steps, rng: np.random.Generator) -> dict[int, GaloisKey]:
    params = sk.params
    moduli = params.q_primes
    n = params.n
    s = sk.poly()
    p = ring.ntt_tables(moduli, n).p2
    out = {}
    for step in steps:
        g = galois_element(n, step)
        s_rot = s.data[:, _galois_perm(n, g)]
        bs, as_ = [], []
        for w in _digit_weights(params, moduli):
            a = ring.sample_uniform(moduli, n, rng).to_ntt()
            e = ring.sample_gaussian(params, rng).to_ntt()
            b = (e.data + p - (a.data * s.data) % p + (s_rot * w) % p) % p
            bs.append(b)
            as_.append(a.data)
        out[step] = GaloisKey(step, np.stack(bs), np.stack(as_))
    return out


def _delta_m(params: RingParams, pt: Plaintext, moduli) -> RingElement:
    coeffs = pt.poly.data[0]
    delta = params.delta
    rows = []
    for p in moduli:
        if coeffs.dtype == object:
            m = np.array([int(c) % p for c in coeffs], dtype=np.uint64)
        else:
            m = coeffs.astype(np.uint64) % np.uint64(p)
        rows.append((m * np.uint64(delta % p)) % np.uint64(p))
    return RingElement(np.stack(rows), moduli)


def enc(pk: PublicKey, m: Plaintext, rng: np.random.Generator) -> Ciphertext:
    """ct = (delta*m + u*p0 + e0, u*p1 + e1) with u ternary and e0, e1 Gaussian."""
    params = pk.params
    moduli = params.q_primes
    n = params.n
    u = ring.from_ints(rng.integers(-1, 2, size=n), moduli)
    e = ring.gaussian_ints(params.sigma, (2, n), rng)
    e0 = ring.from_ints(e[0], moduli) + _delta_m(params, m, moduli)
    e1 = ring.from_ints(e[1], moduli)
    tables = ring.ntt_tables(moduli, n)
    stacked = tables.forward(np.stack([u.data, e0.data, e1.data]))
    p = tables.p2
    c0 = (stacked[0] * pk.p0.data % p + stacked[1]) % p
    c1 = (stacked[0] * pk.p1.data % p + stacked[2]) % p
    return Ciphertext(params, (RingElement(c0, moduli, True), RingElement(c1, moduli, True)))


def trivial_encrypt(params: RingParams, m: Plaintext) -> Ciphertext:
    moduli = params.q_primes
    c0 = _delta_m(params, m, moduli).to_ntt()
    return Ciphertext(params, (c0, ring.zero(moduli, params.n, True)))


def _phase(ct: Ciphertext, s: RingElement) -> RingElement:
    """c0 + c1 s + c2 s^2 + ..., in coefficient form."""
    acc = ct.parts[-1]
    for part in reversed(ct.parts[:-1]):
        acc = acc * s + part
    return acc.to_coeff()


def _round_to_t(v: np.ndarray, q: int, t: int) -> np.ndarray:
    return (v * t + q // 2) // q % t


def dec(sk: SecretKey, ct: Ciphertext) -> Plaintext:
    """m = [round(t/q [c0 + c1 s]_q)]_t."""
    return decode_phase(ct.params, _phase(ct, sk.poly(ct.moduli)))


def decode_phase(params: RingParams, phase: RingElement) -> Plaintext:
    q = math.prod(phase.moduli)
    m = _round_to_t(phase.to_ints(), q, params.t)
    return Plaintext(ring.from_ints(m, (params.t,)))


def noise_budget_bits(sk: SecretKey, ct: Ciphertext) -> float:
    """log2(q / (2 max|t*phase mod q|)); decryption is correct while positive."""
    phase = _phase(ct, sk.poly(ct.moduli)).to_ints()
    q = math.prod(ct.moduli)
    w = phase * ct.params.t % q
    w = np.where(w > q // 2, q - w, w)
    worst = int(max(w)) or 1
    return math.log2(q) - math.log2(2 * worst)


# -- evaluation -------------------------------------------------------------

def _check_pair(a: Ciphertext, b: Ciphertext):
    if a.params.name != b.params.name or a.moduli != b.moduli:
        raise BfvError("ciphertexts use incompatible parameters")


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a, b)
    parts = []
    for i in range(max(len(a.parts), len(b.parts))):
        if i < len(a.parts) and i < len(b.parts):
            parts.append(a.parts[i] + b.parts[i])
        else:
            parts.append(a.parts[i] if i < len(a.parts) else b.parts[i])
    return Ciphertext(a.params, tuple(parts))


def negate(a: Ciphertext) -> Ciphertext:
    return Ciphertext(a.params, tuple(-p for p in a.parts))


def sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return add(a, negate(b))


def add_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    dm = _delta_m(a.params, pt, a.moduli).to_ntt()
    return Ciphertext(a.params, (a.parts[0] + dm,) + a.parts[1:])


def sub_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    dm = _delta_m(a.params, pt, a.moduli).to_ntt()
    return Ciphertext(a.params, (a.parts[0] - dm,) + a.parts[1:])


def mul_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    lp = pt.lifted(a.moduli)
    return Ciphertext(a.params, tuple(part * lp for part in a.parts))


def _key_switch(params: RingParams, c1_ntt: np.ndarray, key: GaloisKey, moduli):
    tables = ring.ntt_tables(moduli, params.n)
    p = tables.p2
    coeff = tables.inverse(c1_ntt)
    k = len(moduli)
    digits = np.broadcast_to(coeff[:, None, :], (k, k, params.n))
    digits = tables.forward(np.ascontiguousarray(digits) % p)
    c0 = ((digits * key.b) % p).sum(axis=0) % p
    c1 = ((digits * key.a) % p).sum(axis=0) % p
    return c0, c1


def _apply_galois(ct: Ciphertext, key: GaloisKey) -> Ciphertext:
    params = ct.params
    if ct.degree != 1:
        raise BfvError("rotation needs a degree-1 ciphertext")
    if ct.moduli != params.q_primes:
        raise BfvError("rotation needs a full-level ciphertext")
    perm = _galois_perm(params.n, galois_element(params.n, key.step))
    c0 = ct.c0.data[:, perm]
    c1 = ct.c1.data[:, perm]
    k0, k1 = _key_switch(params, c1, key, ct.moduli)
    p = ring.ntt_tables(ct.moduli, params.n).p2
    return Ciphertext(params, (RingElement((c0 + k0) % p, ct.moduli, True),
                               RingElement(k1, ct.moduli, True)))


def rotate(pk: PublicKey, ct: Ciphertext, step: int) -> Ciphertext:
    """Rotate both slot rows left by `step` using the available Galois keys."""
    half = pk.params.n // 2
    step %= half
    if step == 0:
        return ct
    if step in pk.galois:
        return _apply_galois(ct, pk.galois[step])
    bit = 1
    out = ct
    remaining = step
    while remaining:
        if remaining & 1:
            if bit not in pk.galois:
                raise MissingGaloisKey(f"no Galois key for rotation {bit}")
            out = _apply_galois(out, pk.galois[bit])
        remaining >>= 1
        bit <<= 1
    return out


def multiply(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Tensor product round(t/q * a (x) b); returns a degree-2 ciphertext."""
    _check_pair(a, b)
    if a.degree != 1 or b.degree != 1:
        raise BfvError("multiply takes two degree-1 ciphertexts")
    params = a.params
    qb = a.moduli
    pb = params.aux_primes
    if not pb:
        raise BfvError("parameter set has no auxiliary basis for ct-ct products")
    n = params.n
    full = qb + pb
    tq = ring.ntt_tables(qb, n)
    tfull = ring.ntt_tables(full, n)
    coeffs = tq.inverse(np.stack([a.c0.data, a.c1.data, b.c0.data, b.c1.data]))
    ext = np.stack([np.concatenate([c, ring.extend_basis(c, qb, pb)]) for c in coeffs])
    f = tfull.forward(ext)
    pf = tfull.p2
    d0 = f[0] * f[2] % pf
    d1 = (f[0] * f[3] % pf + f[1] * f[2] % pf) % pf
    d2 = f[1] * f[3] % pf
    x = tfull.inverse(np.stack([d0, d1, d2]))
    kq = len(qb)
    parts = []
    t = params.t
    tcol = np.array([t % p for p in full], dtype=np.uint64).reshape(-1, 1)
    q = math.prod(qb)
    qinv_p = np.array([pow(q % p, -1, p) for p in pb], dtype=np.uint64).reshape(-1, 1)
    pcol = tfull.p2[kq:]
    for xi in x:
        y = xi * tcol % pf
        yq, yp = y[:kq], y[kq:]
        yc = ring.extend_basis(yq, qb, pb)
        r_p = (yp + pcol - yc) % pcol * qinv_p % pcol
        r_q = ring.extend_basis(r_p, pb, qb)
        parts.append(RingElement(tq.forward(r_q), qb, True))
    return Ciphertext(params, tuple(parts))


def mod_switch_down(ct: Ciphertext, keep: int) -> Ciphertext:
    """Drop trailing primes of q by scaled rounding; keeps the plaintext."""
    params = ct.params
    moduli = ct.moduli
    if not 1 <= keep <= len(moduli):
        raise BfvError("invalid number of primes to keep")
    tables = ring.ntt_tables(moduli, params.n)
    data = [tables.inverse(np.stack([p.data for p in ct.parts]))]
    cur = list(moduli)
    arr = data[0]
    while len(cur) > keep:
        last = cur.pop()
        tail = arr[:, -1, :].astype(np.int64)
        tail = np.where(tail > last // 2, tail - last, tail)
        rows = []
        for j, p in enumerate(cur):
            inv = np.uint64(pow(last, -1, p))
            diff = (arr[:, j, :] + np.mod(-tail, p).astype(np.uint64)) % np.uint64(p)
            rows.append(diff * inv % np.uint64(p))
        arr = np.stack(rows, axis=1)
    new = tuple(cur)
    t2 = ring.ntt_tables(new, params.n)
    f = t2.forward(arr)
    return Ciphertext(params, tuple(RingElement(f[i], new, True) for i in range(len(ct.parts))))


@dataclass(frozen=True)
class Rot:
    step: int


ADD, SUB, MUL_PLAIN = "add", "sub", "mul_plain"


def evaluate(pk: PublicKey, inputs, op) -> Ciphertext:
    """Generic entry point: op is "add", "sub", "mul_plain" or Rot(k)."""
    if isinstance(op, Rot):
        (ct,) = inputs
        return rotate(pk, ct, op.step)
    if op == MUL_PLAIN:
        cts = [x for x in inputs if isinstance(x, Ciphertext)]
        pts = [x for x in inputs if isinstance(x, Plaintext)]
        if len(cts) != 1 or len(pts) != 1:
            raise BfvError("mul_plain takes one ciphertext and one plaintext")
        return mul_plain(cts[0], pts[0])
    if op in (ADD, SUB):
        a, b = inputs
        if isinstance(a, Plaintext):
            if op == SUB:
                return add_plain(negate(b), a)
            a, b = b, a
        if isinstance(b, Plaintext):
            return add_plain(a, b) if op == ADD else sub_plain(a, b)
        return add(a, b) if op == ADD else sub(a, b)
    raise BfvError(f"unsupported operation {op!r}")


# -- linear layers ------------------------------------------------------------

def next_pow2(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


def tile(vec, d: int, n: int) -> np.ndarray:
    """Pad `vec` to d entries and repeat it across both slot rows."""
    v = np.zeros(d, dtype=object)
    v[: len(vec)] = [int(x) for x in vec]
    return np.tile(v, n // d)


def bsgs_split(d: int) -> tuple[int, int]:
    """Baby-step and giant-step counts for a power-of-two diagonal count d."""
    logd = d.bit_length() - 1
    baby = 1 << ((logd + 1) // 2)
    return baby, d // baby


def lin_op_rotation_steps(rows: int, cols: int) -> tuple[int, ...]:
    """Galois steps `lin_op` needs for a rows x cols matrix; depends only on the shape."""
    baby, giant = bsgs_split(next_pow2(max(rows, cols)))
    steps = {1} if baby > 1 else set()
    if giant > 1:
        steps.add(baby)
    return tuple(sorted(steps))


@dataclass(frozen=True, eq=False)
class LinOpPlan:
    """Diagonals of a w x q matrix prepared for baby-step/giant-step evaluation."""

    rows: int
    cols: int
    d: int
    baby: int
    giant: int
    diagonals: tuple  # giant-major tuple of tuples of Plaintext (None for all-zero)

    @property
    def rotation_steps(self) -> tuple[int, ...]:
        return lin_op_rotation_steps(self.rows, self.cols)


def plan_lin_op(encoder: SlotEncoder, matrix) -> LinOpPlan:
    mat = np.asarray(matrix, dtype=object)
    w, q = mat.shape
    d = next_pow2(max(w, q))
    row = encoder.row
    if d > row:
        raise BfvError(f"matrix dimension {max(w, q)} exceeds the {row}-slot row")
    t = encoder.params.t
    padded = np.zeros((d, d), dtype=object)
    padded[:w, :q] = mat % t
    baby, giant = bsgs_split(d)
    j = np.arange(d)
    raw = []
    for g in range(giant):
        for b in range(baby):
            k = g * baby + b
            diag = padded[j, (j + k) % d]
            if not any(diag):
                raw.append(None)
                continue
            full = np.tile(diag, encoder.params.n // d)
            half = encoder.row
            # pre-rotate right by g*baby within each row
            shift = g * baby
            r0 = np.roll(full[:half], shift)
            r1 = np.roll(full[half:], shift)
            raw.append(np.concatenate([r0, r1]))
    present = [x for x in raw if x is not None]
    encoded = iter(encoder.encode_many(np.stack(present)) if present else [])
    flat = [None if x is None else next(encoded) for x in raw]
    diags = tuple(tuple(flat[g * baby:(g + 1) * baby]) for g in range(giant))
    return LinOpPlan(w, q, d, baby, giant, diags)


def lin_op(pk: PublicKey, ct_r: Ciphertext, plan: LinOpPlan) -> Ciphertext:
    """Encrypted matrix-vector product F r via rotate-multiply-accumulate.

    `ct_r` must encrypt r tiled with period plan.d (see `tile`).
    """
    needed = [s for s in plan.rotation_steps if s not in pk.galois]
    if needed:
        raise MissingGaloisKey(f"missing Galois keys for steps {needed}")
    babies = [ct_r]
    for _ in range(1, plan.baby):
        babies.append(rotate(pk, babies[-1], 1))
    acc = None
    for g in reversed(range(plan.giant)):
        inner = None
        for b, pt in enumerate(plan.diagonals[g]):
            if pt is None:
                continue
            term = mul_plain(babies[b], pt)
            inner = term if inner is None else add(inner, term)
        if acc is not None:
            acc = rotate(pk, acc, plan.baby)
            inner = acc if inner is None else add(acc, inner)
        acc = inner
    if acc is None:
        return sub(ct_r, ct_r)
    return acc


# -- serialization ------------------------------------------------------------

_MAGIC = b"SECO"


def serialize_elements(params_name: str, elements) -> bytes:
    """Length-prefixed little-endian layout: header, then uint32 residues per element."""
    elements = list(elements)
    name = params_name.encode()
    head = [_MAGIC, struct.pack("<B", len(name)), name, struct.pack("<H", len(elements))]
    body = []
    for el in elements:
        k, n = el.data.shape
        body.append(struct.pack("<BBHI", int(el.ntt), k, 0, n))
        body.append(struct.pack(f"<{k}I", *el.moduli))
        body.append(np.ascontiguousarray(el.data, dtype="<u4").tobytes())
    payload = b"".join(head + body)
    return struct.pack("<I", len(payload)) + payload


def deserialize_elements(blob: bytes):
    (length,) = struct.unpack_from("<I", blob, 0)
    if length != len(blob) - 4:
        raise BfvError("truncated serialized ring elements")
    off = 4
    if blob[off:off + 4] != _MAGIC:
        raise BfvError("bad magic")
    off += 4
    nlen = blob[off]
    off += 1
    name = blob[off:off + nlen].decode()
    off += nlen
    (count,) = struct.unpack_from("<H", blob, off)
    off += 2
    out = []
    for _ in range(count):
        ntt, k, _pad, n = struct.unpack_from("<BBHI", blob, off)
        off += 8
        moduli = struct.unpack_from(f"<{k}I", blob, off)
        off += 4 * k
        size = 4 * k * n
        data = np.frombuffer(blob, dtype="<u4", count=k * n, offset=off).astype(np.uint64).reshape(k, n)
        off += size
        out.append(RingElement(data, tuple(moduli), bool(ntt)))
    return name, out


def public_key_bytes(pk: PublicKey, include_galois: bool = True) -> bytes:
    elements = [pk.p0, pk.p1]
    blob = serialize_elements(pk.params.name, elements)
    if include_galois and pk.galois:
        parts = [blob]
        for step in sorted(pk.galois):
            key = pk.galois[step]
            els = [RingElement(x, pk.params.q_primes, True) for x in list(key.b) + list(key.a)]
            parts.append(struct.pack("<I", step) + serialize_elements(pk.params.name, els))
        blob = b"".join(parts)
    return blob


def public_key_from_bytes(blob: bytes) -> PublicKey:
    (length,) = struct.unpack_from("<I", blob, 0)
    name, (p0, p1) = deserialize_elements(blob[: 4 + length])
    params = ring.profile(name)
    off = 4 + length
    galois = {}
    while off < len(blob):
        (step,) = struct.unpack_from("<I", blob, off)
        off += 4
        (length,) = struct.unpack_from("<I", blob, off)
        _, els = deserialize_elements(blob[off:off + 4 + length])
        off += 4 + length
        half = len(els) // 2
        galois[step] = GaloisKey(step, np.stack([e.data for e in els[:half]]),
                                 np.stack([e.data for e in els[half:]]))
    return PublicKey(params, p0, p1, galois)


def plaintext_bytes(pt: Plaintext) -> bytes:
    data = pt.poly.data[0]
    t = pt.poly.moduli[0]
    return struct.pack("<QI", t, data.shape[0]) + np.array([int(x) for x in data], dtype="<u8").tobytes()
