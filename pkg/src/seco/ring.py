"""Arithmetic over R_q = Z_q[X]/(X^n + 1) in residue-number-system form.

Every modulus used here is a prime below 2**31 with p = 1 (mod 2n), so a
product of two residues fits in an unsigned 64-bit word and the negacyclic
NTT is available per prime.  A composite ciphertext modulus q is the
product of several such primes; a plaintext modulus t is a single prime
(and may exceed 2**31, in which case numpy object arrays carry Python ints).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np

WORD_LIMIT = 1 << 31
TAIL_CUT = 6.0


class ModulusMismatch(ValueError):
    pass


def find_ntt_primes(n: int, count: int, bits: int = 31, exclude: tuple[int, ...] = ()) -> tuple[int, ...]:
    """Largest `count` primes below 2**bits congruent to 1 mod 2n."""
    step = 2 * n
    p = ((1 << bits) - 1) // step * step + 1
    found = []
    while len(found) < count:
        if p not in exclude and gmpy2.is_prime(p):
            found.append(p)
        p -= step
        if p < step:
            raise ValueError("ran out of NTT-friendly primes")
    return tuple(found)


@lru_cache(maxsize=None)
def primitive_root_2n(p: int, n: int) -> int:
    """Smallest-generator 2n-th primitive root of unity modulo prime p."""
    if (p - 1) % (2 * n):
        raise ValueError(f"{p} is not 1 mod {2 * n}")
    e = (p - 1) // (2 * n)
    for g in range(2, 10_000):
        psi = pow(g, e, p)
        if pow(psi, n, p) == p - 1:
            return psi
    raise ValueError("no primitive root found")


def _dtype_for(moduli) -> type:
    return np.uint64 if max(moduli) < WORD_LIMIT else object


class NttTables:
    """Precomputed twiddles for the negacyclic NTT over a tuple of primes.

    ``forward`` maps coefficients a_j to evaluations a(psi^(2i+1)) in natural
    order i, for every prime at once (arrays shaped (..., k, n)).
    """

    def __init__(self, moduli: tuple[int, ...], n: int):
        self.moduli = moduli
        self.n = n
        self.dtype = _dtype_for(moduli)
        k = len(moduli)
        logn = n.bit_length() - 1
        if 1 << logn != n:
            raise ValueError("n must be a power of two")
        rev = np.zeros(n, dtype=np.int64)
        for i in range(n):
            rev[i] = int(format(i, f"0{logn}b")[::-1], 2) if logn else 0
        self.bitrev = rev

        psi = np.empty((k, n), dtype=object)
        psi_inv = np.empty((k, n), dtype=object)
        self.fwd = []
        self.inv = []
        n_inv = []
        for r, p in enumerate(moduli):
            root = primitive_root_2n(p, n)
            root_inv = pow(root, -1, p)
            psi[r] = [pow(root, j, p) for j in range(n)]
            psi_inv[r] = [pow(root_inv, j, p) for j in range(n)]
            n_inv.append(pow(n, -1, p))
        omega = [pow(primitive_root_2n(p, n), 2, p) for p in moduli]
        h = 1
        while h < n:
            tw = np.empty((k, 1, h), dtype=object)
            tw_inv = np.empty((k, 1, h), dtype=object)
            for r, p in enumerate(moduli):
                w = pow(omega[r], n // (2 * h), p)
                w_inv = pow(w, -1, p)
                tw[r, 0] = [pow(w, j, p) for j in range(h)]
                tw_inv[r, 0] = [pow(w_inv, j, p) for j in range(h)]
            self.fwd.append(tw.astype(self.dtype))
            self.inv.append(tw_inv.astype(self.dtype))
            h *= 2
        self.psi = psi.astype(self.dtype)
        # fold n^-1 into the inverse twist
        scaled = np.empty((k, n), dtype=object)
        for r, p in enumerate(moduli):
            scaled[r] = [(int(v) * n_inv[r]) % p for v in psi_inv[r]]
        self.psi_inv_scaled = scaled.astype(self.dtype)
        self.p2 = np.array(moduli, dtype=object).reshape(k, 1).astype(self.dtype)
        self._constant_geometry()

    def _constant_geometry(self):
        """Re-index the twiddles so every stage pairs the two contiguous halves.

        Bit-reversed input order is exactly the layout the first stage wants,
        so the only permutation left is one gather at the end.
        """
        n, half = self.n, self.n // 2
        logical = self.bitrev.copy()
        fwd, inv = [], []
        h = 1
        for wf, wi in zip(self.fwd, self.inv):
            j = logical[:half] % h
            fwd.append(np.ascontiguousarray(wf[:, 0, j]))
            inv.append(np.ascontiguousarray(wi[:, 0, j]))
            logical = np.stack([logical[:half], logical[half:]], axis=-1).reshape(n)
            h *= 2
        self.cg_fwd, self.cg_inv = fwd, inv
        self.cg_out = np.argsort(logical)

    def _butterflies(self, x: np.ndarray, tables) -> np.ndarray:
        half = self.n // 2
        p = self.p2
        for w in tables:
            u = x[..., :half]
            v = x[..., half:] * w
            v %= p
            out = np.empty(x.shape[:-1] + (half, 2), dtype=x.dtype)
            s, d = out[..., 0], out[..., 1]
            if x.dtype == object:
                s[...] = (u + v) % p
                d[...] = (u - v) % p
            else:
                np.add(u, v, out=s)
                np.minimum(s, s - p, out=s)  # unsigned wrap makes s - p huge when s < p
                np.subtract(u, v, out=d)
                np.minimum(d, d + p, out=d)
            x = out.reshape(x.shape)
        return x[..., self.cg_out]

    def forward(self, a: np.ndarray) -> np.ndarray:
        return self._butterflies((a * self.psi) % self.p2, self.cg_fwd)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        return (self._butterflies(a, self.cg_inv) * self.psi_inv_scaled) % self.p2


@lru_cache(maxsize=None)
def ntt_tables(moduli: tuple[int, ...], n: int) -> NttTables:
    return NttTables(moduli, n)


@dataclass(frozen=True)
class RingParams:
    """Parameter set for the plaintext ring R_t and ciphertext ring R_q."""

    name: str
    n: int
    q_primes: tuple[int, ...]
    t: int
    sigma: float = 3.2
    aux_primes: tuple[int, ...] = ()
    digit_bits: int = 16

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two")
        for p in self.q_primes + self.aux_primes:
            if p >= WORD_LIMIT or (p - 1) % (2 * self.n):
                raise ValueError(f"prime {p} is not an NTT prime below 2^31 for n={self.n}")
        if self.q % (2 * self.n) != 1:
            raise ValueError("q must be 1 mod 2n")
        if not self.t < self.q:
            raise ValueError("t must be smaller than q")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def q(self) -> int:
        return math.prod(self.q_primes)

    @property
    def delta(self) -> int:
        return -(-self.q // self.t)

    @property
    def slots(self) -> int:
        return self.n

    @property
    def k(self) -> int:
        return len(self.q_primes)


def _profile_desk() -> RingParams:
    n = 2048
    t = 2013265921  # 15 * 2^27 + 1
    primes = find_ntt_primes(n, 10, exclude=(t,))
    return RingParams("desk", n, primes[:4], t, aux_primes=primes[4:])


def _profile_paper() -> RingParams:
    n = 8192
    t = 2061584302081  # 15 * 2^37 + 1
    primes = find_ntt_primes(n, 12, exclude=(t,))
    return RingParams("paper", n, primes[:5], t, aux_primes=primes[5:])


def _profile_tiny() -> RingParams:
    # unit-test profile: small ring, same plaintext modulus as desk
    n = 256
    t = 2013265921
    primes = find_ntt_primes(n, 10, exclude=(t,))
    return RingParams("tiny", n, primes[:4], t, aux_primes=primes[4:])


_PROFILE_BUILDERS = {"desk": _profile_desk, "paper": _profile_paper, "tiny": _profile_tiny}


@lru_cache(maxsize=None)
def profile(name: str) -> RingParams:
    try:
        return _PROFILE_BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown parameter profile {name!r}") from None


@dataclass(frozen=True, eq=False)
class RingElement:
    """A polynomial held as residues modulo each prime of `moduli`.

    ``data`` has shape (k, n).  With ``ntt=True`` the rows hold evaluations
    instead of coefficients.
    """

    data: np.ndarray
    moduli: tuple[int, ...]
    ntt: bool = False

    def __post_init__(self):
        if self.data.shape != (len(self.moduli), self.data.shape[-1]):
            raise ValueError("data shape does not match moduli")
        self.data.setflags(write=False)

    @property
    def n(self) -> int:
        return self.data.shape[-1]

    @property
    def tables(self) -> NttTables:
        return ntt_tables(self.moduli, self.n)

    def _col(self):
        return self.tables.p2

    def _check(self, other: "RingElement"):
        if self.moduli != other.moduli or self.n != other.n:
            raise ModulusMismatch("ring elements live in different rings")

    def to_ntt(self) -> "RingElement":
        if self.ntt:
            return self
        return RingElement(self.tables.forward(self.data), self.moduli, True)

    def to_coeff(self) -> "RingElement":
        if not self.ntt:
            return self
        return RingElement(self.tables.inverse(self.data), self.moduli, False)

    def _aligned(self, other: "RingElement"):
        self._check(other)
        if self.ntt == other.ntt:
            return self, other
        return self.to_ntt(), other.to_ntt()

    def __add__(self, other: "RingElement") -> "RingElement":
        a, b = self._aligned(other)
        return RingElement((a.data + b.data) % self._col(), self.moduli, a.ntt)

    def __sub__(self, other: "RingElement") -> "RingElement":
        a, b = self._aligned(other)
        return RingElement((a.data + self._col() - b.data) % self._col(), self.moduli, a.ntt)

    def __neg__(self) -> "RingElement":
        return RingElement((self._col() - self.data) % self._col(), self.moduli, self.ntt)

    def __mul__(self, other):
        if isinstance(other, RingElement):
            return poly_mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def scale(self, c: int) -> "RingElement":
        col = np.array([c % p for p in self.moduli], dtype=object).reshape(-1, 1).astype(self.data.dtype)
        return RingElement((self.data * col) % self._col(), self.moduli, self.ntt)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        if self.moduli != other.moduli:
            return False
        return bool(np.array_equal(self.to_coeff().data, other.to_coeff().data))

    def __hash__(self):
        return hash((self.moduli, self.to_coeff().data.tobytes()))

    def to_ints(self) -> np.ndarray:
        """Coefficients as Python ints in [0, prod(moduli))."""
        return crt_reconstruct(self.to_coeff().data, self.moduli)

    def centered(self) -> np.ndarray:
        q = math.prod(self.moduli)
        v = self.to_ints()
        return np.where(v >= (q + 1) // 2, v - q, v)


def poly_mul(a: RingElement, b: RingElement) -> RingElement:
    """Negacyclic product a*b mod (X^n + 1, q) via the NTT."""
    a._check(b)
    fa, fb = a.to_ntt(), b.to_ntt()
    prod = RingElement((fa.data * fb.data) % a._col(), a.moduli, True)
    if a.ntt or b.ntt:
        return prod
    return prod.to_coeff()


def poly_add(a: RingElement, b: RingElement) -> RingElement:
    return a + b


def poly_sub(a: RingElement, b: RingElement) -> RingElement:
    return a - b


def from_ints(values, moduli: tuple[int, ...], n: int | None = None) -> RingElement:
    """Reduce signed integer coefficients into every residue channel."""
    arr = np.asarray(values)
    if n is not None and arr.shape[0] != n:
        padded = np.zeros(n, dtype=arr.dtype)
        padded[: arr.shape[0]] = arr
        arr = padded
    dtype = _dtype_for(moduli)
    if arr.dtype.kind in "iu" and dtype is np.uint64:
        arr64 = arr.astype(np.int64)
        rows = np.stack([np.mod(arr64, p) for p in moduli]).astype(np.uint64)
    else:
        obj = arr.astype(object)
        rows = np.stack([obj % p for p in moduli]).astype(dtype)
    return RingElement(rows, moduli)


def zero(moduli: tuple[int, ...], n: int, ntt: bool = False) -> RingElement:
    return RingElement(np.zeros((len(moduli), n), dtype=_dtype_for(moduli)), moduli, ntt)


def crt_reconstruct(residues: np.ndarray, moduli: tuple[int, ...]) -> np.ndarray:
    """Exact CRT: (k, n) residues -> object array of ints in [0, prod)."""
    if len(moduli) == 1:
        return residues[0].astype(object)
    q = math.prod(moduli)
    total = np.zeros(residues.shape[-1], dtype=object)
    for row, p in zip(residues, moduli):
        m = q // p
        inv = pow(m % p, -1, p)
        y = (row.astype(np.uint64) * np.uint64(inv)) % np.uint64(p)
        total = total + y.astype(object) * m
    return total % q


def extend_basis(residues: np.ndarray, src: tuple[int, ...], dst: tuple[int, ...]) -> np.ndarray:
    """Centered fast base extension of an integer held in basis `src`.

    Returns residues in `dst` of the representative of x in [-Q/2, Q/2).
    The correction multiple of Q is found with float64 rounding, which is
    exact unless x/Q lies within ~1e-12 of +-1/2.
    """
    q = math.prod(src)
    ys = []
    frac = np.zeros(residues.shape[-1], dtype=np.float64)
    for row, p in zip(residues, src):
        inv = pow((q // p) % p, -1, p)
        y = (row * np.uint64(inv)) % np.uint64(p)
        ys.append(y)
        frac += y.astype(np.float64) / p
    alpha = np.rint(frac).astype(np.int64)
    out = np.empty((len(dst), residues.shape[-1]), dtype=np.uint64)
    for r, pd in enumerate(dst):
        acc = np.zeros(residues.shape[-1], dtype=np.uint64)
        pd64 = np.uint64(pd)
        for y, p in zip(ys, src):
            acc = (acc + (y % pd64) * np.uint64((q // p) % pd)) % pd64
        corr = (np.mod(alpha, pd).astype(np.uint64) * np.uint64(q % pd)) % pd64
        out[r] = (acc + pd64 - corr) % pd64
    return out


def sample_uniform(moduli: tuple[int, ...], n: int, rng: np.random.Generator) -> RingElement:
    rows = [rng.integers(0, p, size=n, dtype=np.uint64) for p in moduli]
    return RingElement(np.stack(rows).astype(_dtype_for(moduli)), moduli)


def sample_ternary(params: RingParams, rng: np.random.Generator, moduli: tuple[int, ...] | None = None) -> RingElement:
    """Coefficients uniform over {-1, 0, 1}."""
    moduli = moduli or params.q_primes
    return from_ints(rng.integers(-1, 2, size=params.n), moduli)


@lru_cache(maxsize=None)
def _gaussian_table(sigma: float):
    bound = int(math.floor(TAIL_CUT * sigma))
    support = np.arange(-bound, bound + 1)
    weights = np.exp(-(support.astype(np.float64) ** 2) / (2 * sigma * sigma))
    return support, weights / weights.sum()


def gaussian_ints(sigma: float, size, rng: np.random.Generator) -> np.ndarray:
    """Centered discrete Gaussian, tail cut at 6 sigma, as int64."""
    support, probs = _gaussian_table(float(sigma))
    return rng.choice(support, size=size, p=probs)


def sample_gaussian(params: RingParams, rng: np.random.Generator, moduli: tuple[int, ...] | None = None) -> RingElement:
    moduli = moduli or params.q_primes
    return from_ints(gaussian_ints(params.sigma, params.n, rng), moduli)
