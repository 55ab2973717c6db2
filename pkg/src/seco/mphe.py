"""Multiparty BFV: a collective key from additive secret-key shares.

Every party samples its own secret s_i and publishes p0_i = -s_i p1 + e_i
over a shared uniform p1.  Summing the p0_i gives a public key whose secret
is sum(s_i).  Decryption needs one partial decryption s_i c1 + e_i from
each party; three-part ciphertexts take an extra round in which each party
contributes s_i c2 + e_i so the c2 term folds into c1.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from seco import bfv, ring
from seco.bfv import Ciphertext, Plaintext, PublicKey, SecretKey
from seco.ring import RingElement, RingParams


class MpheError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CommonPublicKey:
    params: RingParams
    p0_sum: RingElement
    p1: RingElement

    def as_public_key(self) -> PublicKey:
        return PublicKey(self.params, self.p0_sum, self.p1)

    def to_bytes(self) -> bytes:
        return bfv.public_key_bytes(self.as_public_key(), include_galois=False)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CommonPublicKey":
        pk = bfv.public_key_from_bytes(blob)
        return cls(pk.params, pk.p0, pk.p1)


@dataclass(frozen=True, eq=False)
class PartialDecryption:
    party: int
    pd: RingElement

    def to_bytes(self) -> bytes:
        return struct.pack("<B", self.party) + bfv.serialize_elements("pd", [self.pd])

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PartialDecryption":
        _, (el,) = bfv.deserialize_elements(blob[1:])
        return cls(blob[0], el)


def common_p1(params: RingParams, seed: bytes | int) -> RingElement:
    """Uniform polynomial every party can regenerate from a broadcast seed."""
    if isinstance(seed, int):
        seed = seed.to_bytes(16, "little", signed=False)
    digest = hashlib.sha256(b"seco-common-p1" + params.name.encode() + seed).digest()
    rng = np.random.default_rng(np.frombuffer(digest, dtype=np.uint32))
    return ring.sample_uniform(params.q_primes, params.n, rng).to_ntt()


def mphe_keygen(params: RingParams, p1: RingElement, rng: np.random.Generator) -> tuple[PublicKey, SecretKey]:
    return bfv.keygen(params, rng, galois_steps=(), p1=p1)


def dkeygen(pks) -> CommonPublicKey:
    pks = list(pks)
    if not pks:
        raise MpheError("dkeygen needs at least one public key")
    first = pks[0]
    p0 = first.p0
    for pk in pks[1:]:
        if pk.params.name != first.params.name or not np.array_equal(pk.p1.data, first.p1.data):
            raise MpheError("public keys do not share the same p1")
        p0 = p0 + pk.p0
    return CommonPublicKey(first.params, p0, first.p1)


def _share(poly: RingElement, sk: SecretKey, rng: np.random.Generator) -> RingElement:
    e = ring.sample_gaussian(sk.params, rng, poly.moduli).to_ntt()
    return sk.poly(poly.moduli) * poly + e


def reconstruct(ct: Ciphertext, sk: SecretKey, rng: np.random.Generator, party: int = 0) -> PartialDecryption:
    """pd_i = s_i c1 + e_i."""
    if ct.degree != 1:
        raise MpheError("partial decryption expects a two-part ciphertext; fold c2 first")
    return PartialDecryption(party, _share(ct.c1, sk, rng))


def fold_share(ct: Ciphertext, sk: SecretKey, rng: np.random.Generator, party: int = 0) -> PartialDecryption:
    """First-round contribution s_i c2 + e_i for a three-part ciphertext."""
    if ct.degree != 2:
        raise MpheError("fold_share expects a three-part ciphertext")
    return PartialDecryption(party, _share(ct.parts[2], sk, rng))


def _collect(pds, parties=None) -> RingElement:
    pds = list(pds)
    seen = set()
    for pd in pds:
        if pd.party in seen:
            raise MpheError(f"duplicate partial decryption from party {pd.party}")
        seen.add(pd.party)
    if parties is not None and seen != set(parties):
        raise MpheError(f"partial decryptions missing for parties {sorted(set(parties) - seen)}")
    if not pds:
        raise MpheError("no partial decryptions")
    acc = pds[0].pd
    for pd in pds[1:]:
        acc = acc + pd.pd
    return acc


def fold(ct: Ciphertext, shares, parties=None) -> Ciphertext:
    """(c0, c1, c2) -> (c0, c1 + sum_i (s_i c2 + e_i)), a two-part ciphertext under the same key."""
    d = _collect(shares, parties)
    return Ciphertext(ct.params, (ct.c0, ct.c1 + d))


def mphe_dec(ct: Ciphertext, pds, parties=None) -> Plaintext:
    """Recover m from c0 + sum_i pd_i."""
    if ct.degree != 1:
        raise MpheError("fold three-part ciphertexts before decrypting")
    phase = (ct.c0 + _collect(pds, parties)).to_coeff()
    return bfv.decode_phase(ct.params, phase)


def combined_secret(sks) -> SecretKey:
    sks = list(sks)
    total = sks[0]
    for sk in sks[1:]:
        total = total + sk
    return total


def partial(poly: RingElement, sk: SecretKey, rng: np.random.Generator, party: int = 0) -> PartialDecryption:
    """s_i * poly + e_i for a bare ring element (c1, or c2 in the folding round)."""
    return PartialDecryption(party, _share(poly, sk, rng))
