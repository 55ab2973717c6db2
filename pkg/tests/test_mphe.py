import numpy as np
import pytest

from seco import bfv, mphe


@pytest.fixture(scope="module")
def parties(tiny):
    rng = np.random.default_rng(77)
    p1 = mphe.common_p1(tiny, 3)
    keys = [mphe.mphe_keygen(tiny, p1, rng) for _ in range(3)]
    cpk = mphe.dkeygen(pk for pk, _ in keys)
    return keys, cpk, bfv.SlotEncoder(tiny)


def joint_decrypt(keys, ct, rng, parties=range(3)):
    return mphe.mphe_dec(ct, [mphe.reconstruct(ct, sk, rng, i) for i, (_, sk) in enumerate(keys)], parties)


def test_common_p1_is_deterministic(tiny):
    assert mphe.common_p1(tiny, 3) == mphe.common_p1(tiny, 3)
    assert not mphe.common_p1(tiny, 3) == mphe.common_p1(tiny, 4)


def test_joint_decryption_matches_combined_key(parties, rng):
    keys, cpk, enc = parties
    pk = cpk.as_public_key()
    csk = mphe.combined_secret(sk for _, sk in keys)
    for _ in range(5):
        m = rng.integers(0, pk.params.t, pk.params.n)
        ct = bfv.enc(pk, enc.encode(m), rng)
        joint = enc.decode(joint_decrypt(keys, ct, rng))
        assert list(joint) == list(m)
        assert list(enc.decode(bfv.dec(csk, ct))) == list(m)


def test_fold_then_decrypt_product(parties, rng):
    keys, cpk, enc = parties
    pk = cpk.as_public_key()
    t = pk.params.t
    a = rng.integers(0, t, pk.params.n).astype(object)
    b = rng.integers(0, 1 << 12, pk.params.n).astype(object)
    ct = bfv.multiply(bfv.enc(pk, enc.encode(a), rng), bfv.enc(pk, enc.encode(b), rng))
    with pytest.raises(mphe.MpheError):
        mphe.reconstruct(ct, keys[0][1], rng)
    with pytest.raises(mphe.MpheError):
        mphe.mphe_dec(ct, [])
    folded = mphe.fold(ct, [mphe.fold_share(ct, sk, rng, i) for i, (_, sk) in enumerate(keys)], range(3))
    assert folded.degree == 1
    assert list(enc.decode(joint_decrypt(keys, folded, rng))) == list(a * b % t)
    with pytest.raises(mphe.MpheError):
        mphe.fold_share(folded, keys[0][1], rng)


def test_missing_or_duplicate_partial_decryptions(parties, rng):
    keys, cpk, enc = parties
    pk = cpk.as_public_key()
    ct = bfv.enc(pk, enc.encode(np.arange(pk.params.n)), rng)
    pds = [mphe.reconstruct(ct, sk, rng, i) for i, (_, sk) in enumerate(keys)]
    with pytest.raises(mphe.MpheError, match="missing"):
        mphe.mphe_dec(ct, pds[:2], parties=range(3))
    with pytest.raises(mphe.MpheError, match="duplicate"):
        mphe.mphe_dec(ct, [pds[0], pds[0], pds[1]])
    # without the party list, two of three shares decrypt to garbage rather than m
    wrong = enc.decode(mphe.mphe_dec(ct, pds[:2]))
    assert list(wrong) != list(range(pk.params.n))


def test_dkeygen_rejects_mismatched_p1(tiny, rng):
    a = mphe.mphe_keygen(tiny, mphe.common_p1(tiny, 1), rng)[0]
    b = mphe.mphe_keygen(tiny, mphe.common_p1(tiny, 2), rng)[0]
    with pytest.raises(mphe.MpheError):
        mphe.dkeygen([a, b])
    with pytest.raises(mphe.MpheError):
        mphe.dkeygen([])


def test_serialization(parties, rng):
    keys, cpk, enc = parties
    cpk2 = mphe.CommonPublicKey.from_bytes(cpk.to_bytes())
    ct = bfv.enc(cpk2.as_public_key(), enc.encode(np.arange(cpk.params.n)), rng)
    pds = [mphe.PartialDecryption.from_bytes(mphe.reconstruct(ct, sk, rng, i).to_bytes())
           for i, (_, sk) in enumerate(keys)]
    assert [pd.party for pd in pds] == [0, 1, 2]
    assert list(enc.decode(mphe.mphe_dec(ct, pds, range(3)))) == list(range(cpk.params.n))
