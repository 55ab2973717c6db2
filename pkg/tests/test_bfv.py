import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seco import bfv


@pytest.fixture(scope="module")
def keys(tiny):
    rng = np.random.default_rng(5)
    pk, sk = bfv.keygen(tiny, rng)
    return pk, sk, bfv.SlotEncoder(tiny)


def roundtrip(keys, ct):
    pk, sk, enc = keys
    return np.asarray(enc.decode(bfv.dec(sk, ct)), dtype=object)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_encrypt_decrypt(keys, seed):
    pk, sk, enc = keys
    rng = np.random.default_rng(seed)
    m = rng.integers(0, pk.params.t, pk.params.n)
    assert list(roundtrip(keys, bfv.enc(pk, enc.encode(m), rng))) == list(m)


def test_encoder_pads_short_and_rejects_long(keys):
    enc = keys[2]
    assert list(enc.decode(enc.encode([4, 5, 6]))[:4]) == [4, 5, 6, 0]
    with pytest.raises(bfv.BfvError):
        enc.encode(np.zeros(enc.params.n + 1))


def test_arithmetic_against_plaintext(keys, rng):
    pk, sk, enc = keys
    t, n = pk.params.t, pk.params.n
    a = rng.integers(0, t, n).astype(object)
    b = rng.integers(0, t, n).astype(object)
    ca, pb = bfv.enc(pk, enc.encode(a), rng), enc.encode(b)
    cb = bfv.enc(pk, pb, rng)
    assert list(roundtrip(keys, bfv.evaluate(pk, [ca, cb], bfv.ADD))) == list((a + b) % t)
    assert list(roundtrip(keys, bfv.evaluate(pk, [ca, pb], bfv.SUB))) == list((a - b) % t)
    assert list(roundtrip(keys, bfv.evaluate(pk, [pb, ca], bfv.SUB))) == list((b - a) % t)
    assert list(roundtrip(keys, bfv.evaluate(pk, [pb, ca], bfv.MUL_PLAIN))) == list(a * b % t)
    assert list(roundtrip(keys, bfv.negate(ca))) == list(-a % t)
    with pytest.raises(bfv.BfvError):
        bfv.evaluate(pk, [ca, cb], "div")


@pytest.mark.parametrize("step", [1, 2, 7, 100])
def test_rotation_rotates_each_row(keys, rng, step):
    pk, sk, enc = keys
    n, half = pk.params.n, pk.params.n // 2
    m = rng.integers(0, 1000, n)
    got = roundtrip(keys, bfv.evaluate(pk, [bfv.enc(pk, enc.encode(m), rng)], bfv.Rot(step)))
    assert list(got) == list(np.concatenate([np.roll(m[:half], -step), np.roll(m[half:], -step)]))


def test_missing_galois_key(tiny, rng):
    pk, _ = bfv.keygen(tiny, rng, galois_steps=(2,))
    ct = bfv.enc(pk, bfv.SlotEncoder(tiny).encode(np.zeros(tiny.n, dtype=np.int64)), rng)
    with pytest.raises(bfv.MissingGaloisKey):
        bfv.rotate(pk, ct, 1)


def test_multiply_and_mod_switch(keys, rng):
    pk, sk, enc = keys
    t, n = pk.params.t, pk.params.n
    a = rng.integers(0, t, n).astype(object)
    b = rng.integers(0, 1 << 16, n).astype(object)
    prod = bfv.multiply(bfv.enc(pk, enc.encode(a), rng), bfv.enc(pk, enc.encode(b), rng))
    assert prod.degree == 2
    assert list(roundtrip(keys, prod)) == list(a * b % t)
    ct = bfv.enc(pk, enc.encode(a), rng)
    small = bfv.mod_switch_down(ct, 2)
    assert len(small.moduli) == 2
    assert list(roundtrip(keys, small)) == list(a)
    with pytest.raises(bfv.BfvError):
        bfv.mod_switch_down(ct, 0)


def test_noise_budget_shrinks(keys, rng):
    pk, sk, enc = keys
    ct = bfv.enc(pk, enc.encode(rng.integers(0, 100, pk.params.n)), rng)
    fresh = bfv.noise_budget_bits(sk, ct)
    assert fresh > 20
    assert bfv.noise_budget_bits(sk, bfv.multiply(ct, ct)) < fresh


@pytest.mark.parametrize("shape", [(5, 7), (16, 16), (3, 30)])
def test_lin_op_matches_matvec(tiny, rng, shape):
    rows, cols = shape
    enc = bfv.SlotEncoder(tiny)
    t = tiny.t
    mat = rng.integers(-1000, 1000, shape)
    r = rng.integers(0, t, cols)
    plan = bfv.plan_lin_op(enc, mat)
    pk, sk = bfv.keygen(tiny, rng, galois_steps=plan.rotation_steps)
    ct = bfv.enc(pk, enc.encode(bfv.tile(r, plan.d, tiny.n)), rng)
    got = np.asarray(enc.decode(bfv.dec(sk, bfv.lin_op(pk, ct, plan))), dtype=object)
    expected = np.mod(mat.astype(object).dot(r.astype(object)), t)
    assert list(got[:rows]) == list(expected)


def test_lin_op_rejects_oversized_matrix(tiny):
    with pytest.raises(bfv.BfvError):
        bfv.plan_lin_op(bfv.SlotEncoder(tiny), np.ones((4, tiny.n)))


def test_serialization_round_trips(keys, rng):
    pk, sk, enc = keys
    m = rng.integers(0, 1000, pk.params.n)
    ct = bfv.enc(pk, enc.encode(m), rng)
    assert list(roundtrip(keys, bfv.Ciphertext.from_bytes(ct.to_bytes()))) == list(m)
    pk2 = bfv.public_key_from_bytes(bfv.public_key_bytes(pk))
    assert sorted(pk2.galois) == sorted(pk.galois)
    assert list(roundtrip(keys, bfv.rotate(pk2, bfv.enc(pk2, enc.encode(m), rng), 1)))[0] == m[1]
    with pytest.raises(bfv.BfvError):
        bfv.deserialize_elements(ct.to_bytes()[:-3])
