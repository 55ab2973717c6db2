import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seco import ring


def schoolbook(a, b, p):
    n = len(a)
    out = [0] * n
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            k = i + j
            if k < n:
                out[k] += x * y
            else:
                out[k - n] -= x * y
    return [v % p for v in out]


def test_tiny_profile_primes_are_frozen(tiny):
    assert tiny.n == 256
    assert tiny.q_primes == (2147483137, 2147478017, 2147473921, 2147473409)
    assert all((p - 1) % (2 * tiny.n) == 0 for p in tiny.q_primes + tiny.aux_primes)


def test_desk_and_paper_profiles():
    desk, paper = ring.profile("desk"), ring.profile("paper")
    assert (desk.n, desk.t, desk.k) == (2048, 2013265921, 4)
    assert (paper.n, paper.t, paper.k) == (8192, 2061584302081, 5)
    with pytest.raises(ValueError):
        ring.profile("huge")


def test_params_validation():
    with pytest.raises(ValueError):
        ring.RingParams("bad", 100, (12289,), 17)
    with pytest.raises(ValueError):
        ring.RingParams("bad", 16, (101,), 17)


@pytest.mark.parametrize("n", [8, 64, 256])
def test_ntt_product_matches_schoolbook(n, rng):
    moduli = ring.find_ntt_primes(n, 2)
    a = rng.integers(-1000, 1000, n)
    b = rng.integers(-1000, 1000, n)
    prod = ring.from_ints(a, moduli) * ring.from_ints(b, moduli)
    for row, p in zip(prod.data, moduli):
        assert [int(v) for v in row] == schoolbook([int(v) for v in a], [int(v) for v in b], p)


def test_ntt_round_trip(tiny, rng):
    x = ring.sample_uniform(tiny.q_primes, tiny.n, rng)
    assert np.array_equal(x.to_ntt().to_coeff().data, x.data)


def test_negacyclic_wrap(tiny):
    # X^(n-1) * X = X^n = -1
    moduli = tiny.q_primes
    a = np.zeros(tiny.n, dtype=np.int64)
    a[-1] = 1
    b = np.zeros(tiny.n, dtype=np.int64)
    b[1] = 1
    c = (ring.from_ints(a, moduli) * ring.from_ints(b, moduli)).centered()
    assert c[0] == -1 and not any(c[1:])


def test_ring_element_arithmetic(tiny, rng):
    moduli = tiny.q_primes
    a = rng.integers(-50, 50, tiny.n)
    b = rng.integers(-50, 50, tiny.n)
    ea, eb = ring.from_ints(a, moduli), ring.from_ints(b, moduli)
    assert list((ea + eb).centered()) == list(a + b)
    assert list((ea - eb).centered()) == list(a - b)
    assert list((-ea).centered()) == list(-a)
    assert list((ea * 3).centered()) == list(3 * a)
    assert ea.to_ntt() + eb == ea + eb
    with pytest.raises(ring.ModulusMismatch):
        ea + ring.from_ints(b, moduli[:2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=(1 << 120) - 1), min_size=1, max_size=8))
def test_crt_round_trip(values):
    moduli = ring.profile("tiny").q_primes
    residues = np.array([[v % p for v in values] for p in moduli], dtype=np.uint64)
    q = math.prod(moduli)
    assert [int(v) for v in ring.crt_reconstruct(residues, moduli)] == [v % q for v in values]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=-(1 << 60), max_value=1 << 60), min_size=1, max_size=8))
def test_extend_basis_keeps_centered_value(values):
    p = ring.profile("tiny")
    src, dst = p.q_primes[:3], p.aux_primes
    residues = np.array([[v % m for v in values] for m in src], dtype=np.uint64)
    out = ring.extend_basis(residues, src, dst)
    for row, m in zip(out, dst):
        assert [int(v) for v in row] == [v % m for v in values]


def test_gaussian_sampler_moments(desk, rng):
    e = ring.gaussian_ints(desk.sigma, 200_000, rng)
    assert abs(e.mean()) < 0.05
    assert abs(e.std() - desk.sigma) < 0.05


def test_ternary_sampler(tiny, rng):
    s = ring.sample_ternary(tiny, rng).centered()
    assert set(int(v) for v in s) <= {-1, 0, 1}
