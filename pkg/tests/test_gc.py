import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seco.gc import circuit as gcc
from seco.gc import garble as gcg
from seco.gc import ot

P = 2013265921


def run_garbled(circuit, values, rng, copies):
    gc, encoding = gcg.garble(circuit, rng, copies)
    labels = {g.name: encoding.encode(g.name, values[g.name]) for g in circuit.inputs}
    return gcg.evaluate(gc, labels)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255))
def test_adder_plain_evaluation(a, b):
    out = gcc.build_adder(8).evaluate({"a": a, "b": b})
    assert int(out["sum"]) == a + b  # carry bit included


def test_builder_helpers_against_integers(rng):
    bld = gcc.Builder()
    a = bld.input("x", "a", 12)
    b = bld.input("y", "b", 12)
    p = 3001
    bld.output("add", bld.add_mod(a, b, p))
    bld.output("sub", bld.sub_mod(a, b, p))
    bld.output("neg", bld.neg_mod(a, p))
    bld.output("geq", [bld.geq_const(a, 1500)])
    circuit = bld.build(12, p)
    av, bv = rng.integers(0, p, 300), rng.integers(0, p, 300)
    out = circuit.evaluate({"a": av, "b": bv})
    assert list(out["add"]) == list((av + bv) % p)
    assert list(out["sub"]) == list((av - bv) % p)
    assert list(out["neg"]) == list(-av % p)
    assert list(out["geq"]) == list((av >= 1500).astype(int))


@pytest.mark.parametrize("activation", ["relu", "identity"])
@pytest.mark.parametrize("shift", [0, 10])
def test_share_circuits_match_reference(rng, activation, shift):
    oracle = gcc.reference_share_function(P, shift, activation)
    c3 = gcc.build_relu_circuit_3pc(None, P, shift, activation)
    vals = {g.name: rng.integers(0, P, 64) for g in c3.inputs}
    out = c3.evaluate(vals)["out"]
    for i in range(64):
        exp = oracle([vals[k][i] for k in ("a_share", "b_share", "c_share")],
                     [vals[k][i] for k in ("r1_next", "r2_next", "r3_next")])
        assert int(out[i]) == exp


def test_reference_function_semantics():
    relu = gcc.reference_share_function(P, 10, "relu")
    ident = gcc.reference_share_function(P, 10, "identity")
    assert relu([5 << 10, 0], [0]) == 5
    assert relu([P - (5 << 10)], [0]) == 0
    assert ident([P - (5 << 10)], [0]) == P - 5
    assert ident([3 << 10], [1, 1]) == 1


def test_circuit_errors():
    with pytest.raises(gcc.CircuitError):
        gcc.build_relu_circuit_2pc(None, P, 0, "sigmoid")
    with pytest.raises(gcc.CircuitError):
        gcc.build_relu_circuit_2pc(8, P)
    with pytest.raises(gcc.CircuitError):
        gcc.build_relu_circuit_2pc(None, P, 40)


def test_garbled_2pc_relu(rng):
    circuit = gcc.build_relu_circuit_2pc(None, P, 10, "relu")
    vals = {g.name: rng.integers(0, P, 200) for g in circuit.inputs}
    assert list(run_garbled(circuit, vals, rng, 200)["out"]) == list(circuit.evaluate(vals)["out"])


def test_garbled_table_serialization_and_tamper(rng):
    circuit = gcc.build_adder(8)
    gc, encoding = gcg.garble(circuit, rng, 4)
    blob = gc.to_bytes()
    gc2 = gcg.GarbledCircuit.from_bytes(circuit, blob)
    labels = {"a": encoding.encode("a", [1, 2, 3, 250]), "b": encoding.encode("b", [1, 2, 3, 10])}
    assert list(gcg.evaluate(gc2, labels)["sum"]) == [2, 4, 6, 260]
    wire_blob = gcg.labels_to_bytes(labels["a"])
    assert np.array_equal(gcg.labels_from_bytes(wire_blob, 8, 4), labels["a"])
    bad = bytearray(blob)
    bad[len(bad) // 2] ^= 1
    with pytest.raises(gcg.GcError):
        gcg.evaluate(gcg.GarbledCircuit.from_bytes(circuit, bytes(bad)), labels)


def test_wrong_label_is_not_silently_accepted(rng):
    circuit = gcc.build_adder(8)
    gc, encoding = gcg.garble(circuit, rng, 1)
    labels = {"a": encoding.encode("a", [3]), "b": gcg.random_labels(rng, (8, 1))}
    with pytest.raises(gcg.GcError):
        gcg.evaluate(gc, labels)


def test_base_ot(rng):
    pairs = rng.integers(0, 2**63, (6, 2, 2), dtype=np.uint64)
    choices = np.array([0, 1, 1, 0, 1, 0], dtype=np.uint8)
    got = ot.ot_transfer(pairs, choices, rng)
    assert np.array_equal(got, pairs[np.arange(6), choices])


def test_iknp_extension_reuses_base_transfers(rng):
    sender, receiver = ot.ExtSender(rng), ot.ExtReceiver(rng)
    for count in (1, 300, 1000):
        pairs = rng.integers(0, 2**63, (count, 2, 2), dtype=np.uint64)
        choices = rng.integers(0, 2, count).astype(np.uint8)
        got = ot.ext_transfer(pairs, choices, rng, sender, receiver)
        assert np.array_equal(got, pairs[np.arange(count), choices])
        assert sender.ready


def test_dealer_and_choice_bits(rng):
    dealer = ot.Dealer(timeout=1)
    pairs = rng.integers(0, 2**63, (16, 2, 2), dtype=np.uint64)
    bits = ot.choice_bits([0b1010, 0b0110], 8)
    assert list(bits[:4]) == [0, 0, 1, 1]
    dealer.offer("x", pairs)
    assert np.array_equal(dealer.choose("x", bits), pairs[np.arange(16), bits])
    with pytest.raises(ot.OtError):
        dealer.choose("never", bits)


def test_ot_labels_evaluate_circuit(rng):
    """Garbler ships evaluator labels through OT, as the protocol does."""
    circuit = gcc.build_adder(8)
    gc, encoding = gcg.garble(circuit, rng, 3)
    b = [7, 200, 255]
    got = ot.ext_transfer(encoding.pairs("b").reshape(-1, 2, 2), ot.choice_bits(b, 8), rng)
    labels = {"a": encoding.encode("a", [1, 100, 1]), "b": got.reshape(8, 3, 2)}
    assert list(gcg.evaluate(gc, labels)["sum"]) == [8, 300, 256]
