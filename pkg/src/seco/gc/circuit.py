"""Boolean circuits over XOR/AND/NOT and the modular share-recombination circuits."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

XOR, AND, NOT = 0, 1, 2
_OP_NAMES = {XOR: "XOR", AND: "AND", NOT: "NOT"}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class InputGroup:
    party: str
    name: str
    wires: tuple[int, ...]  # least significant bit first


@dataclass(frozen=True)
class BoolCircuit:
    num_wires: int
    gates: tuple[tuple[int, int, int, int], ...]  # (op, a, b, out); b = -1 for NOT
    inputs: tuple[InputGroup, ...]
    outputs: tuple[tuple[str, tuple[int, ...]], ...]
    bitwidth: int = 0
    modulus: int = 0

    @property
    def and_count(self) -> int:
        return sum(1 for g in self.gates if g[0] == AND)

    @property
    def xor_count(self) -> int:
        return sum(1 for g in self.gates if g[0] == XOR)

    @property
    def not_count(self) -> int:
        return sum(1 for g in self.gates if g[0] == NOT)

    def group(self, name: str) -> InputGroup:
        for g in self.inputs:
            if g.name == name:
                return g
        raise CircuitError(f"no input group {name!r}")

    def groups_of(self, party: str) -> list[InputGroup]:
        return [g for g in self.inputs if g.party == party]

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(np.array(self.gates, dtype=np.int64).tobytes())
        for g in self.inputs:
            h.update(f"{g.party}:{g.name}:{len(g.wires)};".encode())
        return h.digest()

    def validate(self):
        driven = np.zeros(self.num_wires, dtype=bool)
        for g in self.inputs:
            for w in g.wires:
                if driven[w]:
                    raise CircuitError(f"wire {w} driven twice")
                driven[w] = True
        for op, a, b, out in self.gates:
            if not driven[a] or (op != NOT and not driven[b]):
                raise CircuitError("gate reads an undriven wire")
            if driven[out]:
                raise CircuitError(f"wire {out} driven twice")
            driven[out] = True
        for _, wires in self.outputs:
            if not all(driven[w] for w in wires):
                raise CircuitError("output wire never driven")

    def evaluate(self, values: dict) -> dict:
        """Plaintext evaluation; each input may be an int or an int array (vectorised)."""
        m = None
        for v in values.values():
            arr = np.asarray(v)
            if arr.ndim:
                m = arr.shape[0]
        shape = (m,) if m is not None else ()
        wires: list = [None] * self.num_wires
        for g in self.inputs:
            if g.name not in values:
                raise CircuitError(f"missing input {g.name!r}")
            vals = np.broadcast_to(np.asarray(values[g.name], dtype=object), shape)
            for i, w in enumerate(g.wires):
                wires[w] = np.array((vals >> i) & 1, dtype=bool)
        for op, a, b, out in self.gates:
            if op == XOR:
                wires[out] = wires[a] ^ wires[b]
            elif op == AND:
                wires[out] = wires[a] & wires[b]
            else:
                wires[out] = ~wires[a]
        return {name: bits_to_int([wires[w] for w in ws]) for name, ws in self.outputs}


def bits_to_int(bits) -> np.ndarray | int:
    acc = 0
    for i, b in enumerate(bits):
        acc = acc + (np.asarray(b).astype(object) << i)
    return acc


class Builder:
    """Incremental circuit construction with constant folding.

    A bit is a wire index (int >= 0) or one of the Python constants
    ``False``/``True``; gates with constant operands are simplified away.
    """

    def __init__(self):
        self.num_wires = 0
        self.gates: list[tuple[int, int, int, int]] = []
        self.inputs: list[InputGroup] = []
        self.outputs: list[tuple[str, tuple[int, ...]]] = []
        self._zero = None

    def _wire(self) -> int:
        w = self.num_wires
        self.num_wires += 1
        return w

    def input(self, party: str, name: str, width: int) -> list:
        wires = tuple(self._wire() for _ in range(width))
        self.inputs.append(InputGroup(party, name, wires))
        return list(wires)

    @staticmethod
    def _const(x):
        return isinstance(x, bool)

    def xor(self, a, b):
        if self._const(a) and self._const(b):
            return a ^ b
        if self._const(a):
            a, b = b, a
        if self._const(b):
            return self.not_(a) if b else a
        if a == b:
            return False
        out = self._wire()
        self.gates.append((XOR, a, b, out))
        return out

    def and_(self, a, b):
        if self._const(a) and self._const(b):
            return a and b
        if self._const(a):
            a, b = b, a
        if self._const(b):
            return a if b else False
        if a == b:
            return a
        out = self._wire()
        self.gates.append((AND, a, b, out))
        return out

    def not_(self, a):
        if self._const(a):
            return not a
        out = self._wire()
        self.gates.append((NOT, a, -1, out))
        return out

    def _materialize(self, bit) -> int:
        if not self._const(bit):
            return bit
        if self._zero is None:
            w0 = self.inputs[0].wires[0]
            self._zero = self._wire()
            self.gates.append((XOR, w0, w0, self._zero))
        return self.not_(self._zero) if bit else self._zero

    def output(self, name: str, bits):
        self.outputs.append((name, tuple(self._materialize(b) for b in bits)))

    def build(self, bitwidth: int = 0, modulus: int = 0) -> BoolCircuit:
        c = BoolCircuit(self.num_wires, tuple(self.gates), tuple(self.inputs), tuple(self.outputs),
                        bitwidth, modulus)
        c.validate()
        return c

    # -- word arithmetic, LSB first -------------------------------------------

    def add(self, a, b, carry=False):
        """Ripple-carry sum; returns len(a)+1 bits.  One AND per bit."""
        out = []
        for x, y in zip(a, b):
            xc = self.xor(x, carry)
            yc = self.xor(y, carry)
            out.append(self.xor(xc, y))
            carry = self.xor(carry, self.and_(xc, yc))
        out.append(carry)
        return out

    def sub(self, a, b):
        """a - b over len(a) bits; returns (difference, no_borrow) where no_borrow = (a >= b)."""
        s = self.add(a, [self.not_(x) for x in b], True)
        return s[:-1], s[-1]

    def mux(self, sel, if_true, if_false):
        return [self.xor(f, self.and_(sel, self.xor(t, f))) for t, f in zip(if_true, if_false)]

    def add_mod(self, a, b, p: int):
        width = len(a)
        s = self.add(a, b)
        d, ge = self.sub(s, const_bits(p, width + 1))
        return self.mux(ge, d[:width], s[:width])

    def sub_mod(self, a, b, p: int):
        d, ge = self.sub(a, b)
        lt = self.not_(ge)
        fix = [self.and_(lt, bit) for bit in const_bits(p, len(a))]
        return self.add(d, fix)[: len(a)]

    def neg_mod(self, a, p: int):
        return self.sub_mod(const_bits(0, len(a)), a, p)

    def geq_const(self, a, c: int):
        _, ge = self.sub(a, const_bits(c, len(a)))
        return ge


def const_bits(value: int, width: int) -> list:
    return [bool((value >> i) & 1) for i in range(width)]


def bitwidth_for(p: int) -> int:
    return max(1, (p - 1).bit_length())


def _truncate(bld: Builder, v, p: int, shift: int, activation: str):
    """Signed right shift toward zero, then ReLU or identity, all mod p."""
    neg = bld.geq_const(v, (p + 1) // 2)
    if activation == "relu":
        kept = v[shift:] + [False] * shift
        return [bld.and_(x, bld.not_(neg)) for x in kept]
    if shift == 0:
        return v
    mag = bld.mux(neg, bld.neg_mod(v, p), v)
    shifted = mag[shift:] + [False] * shift
    return bld.mux(neg, bld.neg_mod(shifted, p), shifted)


def _share_circuit(p: int, bitwidth: int | None, shift: int, activation: str, parties) -> BoolCircuit:
    if activation not in ("relu", "identity"):
        raise CircuitError(f"unknown activation {activation!r}")
    width = bitwidth if bitwidth is not None else bitwidth_for(p)
    if p >= 1 << width:
        raise CircuitError("modulus does not fit the bitwidth")
    if not 0 <= shift < width:
        raise CircuitError("shift out of range")
    bld = Builder()
    shares, masks = [], []
    for party, share_name, mask_names in parties:
        shares.append(bld.input(party, share_name, width))
        masks.extend(bld.input(party, m, width) for m in mask_names)
    v = shares[0]
    for s in shares[1:]:
        v = bld.add_mod(v, s, p)
    y = _truncate(bld, v, p, shift, activation)
    for m in masks:
        y = bld.sub_mod(y, m, p)
    bld.output("out", y)
    return bld.build(width, p)


def build_relu_circuit_2pc(bitwidth: int | None, p: int, shift: int = 0, activation: str = "relu") -> BoolCircuit:
    """User supplies (Fr - s, r_next); server A supplies (F(x - r) + s, d_next).

    Output: act(trunc(sum of shares)) - r_next - d_next mod p.
    """
    return _share_circuit(p, bitwidth, shift, activation, [
        ("user", "user_share", ("r_next",)),
        ("A", "a_share", ("d_next",)),
    ])


def build_relu_circuit_3pc(bitwidth: int | None, p: int, shift: int = 0, activation: str = "relu") -> BoolCircuit:
    """Servers A, B, C each supply a share of F x and a share of the next mask.

    Output: act(trunc(sum of shares)) - r1 - r2 - r3 mod p.
    """
    return _share_circuit(p, bitwidth, shift, activation, [
        ("A", "a_share", ("r1_next",)),
        ("B", "b_share", ("r2_next",)),
        ("C", "c_share", ("r3_next",)),
    ])


def build_adder(width: int = 8) -> BoolCircuit:
    bld = Builder()
    a = bld.input("garbler", "a", width)
    b = bld.input("evaluator", "b", width)
    bld.output("sum", bld.add(a, b))
    return bld.build(width)


def reference_share_function(p: int, shift: int, activation: str):
    """Integer oracle matching the share circuits."""
    half = (p + 1) // 2

    def f(shares, masks):
        v = sum(int(s) for s in shares) % p
        neg = v >= half
        if activation == "relu":
            y = 0 if neg else v >> shift
        else:
            mag = (p - v) % p if neg else v
            y = (-(mag >> shift)) % p if neg else mag >> shift
        return (y - sum(int(m) for m in masks)) % p

    return f
