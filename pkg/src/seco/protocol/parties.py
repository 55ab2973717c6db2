"""The four party scripts: user, gateway server A, remote servers B and C.

Each party runs its own sequential script and only talks through its
endpoint.  `recv` checks sender, phase, kind and layer of every frame;
anything unexpected aborts with ProtocolError.  Frame layer numbers count
protocol stages from 1 (0 for key material and the final output).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from seco import bfv, mphe, nn, ring
from seco.gc import circuit as gcc
from seco.gc import garble as gcg
from seco.gc import ot
from seco.protocol import records as rec
from seco.protocol.messages import Kind, PartyId, Phase, ProtocolError
from seco.protocol import messages as msg
from seco.transport import Endpoint

MODES = ("seco", "delphi2", "delphi3")
OUTPUT_MODULI_KEPT = 2


@dataclass(frozen=True)
class ProtocolConfig:
    mode: str = "seco"
    l: int = 0
    profile: str = "desk"
    dealer_ot: bool = False
    zero_randomness: bool = False
    corrupt_stage: int | None = None  # test-only: perturb one stage's share
    keep_views: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class StageShape:
    """Public architecture facts about one stage."""

    index: int
    layer: int
    rows: int
    cols: int
    shift: int
    activation: str
    is_last: bool

    @property
    def has_gc(self) -> bool:
        return not (self.is_last and self.activation == "identity")

    @classmethod
    def of(cls, st: nn.Stage) -> "StageShape":
        return cls(st.index, st.layer, st.out_size, st.in_size, st.shift, st.activation, st.is_last)


@lru_cache(maxsize=None)
def circuit_for(kind: str, t: int, shift: int, activation: str) -> gcc.BoolCircuit:
    build = gcc.build_relu_circuit_2pc if kind == "2pc" else gcc.build_relu_circuit_3pc
    return build(None, t, shift, activation)


def _pack_stage_meta(sh: StageShape) -> bytes:
    return struct.pack("<HHIIBBB", sh.index, sh.layer, sh.rows, sh.cols, sh.shift,
                       1 if sh.activation == "relu" else 0, int(sh.is_last))


def _unpack_stage_meta(blob: bytes) -> StageShape:
    index, layer, rows, cols, shift, relu, last = struct.unpack_from("<HHIIBBB", blob, 0)
    return StageShape(index, layer, rows, cols, shift, "relu" if relu else "identity", bool(last))


class Party:
    name = "?"

    def __init__(self, pid: PartyId, endpoint: Endpoint, cfg: ProtocolConfig, rng: np.random.Generator,
                 dealer: ot.Dealer | None = None):
        self.pid = pid
        self.ep = endpoint
        self.cfg = cfg
        self.rng = rng
        self.dealer = dealer
        self.params = ring.profile(cfg.profile)
        self.t = self.params.t
        self.encoder = bfv.SlotEncoder(self.params)
        self.book = rec.RecordBook(self.name)
        self.view = rec.ViewLog(self.name, enabled=cfg.keep_views)
        self.phase = Phase.SETUP
        self.inference = 0
        self._ot_out: dict = {}  # peer -> ot.ExtSender
        self._ot_in: dict = {}  # peer -> ot.ExtReceiver
        if cfg.dealer_ot and dealer is None:
            raise ProtocolError("dealer OT needs an in-process dealer")

    # -- framing ---------------------------------------------------------------

    def send(self, to: PartyId, kind: Kind, payload: bytes = b"", layer: int = 0):
        self.ep.send(int(to), int(self.phase), layer, int(kind), payload)

    def recv(self, frm: PartyId, kind: Kind, layer: int | None = None) -> bytes:
        f = self.ep.recv(int(frm))
        if f.receiver != self.pid or f.sender != frm:
            raise ProtocolError(f"{self.name}: misrouted frame from {f.sender}")
        if f.phase != self.phase:
            raise ProtocolError(f"{self.name}: got a {Phase(f.phase).name} frame during {self.phase.name}", f.layer)
        if f.kind != kind:
            raise ProtocolError(f"{self.name}: expected {kind.name} from {PartyId(frm).name}, got kind {f.kind}",
                                f.layer)
        if layer is not None and f.layer != layer:
            raise ProtocolError(f"{self.name}: {kind.name} for layer {f.layer}, expected {layer}", f.layer)
        return f.payload

    def mask(self, size) -> np.ndarray:
        return rec.sample_mask(self.rng, size, self.t, self.cfg.zero_randomness)

    def _tag(self, stage: int, name: str):
        return (self.inference, stage, name)

    # -- oblivious transfer ----------------------------------------------------------

    def ot_send(self, to: PartyId, stage: int, name: str, pairs: np.ndarray):
        pairs = pairs.reshape(-1, 2, 2)
        if self.cfg.dealer_ot:
            self.dealer.offer(self._tag(stage, name), pairs)
            return
        layer = stage + 1
        ext = self._ot_out.get(to)
        if ext is None:
            # first transfer to this peer: base transfers with the roles reversed
            ext = self._ot_out[to] = ot.ExtSender(self.rng)
            hello = self.recv(to, Kind.BASE_OT_HELLO, layer)
            self.send(to, Kind.BASE_OT_REPLY, ext.base_reply(hello), layer)
            ext.base_finish(self.recv(to, Kind.BASE_OT_PAYLOAD, layer))
        request = self.recv(to, Kind.OT_EXT_REQUEST, layer)
        self.send(to, Kind.OT_EXT_REPLY, ext.send(request, pairs), layer)

    def ot_recv(self, frm: PartyId, stage: int, name: str, choices) -> np.ndarray:
        if self.cfg.dealer_ot:
            return self.dealer.choose(self._tag(stage, name), choices)
        layer = stage + 1
        ext = self._ot_in.get(frm)
        if ext is None:
            ext = self._ot_in[frm] = ot.ExtReceiver(self.rng)
            self.send(frm, Kind.BASE_OT_HELLO, ext.base_hello(), layer)
            reply = self.recv(frm, Kind.BASE_OT_REPLY, layer)
            self.send(frm, Kind.BASE_OT_PAYLOAD, ext.base_payload(reply), layer)
        self.send(frm, Kind.OT_EXT_REQUEST, ext.request(choices), layer)
        return ext.finish(self.recv(frm, Kind.OT_EXT_REPLY, layer))

    def ot_send_groups(self, to: PartyId, stage: int, enc: gcg.InputEncoding, names):
        pairs = np.concatenate([enc.pairs(n).reshape(-1, 2, 2) for n in names])
        self.ot_send(to, stage, "+".join(names), pairs)

    def ot_recv_groups(self, frm: PartyId, stage: int, circuit: gcc.BoolCircuit, values: dict, copies: int) -> dict:
        names = list(values)
        width = circuit.bitwidth
        choices = np.concatenate([ot.choice_bits(values[n], width) for n in names])
        got = self.ot_recv(frm, stage, "+".join(names), choices)
        out = {}
        for i, n in enumerate(names):
            out[n] = got[i * width * copies:(i + 1) * width * copies].reshape(width, copies, 2)
        return out

    # -- run bookkeeping --------------------------------------------------------------

    def begin(self, phase: Phase):
        self.phase = phase

    def setup(self):
        pass

    def preprocess(self):
        pass

    def online(self, x=None):
        return None


def _labels_payload(groups: dict) -> bytes:
    return msg.pack_blobs(gcg.labels_to_bytes(groups[n]) for n in sorted(groups))


def _labels_from_payload(blob: bytes, names, width: int, copies: int) -> dict:
    parts = msg.unpack_blobs(blob)
    names = sorted(names)
    if len(parts) != len(names):
        raise ProtocolError("label bundle has the wrong number of groups")
    return {n: gcg.labels_from_bytes(p, width, copies) for n, p in zip(names, parts)}


# ==========================================================================================
# user
# ==========================================================================================

class User(Party):
    name = "user"

    def __init__(self, endpoint, cfg, rng, shapes: list[StageShape], g: int, dealer=None):
        super().__init__(PartyId.USER, endpoint, cfg, rng, dealer)
        self.shapes = shapes
        self.g = g
        self.S = len(shapes)
        self.sk0 = None

    def _mask_size(self, k: int) -> int:
        return self.shapes[k].cols if k < self.S else self.shapes[-1].rows

    def preprocess(self):
        self.begin(Phase.PREPROCESS)
        self.inference += 1
        self.book.clear()
        g, S = self.g, self.S
        steps = sorted({s for sh in self.shapes[:g] for s in bfv.lin_op_rotation_steps(sh.rows, sh.cols)})
        pk0, self.sk0 = bfv.keygen(self.params, self.rng, galois_steps=tuple(steps))
        self.send(PartyId.A, Kind.USER_PK, bfv.public_key_bytes(pk0))
        masks = [self.mask(self._mask_size(k)) for k in range(g + 1)]
        self.out_mask = masks[S] if g == S else None
        # the first remote stage: the user alone contributes its input mask
        if g < S:
            cpk = mphe.CommonPublicKey.from_bytes(self.recv(PartyId.A, Kind.CPK_USER))
            sh = self.shapes[g]
            ct = bfv.enc(cpk.as_public_key(),
                         self.encoder.encode(rec.expand_vector(masks[g], sh.cols, self.params.n)), self.rng)
            self.send(PartyId.A, Kind.R_CT, msg.pack_cts([ct]), g + 1)
        # gateway linear layers: send Enc(r_k), get back Enc(F r_k - s_k)
        for k in range(g):
            sh = self.shapes[k]
            d = bfv.next_pow2(max(sh.rows, sh.cols))
            ct = bfv.enc(pk0, self.encoder.encode(bfv.tile(masks[k], d, self.params.n)), self.rng)
            self.send(PartyId.A, Kind.GW_R_CT, ct.to_bytes(), k + 1)
        shares = {}
        for k in range(g):
            sh = self.shapes[k]
            ct = bfv.Ciphertext.from_bytes(self.recv(PartyId.A, Kind.GW_LIN_CT, k + 1))
            shares[k] = np.asarray(self.encoder.decode(bfv.dec(self.sk0, ct))[: sh.rows], dtype=object)
        # gateway garbled circuits
        gcs = {}
        for k in range(g):
            sh = self.shapes[k]
            if not sh.has_gc:
                continue
            circuit = circuit_for("2pc", self.t, sh.shift, sh.activation)
            gc = gcg.GarbledCircuit.from_bytes(circuit, self.recv(PartyId.A, Kind.GC_TABLES, k + 1))
            d_labels = _labels_from_payload(self.recv(PartyId.A, Kind.GC_LABELS, k + 1), ["d_next"],
                                            circuit.bitwidth, sh.rows)
            mine = self.ot_recv_groups(PartyId.A, k, circuit,
                                       {"user_share": shares[k], "r_next": masks[k + 1]}, sh.rows)
            gcs[k] = (gc, {**d_labels, **mine})
        for k in range(g):
            self.book.put(k, rec.GATEWAY, r=masks[k], user_share=shares[k], gc=gcs.get(k))
        if g < S:
            self.book.put(g, rec.TRANSITION, r=masks[g])

    def online(self, x=None):
        self.begin(Phase.ONLINE)
        g, S = self.g, self.S
        self.book.require_fresh(range(min(g + 1, S)))
        x = np.mod(np.asarray(x, dtype=object).reshape(-1), self.t)
        if x.shape[0] != self.shapes[0].cols:
            raise ProtocolError("input size does not match the model")
        first = self.book.take(0)
        self.send(PartyId.A, Kind.MASKED_INPUT, msg.pack_vector(rec.masked(x, first["r"], self.t)), 1)
        user_last = None
        for k in range(g):
            values = first if k == 0 else self.book.take(k)
            sh = self.shapes[k]
            if not sh.has_gc:
                user_last = values["user_share"]
                continue
            gc, labels = values["gc"]
            a_labels = _labels_from_payload(self.recv(PartyId.A, Kind.GW_A_LABELS, k + 1), ["a_share"],
                                            gc.circuit.bitwidth, sh.rows)
            try:
                out = gcg.evaluate(gc, {**labels, **a_labels})["out"]
            except gcg.GcError as exc:
                raise ProtocolError(str(exc), k + 1) from None
            self.view.add("online", k + 1, "gc_out", out)
            self.send(PartyId.A, Kind.GW_MASKED_OUT, msg.pack_vector(out), k + 1)
        if g == S:
            a_part = msg.unpack_vector(self.recv(PartyId.A, Kind.OUT_PLAIN, 0))
            mine = user_last if user_last is not None else self.out_mask
            y = np.mod(a_part + mine, self.t)
        else:
            if g > 0:
                self.book.take(g)
            ct = bfv.Ciphertext.from_bytes(self.recv(PartyId.A, Kind.OUT_CT, 0))
            y = self.encoder.decode(bfv.dec(self.sk0, ct))[: self.shapes[-1].rows]
        return nn.centered(y, self.t)


# ==========================================================================================
# servers
# ==========================================================================================

class Server(Party):
    """Shared machinery of A, B and C: collective keys and remote linear layers."""

    role = 0  # 1, 2 or 3: index of this server's shares

    def disdec_help(self, layer: int, fold: bool):
        """B/C side of a distributed decryption run by A."""
        name = self.params.name
        if fold:
            c2 = msg.unpack_elements(self.recv(PartyId.A, Kind.FOLD_REQ, layer))
            shares = [mphe.partial(p, self.sk, self.rng, self.role).pd for p in c2]
            self.send(PartyId.A, Kind.FOLD_SHARE, msg.pack_elements(name, shares), layer)
        c1 = msg.unpack_elements(self.recv(PartyId.A, Kind.DEC_REQ, layer))
        pds = [mphe.partial(p, self.sk, self.rng, self.role).pd for p in c1]
        self.send(PartyId.A, Kind.PARTIAL_DEC, msg.pack_elements(name, pds), layer)

    def encrypt_share_inputs(self, k: int, f: np.ndarray, r_mine, s_mine):
        """Contributions of B or C to the product (F2 + F3) r - s2 - s3 for stage k."""
        w, q = f.shape
        n = self.params.n
        pk = self.cpk.as_public_key()
        if k > self.g:
            ct_r = bfv.enc(pk, self.encoder.encode(rec.expand_vector(r_mine, q, n)), self.rng)
            self.send(PartyId.A, Kind.R_CT, msg.pack_cts([ct_r]), k + 1)
        f_cts, s_cts = [], []
        for a, b in rec.chunk_bounds(w, q, n):
            f_cts.append(bfv.enc(pk, self.encoder.encode(rec.expand_matrix(np.mod(f[a:b], self.t))), self.rng))
            spread = rec.spread_rowsum(s_mine[a:b], q, self.t, self.rng, self.cfg.zero_randomness)
            s_cts.append(bfv.enc(pk, self.encoder.encode(spread), self.rng))
        self.send(PartyId.A, Kind.F_CT, msg.pack_cts(f_cts), k + 1)
        self.send(PartyId.A, Kind.S_CT, msg.pack_cts(s_cts), k + 1)
        self.disdec_help(k + 1, fold=True)


class ServerA(Server):
    name = "A"
    role = 1

    def __init__(self, endpoint, cfg, rng, model: nn.Model, dealer=None):
        super().__init__(PartyId.A, endpoint, cfg, rng, dealer)
        self.model = model
        self.split = None
        self.plans: dict = {}

    @property
    def stages(self):
        return self.split.stages

    def setup(self):
        self.begin(Phase.SETUP)
        self.split = nn.split_model(self.model, self.cfg.l, self.t, self.rng)
        self.g = len(self.split.gateway)
        self.S = len(self.stages)
        if self.cfg.mode == "delphi2":
            return
        seed = self.rng.bytes(16)
        for peer in (PartyId.B, PartyId.C):
            self.send(peer, Kind.P1_SEED, seed)
        p1 = mphe.common_p1(self.params, seed)
        pk1, self.sk = mphe.mphe_keygen(self.params, p1, self.rng)
        pks = [pk1]
        for peer in (PartyId.B, PartyId.C):
            (p0,) = msg.unpack_elements(self.recv(peer, Kind.PK_SHARE))
            pks.append(bfv.PublicKey(self.params, p0, p1))
        self.cpk = mphe.dkeygen(pks)
        for peer in (PartyId.B, PartyId.C):
            self.send(peer, Kind.CPK, self.cpk.to_bytes())
        # deploy additive weight shares of the remote stages
        for peer, which in ((PartyId.B, 2), (PartyId.C, 3)):
            blobs = []
            for st in self.split.remote:
                sh = self.split.shares[st.index]
                f = sh.f2 if which == 2 else sh.f3
                b = sh.b2 if which == 2 else sh.b3
                bias = np.zeros((0, 0), dtype=np.int64) if b is None else b.reshape(1, -1)
                blobs.append(_pack_stage_meta(StageShape.of(st)) + msg.pack_matrix(f) + msg.pack_matrix(bias))
            self.send(peer, Kind.WEIGHT_SHARES, msg.pack_blobs(blobs))
        self.probe()

    def probe(self):
        """Decrypt a random probe with the three key shares; checks the collective key."""
        probe = self.rng.integers(0, self.t, size=8).astype(object)
        ct = bfv.enc(self.cpk.as_public_key(), self.encoder.encode(probe), self.rng)
        got = self.disdec([ct], layer=0, fold=False)[0][:8]
        if [int(v) for v in got] != [int(v) for v in probe]:
            raise ProtocolError("collective key probe failed to decrypt")

    def disdec(self, cts, layer: int, fold: bool) -> list[np.ndarray]:
        """Distributed decryption with B and C; only A learns the plaintexts."""
        name = self.params.name
        peers = (PartyId.B, PartyId.C)
        if fold:
            c2 = [ct.parts[2] for ct in cts]
            for peer in peers:
                self.send(peer, Kind.FOLD_REQ, msg.pack_elements(name, c2), layer)
            mine = [mphe.fold_share(ct, self.sk, self.rng, 1) for ct in cts]
            theirs = [msg.unpack_elements(self.recv(peer, Kind.FOLD_SHARE, layer)) for peer in peers]
            cts = [mphe.fold(ct, [mine[i], mphe.PartialDecryption(2, theirs[0][i]),
                                  mphe.PartialDecryption(3, theirs[1][i])], parties=(1, 2, 3))
                   for i, ct in enumerate(cts)]
        for peer in peers:
            self.send(peer, Kind.DEC_REQ, msg.pack_elements(name, [ct.c1 for ct in cts]), layer)
        mine = [mphe.reconstruct(ct, self.sk, self.rng, 1) for ct in cts]
        theirs = [msg.unpack_elements(self.recv(peer, Kind.PARTIAL_DEC, layer)) for peer in peers]
        out = []
        for i, ct in enumerate(cts):
            pds = [mine[i], mphe.PartialDecryption(2, theirs[0][i]), mphe.PartialDecryption(3, theirs[1][i])]
            out.append(self.encoder.decode(mphe.mphe_dec(ct, pds, parties=(1, 2, 3))))
        return out

    def _mask_size(self, k: int) -> int:
        return self.stages[k].in_size if k < self.S else self.stages[-1].out_size

    def _plan(self, st: nn.Stage):
        if st.index not in self.plans:
            self.plans[st.index] = bfv.plan_lin_op(self.encoder, st.matrix)
        return self.plans[st.index]

    def _remote_linear(self, k: int) -> np.ndarray:
        """A's side of the product protocol: returns E_k = (F2 + F3) r_k - s2 - s3."""
        st = self.stages[k]
        w, q = st.out_size, st.in_size
        n = self.params.n
        layer = k + 1
        if k == self.g:
            (ct_r,) = msg.unpack_cts(self.recv(PartyId.USER, Kind.R_CT, layer))
        else:
            ct_r = bfv.enc(self.cpk.as_public_key(),
                           self.encoder.encode(rec.expand_vector(self.rmask[k], q, n)), self.rng)
            for peer in (PartyId.B, PartyId.C):
                ct_r = bfv.add(ct_r, msg.unpack_cts(self.recv(peer, Kind.R_CT, layer))[0])
        f_b = msg.unpack_cts(self.recv(PartyId.B, Kind.F_CT, layer))
        s_b = msg.unpack_cts(self.recv(PartyId.B, Kind.S_CT, layer))
        f_c = msg.unpack_cts(self.recv(PartyId.C, Kind.F_CT, layer))
        s_c = msg.unpack_cts(self.recv(PartyId.C, Kind.S_CT, layer))
        bounds = rec.chunk_bounds(w, q, n)
        if not len(f_b) == len(f_c) == len(s_b) == len(s_c) == len(bounds):
            raise ProtocolError("weight-share ciphertexts do not match the layer shape", layer)
        prods = []
        for i in range(len(bounds)):
            prod = bfv.multiply(bfv.add(f_b[i], f_c[i]), ct_r)
            prods.append(bfv.sub(bfv.sub(prod, s_b[i]), s_c[i]))
        slots = self.disdec(prods, layer, fold=True)
        e = np.concatenate([rec.collapse_rows(sl, b - a, q, self.t) for sl, (a, b) in zip(slots, bounds)])
        if self.cfg.corrupt_stage == k:
            e = np.mod(e + 1, self.t)
        self.view.add("preprocess", layer, "E", e)
        return e

    def preprocess(self):
        self.begin(Phase.PREPROCESS)
        self.inference += 1
        self.book.clear()
        g, S = self.g, self.S
        pk0 = bfv.public_key_from_bytes(self.recv(PartyId.USER, Kind.USER_PK))
        self.pk0 = pk0
        if g < S:
            for peer in (PartyId.B, PartyId.C):
                self.send(peer, Kind.USER_PK_FWD, bfv.public_key_bytes(pk0, include_galois=False))
            self.send(PartyId.USER, Kind.CPK_USER, self.cpk.to_bytes())
        # remote masks r1_k; the first remote stage is masked by the user alone
        self.rmask = {k: (self.mask(self._mask_size(k)) if k > g else np.zeros(self._mask_size(k), dtype=object))
                      for k in range(g, S + 1)}
        e_shares = {k: self._remote_linear(k) for k in range(g, S)}
        # gateway linear layers under the user's key
        s_shares = {}
        requests = [bfv.Ciphertext.from_bytes(self.recv(PartyId.USER, Kind.GW_R_CT, k + 1)) for k in range(g)]
        for k in range(g):
            st = self.stages[k]
            plan = self._plan(st)
            s = self.mask(st.out_size)
            out = bfv.lin_op(pk0, requests[k], plan)
            out = bfv.sub_plain(out, self.encoder.encode(bfv.tile(s, plan.d, self.params.n)))
            out = bfv.mod_switch_down(out, OUTPUT_MODULI_KEPT)
            self.send(PartyId.USER, Kind.GW_LIN_CT, out.to_bytes(), k + 1)
            s_shares[k] = np.mod(s + 1, self.t) if self.cfg.corrupt_stage == k else s
        # gateway garbled circuits: A garbles, the user evaluates
        gw = {}
        for k in range(g):
            st = self.stages[k]
            sh = StageShape.of(st)
            if not sh.has_gc:
                continue
            circuit = circuit_for("2pc", self.t, sh.shift, sh.activation)
            gc, enc = gcg.garble(circuit, self.rng, sh.rows)
            d = self.mask(sh.rows)
            self.send(PartyId.USER, Kind.GC_TABLES, gc.to_bytes(), k + 1)
            self.send(PartyId.USER, Kind.GC_LABELS, _labels_payload({"d_next": enc.encode("d_next", d)}), k + 1)
            self.ot_send_groups(PartyId.USER, k, enc, ["user_share", "r_next"])
            gw[k] = (enc, d)
        # remote garbled circuits: obtain labels for (E_k, r1_{k+1}) from B
        rm = {}
        for k in range(g, S):
            sh = StageShape.of(self.stages[k])
            if not sh.has_gc:
                continue
            circuit = circuit_for("3pc", self.t, sh.shift, sh.activation)
            if self.cfg.mode != "seco":
                gc = gcg.GarbledCircuit.from_bytes(circuit, self.recv(PartyId.B, Kind.GC_TABLES, k + 1))
                b_labels = _labels_from_payload(self.recv(PartyId.B, Kind.GC_LABELS, k + 1), ["r2_next"],
                                                circuit.bitwidth, sh.rows)
            mine = self.ot_recv_groups(PartyId.B, k, circuit,
                                       {"a_share": e_shares[k], "r1_next": self.rmask[k + 1]}, sh.rows)
            if self.cfg.mode == "seco":
                self.send(PartyId.C, Kind.GC_LABELS_FWD, _labels_payload(mine), k + 1)
                rm[k] = None
            else:
                c_labels = _labels_from_payload(self.recv(PartyId.C, Kind.GC_LABELS_FWD, k + 1), ["r3_next"],
                                                circuit.bitwidth, sh.rows)
                rm[k] = (gc, {**mine, **b_labels, **c_labels})
        for k in range(g):
            enc, d = gw.get(k, (None, None))
            self.book.put(k, rec.GATEWAY, s=s_shares[k], d=d, enc=enc)
        for k in range(g, S):
            self.book.put(k, rec.TRANSITION if k == g else rec.REMOTE, r1=self.rmask[k], E=e_shares[k],
                          gc=rm.get(k))
        self.out_mask = self.rmask[S]

    def online(self, x=None):
        self.begin(Phase.ONLINE)
        g, S = self.g, self.S
        self.book.require_fresh(range(S))
        m = np.mod(msg.unpack_vector(self.recv(PartyId.USER, Kind.MASKED_INPUT, 1)), self.t)
        self.view.add("online", 1, "masked", m)
        last_share = None
        for k in range(g):
            st = self.stages[k]
            values = self.book.take(k)
            a_share = rec.matvec(st.matrix, m, self.t)
            a_share = np.mod(a_share + values["s"] + (0 if st.bias is None else st.bias.astype(object)), self.t)
            if values["enc"] is None:
                last_share = a_share
                continue
            enc = values["enc"]
            self.send(PartyId.USER, Kind.GW_A_LABELS, _labels_payload({"a_share": enc.encode("a_share", a_share)}),
                      k + 1)
            out = msg.unpack_vector(self.recv(PartyId.USER, Kind.GW_MASKED_OUT, k + 1))
            m = np.mod(out + values["d"], self.t)
            self.view.add("online", k + 2, "masked", m)
        if g == S:
            self.send(PartyId.USER, Kind.OUT_PLAIN, msg.pack_vector(last_share if last_share is not None else m), 0)
            return None
        payload = msg.pack_vector(m)
        for peer in (PartyId.B, PartyId.C):
            self.send(peer, Kind.TRANSITION, payload, g + 1)
        last = None
        for k in range(g, S):
            values = self.book.take(k)
            sh = StageShape.of(self.stages[k])
            last = values
            if not sh.has_gc or self.cfg.mode == "seco":
                continue
            gc, labels = values["gc"]
            b_labels = _labels_from_payload(self.recv(PartyId.B, Kind.RM_LABELS, k + 1), ["b_share"],
                                            gc.circuit.bitwidth, sh.rows)
            c_labels = _labels_from_payload(self.recv(PartyId.C, Kind.RM_LABELS_FWD, k + 1), ["c_share"],
                                            gc.circuit.bitwidth, sh.rows)
            try:
                out = gcg.evaluate(gc, {**labels, **b_labels, **c_labels})["out"]
            except gcg.GcError as exc:
                raise ProtocolError(str(exc), k + 1) from None
            self.view.add("online", k + 2, "masked", out)
            for peer in (PartyId.B, PartyId.C):
                self.send(peer, Kind.RM_MASKED_OUT, msg.pack_vector(out), k + 1)
        # output: B and C encrypt their shares under the user's key, A adds its own
        cts = [bfv.Ciphertext.from_bytes(self.recv(peer, Kind.OUT_SHARE_CT, 0)) for peer in (PartyId.B, PartyId.C)]
        total = bfv.add(cts[0], cts[1])
        mine = last["E"] if not StageShape.of(self.stages[-1]).has_gc else self.out_mask
        total = bfv.add_plain(total, self.encoder.encode(mine))
        total = bfv.mod_switch_down(total, OUTPUT_MODULI_KEPT)
        self.send(PartyId.USER, Kind.OUT_CT, total.to_bytes(), 0)
        return None


class RemoteServer(Server):
    """Server B (garbler of remote circuits) or server C (their evaluator in SECO)."""

    def __init__(self, pid: PartyId, endpoint, cfg, rng, dealer=None):
        super().__init__(pid, endpoint, cfg, rng, dealer)
        self.role = int(pid)
        self.name = "B" if pid == PartyId.B else "C"
        self.view.party = self.name
        self.book.party = self.name
        self.stage_info: list[StageShape] = []
        self.weights: dict = {}

    @property
    def active(self) -> bool:
        return self.cfg.mode != "delphi2"

    def setup(self):
        self.begin(Phase.SETUP)
        if not self.active:
            return
        seed = self.recv(PartyId.A, Kind.P1_SEED)
        p1 = mphe.common_p1(self.params, seed)
        pk, self.sk = mphe.mphe_keygen(self.params, p1, self.rng)
        self.send(PartyId.A, Kind.PK_SHARE, msg.pack_elements(self.params.name, [pk.p0]))
        self.cpk = mphe.CommonPublicKey.from_bytes(self.recv(PartyId.A, Kind.CPK))
        self.stage_info, self.weights = [], {}
        for blob in msg.unpack_blobs(self.recv(PartyId.A, Kind.WEIGHT_SHARES)):
            sh = _unpack_stage_meta(blob)
            f, off = msg.unpack_matrix(blob, struct.calcsize("<HHIIBBB"))
            bias, _ = msg.unpack_matrix(blob, off)
            self.stage_info.append(sh)
            self.weights[sh.index] = (f, None if bias.size == 0 else bias.reshape(-1))
            self.view.add("setup", sh.index + 1, "weight_share", f)
        self.g = self.stage_info[0].index if self.stage_info else None
        self.disdec_help(0, fold=False)

    def _mask_size(self, k: int) -> int:
        info = {sh.index: sh for sh in self.stage_info}
        return info[k].cols if k in info else self.stage_info[-1].rows

    def preprocess(self):
        self.begin(Phase.PREPROCESS)
        self.inference += 1
        self.book.clear()
        if not self.active or not self.stage_info:
            return
        self.pk0 = bfv.public_key_from_bytes(self.recv(PartyId.A, Kind.USER_PK_FWD))
        g = self.g
        last = self.stage_info[-1].index + 1
        self.rmask = {k: (self.mask(self._mask_size(k)) if k > g else np.zeros(self._mask_size(k), dtype=object))
                      for k in range(g, last + 1)}
        s_mine = {}
        for sh in self.stage_info:
            k = sh.index
            s_mine[k] = self.mask(sh.rows)
            self.encrypt_share_inputs(k, self.weights[k][0], self.rmask[k], s_mine[k])
        gcs = {}
        for sh in self.stage_info:
            if sh.has_gc:
                gcs[sh.index] = self._remote_gc(sh)
        for sh in self.stage_info:
            k = sh.index
            self.book.put(k, rec.TRANSITION if k == g else rec.REMOTE, F=self.weights[k][0], s=s_mine[k],
                          r=self.rmask[k], gc=gcs.get(k))
        self.out_mask = self.rmask[last]

    def _remote_gc(self, sh: StageShape):
        k = sh.index
        layer = k + 1
        circuit = circuit_for("3pc", self.t, sh.shift, sh.activation)
        evaluator = PartyId.C if self.cfg.mode == "seco" else PartyId.A
        if self.pid == PartyId.B:
            gc, enc = gcg.garble(circuit, self.rng, sh.rows)
            self.send(evaluator, Kind.GC_TABLES, gc.to_bytes(), layer)
            self.send(evaluator, Kind.GC_LABELS,
                      _labels_payload({"r2_next": enc.encode("r2_next", self.rmask[k + 1])}), layer)
            self.ot_send_groups(PartyId.A, k, enc, ["a_share", "r1_next"])
            self.ot_send_groups(PartyId.C, k, enc, ["r3_next"])
            return enc
        if self.cfg.mode == "seco":
            gc = gcg.GarbledCircuit.from_bytes(circuit, self.recv(PartyId.B, Kind.GC_TABLES, layer))
            b_labels = _labels_from_payload(self.recv(PartyId.B, Kind.GC_LABELS, layer), ["r2_next"],
                                            circuit.bitwidth, sh.rows)
            a_labels = _labels_from_payload(self.recv(PartyId.A, Kind.GC_LABELS_FWD, layer), ["a_share", "r1_next"],
                                            circuit.bitwidth, sh.rows)
            mine = self.ot_recv_groups(PartyId.B, k, circuit, {"r3_next": self.rmask[k + 1]}, sh.rows)
            return (gc, {**b_labels, **a_labels, **mine})
        mine = self.ot_recv_groups(PartyId.B, k, circuit, {"r3_next": self.rmask[k + 1]}, sh.rows)
        self.send(PartyId.A, Kind.GC_LABELS_FWD, _labels_payload(mine), layer)
        return None

    def online(self, x=None):
        self.begin(Phase.ONLINE)
        if not self.active or not self.stage_info:
            return None
        self.book.require_fresh(sh.index for sh in self.stage_info)
        g = self.g
        m = np.mod(msg.unpack_vector(self.recv(PartyId.A, Kind.TRANSITION, g + 1)), self.t)
        self.view.add("online", g + 1, "masked", m)
        last_share = None
        for sh in self.stage_info:
            k = sh.index
            layer = k + 1
            values = self.book.take(k)
            f, bias = self.weights[k]
            share = np.mod(rec.matvec(f, m, self.t) + values["s"] + (0 if bias is None else bias.astype(object)),
                           self.t)
            if not sh.has_gc:
                last_share = share
                continue
            circuit = circuit_for("3pc", self.t, sh.shift, sh.activation)
            if self.pid == PartyId.B:
                enc = values["gc"]
                to = PartyId.C if self.cfg.mode == "seco" else PartyId.A
                self.send(to, Kind.RM_LABELS, _labels_payload({"b_share": enc.encode("b_share", share)}), layer)
                self.ot_send_groups(PartyId.C, k, enc, ["c_share"])
                src = PartyId.C if self.cfg.mode == "seco" else PartyId.A
                m = np.mod(msg.unpack_vector(self.recv(src, Kind.RM_MASKED_OUT, layer)), self.t)
            else:
                b_labels = None
                if self.cfg.mode == "seco":
                    b_labels = _labels_from_payload(self.recv(PartyId.B, Kind.RM_LABELS, layer), ["b_share"],
                                                    circuit.bitwidth, sh.rows)
                mine = self.ot_recv_groups(PartyId.B, k, circuit, {"c_share": share}, sh.rows)
                if self.cfg.mode == "seco":
                    gc, labels = values["gc"]
                    try:
                        out = gcg.evaluate(gc, {**labels, **b_labels, **mine})["out"]
                    except gcg.GcError as exc:
                        raise ProtocolError(str(exc), layer) from None
                    self.send(PartyId.B, Kind.RM_MASKED_OUT, msg.pack_vector(out), layer)
                    m = np.mod(out, self.t)
                else:
                    self.send(PartyId.A, Kind.RM_LABELS_FWD, _labels_payload(mine), layer)
                    m = np.mod(msg.unpack_vector(self.recv(PartyId.A, Kind.RM_MASKED_OUT, layer)), self.t)
            self.view.add("online", layer + 1, "masked", m)
        if last_share is None:
            last_share = np.mod(m + self.out_mask, self.t) if self.pid == PartyId.B else self.out_mask
        ct = bfv.enc(self.pk0, self.encoder.encode(last_share), self.rng)
        self.send(PartyId.A, Kind.OUT_SHARE_CT, ct.to_bytes(), 0)
        return None
