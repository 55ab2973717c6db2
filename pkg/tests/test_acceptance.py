"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion."""
import time

import numpy as np
import pytest

from seco import bfv, mphe, nn, ring
from seco.gc import circuit as gcc
from seco.gc import garble as gcg
from seco.protocol import ProtocolConfig, Session, audit
from seco.protocol import records as rec

TOY_MODELS = ("minionn-toy", "lenet-toy")
INPUTS_PER_SPLIT = 20
SWEEP_MODES = ("seco", "delphi3")


def _timed(limit_s: float, criterion, start: float):
    elapsed = time.perf_counter() - start
    criterion(f"runtime {elapsed:.1f}s (limit {limit_s:.0f}s)")
    assert elapsed < limit_s, f"took {elapsed:.1f}s, limit {limit_s}s"


# ---------------------------------------------------------------------------------------------
# homomorphic layer
# ---------------------------------------------------------------------------------------------

@pytest.mark.criterion("BFV/MPHE correctness (desk profile)")
def test_bfv_mphe_correctness(criterion, desk):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    t, n = desk.t, desk.n
    enc = bfv.SlotEncoder(desk)
    pk, sk = bfv.keygen(desk, rng)

    for _ in range(1000):
        m = rng.integers(0, t, n, dtype=np.int64)
        got = enc.decode(bfv.dec(sk, bfv.enc(pk, enc.encode(m), rng)))
        assert np.array_equal(np.asarray(got, dtype=np.int64), m)

    row = n // 2
    for _ in range(10):
        a = rng.integers(0, t, n, dtype=np.int64)
        b = rng.integers(0, t, n, dtype=np.int64)
        ca, cb = bfv.enc(pk, enc.encode(a), rng), bfv.enc(pk, enc.encode(b), rng)
        ao, bo = a.astype(object), b.astype(object)
        dec = lambda ct: np.asarray(enc.decode(bfv.dec(sk, ct)), dtype=object)  # noqa: E731
        assert np.array_equal(dec(bfv.add(ca, cb)), (ao + bo) % t)
        assert np.array_equal(dec(bfv.sub(ca, cb)), (ao - bo) % t)
        assert np.array_equal(dec(bfv.mul_plain(ca, enc.encode(b))), ao * bo % t)
        for step in (1, 3, 64, 5):
            rolled = np.concatenate([np.roll(ao[:row], -step), np.roll(ao[row:], -step)])
            assert np.array_equal(dec(bfv.rotate(pk, ca, step)), rolled)

    p1 = mphe.common_p1(desk, b"acceptance")
    keys = [mphe.mphe_keygen(desk, p1, rng) for _ in range(3)]
    cpk = mphe.dkeygen(pk_i for pk_i, _ in keys).as_public_key()
    csk = mphe.combined_secret(sk_i for _, sk_i in keys)
    for trial in range(100):
        m = rng.integers(0, t, n, dtype=np.int64)
        ct = bfv.enc(cpk, enc.encode(m), rng)
        if trial % 10 == 0:
            other = rng.integers(0, 1 << 10, n, dtype=np.int64)
            ct = bfv.multiply(ct, bfv.enc(cpk, enc.encode(other), rng))
            ct = mphe.fold(ct, [mphe.fold_share(ct, s, rng, i) for i, (_, s) in enumerate(keys)], parties=range(3))
        pds = [mphe.reconstruct(ct, s, rng, i) for i, (_, s) in enumerate(keys)]
        joint = enc.decode(mphe.mphe_dec(ct, pds, parties=range(3)))
        single = enc.decode(bfv.dec(csk, ct))
        assert np.array_equal(np.asarray(joint, dtype=object), np.asarray(single, dtype=object))
        if trial % 10 != 0:
            assert np.array_equal(np.asarray(joint, dtype=np.int64), m)
    criterion("1000 round trips, add/sub/mul_plain/rotate, 100 three-party decryptions")
    _timed(60, criterion, start)


@pytest.mark.criterion("Paper-profile smoke (n=8192, t=2061584302081)")
def test_paper_profile_smoke(criterion):
    start = time.perf_counter()
    params = ring.profile("paper")
    assert params.n == 8192 and params.t == 2061584302081
    rng = np.random.default_rng(8192)
    enc = bfv.SlotEncoder(params)
    p1 = mphe.common_p1(params, 1)
    keys = [mphe.mphe_keygen(params, p1, rng) for _ in range(3)]
    cpk = mphe.dkeygen(pk for pk, _ in keys).as_public_key()
    a = rng.integers(0, params.t, params.n, dtype=np.int64)
    b = rng.integers(0, 1 << 20, params.n, dtype=np.int64)
    ca, cb = bfv.enc(cpk, enc.encode(a), rng), bfv.enc(cpk, enc.encode(b), rng)
    ct = bfv.add(bfv.multiply(ca, cb), bfv.mul_plain(ca, enc.encode(b)))
    ct = mphe.fold(ct, [mphe.fold_share(ct, s, rng, i) for i, (_, s) in enumerate(keys)])
    out = enc.decode(mphe.mphe_dec(ct, [mphe.reconstruct(ct, s, rng, i) for i, (_, s) in enumerate(keys)]))
    expected = 2 * a.astype(object) * b % params.t
    assert np.array_equal(np.asarray(out, dtype=object), expected)
    pk, sk = bfv.keygen(params, rng, galois_steps=(1,))
    rolled = bfv.rotate(pk, bfv.enc(pk, enc.encode(a), rng), 1)
    row = params.n // 2
    assert np.array_equal(np.asarray(enc.decode(bfv.dec(sk, rolled)), dtype=np.int64),
                          np.concatenate([np.roll(a[:row], -1), np.roll(a[row:], -1)]))
    criterion("enc, ct*ct + ct*pt, fold, three-party decryption, single-key rotation")
    _timed(120, criterion, start)


# ---------------------------------------------------------------------------------------------
# garbled circuits
# ---------------------------------------------------------------------------------------------

def _share_tuples(rng, t, count, parties):
    """Random share tuples whose sums cluster around the sign boundary as well as spread uniformly."""
    half = (t + 1) // 2
    centers = [0, half, t - 1, 1 << 12]
    sums = []
    for i in range(count):
        if i % 2:
            sums.append(int(rng.integers(0, t)))
        else:
            sums.append((centers[(i // 2) % len(centers)] + int(rng.integers(-4096, 4096))) % t)
    shares = [[int(v) for v in rng.integers(0, t, count)] for _ in range(parties - 1)]
    last = [(s - sum(col)) % t for s, col in zip(sums, zip(*shares))]
    return shares + [last]


@pytest.mark.criterion("GC oracle equivalence (relu_2pc, relu_3pc, 8-bit adder)")
def test_gc_oracle_equivalence(criterion, desk):
    start = time.perf_counter()
    t = desk.t
    rng = np.random.default_rng(99)
    count = 1000
    checked = 0
    for kind, builder, parties in (("2pc", gcc.build_relu_circuit_2pc, 2), ("3pc", gcc.build_relu_circuit_3pc, 3)):
        for activation in ("relu", "identity"):
            for shift in (0, 10):
                circuit = builder(None, t, shift, activation)
                shares = _share_tuples(rng, t, count, parties)
                masks = [[int(v) for v in rng.integers(0, t, count)] for _ in range(parties)]
                if kind == "2pc":
                    values = {"user_share": shares[0], "a_share": shares[1], "r_next": masks[0], "d_next": masks[1]}
                else:
                    values = {"a_share": shares[0], "b_share": shares[1], "c_share": shares[2],
                              "r1_next": masks[0], "r2_next": masks[1], "r3_next": masks[2]}
                gc, encoding = gcg.garble(circuit, rng, count)
                labels = {g.name: encoding.encode(g.name, values[g.name]) for g in circuit.inputs}
                got = gcg.evaluate(gc, labels)["out"]
                oracle = gcc.reference_share_function(t, shift, activation)
                expected = [oracle([s[i] for s in shares], [m[i] for m in masks]) for i in range(count)]
                assert [int(v) for v in got] == expected, f"{kind} {activation} shift={shift}"
                checked += count
    adder = gcc.build_adder(8)
    a, b = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
    a, b = a.ravel(), b.ravel()
    width = len(dict(adder.outputs)["sum"])
    gc, encoding = gcg.garble(adder, rng, a.size)
    got = gcg.evaluate(gc, {"a": encoding.encode("a", a), "b": encoding.encode("b", b)})["sum"]
    assert np.array_equal(np.asarray(got, dtype=np.int64), (a + b) % (1 << width))
    criterion(f"{checked} share tuples garbled and evaluated, 65536 adder cases")
    _timed(300, criterion, start)


# ---------------------------------------------------------------------------------------------
# end-to-end sweep shared by the protocol-level criteria
# ---------------------------------------------------------------------------------------------

def _split_has_remote_relu(model, l):
    g = nn.gateway_stage_count(model, l)
    return any(st.activation == "relu" for st in model.stages()[g:])


@pytest.fixture(scope="module")
def sweep():
    """Run every toy model at every split in every mode on the same inputs; keep audit summaries only."""
    start = time.perf_counter()
    out = {"runs": [], "mismatches": [], "table1": [], "hygiene": [], "classes": set()}
    for name in TOY_MODELS:
        model = nn.load_model(name)
        t = ring.profile("desk").t
        rng = np.random.default_rng([7, len(name)])
        bound = 1 << model.scale
        inputs = [rng.integers(-bound, bound, model.input_size) for _ in range(INPUTS_PER_SPLIT)]
        oracle = [list(nn.plaintext_infer(model, x, t)) for x in inputs]
        plan = [(mode, l) for l in range(model.L + 1) for mode in SWEEP_MODES] + [("delphi2", model.L)]
        for mode, l in plan:
            run = {"model": name, "mode": mode, "l": l, "preds": [], "online_bytes": [], "a_remote_msgs": [],
                   "remote_relu": _split_has_remote_relu(model, l)}
            with Session(model, ProtocolConfig(mode=mode, l=l), seed=[l, len(mode)]) as session:
                for i, x in enumerate(inputs):
                    res = session.infer(x)
                    pred = list(res.prediction)
                    run["preds"].append(pred)
                    if pred != oracle[i]:
                        out["mismatches"].append((name, mode, l, i))
                    run["online_bytes"].append(res.report.total_bytes("online"))
                    run["a_remote_msgs"].append(audit.remote_messages_from_a(model, res, l))
                    for check in audit.share_recombination(model, res, l, t):
                        out["classes"].add(check.name.split("(")[-1].rstrip(")"))
                        if not check.ok:
                            out["table1"].append((name, mode, l, i, check.name))
                    for check in audit.hygiene_suite(model, res, x, l, t):
                        if not check.ok:
                            out["hygiene"].append((name, mode, l, i, check.name, check.detail))
                    out.setdefault("preprocessing_runs", 0)
                    out["preprocessing_runs"] += 1
            out["runs"].append(run)
    out["elapsed"] = time.perf_counter() - start
    return out


@pytest.mark.criterion("End-to-end equivalence (toy MiniONN/LeNet, every l, 20 inputs, all modes)")
def test_end_to_end_equivalence(criterion, sweep):
    n = sum(len(r["preds"]) for r in sweep["runs"])
    criterion(f"{n} inferences over {len(sweep['runs'])} (model, mode, l) runs, "
              f"{len(sweep['mismatches'])} mismatches; sweep {sweep['elapsed']:.0f}s (limit 1200s)")
    assert not sweep["mismatches"], sweep["mismatches"][:5]
    assert sweep["elapsed"] < 1200


@pytest.mark.criterion("Metering direction (10-layer model, user online bytes vs l)")
def test_metering_direction(criterion):
    model = nn.load_model("meter10")
    assert model.L == 10
    x = np.random.default_rng(10).integers(-(1 << model.scale), 1 << model.scale, model.input_size)
    user_bytes = {}
    for l in range(model.L, -1, -1):
        with Session(model, ProtocolConfig(mode="seco", l=l), seed=3) as session:
            user_bytes[l] = session.infer(x).report.user_bytes("online")
    seq = [user_bytes[l] for l in range(model.L, -1, -1)]
    ratio = user_bytes[model.L] / user_bytes[2]
    criterion(f"user online bytes l=L..0: {seq}; l=L / l=2 = {ratio:.2f}x (floor 3x)")
    assert all(a >= b for a, b in zip(seq, seq[1:])), "not monotone non-increasing as l decreases"
    assert ratio >= 3


@pytest.mark.criterion("SECO vs DELPHI-3 (predictions, online bytes, A traffic in remote layers)")
def test_seco_vs_delphi3(criterion, sweep):
    runs = {(r["model"], r["mode"], r["l"]): r for r in sweep["runs"]}
    compared = with_relu = 0
    for (name, mode, l), seco_run in runs.items():
        if mode != "seco":
            continue
        d3 = runs[(name, "delphi3", l)]
        compared += 1
        assert seco_run["preds"] == d3["preds"], (name, l)
        assert all(c == 0 for c in seco_run["a_remote_msgs"]), (name, l)
        if seco_run["remote_relu"]:
            with_relu += 1
            assert sum(seco_run["online_bytes"]) < sum(d3["online_bytes"]), (name, l)
            assert all(c > 0 for c in d3["a_remote_msgs"]), (name, l)
    criterion(f"{compared} splits compared, {with_relu} with remote ReLUs")
    assert with_relu > 0


@pytest.mark.criterion("View hygiene suite (a) A unmasked, (b) B/C weights, (c) user metadata, (d) uniformity")
def test_view_hygiene(criterion, sweep, desk):
    uniform = audit.mask_uniformity(desk.t, trials=10_000, alpha=0.01)
    criterion(f"{sweep['preprocessing_runs']} inferences audited, {len(sweep['hygiene'])} violations; "
              f"uniformity {uniform.detail}")
    assert not sweep["hygiene"], sweep["hygiene"][:5]
    assert uniform.ok


@pytest.mark.criterion("Share-structure conformance (gateway, transition, remote)")
def test_share_structure(criterion, sweep):
    criterion(f"{sweep['preprocessing_runs']} preprocessing runs, classes {sorted(sweep['classes'])}, "
              f"{len(sweep['table1'])} failures")
    assert sweep["classes"] == {rec.GATEWAY, rec.TRANSITION, rec.REMOTE}
    assert not sweep["table1"], sweep["table1"][:5]
