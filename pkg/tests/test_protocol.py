import numpy as np
import pytest

from seco import nn, ring
from seco.protocol import ConfigError, ProtocolConfig, ProtocolError, Session, audit, validate_config
from seco.protocol import records as rec

T = ring.profile("desk").t


@pytest.fixture(scope="module")
def model():
    return nn.load_model("minionn-toy")


def inputs(model, count, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(-1024, 1024, model.input_size) for _ in range(count)]


@pytest.mark.parametrize("mode,l", [("seco", 0), ("seco", 4), ("delphi3", 5), ("delphi2", 9)])
def test_matches_oracle_and_audits_pass(model, mode, l):
    with Session(model, ProtocolConfig(mode=mode, l=l, dealer_ot=True), seed=1) as session:
        for x in inputs(model, 2):
            res = session.infer(x)
            assert list(res.prediction) == list(nn.plaintext_infer(model, x, T))
            assert all(c.ok for c in audit.share_recombination(model, res, l, T))
            assert all(c.ok for c in audit.hygiene_suite(model, res, x, l, T))
            assert audit.first_divergence(model, res, x, l, T) is None


def test_real_ot_path(model):
    x = inputs(model, 1)[0]
    with Session(model, ProtocolConfig(mode="seco", l=3), seed=2) as session:
        res = session.infer(x)
    assert list(res.prediction) == list(nn.plaintext_infer(model, x, T))
    kinds = {f.kind for _, f in res.transcripts["user"]}
    assert kinds  # real OT traffic flows through the transport


def test_same_seed_same_transcript(model):
    x = inputs(model, 1)[0]
    sizes = []
    for _ in range(2):
        with Session(model, ProtocolConfig(mode="seco", l=4, dealer_ot=True), seed=9) as session:
            res = session.infer(x)
        sizes.append([(d, f.kind, f.payload) for d, f in res.transcripts["A"]])
    assert sizes[0] == sizes[1]


def test_seco_keeps_a_out_of_remote_layers(model):
    x = inputs(model, 1)[0]
    counts = {}
    for mode in ("seco", "delphi3"):
        with Session(model, ProtocolConfig(mode=mode, l=1, dealer_ot=True), seed=4) as session:
            counts[mode] = audit.remote_messages_from_a(model, session.infer(x), 1)
    assert counts["seco"] == 0 < counts["delphi3"]


def test_config_errors(model):
    with pytest.raises(ConfigError):
        validate_config(model, ProtocolConfig(mode="delphi2", l=3))
    with pytest.raises(ConfigError):
        validate_config(model, ProtocolConfig(l=10))
    with pytest.raises(ValueError):
        ProtocolConfig(mode="delphi4")


@pytest.mark.parametrize("stage", [1, 4])
def test_corruption_is_detected(model, stage):
    l = 3  # stages 0 and 1 at the gateway, 2 is the transition, the rest remote
    x = inputs(model, 1)[0]
    cfg = ProtocolConfig(mode="seco", l=l, dealer_ot=True, corrupt_stage=stage)
    with Session(model, cfg, seed=5) as session:
        res = session.infer(x)
    bad = [c.name for c in audit.share_recombination(model, res, l, T) if not c.ok]
    assert bad == [f"stage {stage + 1} ({rec.GATEWAY if stage < 2 else rec.REMOTE})"]


def test_zero_randomness_fails_hygiene(model):
    l = 2
    x = inputs(model, 1)[0]
    with Session(model, ProtocolConfig(mode="seco", l=l, dealer_ot=True, zero_randomness=True), seed=6) as s:
        res = s.infer(x)
    checks = {c.name: c.ok for c in audit.hygiene_suite(model, res, x, l, T)}
    assert checks["A never holds unmasked remote activations"] is False


def test_preprocessing_is_single_use(model):
    session = Session(model, ProtocolConfig(mode="seco", l=4, dealer_ot=True), seed=7, timeout=5)
    try:
        x = inputs(model, 1)[0]
        session.preprocess()
        session.online(x)
        session.collect(None)
        with pytest.raises(ProtocolError):
            session.online(x)
    finally:
        session.close()


def test_record_take_twice():
    book = rec.RecordBook("A")
    book.put(0, rec.GATEWAY, s=np.zeros(2))
    book.take(0)
    with pytest.raises(ProtocolError):
        book.take(0)
    with pytest.raises(ProtocolError):
        book.get(5)


def test_mask_uniformity_of_sampler():
    for x in (0, 1, T - 1):
        assert audit.mask_uniformity(T, trials=5000, seed=3, x=x).ok


def test_zero_masks_leave_values_in_the_clear():
    masks = rec.sample_mask(np.random.default_rng(0), 10, T, True)
    assert not any(masks)


def test_model_ending_in_relu():
    mlp = nn.load_model("meter10")
    x = np.random.default_rng(8).integers(-1024, 1024, mlp.input_size)
    with Session(mlp, ProtocolConfig(mode="seco", l=5, dealer_ot=True), seed=8) as session:
        pred = session.infer(x).prediction
    assert list(pred) == list(nn.plaintext_infer(mlp, x, T))
    assert min(pred) == 0
