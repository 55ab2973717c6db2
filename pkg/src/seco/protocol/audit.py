"""Post-run checks over recorded shares, views and transcripts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from seco import nn
from seco.protocol import records as rec
from seco.protocol.engine import InferenceResult
from seco.protocol.messages import Kind, Phase


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""


def _rows(m, v, t):
    return rec.matvec(m, v, t)


def _eq(a, b, t) -> bool:
    a = np.mod(np.asarray(a, dtype=object), t)
    b = np.mod(np.asarray(b, dtype=object), t)
    return a.shape == b.shape and bool(np.all(a == b))


def share_recombination(model: nn.Model, result: InferenceResult, l: int, t: int) -> list[Check]:
    """Sum each stage's recorded shares and compare with the product they must encode.

    gateway:    user (F r - s) + A s               == F r
    transition: A E + B s + C s                    == (F_B + F_C) r_user,  F_B + F_C == F
    remote:     A E + B s + C s                    == (F_B + F_C)(r_A + r_B + r_C)
    """
    stages = model.stages()
    g = nn.gateway_stage_count(model, l)
    recs = result.records
    checks = []
    for st in stages:
        k = st.index
        if k < g:
            u, a = recs["user"][k].values, recs["A"][k].values
            ok = _eq(u["user_share"] + a["s"], _rows(st.matrix, u["r"], t), t)
            checks.append(Check(f"stage {k + 1} ({rec.GATEWAY})", ok))
            continue
        a, b, c = recs["A"][k].values, recs["B"][k].values, recs["C"][k].values
        f = np.mod(b["F"].astype(object) + c["F"].astype(object), t)
        if k == g:
            r = recs["user"][k].values["r"]
            cls = rec.TRANSITION
        else:
            r = np.mod(a["r1"] + b["r"] + c["r"], t)
            cls = rec.REMOTE
        ok = _eq(f, st.matrix, t) and _eq(a["E"] + b["s"] + c["s"], _rows(f, r, t), t)
        kind = recs["A"][k].layer_class
        checks.append(Check(f"stage {k + 1} ({cls})", ok and kind == cls,
                            "" if kind == cls else f"recorded as {kind}"))
    return checks


def hygiene_gateway_never_unmasked(model: nn.Model, result: InferenceResult, x, l: int, t: int) -> Check:
    """A holds no plaintext activation that the remote part of the model computes."""
    _, inter = nn.plaintext_infer(model, x, t, trace=True)
    g = nn.gateway_stage_count(model, l)
    # inputs of the transition and remote stages, and the output they produce
    secret = inter[g:] if g < len(inter) - 1 else []
    for entry in result.views.get("A", []):
        for v in secret:
            if _eq(entry.value, v, t):
                return Check("A never holds unmasked remote activations", False,
                             f"{entry.phase} view {entry.name!r} at layer {entry.stage}")
    return Check("A never holds unmasked remote activations", True)


def hygiene_remote_never_recombined(model: nn.Model, result: InferenceResult, t: int) -> Check:
    """Neither B nor C ever holds a full weight matrix."""
    mats = [np.mod(st.matrix.astype(object), t) for st in model.stages()]
    for party in ("B", "C"):
        for entry in result.views.get(party, []):
            for k, m in enumerate(mats):
                if _eq(entry.value, m, t):
                    return Check("B and C never hold a recombined weight matrix", False,
                                 f"{party} view {entry.name!r} equals stage {k + 1}")
        for k, r in result.records.get(party, {}).items():
            if "F" in r.values and _eq(r.values["F"], mats[k], t):
                return Check("B and C never hold a recombined weight matrix", False,
                             f"{party} share record for stage {k + 1}")
    return Check("B and C never hold a recombined weight matrix", True)


def hygiene_user_channel(model: nn.Model, result: InferenceResult, l: int) -> Check:
    """Every frame the user sends or receives is tagged with a stage no later than g + 1."""
    g = nn.gateway_stage_count(model, l)
    limit = g + 1
    for direction, frame in result.transcripts.get("user", []):
        if frame.layer > limit:
            return Check("user channel stays within the gateway stages", False,
                         f"{direction} {Kind(frame.kind).name} tagged with stage {frame.layer} > {limit}")
    return Check("user channel stays within the gateway stages", True)


def mask_uniformity(t: int, trials: int = 10_000, bins: int = 64, alpha: float = 0.01,
                    seed: int = 0, x: int | None = None) -> Check:
    """Chi-square test that x - r mod t is uniform when r comes from the protocol's mask sampler."""
    rng = np.random.default_rng(seed)
    x = int(rng.integers(0, t)) if x is None else x % t
    masks = rec.sample_mask(rng, trials, t)
    values = rec.masked(np.full(trials, x, dtype=object), masks, t)
    idx = np.array([int(v) * bins // t for v in values], dtype=np.int64)
    counts = np.bincount(idx, minlength=bins)
    edges = [(i * t + bins - 1) // bins for i in range(bins + 1)]
    expected = np.diff(edges) / t * trials
    chi2, p = stats.chisquare(counts, expected)
    return Check("masked values are uniform", bool(p >= alpha), f"chi2={chi2:.1f} p={p:.4f}")


def remote_messages_from_a(model: nn.Model, result: InferenceResult, l: int) -> int:
    """Online frames A exchanges while the remote stages run (the hand-off and output excluded)."""
    g = nn.gateway_stage_count(model, l)
    count = 0
    for _direction, frame in result.transcripts.get("A", []):
        if frame.phase != Phase.ONLINE or frame.layer == 0 or frame.layer <= g:
            continue
        if frame.kind in (Kind.MASKED_INPUT, Kind.TRANSITION):
            continue
        count += 1
    return count


def reconstruct_activations(model: nn.Model, result: InferenceResult, l: int, t: int) -> dict:
    """Rebuild each stage input x_k (k >= 1) from a masked view plus the matching masks."""
    stages = model.stages()
    S = len(stages)
    g = nn.gateway_stage_count(model, l)
    views = result.views
    recs = result.records
    out = {}

    def masked_at(party, layer):
        for e in views.get(party, []):
            if e.phase == "online" and e.name == "masked" and e.stage == layer:
                return e.value
        return None

    for k in range(1, S):
        if k <= g:
            m = masked_at("A", k + 1)
            if m is None or k not in recs.get("user", {}):
                continue
            r = recs["user"][k].values["r"]
        else:
            m = masked_at("B", k + 1)
            if m is None:
                continue
            r = recs["A"][k].values["r1"] + recs["B"][k].values["r"] + recs["C"][k].values["r"]
        out[k] = np.mod(np.asarray(m, dtype=object) + r, t)
    return out


def first_divergence(model: nn.Model, result: InferenceResult, x, l: int, t: int):
    """1-based stage whose output first disagrees with the plaintext oracle, or None."""
    expected, inter = nn.plaintext_infer(model, x, t, trace=True)
    got = reconstruct_activations(model, result, l, t)
    for k in sorted(got):
        if not _eq(got[k], inter[k], t):
            return k
    if not _eq(result.prediction, expected, t):
        return len(model.stages())
    return None


def hygiene_suite(model: nn.Model, result: InferenceResult, x, l: int, t: int) -> list[Check]:
    return [
        hygiene_gateway_never_unmasked(model, result, x, l, t),
        hygiene_remote_never_recombined(model, result, t),
        hygiene_user_channel(model, result, l),
    ]


__all__ = [
    "Check", "first_divergence", "hygiene_gateway_never_unmasked", "hygiene_remote_never_recombined",
    "hygiene_suite", "hygiene_user_channel", "mask_uniformity", "reconstruct_activations",
    "remote_messages_from_a", "share_recombination",
]
