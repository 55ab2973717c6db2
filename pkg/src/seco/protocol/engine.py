"""Run the four parties together (in-process) or one party over TCP."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from seco import nn
from seco.gc import ot
from seco.protocol.messages import PartyId, ProtocolError
from seco.protocol.parties import ProtocolConfig, RemoteServer, ServerA, StageShape, User
from seco.transport import (PARTY_NAMES, Endpoint, LocalNetwork, MetricsReport, TcpEndpoint, TransportError,
                            snapshot_metrics)


class ConfigError(ValueError):
    pass


def validate_config(model: nn.Model, cfg: ProtocolConfig):
    if not 0 <= cfg.l <= model.L:
        raise ConfigError(f"split point l={cfg.l} outside [0, {model.L}]")
    if cfg.mode == "delphi2" and cfg.l != model.L:
        raise ConfigError(f"delphi2 runs the whole model at the gateway and requires l = L = {model.L}")


@dataclass
class InferenceResult:
    prediction: np.ndarray
    report: MetricsReport
    transcripts: dict = field(default_factory=dict)  # party name -> [(direction, Frame)]
    records: dict = field(default_factory=dict)  # party name -> {stage: ShareRecord}
    views: dict = field(default_factory=dict)  # party name -> [ViewEntry]


def _party_rngs(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(len(PARTY_NAMES))]


def build_parties(model: nn.Model, cfg: ProtocolConfig, endpoints: dict, seed, dealer=None) -> dict:
    validate_config(model, cfg)
    rngs = _party_rngs(seed)
    shapes = [StageShape.of(st) for st in model.stages()]
    g = nn.gateway_stage_count(model, cfg.l)
    parties = {}
    if PartyId.USER in endpoints:
        parties[PartyId.USER] = User(endpoints[PartyId.USER], cfg, rngs[0], shapes, g, dealer)
    if PartyId.A in endpoints:
        parties[PartyId.A] = ServerA(endpoints[PartyId.A], cfg, rngs[1], model, dealer)
    for pid in (PartyId.B, PartyId.C):
        if pid in endpoints:
            parties[pid] = RemoteServer(pid, endpoints[pid], cfg, rngs[int(pid)], dealer)
    return parties


class Session:
    """Four in-process parties sharing one set of server keys across inferences."""

    def __init__(self, model: nn.Model, cfg: ProtocolConfig, seed=None, timeout: float = 300.0):
        self.model = model
        self.cfg = cfg
        self.seed = seed
        self.net = LocalNetwork(timeout)
        self.dealer = ot.Dealer(timeout) if cfg.dealer_ot else None
        self.parties = build_parties(model, cfg, self.net.endpoints, seed, self.dealer)
        self.run_id = f"{model.name}-{cfg.mode}-l{cfg.l}-{seed}"
        self._setup_done = False
        self._count = 0

    @property
    def endpoints(self) -> list[Endpoint]:
        return [self.net.endpoints[p] for p in sorted(self.net.endpoints)]

    def _run(self, phase: str, calls: dict):
        results, errors = {}, {}

        def work(pid, fn):
            ep = self.net.endpoints[pid]
            try:
                with ep.timed(phase):
                    results[pid] = fn()
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                errors[pid] = exc
                ep.close()

        threads = [threading.Thread(target=work, args=(pid, fn), name=f"seco-{PARTY_NAMES[pid]}", daemon=True)
                   for pid, fn in calls.items()]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            root = [e for e in errors.values() if not isinstance(e, TransportError)]
            exc = (root or list(errors.values()))[0]
            if isinstance(exc, ProtocolError):
                raise exc
            raise ProtocolError(f"{type(exc).__name__}: {exc}") from exc
        return results

    def setup(self):
        self._run("setup", {pid: p.setup for pid, p in self.parties.items()})
        self._setup_done = True

    def preprocess(self):
        if not self._setup_done:
            self.setup()
        self._run("preprocess", {pid: p.preprocess for pid, p in self.parties.items()})

    def online(self, x) -> np.ndarray:
        calls = {pid: p.online for pid, p in self.parties.items()}
        calls[PartyId.USER] = lambda: self.parties[PartyId.USER].online(x)
        return self._run("online", calls)[PartyId.USER]

    def collect(self, prediction) -> InferenceResult:
        report = snapshot_metrics(f"{self.run_id}-{self._count}", self.cfg.mode, self.cfg.l, self.endpoints)
        res = InferenceResult(np.asarray(prediction, dtype=object), report)
        for pid, p in self.parties.items():
            name = PARTY_NAMES[pid]
            res.transcripts[name] = list(self.net.endpoints[pid].meter.transcript)
            res.records[name] = dict(p.book.records)
            res.views[name] = list(p.view.entries)
            p.view.entries.clear()
            self.net.endpoints[pid].meter.reset()
        self._count += 1
        return res

    def infer(self, x) -> InferenceResult:
        self.preprocess()
        pred = self.online(x)
        return self.collect(pred)

    def close(self):
        for ep in self.endpoints:
            ep.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_inferences(model: nn.Model, cfg: ProtocolConfig, inputs, seed=None, timeout: float = 300.0):
    with Session(model, cfg, seed, timeout) as session:
        return [session.infer(x) for x in inputs]


def run_party(role: PartyId, model: nn.Model, cfg: ProtocolConfig, addresses: dict, inputs=None, seed=None,
              count: int | None = None, timeout: float = 300.0):
    """Run one party over TCP.  The user passes `inputs`; servers pass `count`."""
    if cfg.dealer_ot:
        raise ConfigError("dealer OT is only available with the in-process transport")
    ep = TcpEndpoint(int(role), addresses, timeout)
    try:
        party = build_parties(model, cfg, {role: ep}, seed)[role]
        with ep.timed("setup"):
            party.setup()
        n = len(inputs) if inputs is not None else int(count or 0)
        preds, reports = [], []
        for i in range(n):
            with ep.timed("preprocess"):
                party.preprocess()
            with ep.timed("online"):
                pred = party.online(inputs[i] if inputs is not None else None)
            preds.append(pred)
            reports.append(MetricsReport(f"{model.name}-{cfg.mode}-l{cfg.l}-{seed}-{i}", cfg.mode, cfg.l,
                                         {PARTY_NAMES[int(role)]: ep.meter.snapshot()}))
            ep.meter.reset()
        return preds, reports
    finally:
        ep.close()
