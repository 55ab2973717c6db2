"""Command line: run the protocol, verify it against the plaintext oracle, manage model files."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from seco import nn, ring
from seco.protocol import ConfigError, PartyId, ProtocolConfig, ProtocolError, Session, audit, run_party
from seco.protocol.parties import MODES
from seco.transport import TransportError, parse_addresses

EXIT_OK, EXIT_PROTOCOL, EXIT_CONFIG = 0, 1, 2


@dataclass
class RunConfig:
    model: nn.Model
    l: int
    mode: str
    transport: str
    profile: str
    seed: int
    inputs: list

    @property
    def t(self) -> int:
        return ring.profile(self.profile).t

    def protocol(self, **flags) -> ProtocolConfig:
        return ProtocolConfig(mode=self.mode, l=self.l, profile=self.profile, **flags)


def read_inputs(path: str | None, model: nn.Model, count: int, seed: int) -> list:
    """One fixed-point vector per line (comma or whitespace separated); random ones if no file."""
    if path is None:
        rng = np.random.default_rng([seed, 0x1d])
        bound = 1 << model.scale
        return [rng.integers(-bound, bound, size=model.input_size) for _ in range(count)]
    vectors = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vec = np.array([int(v) for v in line.replace(",", " ").split()], dtype=np.int64)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: expected integers") from None
        if vec.shape[0] != model.input_size:
            raise ConfigError(f"{path}:{lineno}: {vec.shape[0]} values, model expects {model.input_size}")
        vectors.append(vec)
    return vectors


def _format_vector(v) -> str:
    return " ".join(str(int(x)) for x in v)


def _build_config(args) -> RunConfig:
    try:
        model = nn.load_model(args.model)
    except (nn.ModelError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    if args.profile not in ("desk", "paper", "tiny"):
        raise ConfigError(f"unknown profile {args.profile!r}")
    l = model.L if args.l is None else args.l
    inputs = read_inputs(getattr(args, "inputs", None), model, getattr(args, "count", 1), args.seed)
    return RunConfig(model, l, args.mode, getattr(args, "transport", "local"), args.profile, args.seed, inputs)


def _write(path: str | None, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    flags = dict(dealer_ot=args.dealer_ot, zero_randomness=args.zero_randomness, keep_views=False)
    if cfg.transport == "local":
        if args.party:
            raise ConfigError("--party only applies to the tcp transport")
        with Session(cfg.model, cfg.protocol(**flags), cfg.seed, args.timeout) as session:
            results = [session.infer(x) for x in cfg.inputs]
        preds = [r.prediction for r in results]
        reports = [r.report.to_dict() for r in results]
    elif cfg.transport.startswith("tcp:"):
        if not args.party:
            raise ConfigError("the tcp transport needs --party {user,a,b,c}")
        spec = cfg.transport[4:]
        try:
            addresses = parse_addresses(Path(spec).read_text() if Path(spec).exists() else spec)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad address map: {exc}") from None
        role = PartyId({"user": 0, "a": 1, "b": 2, "c": 3}[args.party.lower()])
        is_user = role == PartyId.USER
        preds, reps = run_party(role, cfg.model, cfg.protocol(**flags), addresses,
                                inputs=cfg.inputs if is_user else None, seed=cfg.seed,
                                count=len(cfg.inputs), timeout=args.timeout)
        reports = [r.to_dict() for r in reps]
        if not is_user:
            preds = []
    else:
        raise ConfigError(f"unknown transport {cfg.transport!r}")
    _write(args.predictions, "".join(_format_vector(p) + "\n" for p in preds))
    if args.out:
        Path(args.out).write_text(json.dumps(reports, indent=1))
    return EXIT_OK


def cmd_verify(args) -> int:
    base = _build_config(args)
    if args.zero_input:
        base.inputs = [np.zeros(base.model.input_size, dtype=np.int64)]
    model, t = base.model, base.t
    splits = range(model.L + 1) if args.l is None else [args.l]
    modes = MODES if args.mode == "all" else [args.mode]
    failures = []
    print(f"{'model':<14}{'mode':<9}{'l':>3}  result")
    for mode in modes:
        for l in splits:
            if mode == "delphi2" and l != model.L:
                continue
            pcfg = ProtocolConfig(mode=mode, l=l, profile=base.profile, dealer_ot=args.dealer_ot,
                                  corrupt_stage=None if args.corrupt_stage is None else args.corrupt_stage - 1)
            problems = []
            try:
                with Session(model, pcfg, base.seed, args.timeout) as session:
                    for x in base.inputs:
                        res = session.infer(x)
                        div = audit.first_divergence(model, res, x, l, t)
                        if div is not None:
                            problems.append(f"output diverges at stage {div} "
                                            f"(model layer {model.stages()[div - 1].layer})")
                        problems += [f"share recombination fails at {c.name}{': ' + c.detail if c.detail else ''}"
                                     for c in audit.share_recombination(model, res, l, t) if not c.ok]
                        problems += [f"{c.name}: {c.detail}"
                                     for c in audit.hygiene_suite(model, res, x, l, t) if not c.ok]
                        if problems:
                            break
            except ProtocolError as exc:
                where = f" at stage {exc.layer}" if exc.layer else ""
                problems.append(f"protocol error{where}: {exc}")
            status = "pass" if not problems else "FAIL " + problems[0]
            print(f"{model.name:<14}{mode:<9}{l:>3}  {status}", flush=True)
            if problems:
                failures.append((mode, l, problems[0]))
    uni = audit.mask_uniformity(t, seed=base.seed)
    print(f"mask uniformity: {'pass' if uni.ok else 'FAIL'} ({uni.detail})")
    return EXIT_OK if not failures and uni.ok else EXIT_PROTOCOL


def cmd_convert(args) -> int:
    """Materialize generated weights and write a self-contained model file."""
    try:
        model = nn.load_model(args.model)
    except (nn.ModelError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    nn.save_model(model, args.output)
    print(f"wrote {args.output}: {model.name}, L={model.L}, {len(model.stages())} linear stages")
    return EXIT_OK


def cmd_models(_args) -> int:
    for name in nn.bundled_models():
        m = nn.load_model(name)
        print(f"{name:<14}L={m.L:<3} input={m.input_size:<5} output={m.output_size}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, mode_choices):
    p.add_argument("--model", required=True, help="model file or bundled model name")
    p.add_argument("--l", type=int, default=None,
                   help="split point: layers 1..l run at the gateway (default: every layer, or all for verify)")
    p.add_argument("--mode", default="seco", choices=mode_choices)
    p.add_argument("--profile", default="desk", help="parameter profile: desk, paper or tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inputs", help="file with one fixed-point input vector per line")
    p.add_argument("--count", type=int, default=1, help="random inputs to draw when --inputs is absent")
    p.add_argument("--timeout", type=float, default=300.0, help="seconds to wait for any message")
    insecure = p.add_argument_group("insecure test switches")
    insecure.add_argument("--dealer-ot", action="store_true", help="replace oblivious transfer by a trusted dealer")
    return insecure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seco", description="Split neural-network inference between a user, "
                                     "a gateway server and two remote servers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run setup, preprocessing and online inference")
    insecure = _common(run, list(MODES))
    insecure.add_argument("--zero-randomness", action="store_true", help="use all-zero masks")
    run.add_argument("--transport", default="local", help="local, or tcp:<address map file or JSON>")
    run.add_argument("--party", help="with tcp: which party this process plays (user, a, b or c)")
    run.add_argument("--out", help="write per-inference metrics JSON here")
    run.add_argument("--predictions", default="-", help="prediction output path (default stdout)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="compare the protocol with the plaintext oracle and audit views")
    insecure = _common(ver, ["all", *MODES])
    ver.set_defaults(mode="all")
    insecure.add_argument("--corrupt-stage", type=int, help="perturb the share of this 1-based stage")
    ver.add_argument("--zero-input", action="store_true", help="verify on the all-zero input")
    ver.set_defaults(func=cmd_verify)

    conv = sub.add_parser("convert", help="write a model file with all weights materialized")
    conv.add_argument("--model", required=True)
    conv.add_argument("--output", required=True)
    conv.set_defaults(func=cmd_convert)

    models = sub.add_parser("models", help="list bundled models")
    models.set_defaults(func=cmd_models)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, TransportError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
