from __future__ import annotations

import argparse
import enum
import json
import logging
import sys
import typing as t
from pathlib import Path

import numpy as np

from mediq.abc import MediqError
from mediq.audit import AuditReport, TranscriptParseError, audit, audit_file, sensitive_cells
from mediq.config import ConfigError, SyntheticModel, load_run_config, load_stats_config
from mediq.datastore import HOSPITAL_SCHEMA, DatastoreError, Table, dump_csv, write_csv
from mediq.exception import DecryptFailure, NoProviders, PartialProviderFailure, ProtocolError
from mediq.experiment import STATS_FILE, stats_experiment, write_stats
from mediq.keyprotocol import (
    KeySetTooSmall,
    blind,
    generate_client_keypair,
    generate_key_set,
    multi_encrypt,
    open_slots,
    select_index,
    unwrap,
)
from mediq.runner import TRANSCRIPT_FILE, run_end_to_end

if t.TYPE_CHECKING:
    from mediq.config import RunConfig

log = logging.getLogger(__name__)

REPORT_FILE = "report.json"
AUDIT_FILE = "audit.json"
SYNTHETIC_FILE = "synthetic.csv"

DEMO_ROW = "1,p1,506001,Swine flu,30,Tami flu"


class ExitCode(enum.IntEnum):
    OK = 0
    AUDIT_FAILED = 1
    CONFIG_ERROR = 2
    NO_PROVIDERS = 3
    PARTIAL_PROVIDER_FAILURE = 4
    DECRYPT_FAILURE = 5
    PROTOCOL_ERROR = 6
    INPUT_ERROR = 7


def exit_code_for(err: BaseException) -> ExitCode:
    # subclasses go first: every protocol failure is a ProtocolError
    mapping: t.Sequence[tuple[type[BaseException], ExitCode]] = (
        (ConfigError, ExitCode.CONFIG_ERROR),
        (KeySetTooSmall, ExitCode.CONFIG_ERROR),
        (NoProviders, ExitCode.NO_PROVIDERS),
        (PartialProviderFailure, ExitCode.PARTIAL_PROVIDER_FAILURE),
        (DecryptFailure, ExitCode.DECRYPT_FAILURE),
        (ProtocolError, ExitCode.PROTOCOL_ERROR),
        (TranscriptParseError, ExitCode.INPUT_ERROR),
        (DatastoreError, ExitCode.INPUT_ERROR),
        (OSError, ExitCode.INPUT_ERROR),
    )
    for kind, code in mapping:
        if isinstance(err, kind):
            return code

    return ExitCode.PROTOCOL_ERROR


def _write_json(data: object, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_tables(config: RunConfig) -> dict[str, Table]:
    return {provider.identity: provider.load() for provider in config.providers}


def _print_audit(report: AuditReport) -> None:
    for check in report.checks:
        print(f"{check.name:<18} {'pass' if check.passed else 'FAIL'}")
        for detail in check.details:
            print(f"    {detail}")
    print(f"{'overall':<18} {'pass' if report.passed else 'FAIL'}")


def cmd_gen_data(args: argparse.Namespace) -> ExitCode:
    synthetic = SyntheticModel(rows=args.rows, seed=args.seed, age_mean=args.age_mean)
    path = args.out / args.name
    write_csv(synthetic.generate(), path)
    print(f"wrote {args.rows} rows to {path}")
    return ExitCode.OK


def cmd_run(args: argparse.Namespace) -> ExitCode:
    config = load_run_config(args.config, {"seed": args.seed, "out": args.out})
    tables = _load_tables(config)

    report = run_end_to_end(config, tables)
    _write_json(report.to_json(), config.out / REPORT_FILE)
    print(f"session {report.session_id}: n={report.n} steps={report.steps} counts={dict(report.counts)}")

    report.raise_for_failure()
    assert report.result is not None
    print(f"{len(report.result)} rows written to {report.result_path}")

    if args.audit:
        verdict = audit(
            report.transcript,
            sensitive=sensitive_cells(tables.values()),
            identities=list(tables),
        )
        _write_json(verdict.to_json(), config.out / AUDIT_FILE)
        _print_audit(verdict)
        if not verdict.passed:
            return ExitCode.AUDIT_FAILED

    return ExitCode.OK


def cmd_audit(args: argparse.Namespace) -> ExitCode:
    sensitive: frozenset[str] = frozenset()
    identities: list[str] = []
    transcript_path: t.Optional[Path] = args.transcript

    if args.config is not None:
        config = load_run_config(args.config, {"out": args.out})
        tables = _load_tables(config)
        sensitive = sensitive_cells(tables.values())
        identities = list(tables)
        if transcript_path is None:
            transcript_path = config.out / TRANSCRIPT_FILE

    if transcript_path is None:
        msg = "audit needs a transcript path or a run config"
        raise ConfigError(msg)

    report = audit_file(transcript_path, sensitive=sensitive, identities=identities)
    out = args.out if args.out is not None else transcript_path.parent
    _write_json(report.to_json(), out / AUDIT_FILE)
    _print_audit(report)

    return ExitCode.OK if report.passed else ExitCode.AUDIT_FAILED


def cmd_stats(args: argparse.Namespace) -> ExitCode:
    config = load_stats_config(args.config, {"seed": args.seed, "out": args.out, "workers": args.workers})

    rows = stats_experiment(config)
    write_stats(rows, config.out / STATS_FILE)

    print(f"{'n':>7} {'family':<9} {'param':>6} {'|mean err|':>12} {'|var err|':>12}")
    for row in rows:
        print(
            f"{row.n:>7} {row.family.value:<9} {row.parameter:>6g} "
            f"{row.mean_error:>12.6f} {row.variance_error:>12.6f}"
        )

    return ExitCode.OK


def cmd_keys_demo(args: argparse.Namespace) -> ExitCode:
    rng = np.random.default_rng(args.seed)
    alias = rng.bytes(8).hex()
    payload = dump_csv(Table(HOSPITAL_SCHEMA)).encode("utf-8") + DEMO_ROW.encode("utf-8") + b"\n"

    keyset = generate_key_set(args.m, alias, rng)
    keypair = generate_client_keypair(rng)
    selection = select_index(keyset, rng)
    blinded = blind(keyset, selection, keypair.public, rng)

    print(f"provider {alias} key set, m={keyset.m}")
    for i, key in enumerate(keyset.keys):
        print(f"  key[{i}]  {key.material.hex()[:16]}...")

    print(f"\nclient view: selected index {selection.index}, public key {keypair.public.hex()[:16]}...")
    for i, slot in enumerate(blinded.slots):
        marker = "real" if i == selection.index else "decoy"
        print(f"  slot[{i}] {marker:<5} {slot.hex()[:24]}...")

    candidates = unwrap(keyset, blinded)
    print("\nprovider view: unwrapped candidates, the selection isn't known here")
    for i, candidate in enumerate(candidates):
        print(f"  candidate[{i}]  {candidate.hex()[:16]}...")

    bundle = multi_encrypt(payload, candidates, rng, alias=alias)
    print(f"\nbundle: {len(bundle.payloads)} payloads of {len(bundle.payloads[0])} bytes")

    opened = open_slots(bundle, keypair)
    print(f"\nclient opens {len(opened)} of {len(bundle.payloads)} payloads: slots {sorted(opened)}")
    for plaintext in opened.values():
        print(plaintext.decode("utf-8"), end="")

    return ExitCode.OK if len(opened) == 1 else ExitCode.DECRYPT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mediq",
        description="Mediated private queries over perturbed provider tables.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser, *, config_required: bool = False) -> None:
        sub.add_argument("--config", type=Path, required=config_required, help="JSON config file")
        sub.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sub.add_argument("--out", type=Path, default=None, help="output directory")

    gen = subparsers.add_parser("gen-data", help="write a synthetic hospital table")
    gen.add_argument("--rows", type=int, default=100)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--age-mean", type=float, default=None, help="draw ages from a normal distribution")
    gen.add_argument("--out", type=Path, default=Path("data"))
    gen.add_argument("--name", default=SYNTHETIC_FILE)
    gen.set_defaults(handler=cmd_gen_data)

    run = subparsers.add_parser("run", help="run one session on the simulated network")
    add_common(run, config_required=True)
    run.add_argument("--audit", action="store_true", help="audit the transcript after the run")
    run.set_defaults(handler=cmd_run)

    check = subparsers.add_parser("audit", help="audit a recorded transcript")
    check.add_argument("transcript", type=Path, nargs="?", default=None)
    add_common(check)
    check.set_defaults(handler=cmd_audit)

    stats = subparsers.add_parser("stats", help="moment recovery accuracy experiment")
    add_common(stats)
    stats.add_argument("--workers", type=int, default=None)
    stats.set_defaults(handler=cmd_stats)

    demo = subparsers.add_parser("keys-demo", help="walk through the key selection exchange")
    demo.add_argument("--m", type=int, default=2)
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(handler=cmd_keys_demo)

    return parser


def main(argv: t.Optional[t.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    handler: t.Callable[[argparse.Namespace], ExitCode] = args.handler
    try:
        return int(handler(args))

    except (MediqError, OSError) as err:
        code = exit_code_for(err)
        log.debug("command %s failed", args.command, exc_info=err)
        print(f"mediq: {type(err).__name__}: {err}", file=sys.stderr)
        return int(code)


if __name__ == "__main__":
    sys.exit(main())
