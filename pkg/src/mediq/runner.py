from __future__ import annotations

import collections
import logging
import time
import typing as t
from dataclasses import dataclass, field

import numpy as np

from mediq.datastore import Table, write_csv
from mediq.exception import NoProviders, ProtocolError
from mediq.roles.client import ClientEnv
from mediq.roles.events import Start
from mediq.roles.mediator import MediatorEnv
from mediq.roles.party import (
    ClientParty,
    MediatorParty,
    ProviderParty,
    RoleSubscriber,
    create_client_party,
    create_mediator_party,
    create_provider_party,
)
from mediq.roles.provider import ProviderEnv
from mediq.transport.envelope import Address, Role
from mediq.transport.simnet import SimnetResult, SimulatedNetwork

if t.TYPE_CHECKING:
    from pathlib import Path

    from mediq.config import RunConfig
    from mediq.transport.simnet import Party
    from mediq.transport.transcript import Transcript

log = logging.getLogger(__name__)

RESULT_FILE = "result.csv"
TRANSCRIPT_FILE = "transcript.jsonl"


@dataclass(frozen=True)
class Session:
    """Parties of one protocol session, wired but not started."""

    session_id: str
    network_seed: int
    client: ClientParty
    mediator: MediatorParty
    providers: t.Sequence[ProviderParty]

    @property
    def parties(self) -> t.Sequence[Party]:
        return [self.client, self.mediator, *self.providers]


@dataclass(frozen=True)
class RunReport:
    session_id: str
    n: t.Optional[int]
    result: t.Optional[Table] = field(repr=False)
    transcript: Transcript = field(repr=False)
    result_path: t.Optional[Path]
    transcript_path: t.Optional[Path]
    counts: t.Mapping[str, int]
    steps: int
    elapsed: float
    wall_time: float
    failure: t.Optional[Exception] = None

    @property
    def ok(self) -> bool:
        return self.failure is None and bool(self.n)

    def raise_for_failure(self) -> None:
        if self.failure is not None:
            raise self.failure

        if not self.n:
            msg = "no provider acknowledged the query"
            raise NoProviders(msg, self.session_id)

    def to_json(self) -> dict[str, object]:
        return {
            "session_id": self.session_id,
            "n": self.n,
            "rows": len(self.result) if self.result is not None else None,
            "result": str(self.result_path) if self.result_path is not None else None,
            "transcript": str(self.transcript_path) if self.transcript_path is not None else None,
            "counts": dict(self.counts),
            "steps": self.steps,
            "elapsed": self.elapsed,
            "wall_time": self.wall_time,
            "failure": None if self.failure is None else f"{type(self.failure).__name__}: {self.failure}",
        }


def provider_address(identity: str) -> Address:
    return Address(Role.PROVIDER, identity)


def create_session(
    config: RunConfig,
    tables: t.Mapping[str, Table],
    subscribers: t.Sequence[RoleSubscriber] = (),
) -> Session:
    """
    Wire the client, the mediator and one provider per table.

    Every party gets its own random stream spawned from the run seed, so a party's draws don't depend on the
    delivery interleaving of the others.
    """

    network_seq, session_seq, client_seq, mediator_seq, *provider_seqs = np.random.SeedSequence(config.seed).spawn(
        4 + len(tables)
    )
    session_id = np.random.default_rng(session_seq).bytes(8).hex()
    policy = config.policy.to_policy()

    providers = [
        create_provider_party(
            provider_address(identity),
            ProviderEnv(table, policy),
            np.random.default_rng(seq),
            subscribers,
        )
        for (identity, table), seq in zip(sorted(tables.items()), provider_seqs)
    ]
    mediator = create_mediator_party(
        MediatorEnv(config.timeouts.ack_deadline),
        np.random.default_rng(mediator_seq),
        [provider.address for provider in providers],
        subscribers,
    )
    client = create_client_party(
        ClientEnv(session_id, config.m, config.timeouts.key_sets, config.timeouts.bundles),
        np.random.default_rng(client_seq),
        subscribers,
    )

    return Session(session_id, int(network_seq.generate_state(1)[0]), client, mediator, providers)


def simulate(config: RunConfig, session: Session) -> SimnetResult:
    network = SimulatedNetwork(
        session.parties,
        session.network_seed,
        latency=config.timeouts.latency,
        step_cap=config.step_cap,
    )
    return network.run([(session.client.address, Start(config.query.to_query()))])


def run_end_to_end(
    config: RunConfig,
    tables: t.Optional[t.Mapping[str, Table]] = None,
    *,
    write: bool = True,
) -> RunReport:
    """
    Run one session and write the consolidated result and the transcript into `config.out`.

    Provider tables are loaded from the config unless given. Protocol failures are reported in `RunReport.failure`
    rather than raised; use `RunReport.raise_for_failure`.
    """

    started = time.perf_counter()
    if tables is None:
        tables = {provider.identity: provider.load() for provider in config.providers}

    session = create_session(config, tables)
    log.info("session %s starts with %d registered providers", session.session_id, len(session.providers))

    outcome = simulate(config, session)
    client = session.client

    failure = client.failure
    if failure is None and client.result is None:
        msg = "session didn't complete"
        failure = ProtocolError(msg, client.state.phase)

    result_path: t.Optional[Path] = None
    transcript_path: t.Optional[Path] = None
    if write:
        transcript_path = config.out / TRANSCRIPT_FILE
        outcome.transcript.dump(transcript_path)

        if client.result is not None:
            result_path = config.out / RESULT_FILE
            write_csv(client.result, result_path)

    counts = collections.Counter(record.envelope.msg_type.value for record in outcome.transcript)
    report = RunReport(
        session_id=session.session_id,
        n=client.n,
        result=client.result,
        transcript=outcome.transcript,
        result_path=result_path,
        transcript_path=transcript_path,
        counts=dict(sorted(counts.items())),
        steps=outcome.steps,
        elapsed=outcome.elapsed,
        wall_time=time.perf_counter() - started,
        failure=failure,
    )
    log.info("session %s finished: n=%s failure=%s", session.session_id, report.n, failure)

    return report
