"""Command line front end.

``txndpor run PROGRAM`` enumerates the histories of a program under an
isolation level and prints summary counters; ``txndpor verify`` runs the
self-checking suites that cross-validate the enumerator against the naive
baseline and the brute-force consistency oracle on random corpora.

Exit codes: 0 success, 1 usage or parse errors, 2 assertion violation found
(reported even when the run was truncated), 3 time limit exceeded.

Set ``TXNDPOR_LOG`` to ``info`` or ``trace`` for progress logging.
"""

from __future__ import annotations

import json
import logging
import os
import random
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from .examples import EXAMPLE_PROGRAMS
from .explorer import TimeLimitExceeded, dfs, explore_ce, explore_ce_star
from .generate import (
    random_history,
    random_program,
    shrink_failing_history,
    shrink_failing_program,
)
from .isolation import (
    brute_force_consistency,
    brute_force_consistency_cached,
    check_consistency,
)
from .model import IsolationLevel, TxnId, canonical_decode, canonical_encode
from .oracles import canonical_order, is_or_respectful, prev
from .program import (
    ExplorationState,
    Program,
    ProgramError,
    assertions,
    parse,
)

_log = logging.getLogger(__name__)

_LEVEL_NAMES = ["rc", "ra", "cc", "si", "ser", "true"]
_MODES = ["explore-ce", "explore-ce-star", "dfs"]
_SUITES = ["soundness", "completeness", "optimality", "oracles", "axioms"]


class OracleCheckError(RuntimeError):
    """An exploration state failed one of the uniqueness oracles."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a single ``run`` invocation needs."""

    mode: str
    level: IsolationLevel
    weak_level: IsolationLevel | None
    emit: str | None
    dedup: bool
    oracle_check: bool
    seed: int | None
    time_limit: float | None
    stats_json: str | None


def _configure_logging() -> None:
    value = os.environ.get("TXNDPOR_LOG", "off").lower()
    if value in ("", "off"):
        return
    if value == "info":
        level = logging.INFO
    elif value == "trace":
        level = logging.DEBUG
    else:
        raise click.UsageError(f"TXNDPOR_LOG must be off, info or trace, not {value!r}")
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


@click.group()
def cli() -> None:
    """Enumerate transactional histories under weak isolation levels."""


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@cli.command()
@click.argument("program", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(_MODES), default="explore-ce",
              help="Enumeration strategy.")
@click.option("--level", type=click.Choice(_LEVEL_NAMES), default="cc",
              help="Isolation level (the emission level, for star mode).")
@click.option("--weak-level", type=click.Choice(_LEVEL_NAMES), default=None,
              help="Traversal level for explore-ce-star.")
@click.option("--emit", type=click.Path(dir_okay=False), default=None,
              help="Write one JSON history per line to this file.")
@click.option("--dedup", is_flag=True,
              help="Suppress duplicate histories in the emitted file.")
@click.option("--oracle-check", is_flag=True,
              help="Verify the uniqueness oracles at every explored state.")
@click.option("--seed", type=int, default=None,
              help="Accepted for interface parity; runs are deterministic.")
@click.option("--time-limit", type=float, default=None,
              help="Wall-clock budget in seconds.")
@click.option("--stats-json", type=click.Path(dir_okay=False), default=None,
              help="Write run counters as JSON to this file.")
def run(
    program: str,
    mode: str,
    level: str,
    weak_level: str | None,
    emit: str | None,
    dedup: bool,
    oracle_check: bool,
    seed: int | None,
    time_limit: float | None,
    stats_json: str | None,
) -> int:
    """Enumerate the histories of PROGRAM."""
    config = RunConfig(
        mode=mode,
        level=IsolationLevel.from_name(level),
        weak_level=IsolationLevel.from_name(weak_level) if weak_level else None,
        emit=emit,
        dedup=dedup,
        oracle_check=oracle_check,
        seed=seed,
        time_limit=time_limit,
        stats_json=stats_json,
    )
    text = Path(program).read_text()
    return _execute_run(config, parse(text))


def _oracle_hook(prog: Program, level: IsolationLevel):
    txns = tuple(
        TxnId(s, i)
        for s in range(len(prog.sessions))
        for i in range(len(prog.sessions[s].txns))
    )

    def hook(parent: ExplorationState | None, st: ExplorationState) -> None:
        if not is_or_respectful(st.history, txns):
            raise OracleCheckError(
                f"state is not order-respectful: {canonical_encode(st.history.history)!r}"
            )
        expected = (parent if parent is not None else st).history.history
        got = prev(prog, st.history, level)
        if got != expected:
            raise OracleCheckError(
                f"predecessor mismatch at {canonical_encode(st.history.history)!r}"
            )
        spans = st.history.txn_spans
        appearance = sorted(st.history.history.txn_ids, key=lambda t: spans[t][0])
        for a, b in zip(appearance, appearance[1:]):
            if not canonical_order(st.history.history, a, b):
                raise OracleCheckError(
                    f"maintained order disagrees with canonical order on {a}, {b}"
                )

    return hook


def _execute_run(config: RunConfig, prog: Program) -> int:
    if config.mode == "explore-ce-star" and config.weak_level is None:
        raise click.UsageError("explore-ce-star requires --weak-level")
    if config.mode != "explore-ce-star" and config.weak_level is not None:
        raise click.UsageError("--weak-level only applies to explore-ce-star")
    if config.oracle_check and config.mode == "dfs":
        raise click.UsageError("--oracle-check applies to the explore modes")
    _log.info("running %s at %s", config.mode, config.level.value)

    seen: set[bytes] = set()
    raw = 0
    violation = False
    truncated = False
    out = open(config.emit, "wb") if config.emit else None
    hook = None
    if config.oracle_check:
        weak = config.weak_level or config.level
        hook = _oracle_hook(prog, weak)

    def on_emit(st: ExplorationState) -> None:
        nonlocal raw, violation
        raw += 1
        encoded = canonical_encode(st.history.history)
        fresh = encoded not in seen
        seen.add(encoded)
        if out is not None and (fresh or not config.dedup):
            out.write(encoded + b"\n")
        if assertions(st):
            violation = True

    try:
        if config.mode == "explore-ce":
            stats = explore_ce(
                prog, config.level, emit=on_emit, entry_hook=hook,
                time_limit=config.time_limit,
            )
        elif config.mode == "explore-ce-star":
            assert config.weak_level is not None
            stats = explore_ce_star(
                prog, config.weak_level, config.level, emit=on_emit,
                entry_hook=hook, time_limit=config.time_limit,
            )
        else:
            stats = dfs(prog, config.level, emit=on_emit, time_limit=config.time_limit)
    except TimeLimitExceeded as exc:
        stats = exc.stats
        truncated = True
    finally:
        if out is not None:
            out.close()

    click.echo(f"distinct histories: {len(seen)}")
    click.echo(f"raw emissions: {raw}")
    click.echo(f"filtered: {stats.filtered_outputs}")
    click.echo(f"blocked calls: {stats.blocked_calls}")
    click.echo(f"inconsistent entries: {stats.inconsistent_branch_entries}")
    click.echo(f"swaps taken: {stats.swaps_taken}, rejected: {stats.swaps_rejected}")
    click.echo(f"max depth: {stats.max_depth}")
    click.echo(f"wall time: {stats.wall_time:.3f}s")
    if truncated:
        click.echo("time limit exceeded; results are partial")
    if violation:
        click.echo("assertion violated by at least one history")

    if config.stats_json:
        payload = dict(stats.as_dict(), distinct_histories=len(seen))
        Path(config.stats_json).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n"
        )
    if violation:
        return 2
    if truncated:
        return 3
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--suite", type=click.Choice(_SUITES + ["all"]), default="all",
              help="Which self-check to run.")
@click.option("--cases", type=int, default=25, help="Random cases per suite.")
@click.option("--seed", type=int, default=0, help="Random seed.")
@click.option("--level", type=click.Choice(["rc", "ra", "cc", "true"]), default="cc",
              help="Exploration level for the program-based suites.")
def verify(suite: str, cases: int, seed: int, level: str) -> int:
    """Cross-check the enumerator against its independent oracles."""
    lvl = IsolationLevel.from_name(level)
    suites = _SUITES if suite == "all" else [suite]
    if cases <= 0:
        for name in suites:
            click.echo(f"{name}: vacuous (0 cases)")
        return 0
    for name in suites:
        rng = random.Random(seed)
        failure = _SUITE_RUNNERS[name](rng, cases, lvl)
        if failure is not None:
            click.echo(f"{name}: FAILED")
            click.echo(failure)
            return 1
        click.echo(f"{name}: ok ({cases} cases)")
    return 0


def _explore_encodings(prog: Program, level: IsolationLevel) -> list[bytes]:
    out: list[bytes] = []
    explore_ce(prog, level, emit=lambda st: out.append(
        canonical_encode(st.history.history)))
    return out


def _dfs_encodings(prog: Program, level: IsolationLevel) -> list[bytes]:
    out: list[bytes] = []
    dfs(prog, level, emit=lambda st: out.append(
        canonical_encode(st.history.history)))
    return out


def _corpus(rng: random.Random, cases: int) -> list[str]:
    return list(EXAMPLE_PROGRAMS.values()) + [
        random_program(rng) for _ in range(cases)
    ]


def _suite_axioms(rng: random.Random, cases: int, level: IsolationLevel) -> str | None:
    checked = (
        IsolationLevel.RC,
        IsolationLevel.RA,
        IsolationLevel.CC,
        IsolationLevel.SI,
        IsolationLevel.SER,
    )
    for _ in range(cases):
        h = random_history(rng)
        for lvl in checked:
            if check_consistency(h, lvl) != brute_force_consistency(h, lvl):
                bad = shrink_failing_history(
                    h,
                    lambda c: check_consistency(c, lvl)
                    != brute_force_consistency(c, lvl),
                )
                return (
                    f"consistency checker disagrees with brute force at "
                    f"{lvl.value} on:\n{canonical_encode(bad).decode()}"
                )
    return None


def _suite_soundness(rng: random.Random, cases: int, level: IsolationLevel) -> str | None:
    def unsound(prog: Program) -> bool:
        return any(
            not brute_force_consistency_cached(canonical_decode(enc), level)
            for enc in _explore_encodings(prog, level)
        )

    for src in _corpus(rng, cases):
        if unsound(parse(src)):
            return "inconsistent history emitted for:\n" + shrink_failing_program(
                src, unsound
            )
    return None


def _suite_completeness(rng: random.Random, cases: int, level: IsolationLevel) -> str | None:
    def incomplete(prog: Program) -> bool:
        return set(_explore_encodings(prog, level)) != set(_dfs_encodings(prog, level))

    for src in _corpus(rng, cases):
        if incomplete(parse(src)):
            return "enumeration differs from the baseline for:\n" + (
                shrink_failing_program(src, incomplete)
            )
    return None


def _suite_optimality(rng: random.Random, cases: int, level: IsolationLevel) -> str | None:
    def duplicated(prog: Program) -> bool:
        encs = _explore_encodings(prog, level)
        return len(encs) != len(set(encs))

    for src in _corpus(rng, cases):
        if duplicated(parse(src)):
            return "duplicate emission for:\n" + shrink_failing_program(src, duplicated)
    return None


def _suite_oracles(rng: random.Random, cases: int, level: IsolationLevel) -> str | None:
    def violates(prog: Program) -> bool:
        try:
            explore_ce(prog, level, entry_hook=_oracle_hook(prog, level))
        except OracleCheckError:
            return True
        return False

    for src in _corpus(rng, cases):
        if violates(parse(src)):
            return "oracle violation for:\n" + shrink_failing_program(src, violates)
    return None


_SUITE_RUNNERS = {
    "axioms": _suite_axioms,
    "soundness": _suite_soundness,
    "completeness": _suite_completeness,
    "optimality": _suite_optimality,
    "oracles": _suite_oracles,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    try:
        _configure_logging()
        result = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ProgramError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OracleCheckError as exc:
        click.echo(f"oracle check failed: {exc}", err=True)
        return 1
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return int(result) if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
