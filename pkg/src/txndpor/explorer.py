"""Exhaustive, duplicate-free enumeration of a program's histories.

:func:`explore_ce` walks the space of histories of a bounded transactional
program under a causally extensible isolation level (read committed, read
atomic, causal consistency, or TRUE) and reaches every complete consistent
history exactly once, without storing visited sets.  The traversal schedules
transactions in a fixed priority order; alternative orderings are recovered
by *swapping*: when a transaction commits, each earlier read it could have
supplied is a candidate pivot, and a gated swap rebuilds the history with
that read observing the newly committed writer, deleting everything that
causally intervened.  The optimality gate accepts exactly one route to every
history, which is what makes the enumeration duplicate-free.

:func:`explore_ce_star` runs the same traversal under a weak level but only
emits histories that also satisfy a stronger level, enumerating e.g.
serializable histories via causally consistent scheduling.

:func:`dfs` is the deliberately naive baseline used to cross-check coverage:
it branches over every scheduling decision (including which session begins
next) and therefore emits the same history many times.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from typing import Callable

from .isolation import check_consistency
from .model import (
    ABORTED,
    COMMIT,
    COMMITTED,
    READ,
    Event,
    EventId,
    IsolationLevel,
    OrderedHistory,
    TxnId,
    begin_event,
    causal_reachable,
    causally_before_or_equal,
    drop_events,
)
from .program import (
    ExplorationState,
    NextAction,
    Program,
    apply_event,
    replay,
    step_local,
)

EXTENSIBLE_LEVELS = (
    IsolationLevel.TRUE,
    IsolationLevel.RC,
    IsolationLevel.RA,
    IsolationLevel.CC,
)


class OracleOrder:
    """The fixed scheduling priority: transaction ids compare lexicographically.

    Sessions rank by declaration position, transactions by session position,
    and the init transaction before everything.  Event-level comparisons are
    id-tuple comparisons; an event compares against a transaction through its
    own transaction.
    """

    @staticmethod
    def txn_before(a: TxnId, b: TxnId) -> bool:
        return a < b

    @staticmethod
    def event_before(a: EventId, b: EventId) -> bool:
        return a < b

    @staticmethod
    def event_before_txn(e: EventId, t: TxnId) -> bool:
        return e.txn < t


@dataclass(frozen=True)
class ReorderCandidate:
    """A read that a newly committed transaction could have supplied."""

    read: EventId
    writer: TxnId


@dataclass
class RunStats:
    """Counters reported by one exploration run."""

    outputs: int = 0
    filtered_outputs: int = 0
    recursive_calls: int = 0
    blocked_calls: int = 0
    inconsistent_branch_entries: int = 0
    swaps_taken: int = 0
    swaps_rejected: int = 0
    max_depth: int = 0
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class TimeLimitExceeded(RuntimeError):
    """Raised when a run exceeds its wall-clock budget; carries partial stats."""

    def __init__(self, stats: RunStats):
        super().__init__("time limit exceeded")
        self.stats = stats


# ---------------------------------------------------------------------------
# Scheduling
# ---------------------------------------------------------------------------


def next_event(st: ExplorationState) -> NextAction | None:
    """The unique next event under the fixed scheduling priority.

    A pending transaction (there must be at most one) is driven to its next
    database event; otherwise the smallest unstarted transaction begins;
    otherwise the run is complete and None is returned.
    """
    pending = st.history.history.pending_txns()
    if len(pending) > 1:
        raise ValueError(f"multiple pending transactions: {pending}")
    if pending:
        return step_local(st, pending[0].session)
    for session in range(len(st.program.sessions)):
        tid = st.next_unstarted_txn(session)
        if tid is not None:
            return NextAction(begin_event(tid))
    return None


def valid_writes(
    st: ExplorationState, action: NextAction, level: IsolationLevel
) -> list[TxnId]:
    """Committed transactions the pending external read may observe.

    Candidates are filtered by consistency of the extended history and
    returned in the order their transactions entered the history.
    """
    hist = st.history.history
    event = action.event
    assert event.kind == READ and event.var is not None
    spans = st.history.txn_spans
    committed = sorted(
        (t for t in hist.txn_ids if hist.txn(t).status == COMMITTED),
        key=lambda t: spans[t][0],
    )
    out = []
    for t in committed:
        if not hist.txn(t).writes_var(event.var):
            continue
        if check_consistency(hist.with_event(event, writer=t), level):
            out.append(t)
    return out


# ---------------------------------------------------------------------------
# Swapping
# ---------------------------------------------------------------------------


def compute_reorderings(h: OrderedHistory) -> list[ReorderCandidate]:
    """Reads the just-committed transaction could have supplied instead.

    Empty unless the last event is a commit of some transaction ``t``.  A
    candidate is an external read ``r`` (of any log, aborted readers
    included) on a variable ``t`` writes, whose transaction ran entirely
    before ``t`` and is causally unrelated to it.
    """
    if h.last_event.kind != COMMIT:
        return []
    t = h.order[-1].txn
    hist = h.history
    tlog = hist.txn(t)
    out = []
    for read in hist.external_reads():
        reader = read.id.txn
        if reader == t or not tlog.writes_var(read.var):  # type: ignore[arg-type]
            continue
        if not h.txn_before_txn(reader, t):
            continue
        if causally_before_or_equal(hist, reader, t):
            continue
        out.append(ReorderCandidate(read.id, t))
    out.sort(key=lambda c: h.position[c.read])
    return out


def _swap_drop_set(h: OrderedHistory, r: EventId, t: TxnId) -> set[EventId]:
    """Events strictly after ``r`` whose transaction is not causally before ``t``."""
    pos_r = h.position[r]
    return {
        eid
        for eid in h.order
        if h.position[eid] > pos_r
        and not causally_before_or_equal(h.history, eid.txn, t)
    }


def swap(st: ExplorationState, r: EventId, t: TxnId) -> ExplorationState:
    """Rebuild the history with read ``r`` observing transaction ``t``.

    Everything after ``r`` that is not causally before ``t`` is deleted; the
    reader keeps its prefix through ``r``, is rewired to ``t``, and moves to
    the end of the order as the unique pending transaction.  The program is
    replayed over the result, so local state — and with it the reader's
    remaining control flow — is recomputed from the new value of ``r``.
    """
    h = st.history
    if causally_before_or_equal(h.history, r.txn, t):
        raise ValueError(f"reader {r.txn} is causally before {t}")
    kept = drop_events(h, _swap_drop_set(h, r, t))
    hist = kept.history.with_writer(r, t)
    others = tuple(eid for eid in kept.order if eid.txn != r.txn)
    reader_events = tuple(eid for eid in kept.order if eid.txn == r.txn)
    reordered = OrderedHistory(hist, others + reader_events)
    return replay(st.program, reordered)


def swapped(h: OrderedHistory, r: EventId) -> bool:
    """Whether read ``r`` sits in the position a swap leaves behind.

    True exactly when ``r`` observes a transaction that ran entirely before
    it yet outranks the reader in scheduling priority, no transaction below
    the reader's priority ran after ``r`` while causally following the
    writer, and no earlier read of the same transaction observes a writer
    causally at-or-after the writer of ``r``.  The last condition is what
    separates a pivot from a read appended after one: when a swap happens
    its writer has just committed, so nothing the reader observed earlier
    can causally follow it — whereas reads appended behind a pivot routinely
    observe such transactions.  Reads produced by plain scheduling never
    satisfy this; the read a swap pivots on always does, and the verdict is
    stable under extending the history, since the reader's earlier
    observations are frozen.
    """
    if r not in h.position:
        raise ValueError(f"event {r} not in history")
    t = h.history.wr_map.get(r)
    if t is None:
        return False
    reader = r.txn
    if not h.txn_before_event(t, r):
        return False
    if not reader < t:
        return False
    for other in h.history.txn_ids:
        if not other < reader:
            continue
        if h.event_before_txn(r, other):
            continue
        if causal_reachable(h.history, t, other):
            return False
    for read_id, writer in h.history.wr:
        if (
            read_id.txn == reader
            and read_id.index < r.index
            and causally_before_or_equal(h.history, t, writer)
        ):
            return False
    return True


def reads_causally_latest(
    h: OrderedHistory, level: IsolationLevel, r: EventId, t: TxnId
) -> bool:
    """Whether ``r`` observes the highest-priority writer available to it.

    The history is cut back to just before ``r`` (discarding, as a swap
    would, everything from ``r`` onward not causally before ``t``); the
    candidates are the non-aborted transactions causally before the reader
    that write the variable and keep the cut history consistent when ``r``
    is re-appended reading from them.  True when ``r``'s writer in ``h`` is
    the highest-priority candidate.
    """
    if causally_before_or_equal(h.history, r.txn, t):
        raise ValueError(f"reader {r.txn} is causally before {t}")
    read_ev = h.history.event(r)
    pos_r = h.position[r]
    dropset = {
        eid
        for eid in h.order
        if h.position[eid] >= pos_r
        and not causally_before_or_equal(h.history, eid.txn, t)
    }
    base = drop_events(h, dropset).history
    reader = r.txn
    fresh = Event(r, READ, var=read_ev.var)
    candidates = []
    for cand in base.txn_ids:
        if cand == reader:
            continue
        clog = base.txn(cand)
        if clog.status == ABORTED or not clog.writes_var(read_ev.var):  # type: ignore[arg-type]
            continue
        if not causal_reachable(base, cand, reader):
            continue
        if check_consistency(base.with_event(fresh, writer=cand), level):
            candidates.append(cand)
    if not candidates:
        return False
    return h.history.wr_map.get(r) == max(candidates)


def optimality(
    st: ExplorationState, r: EventId, t: TxnId, level: IsolationLevel
) -> bool:
    """The swap gate: accept the pivot only on the canonical route.

    Requires every external read the swap would delete — and the pivot
    itself — to be an unswapped read already observing its highest-priority
    writer, and the rebuilt history to be consistent.  Exactly one pivot
    into any given history passes this gate, which keeps the enumeration
    duplicate-free.
    """
    h = st.history
    dropset = _swap_drop_set(h, r, t)
    affected = [
        read.id
        for read in h.history.external_reads()
        if read.id == r or read.id in dropset
    ]
    affected.sort(key=lambda eid: h.position[eid])
    for read_id in affected:
        if swapped(h, read_id):
            return False
        if not reads_causally_latest(h, level, read_id, t):
            return False
    result = swap(st, r, t)
    return check_consistency(result.history.history, level)


# ---------------------------------------------------------------------------
# The enumerator
# ---------------------------------------------------------------------------

Emit = Callable[[ExplorationState], None]
EntryHook = Callable[[ExplorationState | None, ExplorationState], None]


def explore_ce(
    program: Program,
    level: IsolationLevel,
    *,
    emit: Emit | None = None,
    entry_hook: EntryHook | None = None,
    time_limit: float | None = None,
) -> RunStats:
    """Enumerate every complete ``level``-consistent history exactly once.

    Args:
        program: the bounded program to explore.
        level: a causally extensible level (RC, RA, CC or TRUE).
        emit: called once per complete history, in discovery order.
        entry_hook: called as ``entry_hook(parent, state)`` on every node
            entered, with the state it was derived from (None at the root).
        time_limit: wall-clock budget in seconds; exceeding it raises
            :class:`TimeLimitExceeded` carrying the partial stats.

    Returns:
        The run's counters.
    """
    if level not in EXTENSIBLE_LEVELS:
        raise ValueError(f"{level.value} is not causally extensible; use dfs instead")
    return _explore(program, level, None, emit, entry_hook, time_limit)


def explore_ce_star(
    program: Program,
    weak: IsolationLevel,
    strong: IsolationLevel,
    *,
    emit: Emit | None = None,
    entry_hook: EntryHook | None = None,
    time_limit: float | None = None,
) -> RunStats:
    """Enumerate ``strong``-consistent histories via a ``weak`` traversal.

    The walk is the same as :func:`explore_ce` under ``weak``; complete
    histories failing ``strong`` are counted as filtered instead of emitted.
    ``strong`` must be at least as strong as ``weak``.
    """
    if weak not in EXTENSIBLE_LEVELS:
        raise ValueError(f"{weak.value} is not causally extensible")
    if not strong.at_least(weak):
        raise ValueError(
            f"{strong.value} is weaker than the traversal level {weak.value}"
        )
    return _explore(program, weak, strong, emit, entry_hook, time_limit)


def _explore(
    program: Program,
    weak: IsolationLevel,
    strong: IsolationLevel | None,
    emit: Emit | None,
    entry_hook: EntryHook | None,
    time_limit: float | None,
) -> RunStats:
    stats = RunStats()
    start = time.monotonic()
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))

    def enter(st: ExplorationState, parent: ExplorationState | None, depth: int) -> None:
        stats.recursive_calls += 1
        stats.max_depth = max(stats.max_depth, depth)
        if time_limit is not None and time.monotonic() - start > time_limit:
            stats.wall_time = time.monotonic() - start
            raise TimeLimitExceeded(stats)
        if not check_consistency(st.history.history, weak):
            stats.inconsistent_branch_entries += 1
        if entry_hook is not None:
            entry_hook(parent, st)
        action = next_event(st)
        if action is None:
            if strong is None or check_consistency(st.history.history, strong):
                stats.outputs += 1
                if emit is not None:
                    emit(st)
            else:
                stats.filtered_outputs += 1
            return
        if action.is_external_read:
            writers = valid_writes(st, action, weak)
            if not writers:
                stats.blocked_calls += 1
                return
            for writer in writers:
                child = apply_event(st, action.event, writer=writer)
                enter(child, st, depth + 1)
                take_swaps(child, depth)
        else:
            child = apply_event(st, action.event)
            enter(child, st, depth + 1)
            take_swaps(child, depth)

    def take_swaps(st: ExplorationState, depth: int) -> None:
        for cand in compute_reorderings(st.history):
            if optimality(st, cand.read, cand.writer, weak):
                stats.swaps_taken += 1
                enter(swap(st, cand.read, cand.writer), st, depth + 1)
            else:
                stats.swaps_rejected += 1

    enter(ExplorationState.initial(program), None, 1)
    stats.wall_time = time.monotonic() - start
    return stats


# ---------------------------------------------------------------------------
# Naive baseline
# ---------------------------------------------------------------------------


def dfs(
    program: Program,
    level: IsolationLevel,
    *,
    emit: Emit | None = None,
    time_limit: float | None = None,
) -> RunStats:
    """Enumerate complete histories by branching over every scheduling choice.

    Branches over which session begins a transaction next and over every
    consistent writer for each external read, gating every single extension
    on consistency (necessary for SI and SER, where writes can be the
    blocking step).  The same history is reached along many interleavings,
    so emissions contain duplicates; callers deduplicate by encoding.
    Works at every isolation level.
    """
    stats = RunStats()
    start = time.monotonic()
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))

    def rec(st: ExplorationState, depth: int) -> None:
        stats.recursive_calls += 1
        stats.max_depth = max(stats.max_depth, depth)
        if time_limit is not None and time.monotonic() - start > time_limit:
            stats.wall_time = time.monotonic() - start
            raise TimeLimitExceeded(stats)
        if st.is_complete():
            stats.outputs += 1
            if emit is not None:
                emit(st)
            return
        hist = st.history.history
        successors: list[tuple[Event, TxnId | None]] = []
        pending = hist.pending_txns()
        if pending:
            assert len(pending) == 1
            action = step_local(st, pending[0].session)
            event = action.event
            if action.is_external_read:
                spans = st.history.txn_spans
                committed = sorted(
                    (t for t in hist.txn_ids if hist.txn(t).status == COMMITTED),
                    key=lambda t: spans[t][0],
                )
                for t in committed:
                    if not hist.txn(t).writes_var(event.var):  # type: ignore[arg-type]
                        continue
                    if check_consistency(hist.with_event(event, writer=t), level):
                        successors.append((event, t))
            else:
                if check_consistency(hist.with_event(event), level):
                    successors.append((event, None))
        else:
            for session in range(len(program.sessions)):
                tid = st.next_unstarted_txn(session)
                if tid is None:
                    continue
                if check_consistency(hist.with_begin(tid), level):
                    successors.append((begin_event(tid), None))
        if not successors:
            stats.blocked_calls += 1
            return
        for event, writer in successors:
            rec(apply_event(st, event, writer=writer), depth + 1)

    rec(ExplorationState.initial(program), 1)
    stats.wall_time = time.monotonic() - start
    return stats
