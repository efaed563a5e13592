"""History data model: events, transaction logs, histories, ordered histories.

A history abstracts one execution's database interaction: a set of transaction
logs together with a session order (derived from positional transaction ids)
and a write-read relation mapping each external read to the transaction whose
write it observes.  An ordered history additionally carries the total order in
which events were appended during exploration.

Typical construction goes through :class:`OrderedHistory`::

    h = OrderedHistory.initial(("x", "y"))
    h = h.append(begin_event(TxnId(0, 0)))
    h = h.append(read_event(TxnId(0, 0), 1, "x"), writer=INIT_TXN)

All values are immutable; mutation happens by producing new values.
"""

from __future__ import annotations

import json
import weakref
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator, NamedTuple

# ---------------------------------------------------------------------------
# Identifiers
# ---------------------------------------------------------------------------


class TxnId(NamedTuple):
    """Positional transaction identity: (session, index within session).

    The tuple ordering doubles as the oracle order used by the scheduler:
    sessions in declaration order, transactions in session order, with the
    init transaction (session -1) before everything.
    """

    session: int
    index: int


class EventId(NamedTuple):
    """Positional event identity: (transaction, position in program order).

    Identity is structural, so the same program event compares equal across
    exploration branches.  Tuple ordering is the event-level oracle order.
    """

    txn: TxnId
    index: int


INIT_TXN = TxnId(-1, 0)

# Event kinds.
BEGIN = "begin"
READ = "read"
WRITE = "write"
COMMIT = "commit"
ABORT = "abort"

_KINDS = (BEGIN, READ, WRITE, COMMIT, ABORT)

# Transaction statuses.
PENDING = "pending"
COMMITTED = "committed"
ABORTED = "aborted"


# ---------------------------------------------------------------------------
# Events and transaction logs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    """One database action: begin/read/write/commit/abort.

    A read or write carries exactly one variable; a write also carries the
    (already evaluated) integer value.
    """

    id: EventId
    kind: str
    var: str | None = None
    value: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind in (BEGIN, COMMIT, ABORT):
            if self.var is not None or self.value is not None:
                raise ValueError(f"{self.kind} events carry no variable")
        elif self.kind == READ:
            if self.var is None or self.value is not None:
                raise ValueError("read events carry a variable and no value")
        else:  # WRITE
            if self.var is None or self.value is None:
                raise ValueError("write events carry a variable and a value")


def begin_event(txn: TxnId) -> Event:
    return Event(EventId(txn, 0), BEGIN)


def read_event(txn: TxnId, index: int, var: str) -> Event:
    return Event(EventId(txn, index), READ, var=var)


def write_event(txn: TxnId, index: int, var: str, value: int) -> Event:
    return Event(EventId(txn, index), WRITE, var=var, value=value)


def commit_event(txn: TxnId, index: int) -> Event:
    return Event(EventId(txn, index), COMMIT)


def abort_event(txn: TxnId, index: int) -> Event:
    return Event(EventId(txn, index), ABORT)


@dataclass(frozen=True)
class TransactionLog:
    """A transaction's events in program order.

    The first event is always Begin; a Commit or Abort, if present, is last
    and unique.  The event sequence *is* the program order.
    """

    id: TxnId
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        if not self.events:
            raise ValueError(f"transaction {self.id} has no events")
        if self.events[0].kind != BEGIN:
            raise ValueError(f"transaction {self.id} does not start with begin")
        for pos, ev in enumerate(self.events):
            if ev.id != EventId(self.id, pos):
                raise ValueError(
                    f"event {ev.id} at position {pos} of transaction {self.id}"
                )
            if ev.kind == BEGIN and pos != 0:
                raise ValueError(f"transaction {self.id} has a non-initial begin")
            if ev.kind in (COMMIT, ABORT) and pos != len(self.events) - 1:
                raise ValueError(f"transaction {self.id} continues past {ev.kind}")

    @cached_property
    def status(self) -> str:
        last = self.events[-1].kind
        if last == COMMIT:
            return COMMITTED
        if last == ABORT:
            return ABORTED
        return PENDING

    @cached_property
    def read_set(self) -> tuple[Event, ...]:
        """External reads: reads with no program-order-earlier same-variable write."""
        out = []
        written: set[str] = set()
        for ev in self.events:
            if ev.kind == READ and ev.var not in written:
                out.append(ev)
            elif ev.kind == WRITE:
                written.add(ev.var)  # type: ignore[arg-type]
        return tuple(out)

    @cached_property
    def write_set(self) -> dict[str, Event]:
        """Last write per variable; empty for aborted transactions."""
        if self.status == ABORTED:
            return {}
        out: dict[str, Event] = {}
        for ev in self.events:
            if ev.kind == WRITE:
                out[ev.var] = ev  # type: ignore[index]
        return out

    def writes_var(self, var: str) -> bool:
        return var in self.write_set

    def has_own_write_before(self, index: int, var: str) -> bool:
        return any(
            ev.kind == WRITE and ev.var == var for ev in self.events[:index]
        )


# ---------------------------------------------------------------------------
# Isolation levels
# ---------------------------------------------------------------------------


class IsolationLevel(Enum):
    """Consistency predicate selector, ordered by strength.

    TRUE accepts every history; the rest are the usual weak isolation levels,
    with SER the strongest.
    """

    TRUE = "true"
    RC = "rc"
    RA = "ra"
    CC = "cc"
    SI = "si"
    SER = "ser"

    @property
    def strength(self) -> int:
        return _STRENGTH[self]

    def at_least(self, other: "IsolationLevel") -> bool:
        """True when this level is at least as strong as ``other``."""
        return self.strength >= other.strength

    @classmethod
    def from_name(cls, name: str) -> "IsolationLevel":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown isolation level {name!r}") from None


_STRENGTH = {
    IsolationLevel.TRUE: 0,
    IsolationLevel.RC: 1,
    IsolationLevel.RA: 2,
    IsolationLevel.CC: 3,
    IsolationLevel.SI: 4,
    IsolationLevel.SER: 5,
}


# ---------------------------------------------------------------------------
# Histories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class History:
    """Transaction logs plus the write-read relation.

    The session order is derived from the positional transaction ids rather
    than stored: within a session, transactions are ordered by index, and the
    init transaction precedes every other.  ``wr`` maps each (externally)
    reading event to the transaction whose write it observes; totality of
    ``wr`` over the external reads is *not* a construction invariant (partial
    histories arise while editing) — see :meth:`is_well_formed`.
    """

    logs: tuple[TransactionLog, ...]
    wr: tuple[tuple[EventId, TxnId], ...]

    def __post_init__(self) -> None:
        ids = [log.id for log in self.logs]
        if ids != sorted(ids):
            raise ValueError("logs must be sorted by transaction id")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate transaction id")
        by_id = {log.id: log for log in self.logs}
        init = by_id.get(INIT_TXN)
        if init is None:
            raise ValueError("history lacks the init transaction")
        if init.status != COMMITTED:
            raise ValueError("init transaction must be committed")
        if list(self.wr) != sorted(self.wr):
            raise ValueError("wr must be sorted")
        seen_reads: set[EventId] = set()
        for read_id, writer in self.wr:
            if read_id in seen_reads:
                raise ValueError(f"read {read_id} has two writers")
            seen_reads.add(read_id)
            reader = by_id.get(read_id.txn)
            if reader is None or read_id.index >= len(reader.events):
                raise ValueError(f"wr source read {read_id} not in history")
            ev = reader.events[read_id.index]
            if ev.kind != READ:
                raise ValueError(f"wr source {read_id} is not a read")
            if reader.has_own_write_before(read_id.index, ev.var):  # type: ignore[arg-type]
                raise ValueError(f"read {read_id} is internal, cannot have a writer")
            if writer == read_id.txn:
                raise ValueError(f"read {read_id} reads from its own transaction")
            wlog = by_id.get(writer)
            if wlog is None:
                raise ValueError(f"writer {writer} of read {read_id} not in history")
            if wlog.status == ABORTED:
                raise ValueError(f"read {read_id} reads from aborted {writer}")
            if not wlog.writes_var(ev.var):  # type: ignore[arg-type]
                raise ValueError(f"writer {writer} does not write {ev.var!r}")
        # Session order united with write-read must stay acyclic.
        if self._has_causal_cycle():
            raise ValueError("so union wr is cyclic")

    def _has_causal_cycle(self) -> bool:
        color: dict[TxnId, int] = {}

        def visit(node: TxnId) -> bool:
            color[node] = 1
            for nxt in self.causal_adjacency.get(node, ()):
                c = color.get(nxt, 0)
                if c == 1 or (c == 0 and visit(nxt)):
                    return True
            color[node] = 2
            return False

        return any(color.get(t, 0) == 0 and visit(t) for t in self.txn_ids)

    # -- basic accessors ----------------------------------------------------

    @cached_property
    def by_id(self) -> dict[TxnId, TransactionLog]:
        return {log.id: log for log in self.logs}

    @cached_property
    def txn_ids(self) -> tuple[TxnId, ...]:
        return tuple(log.id for log in self.logs)

    def txn(self, tid: TxnId) -> TransactionLog:
        try:
            return self.by_id[tid]
        except KeyError:
            raise ValueError(f"unknown transaction {tid}") from None

    @cached_property
    def wr_map(self) -> dict[EventId, TxnId]:
        return dict(self.wr)

    @cached_property
    def event_ids(self) -> frozenset[EventId]:
        return frozenset(ev.id for log in self.logs for ev in log.events)

    def events(self) -> Iterator[Event]:
        for log in self.logs:
            yield from log.events

    def event(self, eid: EventId) -> Event:
        log = self.txn(eid.txn)
        if eid.index >= len(log.events):
            raise ValueError(f"unknown event {eid}")
        return log.events[eid.index]

    @cached_property
    def variables(self) -> tuple[str, ...]:
        return tuple(sorted(self.txn(INIT_TXN).write_set))

    def external_reads(self) -> Iterator[Event]:
        """All external reads across all logs (aborted readers included)."""
        for log in self.logs:
            yield from log.read_set

    def is_well_formed(self) -> bool:
        """Whether every external read has a writer assigned."""
        return all(r.id in self.wr_map for r in self.external_reads())

    def pending_txns(self) -> tuple[TxnId, ...]:
        return tuple(
            log.id for log in self.logs if log.status == PENDING and log.id != INIT_TXN
        )

    # -- session order and causality ----------------------------------------

    @cached_property
    def sessions(self) -> dict[int, tuple[TxnId, ...]]:
        """Session id -> its transactions in session order (init excluded)."""
        out: dict[int, list[TxnId]] = {}
        for tid in self.txn_ids:
            if tid != INIT_TXN:
                out.setdefault(tid.session, []).append(tid)
        return {s: tuple(sorted(ts)) for s, ts in out.items()}

    @cached_property
    def so_pairs(self) -> frozenset[tuple[TxnId, TxnId]]:
        """The session order as a relation: same-session pairs plus init before all."""
        pairs = {
            (INIT_TXN, tid) for tid in self.txn_ids if tid != INIT_TXN
        }
        for txns in self.sessions.values():
            for i, a in enumerate(txns):
                for b in txns[i + 1 :]:
                    pairs.add((a, b))
        return frozenset(pairs)

    @cached_property
    def causal_adjacency(self) -> dict[TxnId, tuple[TxnId, ...]]:
        """Successor lists for so union wr (session successors, not the closure)."""
        adj: dict[TxnId, set[TxnId]] = {t: set() for t in self.txn_ids}
        firsts = [txns[0] for txns in self.sessions.values() if txns]
        adj[INIT_TXN].update(firsts)
        for txns in self.sessions.values():
            for a, b in zip(txns, txns[1:]):
                adj[a].add(b)
        for writer, reader in self.wr_txn_pairs:
            adj[writer].add(reader)
        return {t: tuple(sorted(s)) for t, s in adj.items()}

    @cached_property
    def causal_closure(self) -> dict[TxnId, frozenset[TxnId]]:
        """t -> every transaction strictly reachable from t via so union wr."""
        out: dict[TxnId, frozenset[TxnId]] = {}
        for start in self.txn_ids:
            seen: set[TxnId] = set()
            stack = list(self.causal_adjacency[start])
            while stack:
                node = stack.pop()
                if node not in seen:
                    seen.add(node)
                    stack.extend(self.causal_adjacency[node])
            out[start] = frozenset(seen)
        return out

    @cached_property
    def wr_txn_pairs(self) -> frozenset[tuple[TxnId, TxnId]]:
        return frozenset((writer, rid.txn) for rid, writer in self.wr)

    # -- editing ------------------------------------------------------------

    def with_begin(self, txn: TxnId) -> "History":
        if txn in self.by_id:
            raise ValueError(f"transaction {txn} already began")
        logs = tuple(sorted(self.logs + (TransactionLog(txn, (begin_event(txn),)),),
                            key=lambda log: log.id))
        return History(logs, self.wr)

    def with_event(self, event: Event, writer: TxnId | None = None) -> "History":
        """Append one event to its (existing) transaction, optionally with a wr edge."""
        log = self.txn(event.id.txn)
        if event.id.index != len(log.events):
            raise ValueError(f"event {event.id} is not the next of {log.id}")
        new_log = TransactionLog(log.id, log.events + (event,))
        logs = tuple(new_log if l.id == log.id else l for l in self.logs)
        wr = self.wr
        if writer is not None:
            if event.kind != READ:
                raise ValueError("only reads take a writer")
            wr = tuple(sorted(wr + ((event.id, writer),)))
        return History(logs, wr)

    def with_writer(self, read: EventId, writer: TxnId) -> "History":
        """Redirect (or attach) the wr edge of one read."""
        rest = tuple(p for p in self.wr if p[0] != read)
        return History(self.logs, tuple(sorted(rest + ((read, writer),))))


# ---------------------------------------------------------------------------
# Relation helpers
# ---------------------------------------------------------------------------


def lift_wr_to_txns(h: History) -> set[tuple[TxnId, TxnId]]:
    """The write-read relation lifted to transaction pairs.

    Args:
        h: any history.

    Returns:
        All pairs (writer, reader) such that some read of the reader
        observes a write of the writer.
    """
    return set(h.wr_txn_pairs)


def causal_reachable(h: History, a: TxnId, b: TxnId) -> bool:
    """Whether (a, b) is in the strict transitive closure of so union wr."""
    if a not in h.by_id:
        raise ValueError(f"unknown transaction {a}")
    if b not in h.by_id:
        raise ValueError(f"unknown transaction {b}")
    return b in h.causal_closure[a]


def causally_before_or_equal(h: History, a: TxnId, b: TxnId) -> bool:
    """(a, b) in the reflexive-transitive closure of so union wr."""
    return a == b or causal_reachable(h, a, b)


def is_prefix(p: History, h: History) -> bool:
    """Whether ``p`` is a causally-downward-closed prefix of ``h``.

    Every log of ``p`` must be a program-order prefix of the same-id log of
    ``h``; the restricted write-read relation must match; and the event set
    must be downward closed under program order, session order, and
    write-read (a read present in ``p`` forces its writer's events in too).
    """
    for log in p.logs:
        other = h.by_id.get(log.id)
        if other is None or log.events != other.events[: len(log.events)]:
            return False
    p_events = p.event_ids
    expected_wr = tuple(sorted(pair for pair in h.wr if pair[0] in p_events))
    if p.wr != expected_wr:
        return False
    # Downward closure.  Program order holds by the log-prefix check; session
    # order and write-read predecessors must be entirely present.
    complete = {
        log.id for log in p.logs if log.events == h.by_id[log.id].events
    }
    for log in p.logs:
        if log.id == INIT_TXN:
            continue
        if INIT_TXN not in complete:
            return False
        for pred in h.sessions.get(log.id.session, ()):
            if pred < log.id and pred not in complete:
                return False
    for read_id, writer in h.wr:
        if read_id in p_events and writer not in complete:
            return False
    return True


# ---------------------------------------------------------------------------
# Ordered histories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderedHistory:
    """A history plus the total order in which its events were added.

    The order contains every event exactly once and extends program order,
    session order, and write-read: whenever two transactions are related by
    (so union wr)+, all events of the first precede all events of the second.
    """

    history: History
    order: tuple[EventId, ...]

    def __post_init__(self) -> None:
        if set(self.order) != set(self.history.event_ids) or len(self.order) != len(
            self.history.event_ids
        ):
            raise ValueError("order must list exactly the history's events")
        pos = {eid: i for i, eid in enumerate(self.order)}
        for log in self.history.logs:
            for a, b in zip(log.events, log.events[1:]):
                if pos[a.id] > pos[b.id]:
                    raise ValueError(f"order violates program order in {log.id}")
        closure = self.history.causal_closure
        spans = {
            log.id: (
                min(pos[ev.id] for ev in log.events),
                max(pos[ev.id] for ev in log.events),
            )
            for log in self.history.logs
        }
        for a, (_, last_a) in spans.items():
            for b in closure[a]:
                if last_a > spans[b][0]:
                    raise ValueError(f"order violates so/wr between {a} and {b}")

    @classmethod
    def initial(cls, variables: tuple[str, ...] | list[str]) -> "OrderedHistory":
        """The starting history: only init, writing 0 to every variable."""
        events = [begin_event(INIT_TXN)]
        for i, var in enumerate(sorted(variables)):
            events.append(write_event(INIT_TXN, i + 1, var, 0))
        events.append(commit_event(INIT_TXN, len(events)))
        log = TransactionLog(INIT_TXN, tuple(events))
        hist = History((log,), ())
        return cls(hist, tuple(ev.id for ev in events))

    @cached_property
    def position(self) -> dict[EventId, int]:
        return {eid: i for i, eid in enumerate(self.order)}

    @cached_property
    def txn_spans(self) -> dict[TxnId, tuple[int, int]]:
        """Transaction -> (first, last) positions of its events in the order."""
        first: dict[TxnId, int] = {}
        last: dict[TxnId, int] = {}
        for i, eid in enumerate(self.order):
            first.setdefault(eid.txn, i)
            last[eid.txn] = i
        return {t: (first[t], last[t]) for t in first}

    @property
    def last_event(self) -> Event:
        return self.history.event(self.order[-1])

    def txn_before_event(self, txn: TxnId, eid: EventId) -> bool:
        """All of ``txn``'s events precede ``eid`` in the order."""
        return self.txn_spans[txn][1] < self.position[eid]

    def event_before_txn(self, eid: EventId, txn: TxnId) -> bool:
        """``eid`` precedes all of ``txn``'s events in the order."""
        return self.position[eid] < self.txn_spans[txn][0]

    def txn_before_txn(self, a: TxnId, b: TxnId) -> bool:
        return self.txn_spans[a][1] < self.txn_spans[b][0]

    def append(self, event: Event, writer: TxnId | None = None) -> "OrderedHistory":
        """Extend with one event at the end of the order.

        A begin event opens a new log; any other event extends its pending
        log.  ``writer`` attaches the wr edge of an external read.
        """
        if event.kind == BEGIN:
            if writer is not None:
                raise ValueError("begin takes no writer")
            hist = self.history.with_begin(event.id.txn)
        else:
            hist = self.history.with_event(event, writer)
        return OrderedHistory(hist, self.order + (event.id,))


def drop_events(h: OrderedHistory, dropped: set[EventId]) -> OrderedHistory:
    """Remove a set of events, discarding logs emptied entirely.

    wr edges whose read was dropped disappear.  Ids absent from the history
    are ignored.  Raises if a surviving read's writer loses the write it
    observes (callers must include such reads in the drop set).
    """
    new_logs = []
    for log in h.history.logs:
        events = tuple(ev for ev in log.events if ev.id not in dropped)
        if events:
            new_logs.append(TransactionLog(log.id, events))
    survivors = {log.id: log for log in new_logs}
    new_wr = []
    for read_id, writer in h.history.wr:
        if read_id in dropped:
            continue
        wlog = survivors.get(writer)
        if wlog is None or not wlog.writes_var(h.history.event(read_id).var):  # type: ignore[arg-type]
            raise ValueError(
                f"dropping writer events of {writer} while read {read_id} survives"
            )
        new_wr.append((read_id, writer))
    hist = History(tuple(new_logs), tuple(sorted(new_wr)))
    order = tuple(eid for eid in h.order if eid not in dropped)
    return OrderedHistory(hist, order)


# ---------------------------------------------------------------------------
# Canonical encoding
# ---------------------------------------------------------------------------


def _event_obj(ev: Event) -> dict:
    obj: dict = {"index": ev.id.index, "kind": ev.kind}
    if ev.var is not None:
        obj["var"] = ev.var
    if ev.value is not None:
        obj["value"] = ev.value
    return obj


def canonical_encode(h: History) -> bytes:
    """Deterministic, order-independent encoding of a history.

    Two histories encode identically exactly when they are equal as values
    (same logs, session order, write-read relation).  The encoding doubles
    as the on-disk JSON record emitted by the command line front end.
    """
    obj = {
        "txns": [
            {
                "id": list(log.id),
                "events": [_event_obj(ev) for ev in log.events],
                "status": log.status,
            }
            for log in h.logs
        ],
        "so": {
            str(session): [list(t) for t in txns]
            for session, txns in sorted(h.sessions.items())
        },
        "wr": [
            [[rid.txn.session, rid.txn.index, rid.index], list(writer)]
            for rid, writer in h.wr
        ],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def canonical_decode(data: bytes | str) -> History:
    """Inverse of :func:`canonical_encode`."""
    obj = json.loads(data)
    logs = []
    for tobj in obj["txns"]:
        tid = TxnId(*tobj["id"])
        events = []
        for eobj in tobj["events"]:
            events.append(
                Event(
                    EventId(tid, eobj["index"]),
                    eobj["kind"],
                    var=eobj.get("var"),
                    value=eobj.get("value"),
                )
            )
        log = TransactionLog(tid, tuple(events))
        if log.status != tobj["status"]:
            raise ValueError(f"status mismatch for {tid} in encoded history")
        logs.append(log)
    wr = tuple(
        sorted(
            (EventId(TxnId(r[0], r[1]), r[2]), TxnId(*w)) for r, w in obj["wr"]
        )
    )
    return History(tuple(sorted(logs, key=lambda log: log.id)), wr)


# ---------------------------------------------------------------------------
# Live-history accounting (used by the space-behavior tests)
# ---------------------------------------------------------------------------


class HistoryMemoryTracker:
    """Counts bytes of History values currently alive.

    Each history is weighed by its canonical encoding length; the weight is
    released when the value is garbage collected.  Only histories created
    while the tracker is installed are counted.
    """

    def __init__(self) -> None:
        self.live_bytes = 0
        self.peak_bytes = 0
        self.max_history_bytes = 0
        self.registered = 0

    def _register(self, h: History) -> None:
        size = len(canonical_encode(h))
        self.registered += 1
        self.live_bytes += size
        self.peak_bytes = max(self.peak_bytes, self.live_bytes)
        self.max_history_bytes = max(self.max_history_bytes, size)
        weakref.finalize(h, self._release, size)

    def _release(self, size: int) -> None:
        self.live_bytes -= size


_ACTIVE_TRACKER: HistoryMemoryTracker | None = None

_original_post_init = History.__post_init__


def _tracking_post_init(self: History) -> None:
    _original_post_init(self)
    if _ACTIVE_TRACKER is not None:
        _ACTIVE_TRACKER._register(self)


History.__post_init__ = _tracking_post_init  # type: ignore[method-assign]


@contextmanager
def track_history_memory() -> Iterator[HistoryMemoryTracker]:
    """Install a :class:`HistoryMemoryTracker` for the duration of the block."""
    global _ACTIVE_TRACKER
    if _ACTIVE_TRACKER is not None:
        raise RuntimeError("history memory tracking is already active")
    tracker = HistoryMemoryTracker()
    _ACTIVE_TRACKER = tracker
    try:
        yield tracker
    finally:
        _ACTIVE_TRACKER = None
