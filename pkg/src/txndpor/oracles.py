"""Independent checkers for the enumerator's uniqueness argument.

The enumerator's duplicate-freedom rests on three facts that these helpers
state directly so tests can verify them against real runs:

* every reachable ordered history keeps its transactions in a *canonical
  order* computable from the plain history alone (:func:`canonical_order`),
* every reachable ordered history is *order-respectful*: any inversion of
  the scheduling priority is justified by a swapped read below it
  (:func:`is_or_respectful`),
* every reachable state has a unique predecessor (:func:`prev`): drop the
  last event, unless it is a swapped read, in which case deterministically
  rebuild the completion the swap tore down.

These are written against the definitions, not the enumerator's code, so a
traversal bug shows up as a disagreement here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cmp_to_key
from typing import Iterator

from .isolation import check_consistency
from .model import (
    ABORTED,
    BEGIN,
    INIT_TXN,
    READ,
    EventId,
    History,
    IsolationLevel,
    OrderedHistory,
    TxnId,
    begin_event,
    causal_reachable,
    causally_before_or_equal,
    drop_events,
)
from .program import ExplorationState, Program, apply_event, replay, step_local
from .explorer import swapped

# ---------------------------------------------------------------------------
# Canonical transaction order
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DepTrace:
    """The separating steps taken while comparing two transactions.

    Each step records the pivot event the comparison descended through and
    the two minimal dependencies found under it; the last step is the one
    that differed.
    """

    steps: tuple[tuple[EventId | None, EventId, EventId], ...]


def _dependencies(h: History, t: TxnId, e: EventId | None) -> list[EventId]:
    """Events anchoring ``t``'s position relative to pivot ``e``.

    All of ``t``'s own events, plus every read observing a transaction
    causally at-or-after ``t`` whose reader is causally strictly before the
    pivot's transaction (any reader, when the pivot is the virtual
    end-of-time sentinel None).
    """
    out = [ev.id for ev in h.txn(t).events]
    for read_id, writer in h.wr:
        if not causally_before_or_equal(h, t, writer):
            continue
        if e is None or causal_reachable(h, read_id.txn, e.txn):
            out.append(read_id)
    return out


def minimal_dependency(
    h: History, t: TxnId, t2: TxnId, e: EventId | None = None
) -> tuple[bool, DepTrace]:
    """Compare two causally unrelated transactions by minimal dependencies.

    Repeatedly takes the smallest dependency of each side under the current
    pivot; the first disagreement decides.  Raises if the descent fails to
    separate the transactions within the history's event count (it cannot,
    for distinct transactions of a real history).
    """
    steps: list[tuple[EventId | None, EventId, EventId]] = []
    for _ in range(len(h.event_ids) + 1):
        a = min(_dependencies(h, t, e))
        a2 = min(_dependencies(h, t2, e))
        steps.append((e, a, a2))
        if a != a2:
            return a < a2, DepTrace(tuple(steps))
        e = a
    raise ValueError(f"minimal dependencies of {t} and {t2} never separated")


def canonical_order(h: History, t: TxnId, t2: TxnId) -> bool:
    """Whether ``t`` comes no later than ``t2`` in the canonical order.

    Causal predecessors come first; causally unrelated transactions are
    ordered by :func:`minimal_dependency`.  Reflexive.
    """
    if causally_before_or_equal(h, t, t2):
        return True
    if causally_before_or_equal(h, t2, t):
        return False
    return minimal_dependency(h, t, t2)[0]


def canonical_sort(h: History) -> OrderedHistory:
    """Arrange a history's events in canonical order, one transaction at a time."""

    def compare(a: TxnId, b: TxnId) -> int:
        if a == b:
            return 0
        return -1 if canonical_order(h, a, b) else 1

    txns = sorted(h.txn_ids, key=cmp_to_key(compare))
    order = tuple(ev.id for t in txns for ev in h.txn(t).events)
    return OrderedHistory(h, order)


# ---------------------------------------------------------------------------
# Order-respect
# ---------------------------------------------------------------------------


def is_or_respectful(
    h: OrderedHistory, static_txns: tuple[TxnId, ...] | None = None
) -> bool:
    """Whether every priority inversion in ``h`` is justified by a swap.

    For any event placed after a lower-priority event (or missing while a
    lower-priority transaction has placed events — pending transactions and,
    when ``static_txns`` lists the program's transactions, not-yet-started
    ones contribute their missing events), there must be a swapped read that
    justifies the displacement: one whose transaction is at or below the
    displaced event's priority and is causally reachable from the overtaking
    event's transaction.  At most one transaction may be pending.
    """
    hist = h.history
    if len(hist.pending_txns()) > 1:
        return False
    swapped_txns = {
        eid.txn
        for eid in h.order
        if hist.event(eid).kind == READ
        and eid in hist.wr_map
        and swapped(h, eid)
    }

    def witness(later_txn: TxnId, priority_bound: TxnId) -> bool:
        return any(
            w <= priority_bound and causally_before_or_equal(hist, later_txn, w)
            for w in swapped_txns
        )

    for e in h.order:
        for e2 in h.order:
            if e <= e2 and h.position[e] > h.position[e2]:
                if not witness(e2.txn, e.txn):
                    return False
    incomplete = [t for t in hist.pending_txns()]
    if static_txns is not None:
        incomplete.extend(
            t for t in static_txns if t != INIT_TXN and t not in hist.by_id
        )
    for u in incomplete:
        for e2 in h.order:
            if u < e2.txn and not witness(e2.txn, u):
                return False
    return True


# ---------------------------------------------------------------------------
# Unique predecessor
# ---------------------------------------------------------------------------


def max_completion(
    program: Program, base: OrderedHistory, bound: TxnId, level: IsolationLevel
) -> ExplorationState:
    """Deterministically finish every transaction below ``bound``.

    Repeatedly appends the smallest next event among sessions whose current
    activity belongs to a transaction of lower priority than ``bound``;
    external reads observe the highest-priority causally preceding writer
    that keeps the history consistent.  This reconstructs exactly the
    completion a swap deleted.
    """
    st = replay(program, base)
    for _ in range(10_000):
        candidates = []
        for session in range(len(program.sessions)):
            ls = st.sessions[session]
            if ls.in_txn:
                u = TxnId(session, ls.txn_index)
                if u < bound:
                    candidates.append(step_local(st, session).event)
            else:
                tid = st.next_unstarted_txn(session)
                if tid is not None and tid < bound:
                    candidates.append(begin_event(tid))
        if not candidates:
            return st
        event = min(candidates, key=lambda ev: ev.id)
        if event.kind == BEGIN:
            st = apply_event(st, event)
            continue
        action = step_local(st, event.id.txn.session)
        if action.is_external_read:
            st = apply_event(st, event, writer=_latest_writer(st, event, level))
        else:
            st = apply_event(st, event)
    raise RuntimeError("completion did not terminate")


def _latest_writer(
    st: ExplorationState, event, level: IsolationLevel
) -> TxnId:
    hist = st.history.history
    reader = event.id.txn
    candidates = []
    for t in hist.txn_ids:
        if t == reader:
            continue
        log = hist.txn(t)
        if log.status == ABORTED or not log.writes_var(event.var):
            continue
        if not causal_reachable(hist, t, reader):
            continue
        if check_consistency(hist.with_event(event, writer=t), level):
            candidates.append(t)
    if not candidates:
        raise ValueError(f"no causal writer available for {event.id}")
    return max(candidates)


def prev(program: Program, h: OrderedHistory, level: IsolationLevel) -> History:
    """The unique exploration predecessor of an ordered history.

    The starting history is its own predecessor.  Otherwise, when the last
    event is not a swapped read, the predecessor simply lacks that event;
    when it is one, the predecessor is the swap's source, recovered by
    dropping the read and deterministically re-completing every transaction
    below its writer's priority.
    """
    if all(eid.txn == INIT_TXN for eid in h.order):
        return h.history
    last = h.order[-1]
    if swapped(h, last):
        writer = h.history.wr_map[last]
        base = drop_events(h, {last})
        return max_completion(program, base, writer, level).history.history
    return drop_events(h, {last}).history


def iterate_prev(
    program: Program,
    h: History | OrderedHistory,
    level: IsolationLevel,
    limit: int = 10_000,
) -> Iterator[History]:
    """Walk predecessors back toward the starting history (inclusive stop)."""
    cur = h if isinstance(h, OrderedHistory) else canonical_sort(h)
    for _ in range(limit):
        hist = prev(program, cur, level)
        yield hist
        if all(log.id == INIT_TXN for log in hist.logs):
            return
        cur = canonical_sort(hist)
    raise RuntimeError("predecessor chain did not reach the starting history")
