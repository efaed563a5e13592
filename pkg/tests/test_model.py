"""Histories, transaction logs, ordering and the canonical encoding."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import (
    CYCLE_T2,
    CYCLE_T3,
    CYCLE_WR_LIFT,
    TRIO_WRITER,
    causal_cycle_history,
    containment_trio,
    init_log,
)
from txndpor.generate import random_history, random_prefix
from txndpor.model import (
    ABORTED,
    COMMITTED,
    INIT_TXN,
    PENDING,
    EventId,
    History,
    TransactionLog,
    TxnId,
    abort_event,
    begin_event,
    canonical_decode,
    canonical_encode,
    causal_reachable,
    commit_event,
    drop_events,
    is_prefix,
    lift_wr_to_txns,
    read_event,
    track_history_memory,
    write_event,
)
from txndpor.oracles import canonical_sort

T0 = TxnId(0, 0)
T1 = TxnId(1, 0)


def histories(seed: int) -> History:
    return random_history(random.Random(seed))


# ---------------------------------------------------------------------------
# Transaction logs
# ---------------------------------------------------------------------------


def test_log_requires_leading_begin():
    with pytest.raises(ValueError):
        TransactionLog(T0, (write_event(T0, 0, "x", 1),))


def test_log_rejects_events_after_commit():
    with pytest.raises(ValueError):
        TransactionLog(
            T0, (begin_event(T0), commit_event(T0, 1), write_event(T0, 2, "x", 1))
        )


def test_log_rejects_misnumbered_events():
    with pytest.raises(ValueError):
        TransactionLog(T0, (begin_event(T0), write_event(T0, 5, "x", 1)))


def test_log_status_tracks_last_event():
    base = (begin_event(T0), write_event(T0, 1, "x", 1))
    assert TransactionLog(T0, base).status == PENDING
    assert TransactionLog(T0, base + (commit_event(T0, 2),)).status == COMMITTED
    assert TransactionLog(T0, base + (abort_event(T0, 2),)).status == ABORTED


def test_read_set_excludes_reads_after_own_write():
    """A read preceded by the transaction's own write of the same variable
    is satisfied internally and never takes a write-read edge."""
    log = TransactionLog(
        T0,
        (
            begin_event(T0),
            read_event(T0, 1, "x"),
            write_event(T0, 2, "x", 5),
            read_event(T0, 3, "x"),
            read_event(T0, 4, "y"),
            commit_event(T0, 5),
        ),
    )
    assert [e.id.index for e in log.read_set] == [1, 4]


def test_write_set_is_last_write_per_variable_and_empty_when_aborted():
    events = (
        begin_event(T0),
        write_event(T0, 1, "x", 1),
        write_event(T0, 2, "x", 2),
        write_event(T0, 3, "y", 3),
    )
    committed = TransactionLog(T0, events + (commit_event(T0, 4),))
    assert {v: e.value for v, e in committed.write_set.items()} == {"x": 2, "y": 3}
    aborted = TransactionLog(T0, events + (abort_event(T0, 4),))
    assert aborted.write_set == {}
    assert not aborted.writes_var("x")


# ---------------------------------------------------------------------------
# History construction invariants
# ---------------------------------------------------------------------------


def _reader(wr_target: TxnId | None = None) -> TransactionLog:
    return TransactionLog(
        T0, (begin_event(T0), read_event(T0, 1, "x"), commit_event(T0, 2))
    )


def test_history_requires_init():
    with pytest.raises(ValueError, match="init"):
        History(logs=(_reader(),), wr=())


def test_history_requires_sorted_unique_logs():
    ini = init_log("x")
    other = TransactionLog(T1, (begin_event(T1), commit_event(T1, 1)))
    with pytest.raises(ValueError):
        History(logs=(other, ini), wr=())
    with pytest.raises(ValueError):
        History(logs=(ini, ini), wr=())


def test_history_rejects_wr_to_nonwriter_and_to_aborted():
    ini = init_log("x")
    nonwriter = TransactionLog(T1, (begin_event(T1), commit_event(T1, 1)))
    with pytest.raises(ValueError, match="does not write"):
        History(logs=(ini, _reader(), nonwriter), wr=((EventId(T0, 1), T1),))
    aborted_writer = TransactionLog(
        T1, (begin_event(T1), write_event(T1, 1, "x", 9), abort_event(T1, 2))
    )
    with pytest.raises(ValueError, match="aborted"):
        History(logs=(ini, _reader(), aborted_writer), wr=((EventId(T0, 1), T1),))


def test_history_rejects_self_read_and_internal_read_edges():
    ini = init_log("x")
    selfish = TransactionLog(
        T0,
        (
            begin_event(T0),
            write_event(T0, 1, "x", 1),
            read_event(T0, 2, "x"),
            commit_event(T0, 3),
        ),
    )
    with pytest.raises(ValueError):
        History(logs=(ini, selfish), wr=((EventId(T0, 2), T0),))
    with pytest.raises(ValueError, match="internal"):
        History(logs=(ini, selfish), wr=((EventId(T0, 2), INIT_TXN),))


def test_history_rejects_causal_cycles():
    """Cross reads between two committed writers would make each observe the
    other, which no interleaved execution can produce."""
    ini = init_log("x", "y")
    a = TransactionLog(
        T0,
        (
            begin_event(T0),
            read_event(T0, 1, "y"),
            write_event(T0, 2, "x", 1),
            commit_event(T0, 3),
        ),
    )
    b = TransactionLog(
        T1,
        (
            begin_event(T1),
            read_event(T1, 1, "x"),
            write_event(T1, 2, "y", 1),
            commit_event(T1, 3),
        ),
    )
    with pytest.raises(ValueError, match="cyclic"):
        History(
            logs=(ini, a, b),
            wr=tuple(sorted([(EventId(T0, 1), T1), (EventId(T1, 1), T0)])),
        )


def test_init_precedes_all_sessions_in_session_order():
    h = causal_cycle_history()
    so = set(h.so_pairs)
    for t in h.txn_ids:
        if t != INIT_TXN:
            assert (INIT_TXN, t) in so
    assert (TxnId(0, 0), TxnId(0, 1)) in so
    assert (TxnId(0, 0), TxnId(1, 1)) not in so


# ---------------------------------------------------------------------------
# Relations over the cycle fixture
# ---------------------------------------------------------------------------


def test_wr_lifts_to_expected_transaction_pairs():
    assert lift_wr_to_txns(causal_cycle_history()) == CYCLE_WR_LIFT


def test_wr_lift_of_init_only_history_is_empty():
    assert lift_wr_to_txns(History(logs=(init_log("x"),), wr=())) == set()


def test_causal_reachability_through_intermediate_transaction():
    h = causal_cycle_history()
    assert causal_reachable(h, CYCLE_T2, CYCLE_T3)
    assert not causal_reachable(h, CYCLE_T3, CYCLE_T2)
    assert not causal_reachable(h, CYCLE_T2, CYCLE_T2)


@settings(max_examples=100, derandomize=True)
@given(st.integers(0, 10_000))
def test_causal_reachability_matches_closure_matrix(seed):
    """Reachability agrees with an independently computed transitive closure."""
    h = histories(seed)
    ids = list(h.txn_ids)
    edge = {(a, b) for (a, b) in h.so_pairs} | set(h.wr_txn_pairs)
    reach = {pair: pair in edge for pair in [(a, b) for a in ids for b in ids]}
    for k in ids:
        for a in ids:
            for b in ids:
                if reach[(a, k)] and reach[(k, b)]:
                    reach[(a, b)] = True
    for a in ids:
        for b in ids:
            assert causal_reachable(h, a, b) == reach[(a, b)]


# ---------------------------------------------------------------------------
# Sub-history containment
# ---------------------------------------------------------------------------


def test_containment_accepts_leaf_removal_and_itself():
    full, within, _ = containment_trio()
    assert is_prefix(within, full)
    assert is_prefix(full, full)


def test_containment_rejects_removing_an_observed_writer():
    full, _, broken = containment_trio()
    assert not is_prefix(broken, full)


def test_containment_accepts_truncated_transaction_log():
    full, _, _ = containment_trio()
    truncated_writer = TransactionLog(
        TRIO_WRITER, (begin_event(TRIO_WRITER),)
    )
    ini = init_log("x", "y")
    p = History(logs=(ini, truncated_writer), wr=())
    assert is_prefix(p, full)


def test_containment_requires_downward_closed_truncation():
    """Keeping a log's later event while dropping an earlier one is not a
    program-order prefix."""
    full, _, _ = containment_trio()
    with pytest.raises(ValueError):
        TransactionLog(TRIO_WRITER, (begin_event(TRIO_WRITER), commit_event(TRIO_WRITER, 2)))


@settings(max_examples=100, derandomize=True)
@given(st.integers(0, 10_000))
def test_random_downward_closed_subsets_are_contained(seed):
    rng = random.Random(seed)
    h = random_history(rng)
    p = random_prefix(rng, h)
    assert is_prefix(p, h)


# ---------------------------------------------------------------------------
# Ordered histories
# ---------------------------------------------------------------------------


def test_canonical_sort_lists_every_event_once_in_causal_order():
    h = causal_cycle_history()
    oh = canonical_sort(h)
    assert sorted(oh.order) == sorted(h.event_ids)
    pos = oh.position
    for a, b in set(h.so_pairs) | set(h.wr_txn_pairs):
        assert pos[EventId(a, 0)] < pos[EventId(b, 0)]
    for eid in oh.order:
        if eid.index > 0:
            assert pos[EventId(eid.txn, eid.index - 1)] < pos[eid]


def test_drop_events_with_empty_set_is_identity():
    oh = canonical_sort(containment_trio()[0])
    out = drop_events(oh, set())
    assert out.history == oh.history and out.order == oh.order


def test_drop_events_removes_whole_logs_and_their_edges():
    full, within, _ = containment_trio()
    oh = canonical_sort(full)
    victim = TxnId(2, 0)
    dropped = drop_events(oh, {e.id for e in full.txn(victim).events})
    assert dropped.history == within
    assert all(e.txn != victim for e in dropped.order)


def test_drop_events_rejects_orphaning_a_surviving_read():
    full, _, _ = containment_trio()
    oh = canonical_sort(full)
    with pytest.raises(ValueError):
        drop_events(oh, {e.id for e in full.txn(TRIO_WRITER).events})


# ---------------------------------------------------------------------------
# Canonical encoding
# ---------------------------------------------------------------------------


def test_encoding_is_json_with_stable_top_level_shape():
    doc = json.loads(canonical_encode(causal_cycle_history()))
    assert sorted(doc) == ["so", "txns", "wr"]
    assert [t["id"] for t in doc["txns"]] == [[-1, 0], [0, 0], [0, 1], [1, 0], [1, 1]]


def test_encoding_distinguishes_single_edge_changes():
    full, _, _ = containment_trio()
    rewired = History(
        logs=full.logs,
        wr=tuple(
            sorted(
                [
                    (EventId(TxnId(0, 0), 1), TRIO_WRITER),
                    (EventId(TxnId(0, 0), 2), INIT_TXN),
                    (EventId(TxnId(2, 0), 1), INIT_TXN),
                ]
            )
        ),
    )
    assert canonical_encode(full) != canonical_encode(rewired)


@settings(max_examples=100, derandomize=True)
@given(st.integers(0, 10_000))
def test_encoding_round_trips(seed):
    h = histories(seed)
    assert canonical_decode(canonical_encode(h)) == h


@settings(max_examples=100, derandomize=True)
@given(st.integers(0, 10_000))
def test_encoding_collides_only_on_equal_histories(seed):
    rng = random.Random(seed)
    a, b = random_history(rng), random_history(rng)
    assert (canonical_encode(a) == canonical_encode(b)) == (a == b)


# ---------------------------------------------------------------------------
# Allocation tracking
# ---------------------------------------------------------------------------


def test_memory_tracker_counts_live_and_peak_bytes():
    with track_history_memory() as tracker:
        h = causal_cycle_history()
        first = tracker.live_bytes
        assert first > 0
        causal_cycle_history()
        assert tracker.peak_bytes >= first
        assert tracker.max_history_bytes > 0
        assert tracker.registered == 2
    del h
