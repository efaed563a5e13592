"""Small example programs exercising characteristic behaviors.

These double as the fixed part of the verification corpus: each one pins a
behavior the enumerator must handle — data-dependent control flow, an abort
that flips to a commit when a read changes, competing writers for the same
read, causally independent sessions, and reads split across transactions.
"""

from __future__ import annotations

# A conditional write guarded by a read: whether the second transaction of
# the left session sees the guarded write depends on scheduling.
GUARDED_WRITE = """\
session left {
  txn { a = read(x); if (a == 3) { write(y, 1); } }
  txn { b = read(x); c = read(y); }
}
session right {
  txn { d = read(x); write(x, 3); }
}
"""

# Reading a later value makes the guard fail, turning an abort into a commit.
ABORT_FLIP = """\
session reader {
  txn { a = read(x); if (a == 0) { abort; } write(y, 1); }
  txn { b = read(x); }
}
session writer {
  txn { write(y, 3); }
  txn { write(x, 4); }
}
"""

# Two reads racing two writers of the same variable: every pairing of reads
# to writers is a distinct history.
RACING_READS = """\
session w1 { txn { write(x, 2); } }
session r1 { txn { a = read(x); } }
session r2 { txn { b = read(x); } }
session w2 { txn { write(x, 4); } }
"""

# Two reads and two writers on unrelated variables: the sessions never
# interact pairwise, yet their orderings multiply.
INDEPENDENT_PAIRS = """\
session r1 { txn { a = read(x); } }
session r2 { txn { b = read(y); } }
session w1 { txn { write(y, 3); } }
session w2 { txn { write(x, 4); } }
"""

# Each session reads what the other writes and writes what the other reads,
# with a common variable in the middle: consistent under causal consistency
# in shapes that stronger levels reject.
CROSS_WRITES = """\
session s1 {
  txn { a = read(x); write(z, 1); write(y, 1); }
}
session s2 {
  txn { b = read(y); write(z, 2); write(x, 2); }
}
"""

# One session writes two variables in one transaction; the other reads them
# in separate transactions, so the reads may straddle the write.
SPLIT_READS = """\
session writer {
  txn { write(x, 1); write(y, 1); }
}
session reader {
  txn { a = read(y); }
  txn { b = read(x); }
}
"""

# One transaction reads a pair another transaction writes atomically;
# observing half of the pair is the classic torn read.
PAIR_READER = """\
session reader {
  txn { a = read(x); b = read(y); }
}
session writer {
  txn { write(x, 2); write(y, 2); }
}
"""

# Reads x then y; seeing the newer y after the older x violates the assert
# under read committed but not under read atomic and stronger.
FRACTURED_READ = """\
session writer {
  txn { write(x, 1); write(y, 1); }
}
session reader {
  txn { b = read(x); a = read(y); assert(a <= b); }
}
"""

EXAMPLE_PROGRAMS: dict[str, str] = {
    "guarded_write": GUARDED_WRITE,
    "abort_flip": ABORT_FLIP,
    "racing_reads": RACING_READS,
    "independent_pairs": INDEPENDENT_PAIRS,
    "cross_writes": CROSS_WRITES,
    "split_reads": SPLIT_READS,
    "pair_reader": PAIR_READER,
    "fractured_read": FRACTURED_READ,
}
