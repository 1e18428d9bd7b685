"""
Frame packing, step by step
===========================

Feeds a tiny hand-written stream through the framer and narrates where
each transaction lands. Uses two active frames so the midstream
finalize is easy to trigger: when a txn conflicts with every active
frame, the largest frame is sealed and the txn starts a fresh one.
"""

from frameflow.framer import EXACT, FramerConfig, StreamFramer
from frameflow.model import Kind, RWSet, Transaction, TransferOp

ALICE, BOB, CAROL, DAVE, ERIN = range(100, 105)


def txn(i, sender, receiver):
    op = TransferOp(Kind.NATIVE, sender, receiver, 1)
    return Transaction(id=i, op=op, approx_rw=RWSet.of(reads=[], writes=[sender, receiver]))


# Exact admissibility keeps the narration deterministic and collision-free.
framer = StreamFramer(FramerConfig(n_frames=2, admissibility=EXACT))

stream = [
    txn(0, ALICE, BOB),    # empty pool: lands in slot 0
    txn(1, ALICE, CAROL),  # writes ALICE: conflicts with slot 0, opens slot 1
    txn(2, BOB, CAROL),    # conflicts with both slots: seals one, starts over
    txn(3, DAVE, ERIN),    # disjoint again: joins txn 2's fresh frame
]

for t in stream:
    emitted = framer.feed(t)
    for fr in emitted:
        ids = [x.id for x in fr.txns]
        print(f"  >> frame {fr.frame_seq} sealed from slot {fr.slot}: txns {ids}")
    print(f"txn {t.id} (writes {sorted(t.approx_rw.writes)}) placed")

print("flushing remaining frames:")
for fr in framer.flush():
    ids = [x.id for x in fr.txns]
    print(f"  >> frame {fr.frame_seq} sealed from slot {fr.slot}: txns {ids}")

m = framer.snapshot_metrics()
print(f"{m.frame_count} frames, mean size {m.mean_frame_size:.2f}, "
      f"{m.midstream_finalizes} midstream finalize(s)")
