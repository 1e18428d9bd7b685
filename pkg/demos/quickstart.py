"""
End-to-end quickstart
=====================

Generate a skewed transfer workload, push it through the full pipeline
(analyze -> frame -> schedule -> execute -> commit), then re-check the
result with the independent verifier.
"""

from frameflow import RunConfig, WorkloadSpec, run_pipeline, verify_result
from frameflow.workload import Kind

# A small workload: 5000 native transfers over 65536 accounts, with half
# the senders drawn from a 1000-account hot range.
spec = WorkloadSpec(
    kind=Kind.NATIVE,
    total_accounts=1 << 16,
    gamma=1000,
    alpha=0.5,
    txn_count=5_000,
    seed=7,
)

# Four workers, one block every 2500 txns.
cfg = RunConfig(spec=spec, workers=4, block_interval=2_500)
result = run_pipeline(cfg)

m = result.metrics
print(f"executed {m['counts']['executed']} txns, kept {m['counts']['kept']}")
print(f"frames: {m['frame_count']} (mean size {m['mean_frame_size']:.1f})")
print(f"measured TLP: {m['measured_tlp']:.1f}  (critical path {m['critical_path']})")
print(f"throughput: {m['tps']:.0f} tps end to end")
print(f"genesis root: {result.genesis_root[:16]}...")
for b in result.blocks:
    print(f"  block {b.height}: {len(b.txns)} txns, root {b.state_root[:16]}...")

# The verifier replays the kept sequence serially against its own store
# and recomputes every block root from scratch.
print()
print(verify_result(result).to_text())
