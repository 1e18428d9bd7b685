"""
Contention sweep
================

Runs the same workload shape at increasing hot-set pressure (alpha is
the probability a sender comes from the 1000-account hot range) and
tabulates how parallelism and throughput respond.

Writes contention.png to demos/out/ when matplotlib is importable.
"""

import os

from frameflow import RunConfig, WorkloadSpec, run_pipeline
from frameflow.workload import Kind

ALPHAS = [0.0, 0.25, 0.5, 0.75, 0.9, 0.99]
rows = []

print(f"{'alpha':>5}  {'tlp':>8}  {'frames':>6}  {'mean':>8}  {'tps':>8}")
for alpha in ALPHAS:
    spec = WorkloadSpec(
        kind=Kind.NATIVE,
        total_accounts=1 << 16,
        gamma=1000,
        alpha=alpha,
        txn_count=5_000,
        seed=11,
    )
    res = run_pipeline(RunConfig(spec=spec, workers=1, block_interval=5_000,
                                 fp_baseline=False))
    m = res.metrics
    rows.append((alpha, m["measured_tlp"], m["frame_count"],
                 m["mean_frame_size"], m["tps"]))
    print(f"{alpha:>5}  {m['measured_tlp']:>8.1f}  {m['frame_count']:>6}  "
          f"{m['mean_frame_size']:>8.1f}  {m['tps']:>8.0f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not available; skipping plot")
else:
    os.makedirs(os.path.join(os.path.dirname(__file__), "out"), exist_ok=True)
    out = os.path.join(os.path.dirname(__file__), "out", "contention.png")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-")
    ax.set_xlabel("alpha (hot-sender probability)")
    ax.set_ylabel("measured TLP")
    ax.set_yscale("log")
    ax.set_title("parallelism under contention")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")
