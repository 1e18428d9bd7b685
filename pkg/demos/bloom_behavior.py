"""
Bloom filter error behavior
===========================

The conflict filters err in exactly one direction: a key that was
inserted is always found (no false negatives), while a key that was
never inserted is sometimes reported present. This script measures the
false-positive rate as the filter fills and compares it with the
analytic rate (1 - e^(-kn/m))^k.

Writes bloom_fp.png to demos/out/ when matplotlib is importable.
"""

import os

import numpy as np

from frameflow.bloom import BloomFilter, expected_fp_rate

M_BITS = 2048
K = 4
TRIALS = 40_000

rng = np.random.default_rng(2024)
fills = [25, 50, 100, 150, 200, 300, 400, 600, 800]
measured = []
analytic = []

print(f"{'keys':>5}  {'measured fp':>11}  {'analytic fp':>11}  {'bits set':>8}")
for n in fills:
    f = BloomFilter(M_BITS, K)
    inserted = set()
    while len(inserted) < n:
        inserted.add(int(rng.integers(0, 1 << 63)))
    for k in inserted:
        f.insert(k)

    # every inserted key must still be visible
    assert all(f.maybe_contains(k) for k in inserted)

    hits = 0
    probes = 0
    while probes < TRIALS:
        k = int(rng.integers(0, 1 << 63))
        if k in inserted:
            continue
        probes += 1
        if f.maybe_contains(k):
            hits += 1
    measured.append(hits / probes)
    analytic.append(expected_fp_rate(n, M_BITS, K))
    print(f"{n:>5}  {measured[-1]:>11.5f}  {analytic[-1]:>11.5f}  {f.bit_count:>8}")

# Around 300-500 keys the filter is mostly ones and almost every probe
# collides; this is what caps frame sizes in the packer.
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not available; skipping plot")
else:
    os.makedirs(os.path.join(os.path.dirname(__file__), "out"), exist_ok=True)
    out = os.path.join(os.path.dirname(__file__), "out", "bloom_fp.png")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(fills, measured, "o-", label="measured")
    ax.plot(fills, analytic, "--", label="analytic")
    ax.set_xlabel("keys inserted")
    ax.set_ylabel("false positive rate")
    ax.set_title(f"{M_BITS}-bit filter, k={K}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")
