"""Command line harness: generate workloads, run the pipeline, ablate the
executor, verify artifacts, and sweep parameter grids to CSV.

Set AOF_LOG=debug|info|warning to control log verbosity (default warning).
Exit codes: 0 success, 1 run or verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys

from frameflow.model import Kind
from frameflow.pipeline import RunConfig, StageError, run_pipeline
from frameflow.verify import verify_dir, verify_result
from frameflow.workload import WorkloadSpec, write_workload

log = logging.getLogger("frameflow")


def _setup_logging() -> None:
    level = os.environ.get("AOF_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _add_workload_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("workload")
    g.add_argument("--kind", choices=["native", "erc20"], default="native")
    g.add_argument("--accounts", type=int, default=1 << 20,
                   help="total account universe size (default 2^20)")
    g.add_argument("--alpha", type=float, default=0.0,
                   help="probability a sender is drawn from the hot set")
    g.add_argument("--gamma", type=int, default=1000,
                   help="hot set size (accounts [0, gamma))")
    g.add_argument("--txns", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--batch-size", type=int, default=1 << 14)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", metavar="FILE",
                   help="read txns from a workload file instead of generating")
    _add_workload_args(p)
    g = p.add_argument_group("pipeline")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--analyze-workers", type=int, default=None)
    g.add_argument("--block-interval", type=int, default=10_000)
    g.add_argument("--divergence-mode", choices=["strict", "subset"],
                   default="strict")
    g.add_argument("--frames", type=int, default=64)
    g.add_argument("--bloom-bits", type=int, default=2048)
    g.add_argument("--bloom-hashes", type=int, default=4)
    g.add_argument("--max-frame-txns", type=int, default=None)
    g.add_argument("--max-frame-age", type=int, default=None)
    g.add_argument("--max-retries", type=int, default=3)
    g.add_argument("--inject-divergence", type=float, default=0.0,
                   metavar="RATE",
                   help="flag this fraction of txns to read one key their "
                        "annotation omits")
    g.add_argument("--inject-always", action="store_true",
                   help="keep injecting on retries instead of first attempt only")
    g.add_argument("--executor", choices=["auto", "inline", "pool"],
                   default="auto")
    g.add_argument("--no-fp-baseline", action="store_true",
                   help="skip the exact-admissibility reframing baseline")
    g.add_argument("--out", metavar="DIR",
                   help="write metrics.json, blocks.json, trace.bin here")


def _spec_from_args(args) -> WorkloadSpec:
    return WorkloadSpec(
        kind=Kind[args.kind.upper()],
        total_accounts=args.accounts,
        gamma=args.gamma,
        alpha=args.alpha,
        txn_count=args.txns,
        seed=args.seed,
        batch_size=args.batch_size,
    )


def _config_from_args(args, echo: bool) -> RunConfig:
    return RunConfig(
        spec=None if args.workload else _spec_from_args(args),
        workload_path=args.workload,
        workers=args.workers,
        analyze_workers=args.analyze_workers,
        n_frames=args.frames,
        bloom_bits=args.bloom_bits,
        bloom_hashes=args.bloom_hashes,
        max_frame_txns=args.max_frame_txns,
        max_frame_age=args.max_frame_age,
        divergence_mode=args.divergence_mode,
        block_interval=args.block_interval,
        inject_divergence=args.inject_divergence,
        inject_always=args.inject_always,
        max_retries=args.max_retries,
        fp_baseline=not args.no_fp_baseline,
        echo_exec=echo,
        executor=args.executor,
        out_dir=args.out,
    )


def _print_summary(metrics: dict) -> None:
    c = metrics["counts"]
    fp = metrics["fp_baseline"]
    print(f"txns      {c['input']} in, {c['kept']} kept, {c['dropped']} dropped, "
          f"{c['discarded']} discarded, {c['failed']} failed")
    print(f"frames    {metrics['frame_count']} "
          f"(mean size {metrics['mean_frame_size']:.2f})")
    print(f"tlp       measured {metrics['measured_tlp']:.2f}, "
          f"critical path {metrics['critical_path']}")
    if fp is not None:
        print(f"fp cost   exact mean {fp['exact_mean_frame_size']:.2f} vs bloom "
              f"{fp['bloom_mean_frame_size']:.2f} "
              f"({fp['fp_tlp_loss_pct']:+.2f}% loss)")
    print(f"tps       {metrics['tps']:.0f} kept/s "
          f"(wall {metrics['stage_wall_s']['total_s']:.2f}s)")
    stages = metrics["stage_wall_s"]
    print(f"stages    analyze {stages['analyze_s']:.2f}s, "
          f"frame {stages['frame_s']:.2f}s, execute {stages['execute_s']:.2f}s, "
          f"commit {stages['commit_s']:.2f}s")
    roots = metrics["block_roots"]
    if roots and roots[-1]:
        print(f"blocks    {len(roots)}, final root {roots[-1]}")
    else:
        print(f"blocks    {len(roots)} (ablation: no commitment)")


def cmd_generate(args) -> int:
    spec = _spec_from_args(args)
    try:
        spec.validate()
        write_workload(args.out, spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    size = os.path.getsize(args.out)
    print(f"wrote {spec.txn_count} {args.kind} txns ({size} bytes) to {args.out}")
    return 0


def _cmd_run(args, echo: bool) -> int:
    cfg = _config_from_args(args, echo)
    try:
        result = run_pipeline(cfg)
    except (StageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _print_summary(result.metrics)
    if getattr(args, "verify", False):
        report = verify_result(result)
        print(report.to_text(), end="")
        if args.out:
            with open(os.path.join(args.out, "verify_report.txt"), "w") as fh:
                fh.write(report.to_text())
        if not report.ok:
            return 1
    return 0


def cmd_verify(args) -> int:
    try:
        report = verify_dir(args.dir)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot verify {args.dir}: {exc}", file=sys.stderr)
        return 1
    print(report.to_text(), end="")
    with open(os.path.join(args.dir, "verify_report.txt"), "w") as fh:
        fh.write(report.to_text())
    return 0 if report.ok else 1


def _csv_list(kind):
    def parse(text: str):
        return [kind(part) for part in text.split(",") if part != ""]

    return parse


def cmd_sweep(args) -> int:
    cells = list(itertools.product(args.alphas, args.gammas, args.worker_counts))
    failures = 0
    rows = []
    for alpha, gamma, workers in cells:
        spec = WorkloadSpec(
            kind=Kind[args.kind.upper()],
            total_accounts=args.accounts,
            gamma=gamma,
            alpha=alpha,
            txn_count=args.txns,
            seed=args.seed,
            batch_size=args.batch_size,
        )
        cfg = RunConfig(
            spec=spec,
            workers=workers,
            block_interval=args.block_interval,
            fp_baseline=False,
            executor=args.executor,
        )
        row = {"alpha": alpha, "gamma": gamma, "workers": workers,
               "tps": "", "tlp": "", "frames": "", "mean_frame_size": "",
               "kept": "", "dropped": "", "wall_s": "", "error": ""}
        try:
            m = run_pipeline(cfg).metrics
            row.update(
                tps=f"{m['tps']:.1f}",
                tlp=f"{m['measured_tlp']:.3f}",
                frames=m["frame_count"],
                mean_frame_size=f"{m['mean_frame_size']:.2f}",
                kept=m["counts"]["kept"],
                dropped=m["counts"]["dropped"],
                wall_s=f"{m['stage_wall_s']['total_s']:.3f}",
            )
            log.info("sweep cell alpha=%s gamma=%s workers=%s tps=%s",
                     alpha, gamma, workers, row["tps"])
        except Exception as exc:
            failures += 1
            row["error"] = str(exc)
            log.warning("sweep cell alpha=%s gamma=%s workers=%s failed: %s",
                        alpha, gamma, workers, exc)
        rows.append(row)
    fields = ["alpha", "gamma", "workers", "tps", "tlp", "frames",
              "mean_frame_size", "kept", "dropped", "wall_s", "error"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    done = len(cells) - failures
    print(f"swept {len(cells)} cells, {done} ok, {failures} failed"
          + (f", wrote {args.out}" if args.out else ""))
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameflow",
        description="ahead-of-formation txn scheduling pipeline harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a workload file")
    _add_workload_args(p)
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("run", help="run the full pipeline")
    _add_run_args(p)
    p.add_argument("--verify", action="store_true",
                   help="run the oracle verifier on the result")
    p.set_defaults(fn=lambda a: _cmd_run(a, echo=False))

    p = sub.add_parser("ablate",
                       help="run with execution stubbed out (framing cost only)")
    _add_run_args(p)
    p.set_defaults(fn=lambda a: _cmd_run(a, echo=True))

    p = sub.add_parser("verify", help="verify a run's artifact directory")
    p.add_argument("--dir", required=True, metavar="DIR")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("sweep", help="grid-run and emit CSV")
    _add_workload_args(p)
    p.add_argument("--alphas", type=_csv_list(float), default=[0.0, 0.5, 0.9],
                   metavar="A,B,...")
    p.add_argument("--gammas", type=_csv_list(int), default=[1000],
                   metavar="G,H,...")
    p.add_argument("--worker-counts", type=_csv_list(int), default=[1],
                   metavar="N,M,...")
    p.add_argument("--block-interval", type=int, default=10_000)
    p.add_argument("--executor", choices=["auto", "inline", "pool"],
                   default="auto")
    p.add_argument("--out", metavar="CSV")
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
