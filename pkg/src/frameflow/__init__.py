"""Parallel transaction scheduling pipeline.

Stages: approximate read/write-set extraction, Bloom-filter frame packing,
conflict-DAG dispatch against a transfer VM, and per-block Merkle commitment.
"""

from frameflow.model import Kind, RWSet, Transaction, TransferOp, conflicts
from frameflow.pipeline import RunConfig, RunResult, run_pipeline
from frameflow.verify import VerifyReport, verify_dir, verify_result
from frameflow.workload import WorkloadSpec

__all__ = [
    "Kind",
    "RWSet",
    "RunConfig",
    "RunResult",
    "Transaction",
    "TransferOp",
    "VerifyReport",
    "WorkloadSpec",
    "conflicts",
    "run_pipeline",
    "verify_dir",
    "verify_result",
]

__version__ = "0.1.0"
