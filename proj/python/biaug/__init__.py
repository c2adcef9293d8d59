"""Bimodal hard-negative augmentation pipeline (C++ core)."""

from ._core import (
    BiaugError,
    BoundingBox,
    ConfigInvalid,
    DegenerateBatch,
    DetectedObject,
    DuplicateId,
    MalformedRecord,
    MissingInput,
    TooShort,
    UnparseableCaption,
    area_overlap_filter,
    compute_stats_from_ledger,
    confidence_filter,
    contrastive_loss,
    contrastive_loss_with_grad,
    intersection_area,
    make_attribute_swap_negative,
    make_mock_fixture,
    make_order_negative,
    recall_at_k,
    run_all,
    run_cli,
    scale_baseline_epochs,
    validate_manifest,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def main() -> None:
    import sys

    raise SystemExit(run_cli(sys.argv[1:]))
