import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import biaug


def test_filters():
    x = biaug.DetectedObject("s1", "x", biaug.BoundingBox(0, 0, 10, 10), 0.95)
    y = biaug.DetectedObject("s1", "y", biaug.BoundingBox(2, 2, 8, 8), 0.9)
    assert biaug.intersection_area(x.box, y.box) == 64
    assert [o.name for o in biaug.area_overlap_filter([x, y], 0.7)] == ["y"]
    assert [o.name for o in biaug.confidence_filter([x, y], 0.9)] == ["x"]
    with pytest.raises(ValueError):
        biaug.BoundingBox(0, 0, 0, 1)


def test_loss_and_gradient():
    same = np.tile([[1.0, 0.0]], (4, 1))
    assert biaug.contrastive_loss(same, same, 0.5) == pytest.approx(math.log(4), abs=1e-12)
    eye = np.eye(2)
    assert biaug.contrastive_loss(eye, eye, 1.0) == pytest.approx(math.log1p(math.exp(-1)))
    loss, d_text, d_image = biaug.contrastive_loss_with_grad(eye, eye, 1.0)
    assert d_text.shape == (2, 2) and d_image.shape == (2, 2)
    with pytest.raises(biaug.DegenerateBatch):
        biaug.contrastive_loss(eye[:1], eye[:1], 1.0)


def test_epochs_and_negatives():
    assert biaug.scale_baseline_epochs(3000, 1000, 5) == 15
    caption = "the paved road and the white house"
    swapped = biaug.make_attribute_swap_negative(caption)
    assert swapped == "the white road and the paved house"
    assert biaug.make_attribute_swap_negative(swapped) == caption
    assert biaug.make_order_negative("a b c d e f", "trigram_shuffle", 3) == "d e f a b c"
    with pytest.raises(biaug.TooShort):
        biaug.make_order_negative("word", "unigram_shuffle")


def test_recall():
    s = np.array([[0.9, 0.1], [0.8, 0.2]])
    assert biaug.recall_at_k(s, [[0], [1]], 1, "image") == 0.5
    assert biaug.recall_at_k(np.eye(3), [[0], [1], [2]], 1, "text") == 1.0


def test_ledger_stats():
    ledger = Path(os.environ.get("BIAUG_FIXTURES", Path(__file__).parents[2] / "fixtures"))
    stats = biaug.compute_stats_from_ledger(ledger / "table1_40k_ledger.jsonl")
    assert stats == {
        "n_source": 38100,
        "n_objects": 39640,
        "n_augmented": 122026,
        "n_augmented_filtered": 77700,
        "n_pairs": 61013,
        "n_pairs_filtered": 30325,
    }


def test_run_all_on_fixture(tmp_path):
    config = biaug.make_mock_fixture(tmp_path / "fx")
    reports = biaug.run_all(config)
    assert [r["stage"] for r in reports][0] == "extract"
    assert all(r["ok"] for r in reports)
    out = tmp_path / "fx" / "out"
    assert biaug.validate_manifest(out / "pairs.jsonl", "pairs") > 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["n_source"] == 40
    assert biaug.run_cli(["--config", str(config), "stats"]) == 0
    with pytest.raises(biaug.MissingInput):
        biaug.run_all(tmp_path / "absent.json")
