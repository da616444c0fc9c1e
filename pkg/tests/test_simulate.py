from __future__ import annotations

import numpy as np
import pytest

from clickadapt import simulate
from clickadapt.errors import DimensionMismatch, NoMisclassifiedPixels
from oracles import brute_simulate_click


def test_error_masks_basic():
    pred = np.array([[1, 0]], dtype=np.uint8)
    gt = np.array([[0, 1]], dtype=np.uint8)
    fp, fn = simulate.error_masks(pred, gt)
    assert fp[0, 0] == 1 and fp[0, 1] == 0
    assert fn[0, 1] == 1 and fn[0, 0] == 0


def test_error_masks_disjoint_and_cover_disagreement():
    rng = np.random.default_rng(47)
    for _ in range(20):
        pred = (rng.random((10, 9)) < 0.5).astype(np.uint8)
        gt = (rng.random((10, 9)) < 0.5).astype(np.uint8)
        fp, fn = simulate.error_masks(pred, gt)
        assert not np.any((fp == 1) & (fn == 1))
        assert np.array_equal((fp | fn) == 1, pred != gt)


def test_error_masks_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        simulate.error_masks(np.zeros((2, 2), np.uint8), np.zeros((2, 3), np.uint8))


def test_click_centered_block_from_empty_prediction():
    pred = np.zeros((5, 5), dtype=np.uint8)
    gt = np.zeros((5, 5), dtype=np.uint8)
    gt[1:4, 1:4] = 1
    click = simulate.simulate_click(pred, gt)
    assert (click.row, click.col, click.positive) == (2, 2, True)


def test_click_row_major_tie_break():
    pred = np.zeros((1, 3), dtype=np.uint8)
    gt = np.zeros((1, 3), dtype=np.uint8)
    gt[0, 0] = gt[0, 2] = 1  # two symmetric false negatives, depth 1 each
    click = simulate.simulate_click(pred, gt)
    assert (click.row, click.col, click.positive) == (0, 0, True)


def test_click_false_negative_wins_value_tie():
    # two 3x3 blobs of equal interior depth: one missed (FN), one hallucinated (FP)
    pred = np.zeros((9, 9), dtype=np.uint8)
    gt = np.zeros((9, 9), dtype=np.uint8)
    gt[1:4, 1:4] = 1          # false negatives, deepest point (2, 2)
    pred[5:8, 5:8] = 1        # false positives, deepest point (6, 6)
    click = simulate.simulate_click(pred, gt)
    assert (click.row, click.col, click.positive) == (2, 2, True)


def test_click_negative_on_dominant_false_positive():
    pred = np.zeros((9, 9), dtype=np.uint8)
    gt = np.zeros((9, 9), dtype=np.uint8)
    pred[2:7, 2:7] = 1        # large hallucinated block, no true object
    gt[0, 0] = 1
    pred[0, 0] = 1            # that one gt pixel is covered: no false negatives
    click = simulate.simulate_click(pred, gt)
    assert click.positive is False
    assert (click.row, click.col) == (4, 4)


def test_click_requires_disagreement():
    m = np.zeros((4, 4), dtype=np.uint8)
    m[1, 1] = 1
    with pytest.raises(NoMisclassifiedPixels):
        simulate.simulate_click(m, m.copy())


def test_click_lands_on_misclassified_pixel_with_true_polarity():
    rng = np.random.default_rng(53)
    for _ in range(40):
        h, w = rng.integers(2, 20, size=2)
        pred = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        gt = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        if np.array_equal(pred, gt):
            continue
        c = simulate.simulate_click(pred, gt)
        assert pred[c.row, c.col] != gt[c.row, c.col]
        assert c.positive == bool(gt[c.row, c.col] == 1)


def test_click_matches_brute_force_oracle():
    rng = np.random.default_rng(59)
    checked = 0
    while checked < 60:
        h, w = rng.integers(1, 25, size=2)
        pred = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        gt = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        if np.array_equal(pred, gt):
            continue
        got = simulate.simulate_click(pred, gt)
        row, col, positive = brute_simulate_click(pred, gt)
        assert (got.row, got.col, got.positive) == (row, col, positive)
        checked += 1
