from __future__ import annotations

import numpy as np
import pytest

from clickadapt import adapt, model
from clickadapt.errors import ConfigError, DimensionMismatch, EmptyLabel
from clickadapt.masks import Click


# ---------------------------------------------------------------- sparse bce


def test_sparse_bce_single_positive_at_half_is_ln2():
    label = np.full((3, 3), -1, dtype=np.int8)
    label[1, 1] = 1
    prob = np.full((3, 3), 0.5)
    loss, grad = adapt.sparse_bce(label, prob)
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)
    assert grad[1, 1] != 0.0


def test_sparse_bce_balanced_pair_at_half_is_two_ln2():
    label = np.full((2, 2), -1, dtype=np.int8)
    label[0, 0] = 1
    label[1, 1] = 0
    prob = np.full((2, 2), 0.5)
    loss, _ = adapt.sparse_bce(label, prob)
    assert loss == pytest.approx(2.0 * np.log(2.0), abs=1e-12)


def test_sparse_bce_gradient_zero_at_unlabeled():
    rng = np.random.default_rng(61)
    label = rng.integers(-1, 2, size=(8, 8)).astype(np.int8)
    label[0, 0] = 1  # guarantee at least one label
    prob = rng.uniform(0.05, 0.95, (8, 8))
    _, grad = adapt.sparse_bce(label, prob)
    assert (grad[label == -1] == 0.0).all()
    assert (grad[label == 1] < 0.0).all()
    assert (grad[label == 0] > 0.0).all()


def test_sparse_bce_classes_normalized_separately():
    # three positives, one negative: each class term is its own mean
    label = np.full((1, 4), -1, dtype=np.int8)
    label[0, :3] = 1
    label[0, 3] = 0
    prob = np.array([[0.8, 0.6, 0.9, 0.3]])
    loss, _ = adapt.sparse_bce(label, prob)
    expected = -np.log([0.8, 0.6, 0.9]).mean() - np.log(1.0 - 0.3)
    assert loss == pytest.approx(expected, abs=1e-12)


def test_sparse_bce_absent_class_term_dropped():
    label = np.full((2, 2), -1, dtype=np.int8)
    label[0, 0] = 1
    prob = np.full((2, 2), 0.7)
    loss, _ = adapt.sparse_bce(label, prob)
    assert loss == pytest.approx(-np.log(0.7), abs=1e-12)


def test_sparse_bce_all_unlabeled_raises():
    with pytest.raises(EmptyLabel):
        adapt.sparse_bce(np.full((2, 2), -1, dtype=np.int8), np.full((2, 2), 0.5))


def test_sparse_bce_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        adapt.sparse_bce(np.full((2, 2), 1, dtype=np.int8), np.full((2, 3), 0.5))


def test_sparse_bce_matches_balanced_bce_on_full_labels():
    rng = np.random.default_rng(67)
    gt = np.zeros((4, 4), dtype=np.int8)
    gt[:, :2] = 1  # exactly half foreground
    prob = rng.uniform(0.1, 0.9, (4, 4))
    loss, _ = adapt.sparse_bce(gt, prob)
    # independent class-balanced reference
    fg = prob[gt == 1]
    bg = prob[gt == 0]
    ref = -np.log(fg).mean() - np.log(1.0 - bg).mean()
    assert loss == pytest.approx(ref, abs=1e-12)


def test_dense_bce_value_and_gradient_direction():
    gt = np.array([[1, 0]], dtype=np.uint8)
    prob = np.full((1, 2), 0.5)
    loss, grad = adapt.dense_bce(gt, prob)
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)
    assert grad[0, 0] < 0.0 < grad[0, 1]


# -------------------------------------------------------------------- config


def test_config_defaults():
    cfg = adapt.AdaptationConfig()
    assert (cfg.ca, cfg.rm, cfg.cm) == ("none", "none", "off")
    assert cfg.k == 5
    assert cfg.lr == pytest.approx(1e-2)


def test_config_parse_roundtrip():
    text = "ca = reset\nrm = eroded\ncm = on\nk = 3\nlr = 0.005\nseed = 42\n"
    cfg = adapt.parse_config(text)
    assert cfg == adapt.AdaptationConfig("reset", "eroded", "on", 3, 0.005, 42)
    assert adapt.parse_config(adapt.format_config(cfg)) == cfg


def test_config_parse_comments_and_blank_lines():
    text = "# full method\n\nca=continual\n  rm = untreated  \ncm=off\n"
    cfg = adapt.parse_config(text)
    assert cfg.ca == "continual"
    assert cfg.rm == "untreated"
    assert cfg.k == 5  # default fills the gap


def test_config_rejects_bad_values():
    for text in [
        "ca = sometimes\n",
        "rm = dilated\n",
        "cm = maybe\n",
        "k = -1\n",
        "k = 1.5\n",
        "lr = 0\n",
        "lr = -3\n",
        "seed = x\n",
        "mystery = 1\n",
        "ca\n",
    ]:
        with pytest.raises(ConfigError):
            adapt.parse_config(text)


def test_config_labels():
    assert adapt.AdaptationConfig().label() == "baseline"
    assert adapt.AdaptationConfig("reset", "eroded", "on").label() == "full-method"
    assert "ca=continual" in adapt.AdaptationConfig("continual").label()


# ---------------------------------------------------------------- adapt step


@pytest.fixture
def small_setup():
    rng = np.random.default_rng(71)
    feats = rng.normal(0, 1, (5, 12, 12))
    decoder = model.init_decoder(feature_count=5, hidden_width=4, seed=13)
    return feats, decoder


def make_ctx(decoder, feats, clicks, latest=None):
    return adapt.AdaptationContext(
        decoder=decoder, feats=feats, clicks=list(clicks), latest_prob=latest
    )


def test_adapt_step_zero_lr_keeps_weights(small_setup):
    feats, decoder = small_setup
    ctx = make_ctx(decoder, feats, [Click(4, 4, True)])
    label = np.full((12, 12), -1, dtype=np.int8)
    label[4, 4] = 1
    before = decoder.weights.copy()
    loss = adapt.adapt_step(ctx, label, lr=0.0)
    assert loss > 0.0
    assert np.array_equal(decoder.weights, before)
    assert decoder.step_count == 1


def test_adapt_step_reports_prestep_loss(small_setup):
    feats, decoder = small_setup
    clicks = [Click(2, 2, True), Click(9, 9, False)]
    ctx = make_ctx(decoder, feats, clicks)
    label = np.full((12, 12), -1, dtype=np.int8)
    label[2, 2] = 1
    label[9, 9] = 0
    prompt = model.encode_prompt(clicks, (12, 12), prev_prob=None)
    prob, _ = model.decoder_forward(decoder, feats, prompt)
    expected, _ = adapt.sparse_bce(label, prob)
    loss = adapt.adapt_step(ctx, label, lr=1e-3)
    assert loss == pytest.approx(expected, abs=1e-12)


def test_repeated_steps_reduce_loss(small_setup):
    feats, decoder = small_setup
    clicks = [Click(3, 3, True), Click(8, 8, False)]
    ctx = make_ctx(decoder, feats, clicks)
    label = np.full((12, 12), -1, dtype=np.int8)
    label[3, 3] = 1
    label[8, 8] = 0
    losses = [adapt.adapt_step(ctx, label, lr=1e-3) for _ in range(10)]
    prompt = model.encode_prompt(clicks, (12, 12))
    prob, _ = model.decoder_forward(decoder, feats, prompt)
    final, _ = adapt.sparse_bce(label, prob)
    assert final < losses[0]


# ------------------------------------------------------------------- adapter


def run_fake_image(adapter, decoder, feats, clicks, result_mask, latest=None):
    ctx = adapter.start_session(decoder, feats)
    for c in clicks:
        ctx.clicks.append(c)
        ctx.latest_prob = latest
        adapter.on_click(ctx)
    ctx.result_mask = result_mask
    return ctx, adapter.on_image_done(ctx)


def test_adapter_all_off_never_touches_decoder(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(adapt.AdaptationConfig())
    before = decoder.weights.copy()
    result = np.zeros((12, 12), dtype=np.uint8)
    result[4:8, 4:8] = 1
    _, summary = run_fake_image(
        adapter, decoder, feats, [Click(5, 5, True)], result
    )
    assert np.array_equal(decoder.weights, before)
    assert decoder.step_count == 0
    assert summary.steps == 0
    assert adapter.steps_performed == 0


def test_adapter_reset_roundtrip_bit_identical(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(adapt.AdaptationConfig(ca="reset"))
    before_w = decoder.weights.copy()
    before_m = decoder.adam_m.copy()
    clicks = [Click(2, 2, True), Click(9, 3, False), Click(5, 5, True)]
    ctx, summary = run_fake_image(adapter, decoder, feats, clicks, None)
    assert adapter.steps_performed == 3  # one step per click
    assert summary.steps == 0  # no post-image supervision configured
    assert summary.restored is True
    assert np.array_equal(decoder.weights, before_w)
    assert np.array_equal(decoder.adam_m, before_m)
    assert decoder.step_count == 0


def test_adapter_on_click_changes_weights_during_image(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(adapt.AdaptationConfig(ca="reset"))
    ctx = adapter.start_session(decoder, feats)
    before = decoder.weights.copy()
    ctx.clicks.append(Click(6, 6, True))
    loss = adapter.on_click(ctx)
    assert loss is not None and loss > 0
    assert not np.array_equal(decoder.weights, before)
    assert decoder.step_count == 1


def test_adapter_continual_keeps_steps(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(adapt.AdaptationConfig(ca="continual"))
    before = decoder.weights.copy()
    _, summary = run_fake_image(
        adapter, decoder, feats, [Click(2, 2, True)], None
    )
    assert summary.restored is False
    assert not np.array_equal(decoder.weights, before)
    assert decoder.step_count == 1


def test_reset_and_continual_identical_within_image(small_setup):
    feats, _ = small_setup
    d1 = model.init_decoder(5, 4, seed=21)
    d2 = model.init_decoder(5, 4, seed=21)
    a1 = adapt.Adapter(adapt.AdaptationConfig(ca="reset"))
    a2 = adapt.Adapter(adapt.AdaptationConfig(ca="continual"))
    c1 = a1.start_session(d1, feats)
    c2 = a2.start_session(d2, feats)
    for click in [Click(2, 2, True), Click(9, 9, False)]:
        c1.clicks.append(click)
        c2.clicks.append(click)
        a1.on_click(c1)
        a2.on_click(c2)
        assert np.array_equal(d1.weights, d2.weights)
    a1.on_image_done(c1)
    a2.on_image_done(c2)
    assert not np.array_equal(d1.weights, d2.weights)  # reset rolled back


def test_click_mask_post_image_step(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(adapt.AdaptationConfig(cm="on"))
    ctx, summary = run_fake_image(
        adapter, decoder, feats, [Click(3, 3, True), Click(8, 8, False)], None
    )
    assert summary.steps == 1
    assert summary.label_positive == 1
    assert summary.label_negative == 1
    assert decoder.step_count == 1
    assert adapter.steps_performed == 1


def test_result_mask_eroded_post_image_step(small_setup):
    feats, decoder = small_setup
    result = np.zeros((12, 12), dtype=np.uint8)
    result[2:10, 2:10] = 1
    adapter = adapt.Adapter(adapt.AdaptationConfig(rm="eroded", k=2))
    _, summary = run_fake_image(adapter, decoder, feats, [], result)
    assert summary.steps == 1
    # eroded-by-2 8x8 block leaves a 4x4 core of positives
    assert summary.label_positive == 16
    assert summary.label_unknown > 0
    assert decoder.step_count == 1


def test_result_mask_untreated_uses_full_mask(small_setup):
    feats, decoder = small_setup
    result = np.zeros((12, 12), dtype=np.uint8)
    result[2:10, 2:10] = 1
    adapter = adapt.Adapter(adapt.AdaptationConfig(rm="untreated"))
    _, summary = run_fake_image(adapter, decoder, feats, [], result)
    assert summary.steps == 1
    assert summary.label_positive == 64
    assert summary.label_negative == 144 - 64
    assert summary.label_unknown == 0


def test_click_label_wins_merge_in_post_image_label(small_setup):
    feats, decoder = small_setup
    result = np.zeros((12, 12), dtype=np.uint8)
    result[2:10, 2:10] = 1
    # a negative click inside the untreated foreground must flip that pixel
    adapter = adapt.Adapter(adapt.AdaptationConfig(cm="on", rm="untreated"))
    ctx, summary = run_fake_image(
        adapter, decoder, feats, [Click(5, 5, False)], result
    )
    assert summary.steps == 1
    assert summary.label_positive == 63
    assert summary.label_negative == 81


def test_empty_post_image_label_skips_step(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(adapt.AdaptationConfig(cm="on"))
    _, summary = run_fake_image(adapter, decoder, feats, [], None)
    assert summary.steps == 0
    assert decoder.step_count == 0


def test_eroded_away_result_mask_skips_step(small_setup):
    feats, decoder = small_setup
    ii, jj = np.indices((12, 12))
    board = ((ii + jj) % 2).astype(np.uint8)  # erodes to nothing on both sides
    adapter = adapt.Adapter(adapt.AdaptationConfig(rm="eroded", k=1))
    _, summary = run_fake_image(adapter, decoder, feats, [], board)
    assert summary.steps == 0
    assert summary.label_unknown == 144


def test_finish_rejected_restores_without_step(small_setup):
    feats, decoder = small_setup
    adapter = adapt.Adapter(
        adapt.AdaptationConfig(ca="reset", rm="untreated", cm="on")
    )
    before = decoder.weights.copy()
    ctx = adapter.start_session(decoder, feats)
    ctx.clicks.append(Click(4, 4, True))
    adapter.on_click(ctx)
    result = np.ones((12, 12), dtype=np.uint8)
    ctx.result_mask = result
    summary = adapter.finish_rejected(ctx)
    assert summary.steps == 0
    assert summary.restored is True
    assert np.array_equal(decoder.weights, before)


def test_step_accounting_formula(small_setup):
    feats, _ = small_setup
    decoder = model.init_decoder(5, 4, seed=31)
    adapter = adapt.Adapter(adapt.AdaptationConfig(ca="reset", rm="untreated", cm="on"))
    result = np.zeros((12, 12), dtype=np.uint8)
    result[3:6, 3:6] = 1
    clicks_per_image = [2, 3, 1]
    for n in clicks_per_image:
        clicks = [Click(3 + i, 3, True) for i in range(n)]
        run_fake_image(adapter, decoder, feats, clicks, result)
    assert adapter.steps_performed == sum(clicks_per_image) + len(clicks_per_image)
