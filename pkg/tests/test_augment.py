import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulprint.augment import (AugmentConfig, apply_geometric, augment_pair, cutout, draw_glyph, draw_line,
                             draw_random_letters, draw_random_lines, pair_rng, replay)
from ulprint.font5x7 import CHARSET, GLYPHS
from ulprint.synthetic import grating_sample

NONE = AugmentConfig(p_geom=0, p_rrc=0, p_cutout=0, p_lines=0, p_letters=0)


@pytest.fixture(scope="module")
def pair():
    return grating_sample(300, seed=1, index=0)


def test_documented_defaults():
    c = AugmentConfig()
    assert (c.crop, c.p_geom, c.p_rrc, c.rrc_scale) == (256, 0.75, 0.5, (0.8, 1.2))
    assert (c.p_cutout, c.cutout_max_holes, c.cutout_hole, c.p_lines, c.p_letters) == (0.3, 5, 10, 0.3, 0.3)


@pytest.mark.parametrize("kw", [dict(p_geom=1.5), dict(p_lines=-0.1), dict(rrc_scale=(0.0, 1.0)),
                                dict(rrc_scale=(1.2, 0.8)), dict(crop=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AugmentConfig(**kw)


def test_font_table():
    assert set(CHARSET) == set("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")
    assert all(g.shape == (7, 5) and g.dtype == bool and g.any() for g in GLYPHS.values())


def test_degenerate_config_is_plain_crop(pair):
    img, mask = pair
    trace = []
    a, m = augment_pair(img, mask, NONE, pair_rng(3, 0), trace)
    assert len(trace) == 1 and trace[0][0] == "crop"
    _, y, x, n = trace[0]
    assert np.array_equal(a, img[y:y + n, x:x + n]) and np.array_equal(m, mask[y:y + n, x:x + n])


def test_determinism(pair):
    img, mask = pair
    a1, m1 = augment_pair(img, mask, AugmentConfig(), pair_rng(9, 4))
    a2, m2 = augment_pair(img, mask, AugmentConfig(), pair_rng(9, 4))
    assert np.array_equal(a1, a2) and np.array_equal(m1, m2)
    a3, _ = augment_pair(img, mask, AugmentConfig(), pair_rng(9, 5))
    assert not np.array_equal(a1, a3)


def test_forced_hflip_matches_flipped_crop(pair):
    img, mask = pair
    cfg = AugmentConfig(p_geom=1, p_rrc=0, p_cutout=0, p_lines=0, p_letters=0)
    for i in range(40):
        trace = []
        _, m = augment_pair(img, mask, cfg, pair_rng(0, i), trace)
        if trace[1] == ("hflip",):
            _, y, x, n = trace[0]
            assert np.array_equal(m, mask[y:y + n, x:x + n][:, ::-1])
            break
    else:
        pytest.fail("no hflip drawn in 40 tries")


@given(st.integers(0, 2**32), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_alignment_binarity_and_size(seed, index):
    img, mask = grating_sample(272, seed=seed % 7, index=index % 5)
    trace = []
    a, m = augment_pair(img, mask, AugmentConfig(), pair_rng(seed, index), trace)
    assert a.shape == m.shape == (256, 256)
    assert set(np.unique(m)) <= {0, 1}
    geom = [op for op in trace if isinstance(op, tuple)]
    assert np.array_equal(replay(mask, geom, is_mask=True), m)
    # with no appearance step the image follows the same geometry
    if len(geom) == len(trace):
        assert np.array_equal(replay(img, geom), a)


def test_appearance_never_touches_mask(pair):
    img, mask = pair
    cfg = AugmentConfig(p_geom=0, p_rrc=0, p_cutout=1, p_lines=1, p_letters=1)
    trace = []
    a, m = augment_pair(img, mask, cfg, pair_rng(2, 2), trace)
    _, y, x, n = trace[0]
    assert trace[1:] == ["cutout", "lines", "letters"]
    assert np.array_equal(m, mask[y:y + n, x:x + n])
    assert not np.array_equal(a, img[y:y + n, x:x + n])


def test_rrc_identity_scale_and_binary_mask():
    rng = np.random.default_rng(0)
    m = (rng.random((32, 32)) > 0.5).astype(np.uint8)
    assert np.array_equal(apply_geometric(m, ("rrc", 1.0, 15.5, 15.5), True), m)
    out = apply_geometric(m, ("rrc", 0.83, 14.0, 17.0), True)
    assert out.dtype == np.uint8 and set(np.unique(out)) <= {0, 1}


def test_source_too_small():
    with pytest.raises(ValueError):
        augment_pair(np.zeros((100, 300)), np.zeros((100, 300), np.uint8), AugmentConfig(), pair_rng(0))


def test_cutout_holes():
    img = np.ones((64, 64))
    for i in range(50):
        out = cutout(img, pair_rng(i), 5, 10)
        zeros = out == 0
        assert 1 <= zeros.sum() <= 5 * 100
        assert np.all(out[~zeros] == 1)


def test_lines_change_enough_pixels_and_are_local():
    img = np.ones((128, 128))
    for i in range(30):
        out = draw_random_lines(img, pair_rng(i))
        changed = out != img
        assert changed.sum() >= 10
        assert out.min() >= 0 and out.max() <= 1
    a = draw_random_lines(img, pair_rng(5))
    assert np.array_equal(a, draw_random_lines(img, pair_rng(5)))


def test_single_line_footprint():
    img = np.ones((40, 60))
    out = draw_line(img, (5.0, 20.0), (45.0, 20.0), 2.0, 0.0)
    changed = np.argwhere(out != 1)
    assert changed[:, 0].min() >= 18 and changed[:, 0].max() <= 22
    assert changed[:, 1].min() >= 3 and changed[:, 1].max() <= 47
    assert (out != 1).sum() >= 40


def test_glyph_stencil_count():
    img = np.ones((40, 40))
    out = draw_glyph(img, "I", 5, 5, 2, 0.0)
    assert np.count_nonzero(out != img) == 4 * GLYPHS["I"].sum()


def test_zero_letters_is_identity_and_deterministic():
    img = np.random.default_rng(1).random((64, 64))
    assert np.array_equal(draw_random_letters(img, pair_rng(0), n=0), img)
    assert np.array_equal(draw_random_letters(img, pair_rng(4)), draw_random_letters(img, pair_rng(4)))


def test_pair_rng_streams():
    a = pair_rng(1, 0).random(4)
    assert np.array_equal(a, pair_rng(1, 0).random(4))
    assert not np.array_equal(a, pair_rng(1, 1).random(4))
    assert not np.array_equal(a, pair_rng(2, 0).random(4))
