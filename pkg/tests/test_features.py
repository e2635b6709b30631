import numpy as np
import numpy.testing as npt
import pytest

from parttracker.errors import InvalidInputError
from parttracker.features import (
    GX_CH,
    GY_CH,
    PatchGeometry,
    crop_search_region,
    edge_density,
    extract_channels,
    propose_patches,
    scale_sides,
    vectorize_patch,
)


def geom(cx, cy, side, scale_index=0):
    return PatchGeometry(cx=cx, cy=cy, side=side, dx=0.0, dy=0.0, scale_index=scale_index)


# ------------------------------------------------------------ extract_channels

def test_constant_image_gives_zero_channels():
    img = np.full((20, 20), 128, dtype=np.uint8)
    st = extract_channels(img)
    assert st.channels == 9
    npt.assert_array_equal(st.data, np.zeros_like(st.data))


def test_vertical_step_edge_gradients():
    img = np.zeros((24, 24), dtype=np.uint8)
    img[:, 12:] = 200
    st = extract_channels(img)
    gx = st.data[:, :, GX_CH]
    gy = st.data[:, :, GY_CH]
    # response concentrated at the edge columns, flat elsewhere
    assert gx[:, 11:13].min() > gx[:, :8].max()
    npt.assert_array_equal(gy, np.zeros_like(gy))


def test_random_image_standardized():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(40, 50), dtype=np.uint8)
    st = extract_channels(img)
    mean = st.data.mean(axis=(0, 1))
    var = st.data.var(axis=(0, 1))
    assert np.abs(mean).max() <= 1e-9
    assert np.abs(var - 1.0).max() <= 1e-6


def test_extract_channels_rgb_and_determinism():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(30, 30, 3), dtype=np.uint8)
    a = extract_channels(img)
    b = extract_channels(img.copy())
    npt.assert_array_equal(a.data, b.data)


def test_extract_channels_rejects_small():
    with pytest.raises(InvalidInputError):
        extract_channels(np.zeros((10, 40), dtype=np.uint8))


# --------------------------------------------------------- crop_search_region

def test_crop_geometry_centered():
    img = np.arange(200 * 200, dtype=np.int64).reshape(200, 200) % 256
    img = img.astype(np.uint8)
    crop, cmap = crop_search_region(img, center=(100, 100), box_wh=(20, 20), s_search=3.0)
    assert crop.shape == (60, 60)
    assert cmap.to_frame((30, 30)) == (100, 100)
    npt.assert_array_equal(crop, img[70:130, 70:130])


def test_crop_corner_edge_replication():
    img = np.zeros((50, 50), dtype=np.uint8)
    img[0, 0] = 77
    crop, cmap = crop_search_region(img, center=(0, 0), box_wh=(10, 10), s_search=3.0)
    assert crop.shape == (32, 32)  # 30 padded up to a multiple of 4
    # everything left/above the frame replicates pixel (0,0)
    assert crop[0, 0] == 77
    x0, y0 = cmap.x0, cmap.y0
    assert x0 < 0 and y0 < 0
    npt.assert_array_equal(crop[: -y0, : -x0], np.full((-y0, -x0), 77))


def test_coordinate_map_round_trip():
    img = np.zeros((100, 100), dtype=np.uint8)
    _, cmap = crop_search_region(img, center=(40, 60), box_wh=(16, 12))
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = tuple(rng.integers(-200, 200, size=2).tolist())
        assert cmap.to_crop(cmap.to_frame(p)) == p


def test_crop_rejects_degenerate_box():
    img = np.zeros((50, 50), dtype=np.uint8)
    with pytest.raises(InvalidInputError):
        crop_search_region(img, center=(25, 25), box_wh=(0, 10))


# ------------------------------------------------------------- propose_patches

def test_scale_sides_rounding():
    assert scale_sides(20, 20) == (4, 10, 20)
    assert scale_sides(16, 16) == (4, 8, 16)
    assert scale_sides(7, 9) == (2, 4, 6)  # capped at even-floored min side


def test_propose_patches_smallest_first_per_point():
    geoms = propose_patches((20, 20, 8, 8), stride=2, scales=(4, 8, 16),
                            stack_w=48, stack_h=48)
    assert geoms
    by_point = {}
    for g in geoms:
        by_point.setdefault((g.cx, g.cy), []).append(g.side)
    for sides in by_point.values():
        assert sides == sorted(sides)
    # lattice at stride 2
    for (cx, cy) in by_point:
        assert (cx - 20) % 2 == 0 and (cy - 20) % 2 == 0
    # displacement relative to the box center
    g0 = geoms[0]
    assert (g0.dx, g0.dy) == (g0.cx - 24.0, g0.cy - 24.0)


def test_propose_patches_box_smaller_than_scales():
    assert propose_patches((10, 10, 3, 3), stride=2, scales=(8, 16, 32),
                           stack_w=20, stack_h=20) == []


def test_propose_patches_duplicates_free():
    geoms = propose_patches((8, 8, 16, 16), stride=2, scales=(4, 8, 16),
                            stack_w=48, stack_h=48)
    keys = [(g.cx, g.cy, g.side) for g in geoms]
    assert len(keys) == len(set(keys))


def test_side4_patches_cover_box():
    # every pixel of a 32x32 box is covered by at least one side-4 patch
    box = (30, 30, 32, 32)
    geoms = propose_patches(box, stride=2, scales=(4, 16, 32), stack_w=96, stack_h=96)
    covered = np.zeros((96, 96), dtype=bool)
    for g in geoms:
        if g.side != 4:
            continue
        tlx, tly = g.top_left
        covered[tly:tly + 4, tlx:tlx + 4] = True
    assert covered[30:62, 30:62].all()


def test_propose_patches_validates_args():
    with pytest.raises(InvalidInputError):
        propose_patches((0, 0, 8, 8), stride=0, scales=(4, 8, 16), stack_w=48, stack_h=48)
    with pytest.raises(InvalidInputError):
        propose_patches((0, 0, 8, 8), stride=2, scales=(4, 4, 16), stack_w=48, stack_h=48)


# ------------------------------------------------------------ vectorize, edges

def _stack_from(data):
    from parttracker.features import FeatureStack
    return FeatureStack(data=np.asarray(data, dtype=np.float64))


def test_vectorize_single_pixel_normalizes():
    st = _stack_from(np.full((4, 4, 1), 5.0))
    d = vectorize_patch(st, geom(1, 1, 1))
    npt.assert_array_equal(d, [1.0])


def test_vectorize_zero_region_stays_zero():
    st = _stack_from(np.zeros((6, 6, 2)))
    d = vectorize_patch(st, geom(2, 2, 4))
    npt.assert_array_equal(d, np.zeros(32))


def test_vectorize_unit_norm_and_order():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(10, 10, 3))
    st = _stack_from(data)
    g = geom(4, 6, 4)
    d = vectorize_patch(st, g)
    assert abs(np.linalg.norm(d) - 1.0) <= 1e-12
    raw = data[4:8, 2:6, :].ravel()  # (y, x, channel) order
    npt.assert_allclose(d, raw / np.linalg.norm(raw), atol=1e-12)


def test_vectorize_out_of_bounds():
    st = _stack_from(np.zeros((8, 8, 1)))
    with pytest.raises(InvalidInputError):
        vectorize_patch(st, geom(7, 7, 4))


def test_edge_density_flat_vs_textured():
    img = np.full((40, 40), 100, dtype=np.uint8)
    rng = np.random.default_rng(3)
    img[4:16, 4:16] = rng.integers(0, 256, size=(12, 12))
    st = extract_channels(img)
    textured = edge_density(st, geom(10, 10, 8))
    flat = edge_density(st, geom(30, 30, 8))
    assert textured > flat


def test_edge_density_constant_stack_is_zero():
    st = _stack_from(np.zeros((12, 12, 3)))
    assert edge_density(st, geom(6, 6, 4)) == 0.0
