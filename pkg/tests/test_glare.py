"""Saturation-blob detection: morphology, tracing, hulls, and the pipeline."""

import numpy as np
import pytest

from nightflow.glare import (
    GlareConfig,
    MorphOp,
    Polygon,
    chain_pixel_corners,
    convex_hulls,
    detect_glare,
    fill_polygons,
    find_outer_contours,
    load_mask_png,
    load_polygons_json,
    morphology,
    polygons_from_json,
    polygons_to_json,
    save_mask_png,
    save_polygons_json,
    threshold,
)


def disk_image(h, w, cx, cy, radius, fg=1.0, bg=0.5):
    ys, xs = np.mgrid[0:h, 0:w]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    img = np.full((h, w), bg)
    img[inside] = fg
    return np.stack([img] * 3, axis=-1), inside


# --- thresholding and morphology -------------------------------------------


def test_threshold_is_inclusive():
    plane = np.array([[0.1, 0.5, 0.9]])
    np.testing.assert_array_equal(threshold(plane, 0.5), [[False, True, True]])


def test_threshold_monotone_in_cutoff():
    rng = np.random.default_rng(0)
    plane = rng.random((16, 16))
    lo = threshold(plane, 0.3)
    hi = threshold(plane, 0.6)
    assert (hi <= lo).all()


def test_erode_removes_isolated_pixel():
    mask = np.zeros((7, 7), bool)
    mask[3, 3] = True
    assert not morphology(mask, MorphOp.ERODE, 3).any()


def test_close_fills_interior_hole():
    mask = np.ones((7, 7), bool)
    mask[3, 3] = False
    closed = morphology(mask, MorphOp.CLOSE, 3)
    assert closed[3, 3]


def test_dilate_grows_by_kernel_radius():
    mask = np.zeros((9, 9), bool)
    mask[4, 4] = True
    grown = morphology(mask, MorphOp.DILATE, 3)
    assert grown.sum() == 9


def test_kernel_one_is_identity():
    rng = np.random.default_rng(1)
    mask = rng.random((8, 8)) > 0.5
    for op in MorphOp:
        np.testing.assert_array_equal(morphology(mask, op, 1), mask)


def test_morphology_validation():
    mask = np.zeros((4, 4), bool)
    with pytest.raises(ValueError):
        morphology(mask, MorphOp.ERODE, 4)
    with pytest.raises(ValueError):
        morphology(mask.astype(np.uint8), MorphOp.ERODE, 3)


# --- contour tracing --------------------------------------------------------


def test_single_pixel_contour():
    mask = np.zeros((5, 5), bool)
    mask[2, 3] = True
    chains = find_outer_contours(mask)
    assert len(chains) == 1
    np.testing.assert_array_equal(chains[0], [[3, 2]])


def test_block_contour_is_the_clockwise_ring():
    mask = np.zeros((6, 6), bool)
    mask[1:4, 2:5] = True
    chains = find_outer_contours(mask)
    assert len(chains) == 1
    chain = chains[0]
    assert len(chain) == 8
    # Starts at the first set pixel in row-major order.
    np.testing.assert_array_equal(chain[0], [2, 1])
    ring = {tuple(p) for p in chain}
    interior = {(3, 2)}
    boundary = {
        (x, y) for y in range(1, 4) for x in range(2, 5)
    } - interior
    assert ring == boundary


def test_two_components_two_chains():
    mask = np.zeros((8, 8), bool)
    mask[1, 1] = True
    mask[5:7, 4:7] = True
    chains = find_outer_contours(mask)
    assert len(chains) == 2


def test_diagonal_pixels_are_one_component():
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = True
    mask[2, 2] = True
    assert len(find_outer_contours(mask)) == 1


def test_chain_pixel_corners():
    corners = chain_pixel_corners(np.array([[3, 2]]))
    got = {tuple(c) for c in corners}
    assert got == {(3, 2), (4, 2), (3, 3), (4, 3)}


# --- polygons and hulls -----------------------------------------------------


def test_polygon_validation():
    with pytest.raises(ValueError):
        Polygon(((0.0, 0.0), (1.0, 0.0)))
    with pytest.raises(ValueError):
        # Clockwise ordering flips the cross products negative.
        Polygon(((0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)))


def test_polygon_area_shoelace():
    square = Polygon(((0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)))
    assert square.area == pytest.approx(16.0)


def test_hull_of_a_block_spans_pixel_corners():
    mask = np.zeros((16, 16), bool)
    mask[3:13, 2:12] = True
    chains = find_outer_contours(mask)
    hulls = convex_hulls([chain_pixel_corners(c) for c in chains], min_area_px=1.0)
    assert len(hulls) == 1
    hull = hulls[0]
    assert hull.area == pytest.approx(100.0)
    assert len(hull.vertices) == 4
    assert {tuple(v) for v in hull.vertices} == {
        (2.0, 3.0), (12.0, 3.0), (12.0, 13.0), (2.0, 13.0)
    }


def test_hull_min_area_filter():
    small = np.zeros((8, 8), bool)
    small[2, 2] = True
    corners = [chain_pixel_corners(c) for c in find_outer_contours(small)]
    assert convex_hulls(corners, min_area_px=2.0) == []
    assert len(convex_hulls(corners, min_area_px=0.5)) == 1


def test_hull_is_convex_for_concave_input():
    mask = np.zeros((12, 12), bool)
    mask[2:10, 2:5] = True
    mask[2:5, 2:10] = True  # L shape
    corners = [chain_pixel_corners(c) for c in find_outer_contours(mask)]
    hulls = convex_hulls(corners, min_area_px=1.0)
    assert len(hulls) == 1
    # The hull closes over the notch, so it outgrows the L itself.
    assert hulls[0].area > mask.sum()


def test_fill_polygons_closed_touch():
    """A pixel is filled when its unit square touches the polygon.

    The rectangle [2,6]x[1,4] therefore also collects the one-pixel rim
    whose squares share an edge or corner with it.
    """
    poly = Polygon(((2.0, 1.0), (6.0, 1.0), (6.0, 4.0), (2.0, 4.0)))
    mask = fill_polygons([poly], (6, 8))
    want = np.zeros((6, 8), bool)
    want[0:5, 1:7] = True
    np.testing.assert_array_equal(mask, want)


def test_fill_polygons_union():
    a = Polygon(((0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)))
    b = Polygon(((4.0, 4.0), (6.0, 4.0), (6.0, 6.0), (4.0, 6.0)))
    mask = fill_polygons([a, b], (6, 6))
    assert mask.sum() == 18
    assert mask[0, 0] and mask[5, 5] and not mask[0, 5]


# --- the pipeline -----------------------------------------------------------


def test_black_image_yields_nothing():
    img = np.zeros((32, 32, 3))
    polygons, mask = detect_glare(img)
    assert polygons == []
    assert not mask.any()


def test_white_image_yields_one_big_polygon():
    img = np.ones((64, 64, 3))
    polygons, mask = detect_glare(img)
    assert len(polygons) == 1
    assert mask.mean() > 0.8


def test_disk_detection_quality():
    img, gt = disk_image(120, 160, 80, 60, 20)
    polygons, mask = detect_glare(img)
    assert len(polygons) == 1
    inter = (mask & gt).sum()
    union = (mask | gt).sum()
    assert inter / union >= 0.85


def test_detection_idempotent_on_own_mask():
    img, _ = disk_image(120, 160, 70, 55, 25)
    _, mask = detect_glare(img)
    rendered = np.stack([mask.astype(float)] * 3, axis=-1)
    _, again = detect_glare(rendered)
    inter = (mask & again).sum()
    union = (mask | again).sum()
    assert inter / union >= 0.99


def test_detection_monotone_in_threshold():
    rng = np.random.default_rng(2)
    base = rng.random((48, 48))
    img = np.stack([base] * 3, axis=-1)
    lo = threshold(base, 0.4)
    hi = threshold(base, 0.8)
    assert (hi <= lo).all()
    _, mask_strict = detect_glare(img, GlareConfig(luma_threshold=0.9, min_area_fraction=0.0))
    _, mask_loose = detect_glare(img, GlareConfig(luma_threshold=0.5, min_area_fraction=0.0))
    # Hulls may overshoot locally, but the strict mask cannot dominate.
    assert mask_strict.sum() <= mask_loose.sum()


def test_mask_equals_union_of_filled_hulls():
    img, _ = disk_image(100, 100, 50, 50, 18)
    polygons, mask = detect_glare(img)
    np.testing.assert_array_equal(mask, fill_polygons(polygons, mask.shape))


def test_profiles():
    det = GlareConfig.detection()
    ann = GlareConfig.annotation()
    assert det == GlareConfig()
    assert ann.luma_threshold < det.luma_threshold
    assert ann.min_area_fraction < det.min_area_fraction


def test_config_validation():
    with pytest.raises(ValueError):
        GlareConfig(close_kernel=4)
    with pytest.raises(ValueError):
        GlareConfig(luma_threshold=1.5)
    with pytest.raises(ValueError):
        GlareConfig(min_area_fraction=-0.1)


# --- serialization ----------------------------------------------------------


def test_polygons_json_round_trip(tmp_path):
    img, _ = disk_image(80, 80, 40, 40, 15)
    polygons, _ = detect_glare(img)
    doc = polygons_to_json("frame_000.png", polygons)
    assert doc["image"] == "frame_000.png"
    assert polygons_from_json(doc) == polygons
    path = tmp_path / "polys.json"
    save_polygons_json(path, "frame_000.png", polygons)
    assert load_polygons_json(path) == polygons


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    mask = rng.random((20, 30)) > 0.6
    path = tmp_path / "mask.png"
    save_mask_png(path, mask)
    np.testing.assert_array_equal(load_mask_png(path), mask)
