import math

import numpy as np
import pytest

from conftest import make_grid
from errors import DataError, OutOfGridError, PreconditionError
from geometry.discs import disc_overlap_area, disc_pixels, overlap_area
from geometry.projection import lonlat_to_metres, project, to_geo, to_metres, unproject
from geometry.rays import all_intersections, crossing_point, detections_to_rays, ray_pair_intersection
from storage.models import Camera, Detection, Ray


def _ray(cam: str, origin, bearing: float, confidence: float = 0.9, depth: float = 5.0) -> Ray:
    return Ray(camera_id=cam, origin=origin, bearing=bearing, confidence=confidence, depth=depth)


# ── projection ──

def test_origin_projects_to_first_pixel(grid40) -> None:
    assert project(grid40.origin, grid40) == (1, 1)


def test_offset_east_lands_in_second_column(grid40) -> None:
    point = to_geo(0.25 * 1.5, 0.0, grid40)
    assert project(point, grid40) == (1, 2)


def test_project_unproject_round_trip() -> None:
    grid = make_grid(400, 400)
    rng = np.random.default_rng(3)
    worst = 0
    for i, j in rng.integers(1, 401, size=(1000, 2)):
        back = project(unproject((int(i), int(j)), grid), grid)
        worst = max(worst, abs(back[0] - i), abs(back[1] - j))
    assert worst <= 1


def test_projection_matches_equirectangular_formula(grid40) -> None:
    east, north = to_metres(to_geo(3.0, 4.0, grid40), grid40)
    assert east == pytest.approx(3.0, abs=1e-6)
    assert north == pytest.approx(4.0, abs=1e-6)


def test_vectorised_projection_matches_pointwise(grid40) -> None:
    points = [to_geo(e, n, grid40) for e, n in ((0.0, 0.0), (3.0, 4.0), (9.9, 0.1), (-2.0, 12.5))]
    east, north = lonlat_to_metres([p.lon for p in points], [p.lat for p in points], grid40)
    for k, p in enumerate(points):
        assert (east[k], north[k]) == pytest.approx(to_metres(p, grid40), abs=1e-9)


def test_out_of_footprint_names_coordinate(grid40) -> None:
    point = to_geo(-1.0, 2.0, grid40)
    with pytest.raises(OutOfGridError, match="lat="):
        project(point, grid40)


# ── rays ──

def test_axis_aligned_crossing() -> None:
    hit = crossing_point(_ray("a", (0.0, 0.0), 90.0), _ray("b", (5.0, 5.0), 180.0))
    east, north, t, s = hit
    assert east == pytest.approx(5.0)
    assert north == pytest.approx(0.0, abs=1e-9)
    assert t == pytest.approx(5.0)
    assert s == pytest.approx(5.0)


def test_intersection_carries_ray_evidence() -> None:
    grid = make_grid(200, 200)
    a = _ray("a", (1.1, 1.1), 90.0, confidence=0.8, depth=4.0)
    b = _ray("b", (6.1, 6.1), 180.0, confidence=0.7, depth=6.0)
    inter = ray_pair_intersection(a, b, grid)
    assert inter.pixel == (5, 25)
    assert (inter.c1, inter.c2, inter.d1, inter.d2) == (0.8, 0.7, 4.0, 6.0)
    assert inter.delta1 == pytest.approx(5.0)
    assert inter.delta2 == pytest.approx(5.0)


def test_parallel_rays_do_not_cross() -> None:
    assert crossing_point(_ray("a", (0.0, 0.0), 0.0), _ray("b", (1.0, 0.0), 0.0)) is None


def test_crossing_beyond_range_is_dropped() -> None:
    assert crossing_point(_ray("a", (0.0, 0.0), 90.0), _ray("b", (30.0, 5.0), 180.0)) is None


def test_backward_crossing_is_dropped() -> None:
    # the lines meet at (5, 0), behind camera b
    assert crossing_point(_ray("a", (0.0, 0.0), 90.0), _ray("b", (5.0, 5.0), 0.0)) is None


def test_same_camera_pair_is_rejected() -> None:
    with pytest.raises(PreconditionError):
        crossing_point(_ray("a", (0.0, 0.0), 90.0), _ray("a", (5.0, 5.0), 180.0))


def test_intersection_is_symmetric() -> None:
    grid = make_grid(200, 200)
    a = _ray("a", (1.0, 2.0), 60.0, confidence=0.8, depth=4.0)
    b = _ray("b", (9.0, 1.0), 330.0, confidence=0.6, depth=7.0)
    ab = ray_pair_intersection(a, b, grid)
    ba = ray_pair_intersection(b, a, grid)
    assert ab is not None and ba is not None
    assert ab.pixel == ba.pixel
    assert (ab.c1, ab.d1, ab.c2, ab.d2) == (ba.c2, ba.d2, ba.c1, ba.d1)
    assert ab.delta1 == pytest.approx(ba.delta2)
    assert ab.delta2 == pytest.approx(ba.delta1)


def test_crossing_outside_grid_is_dropped() -> None:
    grid = make_grid(8, 8)  # 2 m square
    assert ray_pair_intersection(_ray("a", (0.5, 0.5), 90.0), _ray("b", (5.0, 5.0), 180.0), grid) is None


def test_all_intersections_empty_and_single(grid40) -> None:
    assert all_intersections([], grid40) == []
    rays = [_ray("a", (1.0, 1.0), 90.0), _ray("b", (6.0, 6.0), 180.0)]
    assert len(all_intersections(rays, grid40)) == 1


def test_all_intersections_counts_every_pair() -> None:
    grid = make_grid(80, 80)
    centre = np.array([10.0, 10.0])
    rays = []
    for k, theta in enumerate(range(0, 150, 25)):
        b = math.radians(theta)
        origin = centre + 5.0 * np.array([math.sin(b), math.cos(b)])
        rays.append(_ray(f"cam{k}", tuple(origin), (theta + 180.0) % 360.0))
    k = len(rays)
    found = all_intersections(rays, grid)
    assert len(found) == k * (k - 1) // 2
    assert [f.pixel for f in found] == sorted(f.pixel for f in found)


def test_all_intersections_skips_same_camera(grid40) -> None:
    rays = [_ray("a", (1.0, 1.0), 90.0), _ray("a", (6.0, 6.0), 180.0)]
    assert all_intersections(rays, grid40) == []


def test_detections_to_rays(grid40) -> None:
    cam = Camera("cam0", to_geo(2.0, 3.0, grid40))
    rays = detections_to_rays([Detection("cam0", 370.0, 4.0, 0.9)], [cam], grid40)
    assert rays[0].origin == pytest.approx((2.0, 3.0), abs=1e-6)
    assert rays[0].bearing == pytest.approx(10.0)
    assert rays[0].depth == 4.0
    with pytest.raises(DataError, match="unknown camera"):
        detections_to_rays([Detection("ghost", 0.0, 4.0, 0.9)], [cam], grid40)


# ── discs ──

def test_disc_pixel_counts(grid40) -> None:
    assert len(disc_pixels((20, 20), 1, grid40)) == 5
    assert len(disc_pixels((1, 1), 1, grid40)) == 3
    assert len(disc_pixels((20, 20), 5, grid40)) == 81


def test_disc_pixels_match_brute_force_and_nest() -> None:
    grid = make_grid(41, 41)
    centre = (21, 21)
    previous = set()
    for r in range(1, 11):
        expected = sum(1 for a in range(-r, r + 1) for b in range(-r, r + 1) if a * a + b * b <= r * r)
        pixels = disc_pixels(centre, r, grid)
        assert len(pixels) == expected
        assert previous <= pixels
        previous = pixels


def test_disc_pixels_rejects_zero_radius(grid40) -> None:
    with pytest.raises(PreconditionError):
        disc_pixels((5, 5), 0, grid40)


def test_overlap_closed_cases() -> None:
    assert disc_overlap_area((5, 5), 2, (5, 5), 2) == pytest.approx(4 * math.pi)
    assert disc_overlap_area((0, 0), 3, (10, 0), 3) == 0.0
    assert disc_overlap_area((0, 0), 1, (1, 0), 1) == pytest.approx(1.2284, abs=1e-4)


def test_overlap_boundaries_are_exact() -> None:
    # internally tangent: contained; externally tangent: disjoint
    assert disc_overlap_area((0, 0), 5, (3, 0), 2) == math.pi * 4
    assert disc_overlap_area((0, 0), 3, (6, 0), 3) == 0.0
    assert disc_overlap_area((0, 0), 2, (0, 1), 6) == math.pi * 4


def test_overlap_properties() -> None:
    assert disc_overlap_area((0, 0), 3, (2, 1), 4) == pytest.approx(disc_overlap_area((2, 1), 4, (0, 0), 3))
    assert disc_overlap_area((0, 0), 3, (2, 1), 4) == pytest.approx(disc_overlap_area((7, 7), 3, (9, 8), 4))
    areas = overlap_area(3.0, 4.0, np.linspace(0.0, 8.0, 200))
    assert np.all(np.diff(areas) <= 1e-12)
    assert areas.max() <= math.pi * 9 + 1e-12


def test_overlap_rejects_nonpositive_radius() -> None:
    with pytest.raises(PreconditionError):
        disc_overlap_area((0, 0), 0, (1, 1), 2)


def test_overlap_matches_monte_carlo() -> None:
    rng = np.random.default_rng(11)
    n = 1_000_000
    for _ in range(50):
        r1, r2 = rng.uniform(1.0, 10.0, size=2)
        x2 = rng.uniform(-12.0, 12.0, size=2)
        exact = disc_overlap_area((0, 0), r1, tuple(x2), r2)

        pts = rng.uniform(-r1, r1, size=(n, 2))
        inside = (np.sum(pts ** 2, axis=1) <= r1 ** 2) & (np.sum((pts - x2) ** 2, axis=1) <= r2 ** 2)
        box = (2 * r1) ** 2
        estimate = box * inside.mean()
        p = exact / box
        stderr = box * math.sqrt(p * (1 - p) / n)
        assert abs(estimate - exact) <= 4 * stderr + 1e-9
