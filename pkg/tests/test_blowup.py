import numpy as np
import pytest

from mindisk.blowup import (
    INTRINSIC,
    INTRINSIC_NOTE,
    concentration_function,
    find_blowup_pair,
    initial_separation_check,
    verify_pair,
)
from mindisk.errors import BallEscapeError, CurvatureTooSmallError, MismatchError, UsageError
from mindisk.families import plane_disk
from mindisk.multigraph import helicoid_sheet


def test_helicoid_pair_sits_on_the_axis(small_helicoid_disk):
    pair, report = find_blowup_pair(small_helicoid_disk, 5.0)
    assert pair.y_index == small_helicoid_disk.center_index
    assert pair.s == pytest.approx(5.0 / np.sqrt(2.0e4), rel=1e-9)
    assert report.passed
    assert report.margins["sup_bound"] == pytest.approx(0.75, rel=1e-6)
    assert report.margins["half_distance"] > 0.4
    assert report.margins["center_F"] == pytest.approx(199.0, rel=1e-6)


def test_concentration_vanishes_on_the_boundary(small_helicoid_disk):
    F = concentration_function(small_helicoid_disk)
    assert F[small_helicoid_disk.boundary].max() <= 1e-12 * F.max()
    _, report = find_blowup_pair(small_helicoid_disk, 5.0)
    assert report.boundary_F_max <= 1e-12 * F.max()


@pytest.mark.parametrize("k", [2.0, 0.5])
def test_pair_is_scale_covariant(small_helicoid_disk, k):
    pair, report = find_blowup_pair(small_helicoid_disk, 5.0)
    scaled_pair, scaled_report = find_blowup_pair(small_helicoid_disk.rescaled(k), 5.0)
    assert scaled_pair.y_index == pair.y_index
    assert scaled_pair.s == pytest.approx(k * pair.s, rel=1e-12)
    for name, value in report.margins.items():
        assert scaled_report.margins[name] == pytest.approx(value, rel=1e-9, abs=1e-12)


def test_intrinsic_ball_is_noted(small_helicoid_disk):
    _, report = find_blowup_pair(small_helicoid_disk, 5.0, mode=INTRINSIC)
    assert INTRINSIC_NOTE in report.notes
    assert report.margins["sup_bound"] >= 0.0
    assert "half_distance" not in report.margins


def test_intrinsic_ball_reaching_the_boundary(small_helicoid_disk):
    with pytest.raises(BallEscapeError):
        find_blowup_pair(small_helicoid_disk, 5.0, mode=INTRINSIC, multiple=100.0)


def test_flat_disk_has_too_little_curvature():
    with pytest.raises(CurvatureTooSmallError) as excinfo:
        find_blowup_pair(plane_disk(1.0, n=32), 5.0)
    assert excinfo.value.ratio == 0.0
    assert excinfo.value.exit_code == 65


def test_bad_constants(small_helicoid_disk):
    with pytest.raises(UsageError):
        find_blowup_pair(small_helicoid_disk, 0.0)
    pair, _ = find_blowup_pair(small_helicoid_disk, 5.0)
    with pytest.raises(UsageError):
        verify_pair(small_helicoid_disk, type(pair)(pair.y_index, pair.y, pair.s, pair.C, "geodesic"))


def test_initial_separation_ratio(small_helicoid_disk):
    pair, _ = find_blowup_pair(small_helicoid_disk, 5.0)
    g = helicoid_sheet(1, pair.s, 10.0 * pair.s, 2, scale=0.01)
    report = initial_separation_check(small_helicoid_disk, pair, g, window=(1.0, 2.0))
    expected = 2.0 * np.pi * 0.01 / pair.s
    assert report.min_ratio == pytest.approx(expected, rel=1e-9)
    assert report.within_window


def test_initial_separation_needs_matching_scale(small_helicoid_disk):
    pair, _ = find_blowup_pair(small_helicoid_disk, 5.0)
    g = helicoid_sheet(1, 2.0 * pair.s, 10.0 * pair.s, 2, scale=0.01)
    with pytest.raises(MismatchError):
        initial_separation_check(small_helicoid_disk, pair, g)
