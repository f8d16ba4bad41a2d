import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindisk.errors import HypothesisError, InvalidRegionError, NonGraphError, UsageError
from mindisk.families import catenoid_disk, constant_planes, helicoid_disk, plane_disk
from mindisk.structure_verify import (
    blowup_set,
    cone_membership,
    cone_property_check,
    foliation_convergence,
    lipschitz_parameterize,
    one_sided_check,
    probe_grid,
    two_graph_decomposition,
    unwrap_angles,
)
from mindisk.disk_sample import DiskSample
from mindisk.surface_core import graph_from_function, scherk_height

coordinates = st.floats(min_value=-10.0, max_value=10.0)
points = st.tuples(coordinates, coordinates, coordinates)


@pytest.mark.parametrize(
    "p, x, delta, expected",
    [
        ((1.0, 2.0, 3.0), (1.0, 2.0, 3.0), 1.0, 0.0),
        ((0.0, 0.0, 1.0), (0.0, 0.0, 0.0), 3.0, 1.0),
        ((1.0, 0.0, 1.0), (0.0, 0.0, 0.0), 2.0, -3.0),
    ],
)
def test_cone_membership_examples(p, x, delta, expected):
    assert cone_membership(p, x, delta) == expected


def test_cone_aperture_must_be_positive():
    with pytest.raises(UsageError):
        cone_membership((0.0, 0.0, 1.0), (0.0, 0.0, 0.0), 0.0)


@settings(max_examples=50)
@given(p=points, x=points, shift=coordinates, delta=st.floats(min_value=0.1, max_value=10.0))
def test_cone_membership_ignores_vertical_shifts(p, x, shift, delta):
    moved = cone_membership((p[0], p[1], p[2] + shift), (x[0], x[1], x[2] + shift), delta)
    assert moved == pytest.approx(cone_membership(p, x, delta), rel=1e-9, abs=1e-9)


@settings(max_examples=50)
@given(p=points, x=points, a=st.floats(min_value=0.1, max_value=10.0))
def test_cone_membership_scales_quadratically(p, x, a):
    scaled = cone_membership(np.multiply(p, a), np.multiply(x, a), 1.5)
    assert scaled == pytest.approx(a * a * cone_membership(p, x, 1.5), rel=1e-9, abs=1e-9)


def axis_samples():
    z = np.arange(-100, 101) / 100.0
    return np.stack((np.zeros_like(z), np.zeros_like(z), z), axis=1)


def test_vertical_axis_has_the_cone_property():
    report = cone_property_check(axis_samples(), delta=1.0, epsilon=0.01)
    assert report.passed
    assert report.lipschitz_estimate == 0.0
    assert report.exempt_levels == [-1.0, 1.0]


def test_outlier_breaks_the_cone_property():
    P = np.concatenate((axis_samples(), [[1.0, 0.0, 0.0]]))
    report = cone_property_check(P, delta=1.0, epsilon=0.01)
    assert not report.cone_condition
    assert report.negative_count > 0
    assert report.lipschitz_estimate == float("inf")
    assert report.to_dict()["lipschitz_estimate"] == "inf"


def test_gap_in_levels_breaks_accumulation():
    P = axis_samples()
    P = P[np.abs(P[:, 2] - 0.5) > 0.05]
    report = cone_property_check(P, delta=1.0, epsilon=0.01)
    assert report.cone_condition
    assert not report.accumulation_condition


def test_tilted_line_is_a_lipschitz_curve():
    t = np.arange(-50, 51) / 50.0
    P = np.stack((0.5 * t, np.zeros_like(t), t), axis=1)
    curve = lipschitz_parameterize(P)
    assert curve.lipschitz == pytest.approx(0.5, rel=1e-9)
    assert len(curve.levels) == t.size
    assert cone_property_check(curve.centers, delta=1.0, epsilon=0.02).passed
    assert curve.within_bound
    assert curve.to_dict()["within_bound"]


def test_narrow_cone_bound_is_exceeded():
    t = np.arange(-50, 51) / 50.0
    P = np.stack((0.5 * t, np.zeros_like(t), t), axis=1)
    curve = lipschitz_parameterize(P, delta=4.0, slack=0.0)
    assert not curve.within_bound
    assert curve.to_dict()["lipschitz_bound"] == 0.25
    assert curve.max_horizontal_offset == pytest.approx(0.5)


def test_two_clusters_at_one_level_are_not_a_graph():
    with pytest.raises(NonGraphError) as excinfo:
        lipschitz_parameterize([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert excinfo.value.clusters == 2


def test_probe_grid_is_seeded():
    a = probe_grid((-0.5, 0.5), 0.1, jitter=0.25, seed=3)
    b = probe_grid((-0.5, 0.5), 0.1, jitter=0.25, seed=3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (11 ** 3, 3)


def test_blowup_set_of_helicoids_is_the_axis(helicoid_sequence):
    S = blowup_set(helicoid_sequence)
    assert S.curvature_unbounded
    assert S.points.shape[0] == 11
    assert np.all(np.abs(S.points[:, :2]) <= S.probe_step)
    report = cone_property_check(S.points, delta=1.0, epsilon=S.probe_step)
    assert report.passed
    curve = lipschitz_parameterize(S.points)
    assert curve.max_horizontal_offset <= S.probe_step


def test_blowup_set_of_catenoids_holds_the_origin(catenoid_sequence):
    S = blowup_set(catenoid_sequence, burn_in=4)
    assert np.any(np.all(np.abs(S.points) <= 1e-12, axis=1))


def test_planes_have_empty_blowup_set():
    S = blowup_set(constant_planes(3, n=32))
    assert not S.curvature_unbounded
    assert S.to_dict()["points"] == []


def test_blowup_set_argument_checks():
    seq = constant_planes(2, n=16)
    with pytest.raises(UsageError):
        blowup_set(seq, thresholds=[4.0, 2.0])
    with pytest.raises(UsageError):
        blowup_set(seq, burn_in=2)


@pytest.mark.parametrize("n_per_turn", [32, 64])
def test_helicoid_splits_into_two_multigraphs(n_per_turn):
    a = 0.05
    disk = helicoid_disk(a, 1.0, n_per_turn=n_per_turn, half_count=n_per_turn, snap=False)
    census = two_graph_decomposition(disk)
    assert census.component_count == 2
    assert all(c.is_multigraph for c in census.components)
    assert not any(c.closed for c in census.components)
    np.testing.assert_allclose(census.separations, 2.0 * np.pi * a, rtol=1e-9)


def test_plane_census_is_one_component():
    assert two_graph_decomposition(plane_disk(1.0, n=64)).component_count == 1


def test_unwrap_detects_winding():
    angles = np.linspace(0.0, 2.0 * np.pi, 9)[:-1]
    theta = np.arctan2(np.sin(angles), np.cos(angles))
    path = np.array([[k, k + 1] for k in range(7)])
    lifted, consistent = unwrap_angles(theta, path)
    assert consistent
    np.testing.assert_allclose(lifted, angles, atol=1e-12)
    loop = np.concatenate((path, [[7, 0]]))
    assert not unwrap_angles(theta, loop)[1]


def lifted_scherk(k=0.05, n=128):
    patch = graph_from_function(
        lambda X, Y: scherk_height(X, Y, k) + 0.05, (-1.05, 1.05), (-1.05, 1.05), n, n
    )
    return DiskSample.from_patch(patch, (0.0, 0.0, 0.0), 1.0)


def test_gentle_graph_passes_one_sided_check():
    report = one_sided_check(lifted_scherk(), 0.5, 0.5)
    assert report.passed
    assert len(report.components) == 1
    assert report.components[0].is_graph


@pytest.mark.parametrize("scale", [0.5, 2.0])
def test_one_sided_check_is_scale_invariant(scale):
    report = one_sided_check(lifted_scherk().rescaled(scale), 0.5 * scale, 0.5)
    assert report.passed


def test_catenoid_neck_fails_one_sided_check():
    disk = catenoid_disk(0.01, 1.0).translated((0.0, 0.0, 0.1))
    report = one_sided_check(disk, 0.5, 0.5)
    assert not report.passed
    assert max(c.sup_A2_r0sq for c in report.components) > 1.0


def test_one_sided_hypotheses():
    with pytest.raises(HypothesisError):
        one_sided_check(plane_disk(1.0, n=32), 0.5, 0.5)
    raised = helicoid_disk(0.1, 0.3, n_per_turn=16, half_count=16).translated((0.0, 0.0, 0.5))
    with pytest.raises(HypothesisError):
        one_sided_check(raised, 0.5, 0.5)
    with pytest.raises(UsageError):
        one_sided_check(lifted_scherk(), 0.5, 0.0)


def test_helicoid_sheets_approach_the_foliation(helicoid_sequence):
    report = foliation_convergence(helicoid_sequence)
    distances = np.array(report.leaf_distance)
    scales = np.array(helicoid_sequence.scales)
    assert np.all(np.diff(distances) < 0)
    assert np.all(distances <= np.pi * scales)
    assert np.all(np.array(report.tilt) <= np.arctan(scales / 0.5) * (1.0 + 1e-9) + 1e-12)


def test_catenoids_collapse_with_multiplicity_two(catenoid_sequence):
    report = foliation_convergence(catenoid_sequence)
    assert report.multiplicity == 2


def test_flat_planes_are_already_leaves():
    report = foliation_convergence(constant_planes(3, n=64))
    assert report.leaf_distance == [0.0, 0.0, 0.0]
    assert report.tilt == [0.0, 0.0, 0.0]


def test_region_must_avoid_the_axis_tube():
    with pytest.raises(InvalidRegionError):
        foliation_convergence(constant_planes(1, n=16), rho_min=0.2)


def test_empty_region_is_not_a_pass():
    with pytest.raises(InvalidRegionError):
        foliation_convergence(constant_planes(2, n=32), rho_min=5.0, rho_max=6.0)


def test_every_rescaled_helicoid_has_two_components(helicoid_sequence):
    for disk in helicoid_sequence.samples:
        census = two_graph_decomposition(disk)
        assert census.component_count == 2
