from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindisk.errors import ImmersionError, InvalidRulingError, InvalidScaleError, UsageError
from mindisk.surface_core import (
    ANALYTIC,
    DIFFERENCE,
    ParamPatch,
    area,
    bump_field,
    first_variation,
    fundamental_forms,
    geometry_table,
    graph_from_function,
    graph_preset,
    is_stable,
    jacobi_smallest_eigenvalues,
    make_catenoid,
    make_helicoid,
    make_ruled,
    mesh_triangles,
    parameter_axis,
    rescale,
    second_variation,
)


def test_analytic_helicoid_and_catenoid_are_minimal(helicoid_patch, catenoid_patch):
    assert fundamental_forms(helicoid_patch).max_abs_H <= 1e-10
    assert fundamental_forms(catenoid_patch).max_abs_H <= 1e-10


def test_helicoid_closed_form_curvature(helicoid_patch):
    geom = fundamental_forms(helicoid_patch)
    S = np.meshgrid(helicoid_patch.s, helicoid_patch.t, indexing="ij")[0]
    expected_K = -1.0 / (1.0 + S ** 2) ** 2
    np.testing.assert_allclose(geom.K, expected_K, rtol=1e-10)
    np.testing.assert_allclose(geom.A2, -2.0 * expected_K, rtol=1e-10)


def test_curvature_identity_on_minimal_patches(helicoid_patch, catenoid_patch):
    for patch in (helicoid_patch, catenoid_patch):
        geom = fundamental_forms(patch)
        assert np.all(np.abs(geom.A2 + 2.0 * geom.K) <= 1e-8 * (1.0 + np.abs(geom.K)))
        assert geom.identities_hold()


def test_catenoid_closed_form_curvature(catenoid_patch):
    geom = fundamental_forms(catenoid_patch)
    S = np.meshgrid(catenoid_patch.s, catenoid_patch.t, indexing="ij")[0]
    np.testing.assert_allclose(geom.A2, 2.0 / np.cosh(S) ** 4, rtol=1e-10)
    assert geom.A2[16, 0] == pytest.approx(2.0, rel=1e-12)


def test_helicoid_node_positions(helicoid_patch):
    # s = 1 is the last s node, t = pi/2 is t node 8 of 32
    np.testing.assert_allclose(helicoid_patch.positions[32, 8], [0.0, 1.0, np.pi / 2.0], atol=1e-15)


def test_discriminant_is_nonnegative(paraboloid_patch):
    geom = fundamental_forms(paraboloid_patch)
    assert np.all(geom.H ** 2 - 4.0 * geom.K >= -1e-8 * (1.0 + np.abs(geom.K)))
    assert geom.identities_hold()


def test_identity_check_catches_wrong_sign_curvature(helicoid_patch):
    geom = fundamental_forms(helicoid_patch)
    assert not replace(geom, K=-geom.K).identities_hold()


def test_saddle_ruled_patch_has_negative_curvature():
    # (t, s, s t) is the saddle x3 = x1 x2
    t = parameter_axis((-1.0, 1.0), 16)
    zeros, ones = np.zeros_like(t), np.ones_like(t)
    directrix = np.stack((t, zeros, zeros), axis=1)
    direction = np.stack((zeros, ones, t), axis=1)
    geom = fundamental_forms(make_ruled(directrix, direction, t, (-1.0, 1.0), 16))
    assert np.all(geom.K < 0.0)
    assert geom.K.max() <= -0.1


def test_flat_squares_have_unit_area():
    assert area(graph_preset("zero", 32, 32, (0.0, 1.0), (0.0, 1.0))) == pytest.approx(1.0, rel=1e-12)
    lifted = graph_from_function(lambda X, Y: np.full_like(X, 5.0), (0.0, 1.0), (0.0, 1.0), 16, 16)
    assert area(lifted) == pytest.approx(1.0, rel=1e-12)


def test_helicoid_area_matches_quadrature():
    patch = make_helicoid((0.0, 1.0), (0.0, 2.0 * np.pi), 128, 128, ANALYTIC)
    # 2 pi times the integral of sqrt(1 + s^2) over [0, 1]
    exact = np.pi * (np.sqrt(2.0) + np.arcsinh(1.0))
    assert area(patch) == pytest.approx(exact, rel=1e-5)


@pytest.mark.parametrize("make", [make_catenoid, make_helicoid])
def test_difference_mode_error_is_second_order(make):
    # compare at the interior nodes of the coarsest grid, shared by all three grids
    errors = []
    for k, n in enumerate((64, 128, 256)):
        patch = make((-1.0, 1.0), (0.0, 2.0 * np.pi), n, n, DIFFERENCE)
        H = fundamental_forms(patch).H
        stride = 2 ** k
        shared = H[::stride, ::stride][1:-1, 1:-1]
        errors.append(np.max(np.abs(shared)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.9)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(min_value=0.1, max_value=10.0))
def test_rescaling_scales_curvature(a):
    patch = make_helicoid((-1.0, 1.0), (0.0, 2.0 * np.pi), 16, 16, ANALYTIC)
    base = fundamental_forms(patch)
    scaled = fundamental_forms(rescale(patch, a))
    np.testing.assert_allclose(scaled.A2 * a * a, base.A2, rtol=1e-9, atol=1e-12)
    assert area(rescale(patch, a)) == pytest.approx(a * a * area(patch), rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(offset=st.tuples(*[st.floats(min_value=-10.0, max_value=10.0)] * 3))
def test_translation_leaves_curvature_unchanged(offset):
    patch = make_catenoid((-1.0, 1.0), (0.0, 2.0 * np.pi), 32, 32, DIFFERENCE)
    moved = ParamPatch(patch.s, patch.t, patch.positions + np.asarray(offset), DIFFERENCE)
    np.testing.assert_allclose(
        fundamental_forms(moved).A2, fundamental_forms(patch).A2, rtol=0.0, atol=1e-8
    )


def test_non_positive_scale_is_rejected():
    with pytest.raises(InvalidScaleError):
        make_helicoid(scale=0.0)
    with pytest.raises(InvalidScaleError):
        rescale(make_catenoid(n_s=8, n_t=8), -1.0)


def test_degenerate_patch_raises_immersion_error():
    s = parameter_axis((0.0, 1.0), 8)
    t = parameter_axis((0.0, 1.0), 8)
    S = np.meshgrid(s, t, indexing="ij")[0]
    positions = np.stack((S, np.zeros_like(S), np.zeros_like(S)), axis=-1)
    with pytest.raises(ImmersionError) as excinfo:
        fundamental_forms(ParamPatch(s, t, positions, DIFFERENCE))
    assert excinfo.value.node == (0, 0)


def test_ruled_helicoid_matches_helicoid():
    t = parameter_axis((0.0, np.pi), 16)
    zeros = np.zeros_like(t)
    directrix = np.stack((zeros, zeros, t), axis=1)
    direction = np.stack((np.cos(t), np.sin(t), zeros), axis=1)
    ruled = make_ruled(directrix, direction, t, (0.0, 1.0), 16)
    helicoid = make_helicoid((0.0, 1.0), (0.0, np.pi), 16, 16, DIFFERENCE)
    np.testing.assert_allclose(ruled.positions, helicoid.positions, atol=1e-15)


def test_zero_ruling_is_rejected():
    t = parameter_axis((0.0, 1.0), 4)
    directrix = np.zeros((t.size, 3))
    direction = np.tile([1.0, 0.0, 0.0], (t.size, 1))
    direction[2] = 0.0
    with pytest.raises(InvalidRulingError):
        make_ruled(directrix, direction, t)


def test_first_variation_vanishes_on_helicoid():
    patch = make_helicoid((0.0, 1.0), (0.0, 2.0 * np.pi), 128, 128, ANALYTIC)
    result = first_variation(patch, bump_field(patch, (0.5, np.pi), 0.2))
    assert abs(result.numeric_derivative) <= 1e-6
    assert abs(result.integral_phi_H) <= 1e-6


@pytest.mark.parametrize("center", [(0.0, 0.0), (0.3, -0.2), (-0.4, 0.3)])
def test_first_variation_matches_mean_curvature_on_paraboloid(paraboloid_patch, center):
    result = first_variation(paraboloid_patch, bump_field(paraboloid_patch, center, 0.3))
    assert result.integral_phi_H < 0.0
    assert result.agrees


def test_variation_field_must_vanish_near_boundary(paraboloid_patch):
    phi = bump_field(paraboloid_patch, (0.0, 0.0), 0.3)
    values = np.array(phi.phi)
    values[0, 0] = 1.0
    with pytest.raises(UsageError):
        first_variation(paraboloid_patch, type(phi)(values))


def test_second_variation_of_plane_is_dirichlet_energy():
    patch = graph_preset("zero", 64, 64)
    result = second_variation(patch, bump_field(patch, (0.0, 0.0), 0.5))
    assert result.jacobi_form > 0.0
    assert result.numeric_second_derivative == pytest.approx(result.jacobi_form, rel=2e-2)


def test_second_variation_on_helicoid_matches_jacobi_form():
    patch = make_helicoid((0.0, 1.0), (0.0, 1.0), 64, 64, ANALYTIC)
    result = second_variation(patch, bump_field(patch, (0.5, 0.5), 0.3))
    assert result.numeric_second_derivative == pytest.approx(result.jacobi_form, rel=2e-2)


def test_flat_square_has_dirichlet_spectrum():
    patch = graph_preset("zero", 64, 64, (0.0, 1.0), (0.0, 1.0))
    smallest = jacobi_smallest_eigenvalues(patch)[0]
    assert smallest == pytest.approx(2.0 * np.pi ** 2, rel=2e-2)


def test_catenoid_graph_is_stable():
    patch = graph_preset("catenoid-graph", 32, 32)
    assert jacobi_smallest_eigenvalues(patch)[0] >= -1e-4
    assert is_stable(patch)


def test_unknown_graph_preset():
    with pytest.raises(UsageError):
        graph_preset("enneper")


def test_geometry_table_layout(helicoid_patch):
    table = geometry_table(helicoid_patch)
    assert list(table.columns) == ["s", "t", "x", "y", "z", "H", "K", "A2"]
    assert len(table) == helicoid_patch.vertex_count
    assert mesh_triangles(helicoid_patch).shape == (2 * 32 * 32, 3)
