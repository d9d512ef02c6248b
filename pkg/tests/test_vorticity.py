"""Vorticity inversion: periodic spectral route vs whole-space quadrature.

The anchor oracles are a one-mode shear sheet whose inversion is a one-line
closed form, and the far-field/near-field behaviour of the Biot-Savart
integral for a compact bump (dipole decay |u| ~ |x|^-3, agreement with the
periodic inversion once the box dwarfs the support).
"""

import numpy as np
import pytest

from boxflow.errors import DataError, DomainTooSmallError, SupportError, UsageError
from boxflow.initial_data import BumpSpec, bump_vorticity
from boxflow.norms import l2_norm, relative_divergence
from boxflow.spectral_core import BoxGrid, Field, curl, gradient
from boxflow.vorticity import (
    VorticityField,
    biot_savart_r3,
    curl_identity_report,
    curl_inv_periodic,
    lplq_uniformity_report,
    rehost_vorticity,
)

from conftest import div_free_field, smooth_field, taylor_green


def sine_sheet(alpha, n, c=1.3):
    """omega = (0, 0, c sin(pi x / alpha)) — periodic, div-free, mean-free.

    Not compactly supported, so the support check is waived and the radius
    is declarative (just under the box so the inversion accepts it).
    """
    grid = BoxGrid(alpha, n)
    x, _, _ = grid.meshgrid()
    om = np.zeros((3, n, n, n))
    om[2] = c * np.sin(np.pi * x / alpha)
    return grid, VorticityField(
        Field.from_physical(grid, om), 0.9 * alpha, support_tol=np.inf
    )


# ---------------------------------------------------------------- inversion


def test_sine_sheet_inversion_matches_closed_form():
    # curl(0, -(c alpha/pi) cos(pi x/alpha), 0) = (0, 0, c sin(pi x/alpha))
    alpha, c = 2.0, 1.3
    grid, w = sine_sheet(alpha, 32, c)
    u = curl_inv_periodic(w)
    x, _, _ = grid.meshgrid()
    expected = np.zeros((3, 32, 32, 32))
    expected[1] = -(c * alpha / np.pi) * np.cos(np.pi * x / alpha)
    assert np.abs(u.physical - expected).max() < 1e-12


def test_zero_vorticity_inverts_to_zero():
    grid = BoxGrid(2.0, 16)
    w = VorticityField(Field.from_physical(grid, np.zeros((3, 16, 16, 16))), 0.5)
    assert w.div_rel == 0.0 and w.support_leak_rel == 0.0
    assert np.all(curl_inv_periodic(w).physical == 0.0)


def test_curl_of_inversion_recovers_bump():
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 32))
    u = curl_inv_periodic(w)
    err = l2_norm(curl(u) - w.omega) / l2_norm(w.omega)
    assert err < 1e-12


def test_inversion_is_divergence_free_and_mean_free():
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 32))
    u = curl_inv_periodic(w)
    assert relative_divergence(u) < 1e-13
    assert np.abs(u.mean_value()).max() < 1e-14


def test_support_touching_box_rejected():
    _, w = sine_sheet(2.0, 16)
    too_big = VorticityField(w.omega, 2.0, support_tol=np.inf)
    with pytest.raises(DomainTooSmallError):
        curl_inv_periodic(too_big)


# --------------------------------------------------------------- validation


def test_divergent_field_rejected(rng):
    grid = BoxGrid(2.0, 16)
    f = smooth_field(grid, rng, rank="vector")  # not projected
    with pytest.raises(DataError, match="divergence"):
        VorticityField(f, 0.9 * grid.alpha, support_tol=np.inf)


def test_mean_carrying_field_rejected():
    grid = BoxGrid(2.0, 16)
    f = Field.from_physical(grid, np.ones((3, 16, 16, 16)))  # div = 0, mean = 1
    with pytest.raises(DataError, match="mean"):
        VorticityField(f, 0.9 * grid.alpha, support_tol=np.inf)


def test_leaky_declared_support_rejected():
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 32))
    with pytest.raises(SupportError):
        VorticityField(w.omega, 0.2)


def test_bad_arguments_rejected(rng):
    grid = BoxGrid(2.0, 16)
    with pytest.raises(UsageError):
        VorticityField(smooth_field(grid, rng), 0.5)  # scalar
    vec = Field.from_physical(grid, np.zeros((3, 16, 16, 16)))
    for radius in (0.0, -1.0, np.inf):
        with pytest.raises(UsageError):
            VorticityField(vec, radius)


# -------------------------------------------------------------- Biot-Savart


def test_biot_savart_zero_field_zero_velocity():
    grid = BoxGrid(2.0, 16)
    w = VorticityField(Field.from_physical(grid, np.zeros((3, 16, 16, 16))), 0.5)
    res = biot_savart_r3(w, [[0.7, 0.0, 0.0], [0.0, 1.1, 0.3]])
    assert np.all(res.velocities == 0.0)


def test_biot_savart_flags_points_near_sources():
    grid = BoxGrid(2.0, 32)
    w = bump_vorticity(BumpSpec(0.5), grid)
    h = grid.h
    pts = [
        [0.0, 0.0, 0.0],          # on a source lattice point (self-hit)
        [h / 4.0, 0.0, 0.0],      # within h/2 of a source
        [1.5, 0.0, 0.0],          # a full unit away from the support
    ]
    res = biot_savart_r3(w, pts)
    assert res.under_resolved.tolist() == [True, True, False]
    assert np.all(np.isfinite(res.velocities))


def test_biot_savart_far_field_dipole_decay():
    # No net vorticity, so the far field is the dipole of the stream
    # potential: |u| ~ |x|^-3, giving ratio 8 per distance doubling.
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 48))
    directions = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0] / np.sqrt(3.0),
            [1.0 / 3.0, -2.0 / 3.0, 2.0 / 3.0],
        ]
    )
    near = biot_savart_r3(w, 2.0 * directions)
    far = biot_savart_r3(w, 4.0 * directions)
    assert not near.under_resolved.any() and not far.under_resolved.any()
    ratios = np.linalg.norm(near.velocities, axis=1) / np.linalg.norm(
        far.velocities, axis=1
    )
    assert np.all((7.7 < ratios) & (ratios < 8.3))


def test_biot_savart_matches_periodic_inversion():
    # Support radius 0.5 in a half-width-4 box: the nearest periodic image
    # sits 8 away, so the whole-space quadrature and the periodic inversion
    # should agree to the image-contamination level (~1.5e-2 at |x| = 1).
    grid = BoxGrid(4.0, 128)
    w = bump_vorticity(BumpSpec(0.5), grid)
    u = curl_inv_periodic(w)
    rng = np.random.default_rng(7)
    raw = rng.uniform(-1.0, 1.0, size=(60, 3))
    rr = np.linalg.norm(raw, axis=1)
    raw = raw[(rr >= 0.6) & (rr <= 1.0)][:10]
    assert len(raw) == 10
    idx = np.round((raw + grid.alpha) / grid.h).astype(int) % grid.N
    lattice_pts = np.stack(
        [grid.x1d[idx[:, 0]], grid.x1d[idx[:, 1]], grid.x1d[idx[:, 2]]], axis=1
    )
    res = biot_savart_r3(w, lattice_pts)
    assert not res.under_resolved.any()
    periodic = u.physical[:, idx[:, 0], idx[:, 1], idx[:, 2]].T
    rel = np.linalg.norm(res.velocities - periodic, axis=1) / np.linalg.norm(
        periodic, axis=1
    )
    assert rel.max() < 2e-2


def test_biot_savart_rejects_bad_query_shape():
    grid = BoxGrid(2.0, 16)
    w = VorticityField(Field.from_physical(grid, np.zeros((3, 16, 16, 16))), 0.5)
    with pytest.raises(UsageError):
        biot_savart_r3(w, [0.1, 0.2, 0.3])  # (3,) instead of (M, 3)


# ------------------------------------------------------------ curl identity


def test_curl_identity_for_div_free_fields(rng):
    for u in (taylor_green(BoxGrid(2.0, 24)), div_free_field(BoxGrid(1.0, 24), rng)):
        rec = curl_identity_report(u)
        assert rec.entries["rel_diff"] < 1e-12
        assert not rec.flags["not_applicable"]


def test_curl_identity_zero_field():
    u = Field.from_physical(BoxGrid(2.0, 16), np.zeros((3, 16, 16, 16)))
    rec = curl_identity_report(u)
    assert rec.entries["rel_diff"] == 0.0
    assert not rec.flags["not_applicable"]


def test_curl_identity_flags_divergent_field(rng):
    # A gradient field is curl-free but certainly not divergence-free.
    phi = smooth_field(BoxGrid(2.0, 24), rng)
    rec = curl_identity_report(gradient(phi))
    assert rec.flags["not_applicable"]
    assert rec.entries["rel_div"] > 1e-8
    assert rec.entries["grad_norm"] > 0.0


# -------------------------------------------------------------- uniformity


def test_uniformity_ratios_stay_bounded():
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 32))
    rows = lplq_uniformity_report(w, 6.0 / 5.0, (4.0, 2.0, 3.0))
    assert [r.alpha for r in rows] == [2.0, 3.0, 4.0]
    ratios = [r.ratio for r in rows]
    assert all(np.isfinite(r) and r > 0 for r in ratios)
    assert not any(r.degenerate for r in rows)
    # measured spread across these boxes is ~0.4%; no growth with alpha
    assert max(ratios) / min(ratios) < 1.2


def test_uniformity_near_critical_exponent():
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 32))
    rows = lplq_uniformity_report(w, 24.0 / 23.0, (2.0, 4.0))
    assert all(np.isfinite(r.ratio) and r.ratio > 0 for r in rows)


def test_uniformity_zero_field_degenerate():
    grid = BoxGrid(2.0, 16)
    w = VorticityField(Field.from_physical(grid, np.zeros((3, 16, 16, 16))), 0.5)
    rows = lplq_uniformity_report(w, 6.0 / 5.0, (2.0,))
    assert rows[0].degenerate and np.isnan(rows[0].ratio)


def test_uniformity_exponent_domain():
    grid = BoxGrid(2.0, 16)
    w = VorticityField(Field.from_physical(grid, np.zeros((3, 16, 16, 16))), 0.5)
    for p in (1.0, 3.0, 3.5):
        with pytest.raises(UsageError):
            lplq_uniformity_report(w, p, (2.0,))


# ---------------------------------------------------------------- rehosting


def test_rehost_preserves_samples_and_divergence():
    src = BoxGrid(2.0, 32)
    w = bump_vorticity(BumpSpec(0.5), src)
    target = BoxGrid(4.0, 64)
    moved = rehost_vorticity(w, target)
    assert moved.grid is target
    assert moved.support_radius == w.support_radius
    assert moved.div_rel < 1e-12
    # samples drift only by the projection's truncation-level correction
    off = (target.N - src.N) // 2
    inner = (slice(None),) + (slice(off, off + src.N),) * 3
    drift = np.abs(moved.omega.physical[inner] - w.omega.physical).max()
    assert drift < 2e-3 * np.abs(w.omega.physical).max()


def test_rehost_too_small_target_rejected():
    w = bump_vorticity(BumpSpec(0.5), BoxGrid(2.0, 32))
    with pytest.raises(DomainTooSmallError):
        rehost_vorticity(w, BoxGrid(0.5, 8))
