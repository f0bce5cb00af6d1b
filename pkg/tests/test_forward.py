import math

import numpy as np
import pytest

from osmimaging.forward import (ScatterDataset, SingularInteractionError, SmallObject, add_awgn,
                                born_scattered, check_objects, foldy_lax_scattered)
from osmimaging.geometry import MU0, MediumParams, fresnel_geometry

from oracles import grad_green_oracle

CASE1 = [(0.07, 0.05), (-0.07, 0.0), (0.04, -0.06)]


@pytest.fixture(scope="module")
def geom():
    return fresnel_geometry()


def obj(center, radius=0.01, mu_rel=5.0):
    return SmallObject.relative(center, radius, mu_rel)


def test_no_objects_gives_zero_data(geom):
    ds = born_scattered([], MediumParams.from_ghz(4), geom)
    assert ds.data.shape == (36, 49)
    assert not ds.data.any()


def test_radius_doubling_scales_by_four(geom):
    med = MediumParams.from_ghz(6)
    a = born_scattered([obj((0.02, 0.01), 0.01)], med, geom).data
    b = born_scattered([obj((0.02, 0.01), 0.02)], med, geom).data
    assert np.array_equal(b, 4 * a) or np.allclose(b, 4 * a, rtol=1e-15, atol=0)


def test_born_entry_against_oracle(geom):
    med = MediumParams.from_ghz(4)
    k = med.wavenumber
    ds = born_scattered([obj((0.0, 0.0), 0.01, 5.0)], med, geom)
    gb = grad_green_oracle(k, tuple(geom.receiver_points[0, 0]), (0.0, 0.0))
    ga = grad_green_oracle(k, tuple(geom.emitter_points[0]), (0.0, 0.0))
    ref = 0.01**2 * math.pi * (1 / 6) * (gb[0] * ga[0] + gb[1] * ga[1])
    assert abs(ds.data[0, 0] - ref) <= 1e-10 * abs(ref)


def test_born_is_linear_in_objects(geom):
    med = MediumParams.from_ghz(8)
    objs = [obj(c) for c in CASE1]
    whole = born_scattered(objs, med, geom).data
    parts = born_scattered(objs[:1], med, geom).data + born_scattered(objs[1:], med, geom).data
    assert np.allclose(whole, parts, rtol=0, atol=1e-12 * np.abs(whole).max())


def test_born_rotation_equivariance(geom):
    med = MediumParams.from_ghz(8)
    beta = 2 * math.pi / 36
    rot = np.array([[math.cos(beta), -math.sin(beta)], [math.sin(beta), math.cos(beta)]])
    objs = [obj(c) for c in CASE1]
    rotated = [obj(tuple(rot @ np.array(c))) for c in CASE1]
    a = born_scattered(objs, med, geom).data
    b = born_scattered(rotated, med, geom).data
    assert np.allclose(np.roll(a, 1, axis=0), b, rtol=0, atol=1e-10 * np.abs(a).max())


def test_contrast_ratio(geom):
    med = MediumParams.from_ghz(4)
    a = born_scattered([obj((0.01, 0.0), mu_rel=3)], med, geom).data
    b = born_scattered([obj((0.01, 0.0), mu_rel=7)], med, geom).data
    assert np.allclose(a / b, 2.0, rtol=1e-14)


def test_foldy_lax_single_object_equals_born(geom):
    med = MediumParams.from_ghz(8)
    o = [obj((0.03, -0.02))]
    a = born_scattered(o, med, geom).data
    b = foldy_lax_scattered(o, med, geom).data
    assert np.allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())


def _coupling_gap(geom, med, sep, radius):
    o = [obj((-sep / 2, 0.0), radius), obj((sep / 2, 0.0), radius)]
    a = born_scattered(o, med, geom).data
    b = foldy_lax_scattered(o, med, geom).data
    return np.linalg.norm(b - a) / np.linalg.norm(a)


def test_foldy_lax_far_apart_objects_close_to_born(geom):
    # coupling scales with tau k^2, so the objects must be small on the wavelength scale
    med = MediumParams.from_ghz(8)
    sep = 10 * med.wavelength
    near = _coupling_gap(geom, med, sep, 0.004)
    far = _coupling_gap(geom, med, 2 * sep, 0.004)
    assert near < 1e-2
    # far-field coupling decays like |r_s - r_t|^(-1/2)
    assert far / near == pytest.approx(1 / math.sqrt(2), rel=0.05)


def test_foldy_lax_case1_close_to_born(geom):
    med = MediumParams.from_ghz(4)
    o = [obj(c) for c in CASE1]
    a = born_scattered(o, med, geom).data
    b = foldy_lax_scattered(o, med, geom).data
    assert np.all(np.isfinite(b))
    assert np.max(np.abs(b - a)) <= 0.1 * np.max(np.abs(a))
    assert np.linalg.norm(b - a) / np.linalg.norm(a) < 0.1


def test_foldy_lax_solves_dipole_equations(geom):
    # independent assembly: p_s - tau_s sum_t (-Hess G)(r_s, r_t) p_t = tau_s grad u_inc(r_s)
    from osmimaging.specfun import grad_green, hess_green
    med = MediumParams.from_ghz(12)
    o = [obj(c, 0.015, 3) for c in CASE1]
    k = med.wavenumber
    ds = foldy_lax_scattered(o, med, geom)
    centers = np.array([x.center for x in o])
    tau = np.array([x.polarizability() for x in o])
    S = len(o)
    m = 4
    system = np.eye(2 * S, dtype=complex)
    for s in range(S):
        for t in range(S):
            if s != t:
                system[2 * s:2 * s + 2, 2 * t:2 * t + 2] = tau[s] * hess_green(k, centers[s], centers[t])
    rhs = (tau[:, None] * grad_green(k, geom.emitter_points[m], centers)).ravel()
    p = np.linalg.solve(system, rhs).reshape(S, 2)
    u = np.einsum("nsc,sc->n", grad_green(k, geom.receiver_points[m][:, None], centers[None]), p)
    assert np.allclose(ds.data[m], u, rtol=1e-12)


def test_foldy_lax_singular_system_reported(geom):
    med = MediumParams.from_ghz(8)
    o = [obj((0.0, 0.0)), obj((0.03, 0.0))]
    with pytest.raises(SingularInteractionError, match="near-singular"):
        foldy_lax_scattered(o, med, geom, max_condition=1.0)


def test_object_validation(geom):
    with pytest.raises(ValueError, match="overlap"):
        check_objects([obj((0.0, 0.0)), obj((0.015, 0.0))])
    with pytest.raises(ValueError, match="outside"):
        born_scattered([obj((0.8, 0.0))], MediumParams.from_ghz(4), geom)
    with pytest.raises(ValueError):
        SmallObject((0, 0), 0.0, MU0)
    with pytest.raises(ValueError):
        SmallObject((0, 0), 0.01, -1.0)


def test_awgn_infinite_snr_is_identity(geom):
    ds = born_scattered([obj((0.0, 0.01))], MediumParams.from_ghz(4), geom)
    out = add_awgn(ds, math.inf, seed=3)
    assert np.array_equal(out.data, ds.data)
    assert out.meta["noise_db"] == math.inf


def test_awgn_empirical_snr(geom):
    ds = born_scattered([obj(c) for c in CASE1], MediumParams.from_ghz(8), geom)
    signal = np.sum(np.abs(ds.data) ** 2)
    snrs = []
    for seed in range(100):
        noise = add_awgn(ds, 20.0, seed).data - ds.data
        snrs.append(10 * math.log10(signal / np.sum(np.abs(noise) ** 2)))
    assert 19.0 <= np.mean(snrs) <= 21.0


def test_awgn_deterministic_and_seed_dependent(geom):
    ds = born_scattered([obj((0.0, 0.01))], MediumParams.from_ghz(4), geom)
    a = add_awgn(ds, 20.0, 7).data
    b = add_awgn(ds, 20.0, 7).data
    c = add_awgn(ds, 20.0, 8).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_awgn_rows_independent_of_processing_order(geom):
    ds = born_scattered([obj((0.0, 0.01))], MediumParams.from_ghz(4), geom)
    full = add_awgn(ds, 10.0, 11).data - ds.data
    # row m only depends on (seed, m): regenerate row 5 on its own
    sigma2 = np.sum(np.abs(ds.data) ** 2) / 10 / ds.data.size
    z = np.random.default_rng([11, 5]).standard_normal((2, 49))
    assert np.allclose(full[5], (z[0] + 1j * z[1]) * math.sqrt(sigma2 / 2), rtol=1e-13)


def test_awgn_errors(geom):
    zero = ScatterDataset(4e9, geom, np.zeros((36, 49)))
    with pytest.raises(ValueError, match="zero"):
        add_awgn(zero, 20.0, 0)
    with pytest.raises(ValueError):
        add_awgn(zero, math.nan, 0)


def test_dataset_validation(geom):
    with pytest.raises(ValueError):
        ScatterDataset(4e9, geom, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ScatterDataset(4e9, geom, np.full((36, 49), np.inf))
    d = np.zeros((36, 49), complex)
    d[2, 3] = np.nan
    ds = ScatterDataset(4e9, geom, d)
    assert ds.missing.sum() == 1
    assert ds.filled()[2, 3] == 0


def test_awgn_leaves_missing_cells_missing(geom):
    ds = born_scattered([obj((0.0, 0.01))], MediumParams.from_ghz(4), geom)
    d = ds.data.copy()
    d[0, :5] = np.nan
    noisy = add_awgn(ScatterDataset(ds.frequency, geom, d), 20.0, 1)
    assert np.array_equal(noisy.missing, np.isnan(d))
