"""Entropy, Fisher information, curvature remainders, and quotients."""

import math

import numpy as np
import pytest

from cknlab import (
    DegenerateInput,
    DomainError,
    PressureField,
    cylinder_quotient,
    cylinder_grid,
    derive_params,
    gaussian_h,
    h_functional,
    k_functional,
    pressure_from_density,
    solve_symmetric,
    sphere_deficit,
    sphere_entropy,
    sphere_fisher,
    symmetric_quotient,
    tensor_grid,
    weighted_fisher,
)
from cknlab.functionals import density_from_pressure
from cknlab.grids import GridFunction1D
from cknlab.params import CKNParams
from cknlab.sphere_flows import random_smooth_density, tilted_density


def subcritical_record():
    return derive_params(3, {"beta": 0.1, "gamma": 0.5, "p": 1.2},
                         "subcritical")


def quadratic_pressure(rec, grid, a=1.0, b=0.7):
    values = grid.sample(lambda r, z: a + b * r * r)
    return PressureField(grid, values, rec.m, rec.n, rec.alpha)


def test_uniform_density_has_zero_deficit():
    rho = GridFunction1D.on_zonal_grid(3, 32)
    for p in (2.0, 2.5, 4.0):
        assert abs(sphere_entropy(rho, p)) < 1e-14
        assert abs(sphere_fisher(rho, p)) < 1e-24
        assert abs(sphere_deficit(rho, p)) < 1e-13


def test_deficit_nonnegative_on_random_densities():
    rng = np.random.default_rng(7)
    for _ in range(20):
        rho = random_smooth_density(3, 64, rng)
        for p in (2.5, 4.0):
            assert sphere_deficit(rho, p) > -1e-10


def test_entropy_nonnegative_and_continuous_through_two():
    rho = tilted_density(2, 48, 0.4, 2.0)
    assert sphere_entropy(rho, 3.0) >= 0.0
    e2 = sphere_entropy(rho, 2.0)
    assert e2 > 0.0
    for dp in (1e-6, -1e-6):
        assert abs(sphere_entropy(rho, 2.0 + dp) - e2) < 1e-6


def test_sphere_functionals_reject_bad_densities():
    nodes = np.linspace(-0.9, 0.9, 16)
    w = np.full(16, 1.0 / 16.0)
    from cknlab.grids import Weight
    negative = GridFunction1D(nodes, np.linspace(-1.0, 1.0, 16),
                              Weight("sphere_zonal", {"sphere_dim": 3}), w)
    with pytest.raises(DegenerateInput):
        sphere_entropy(negative, 3.0)
    flat = GridFunction1D(nodes, np.ones(16), Weight("flat_line", {"h": 0.1}),
                          w)
    with pytest.raises(DomainError):
        sphere_entropy(flat, 3.0)
    rho = GridFunction1D.on_zonal_grid(3, 16)
    with pytest.raises(DomainError):
        sphere_fisher(rho, 7.0)


def test_pressure_density_roundtrip():
    rec = subcritical_record()
    grid = tensor_grid(3, 1e-2, 1e2, n_panels=24, n_nodes=6, nz=12)
    u = grid.sample(lambda r, z: np.exp(-0.3 * r) * (1.2 + 0.1 * z))
    pf = pressure_from_density(u, rec, grid)
    back = density_from_pressure(pf)
    np.testing.assert_allclose(back, u, rtol=1e-12)
    with pytest.raises(DegenerateInput):
        pressure_from_density(0.0 * u, rec, grid)


def test_curvature_remainder_vanishes_on_quadratic_pressure():
    rec = subcritical_record()
    grid = tensor_grid(3, 1e-2, 1e2, n_panels=48, n_nodes=8, nz=16)
    pf = quadratic_pressure(rec, grid)
    field, integral = k_functional(pf, rec)
    assert np.max(np.abs(field)) < 1e-10
    assert abs(integral) < 1e-10


def test_curvature_remainder_pointwise_nonnegative():
    rng = np.random.default_rng(13)
    grid = tensor_grid(3, 1e-2, 1e2, n_panels=48, n_nodes=8, nz=16)
    for _ in range(5):
        n = 3.0 + rng.uniform(0.5, 4.0)
        alpha = math.sqrt(2.0 / (n - 1.0)) * rng.uniform(0.3, 1.0)
        rec = CKNParams(mode="subcritical", d=3, p=1.5, alpha=alpha, n=n,
                        m=1.0 - 1.0 / n)
        t0, amp = rng.uniform(-2.0, 2.0), rng.uniform(0.02, 0.1)
        values = grid.sample(
            lambda r, z: 1.0 + 0.5 * r * r
            + amp * np.exp(-(np.log(r) - t0) ** 2) * np.cos(2.0 * z))
        field, integral = k_functional(
            PressureField(grid, values, rec.m, rec.n, rec.alpha), rec)
        assert float(np.min(field)) > -1e-12 * float(np.max(np.abs(field)))
        assert integral > 0.0


def test_curvature_remainder_rejections():
    rec = subcritical_record()
    grid = tensor_grid(3, 1e-2, 1e2, n_panels=16, n_nodes=6, nz=8)
    pf = quadratic_pressure(rec, grid)
    with pytest.raises(DomainError):
        k_functional(pf, rec, zeta_star=0.0)
    shallow = CKNParams(mode="subcritical", d=3, p=1.5, alpha=0.5, n=1.5,
                        m=0.4)
    with pytest.raises(DomainError):
        k_functional(quadratic_pressure(shallow, grid), shallow)
    bare = CKNParams(mode="critical", d=3, p=2.5, a=0.1, b=0.3)
    with pytest.raises(DomainError):
        pressure_from_density(np.ones((len(grid.r), len(grid.z))), bare, grid)


def test_entropy_curvature_surrogate_zero_on_quadratic_pressure():
    rec = subcritical_record()
    grid = tensor_grid(3, 1e-2, 1e2, n_panels=48, n_nodes=8, nz=16)
    pf = quadratic_pressure(rec, grid)
    u = density_from_pressure(pf)
    assert abs(h_functional(u, rec, grid)) < 1e-12
    assert abs(h_functional(u, rec, grid, variant="as_written")) < 1e-12
    with pytest.raises(DomainError):
        h_functional(u, rec, grid, variant="folk")
    assert weighted_fisher(u, rec, grid) > 0.0


def test_cylinder_quotient_matches_line_solver():
    d, p, lam = 5, 2.8, 3.0
    grid = cylinder_grid(d, 20.0 / math.sqrt(lam), 300, 8)
    phi = solve_symmetric(d, p, lam, grid)
    mu_line, t_line = symmetric_quotient(grid, p, lam)
    out = cylinder_quotient(phi, lam, p)
    assert out["mu"] == pytest.approx(mu_line, rel=1e-12)
    assert out["t"] == pytest.approx(t_line, rel=1e-12)
    # the theta < 1 value interpolates between energy and mass factors
    theta = 0.8
    out_theta = cylinder_quotient(phi, lam, p, theta=theta)
    expected = (t_line + lam) ** theta * out["mu"] / (t_line + lam)
    assert out_theta["mu"] == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DegenerateInput):
        cylinder_quotient(grid.field(np.zeros((300, 8)), p=p), lam, p)
    with pytest.raises(DomainError):
        cylinder_quotient(np.ones(10), lam, p)


def test_gaussian_quotient_dips_below_one():
    assert gaussian_h(3, 2.01) < 1.0
    assert gaussian_h(3, 2.01) == pytest.approx(0.99809242, rel=1e-6)
    assert gaussian_h(5, 2.0 + 1e-6) == pytest.approx(1.0, abs=1e-3)
