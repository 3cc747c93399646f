"""Entropies, Fisher informations, pressure fields, and quotient forms.

Sphere-side functionals act on zonal grid functions and use whatever
quadrature the grid carries; the conservative finite-volume grids get
their Dirichlet form, collocation grids get polynomial differentiation.
Weighted-space functionals act on tensor-grid densities through the
pressure variable.  Derivatives are taken directly in r, after
subtracting a reference slice in each direction, so that polynomial
radial pressures differentiate exactly and the constant part of the
field never reaches the 1/r^2-amplified stencil weights near the inner
truncation radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import params as params_mod
from .errors import DegenerateInput, DomainError
from .grids import (CylinderField, GridFunction1D, TensorGrid,
                    derivative_matrix, fv_zonal_grid, zonal_laplacian)
from .params import CKNParams, mu_star, sphere_area

__all__ = [
    "sphere_entropy",
    "sphere_fisher",
    "sphere_deficit",
    "PressureField",
    "pressure_from_density",
    "density_from_pressure",
    "weighted_fisher",
    "k_functional",
    "h_functional",
    "renyi_power",
    "renyi_sigma",
    "cylinder_quotient",
    "gaussian_h",
]


# ---------------------------------------------------------------------------
# sphere functionals


def _sphere_dim(rho: GridFunction1D) -> int:
    kind = rho.weight.kind
    if kind not in ("sphere_zonal", "fv_zonal"):
        raise DomainError(
            f"sphere functional needs a zonal grid function, got {kind!r}")
    return int(rho.weight.params["sphere_dim"])


def _check_sphere_exponent(d: int, p: float) -> None:
    hi = math.inf if d <= 2 else 2.0 * d / (d - 2)
    if not 1.0 <= p <= hi + 1e-12:
        raise DomainError(
            f"exponent p={p} outside [1, {hi}] for the {d}-sphere")


def _density_mass(rho: GridFunction1D) -> float:
    if np.any(rho.values < 0.0):
        raise DegenerateInput("density has negative values")
    mass = rho.mass
    if mass <= 0.0:
        raise DegenerateInput("density has zero mass")
    return mass


def sphere_entropy(rho: GridFunction1D, p: float) -> float:
    """Generalized entropy of a zonal density on S^d.

    For p != 2 this is ((integral rho)^(2/p) - integral rho^(2/p))
    divided by (p-2); at p = 2 it is half the Boltzmann entropy
    relative to the mass.  Both use the uniform probability measure.
    """
    d = _sphere_dim(rho)
    _check_sphere_exponent(d, p)
    mass = _density_mass(rho)
    if p == 2.0:
        v = rho.values
        integrand = np.where(v > 0.0, v * np.log(np.maximum(v, 1e-300) / mass),
                             0.0)
        return 0.5 * rho.integrate(integrand)
    return (mass ** (2.0 / p)
            - rho.integrate(rho.values ** (2.0 / p))) / (p - 2.0)


def sphere_fisher(rho: GridFunction1D, p: float) -> float:
    """Generalized Fisher information of a zonal density on S^d.

    The zonal gradient squared is (1-z^2) f'(z)^2 applied to
    f = rho^(1/p); on finite-volume grids the matching Dirichlet form
    replaces pointwise differentiation.
    """
    d = _sphere_dim(rho)
    _check_sphere_exponent(d, p)
    _density_mass(rho)
    f = rho.values ** (1.0 / p)
    if rho.weight.kind == "fv_zonal":
        grid = fv_zonal_grid(d, int(rho.weight.params["n_cells"]))
        return grid.dirichlet_form(f)
    D = derivative_matrix(rho.nodes, 1)
    df = D @ f
    return rho.integrate((1.0 - rho.nodes ** 2) * df * df)


def sphere_deficit(rho: GridFunction1D, p: float) -> float:
    """Fisher information minus d times the entropy; nonnegative."""
    d = _sphere_dim(rho)
    return sphere_fisher(rho, p) - d * sphere_entropy(rho, p)


# ---------------------------------------------------------------------------
# pressure fields on the weighted space


@dataclass
class PressureField:
    """Pressure variable on a tensor grid, with its flow exponents."""

    grid: TensorGrid
    values: np.ndarray
    m: float
    n: float
    alpha: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.grid.r), len(self.grid.z)):
            raise DomainError("pressure shape must match its grid")
        if not np.all(np.isfinite(self.values)):
            raise DegenerateInput("pressure carries non-finite values")


def _flow_exponents(params: CKNParams):
    if params.alpha is None or params.n is None or params.m is None:
        raise DomainError("record lacks flow exponents (alpha, n, m)")
    if not 0.0 < params.m < 1.0:
        raise DomainError(f"diffusion exponent must lie in (0,1), "
                          f"got m={params.m}")
    return params.m, params.n, params.alpha


def pressure_from_density(u: np.ndarray, params: CKNParams,
                          grid: TensorGrid) -> PressureField:
    """Pressure p = (m/(1-m)) u^(m-1) of a positive density."""
    m, n, alpha = _flow_exponents(params)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise DegenerateInput("density must be strictly positive")
    return PressureField(grid, (m / (1.0 - m)) * u ** (m - 1.0), m, n, alpha)


def density_from_pressure(pf: PressureField) -> np.ndarray:
    """Invert the pressure map; defined wherever the pressure is positive."""
    if np.any(pf.values <= 0.0):
        raise DegenerateInput("pressure must be positive to invert")
    m = pf.m
    return ((1.0 - m) / m * pf.values) ** (1.0 / (m - 1.0))


def _measure_weights(grid: TensorGrid, n: float) -> np.ndarray:
    """Tensor weights of the measure |x|^(n-d) dx, zonally reduced."""
    area = sphere_area(grid.d)
    return grid.radial_weights(n)[:, None] * (area * grid.wz)[None, :]


def _field_derivatives(grid: TensorGrid, P: np.ndarray):
    """First and second derivatives of a tensor field in r and z.

    Before applying the stencils, the innermost radial slice is
    subtracted along r and the central zonal slice along z.  Constants
    never survive the subtraction, so fields that are constant in one
    direction differentiate to exact zeros there, and the rounding of
    what remains scales with the local variation instead of the field
    magnitude; that is what keeps the 1/r^2-amplified combinations far
    below the curvature tolerances.
    """
    br = P - P[[0], :]
    bz = P - P[:, [len(grid.z) // 2]]
    pr = grid.Dr @ br
    prr = grid.Drr @ br
    pz = bz @ grid.Dz.T
    pzz = bz @ grid.Dzz.T
    return pr, prr, pz, pzz


def weighted_fisher(u: np.ndarray, params: CKNParams,
                    grid: TensorGrid) -> float:
    """Fisher information of u relative to the weighted measure.

    Integrates u (alpha^2 p_r^2 + (1-z^2) p_z^2 / r^2) with p the
    pressure of u.
    """
    m, n, alpha = _flow_exponents(params)
    pf = pressure_from_density(u, params, grid)
    pr, _, pz, _ = _field_derivatives(grid, pf.values)
    r2 = (grid.r ** 2)[:, None]
    dens = np.asarray(u, dtype=float)
    integrand = dens * (alpha ** 2 * pr * pr
                        + (1.0 - grid.z ** 2)[None, :] * pz * pz / r2)
    return float(np.sum(_measure_weights(grid, n) * integrand))


def k_functional(pf: PressureField, params: CKNParams,
                 zeta_star: float = 1.0):
    """Pointwise carre-du-champ remainder and its weighted integral.

    Returns (field, integral) where the integral weighs the field by
    u^m against the measure |x|^(n-d) dx, with u recovered from the
    pressure.  The radial stencils are polynomial-exact, so quadratic
    radial pressures (the degenerate kernel of the quadratic form) land
    in the rounding floor rather than at truncation order.
    """
    if zeta_star <= 0.0:
        raise DomainError(f"zeta_star must be positive, got {zeta_star}")
    m, n, alpha = _flow_exponents(params)
    if n < 2.0:
        raise DomainError(f"needs n >= 2, got n={n}")
    grid = pf.grid
    d = grid.d
    alpha_fs = math.sqrt((d - 1.0) / (n - 1.0))
    z = grid.z
    one_z2 = (1.0 - z * z)[None, :]
    pr, prr, pz, pzz = _field_derivatives(grid, pf.values)
    prz = grid.Dr @ pz
    lap_omega = one_z2 * pzz - (d - 1.0) * z[None, :] * pz
    rr = grid.r[:, None]
    r2 = rr * rr
    r4 = r2 * r2
    bracket = prr - pr / rr - lap_omega / (alpha ** 2 * (n - 1.0) * r2)
    cross = prz - pz / rr
    field = (alpha ** 4 * (1.0 - 1.0 / n) * bracket ** 2
             + 2.0 * alpha ** 2 * one_z2 * cross ** 2 / r2
             + (n - 2.0) * (alpha_fs ** 2 - alpha ** 2) * one_z2 * pz ** 2 / r4
             + zeta_star * (n - d) * (one_z2 * pz * pz) ** 2 / r4)
    um = density_from_pressure(pf) ** m
    integral = float(np.sum(_measure_weights(grid, n) * field * um))
    return field, integral


def _adjoint_second_order(pf: PressureField):
    """The operator alpha^2 (p'' + (n-1)p'/r) + Delta_omega p / r^2.

    This is the negative of the formal adjoint square of the weighted
    derivative, the sign being fixed by the integration-by-parts
    identity against u.
    """
    grid = pf.grid
    z = grid.z
    pr, prr, pz, pzz = _field_derivatives(grid, pf.values)
    lap_omega = (1.0 - z * z)[None, :] * pzz - (grid.d - 1.0) * z[None, :] * pz
    n, alpha = pf.n, pf.alpha
    rr = grid.r[:, None]
    return alpha ** 2 * (prr + (n - 1.0) * pr / rr) + lap_omega / (rr * rr)


def h_functional(u: np.ndarray, params: CKNParams, grid: TensorGrid,
                 zeta_star: float = 1.0, variant: str = "weighted") -> float:
    """Second entropy derivative surrogate along the nonlinear flow.

    H = (m - m1) * variance term + integral of (K + (m - m1) (Lp)^2)
    against u^m dmu, with m1 = 1 - 1/n.  The published centering of the
    variance term weighs the Fisher integrand inconsistently; "weighted"
    centers L p by its u^m-average (the convention under which quadratic
    pressures give H = 0 exactly) and "as_written" reproduces the other
    reading.  Both are exposed deliberately.
    """
    m, n, alpha = _flow_exponents(params)
    m1 = 1.0 - 1.0 / n
    if m < m1 - 1e-12:
        raise DomainError(f"needs m >= 1 - 1/n = {m1}, got m={m}")
    pf = pressure_from_density(u, params, grid)
    lp = _adjoint_second_order(pf)
    wmat = _measure_weights(grid, n)
    um = np.asarray(u, dtype=float) ** m
    mass_m = float(np.sum(wmat * um))
    k_field, k_int = k_functional(pf, params, zeta_star)
    if variant == "weighted":
        fisher = weighted_fisher(u, params, grid)
        center = fisher / mass_m
        variance = float(np.sum(wmat * um * (lp - center) ** 2))
    elif variant == "as_written":
        pr, _, pz, _ = _field_derivatives(grid, pf.values)
        fisher_um = float(np.sum(
            wmat * um * np.asarray(u, dtype=float)
            * ((alpha * pr) ** 2
               + (1.0 - grid.z ** 2)[None, :]
               * pz ** 2 / (grid.r ** 2)[:, None])))
        center = fisher_um / mass_m
        variance = float(np.sum(wmat * (lp - center) ** 2))
    else:
        raise DomainError(f"unknown variant {variant!r}")
    correction = float(np.sum(wmat * um * lp * lp))
    return (m - m1) * variance + k_int + (m - m1) * correction


def renyi_sigma(params: CKNParams) -> float:
    """Exponent of the entropy power, (2/n)/(1-m) - 1."""
    m, n, _ = _flow_exponents(params)
    return (2.0 / n) / (1.0 - m) - 1.0


def renyi_power(u: np.ndarray, params: CKNParams, grid: TensorGrid) -> float:
    """Entropy power (integral of u^m dmu)^sigma."""
    m, n, _ = _flow_exponents(params)
    sigma = renyi_sigma(params)
    val = float(np.sum(_measure_weights(grid, n)
                       * np.asarray(u, dtype=float) ** m))
    if val <= 0.0:
        raise DegenerateInput("entropy power needs positive u^m mass")
    return val ** sigma


# ---------------------------------------------------------------------------
# cylinder quotients


def _line_energy(gf: GridFunction1D) -> float:
    """Discrete gradient energy matching the grid's boundary convention."""
    v = gf.values
    kind = gf.weight.kind
    if kind == "cylinder_even":
        h = float(gf.weight.params["h"])
        e = float(np.sum(np.diff(v) ** 2)) / h
        if gf.weight.params.get("boundary", "dirichlet") == "dirichlet":
            e += v[-1] ** 2 / h
        return 2.0 * e
    if kind == "flat_line":
        h = float(gf.weight.params["h"])
        if gf.weight.params.get("boundary") == "periodic":
            return float(np.sum((np.roll(v, -1) - v) ** 2)) / h
        return float(np.sum(np.diff(v) ** 2)) / h
    raise DomainError(
        f"quotients need a line-type grid function, got {kind!r}")


def cylinder_quotient(phi, Lambda: float, p: float, theta: float = 1.0):
    """Interpolation quotient and gradient ratio of a cylinder field.

    Returns a dict with ``mu`` = (energy + Lambda l2)^theta *
    l2^(1-theta) / lp^2 and ``t`` = energy / l2.  Accepts either a
    symmetric profile on a line grid or a full zonal cylinder field;
    in both cases the discrete energy uses the same quadratic form as
    the solver, so the Euler-Lagrange identity holds to solver
    residual, not merely to truncation order.
    """
    if isinstance(phi, CylinderField):
        U = phi.values
        if not np.any(U != 0.0):
            raise DegenerateInput("quotient of the zero field")
        h = phi.h
        diff_s = np.diff(U, axis=0)
        energy = float(np.sum((diff_s * diff_s) @ phi.wz)) / h
        energy += float(np.sum((U[-1] * U[-1]) * phi.wz)) / h
        lz = zonal_laplacian(phi.d - 1, phi.z, phi.wz)
        energy += float(np.sum(((-(U @ lz.T)) * U) @ phi.wz)) * h
        energy *= 2.0
        l2 = phi.integrate(U * U)
        lp = phi.lp_norm(p)
    elif isinstance(phi, GridFunction1D):
        if not np.any(phi.values != 0.0):
            raise DegenerateInput("quotient of the zero field")
        energy = _line_energy(phi)
        l2 = phi.integrate(phi.values ** 2)
        lp = phi.integrate(np.abs(phi.values) ** p) ** (1.0 / p)
    else:
        raise DomainError(f"unsupported field type {type(phi).__name__}")
    mu = (energy + Lambda * l2) ** theta * l2 ** (1.0 - theta) / lp ** 2
    return {"mu": mu, "t": energy / l2}


def gaussian_h(d: int, p: float) -> float:
    """Gaussian test quotient against the symmetric constant.

    The numerator is the unweighted interpolation quotient of the unit
    Gaussian (2 pi)^(-d/4) exp(-|x|^2/4) at the endpoint exponent
    theta = d(p-2)/(2p); the denominator is the symmetric cylinder
    constant at the matching threshold, rescaled by the sphere area
    factor that converts per-line cylinder norms into ambient ones.
    Tends to 1 as p decreases to 2 and dips below 1 just above, which
    is the wedge the comparison argument drives in.  Computed in log
    space so it stays finite arbitrarily close to p = 2.
    """
    record = params_mod.derive_params(d, {"p": p, "Lambda": 1.0}, "cylinder")
    theta = record.vartheta
    lam_theta = params_mod.lambda_fs_theta(record, theta)
    denom = mu_star(record, lam_theta, theta)
    log_ambient = (1.0 - 2.0 / p) * math.log(sphere_area(d))
    # norms of (2 pi)^(-d/4) exp(-|x|^2/4): grad energy d/4, unit mass
    log_lp2 = (-d / 2.0) * math.log(2.0 * math.pi) \
        + (d / p) * math.log(4.0 * math.pi / p)
    log_h = theta * math.log(d / 4.0) - log_lp2 - math.log(denom) - log_ambient
    return math.exp(log_h)
