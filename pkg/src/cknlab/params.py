"""Parameter algebra for the weighted interpolation inequalities.

Three equivalent parametrizations are supported: the critical weighted
form on R^d (generated by the weight pair (a, b)), the subcritical
weighted form (generated by (beta, gamma, p)), and the cylinder form
(generated by (p, Lambda)).  ``derive_params`` fills in every linked
quantity from one generating set and rejects inadmissible combinations
with the violated inequality spelled out.

Scalar constants whose closed forms involve Gamma functions are
evaluated in log space so that exponents arbitrarily close to 2 stay
finite; quadrature-backed quantities share one cached line rule per
(p, lambda) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import AdmissibilityError, DomainError, InversionError
from .grids import gauss_panels
from .profiles import phi_star_log

__all__ = [
    "CKNParams",
    "Thresholds",
    "derive_params",
    "thresholds",
    "check_equivalence",
    "optimal_constant_star",
    "mu_star",
    "lambda_fs_theta",
    "b_fs_value",
    "symmetric_profile_data",
    "sphere_area",
]

_MODES = ("critical", "subcritical", "cylinder")
_TOL = 1e-12


@dataclass(frozen=True)
class CKNParams:
    """Complete scalar parameter record for one problem instance.

    Fields that do not exist in the record's mode are None; consumers
    requiring them raise DomainError rather than guessing.
    """

    mode: str
    d: int
    p: float
    a: Optional[float] = None
    b: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    theta: Optional[float] = None
    Lambda: Optional[float] = None
    alpha: Optional[float] = None
    n: Optional[float] = None
    m: Optional[float] = None

    @property
    def a_c(self) -> float:
        return 0.5 * (self.d - 2)

    @property
    def two_star(self) -> float:
        if self.d <= 2:
            return math.inf
        return 2.0 * self.d / (self.d - 2)

    @property
    def vartheta(self) -> float:
        return self.d * (self.p - 2.0) / (2.0 * self.p)

    def with_theta(self, theta: float) -> "CKNParams":
        _require_theta(self, theta)
        return replace(self, theta=theta)


@dataclass(frozen=True)
class Thresholds:
    """Closed-form threshold values; None marks fields that have no
    meaning in the originating record's mode."""

    lambda_fs: Optional[float] = None
    b_fs: Optional[float] = None
    beta_fs: Optional[float] = None
    alpha_fs: Optional[float] = None
    two_sharp: Optional[float] = None
    lambda_fs_theta: Optional[float] = None
    p_star: Optional[float] = None
    vartheta: Optional[float] = None


def _reject(condition: bool, message: str) -> None:
    if condition:
        raise AdmissibilityError(message, violated=message)


def _require_theta(params: CKNParams, theta: float) -> None:
    if params.p <= 2.0:
        raise DomainError(f"theta range needs p > 2, got p={params.p}")
    lo = params.vartheta
    if not (lo - _TOL <= theta <= 1.0 + _TOL):
        raise AdmissibilityError(
            f"theta = {theta} outside [{lo}, 1]",
            violated="theta < d*(p-2)/(2*p) or theta > 1")


def derive_params(d: int, inputs: Mapping[str, float], mode: str) -> CKNParams:
    """Fill a full parameter record from one generating set.

    Generating sets: (a, b) for critical, (beta, gamma, p) for
    subcritical, (p, Lambda) for cylinder.  ``theta`` may accompany the
    critical and cylinder sets, ``m`` any set; everything else is
    derived and providing it is an error.
    """
    if mode not in _MODES:
        raise DomainError(f"unknown mode {mode!r}; expected one of {_MODES}")
    if d < 2 or int(d) != d:
        raise AdmissibilityError(f"d = {d} below 2", violated="d < 2")
    d = int(d)
    required = {"critical": {"a", "b"},
                "subcritical": {"beta", "gamma", "p"},
                "cylinder": {"p", "Lambda"}}[mode]
    optional = {"m", "theta"} if mode != "subcritical" else {"m"}
    keys = set(inputs)
    missing = required - keys
    if missing:
        raise DomainError(
            f"{mode} mode needs {sorted(required)}; missing {sorted(missing)}")
    extra = keys - required - optional
    if extra:
        raise DomainError(
            f"unexpected inputs for {mode} mode: {sorted(extra)}")

    a_c = 0.5 * (d - 2)
    if mode == "critical":
        a = float(inputs["a"])
        b = float(inputs["b"])
        _reject(a >= a_c, "a >= (d-2)/2")
        _reject(b < a, "b < a")
        _reject(b >= a + 1.0, "b >= a + 1")
        denom = d - 2 + 2.0 * (b - a)
        _reject(denom <= 0.0, "b <= a in dimension 2")
        p = 2.0 * d / denom
        lam = (a_c - a) ** 2
    elif mode == "cylinder":
        p = float(inputs["p"])
        lam = float(inputs["Lambda"])
        _reject(p <= 2.0, "p <= 2")
        if d > 2:
            _reject(p >= 2.0 * d / (d - 2), "p >= 2*d/(d-2)")
        _reject(lam <= 0.0, "Lambda <= 0")
        a = a_c - math.sqrt(lam)
        b = a + d / p - a_c
    else:
        beta = float(inputs["beta"])
        gamma = float(inputs["gamma"])
        p = float(inputs["p"])
        _reject(gamma >= d, "gamma >= d")
        _reject(beta <= gamma - 2.0, "beta <= gamma - 2")
        _reject(beta > (d - 2.0) * gamma / d + _TOL, "beta > (d-2)*gamma/d")
        p_star = (d - gamma) / (d - beta - 2.0)
        _reject(p <= 1.0, "p <= 1")
        _reject(p > p_star + _TOL, "p > p_star")
        alpha = 1.0 + 0.5 * (beta - gamma)
        n = 2.0 * (d - gamma) / (beta + 2.0 - gamma)
        m = float(inputs.get("m", 1.0 - 1.0 / n))
        _reject(not (1.0 - 1.0 / n - _TOL <= m < 1.0),
                "m outside [1 - 1/n, 1)")
        return CKNParams(mode=mode, d=d, p=p, beta=beta, gamma=gamma,
                         alpha=alpha, n=n, m=m)

    # shared critical/cylinder tail
    if p > 2.0:
        n = 2.0 * p / (p - 2.0)
        alpha = (a_c - a) * (p - 2.0) / 2.0
    else:
        n = math.inf
        alpha = 0.0
    m = float(inputs.get("m", 1.0 - 1.0 / n))
    _reject(not (1.0 - 1.0 / n - _TOL <= m < 1.0), "m outside [1 - 1/n, 1)")
    record = CKNParams(mode=mode, d=d, p=p, a=a, b=b, theta=1.0,
                       Lambda=lam, alpha=alpha, n=n, m=m)
    if "theta" in inputs:
        record = record.with_theta(float(inputs["theta"]))
    return record


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^(d-1) in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.exp(gammaln(d / 2.0))


def b_fs_value(d: int, a: float) -> float:
    """Height of the symmetry-breaking boundary curve at weight a."""
    gap = 0.5 * (d - 2) - a
    if gap <= 0.0:
        raise DomainError(f"curve defined for a < (d-2)/2, got a={a}")
    return d * gap / (2.0 * math.sqrt(gap * gap + d - 1.0)) - gap


def two_sharp_value(d: int) -> float:
    if d < 2:
        raise DomainError(f"need d >= 2, got {d}")
    return (2.0 * d * d + 1.0) / (d - 1.0) ** 2


def lambda_fs_value(d: int, p: float) -> float:
    if p <= 2.0:
        raise DomainError(f"instability threshold needs p > 2, got p={p}")
    return 4.0 * (d - 1.0) / (p * p - 4.0)


# ---------------------------------------------------------------------------
# quadrature over the explicit symmetric cylinder family


def _log_dot(logf: np.ndarray, w: np.ndarray) -> float:
    """log(sum w * exp(logf)) with the max factored out."""
    mx = float(np.max(logf))
    return mx + math.log(float(np.sum(w * np.exp(logf - mx))))


@lru_cache(maxsize=4096)
def symmetric_profile_data(p: float, lam: float, n_panels: int = 96,
                           n_nodes: int = 8):
    """Full-line integrals of the explicit symmetric profile.

    Returns (log_l2, log_lpp, t) with log_l2 = log of the squared L2
    norm, log_lpp = log of the p-th power of the L^p norm, and
    t = gradient energy over squared L2 norm.  Everything is computed
    in log space so the large-amplitude regime near p = 2 stays finite.
    """
    if p <= 2.0 or lam <= 0.0:
        raise DomainError(f"symmetric family needs p > 2, lam > 0; "
                          f"got ({p}, {lam})")
    # Cut the half-line where the profile has decayed to exp(-40).  The
    # sech argument needed for that is arccosh(exp(20 (p-2))), which
    # interpolates between the Gaussian-core regime sqrt(40 (p-2)) near
    # p = 2 and the exponential-tail regime 20 (p-2) + log 2; using the
    # tail formula alone truncates most of the mass for small p - 2.
    c = 20.0 * (p - 2.0)
    x_cut = c + math.log(2.0) if c > 300.0 else math.acosh(math.exp(c))
    extent = 2.0 * x_cut / ((p - 2.0) * math.sqrt(lam))
    s, w = gauss_panels(0.0, extent, n_panels, n_nodes)
    logphi = phi_star_log(s, p, lam)
    log2 = math.log(2.0)
    log_l2 = _log_dot(2.0 * logphi, w) + log2
    log_lpp = _log_dot(p * logphi, w) + log2
    # phi' = -sqrt(lam) tanh(width s) phi, so the gradient integral is
    # lam (l2 - integral of phi^2 sech^2)
    width = 0.5 * (p - 2.0) * math.sqrt(lam)
    sech2 = 1.0 / np.cosh(np.minimum(width * s, 350.0)) ** 2
    log_l2_sech = _log_dot(2.0 * logphi + np.log(sech2), w) + log2
    t = lam * (1.0 - math.exp(log_l2_sech - log_l2))
    return log_l2, log_lpp, t


def _mu_one(p: float) -> float:
    """Optimal symmetric constant at unit scale, from quadrature."""
    _, log_lpp, _ = symmetric_profile_data(p, 1.0)
    return math.exp((p - 2.0) / p * log_lpp)


def symmetric_t(p: float, lam: float) -> float:
    """Gradient-to-mass ratio of the symmetric profile at scale lam."""
    return symmetric_profile_data(p, lam)[2]


def _check_cylinder_exponent(params: CKNParams) -> None:
    if params.p <= 2.0:
        raise DomainError(f"needs p > 2, got p={params.p}")
    if params.d > 2 and params.p >= params.two_star:
        raise DomainError(
            f"needs p < 2d/(d-2) = {params.two_star}, got p={params.p}")


def mu_star(params: CKNParams, Lambda: float, theta: float = 1.0) -> float:
    """Optimal constant over the symmetric family at (Lambda, theta).

    For theta = 1 this is the quadrature value at unit scale propagated
    by the exact scaling law.  For theta < 1 the family member whose
    reparametrized position equals Lambda is located by monotone root
    finding, and its interpolation quotient is returned.
    """
    _check_cylinder_exponent(params)
    if Lambda <= 0.0:
        raise DomainError(f"needs Lambda > 0, got {Lambda}")
    _require_theta(params, theta)
    p = params.p
    if theta >= 1.0 - 1e-15:
        return _mu_one(p) * Lambda ** ((p + 2.0) / (2.0 * p))

    def offset(lam: float) -> float:
        return theta * lam - (1.0 - theta) * symmetric_t(p, lam) - Lambda

    slope = (2.0 * p * theta - (p - 2.0)) / (p + 2.0)
    guess = Lambda / slope
    lo, hi = 0.5 * guess, 2.0 * guess
    for _ in range(80):
        if offset(lo) <= 0.0:
            break
        lo *= 0.5
    else:
        raise InversionError(f"no lower bracket for Lambda={Lambda}")
    for _ in range(80):
        if offset(hi) >= 0.0:
            break
        hi *= 2.0
    else:
        raise InversionError(f"no upper bracket for Lambda={Lambda}")
    lam_star = brentq(offset, lo, hi, xtol=1e-13, rtol=8.9e-16)
    log_l2, log_lpp, t = symmetric_profile_data(p, lam_star)
    log_ratio = log_l2 - (2.0 / p) * log_lpp
    return (t + Lambda) ** theta * math.exp(log_ratio)


def lambda_fs_theta(params: CKNParams, theta: float) -> float:
    """Reparametrized position of the symmetry-breaking point."""
    _check_cylinder_exponent(params)
    _require_theta(params, theta)
    lam_fs = lambda_fs_value(params.d, params.p)
    return theta * lam_fs - (1.0 - theta) * symmetric_t(params.p, lam_fs)


# ---------------------------------------------------------------------------
# thresholds and equivalences


def thresholds(params: CKNParams) -> Thresholds:
    """All closed-form thresholds meaningful for the record's mode."""
    d = params.d
    two_sharp = two_sharp_value(d)
    if params.mode == "subcritical":
        disc = (params.gamma - d) ** 2 - 4.0 * (d - 1.0)
        if disc < 0.0:
            raise DomainError(
                f"symmetry-breaking exponent undefined: (gamma-d)^2 = "
                f"{(params.gamma - d) ** 2} < 4(d-1) = {4 * (d - 1)}")
        return Thresholds(
            beta_fs=d - 2.0 - math.sqrt(disc),
            alpha_fs=math.sqrt((d - 1.0) / (params.n - 1.0)),
            two_sharp=two_sharp,
            p_star=(d - params.gamma) / (d - params.beta - 2.0),
        )
    lam_fs = lambda_fs_value(d, params.p)
    theta = params.theta if params.theta is not None else 1.0
    return Thresholds(
        lambda_fs=lam_fs,
        b_fs=b_fs_value(d, params.a),
        alpha_fs=math.sqrt((d - 1.0) / (params.n - 1.0)),
        two_sharp=two_sharp,
        lambda_fs_theta=lambda_fs_theta(params, theta),
        vartheta=params.vartheta,
    )


def check_equivalence(params: CKNParams):
    """Truth values of the three equivalent symmetry conditions.

    Condition order: scale below threshold, weight above the boundary
    curve, change-of-variables exponent below its threshold.  The
    boundary itself counts as satisfied in all three.
    """
    if params.mode == "subcritical":
        raise DomainError("equivalence check needs a critical-type record")
    _check_cylinder_exponent(params)
    th = thresholds(params)
    cond_lambda = 0.0 < params.Lambda <= th.lambda_fs + _TOL
    cond_b = (params.a < params.a_c
              and params.b >= b_fs_value(params.d, params.a) - _TOL)
    cond_alpha = 0.0 < params.alpha <= th.alpha_fs + _TOL
    return cond_lambda, cond_b, cond_alpha


def optimal_constant_star(params: CKNParams) -> float:
    """Closed-form optimal constant of the symmetric critical bubble.

    Evaluated in log space; powers of the weight gap use its absolute
    value so the non-integer exponents stay real.
    """
    if params.mode == "subcritical":
        raise DomainError("constant defined for critical-type records")
    p = params.p
    if p <= 2.0:
        raise DomainError(f"needs p > 2, got p={p}")
    gap = abs(params.a - params.a_c)
    if gap == 0.0:
        raise DomainError("needs a != (d-2)/2")
    q = p / (p - 2.0)
    log_area = math.log(2.0) + 0.5 * params.d * math.log(math.pi) \
        - gammaln(0.5 * params.d)
    log_c = (math.log(0.5 * p)
             + (1.0 - 2.0 / p) * log_area
             + (1.0 + 2.0 / p) * math.log(gap)
             + (p - 2.0) / p * (math.log(2.0) + 0.5 * math.log(math.pi)
                                + gammaln(q) - math.log(p - 2.0)
                                - gammaln(q + 0.5)))
    return math.exp(log_c)
