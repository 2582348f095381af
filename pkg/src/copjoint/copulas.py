"""Closed-form bivariate copula families.

Every family is evaluated in float64 torch so the same code path serves the
scalar API below, vectorised likelihood evaluation and autograd during
training. Public functions accept floats or numpy arrays and return numpy;
passing torch tensors keeps everything in torch.

Families and their legal dependence parameter ``theta``:

============  ======================  ==========================
family        theta domain            independence point
============  ======================  ==========================
gaussian      (-1, 1)                 0
clayton       [-1, inf)               0
gumbel        [1, inf)                1
joe           [1, inf)                1
amh           [-1, 1]                 0
frank         (-inf, inf)             0
fgm           [-1, 1]                 0
product       none                    (always independent)
============  ======================  ==========================
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy import integrate, special, stats

from ._bvn import bvn_cdf
from ._tensor import DTYPE, as_tensor, tensor_io, to_numpy
from .exceptions import ConsistencyError, DomainError, NumericalError

# |theta| below this uses a first-order expansion around independence.
INDEPENDENCE_BAND = 1e-5
NEGATIVE_MASS_TOL = 1e-10
BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200


class CopulaFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    JOE = "joe"
    AMH = "amh"
    FRANK = "frank"
    FGM = "fgm"
    PRODUCT = "product"

    @classmethod
    def parse(cls, name) -> "CopulaFamily":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            legal = ", ".join(f.value for f in cls)
            raise DomainError(f"unknown copula family {name!r}; legal families: {legal}") from None

    @property
    def has_parameter(self) -> bool:
        return self is not CopulaFamily.PRODUCT

    @property
    def both_signs(self) -> bool:
        """Whether the family reaches both positive and negative dependence."""
        return self in (CopulaFamily.GAUSSIAN, CopulaFamily.FRANK, CopulaFamily.AMH, CopulaFamily.FGM)


# (low, high, low_closed, high_closed, independence point)
_DOMAINS = {
    CopulaFamily.GAUSSIAN: (-1.0, 1.0, False, False, 0.0),
    CopulaFamily.CLAYTON: (-1.0, math.inf, True, False, 0.0),
    CopulaFamily.GUMBEL: (1.0, math.inf, True, False, 1.0),
    CopulaFamily.JOE: (1.0, math.inf, True, False, 1.0),
    CopulaFamily.AMH: (-1.0, 1.0, True, True, 0.0),
    CopulaFamily.FRANK: (-math.inf, math.inf, False, False, 0.0),
    CopulaFamily.FGM: (-1.0, 1.0, True, True, 0.0),
}


def legal_interval(family) -> str:
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.PRODUCT:
        return "{}"
    lo, hi, lo_c, hi_c, _ = _DOMAINS[family]
    return f"{'[' if lo_c else '('}{lo:g}, {hi:g}{']' if hi_c else ')'}"


def independence_theta(family) -> float | None:
    family = CopulaFamily.parse(family)
    return None if family is CopulaFamily.PRODUCT else _DOMAINS[family][4]


@dataclass(frozen=True)
class ThetaVerdict:
    accepted: bool
    limit: bool
    interval: str

    def __bool__(self):
        return self.accepted


def validate_theta(family, theta) -> ThetaVerdict:
    """Check ``theta`` against the family's legal domain.

    Independence points (0, or 1 for Gumbel/Joe) are accepted with
    ``limit=True``; they are evaluated through their independence limit.
    """
    family = CopulaFamily.parse(family)
    interval = legal_interval(family)
    if family is CopulaFamily.PRODUCT:
        if theta is None or theta == 0:
            return ThetaVerdict(True, True, interval)
        return ThetaVerdict(False, False, interval)
    if theta is None:
        raise DomainError(f"{family.value} copula requires a dependence parameter")
    theta = float(theta)
    if not math.isfinite(theta):
        raise DomainError(f"non-finite theta {theta} for {family.value} copula")
    lo, hi, lo_c, hi_c, indep = _DOMAINS[family]
    ok = (theta > lo or (lo_c and theta == lo)) and (theta < hi or (hi_c and theta == hi))
    return ThetaVerdict(ok, ok and abs(theta - indep) < INDEPENDENCE_BAND, interval)


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family together with its dependence parameter."""

    family: CopulaFamily
    theta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.parse(self.family))
        if self.family is CopulaFamily.PRODUCT:
            object.__setattr__(self, "theta", None)
            return
        verdict = validate_theta(self.family, self.theta)
        if not verdict:
            raise DomainError(
                f"theta={self.theta} outside the {self.family.value} domain {verdict.interval}"
            )
        object.__setattr__(self, "theta", float(self.theta))


def _spec(spec_or_family, theta=None) -> CopulaSpec:
    if isinstance(spec_or_family, CopulaSpec):
        return spec_or_family
    return CopulaSpec(CopulaFamily.parse(spec_or_family), theta)


# ---------------------------------------------------------------------------
# Interior formulas: u, v strictly inside (0, 1), theta a tensor.
# ---------------------------------------------------------------------------


def _where_small(theta, fill):
    small = theta.abs() < INDEPENDENCE_BAND
    return small, torch.where(small, torch.full_like(theta, fill), theta)


def _frank_pos_lognum(a, u, v):
    # log(e^{-au}(1-e^{-av}) + e^{-av}(1-e^{-a(1-v)})), a > 0; both terms >= 0
    return torch.logaddexp(
        -a * u + torch.log(-torch.expm1(-a * v)),
        -a * v + torch.log(-torch.expm1(-a * (1 - v))),
    )


def _frank_split(t):
    # moderate |t| uses the expm1/log1p form, large |t| the log-space form
    moderate = t.abs() < 1.0
    tm = torch.where(moderate, t, torch.ones_like(t))
    a = torch.where(moderate, torch.ones_like(t), t.abs())
    return moderate, tm, a


def _frank_cdf(theta, u, v):
    small, t = _where_small(theta, 1.0)
    moderate, tm, a = _frank_split(t)
    mid = -torch.log1p(torch.expm1(-tm * u) * torch.expm1(-tm * v) / torch.expm1(-tm)) / tm
    pos = t > 0
    vv = torch.where(pos, v, 1 - v)
    big = -(_frank_pos_lognum(a, u, vv) - torch.log(-torch.expm1(-a))) / a
    # C_{-a}(u, v) = u - C_a(u, 1 - v)
    big = torch.where(pos, big, u - big)
    uv = u * v * (1 - u) * (1 - v)
    taylor = u * v + theta * uv / 2 + theta * theta * uv * (1 - 2 * u) * (1 - 2 * v) / 12
    return torch.where(small, taylor, torch.where(moderate, mid, big))


def _frank_du(theta, u, v):
    small, t = _where_small(theta, 1.0)
    moderate, tm, a = _frank_split(t)
    ev = torch.expm1(-tm * v)
    mid = torch.exp(-tm * u) * ev / (torch.expm1(-tm) + torch.expm1(-tm * u) * ev)
    pos = t > 0
    vv = torch.where(pos, v, 1 - v)
    big = torch.exp(-a * u + torch.log(-torch.expm1(-a * vv)) - _frank_pos_lognum(a, u, vv))
    big = torch.where(pos, big, 1 - big)
    vw = v * (1 - v)
    taylor = v + theta * (1 - 2 * u) * vw / 2 + theta * theta * vw * (1 - 2 * v) * (6 * u * u - 6 * u + 1) / 12
    return torch.where(small, taylor, torch.where(moderate, mid, big))


def _clayton_logbase(t, lu, lv):
    # log(u^-t + v^-t - 1) and its positivity: log1p form for small |t|, max-shift otherwise
    m = torch.maximum(torch.maximum(-t * lu, -t * lv), torch.zeros_like(t))
    s = torch.exp(-t * lu - m) + torch.exp(-t * lv - m) - torch.exp(-m)
    pos = s > 0
    big = m + torch.log(torch.where(pos, s, torch.ones_like(s)))
    moderate = t.abs() < 0.5
    tm = torch.where(moderate, t, torch.full_like(t, 0.5))
    x = torch.expm1(-tm * lu) + torch.expm1(-tm * lv)
    pos_mid = x > -1
    mid = torch.log1p(torch.where(pos_mid, x, torch.zeros_like(x)))
    return torch.where(moderate, mid, big), torch.where(moderate, pos_mid, pos)


def _clayton_cdf(theta, u, v):
    small, t = _where_small(theta, 1.0)
    lu, lv = torch.log(u), torch.log(v)
    lb, pos = _clayton_logbase(t, lu, lv)
    c = torch.where(pos, torch.exp(-lb / t), torch.zeros_like(lb))
    taylor = u * v * torch.exp(theta * lu * lv * (1 + theta * (lu + lv) / 2))
    return torch.where(small, taylor, c)


def _clayton_du(theta, u, v):
    small, t = _where_small(theta, 1.0)
    lu, lv = torch.log(u), torch.log(v)
    lb, pos = _clayton_logbase(t, lu, lv)
    d = torch.where(pos, torch.exp((-t - 1) * lu + (-1 / t - 1) * lb), torch.zeros_like(lb))
    g = theta * lu * lv * (1 + theta * (lu + lv) / 2)
    taylor = v * torch.exp(g) * (1 + theta * lv + theta * theta * lv * (2 * lu + lv) / 2)
    return torch.where(small, taylor, d)


def _gumbel_parts(theta, u, v):
    x, y = -torch.log(u), -torch.log(v)
    mx, mn = torch.maximum(x, y), torch.minimum(x, y)
    log_s = theta * torch.log(mx) + torch.log1p((mn / mx) ** theta)
    return x, log_s


def _gumbel_cdf(theta, u, v):
    _, log_s = _gumbel_parts(theta, u, v)
    return torch.exp(-torch.exp(log_s / theta))


def _gumbel_du(theta, u, v):
    x, log_s = _gumbel_parts(theta, u, v)
    log_c = -torch.exp(log_s / theta)
    return torch.exp(log_c + (1 / theta - 1) * log_s + (theta - 1) * torch.log(x) - torch.log(u))


def _joe_parts(theta, u, v):
    a = (1 - u) ** theta
    b = (1 - v) ** theta
    return a, b, a + b - a * b


def _joe_cdf(theta, u, v):
    _, _, t = _joe_parts(theta, u, v)
    return 1 - t ** (1 / theta)


def _joe_du(theta, u, v):
    _, b, t = _joe_parts(theta, u, v)
    return torch.exp((theta - 1) * torch.log1p(-u) + torch.log1p(-b) + (1 / theta - 1) * torch.log(t))


def _amh_cdf(theta, u, v):
    return u * v / (1 - theta * (1 - u) * (1 - v))


def _amh_du(theta, u, v):
    den = 1 - theta * (1 - u) * (1 - v)
    return v * (1 - theta * (1 - v)) / (den * den)


def _fgm_cdf(theta, u, v):
    return u * v * (1 + theta * (1 - u) * (1 - v))


def _fgm_du(theta, u, v):
    return v * (1 + theta * (1 - v) * (1 - 2 * u))


def _gaussian_cdf(theta, u, v):
    return bvn_cdf(torch.special.ndtri(u), torch.special.ndtri(v), theta)


def _gaussian_du(theta, u, v):
    x, y = torch.special.ndtri(u), torch.special.ndtri(v)
    return torch.special.ndtr((y - theta * x) / torch.sqrt((1 - theta) * (1 + theta)))


def _product_cdf(theta, u, v):
    return u * v


def _product_du(theta, u, v):
    return v + 0 * u


_CDF = {
    CopulaFamily.GAUSSIAN: _gaussian_cdf,
    CopulaFamily.CLAYTON: _clayton_cdf,
    CopulaFamily.GUMBEL: _gumbel_cdf,
    CopulaFamily.JOE: _joe_cdf,
    CopulaFamily.AMH: _amh_cdf,
    CopulaFamily.FRANK: _frank_cdf,
    CopulaFamily.FGM: _fgm_cdf,
    CopulaFamily.PRODUCT: _product_cdf,
}

_DU = {
    CopulaFamily.GAUSSIAN: _gaussian_du,
    CopulaFamily.CLAYTON: _clayton_du,
    CopulaFamily.GUMBEL: _gumbel_du,
    CopulaFamily.JOE: _joe_du,
    CopulaFamily.AMH: _amh_du,
    CopulaFamily.FRANK: _frank_du,
    CopulaFamily.FGM: _fgm_du,
    CopulaFamily.PRODUCT: _product_du,
}


def cdf_t(family: CopulaFamily, theta, u, v):
    """Vectorised, differentiable C_theta(u, v) on torch tensors.

    Handles the boundary of the unit square exactly (grounding and uniform
    margins) and keeps gradients finite there.
    """
    theta = as_tensor(0.0 if theta is None else theta)
    u, v, theta = torch.broadcast_tensors(as_tensor(u), as_tensor(v), theta)
    zero = (u <= 0) | (v <= 0)
    u_one, v_one = u >= 1, v >= 1
    edge = zero | u_one | v_one
    half = torch.full_like(u, 0.5)
    inner = _CDF[family](theta, torch.where(edge, half, u), torch.where(edge, half, v))
    edge_val = torch.where(zero, torch.zeros_like(u), torch.where(u_one, v, u))
    return torch.where(edge, edge_val, inner)


def partial_u_t(family: CopulaFamily, theta, u, v):
    """Vectorised dC/du for u strictly inside (0, 1)."""
    theta = as_tensor(0.0 if theta is None else theta)
    u, v, theta = torch.broadcast_tensors(as_tensor(u), as_tensor(v), theta)
    v_zero, v_one = v <= 0, v >= 1
    edge = v_zero | v_one
    inner = _DU[family](theta, u, torch.where(edge, torch.full_like(v, 0.5), v))
    out = torch.where(v_zero, torch.zeros_like(u), torch.where(v_one, torch.ones_like(u), inner))
    return torch.clamp(out, 0.0, 1.0)


def _check_unit(name, x):
    arr = np.asarray(to_numpy(x), dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"{name} must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def cdf(spec: CopulaSpec, u, v):
    """Evaluate the copula C_theta(u, v).

    Parameters
    ----------
    spec : CopulaSpec
        Family and dependence parameter.
    u, v : float or array-like
        Points in [0, 1]; broadcast against each other.

    Returns
    -------
    float or ndarray
        Copula values; a tensor when tensors were passed in.

    Examples
    --------
    >>> round(cdf(CopulaSpec("clayton", 2.0), 0.5, 0.5), 6)
    0.377964
    """
    spec = _spec(spec)
    _check_unit("u", u)
    _check_unit("v", v)
    return tensor_io(lambda a, b: cdf_t(spec.family, spec.theta, a, b))(u, v)


def partial_u(spec: CopulaSpec, u, v):
    """Conditional CDF of V given U=u, i.e. dC/du, for u in (0, 1)."""
    spec = _spec(spec)
    arr = np.asarray(to_numpy(u), dtype=float)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError("partial_u is undefined at the u boundary {0, 1}")
    _check_unit("v", v)
    return tensor_io(lambda a, b: partial_u_t(spec.family, spec.theta, a, b))(u, v)


def rectangle_mass(spec: CopulaSpec, u1, u2, v1, v2):
    """Probability mass of [u1, u2] x [v1, v2] by inclusion-exclusion.

    Tiny negative round-off (above -1e-10) is clamped to zero; anything more
    negative means the copula is not 2-increasing and raises.
    """
    spec = _spec(spec)
    u1, u2, v1, v2 = (np.asarray(to_numpy(x), dtype=float) for x in (u1, u2, v1, v2))
    for name, x in (("u1", u1), ("u2", u2), ("v1", v1), ("v2", v2)):
        _check_unit(name, x)
    if np.any(u1 > u2) or np.any(v1 > v2):
        raise DomainError("rectangle bounds must satisfy u1 <= u2 and v1 <= v2")
    c = lambda a, b: to_numpy(cdf_t(spec.family, spec.theta, a, b))  # noqa: E731
    mass = np.asarray(c(u2, v2) - c(u2, v1) - c(u1, v2) + c(u1, v1))
    if np.any(mass < -NEGATIVE_MASS_TOL):
        raise ConsistencyError(f"negative rectangle mass {mass.min():.3e} for {spec}")
    mass = np.clip(mass, 0.0, 1.0)
    return mass.item() if mass.ndim == 0 else mass


def _debye1(x: float) -> float:
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0 else 1.0, 0.0, x, epsabs=1e-13, epsrel=1e-12)
    return val / x


def kendall_tau(spec: CopulaSpec) -> float:
    """Population Kendall's tau of the copula."""
    spec = _spec(spec)
    f, t = spec.family, spec.theta
    if f is CopulaFamily.PRODUCT:
        return 0.0
    if f is CopulaFamily.GAUSSIAN:
        return 2.0 / math.pi * math.asin(t)
    if f is CopulaFamily.CLAYTON:
        return t / (t + 2.0)
    if f is CopulaFamily.GUMBEL:
        return (t - 1.0) / t
    if f is CopulaFamily.FGM:
        return 2.0 * t / 9.0
    if f is CopulaFamily.AMH:
        if abs(t) < INDEPENDENCE_BAND:
            return 2.0 * t / 9.0
        if t == 1.0:
            return 1.0 / 3.0
        return (3 * t - 2) / (3 * t) - 2 * (1 - t) ** 2 * math.log1p(-t) / (3 * t * t)
    if f is CopulaFamily.FRANK:
        if abs(t) < INDEPENDENCE_BAND:
            return t / 9.0
        return 1.0 - 4.0 / t * (1.0 - _debye1(t))
    if f is CopulaFamily.JOE:
        # 1 + 2 / theta * (psi(2) - psi(2 + d)) / d with d = 2 / theta - 1
        d = 2.0 / t - 1.0
        if abs(d) < 1e-3:
            ratio = -sum(special.polygamma(n, 2.0) * d ** (n - 1) / math.factorial(n) for n in range(1, 6))
        else:
            ratio = (special.digamma(2.0) - special.digamma(2.0 + d)) / d
        return 1.0 + 2.0 * float(ratio) / t
    raise AssertionError(f)


def _bisect(family, theta, u, t):
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    uu = as_tensor(u)
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        val = partial_u_t(family, theta, uu, as_tensor(mid)).numpy()
        below = val < t
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= BISECTION_TOL:
            return 0.5 * (lo + hi)
    raise NumericalError(f"bisection did not converge after {BISECTION_MAX_ITER} iterations")


def sample(spec: CopulaSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` pairs (U, V) with joint CDF C_theta by the conditional method.

    Returns an ``(n, 2)`` array. Clayton sampling requires theta >= 0.
    """
    spec = _spec(spec)
    f, th = spec.family, spec.theta
    u = rng.uniform(size=n)
    w = rng.uniform(size=n)
    if f is CopulaFamily.PRODUCT or (th is not None and abs(th - independence_theta(f)) < INDEPENDENCE_BAND):
        return np.column_stack([u, w])
    if f is CopulaFamily.GAUSSIAN:
        z1 = stats.norm.ppf(u)
        z2 = th * z1 + math.sqrt((1 - th) * (1 + th)) * stats.norm.ppf(w)
        return np.column_stack([u, stats.norm.cdf(z2)])
    if f is CopulaFamily.FRANK:
        num = w * math.expm1(-th)
        den = w + (1 - w) * np.exp(-th * u)
        v = -np.log1p(num / den) / th
    elif f is CopulaFamily.CLAYTON:
        if th < 0:
            raise DomainError("Clayton sampling supports theta >= 0 only")
        v = ((w ** (-th / (1 + th)) - 1) * u ** (-th) + 1) ** (-1 / th)
    elif f is CopulaFamily.FGM:
        a = th * (1 - 2 * u)
        # rationalised root of a v^2 - (1 + a) v + w = 0, stable as a -> 0
        v = 2 * w / ((1 + a) + np.sqrt((1 + a) ** 2 - 4 * a * w))
    else:
        v = _bisect(f, as_tensor(th), u, w)
    return np.column_stack([u, np.clip(v, 0.0, 1.0)])


def sample_pair(spec: CopulaSpec, rng: np.random.Generator) -> tuple[float, float]:
    u, v = sample(spec, 1, rng)[0]
    return float(u), float(v)


def sample_kendall_tau(pairs: np.ndarray) -> float:
    return float(stats.kendalltau(pairs[:, 0], pairs[:, 1]).statistic)


__all__ = [
    "CopulaFamily",
    "CopulaSpec",
    "ThetaVerdict",
    "cdf",
    "cdf_t",
    "independence_theta",
    "kendall_tau",
    "legal_interval",
    "partial_u",
    "partial_u_t",
    "rectangle_mass",
    "sample",
    "sample_kendall_tau",
    "sample_pair",
    "validate_theta",
    "DTYPE",
]
