"""Archimedean generator families and the radial laws they induce.

Implements the Clayton, Joe and Frank generators psi with inverse phi,
exact derivatives of every order, and the positive distribution whose
survival-moment transform E[(1 - x/R)_+^(d-1)] reproduces psi.  That
distribution drives every sampling and likelihood routine downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import CapabilityError, NumericalError, ValidationError

FAMILIES = ("clayton", "joe", "frank")

#: Highest derivative order served by the exact expansions.  Stirling
#: numbers of the second kind overflow float64 well above this.
MAX_DERIVATIVE_ORDER = 40

_TINY = 1e-300


@lru_cache(maxsize=None)
def _stirling2(m):
    """Row S(m, k), k = 0..m, of Stirling numbers of the second kind."""
    row = np.zeros(m + 1)
    row[0] = 1.0
    for _ in range(m):
        prev = row.copy()
        row[1:] = np.arange(1, m + 1) * prev[1:] + prev[:-1]
        row[0] = 0.0
    return row


def _falling(a, k):
    """Falling factorial a (a-1) ... (a-k+1), with the empty product = 1."""
    out = 1.0
    for i in range(k):
        out *= a - i
    return out


def _as_array(x, name, minimum=None, strict=False):
    arr = np.asarray(x, dtype=float)
    if minimum is not None:
        bad = arr <= minimum if strict else arr < minimum
        if np.any(bad):
            op = ">" if strict else ">="
            raise ValidationError(f"{name} must satisfy {name} {op} {minimum}")
    return arr


def _scalar_out(arr, scalar_in):
    return float(arr) if scalar_in else arr


@dataclass(frozen=True)
class ArchimedeanGenerator:
    """Parametric Archimedean generator psi_theta.

    Supported families (theta domains): ``clayton`` (theta > 0), ``joe``
    (theta >= 1) and ``frank`` (theta > 0).  All three are completely
    monotone, hence valid in every dimension, with psi(0) = 1,
    psi decreasing and psi(x) -> 0 as x -> infinity.
    """

    family: str
    theta: float

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise ValidationError(
                f"unknown generator family {self.family!r}; expected one of {FAMILIES}",
                code="param-domain",
            )
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "theta", float(self.theta))
        if fam == "joe":
            if self.theta < 1.0:
                raise ValidationError("joe requires theta >= 1", code="param-domain")
        elif self.theta <= 0.0:
            raise ValidationError(f"{fam} requires theta > 0", code="param-domain")

    # -- psi / phi ---------------------------------------------------------

    def psi(self, x):
        """Evaluate psi(x) for x >= 0."""
        scalar = np.ndim(x) == 0
        x = _as_array(x, "x", minimum=0.0)
        th = self.theta
        if self.family == "clayton":
            out = np.power(1.0 + th * x, -1.0 / th)
        elif self.family == "joe":
            with np.errstate(invalid="ignore"):
                out = 1.0 - np.power(-np.expm1(-x), 1.0 / th)
            out = np.where(np.isinf(x), 0.0, out)
        else:  # frank
            out = -np.log1p(np.expm1(-th) * np.exp(-x)) / th
        return _scalar_out(out, scalar)

    def phi(self, u):
        """Inverse generator phi(u) on (0, 1], extended with phi(0) = inf."""
        scalar = np.ndim(u) == 0
        u = _as_array(u, "u")
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ValidationError("phi requires u in [0, 1]", code="param-domain")
        th = self.theta
        with np.errstate(divide="ignore", over="ignore"):
            if self.family == "clayton":
                out = np.expm1(-th * np.log(u)) / th
            elif self.family == "joe":
                out = -np.log1p(-np.exp(th * np.log1p(-u)))
            else:  # frank
                out = -np.log(np.expm1(-th * u) / np.expm1(-th))
        out = np.where(u == 0.0, np.inf, out)
        # exact endpoint: phi(1) = 0 regardless of rounding above
        out = np.where(u == 1.0, 0.0, out)
        return _scalar_out(out, scalar)

    def phi_prime(self, u):
        """Derivative of phi on (0, 1); equals 1 / psi'(phi(u)) (negative)."""
        scalar = np.ndim(u) == 0
        u = _as_array(u, "u", minimum=0.0, strict=True)
        if np.any(u >= 1.0):
            raise ValidationError("phi_prime requires u in (0, 1)", code="param-domain")
        out = 1.0 / self.derivative(1, self.phi(u))
        return _scalar_out(out, scalar)

    # -- derivatives -------------------------------------------------------

    def derivative(self, m, x, method="exact"):
        """m-th derivative of psi at x > 0 (signed).

        ``method="exact"`` uses closed forms: falling factorials for
        Clayton, and for Joe/Frank the expansion of (-y d/dy)^m through
        Stirling numbers of the second kind.  ``method="fd"`` is a
        Richardson-extrapolated central difference, kept as a low-accuracy
        cross-check (roughly 1e-6 relative).
        """
        m = int(m)
        if m < 0:
            raise ValidationError("derivative order must be >= 0")
        if m == 0:
            return self.psi(x)
        if m > MAX_DERIVATIVE_ORDER:
            raise CapabilityError(
                f"derivative order {m} exceeds the supported maximum "
                f"{MAX_DERIVATIVE_ORDER}"
            )
        if method == "fd":
            return self._derivative_fd(m, x)
        if method != "exact":
            raise ValidationError(f"unknown derivative method {method!r}")
        scalar = np.ndim(x) == 0
        x = _as_array(x, "x", minimum=0.0, strict=m > 0)
        th = self.theta
        if self.family == "clayton":
            coef = 1.0
            for j in range(1, m):
                coef *= 1.0 + j * th
            out = (-1.0) ** m * coef * np.power(1.0 + th * x, -1.0 / th - m)
        elif self.family == "joe":
            alpha = 1.0 / th
            t = -np.expm1(-x)  # 1 - e^{-x}
            ex = np.exp(-x)
            s2 = _stirling2(m)
            out = np.zeros_like(t)
            for k in range(1, m + 1):
                term = s2[k] * _falling(alpha, k)
                out += ((-1.0) ** (m + k - 1)) * term * ex**k * t ** (alpha - k)
        else:  # frank
            # w = y/(1-y) with y = (1-e^{-theta}) e^{-x}, computed stably
            w = -np.expm1(-th) / (np.expm1(x) + np.exp(-th))
            s2 = _stirling2(m)
            out = np.zeros_like(w)
            for k in range(1, m + 1):
                out += s2[k] * math.factorial(k - 1) * w**k
            out *= (-1.0) ** m / th
        return _scalar_out(out, scalar)

    def _derivative_fd(self, m, x):
        scalar = np.ndim(x) == 0
        x = _as_array(x, "x", minimum=0.0, strict=True)
        h = np.minimum(1e-2, x / (m + 1)) * (0.5 if m > 2 else 1.0)
        offsets = np.arange(-m, m + 1)
        weights = _fd_weights(m)

        def stencil(step):
            nodes = x[..., None] + offsets * step[..., None]
            vals = self.psi(np.maximum(nodes, _TINY))
            return (vals * weights).sum(axis=-1) / step**m

        d1 = stencil(h)
        d2 = stencil(h / 2.0)
        # the symmetric stencil has O(h^2) error; one Richardson step
        out = d2 + (d2 - d1) / 3.0
        return _scalar_out(out, scalar)

    def attractor_alpha(self):
        """Index of regular variation of 1 - psi(1/x): 1/theta for Joe, else 1."""
        return 1.0 / self.theta if self.family == "joe" else 1.0

    def to_dict(self):
        return {"family": self.family, "theta": self.theta}


def _unchecked_generator(family, theta):
    """Generator instance bypassing the family domain check.

    The estimation layer extends its moment functionals smoothly below the
    Joe domain boundary theta = 1, where the formulas remain well-defined
    functions even though psi is no longer a valid generator.
    """
    gen = object.__new__(ArchimedeanGenerator)
    object.__setattr__(gen, "family", family)
    object.__setattr__(gen, "theta", float(theta))
    return gen


@lru_cache(maxsize=None)
def _fd_weights(m):
    """Central finite-difference weights for the m-th derivative."""
    offsets = np.arange(-m, m + 1)
    a = np.vander(offsets, increasing=True).T.astype(float)
    b = np.zeros(len(offsets))
    b[m] = math.factorial(m)
    return np.linalg.solve(a, b)


def _invert_monotone_log(cdf, p, hi, pdf=None, iters=64):
    """Solve cdf(r) = p for r > 0 by log-space bisection, vectorized.

    ``hi`` is a per-element upper bracket.  A Newton polish with ``pdf``
    (when supplied) tightens the bisection result.  Every step is purely
    elementwise, so results do not depend on how requests are batched.
    """
    p = np.asarray(p, dtype=float)
    lo_t = np.full(p.shape, math.log(_TINY))
    hi_t = np.log(np.broadcast_to(np.asarray(hi, dtype=float), p.shape)).copy()
    for _ in range(iters):
        mid = 0.5 * (lo_t + hi_t)
        ge = cdf(np.exp(mid)) >= p
        hi_t = np.where(ge, mid, hi_t)
        lo_t = np.where(ge, lo_t, mid)
    r = np.exp(0.5 * (lo_t + hi_t))
    if pdf is not None:
        for _ in range(2):
            f = pdf(r)
            step = np.where(f > 0.0, (cdf(r) - p) / np.where(f > 0.0, f, 1.0), 0.0)
            r = np.clip(r - step, np.exp(lo_t), np.exp(hi_t))
    return r


@dataclass(frozen=True)
class RadialDistribution:
    """Distribution of the positive scale variable attached to (psi, d).

    Its distribution function is the d-monotone inversion formula

        F(r) = 1 - sum_{j=0}^{d-1} (-1)^j r^j psi^(j)(r) / j!

    and, psi being d-times differentiable here, its density is
    f(r) = (-1)^d r^(d-1) psi^(d)(r) / (d-1)!.
    """

    generator: ArchimedeanGenerator
    d: int

    def __post_init__(self):
        d = int(self.d)
        if d < 2:
            raise ValidationError("radial dimension d must be >= 2", code="param-domain")
        object.__setattr__(self, "d", d)

    def cdf(self, r):
        scalar = np.ndim(r) == 0
        r = _as_array(r, "r", minimum=0.0)
        rpos = np.maximum(r, _TINY)
        out = np.ones_like(rpos)
        term = np.ones_like(rpos)  # (-1)^j r^j / j!, j = 0
        for j in range(self.d):
            out = out - term * self.generator.derivative(j, rpos)
            term = term * (-rpos) / (j + 1)
        out = np.clip(out, 0.0, 1.0)
        out = np.where(r == 0.0, 0.0, out)
        return _scalar_out(out, scalar)

    def pdf(self, r):
        scalar = np.ndim(r) == 0
        r = _as_array(r, "r", minimum=0.0)
        rpos = np.maximum(r, _TINY)
        gen, d = self.generator, self.d
        if gen.family == "clayton":
            th = gen.theta
            coef = 1.0
            for j in range(1, d):
                coef *= 1.0 + th * j
            out = (
                np.power(1.0 + th * rpos, -d - 1.0 / th)
                * rpos ** (d - 1)
                / math.factorial(d - 1)
                * coef
            )
        else:
            out = (
                (-1.0) ** d
                * rpos ** (d - 1)
                * gen.derivative(d, rpos)
                / math.factorial(d - 1)
            )
        out = np.maximum(out, 0.0)
        out = np.where(r == 0.0, 0.0, out)
        return _scalar_out(out, scalar)

    def quantile(self, p):
        """Inverse CDF, accurate to |F(q) - p| <~ 1e-10; vectorized.

        The upper bracket is doubled per element, so results are identical
        however requests are batched.
        """
        scalar = np.ndim(p) == 0
        p = _as_array(p, "p")
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValidationError("quantile requires p in (0, 1)", code="param-domain")
        hi = np.ones(p.shape)
        for _ in range(1100):
            low = self.cdf(hi) < p
            if not np.any(low):
                break
            hi = np.where(low, hi * 2.0, hi)
        else:
            raise NumericalError(
                f"failed to bracket the radial quantile of {self.generator} "
                f"(d = {self.d}) at p = {float(np.max(p)):.17g}"
            )
        out = _invert_monotone_log(self.cdf, np.atleast_1d(p), np.atleast_1d(hi),
                                   pdf=self.pdf)
        out = out.reshape(p.shape)
        return _scalar_out(out, scalar)


def williamson_transform(radial, d, x):
    """Survival-moment transform E[(1 - x/R)_+^(d-1)] of a radial law.

    ``radial`` is either a :class:`RadialDistribution` (integrated against
    its density with adaptive quadrature) or a 1-d sample array (plain
    sample mean).  ``x`` may be a scalar or an array.
    """
    d = int(d)
    if d < 2:
        raise ValidationError("williamson_transform requires d >= 2")
    scalar = np.ndim(x) == 0
    x = _as_array(x, "x", minimum=0.0)
    if isinstance(radial, RadialDistribution):
        flat = np.atleast_1d(x).ravel()
        vals = np.empty(flat.shape)
        for i, xi in enumerate(flat):
            if xi == 0.0:
                vals[i] = 1.0
                continue
            val, _ = integrate.quad(
                lambda r: (1.0 - xi / r) ** (d - 1) * radial.pdf(r),
                xi,
                np.inf,
                epsabs=1e-11,
                epsrel=1e-11,
                limit=200,
            )
            vals[i] = min(max(val, 0.0), 1.0)
        out = vals.reshape(np.shape(x))
    else:
        sample = np.asarray(radial, dtype=float).ravel()
        if sample.size == 0 or np.any(sample <= 0.0):
            raise ValidationError("radial sample must be positive and non-empty")
        ratio = 1.0 - x[..., None] / sample
        out = np.mean(np.maximum(ratio, 0.0) ** (d - 1), axis=-1)
    return _scalar_out(np.asarray(out), scalar)
