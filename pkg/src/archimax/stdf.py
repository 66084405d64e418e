"""Stable tail dependence functions (stdfs).

Built-ins: the logistic (Gumbel-Hougaard) family, the independence stdf,
the extreme-value transform ell^alpha(x^(1/alpha)) and a Monte Carlo
variant driven by an arbitrary unit-mean positive vector sampler through
the representation ell(x) = E max_i x_i W_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CapabilityError, ValidationError

#: off-simplex tolerance policy for Pickands evaluation: deviations of
#: |sum w - 1| up to RENORM_TOL are renormalized silently, anything larger
#: is rejected.
SIMPLEX_TOL = 1e-12
RENORM_TOL = 1e-9


def _check_vector(x, dim, name="x"):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValidationError(
            f"{name} has {x.shape[-1]} coordinates, stdf expects {dim}"
        )
    if np.any(x < 0.0):
        raise ValidationError(f"{name} must be componentwise nonnegative")
    return x


class Stdf:
    """Base class: a d-variate stdf evaluated through :meth:`ell`."""

    dim: int

    def ell(self, x):
        raise NotImplementedError

    def pickands(self, w):
        """Restriction to the unit simplex, A(w) = ell(w) for sum w = 1."""
        w = _check_vector(w, self.dim, name="w")
        dev = np.abs(w.sum(axis=-1) - 1.0)
        if np.any(dev > RENORM_TOL):
            raise ValidationError(
                f"w is off the unit simplex by {float(np.max(dev)):.3g} "
                f"(tolerance {RENORM_TOL:g})"
            )
        if np.any(dev > SIMPLEX_TOL):
            w = w / w.sum(axis=-1, keepdims=True)
        return self.ell(w)

    def pair_pattern(self, i, j):
        """Vector with ones at coordinates i and j, zeros elsewhere."""
        x = np.zeros(self.dim)
        x[i] = 1.0
        x[j] = 1.0
        return x


@dataclass(frozen=True)
class LogisticStdf(Stdf):
    """ell(x) = (sum x_i^vartheta)^(1/vartheta), vartheta >= 1."""

    vartheta: float
    dim: int

    def __post_init__(self):
        if self.vartheta < 1.0:
            raise ValidationError("logistic stdf requires vartheta >= 1", code="param-domain")
        if int(self.dim) < 1:
            raise ValidationError("stdf dimension must be >= 1", code="param-domain")
        object.__setattr__(self, "vartheta", float(self.vartheta))
        object.__setattr__(self, "dim", int(self.dim))

    def ell(self, x):
        x = _check_vector(x, self.dim)
        vt = self.vartheta
        scale = np.max(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = x / np.where(scale > 0.0, scale, 1.0)[..., None]
            out = scale * np.power(np.sum(ratio**vt, axis=-1), 1.0 / vt)
        return np.where(scale > 0.0, out, 0.0)[()]

    def to_dict(self):
        return {"family": "logistic", "vartheta": self.vartheta, "dim": self.dim}


@dataclass(frozen=True)
class IndependenceStdf(Stdf):
    """ell(x) = sum x_i, the asymptotic-independence stdf."""

    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValidationError("stdf dimension must be >= 1", code="param-domain")
        object.__setattr__(self, "dim", int(self.dim))

    def ell(self, x):
        x = _check_vector(x, self.dim)
        return np.sum(x, axis=-1)[()]

    def to_dict(self):
        return {"family": "independence", "dim": self.dim}


@dataclass(frozen=True)
class AlphaTransformedStdf(Stdf):
    """Extreme-value transform ell_alpha(x) = ell(x^(1/alpha))^alpha."""

    base: Stdf
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]", code="param-domain")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "dim", self.base.dim)

    def ell(self, x):
        x = _check_vector(x, self.dim)
        return np.power(self.base.ell(np.power(x, 1.0 / self.alpha)), self.alpha)[()]


@dataclass(frozen=True)
class DNormMCStdf(Stdf):
    """Monte Carlo stdf from a unit-mean positive sampler W.

    ``w_sampler(rng, n)`` must return an (n, dim) array of positive entries
    with unit mean per coordinate.  Evaluation draws ``n_samples`` vectors
    from a fresh seeded generator on every call, so results are
    deterministic for a fixed seed.
    """

    w_sampler: Callable
    dim: int
    n_samples: int = 100_000
    seed: int = 0

    def ell(self, x):
        est, _ = dnorm_mc_eval(self.w_sampler, x, self.n_samples, self.seed, dim=self.dim)
        return est

    def ell_with_error(self, x):
        return dnorm_mc_eval(self.w_sampler, x, self.n_samples, self.seed, dim=self.dim)


def dnorm_mc_eval(w_sampler, x, n, seed, dim=None):
    """Monte Carlo mean of max_i x_i W_i with its standard error.

    Deterministic for fixed ``seed``; a private counter-based generator is
    created per call.  Returns ``(estimate, std_error)``.
    """
    if int(n) < 1:
        raise ValidationError("sample count n must be >= 1")
    x = np.asarray(x, dtype=float)
    if dim is not None and x.shape[-1] != dim:
        raise ValidationError(f"x has {x.shape[-1]} coordinates, expected {dim}")
    if np.any(x < 0.0):
        raise ValidationError("x must be componentwise nonnegative")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    w = np.asarray(w_sampler(rng, int(n)), dtype=float)
    if w.ndim != 2 or w.shape[1] != x.shape[-1]:
        raise ValidationError("w_sampler must return an (n, dim) array")
    vals = np.max(x[..., None, :] * w, axis=-1)
    est = vals.mean(axis=-1)
    se = vals.std(axis=-1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(est)
    return est[()], se[()]


def logistic_w_sampler(vartheta, dim):
    """Unit-mean generator of the logistic stdf.

    For vartheta > 1 returns W_i = E_i^(-1/vartheta) / Gamma(1 - 1/vartheta)
    with E_i i.i.d. unit exponentials (independent normalized Frechet
    coordinates); vartheta = 1 degenerates to the independence generator.
    """
    if vartheta < 1.0:
        raise ValidationError("logistic generator requires vartheta >= 1")
    if vartheta == 1.0:
        return independence_w_sampler(dim)
    norm = math.gamma(1.0 - 1.0 / vartheta)

    def sampler(rng, n):
        e = -np.log1p(-rng.random((n, dim)))
        e = np.maximum(e, 1e-300)
        return np.power(e, -1.0 / vartheta) / norm

    return sampler


def independence_w_sampler(dim):
    """Unit-mean generator of the independence stdf.

    Each draw is a uniformly random permutation of (dim, 0, ..., 0), which
    realizes E max_i x_i W_i = sum_i x_i.
    """

    def sampler(rng, n):
        w = np.zeros((n, dim))
        idx = rng.integers(0, dim, size=n)
        w[np.arange(n), idx] = float(dim)
        return w

    return sampler


def alpha_transform(ell, alpha):
    """Extreme-value attractor transform of an stdf.

    Returns the stdf x -> ell(x^(1/alpha))^alpha.  alpha = 1 is the
    identity; logistic inputs simplify exactly to logistic(vartheta/alpha);
    nested transforms collapse by multiplying their exponents.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValidationError("alpha must lie in (0, 1]", code="param-domain")
    if alpha == 1.0:
        return ell
    if isinstance(ell, LogisticStdf):
        return LogisticStdf(ell.vartheta / alpha, ell.dim)
    if isinstance(ell, IndependenceStdf):
        return LogisticStdf(1.0 / alpha, ell.dim)
    if isinstance(ell, AlphaTransformedStdf):
        return alpha_transform(ell.base, ell.alpha * alpha)
    return AlphaTransformedStdf(ell, alpha)


def upper_tail_coeff(ell):
    """Upper tail dependence coefficient 2 - ell(1, 1) of a bivariate stdf.

    Clamped to [0, 1] to absorb Monte Carlo noise of sampled variants.
    """
    if ell.dim != 2:
        raise ValidationError("upper_tail_coeff requires a bivariate stdf")
    return float(np.clip(2.0 - ell.ell([1.0, 1.0]), 0.0, 1.0))
