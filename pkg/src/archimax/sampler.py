"""Model specification and exact simulation of clustered Archimax vectors.

A sample row is built cluster by cluster as U_k = psi_k(R_k * S_k): the
radial variables (R_1, ..., R_K) are drawn by inverting their CDFs at
survival-copula uniforms, and each S_k is an ell_k-simplex vector with
joint survival [max(0, 1 - ell_k(s))]^(d_k - 1).

Randomness contract: every public sampler consumes a fixed-width block of
uniforms per output row from a counter-based Philox stream, so for a fixed
seed the i-th row never depends on the requested sample size or on any
parallelism, and repeated calls are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import CapabilityError, ValidationError
from .generator import ArchimedeanGenerator, RadialDistribution, _falling
from .stdf import IndependenceStdf, LogisticStdf, Stdf

_U_FLOOR = 5e-324  # guards -log/ndtri against the measure-zero 0.0 draw


@dataclass(frozen=True)
class ClusterPartition:
    """Ordered partition of {0, ..., d-1} into blocks of size >= 2."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        if not blocks:
            raise ValidationError("partition needs at least one block", code="partition-empty")
        seen = set()
        for b in blocks:
            if len(b) < 2:
                raise ValidationError(
                    f"cluster {b} has fewer than two members", code="partition-singleton"
                )
            if seen.intersection(b):
                raise ValidationError(
                    f"cluster {b} overlaps a previous one", code="partition-overlap"
                )
            seen.update(b)
        d = max(seen) + 1
        if seen != set(range(d)):
            raise ValidationError(
                "cluster blocks must cover 0..d-1 without gaps", code="partition-cover"
            )
        object.__setattr__(self, "blocks", blocks)

    @property
    def d(self):
        return sum(len(b) for b in self.blocks)

    @property
    def n_clusters(self):
        return len(self.blocks)

    @property
    def sizes(self):
        return tuple(len(b) for b in self.blocks)

    def cluster_of(self, i):
        for k, b in enumerate(self.blocks):
            if i in b:
                return k
        raise ValidationError(f"index {i} not covered by the partition")

    def to_dict(self):
        return [[i + 1 for i in b] for b in self.blocks]


@dataclass(frozen=True)
class RadialCopulaSpec:
    """Survival copula driving the radial vector: independence, Gaussian
    (correlation matrix) or Gumbel-Hougaard (vartheta >= 1)."""

    kind: str
    corr: np.ndarray = None
    vartheta: float = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in ("independence", "gaussian", "gumbel"):
            raise ValidationError(
                f"unknown radial copula kind {self.kind!r}", code="radial-kind"
            )
        object.__setattr__(self, "kind", kind)
        if kind == "gaussian":
            corr = np.asarray(self.corr, dtype=float)
            if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
                raise ValidationError("corr must be a square matrix", code="radial-corr")
            if not np.allclose(corr, corr.T, atol=1e-12):
                raise ValidationError("corr must be symmetric", code="radial-corr")
            if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
                raise ValidationError("corr must have unit diagonal", code="radial-corr")
            if np.linalg.eigvalsh(corr).min() <= 1e-12:
                raise ValidationError("corr must be positive definite", code="radial-corr")
            corr.flags.writeable = False
            object.__setattr__(self, "corr", corr)
        elif kind == "gumbel":
            vt = float(self.vartheta)
            if vt < 1.0:
                raise ValidationError("gumbel radial copula requires vartheta >= 1",
                                      code="param-domain")
            object.__setattr__(self, "vartheta", vt)

    @classmethod
    def independence(cls):
        return cls("independence")

    @classmethod
    def gaussian(cls, corr):
        return cls("gaussian", corr=np.asarray(corr, dtype=float))

    @classmethod
    def gumbel(cls, vartheta):
        return cls("gumbel", vartheta=vartheta)

    def uniform_width(self, k):
        """Uniform columns consumed per row to draw a K-vector."""
        return k + 2 if self.kind == "gumbel" else k

    def to_dict(self):
        if self.kind == "gaussian":
            return {"family": "gaussian", "corr": self.corr.tolist()}
        if self.kind == "gumbel":
            return {"family": "gumbel", "vartheta": self.vartheta}
        return {"family": "independence"}


@dataclass(frozen=True)
class ClusteredModelSpec:
    """Cluster partition + per-cluster (generator, stdf) + radial copula."""

    partition: ClusterPartition
    generators: tuple
    stdfs: tuple
    radial: RadialCopulaSpec

    def __post_init__(self):
        gens = tuple(self.generators)
        stdfs = tuple(self.stdfs)
        k = self.partition.n_clusters
        if len(gens) != k or len(stdfs) != k:
            raise ValidationError(
                f"need one generator and one stdf per cluster (K = {k})",
                code="dim-mismatch",
            )
        for pos, (block, ell) in enumerate(zip(self.partition.blocks, stdfs)):
            if ell.dim != len(block):
                raise ValidationError(
                    f"stdf dim {ell.dim} does not match cluster size {len(block)}",
                    code="dim-mismatch",
                    path=f"/clusters/{pos}/stdf",
                )
        if self.radial.kind == "gaussian" and self.radial.corr.shape[0] != k:
            raise ValidationError(
                f"radial correlation matrix is {self.radial.corr.shape[0]}x"
                f"{self.radial.corr.shape[0]}, expected {k}x{k}",
                code="dim-mismatch",
                path="/radial/corr",
            )
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "stdfs", stdfs)

    @property
    def d(self):
        return self.partition.d

    @property
    def n_clusters(self):
        return self.partition.n_clusters

    def radial_distribution(self, k):
        return RadialDistribution(self.generators[k], len(self.partition.blocks[k]))


# -- composed radial law of the simplex-vector sampler ----------------------


@lru_cache(maxsize=None)
def _simplex_radial_coeffs(vartheta, d):
    """Coefficients of F(r) = sum_i q_i r^(i/vartheta) on [0, 1).

    This is the CDF whose survival-moment transform of order d equals
    psi~(x) = (1 - x^(1/vartheta))_+^(d-1); the d-monotone inversion
    formula collapses to a polynomial in r^(1/vartheta).
    """
    coeffs = []
    for i in range(1, d):
        c = math.comb(d - 1, i) * (-1.0) ** i
        e = i / vartheta
        k_const = sum((-1.0) ** j * _falling(e, j) / math.factorial(j) for j in range(d))
        coeffs.append(-c * k_const)
    return tuple(coeffs)


class _SimplexRadialLaw:
    """Radial part of the stochastic representation of an ell-simplex vector.

    Supported on (0, 1] with a possible atom at 1; ``quantile`` inverts the
    closed-form CDF by bisection in y = r^(1/vartheta).
    """

    def __init__(self, vartheta, d):
        self.vartheta = float(vartheta)
        self.d = int(d)
        self._q = np.asarray(_simplex_radial_coeffs(self.vartheta, self.d))

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        y = np.power(np.clip(r, 0.0, 1.0), 1.0 / self.vartheta)
        powers = y[..., None] ** np.arange(1, self.d)
        out = powers @ self._q
        return np.where(r >= 1.0, 1.0, np.clip(out, 0.0, 1.0))

    def _poly(self, y):
        return (y[..., None] ** np.arange(1, self.d)) @ self._q

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        mass_below_one = float(self._poly(np.asarray(1.0)))
        lo = np.zeros(p.shape)
        hi = np.ones(p.shape)
        for _ in range(55):
            mid = 0.5 * (lo + hi)
            ge = self._poly(mid) >= p
            hi = np.where(ge, mid, hi)
            lo = np.where(ge, lo, mid)
        y = np.where(p >= mass_below_one, 1.0, 0.5 * (lo + hi))
        return y**self.vartheta


# -- uniform block machinery -------------------------------------------------


def _uniform_block(seed, n, width):
    gen = np.random.Generator(np.random.Philox(int(seed)))
    u = gen.random((int(n), int(width)))
    return np.maximum(u, _U_FLOOR)


def _std_exponential(u):
    return -np.log1p(-u)


def _positive_stable(alpha, u, e):
    """Chambers-Mallows-Stuck draw with Laplace transform exp(-t^alpha)."""
    theta = math.pi * u
    return (
        np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * theta) / e) ** ((1.0 - alpha) / alpha)
    )


def _radial_survival_uniforms(radial, k, u):
    """Map a (n, width) uniform block to P = 1 - V with V ~ radial copula.

    Returned values are the survival-side uniforms fed to the radial
    quantile transform; computed directly to avoid cancellation near 1.
    """
    if radial.kind == "independence":
        return 1.0 - u[:, :k]
    if radial.kind == "gaussian":
        z = ndtri(u[:, :k]) @ np.linalg.cholesky(radial.corr).T
        return ndtr(-z)
    # gumbel
    vt = radial.vartheta
    if vt == 1.0:
        return 1.0 - u[:, 2 : 2 + k]
    alpha = 1.0 / vt
    st = _positive_stable(alpha, u[:, 0], _std_exponential(u[:, 1]))
    e = _std_exponential(u[:, 2 : 2 + k])
    return -np.expm1(-((e / st[:, None]) ** alpha))


def sample_gaussian_copula(corr, n, seed):
    """n draws from the Gaussian copula with the given correlation matrix."""
    spec = RadialCopulaSpec.gaussian(corr)
    k = spec.corr.shape[0]
    u = _uniform_block(seed, n, k)
    return 1.0 - _radial_survival_uniforms(spec, k, u)


def sample_gumbel_copula(vartheta, k, n, seed):
    """n draws from the K-variate Gumbel-Hougaard copula."""
    spec = RadialCopulaSpec.gumbel(vartheta)
    u = _uniform_block(seed, n, spec.uniform_width(k))
    return 1.0 - _radial_survival_uniforms(spec, k, u)


def sample_radial_vector(model, n, seed):
    """n draws of the radial vector (R_1, ..., R_K) of a clustered model.

    Draws V from the radial survival copula and returns the k-th column as
    the radial quantile of 1 - V_k.
    """
    k = model.n_clusters
    u = _uniform_block(seed, n, model.radial.uniform_width(k))
    p = _radial_survival_uniforms(model.radial, k, u)
    out = np.empty((int(n), k))
    for j in range(k):
        out[:, j] = model.radial_distribution(j).quantile(p[:, j])
    return out


def _simplex_from_uniforms(ell, u):
    """Map d+1 uniform columns to one ell-simplex vector per row."""
    if isinstance(ell, IndependenceStdf):
        vartheta = 1.0
    elif isinstance(ell, LogisticStdf):
        vartheta = ell.vartheta
    else:
        raise CapabilityError(
            "simplex-vector sampling supports the logistic and independence "
            f"stdfs; got {type(ell).__name__}"
        )
    d = ell.dim
    e = _std_exponential(u[:, 1 : 1 + d])
    dirichlet = e / e.sum(axis=1, keepdims=True)
    if vartheta == 1.0:
        return dirichlet
    radial = _SimplexRadialLaw(vartheta, d).quantile(u[:, 0])
    return np.power(radial[:, None] * dirichlet, 1.0 / vartheta)


def sample_simplex_vector(ell, n, seed):
    """n draws of the ell-simplex vector S with survival [1 - ell(s)]_+^(d-1).

    Requires a closed-form stdf (logistic or independence).  Margins are
    Beta(1, d-1) by construction.
    """
    u = _uniform_block(seed, n, 1 + ell.dim)
    return _simplex_from_uniforms(ell, u)


def _uniform_width(model):
    k = model.n_clusters
    return model.radial.uniform_width(k) + k + model.d


def sample_clustered(model, n, seed):
    """n independent rows from the clustered Archimax copula.

    Row j of the output is (psi_k(R_k S_ki)) reassembled to the original
    variable order; entries are copula-scale observations in (0, 1).
    Deterministic for fixed (model, n, seed) and unaffected by worker
    counts; the first rows of a longer run coincide with a shorter run.
    """
    if int(n) < 1:
        raise ValidationError("sample size n must be >= 1")
    k = model.n_clusters
    u = _uniform_block(seed, n, _uniform_width(model))
    w_rad = model.radial.uniform_width(k)
    p = _radial_survival_uniforms(model.radial, k, u[:, :w_rad])
    out = np.empty((int(n), model.d))
    col = w_rad
    for j, block in enumerate(model.partition.blocks):
        dk = len(block)
        s = _simplex_from_uniforms(model.stdfs[j], u[:, col : col + 1 + dk])
        col += 1 + dk
        r = model.radial_distribution(j).quantile(p[:, j])
        out[:, list(block)] = model.generators[j].psi(r[:, None] * s)
    return out
