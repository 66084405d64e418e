"""Rank-based inference for clustered Archimax models.

Pipeline: pseudo-observations -> pairwise (distortion, extremal) parameter
fits by two-moment inversion -> per-cluster averaging -> homogeneity test
of the within-cluster parameter constraint with a jackknife covariance ->
semiparametric Pickands/tail-coefficient estimation; plus block-maxima
preprocessing of raw series.

The two-moment fit inverts the map (theta, vartheta) -> (Kendall tau,
lower-diagonal mass) of the bivariate model C(u, v) = psi(ell(phi(u),
phi(v))) with logistic ell.  The second moment is the integrated
diagonal section m = (1/q0) int_0^q0 C(t, t) dt at q0 = 1/2 (sample
version: mean of (q0 - max(u, v))_+ / q0): extreme-value structure
carries no lower-tail mass while the distortion does, so the pair
separates the two parameters, which global concordance pairs such as
(tau, Spearman rho) provably fail to do for these families.  The map is
evaluated by Gauss-Legendre quadrature; a cubic spline surface over a
log-parameter grid accelerates the (many) inversions required by
leave-one-out refits, and reported estimates are polished on the exact
map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy import stats
from scipy.interpolate import RectBivariateSpline

from .errors import NumericalError, ValidationError
from .generator import ArchimedeanGenerator, _unchecked_generator
from .sampler import ClusterPartition

_Z975 = 1.959963984540054


# -- pseudo-observations -----------------------------------------------------


@dataclass(frozen=True)
class PseudoObservations:
    """Scaled componentwise ranks r/(n+1) with the cluster partition."""

    u: np.ndarray
    partition: ClusterPartition

    @property
    def n(self):
        return self.u.shape[0]


def pseudo_observations(data, partition):
    """Columnwise average ranks scaled by 1/(n+1).

    Invariant under strictly increasing marginal transforms; ties receive
    average ranks.  Constant columns are rejected.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValidationError("data must be an (n, d) matrix")
    n, d = data.shape
    if n < 2:
        raise ValidationError("need at least two observations")
    if d != partition.d:
        raise ValidationError(
            f"data has {d} columns, partition covers {partition.d}",
            code="dim-mismatch",
        )
    u = np.empty_like(data)
    for j in range(d):
        col = data[:, j]
        if np.all(col == col[0]):
            raise ValidationError(f"column {j} is constant", code="constant-column")
        u[:, j] = stats.rankdata(col, method="average") / (n + 1.0)
    return PseudoObservations(u, partition)


# -- model moment map --------------------------------------------------------


def _theta_bounds(family):
    # the Joe box extends below the family domain theta >= 1: the moment
    # functionals remain smooth there, which keeps the estimator an
    # unclipped M-estimator at small n (reported parameters are clamped to
    # the family domain at the point of use)
    return (0.4, 32.0) if family == "joe" else (0.01, 32.0)


VARTHETA_BOUNDS = (1.0, 32.0)

#: upper limit of the diagonal section integrated by the second moment
Q0 = 0.5


class ArchimaxMomentMap:
    """Map (theta, vartheta) -> (tau, lower-diagonal mass) and its inverse.

    ``moments`` evaluates the exact quadrature map; ``invert`` runs a
    damped Newton search on a precomputed cubic spline surface (multistart
    from the grid) with an optional exact-map polish; ``invert_batch``
    serves many nearby targets at once, as needed by leave-one-out refits.
    """

    def __init__(self, family, n_nodes=64, grid_size=48):
        self.family = family
        self.n_nodes = int(n_nodes)
        th_lo, th_hi = _theta_bounds(family)
        vt_lo, vt_hi = VARTHETA_BOUNDS
        self._abox = (math.log(th_lo), math.log(th_hi))
        self._bbox = (math.log(vt_lo), math.log(vt_hi))
        nodes, weights = np.polynomial.legendre.leggauss(self.n_nodes)
        self._u = 0.5 * (nodes + 1.0)
        self._w = 0.5 * weights
        ag = np.linspace(*self._abox, grid_size)
        bg = np.linspace(*self._bbox, grid_size)
        tau_g = np.empty((grid_size, grid_size))
        ltm_g = np.empty((grid_size, grid_size))
        for i, a in enumerate(ag):
            for j, b in enumerate(bg):
                tau_g[i, j], ltm_g[i, j] = self.moments(math.exp(a), math.exp(b))
        self._ag, self._bg = ag, bg
        self._tau_g, self._ltm_g = tau_g, ltm_g
        self._tau_sp = RectBivariateSpline(ag, bg, tau_g, kx=3, ky=3, s=0)
        self._ltm_sp = RectBivariateSpline(ag, bg, ltm_g, kx=3, ky=3, s=0)

    # exact forward map ------------------------------------------------

    def moments(self, theta, vartheta):
        """Exact (tau, lower-diagonal mass) of the bivariate model.

        tau = 1 - 4 int dC/du dC/dv by tensor quadrature; the mass is
        (1/q0) int_0^q0 C(t, t) dt with C(t, t) = psi(2^(1/vartheta) phi(t))
        by the same rule on the diagonal.
        """
        gen = _unchecked_generator(self.family, theta)
        vt = float(vartheta)
        u, w = self._u, self._w
        x = gen.phi(u)
        lx = np.log(x)
        ll = np.logaddexp(vt * lx[:, None], vt * lx[None, :]) / vt
        big_l = np.exp(ll)
        psi1 = gen.derivative(1, big_l)
        phip = 1.0 / gen.derivative(1, x)
        du = (psi1 * phip[:, None]) * np.exp((vt - 1.0) * (lx[:, None] - ll))
        dv = (psi1 * phip[None, :]) * np.exp((vt - 1.0) * (lx[None, :] - ll))
        tau = 1.0 - 4.0 * (w @ (du * dv) @ w)
        diag = gen.psi(2.0 ** (1.0 / vt) * gen.phi(Q0 * u))
        ltm = float(w @ diag)
        return float(tau), ltm

    # spline inverse -----------------------------------------------------

    def _spline_eval(self, a, b):
        return self._tau_sp.ev(a, b), self._ltm_sp.ev(a, b)

    def _spline_jac(self, a, b):
        j11 = self._tau_sp.ev(a, b, dx=1)
        j12 = self._tau_sp.ev(a, b, dy=1)
        j21 = self._ltm_sp.ev(a, b, dx=1)
        j22 = self._ltm_sp.ev(a, b, dy=1)
        return j11, j12, j21, j22

    def _clip(self, a, b):
        return (
            np.clip(a, self._abox[0], self._abox[1]),
            np.clip(b, self._bbox[0], self._bbox[1]),
        )

    def _ssd(self, a, b, tau, ltm):
        ta, ra = self._spline_eval(a, b)
        return (ta - tau) ** 2 + (ra - ltm) ** 2

    def _newton_batch(self, tau, ltm, a, b, iters=60):
        """Damped projected Gauss-Newton descent of the squared residual.

        Converges to a box-constrained stationary point continuously in the
        targets, including targets outside the attainable moment region
        (where the boxed least-squares point is returned).
        """
        a = np.array(a, dtype=float, copy=True)
        b = np.array(b, dtype=float, copy=True)
        ssd = self._ssd(a, b, tau, ltm)
        for _ in range(iters):
            ta, ra = self._spline_eval(a, b)
            f1, f2 = ta - tau, ra - ltm
            j11, j12, j21, j22 = self._spline_jac(a, b)
            det = j11 * j22 - j12 * j21
            det = np.where(np.abs(det) < 1e-13, np.where(det < 0.0, -1e-13, 1e-13), det)
            da = (j22 * f1 - j12 * f2) / det
            db = (j11 * f2 - j21 * f1) / det
            norm = np.hypot(da, db)
            cap = np.where(norm > 1.0, 1.0 / np.maximum(norm, 1e-300), 1.0)
            da, db = da * cap, db * cap
            scale = np.ones_like(ssd)
            improved = np.zeros(np.shape(ssd), dtype=bool)
            best_a, best_b, best_ssd = a, b, ssd
            for _ in range(10):
                ca, cb = self._clip(a - scale * da, b - scale * db)
                cs = self._ssd(ca, cb, tau, ltm)
                take = ~improved & (cs < best_ssd - 1e-18 * (1.0 + best_ssd))
                best_a = np.where(take, ca, best_a)
                best_b = np.where(take, cb, best_b)
                best_ssd = np.where(take, cs, best_ssd)
                improved |= take
                if np.all(improved):
                    break
                scale = scale * 0.5
            if not np.any(improved):
                break
            moved = np.max(np.hypot(best_a - a, best_b - b))
            a, b, ssd = best_a, best_b, best_ssd
            if moved < 1e-12:
                break
        return a, b, np.sqrt(ssd)

    def invert(self, tau, ltm, polish=True):
        """Solve (tau, ltm) = map(theta, vartheta) inside the parameter box.

        Returns ``(theta, vartheta, flag)`` with flag ``"ok"`` or
        ``"boundary"`` (no interior root; the boxed best fit is returned,
        per the boundary-estimate contract).
        """
        ssd = (self._tau_g - tau) ** 2 + (self._ltm_g - ltm) ** 2
        order = np.argsort(ssd, axis=None)[:3]
        starts = [(self._ag[i // ssd.shape[1]], self._bg[i % ssd.shape[1]]) for i in order]
        best = None
        for a0, b0 in starts:
            a, b, res = self._newton_batch(
                np.asarray(tau, float), np.asarray(ltm, float),
                np.asarray(a0, float), np.asarray(b0, float),
            )
            if best is None or res < best[2]:
                best = (float(a), float(b), float(res))
            if best[2] < 1e-10:
                break
        a, b, res = best
        eps = 1e-9
        on_edge = (
            a <= self._abox[0] + eps
            or a >= self._abox[1] - eps
            or b <= self._bbox[0] + eps
            or b >= self._bbox[1] - eps
        )
        flag = "boundary" if (res > 1e-6 or on_edge) else "ok"
        theta, vartheta = math.exp(a), math.exp(b)
        if polish and flag == "ok":
            theta, vartheta = self._polish(tau, ltm, theta, vartheta)
        return theta, vartheta, flag

    def _polish(self, tau, ltm, theta, vartheta):
        a, b = math.log(theta), math.log(vartheta)
        for _ in range(4):
            t, r = self.moments(math.exp(a), math.exp(b))
            f1, f2 = t - tau, r - ltm
            if abs(f1) + abs(f2) < 1e-12:
                break
            j11, j12, j21, j22 = (float(v) for v in self._spline_jac(a, b))
            det = j11 * j22 - j12 * j21
            if abs(det) < 1e-14:
                break
            a_new = a - (j22 * f1 - j12 * f2) / det
            b_new = b - (j11 * f2 - j21 * f1) / det
            a, b = self._clip(a_new, b_new)
            a, b = float(a), float(b)
        return math.exp(a), math.exp(b)

    def invert_batch(self, tau, ltm, start=None):
        """Spline-inverse for an array of targets (no exact-map polish).

        ``start`` seeds the descent (e.g. the full-sample solution ahead of
        leave-one-out refits, which keeps every refit in the same basin);
        without it each target starts from its own coarse-grid argmin.
        """
        tau = np.asarray(tau, dtype=float)
        ltm = np.asarray(ltm, dtype=float)
        if start is None:
            grid = np.stack(
                [self._tau_g.ravel(), self._ltm_g.ravel()], axis=0
            )
            ssd = (grid[0][None, :] - tau.ravel()[:, None]) ** 2
            ssd += (grid[1][None, :] - ltm.ravel()[:, None]) ** 2
            pick = np.argmin(ssd, axis=1)
            a0 = self._ag[pick // self._tau_g.shape[1]].reshape(tau.shape)
            b0 = self._bg[pick % self._tau_g.shape[1]].reshape(tau.shape)
        else:
            a0 = np.full(tau.shape, math.log(start[0]))
            b0 = np.full(tau.shape, math.log(start[1]))
        a, b, _ = self._newton_batch(tau, ltm, a0, b0)
        return np.exp(a), np.exp(b)


@lru_cache(maxsize=8)
def moment_map(family, n_nodes=64):
    """Cached per-family moment map (builds the spline surface once)."""
    return ArchimaxMomentMap(family, n_nodes=n_nodes)


# -- rank statistics ---------------------------------------------------------


def _has_ties(x):
    return np.unique(x).size < x.size


def _lower_diag_mass(u, v):
    """Sample version of (1/q0) int_0^q0 C(t, t) dt on pseudo-observations."""
    return float(np.mean(np.clip(Q0 - np.maximum(u, v), 0.0, None)) / Q0)


def _pair_moments(x, y):
    """(Kendall tau, lower-diagonal mass) of one column pair (any scale)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    tau = stats.kendalltau(x, y).statistic
    r = stats.rankdata(x) / (n + 1.0)
    s = stats.rankdata(y) / (n + 1.0)
    return float(tau), _lower_diag_mass(r, s)


def _loo_moments(x, y, chunk=2048):
    """Full-sample and all leave-one-out (tau, ltm) of one column pair.

    Uses O(n^2) rank-update identities (distinct values required); falls
    back to per-observation recomputation when ties are present.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if _has_ties(x) or _has_ties(y):
        tau_loo = np.empty(n)
        ltm_loo = np.empty(n)
        mask = np.ones(n, dtype=bool)
        for v in range(n):
            mask[v] = False
            tau_loo[v], ltm_loo[v] = _pair_moments(x[mask], y[mask])
            mask[v] = True
        return (*_pair_moments(x, y), tau_loo, ltm_loo)

    r = stats.rankdata(x).astype(np.float64)
    s = stats.rankdata(y).astype(np.float64)
    mx = np.maximum(r, s)
    ltm_full = float(np.sum(np.clip(Q0 - mx / (n + 1.0), 0.0, None)) / (n * Q0))

    m = n - 1
    k_nu = np.empty(n)
    h_nu = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        sr = np.sign(r[None, :] - r[lo:hi, None])
        ss = np.sign(s[None, :] - s[lo:hi, None])
        k_nu[lo:hi] = np.einsum("ij,ij->i", sr, ss)
        # leave-one-out ranks drop by one above the removed value; the
        # reduced pseudo-observations rescale by 1/n instead of 1/(n+1)
        r_new = r[None, :] - (sr > 0)
        s_new = s[None, :] - (ss > 0)
        vals = np.clip(Q0 - np.maximum(r_new, s_new) / n, 0.0, None)
        own = np.clip(Q0 - mx[lo:hi] / n, 0.0, None)
        h_nu[lo:hi] = vals.sum(axis=1) - own
    total = float(np.sum(k_nu))  # = 2 (C - D)
    tau_full = total / (n * (n - 1.0))
    tau_loo = (0.5 * total - k_nu) / (0.5 * m * (m - 1.0))
    ltm_loo = h_nu / (m * Q0)
    return tau_full, ltm_full, tau_loo, ltm_loo


# -- pairwise fits and the homogeneity machinery ------------------------------


@dataclass(frozen=True)
class ThetaFit:
    """Two-moment fit of one column pair."""

    theta: float
    vartheta: float
    flag: str
    tau: float
    ltm: float


def pairwise_theta_fit(u, v, family, n_nodes=64, polish=True):
    """Fit (theta, vartheta) of the bivariate model to one pseudo-obs pair.

    Solves (tau-hat, ltm-hat) = (tau, ltm)(theta, vartheta), where ltm is
    the integrated lower-diagonal mass; when the empirical pair is outside
    the attainable region the boxed best fit is returned with flag
    ``"boundary"``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.size != v.size:
        raise ValidationError("columns must have equal length")
    if u.size < 20:
        raise ValidationError("need at least 20 observations for a pairwise fit")
    tau, ltm = _pair_moments(u, v)
    amap = moment_map(family, n_nodes)
    theta, vartheta, flag = amap.invert(tau, ltm, polish=polish)
    return ThetaFit(theta, vartheta, flag, tau, ltm)


def cluster_pairs(partition):
    """Index set of within-cluster pairs, ordered lexicographically in
    (cluster, i, j) with i < j."""
    out = []
    for k, block in enumerate(partition.blocks):
        b = sorted(block)
        for ii in range(len(b)):
            for jj in range(ii + 1, len(b)):
                out.append((k, b[ii], b[jj]))
    return out


def fit_cluster_pairs(pobs, families, n_nodes=64, polish=True):
    """All within-cluster pairwise fits, keyed by (i, j)."""
    _check_families(pobs.partition, families)
    fits = {}
    for k, i, j in cluster_pairs(pobs.partition):
        fits[(i, j)] = pairwise_theta_fit(
            pobs.u[:, i], pobs.u[:, j], families[k], n_nodes=n_nodes, polish=polish
        )
    return fits


def _check_families(partition, families):
    if len(families) != partition.n_clusters:
        raise ValidationError(
            f"need one generator family per cluster (K = {partition.n_clusters})",
            code="dim-mismatch",
        )


def cluster_theta_bar(pairwise, partition):
    """Per-cluster arithmetic mean of the pairwise distortion estimates."""
    out = np.empty(partition.n_clusters)
    for k, block in enumerate(partition.blocks):
        b = sorted(block)
        vals = []
        for ii in range(len(b)):
            for jj in range(ii + 1, len(b)):
                key = (b[ii], b[jj])
                if key not in pairwise:
                    raise ValidationError(f"missing pairwise estimate for {key}")
                est = pairwise[key]
                vals.append(est.theta if isinstance(est, ThetaFit) else float(est))
        out[k] = np.mean(vals)
    return out


def homogeneity_statistic(pairwise, theta_bar, partition):
    """Vector of within-cluster deviations theta_hat_ij - theta_bar_k.

    Entries follow the fixed lexicographic (cluster, i, j) order returned
    by :func:`cluster_pairs`; per-cluster blocks sum to zero by
    construction.
    """
    index = cluster_pairs(partition)
    t = np.empty(len(index))
    for pos, (k, i, j) in enumerate(index):
        est = pairwise[(i, j)]
        theta = est.theta if isinstance(est, ThetaFit) else float(est)
        t[pos] = theta - theta_bar[k]
    return t, index


def profile_theta(amap, tau, log_vartheta):
    """Distortion parameter solving tau(theta, vartheta) = tau at fixed
    vartheta, by bisection of the monotone spline section; vectorized.

    Targets outside the attainable range land on the box edge.
    """
    tau = np.asarray(tau, dtype=float)
    lo = np.full(tau.shape, amap._abox[0])
    hi = np.full(tau.shape, amap._abox[1])
    b = np.broadcast_to(log_vartheta, tau.shape)
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        ge = amap._tau_sp.ev(mid, b) >= tau
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return np.exp(0.5 * (lo + hi))


@dataclass(frozen=True)
class ClusterProfileFit:
    """Per-cluster pooled fit with profiled pairwise distortion estimates.

    The extremal parameter is fit once per cluster from the pooled moments
    (the model implies a common one), and each pairwise distortion estimate
    inverts its own Kendall tau at that pooled extremal parameter.  This
    keeps the pairwise estimates nearly linear in the rank statistics,
    which the jackknife covariance of the homogeneity statistic needs at
    realistic sample sizes.
    """

    theta_pairwise: dict
    theta_bar: np.ndarray
    vartheta_cluster: np.ndarray
    flags: tuple


def cluster_profile_fit(pobs, families, n_nodes=64):
    """Pooled-extremal profile fit of every cluster (no leave-one-out)."""
    _check_families(pobs.partition, families)
    part = pobs.partition
    index = cluster_pairs(part)
    theta_pw = {}
    theta_bar = np.empty(part.n_clusters)
    vartheta = np.empty(part.n_clusters)
    flags = []
    for k, _ in enumerate(part.blocks):
        amap = moment_map(families[k], n_nodes)
        pairs = [(i, j) for (kk, i, j) in index if kk == k]
        moms = [_pair_moments(pobs.u[:, i], pobs.u[:, j]) for i, j in pairs]
        th_k, vt_k, flag = amap.invert(
            float(np.mean([m[0] for m in moms])),
            float(np.mean([m[1] for m in moms])),
            polish=False,
        )
        vartheta[k] = vt_k
        flags.append(flag)
        b = math.log(vt_k)
        for (i, j), m in zip(pairs, moms):
            theta_pw[(i, j)] = float(profile_theta(amap, np.asarray(m[0]), b))
        theta_bar[k] = np.mean([theta_pw[p] for p in pairs])
    return ClusterProfileFit(theta_pw, theta_bar, vartheta, tuple(flags))


def jackknife_sigma(pobs, families, n_nodes=64):
    """Jackknife covariance of the homogeneity statistic.

    Recomputes the full profile fit on each leave-one-out sample, forms
    the pseudo-values n T - (n-1) T_nu and returns their empirical
    covariance, which estimates the asymptotic covariance of sqrt(n) T.
    """
    t_full, t_loo, _ = _loo_t_statistics(pobs, families, n_nodes)
    return _pseudo_value_cov(t_full, t_loo)


def _pseudo_value_cov(t_full, t_loo):
    n = t_loo.shape[0]
    t_star = n * t_full[None, :] - (n - 1) * t_loo
    centered = t_star - t_star.mean(axis=0, keepdims=True)
    return centered.T @ centered / (n - 1.0)


def _loo_t_statistics(pobs, families, n_nodes=64):
    """T and its n leave-one-out versions (consistent profile-fit path)."""
    _check_families(pobs.partition, families)
    part = pobs.partition
    index = cluster_pairs(part)
    n = pobs.n
    theta_full = np.empty(len(index))
    theta_loo = np.empty((n, len(index)))
    for k, _ in enumerate(part.blocks):
        amap = moment_map(families[k], n_nodes)
        rows = [(pos, i, j) for pos, (kk, i, j) in enumerate(index) if kk == k]
        moms = [_loo_moments(pobs.u[:, i], pobs.u[:, j]) for _, i, j in rows]
        tau_pool = float(np.mean([m[0] for m in moms]))
        ltm_pool = float(np.mean([m[1] for m in moms]))
        th_k, vt_k, _ = amap.invert(tau_pool, ltm_pool, polish=False)
        _, vt_loo = amap.invert_batch(
            np.mean([m[2] for m in moms], axis=0),
            np.mean([m[3] for m in moms], axis=0),
            start=(th_k, vt_k),
        )
        b_full = math.log(vt_k)
        b_loo = np.log(vt_loo)
        for (pos, _, _), m in zip(rows, moms):
            theta_full[pos] = profile_theta(amap, np.asarray(m[0]), b_full)
            theta_loo[:, pos] = profile_theta(amap, m[2], b_loo)
    t_full = _t_from_theta(theta_full, index, part)
    t_loo = _t_from_theta_batch(theta_loo, index, part)
    return t_full, t_loo, index


def _t_from_theta(theta, index, partition):
    t = np.empty_like(theta)
    for k in range(partition.n_clusters):
        sel = [pos for pos, (kk, _, _) in enumerate(index) if kk == k]
        t[sel] = theta[sel] - theta[sel].mean()
    return t


def _t_from_theta_batch(theta, index, partition):
    t = np.empty_like(theta)
    for k in range(partition.n_clusters):
        sel = [pos for pos, (kk, _, _) in enumerate(index) if kk == k]
        t[:, sel] = theta[:, sel] - theta[:, sel].mean(axis=1, keepdims=True)
    return t


def homogeneity_test(t, sigma, n, n_mc=100_000, seed=0, scaling="sqrt-n"):
    """Monte Carlo p-values of the homogeneity test, both norms in one pass.

    Compares the supremum and Euclidean norms of the (scaled) statistic
    against centered Gaussian draws with the jackknife covariance;
    ``scaling="sqrt-n"`` matches the pseudo-value convention (sigma
    estimates the asymptotic covariance of sqrt(n) T), ``"raw"`` compares
    against the unscaled statistic.
    """
    t = np.asarray(t, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if scaling not in ("sqrt-n", "raw"):
        raise ValidationError(f"unknown scaling {scaling!r}")
    scale = math.sqrt(n) if scaling == "sqrt-n" else 1.0
    evals, evecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    rng = np.random.Generator(np.random.Philox(int(seed)))
    z = rng.standard_normal((int(n_mc), sigma.shape[0])) @ root.T
    ts = scale * t
    p_sup = float(np.mean(np.max(np.abs(z), axis=1) >= np.max(np.abs(ts))))
    p_euclid = float(np.mean(np.sum(z * z, axis=1) >= np.sum(ts * ts)))
    return p_sup, p_euclid


@dataclass(frozen=True)
class HomogeneityResult:
    """Homogeneity analysis of the hypothesized partition."""

    t: np.ndarray
    index: tuple
    sigma: np.ndarray
    p_sup: float
    p_euclid: float
    theta_bar: np.ndarray
    vartheta_cluster: np.ndarray
    pairwise: dict
    n: int
    scaling: str


def homogeneity_analysis(pobs, families, n_nodes=64, n_mc=100_000, seed=0,
                         scaling="sqrt-n"):
    """Full homogeneity workflow: fits, T, jackknife covariance, p-values.

    The deviations, their covariance and the reported pairwise table all
    come from the same profile estimator, applied identically to the full
    sample and to every leave-one-out sample.
    """
    t_full, t_loo, index = _loo_t_statistics(pobs, families, n_nodes)
    sigma = _pseudo_value_cov(t_full, t_loo)
    p_sup, p_euclid = homogeneity_test(
        t_full, sigma, pobs.n, n_mc=n_mc, seed=seed, scaling=scaling
    )
    fit = cluster_profile_fit(pobs, families, n_nodes=n_nodes)
    return HomogeneityResult(
        t_full, tuple(index), sigma, p_sup, p_euclid, fit.theta_bar,
        fit.vartheta_cluster, fit.theta_pairwise, pobs.n, scaling,
    )


# -- semiparametric Pickands estimation ---------------------------------------


def cfg_pickands(u_block, theta_bar, family, w, clamp=True):
    """Rank-based endpoint-corrected Pickands estimate at a simplex point.

    ``u_block`` holds the pseudo-observations of one cluster; ``theta_bar``
    parametrizes the distortion inverse used in the transform.  Zero
    weights exclude their coordinates.  The raw estimate is clamped to the
    Pickands envelope [max w, 1] unless ``clamp`` is false.
    """
    u_block = np.asarray(u_block, dtype=float)
    if u_block.ndim != 2:
        raise ValidationError("u_block must be an (n, d_k) matrix")
    n, dk = u_block.shape
    w = np.asarray(w, dtype=float)
    if w.shape != (dk,):
        raise ValidationError(f"w must have length {dk}")
    if np.any(w < 0.0):
        raise ValidationError("w must be nonnegative")
    dev = abs(float(w.sum()) - 1.0)
    if dev > 1e-9:
        raise ValidationError(f"w is off the unit simplex by {dev:.3g}")
    if dev > 1e-12:
        w = w / w.sum()
    gen = ArchimedeanGenerator(family, theta_bar)
    grid = gen.phi(np.arange(1, n + 1) / (n + 1.0))
    active = np.flatnonzero(w > 0.0)
    xi = np.min(gen.phi(u_block[:, active]) / w[active], axis=1)
    log_a = float(np.mean(np.log(grid)) - np.mean(np.log(xi)))
    a_hat = math.exp(log_a)
    if clamp:
        a_hat = min(1.0, max(a_hat, float(np.max(w))))
    return a_hat


def cfg_lambda(pobs, k, i, j, theta_bar_k, family):
    """Pairwise upper tail dependence estimate within cluster k.

    Combines the bivariate-margin Pickands estimate at (1/2, 1/2) with the
    attractor index of the fitted generator family (1 for Clayton/Frank,
    1/theta for Joe), clamped to [0, 1].
    """
    block = pobs.partition.blocks[k]
    if i not in block or j not in block or i == j:
        raise ValidationError(f"({i}, {j}) is not a pair within cluster {k}")
    a2 = cfg_pickands(pobs.u[:, [i, j]], theta_bar_k, family, np.array([0.5, 0.5]))
    alpha = 1.0 / theta_bar_k if (family == "joe" and theta_bar_k > 1.0) else 1.0
    return float(np.clip(2.0 - (2.0 * a2) ** alpha, 0.0, 1.0))


# -- block maxima preprocessing -----------------------------------------------


def block_maxima(frame, date_col="date", months=None, block="month"):
    """Per-block maxima of every value column of a timestamped table.

    ``months`` restricts to the given calendar months (1-12) before
    blocking by calendar month or year.  Blocks without observations are
    simply absent; the report counts blocks and their sizes.
    Returns ``(reduced_frame, report)``.
    """
    if block not in ("month", "year"):
        raise ValidationError(f"unknown block rule {block!r}")
    if date_col not in frame.columns:
        raise ValidationError(f"no column named {date_col!r}")
    try:
        dates = pd.to_datetime(frame[date_col], errors="raise")
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"unparseable timestamps in {date_col!r}: {exc}")
    value_cols = [c for c in frame.columns if c != date_col]
    if not value_cols:
        raise ValidationError("no value columns besides the date column")
    work = frame[value_cols].copy()
    work["_year"] = dates.dt.year.values
    work["_month"] = dates.dt.month.values
    if months is not None:
        months = sorted({int(m) for m in months})
        if any(m < 1 or m > 12 for m in months):
            raise ValidationError("months must lie in 1..12")
        work = work[work["_month"].isin(months)]
        if work.empty:
            raise ValidationError("month filter removed every observation")
    keys = ["_year", "_month"] if block == "month" else ["_year"]
    grouped = work.groupby(keys, sort=True)
    out = grouped[value_cols].max().reset_index()
    sizes = grouped.size()
    out = out.rename(columns={"_year": "year", "_month": "month"})
    report = {
        "blocks": int(len(sizes)),
        "rows_in": int(len(frame)),
        "rows_used": int(sizes.sum()),
        "min_block_size": int(sizes.min()),
        "max_block_size": int(sizes.max()),
    }
    return out, report
