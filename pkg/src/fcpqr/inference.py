"""Subgroup-existence test: pairwise weights, the closed-form statistic,
and its bootstrap calibration.

The statistic averages products of per-subject quantile scores over pairs,
weighted by the probability that both subjects land on the same side of a
random hyperplane; that probability is the bivariate orthant probability
1/4 + arcsin(rho)/(2*pi) of the grouping-vector directions, which is what
gives the statistic its closed form.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._threads import single_thread_blas
from .admm import AdmmConfig, NullSolver
from .data import FunctionalDataset
from .errors import DegenerateInputError


@dataclass
class WastResult:
    """Observed statistic, bootstrap replicates, and the counting p-value.

    p_value = (1/B) * #{b : t_n > boot_b}, i.e. the fraction of bootstrap
    statistics strictly below the observed one; strong evidence against
    the no-subgroup model therefore pushes p_value toward 1.  The decision
    `reject` compares t_n against the empirical upper-alpha critical value
    of the bootstrap sample, which is p_value > 1 - alpha.
    """

    t_n: float
    boot: np.ndarray
    p_value: float
    b: int
    tau: float
    seed: int
    alpha: float = 0.05
    reject: bool = False

    def to_dict(self):
        return {
            "t_n": self.t_n,
            "p_value": self.p_value,
            "b": self.b,
            "tau": self.tau,
            "seed": self.seed,
            "alpha": self.alpha,
            "reject": bool(self.reject),
            "boot_sorted": np.sort(self.boot).tolist(),
        }


def pairwise_weight(zi, zj):
    """Orthant weight of a subject pair from their grouping directions.

    Returns 1/4 + arcsin(rho)/(2*pi) with rho the cosine between the full
    grouping vectors (z1, z2); equals 1/2 for aligned pairs, 1/4 for
    orthogonal ones, and 0 for opposite ones.
    """
    zi = np.asarray(zi, dtype=float)
    zj = np.asarray(zj, dtype=float)
    ni = np.linalg.norm(zi)
    nj = np.linalg.norm(zj)
    if ni == 0.0 or nj == 0.0:
        raise DegenerateInputError("grouping vector with zero norm")
    rho = np.clip(float(zi @ zj) / (ni * nj), -1.0, 1.0)
    return 0.25 + np.arcsin(rho) / (2.0 * np.pi)


def weight_matrix(z):
    """All pairwise orthant weights at once; diagonal set to zero."""
    z = np.asarray(z, dtype=float)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError(
            f"grouping vector with zero norm at subject {int(np.argmin(norms))}")
    rho = np.clip((z @ z.T) / np.outer(norms, norms), -1.0, 1.0)
    w = 0.25 + np.arcsin(rho) / (2.0 * np.pi)
    np.fill_diagonal(w, 0.0)
    return w


def _score_matrix(y, fitted, tau):
    # ties y == fitted count as <=, hence indicator 1
    return (y <= fitted).astype(float) - tau


def _statistic_from_scores(scores, pair_kernel, m, n):
    return float(np.einsum("ik,ik->", scores, pair_kernel @ scores)) / (m * n * (n - 1))


def wast_statistic(ds: FunctionalDataset, null_fit, tau):
    """Closed-form weighted average of squared scores under the null fit.

    null_fit : a NullFit (its stored fitted values are used) or anything
        with a `fitted` (n, m) attribute matching the dataset.
    """
    fitted = np.asarray(null_fit.fitted, dtype=float)
    n, m = ds.n, ds.m
    scores = _score_matrix(ds.y, fitted, tau)
    xt = ds.xtilde
    pair_kernel = weight_matrix(ds.z_full) * (xt @ xt.T)
    np.fill_diagonal(pair_kernel, 0.0)
    return _statistic_from_scores(scores, pair_kernel, m, n)


def _bootstrap_block(args):
    """Worker: run a block of bootstrap replicates (index, seed) pairs."""
    (x, grid, y_fitted, abs_resid, pair_kernel, cfg, items) = args
    n, m = y_fitted.shape
    tau = cfg.tau
    out = np.empty(len(items))
    with single_thread_blas():
        solver = NullSolver(x, grid, cfg)
        for idx, (rep, child) in enumerate(items):
            rng = np.random.default_rng(child)
            w_star = np.where(rng.random(n) < tau, -2.0 * tau, 2.0 * (1.0 - tau))
            y_star = y_fitted + w_star[:, None] * abs_resid
            try:
                refit = solver.fit(y_star)
            except Exception as exc:
                raise RuntimeError(f"bootstrap replicate {rep} failed: {exc}") from exc
            scores = _score_matrix(y_star, refit.fitted, tau)
            out[idx] = _statistic_from_scores(scores, pair_kernel, m, n)
    return out


def bootstrap_pvalue(ds: FunctionalDataset, cfg: AdmmConfig, b, seed,
                     alpha=0.05, jobs=1) -> WastResult:
    """Calibrate the statistic by the wild residual bootstrap.

    Fits the null model once, computes the observed statistic, then for
    each replicate draws one two-point weight per subject
    (P(w = 2(1-tau)) = 1-tau, P(w = -2tau) = tau), rebuilds the responses
    as fitted + w * |residual|, refits the null model with the same
    penalty, and recomputes the statistic.  Replicate streams are the
    children of SeedSequence(seed).spawn(b), so results are identical for
    any jobs value.
    """
    if b < 1:
        raise ValueError("need at least one bootstrap replicate")
    solver = NullSolver(ds.x, ds.grid, cfg)
    null = solver.fit(ds.y)
    t_n = wast_statistic(ds, null, cfg.tau)

    abs_resid = np.abs(ds.y - null.fitted)
    xt = ds.xtilde
    pair_kernel = weight_matrix(ds.z_full) * (xt @ xt.T)
    np.fill_diagonal(pair_kernel, 0.0)
    items = list(enumerate(np.random.SeedSequence(seed).spawn(b)))

    if jobs <= 1:
        boot = _bootstrap_block((ds.x, ds.grid, null.fitted, abs_resid,
                                 pair_kernel, cfg, items))
    else:
        jobs = min(jobs, b)
        blocks = [items[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_bootstrap_block, [
                (ds.x, ds.grid, null.fitted, abs_resid, pair_kernel, cfg, blk)
                for blk in blocks]))
        boot = np.empty(b)
        for k, part in enumerate(parts):
            boot[k::jobs] = part

    p_value = float(np.mean(t_n > boot))
    return WastResult(t_n=t_n, boot=boot, p_value=p_value, b=b, tau=cfg.tau,
                      seed=seed, alpha=alpha, reject=bool(p_value > 1.0 - alpha))
