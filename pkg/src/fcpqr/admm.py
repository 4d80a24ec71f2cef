"""Penalized smoothed check-loss solver for the change-plane model.

The objective splits the quantile loss from the quadratic model through
slack responses u and scaled duals: each sweep runs a closed-form proximal
u-step, an exact joint least-squares step for the intercepts and kernel
coefficients, a Gauss-Newton descent step for the grouping parameter on
the smoothed threshold, and the dual update, stopping when both residual
norms fall below tolerance.  The null model (no threshold term) reuses the
same machinery with a fixed design, which lets one factorization serve
every bootstrap refit.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from ._threads import single_thread_blas
from .data import FunctionalDataset
from .errors import NumericalError
from .kernels import KernelSpec, RepresenterCoefficients, evaluate_coefficients, gram_matrix
from .smoothing import SmoothingSpec, default_bandwidth, smooth_indicator, smooth_indicator_deriv

JITTER_REL = 1e-10
LAMBDA_TILDE_DEFAULT = 5.0


@dataclass
class AdmmConfig:
    """Solver configuration.

    tau : quantile level in (0, 1).
    lam : roughness penalty weight; None resolves to 5/(n*m) at fit time.
    kappa : quadratic coupling weight of the splitting (fixed, default 1).
    kernel : reproducing kernel of the coefficient space.
    smoothing : threshold smoothing bandwidth; None derives
        h = h_const * sd(z1 + z2' gamma_init) * n^(-2/5) at fit time.
    tol : stopping tolerance applied to both residual norms.
    max_iter : sweep budget.
    gamma_init : "zero" or an explicit length-q start.
    multistart : extra starts from unit-normal perturbations of gamma_init;
        the run with the smallest hard-indicator objective wins.
    seed : master seed for the multistart perturbations.
    """

    tau: float = 0.5
    lam: float | None = None
    kappa: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    smoothing: SmoothingSpec | None = None
    h_const: float = 1.0
    tol: float = 1e-3
    max_iter: int = 500
    gamma_init: object = "zero"
    multistart: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")


@dataclass
class AdmmState:
    """State carried across sweeps: slacks, duals, parameters, residuals."""

    u: np.ndarray
    zeta: np.ndarray
    varphi: np.ndarray
    d: np.ndarray
    gamma: np.ndarray
    primal_norm: float = math.inf
    dual_norm: float = math.inf
    iter: int = 0


@dataclass
class ChangePlaneFit:
    """Fitted change-plane model.

    labels satisfy labels_i = 1 iff z1_i + z2_i' gamma >= 0; objective is
    the hard-indicator penalized check loss at the final parameters; trace
    rows are (primal_norm, dual_norm, objective) per sweep.
    """

    coef: RepresenterCoefficients
    gamma: np.ndarray
    labels: np.ndarray
    objective: float
    trace: np.ndarray
    converged: bool
    h: float
    lam: float
    jitter: float = 0.0
    solver_notes: tuple = ()

    def to_dict(self):
        return {
            "coef": self.coef.to_dict(),
            "gamma": self.gamma.tolist(),
            "labels": self.labels.tolist(),
            "objective": self.objective,
            "converged": bool(self.converged),
            "iterations": int(self.trace.shape[0]),
            "h": self.h,
            "lam": self.lam,
            "jitter": self.jitter,
            "solver_notes": list(self.solver_notes),
            "trace": self.trace.tolist(),
        }


@dataclass
class NullFit:
    """Fit of the no-subgroup model (threshold coefficients forced to zero)."""

    coef: RepresenterCoefficients
    fitted: np.ndarray
    objective: float
    trace: np.ndarray
    converged: bool
    lam: float
    jitter: float = 0.0


def check_loss(u, tau):
    """Quantile check loss: u * (tau - I(u <= 0)); vectorizes."""
    u = np.asarray(u, dtype=float)
    return np.where(u > 0, tau * u, (tau - 1.0) * u)


def prox_check(tau, kappa, v):
    """argmin_u check_loss(u, tau) + (kappa/2) (u - v)^2; vectorizes over v.

    Shrinks v toward zero by tau/kappa from above and (1-tau)/kappa from
    below, with a dead zone mapping to exactly 0.
    """
    v = np.asarray(v, dtype=float)
    upper = tau / kappa
    lower = -(1.0 - tau) / kappa
    return np.where(v > upper, v - upper, np.where(v < lower, v - lower, 0.0))


def update_u(fitted, y, zeta, tau, kappa):
    """Slack update: u = y - prox(tau, kappa, y - fitted + zeta), entrywise."""
    return y - prox_check(tau, kappa, y - fitted + zeta)


def update_zeta(zeta, u, fitted):
    """Scaled dual update: zeta + (u - fitted), entrywise."""
    return zeta + (u - fitted)


def residual_norms(u, fitted, w_design, varphi_new, varphi_old, d_new, d_old,
                   gram, kappa):
    """Frobenius norms of the primal and dual residual fields.

    Primal: u - fitted at the current parameters.  Dual: kappa times the
    fitted-space displacement of the quadratic-block update, covering both
    the intercept and kernel-coefficient changes.  (Tracking only the
    kernel block can report a false fixed point one sweep in: on constant
    data the least-squares step interpolates its targets exactly while the
    intercept is still moving.)
    """
    primal = float(np.linalg.norm(u - fitted))
    n_comp = w_design.shape[1]
    m = gram.shape[0]
    delta_d = (np.asarray(d_new) - np.asarray(d_old)).reshape(n_comp, m)
    delta_phi = np.asarray(varphi_new) - np.asarray(varphi_old)
    move = (w_design @ delta_phi)[:, None] + w_design @ (delta_d @ gram)
    dual = kappa * float(np.linalg.norm(move))
    return primal, dual


class _SymSolver:
    """Cholesky solve of a symmetric PSD system with an eigh-clip fallback."""

    def __init__(self, a):
        if not np.all(np.isfinite(a)):
            raise NumericalError("normal system contains non-finite entries",
                                 {"dim": a.shape[0]})
        self.method = "cholesky"
        try:
            self._cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            self.method = "eigh"
            w, v = np.linalg.eigh(a)
            wmax = float(w[-1]) if w[-1] > 0 else 0.0
            if wmax == 0.0:
                raise NumericalError("normal system is numerically zero",
                                     {"dim": a.shape[0], "eig_min": float(w[0]),
                                      "eig_max": float(w[-1])})
            cut = wmax * a.shape[0] * np.finfo(float).eps
            winv = np.where(w > cut, 1.0 / np.maximum(w, cut), 0.0)
            self._eig = (winv, v)

    def solve(self, rhs):
        if self.method == "cholesky":
            sol = scipy.linalg.cho_solve(self._cho, rhs, check_finite=False)
        else:
            winv, v = self._eig
            sol = v @ (winv * (v.T @ rhs))
        if not np.all(np.isfinite(sol)):
            raise NumericalError("linear solve produced non-finite values",
                                 {"method": self.method, "dim": len(rhs)})
        return sol


def _normal_matrix(w_design, gram, k2, k1, pen):
    """Assemble the (P*(m+1)) x (P*(m+1)) normal matrix of the joint step."""
    n_comp = w_design.shape[1]
    m = gram.shape[0]
    sw = w_design.T @ w_design
    dim = n_comp * (1 + m)
    a = np.empty((dim, dim))
    a[:n_comp, :n_comp] = m * sw
    cross = np.kron(sw, k1[None, :])
    a[:n_comp, n_comp:] = cross
    a[n_comp:, :n_comp] = cross.T
    a[n_comp:, n_comp:] = np.kron(sw, k2) + pen * np.kron(np.eye(n_comp), gram)
    return a


def _normal_rhs(w_design, targets, gram):
    n_comp = w_design.shape[1]
    top = w_design.T @ targets.sum(axis=1)
    bottom = (gram @ (targets.T @ w_design)).T.ravel()
    out = np.empty(n_comp * (1 + gram.shape[0]))
    out[:n_comp] = top
    out[n_comp:] = bottom
    return out


def solve_varphi_d(w_design, targets, gram, lam, kappa):
    """Exact joint minimizer of the quadratic (varphi, d) subproblem.

    Minimizes (kappa/(2nm)) sum_ij (targets_ij - W_i' varphi
    - (W_i kron K_{s_j})' d)^2 + (lam/2) d' Omega d over the stacked
    parameter, by solving the full symmetric PSD normal system in one shot.
    targets = u + zeta.
    """
    w_design = np.asarray(w_design, dtype=float)
    targets = np.asarray(targets, dtype=float)
    gram = np.asarray(gram, dtype=float)
    n, m = targets.shape
    pen = n * m * lam / kappa
    k2 = gram @ gram
    k1 = gram.sum(axis=1)
    a = _normal_matrix(w_design, gram, k2, k1, pen)
    theta = _SymSolver(a).solve(_normal_rhs(w_design, targets, gram))
    n_comp = w_design.shape[1]
    return theta[:n_comp], theta[n_comp:]


def gamma_step(gamma, targets, base, thresh, z1, z2, spec, kappa=1.0,
               max_inner=20, max_halvings=20):
    """Gauss-Newton descent for the grouping parameter.

    Minimizes (kappa/2) sum_ij (targets_ij - base_ij
    - thresh_ij * G_h(z1_i + z2_i' gamma))^2 with Armijo backtracking
    (factor 0.5); returns the input unchanged when no decrease is found,
    so the subobjective never increases.
    """
    gamma = np.asarray(gamma, dtype=float).copy()
    diff = targets - base
    s1 = np.einsum("ij,ij->i", diff, thresh)
    s2 = np.einsum("ij,ij->i", thresh, thresh)
    c0 = float(np.einsum("ij,ij->", diff, diff))
    if not np.any(s2 > 0):
        return gamma  # flat subobjective: no threshold effect in the fit

    def value(g_ind):
        return 0.5 * kappa * (c0 - 2.0 * float(g_ind @ s1) + float((g_ind * g_ind) @ s2))

    w = z1 + z2 @ gamma
    g_ind = smooth_indicator(spec, w)
    f_cur = value(g_ind)
    for _ in range(max_inner):
        gd = smooth_indicator_deriv(spec, w)
        resid_core = s1 - g_ind * s2            # sum_j thresh_ij * residual_ij
        grad = -kappa * (z2.T @ (gd * resid_core))
        jtj = (z2 * (gd * gd * s2)[:, None]).T @ z2
        rhs = z2.T @ (gd * resid_core)
        try:
            step = np.linalg.solve(jtj, rhs)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jtj, rhs, rcond=None)
        slope = float(grad @ step)
        if not np.all(np.isfinite(step)) or slope >= 0.0:
            break
        alpha = 1.0
        accepted = False
        for _ in range(max_halvings):
            cand = gamma + alpha * step
            w_cand = z1 + z2 @ cand
            g_cand = smooth_indicator(spec, w_cand)
            f_cand = value(g_cand)
            if f_cand <= f_cur + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        gamma, w, g_ind = cand, w_cand, g_cand
        improvement = f_cur - f_cand
        f_cur = f_cand
        if improvement <= 1e-12 * (1.0 + abs(f_cur)):
            break
    return gamma


def classify_subgroups(z1, z2, gamma):
    """Hard threshold labels: 1 iff z1_i + z2_i' gamma >= 0 (ties count as 1)."""
    index = np.asarray(z1, dtype=float) + np.asarray(z2, dtype=float) @ np.asarray(gamma, dtype=float)
    return (index >= 0).astype(int)


def accuracy(labels, truth):
    """1 - mean absolute disagreement between two binary label vectors."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise ValueError(f"label vectors differ in length: {labels.shape} vs {truth.shape}")
    return 1.0 - float(np.mean(np.abs(labels - truth)))


def rmise_components(coef, truth_fns, grid, spec):
    """Root mean squared grid error of each fitted coefficient curve."""
    grid = np.asarray(grid, dtype=float)
    vals = evaluate_coefficients(coef, spec, grid)
    true_vals = np.vstack([np.asarray(f(grid), dtype=float).reshape(1, -1) for f in truth_fns])
    return np.sqrt(np.mean((vals - true_vals) ** 2, axis=1))


def rmise(coef, truth_fns, grid, spec):
    """Sum over components of root mean integrated squared error on the grid."""
    return float(np.sum(rmise_components(coef, truth_fns, grid, spec)))


def lambda_tilde_grid(num=40, lo=2.0, hi=8.0):
    """The penalty grid in pre-scaled units; the fit uses lam = tilde/(n*m)."""
    return np.linspace(lo, hi, num)


def _hard_objective(y, x, xt, labels, gram, varphi, dvec, tau, lam, p):
    n, m = y.shape
    n_comp = len(varphi)
    dmat = dvec.reshape(n_comp, m)
    base = (x @ varphi[:p])[:, None] + x @ (dmat[:p] @ gram)
    if n_comp > p:
        thresh = (xt @ varphi[p:])[:, None] + xt @ (dmat[p:] @ gram)
        fit = base + thresh * labels[:, None]
    else:
        fit = base
    loss = float(np.mean(check_loss(y - fit, tau)))
    pen = 0.5 * lam * float(np.einsum("ij,ij->", dmat, dmat @ gram))
    return loss + pen


class _GramContext:
    """Working Gram matrix with a one-shot jitter escalation.

    The first factorization decides whether the plain Gram suffices; if
    Cholesky fails, a diagonal jitter of 1e-10 * trace/m is added once and
    the derived quantities are rebuilt.  Everything downstream (design,
    penalty, fitted values, residuals) uses the same working matrix so the
    subproblem stays self-consistent.
    """

    def __init__(self, gram0):
        self.gram0 = np.asarray(gram0, dtype=float)
        self.jitter = 0.0
        self.notes = []
        self._set(self.gram0)

    def _set(self, gram):
        self.gram = gram
        self.k2 = gram @ gram
        self.k1 = gram.sum(axis=1)

    def apply_jitter(self):
        m = self.gram0.shape[0]
        self.jitter = JITTER_REL * float(np.trace(self.gram0)) / m
        self._set(self.gram0 + self.jitter * np.eye(m))
        self.notes.append(f"gram jitter {self.jitter:.3e}")

    def factor(self, w_design, pen, allow_jitter):
        a = _normal_matrix(w_design, self.gram, self.k2, self.k1, pen)
        solver = _SymSolver(a)
        if solver.method != "cholesky" and allow_jitter and self.jitter == 0.0:
            self.apply_jitter()
            a = _normal_matrix(w_design, self.gram, self.k2, self.k1, pen)
            solver = _SymSolver(a)
        if solver.method != "cholesky" and "eigh fallback" not in self.notes:
            self.notes.append("eigh fallback")
        return solver


def _resolve_lambda(cfg, n, m):
    return cfg.lam if cfg.lam is not None else LAMBDA_TILDE_DEFAULT / (n * m)


def _resolve_smoothing(cfg, n, index_base):
    if cfg.smoothing is not None:
        return cfg.smoothing
    sd = float(np.std(index_base))
    return SmoothingSpec(h=default_bandwidth(n, sd, cfg.h_const), c_h=cfg.h_const)


def _fit_single(y, x, xt, z1, z2, gram_ctx, cfg, spec, lam, gamma0):
    """One ADMM run from a fixed grouping start; returns the raw solution."""
    n, m = y.shape
    p = x.shape[1]
    dsz = xt.shape[1]
    n_comp = p + dsz
    tau, kappa = cfg.tau, cfg.kappa
    pen = n * m * lam / kappa

    state = AdmmState(u=y.copy(), zeta=np.zeros_like(y), varphi=np.zeros(n_comp),
                      d=np.zeros(n_comp * m), gamma=np.asarray(gamma0, dtype=float).copy())
    fitted = np.zeros_like(y)
    trace = []
    converged = False
    # index / gvec / w_design track state.gamma throughout the loop, so the
    # factorization is rebuilt only on sweeps where the gamma step moved.
    index = z1 + z2 @ state.gamma
    gvec = smooth_indicator(spec, index)
    w_design = np.column_stack([x, xt * gvec[:, None]])
    factor = None

    for it in range(1, cfg.max_iter + 1):
        state.u = update_u(fitted, y, state.zeta, tau, kappa)
        targets = state.u + state.zeta

        if factor is None:
            factor = gram_ctx.factor(w_design, pen, allow_jitter=(it == 1))
        theta = factor.solve(_normal_rhs(w_design, targets, gram_ctx.gram))
        varphi_old = state.varphi
        state.varphi = theta[:n_comp]
        d_new = theta[n_comp:]

        dmat = d_new.reshape(n_comp, m)
        base = (x @ state.varphi[:p])[:, None] + x @ (dmat[:p] @ gram_ctx.gram)
        thresh = (xt @ state.varphi[p:])[:, None] + xt @ (dmat[p:] @ gram_ctx.gram)
        gamma_new = gamma_step(state.gamma, targets, base, thresh, z1, z2, spec, kappa)
        if not np.array_equal(gamma_new, state.gamma):
            factor = None
            index = z1 + z2 @ gamma_new
            gvec = smooth_indicator(spec, index)
            w_design = np.column_stack([x, xt * gvec[:, None]])
        fitted = base + thresh * gvec[:, None]

        state.zeta = update_zeta(state.zeta, state.u, fitted)
        state.primal_norm, state.dual_norm = residual_norms(
            state.u, fitted, w_design, state.varphi, varphi_old, d_new, state.d,
            gram_ctx.gram, kappa)
        state.d = d_new
        state.gamma = gamma_new
        state.iter = it
        obj = _hard_objective(y, x, xt, (index >= 0).astype(float),
                              gram_ctx.gram, state.varphi, d_new, tau, lam, p)
        trace.append((state.primal_norm, state.dual_norm, obj))
        if state.primal_norm < cfg.tol and state.dual_norm < cfg.tol:
            converged = True
            break

    return state, np.asarray(trace), converged, trace[-1][2]


def fit_changeplane(ds: FunctionalDataset, cfg: AdmmConfig) -> ChangePlaneFit:
    """Fit the change-plane quantile model by the full ADMM cycle.

    Runs update_u -> joint (varphi, d) solve -> gamma step -> dual update
    until both residual norms drop below cfg.tol or max_iter is reached.
    With multistart > 1, additional runs start from unit-normal
    perturbations of the base gamma (streams split from cfg.seed) and the
    run with the smallest hard-indicator penalized objective wins.
    Non-convergence is reported through converged=False, not an error.
    """
    y, x, xt, z1, z2 = ds.y, ds.x, ds.xtilde, ds.z1, ds.z2
    n, m = y.shape
    lam = _resolve_lambda(cfg, n, m)
    if isinstance(cfg.gamma_init, str):
        if cfg.gamma_init != "zero":
            raise ValueError(f"unknown gamma_init {cfg.gamma_init!r}")
        gamma_base = np.zeros(ds.q)
    else:
        gamma_base = np.asarray(cfg.gamma_init, dtype=float).reshape(ds.q)
    spec = _resolve_smoothing(cfg, n, z1 + z2 @ gamma_base)

    starts = [gamma_base]
    for k in range(1, cfg.multistart):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(k,)))
        starts.append(gamma_base + rng.standard_normal(ds.q))

    best = None
    gram_ctx = None
    with single_thread_blas():
        for gamma0 in starts:
            ctx = _GramContext(gram_matrix(cfg.kernel, ds.grid))
            state, trace, converged, obj = _fit_single(y, x, xt, z1, z2, ctx, cfg,
                                                       spec, lam, gamma0)
            if best is None or obj < best[3]:
                best = (state, trace, converged, obj)
                gram_ctx = ctx

    state, trace, converged, obj = best
    p, dsz = ds.p, ds.d
    dmat = state.d.reshape(p + dsz, m)
    coef = RepresenterCoefficients(xi=state.varphi[:p], nu=state.varphi[p:],
                                   b=dmat[:p], c=dmat[p:], grid=ds.grid)
    labels = classify_subgroups(z1, z2, state.gamma)
    return ChangePlaneFit(coef=coef, gamma=state.gamma, labels=labels,
                          objective=obj, trace=trace, converged=converged,
                          h=spec.h, lam=lam, jitter=gram_ctx.jitter,
                          solver_notes=tuple(gram_ctx.notes))


class NullSolver:
    """Null-model (no threshold term) solver with a reusable factorization.

    The design never changes across responses with the same covariates and
    penalty, so the normal matrix is factored once and `fit` only runs the
    cheap per-sweep updates.  This is what makes the bootstrap affordable.
    """

    def __init__(self, x, grid, cfg: AdmmConfig, n=None):
        self.x = np.asarray(x, dtype=float)
        self.grid = np.asarray(grid, dtype=float)
        self.cfg = cfg
        n_rows = self.x.shape[0] if n is None else n
        self.lam = _resolve_lambda(cfg, n_rows, len(self.grid))
        self.gram_ctx = _GramContext(gram_matrix(cfg.kernel, self.grid))
        pen = n_rows * len(self.grid) * self.lam / cfg.kappa
        self.factor = self.gram_ctx.factor(self.x, pen, allow_jitter=True)

    def fit(self, y) -> NullFit:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.x.shape[0]:
            raise ValueError("response rows do not match the prepared design")
        cfg = self.cfg
        x = self.x
        gram = self.gram_ctx.gram
        n, m = y.shape
        p = x.shape[1]
        u = y.copy()
        zeta = np.zeros_like(y)
        fitted = np.zeros_like(y)
        d_old = np.zeros(p * m)
        varphi = np.zeros(p)
        trace = []
        converged = False
        with single_thread_blas():
            for _ in range(cfg.max_iter):
                u = update_u(fitted, y, zeta, cfg.tau, cfg.kappa)
                targets = u + zeta
                theta = self.factor.solve(_normal_rhs(x, targets, gram))
                varphi_old = varphi
                varphi = theta[:p]
                d_new = theta[p:]
                dmat = d_new.reshape(p, m)
                fitted = (x @ varphi)[:, None] + x @ (dmat @ gram)
                zeta = update_zeta(zeta, u, fitted)
                primal, dual = residual_norms(u, fitted, x, varphi, varphi_old,
                                              d_new, d_old, gram, cfg.kappa)
                d_old = d_new
                obj = (float(np.mean(check_loss(y - fitted, cfg.tau)))
                       + 0.5 * self.lam * float(np.einsum("ij,ij->", dmat, dmat @ gram)))
                trace.append((primal, dual, obj))
                if primal < cfg.tol and dual < cfg.tol:
                    converged = True
                    break
        coef = RepresenterCoefficients(xi=varphi, nu=np.zeros(0),
                                       b=d_old.reshape(p, m), c=np.zeros((0, m)),
                                       grid=self.grid)
        return NullFit(coef=coef, fitted=fitted, objective=trace[-1][2],
                       trace=np.asarray(trace), converged=converged,
                       lam=self.lam, jitter=self.gram_ctx.jitter)


def fit_null(ds: FunctionalDataset, cfg: AdmmConfig) -> NullFit:
    """Fit the no-subgroup model: same penalized problem with theta == 0."""
    return NullSolver(ds.x, ds.grid, cfg).fit(ds.y)


def select_lambda_cv(ds: FunctionalDataset, cfg: AdmmConfig, folds=5,
                     grid=None, null_model=False, seed=None):
    """Subject-level cross-validation of the penalty over the default grid.

    Scores each candidate by the unsmoothed check loss of held-out
    subjects (hard-indicator predictions for the change-plane model).
    Returns (best lam, table of (lam_tilde, cv_loss)).
    """
    tilde = lambda_tilde_grid() if grid is None else np.asarray(grid, dtype=float)
    n, m = ds.n, ds.m
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % folds
    scores = np.zeros(len(tilde))
    for fold in range(folds):
        test_mask = fold_of == fold
        train = FunctionalDataset(y=ds.y[~test_mask], grid=ds.grid, x=ds.x[~test_mask],
                                  xtilde_cols=ds.xtilde_cols, z1=ds.z1[~test_mask],
                                  z2=ds.z2[~test_mask])
        y_test = ds.y[test_mask]
        x_test = ds.x[test_mask]
        for t, lt in enumerate(tilde):
            sub_cfg = replace(cfg, lam=float(lt) / (train.n * m))
            if null_model:
                fit = fit_null(train, sub_cfg)
                beta = evaluate_coefficients(fit.coef, cfg.kernel, ds.grid)[:ds.p]
                pred = x_test @ beta
            else:
                fit = fit_changeplane(train, sub_cfg)
                curves = evaluate_coefficients(fit.coef, cfg.kernel, ds.grid)
                lab = classify_subgroups(ds.z1[test_mask], ds.z2[test_mask], fit.gamma)
                pred = x_test @ curves[:ds.p] + (
                    (x_test[:, list(ds.xtilde_cols)] @ curves[ds.p:]) * lab[:, None])
            scores[t] += float(np.sum(check_loss(y_test - pred, cfg.tau)))
    best = int(np.argmin(scores))
    table = np.column_stack([tilde, scores / (n * m)])
    return float(tilde[best]) / (n * m), table
