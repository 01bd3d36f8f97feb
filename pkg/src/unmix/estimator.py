"""Minimum-distance estimation of the unmixing matrix.

The estimator minimizes a weighted quadratic form in the stacked residual

    g(A) = [ unique entries of (A S2 A' - I) ;
             constrained coordinates of the order-r action of A minus their
             targets ;
             A m1                                  (optional mean block) ]

over invertible matrices A, where S2 and the order-r tensor are either raw
sample moments or k-statistics of the observed data.  Minimization is damped
Gauss-Newton (Levenberg-Marquardt) with an analytic Jacobian, run from a
whitening-based starting point and a configurable number of random
orthogonal rotations of it.

Efficient weighting uses the inverse of an estimate of the asymptotic
covariance of sqrt(n) g(A0): a closed-form plug-in for moment statistics,
and a nonparametric bootstrap of the fitted residuals epsilon = Y A' for
either statistic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import moments as moments_mod
from .restrictions import ZeroPattern
from .tensors import (
    SymmetricTensor,
    multilinear_apply,
    num_unique,
    unique_indices,
)

__all__ = [
    "RestrictionSpec",
    "EstimatorOptions",
    "EstimationResult",
    "residual_vector",
    "jacobian_matrix",
    "estimate",
    "estimate_from_tensors",
    "estimate_sigma_plugin",
    "estimate_sigma_bootstrap",
]

log = logging.getLogger(__name__)

STAT_KINDS = ("moment", "cumulant")
WEIGHTINGS = ("identity", "efficient", "plug_in", "bootstrap", "iterated")


@dataclass(frozen=True)
class RestrictionSpec:
    """What is being restricted: the order, the statistic, and the pattern."""

    pattern: ZeroPattern
    stat: str = "cumulant"
    include_mean: bool = False

    def __post_init__(self):
        if self.stat not in STAT_KINDS:
            raise ValueError(f"stat must be one of {STAT_KINDS}, got {self.stat!r}")
        if self.include_mean and self.stat == "moment":
            # raw moments are not translation-equivariant; the mean block is
            # only coherent with cumulant-type statistics or centered data
            log.warning("mean block combined with raw moment statistics")

    @property
    def d(self) -> int:
        return self.pattern.d

    @property
    def r(self) -> int:
        return self.pattern.r

    @property
    def n_moments(self) -> int:
        """Length of the residual vector g."""
        base = self.d * (self.d + 1) // 2 + self.pattern.size
        return base + (self.d if self.include_mean else 0)


@dataclass(frozen=True)
class EstimatorOptions:
    weighting: str = "identity"
    n_starts: int = 20
    seed: int = 0
    max_iterations: int = 500
    gradient_tol: float = 1e-10
    damping_init: float = 1e-3
    condition_bound: float = 1e6
    bootstrap_draws: int = 200
    iterate_tol: float = 1e-8
    max_weight_iterations: int = 10

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.n_starts < 1:
            raise ValueError("need at least one start")


@dataclass
class EstimationResult:
    A_hat: np.ndarray
    objective: float
    converged: bool
    n_iterations: int
    weighting: str
    spec: RestrictionSpec
    n_obs: int = None
    Sigma_hat: np.ndarray = None
    S_hat: np.ndarray = None
    multistart: list = field(default_factory=list)
    stage1: "EstimationResult" = None

    def standard_errors(self) -> np.ndarray:
        """Asymptotic standard errors of the entries of A_hat (row-major)."""
        if self.S_hat is None or self.n_obs is None:
            raise ValueError("standard errors need an efficiently weighted fit on data")
        return np.sqrt(np.diag(self.S_hat) / self.n_obs).reshape(self.A_hat.shape)

    def to_json_dict(self) -> dict:
        out = {
            "A_hat": self.A_hat.tolist(),
            "objective": self.objective,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "weighting": self.weighting,
            "n_obs": self.n_obs,
            "stat": self.spec.stat,
            "order": self.spec.r,
            "pattern": self.spec.pattern.to_json_dict(),
        }
        if self.S_hat is not None and self.n_obs:
            out["standard_errors"] = self.standard_errors().tolist()
        if self.multistart:
            out["multistart_objectives"] = [float(o) for o, _ in self.multistart]
        if self.stage1 is not None:
            out["stage1"] = self.stage1.to_json_dict()
        return out


# ----------------------------------------------------------------------
# residual and Jacobian


class _Workspace:
    """Precomputed pieces of the residual map for fixed statistics."""

    def __init__(self, S2: SymmetricTensor, Tr: SymmetricTensor, spec: RestrictionSpec,
                 mean=None):
        d, r = spec.d, spec.r
        if S2.d != d or S2.r != 2 or Tr.d != d or Tr.r != r:
            raise ValueError("statistics do not match the restriction spec")
        if spec.include_mean:
            if mean is None:
                raise ValueError("spec includes the mean block but no mean was given")
            self.mean = np.asarray(mean, dtype=float).reshape(d)
        else:
            self.mean = None
        self.d, self.r = d, r
        self.S2m = S2.to_dense()
        self.Trd = Tr.to_dense()
        self.iu = np.triu_indices(d)
        self.eye_u = np.eye(d)[self.iu]
        strides = np.array([d ** (r - 1 - k) for k in range(r)], dtype=np.int64)
        self.flat_pos = np.array(
            [int(np.dot(idx, strides)) for idx in spec.pattern.indices], dtype=np.int64
        )
        self.targets = spec.pattern.target_vector()
        self.pattern_indices = spec.pattern.indices
        self.spec = spec

    def residual(self, A: np.ndarray) -> np.ndarray:
        C2 = A @ self.S2m @ A.T
        blocks = [C2[self.iu] - self.eye_u]
        X = self.Trd
        for _ in range(self.r):
            X = np.tensordot(X, A, axes=([0], [1]))
        blocks.append(X.reshape(-1)[self.flat_pos] - self.targets)
        if self.mean is not None:
            blocks.append(A @ self.mean)
        return np.concatenate(blocks)

    def jacobian(self, A: np.ndarray) -> np.ndarray:
        d, r = self.d, self.r
        n2 = self.iu[0].size
        npat = len(self.pattern_indices)
        nm = d if self.mean is not None else 0
        J = np.zeros((n2 + npat + nm, d * d))

        # covariance block: d(A S A')[i,j] / dA[p,q] =
        # [i==p] B[j,q] + [j==p] B[i,q] with B = A S
        B = A @ self.S2m
        for row, (i, j) in enumerate(zip(*self.iu)):
            J[row, i * d: (i + 1) * d] += B[j]
            J[row, j * d: (j + 1) * d] += B[i]

        # order-r block: apply A to all modes but one; the remaining raw mode
        # indexes the q of the differentiated slot.  After r-1 contractions
        # the raw mode sits on axis 0.
        G = self.Trd
        for _ in range(r - 1):
            G = np.tensordot(G, A, axes=([0], [1]))
        for t, idx in enumerate(self.pattern_indices):
            row = n2 + t
            for k in range(r):
                p = idx[k]
                rest = idx[:k] + idx[k + 1:]
                J[row, p * d: (p + 1) * d] += G[(slice(None),) + rest]

        if self.mean is not None:
            for i in range(d):
                J[n2 + npat + i, i * d: (i + 1) * d] = self.mean
        return J


def residual_vector(A, S2: SymmetricTensor, Tr: SymmetricTensor,
                    spec: RestrictionSpec, mean=None) -> np.ndarray:
    """The stacked moment-condition residual g(A) at the given statistics."""
    A = np.asarray(A, dtype=float)
    return _Workspace(S2, Tr, spec, mean).residual(A)


def jacobian_matrix(A, S2: SymmetricTensor, Tr: SymmetricTensor,
                    spec: RestrictionSpec, mean=None) -> np.ndarray:
    """Analytic derivative of :func:`residual_vector` w.r.t. vec(A), row-major."""
    A = np.asarray(A, dtype=float)
    return _Workspace(S2, Tr, spec, mean).jacobian(A)


# ----------------------------------------------------------------------
# Levenberg-Marquardt


def _acceptable(A: np.ndarray, cond_bound: float) -> bool:
    if not np.all(np.isfinite(A)):
        return False
    s = np.linalg.svd(A, compute_uv=False)
    return s[-1] > 0.0 and s[0] / s[-1] <= cond_bound


def _lm_minimize(ws: _Workspace, A0: np.ndarray, opts: EstimatorOptions, w_factor=None):
    """Damped least squares on vec(A).  Returns (A, objective, iters, converged)."""
    d = ws.d

    def fun(x):
        g = ws.residual(x.reshape(d, d))
        return g if w_factor is None else w_factor @ g

    def jac(x):
        J = ws.jacobian(x.reshape(d, d))
        return J if w_factor is None else w_factor @ J

    x = A0.reshape(-1).astype(float).copy()
    rvec = fun(x)
    cost = float(rvec @ rvec)
    lam = opts.damping_init
    converged = False
    it = 0
    eye = np.eye(d * d)
    while it < opts.max_iterations:
        it += 1
        J = jac(x)
        grad = 2.0 * (J.T @ rvec)
        if np.max(np.abs(grad)) <= opts.gradient_tol:
            converged = True
            break
        JTJ = J.T @ J
        JTr = J.T @ rvec
        stepped = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(JTJ + lam * eye, -JTr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            xn = x + delta
            if not _acceptable(xn.reshape(d, d), opts.condition_bound):
                lam *= 10.0
                continue
            rn = fun(xn)
            cn = float(rn @ rn)
            if cn < cost:
                x, rvec, cost = xn, rn, cn
                lam = max(lam / 10.0, 1e-14)
                stepped = True
                break
            if cn <= cost * (1.0 + 1e-10):
                # cost is flat to within rounding; accept on clear first-order
                # progress so the gradient stop rule stays reachable
                gn = float(np.max(np.abs(2.0 * (jac(xn).T @ rn))))
                if gn < 0.5 * float(np.max(np.abs(grad))):
                    x, rvec, cost = xn, rn, cn
                    stepped = True
                    break
            lam *= 10.0
        if not stepped:
            break  # damping exhausted; gradient may still be above tol
    else:
        # loop ran out of iterations; check optimality once more
        converged = bool(np.max(np.abs(2.0 * (jac(x).T @ fun(x)))) <= opts.gradient_tol)
    return x.reshape(d, d), cost, it, converged


def _whitening_start(S2m: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(S2m)
    except np.linalg.LinAlgError:
        raise ValueError("covariance statistic is not positive definite; cannot whiten")
    return np.linalg.inv(L)


def _multistart(ws: _Workspace, opts: EstimatorOptions, w_factor=None, starts=None):
    """Run LM from each start; return sorted [(objective, A, converged)], total iters."""
    if starts is None:
        rng = np.random.default_rng(opts.seed)
        A_w = _whitening_start(ws.S2m)
        starts = [A_w]
        for _ in range(opts.n_starts - 1):
            Z = rng.standard_normal((ws.d, ws.d))
            Q, R = np.linalg.qr(Z)
            Q = Q * np.sign(np.diag(R))  # Haar
            starts.append(Q @ A_w)
    runs = []
    total = 0
    for A0 in starts:
        A, cost, its, conv = _lm_minimize(ws, A0, opts, w_factor)
        runs.append((cost, A, conv))
        total += its
    runs.sort(key=lambda t: t[0])
    return runs, total


# ----------------------------------------------------------------------
# weighting matrices


def _monomial_columns(Y: np.ndarray, order: int) -> np.ndarray:
    """(n, num_unique) matrix of per-observation monomials Y[s,i1]...Y[s,ip]."""
    d = Y.shape[1]
    cols = [np.prod(Y[:, idx], axis=1) for idx in unique_indices(d, order)]
    return np.column_stack(cols)


def _transfer_matrix(A: np.ndarray, d: int, r: int) -> np.ndarray:
    """Matrix L with unique(A o T) = L @ unique(T) for every symmetric T."""
    u = num_unique(d, r)
    L = np.empty((u, u))
    for j in range(u):
        e = np.zeros(u)
        e[j] = 1.0
        L[:, j] = multilinear_apply(A, SymmetricTensor(d, r, e)).values
    return L


def estimate_sigma_plugin(Y, A_hat, spec: RestrictionSpec) -> np.ndarray:
    """Plug-in estimate of the asymptotic covariance of sqrt(n) g(A0).

    With raw moment statistics, g(A) is an average of per-observation terms
    phi_s(A); Sigma is the empirical covariance of phi_s at A_hat.  Only
    defined for spec.stat == 'moment'; use the bootstrap for k-statistics.
    """
    if spec.stat != "moment":
        raise ValueError("plug-in weighting requires moment statistics; "
                         "use the bootstrap for cumulant statistics")
    Y = moments_mod.validate_data(Y)
    A_hat = np.asarray(A_hat, dtype=float)
    d, r = spec.d, spec.r
    if Y.shape[1] != d:
        raise ValueError(f"data has {Y.shape[1]} columns, spec wants {d}")
    L2 = _transfer_matrix(A_hat, d, 2)
    Lr = _transfer_matrix(A_hat, d, r)
    pos = spec.pattern.positions()
    m2 = _monomial_columns(Y, 2)
    mr = _monomial_columns(Y, r)
    eye_u = SymmetricTensor.from_dense(np.eye(d)).values
    blocks = [m2 @ L2.T - eye_u, (mr @ Lr.T)[:, pos] - spec.pattern.target_vector()]
    if spec.include_mean:
        blocks.append(Y @ A_hat.T)
    phi = np.hstack(blocks)
    phi = phi - phi.mean(axis=0)
    return (phi.T @ phi) / Y.shape[0]


def estimate_sigma_bootstrap(Y, A_hat, spec: RestrictionSpec, n_draws: int = 200,
                             seed: int = 0) -> np.ndarray:
    """Bootstrap estimate of the asymptotic covariance of sqrt(n) g(A0).

    Resamples rows of the fitted residuals epsilon = Y @ A_hat' and
    recomputes the full residual vector on each draw; by multilinearity this
    equals g evaluated with the resampled data's statistics.  Returns
    n * cov of the draws.  Deterministic given the seed.
    """
    Y = moments_mod.validate_data(Y)
    A_hat = np.asarray(A_hat, dtype=float)
    n, d = Y.shape
    r = spec.r
    if d != spec.d:
        raise ValueError(f"data has {d} columns, spec wants {spec.d}")
    if n_draws < 2:
        raise ValueError("need at least two bootstrap draws")
    eps = Y @ A_hat.T
    rng = np.random.default_rng(seed)

    eye_u = SymmetricTensor.from_dense(np.eye(d)).values
    pos = spec.pattern.positions()
    targets = spec.pattern.target_vector()

    if spec.stat == "moment":
        orders = [2, r]
    else:
        orders = list(range(1, r + 1))
    monos = {p: _monomial_columns(eps, p) for p in orders}

    draws = np.empty((n_draws, spec.n_moments))
    for b in range(n_draws):
        take = rng.integers(0, n, size=n)
        mu = {p: monos[p][take].mean(axis=0) for p in orders}
        if spec.stat == "moment":
            v2, vr = mu[2], mu[r]
        else:
            fam = moments_mod.MomentFamily(
                [SymmetricTensor(d, p, mu[p]) for p in range(1, r + 1)]
            )

            def weight_fn(pi):
                from .partitions import kstat_coefficient
                return n ** (len(pi) - 1) * kstat_coefficient(pi, n)

            v2 = np.array([
                moments_mod._partition_sum(fam.lookup, idx, weight_fn)
                for idx in unique_indices(d, 2)
            ])
            vr = np.array([
                moments_mod._partition_sum(fam.lookup, idx, weight_fn)
                for idx in unique_indices(d, r)
            ])
        parts = [v2 - eye_u, vr[pos] - targets]
        if spec.include_mean:
            parts.append(eps[take].mean(axis=0))
        draws[b] = np.concatenate(parts)

    centered = draws - draws.mean(axis=0)
    return n * (centered.T @ centered) / n_draws


def _weight_factor(Sigma: np.ndarray) -> np.ndarray:
    """Upper factor F with F'F = inv(Sigma + ridge); weighted residual is F g."""
    k = Sigma.shape[0]
    lam = 1e-10 * float(np.trace(Sigma)) / k
    reg = 0.5 * (Sigma + Sigma.T) + max(lam, 1e-300) * np.eye(k)
    try:
        C = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        # last resort: eigenvalue floor
        w, V = np.linalg.eigh(0.5 * (Sigma + Sigma.T))
        floor = max(1e-12 * float(np.max(np.abs(w))), 1e-300)
        log.warning("covariance estimate not PD even after ridge; flooring eigenvalues")
        C = V @ np.diag(np.sqrt(np.maximum(w, floor))) @ V.T
    return np.linalg.inv(C)


# ----------------------------------------------------------------------
# main entry points


def _resolve_weighting(spec: RestrictionSpec, name: str) -> str:
    if name == "efficient":
        return "plug_in" if spec.stat == "moment" else "bootstrap"
    return name


def _compute_sigma(Y, A, spec, opts: EstimatorOptions, mode: str, seed_shift: int = 0):
    if mode == "plug_in":
        return estimate_sigma_plugin(Y, A, spec)
    return estimate_sigma_bootstrap(Y, A, spec, n_draws=opts.bootstrap_draws,
                                    seed=opts.seed + 7919 * (1 + seed_shift))


def estimate_from_tensors(S2: SymmetricTensor, Tr: SymmetricTensor,
                          spec: RestrictionSpec, opts: EstimatorOptions = None,
                          W=None, mean=None) -> EstimationResult:
    """Minimize the distance form given the statistics directly.

    ``W`` is an optional fixed weighting matrix (defaults to the identity);
    data-driven weighting needs the raw observations, see :func:`estimate`.
    """
    opts = opts or EstimatorOptions()
    ws = _Workspace(S2, Tr, spec, mean)
    w_factor = None
    if W is not None:
        W = np.asarray(W, dtype=float)
        if W.shape != (spec.n_moments, spec.n_moments):
            raise ValueError(f"W must be {spec.n_moments}x{spec.n_moments}")
        # factor F with F'F = W so the LM residual stays a plain least square
        w, V = np.linalg.eigh(0.5 * (W + W.T))
        if np.min(w) < -1e-10 * max(1.0, np.max(np.abs(w))):
            raise ValueError("weighting matrix must be positive semidefinite")
        w_factor = np.diag(np.sqrt(np.maximum(w, 0.0))) @ V.T
    runs, total = _multistart(ws, opts, w_factor)
    best_cost, best_A, best_conv = runs[0]
    return EstimationResult(
        A_hat=best_A, objective=best_cost, converged=best_conv,
        n_iterations=total, weighting="identity" if W is None else "fixed",
        spec=spec, multistart=[(c, a) for c, a, _ in runs],
    )


def estimate(Y, spec: RestrictionSpec, opts: EstimatorOptions = None) -> EstimationResult:
    """Fit the unmixing matrix to data by weighted minimum distance.

    Stage 1 always minimizes with the identity weight from multiple starts.
    If an efficient weighting is requested, the covariance of the moment
    conditions is estimated at the stage-1 solution and that solution is
    re-polished under the inverse-covariance weight (optionally iterating).
    The second stage deliberately does not restart from other candidate
    solutions: the estimated weight is only correct near the point where
    the covariance was taken, and hopping to an equivalent sign-permutation
    copy under a mismatched weight biases the scaled objective downward.
    """
    opts = opts or EstimatorOptions()
    Y = moments_mod.validate_data(Y)
    n, d = Y.shape
    if d != spec.d:
        raise ValueError(f"data has {d} columns but the pattern is for d={spec.d}")
    if n <= spec.r:
        raise ValueError(f"need n > {spec.r} observations, got {n}")

    if spec.stat == "moment":
        fam = moments_mod.sample_moments(Y, max(2, spec.r))
        S2, Tr = fam[2], fam[spec.r]
    else:
        S2 = moments_mod.kstatistic(Y, 2)
        Tr = moments_mod.kstatistic(Y, spec.r)
    mean = Y.mean(axis=0) if spec.include_mean else None

    ws = _Workspace(S2, Tr, spec, mean)
    runs, iters1 = _multistart(ws, opts)
    stage1 = EstimationResult(
        A_hat=runs[0][1], objective=runs[0][0], converged=runs[0][2],
        n_iterations=iters1, weighting="identity", spec=spec, n_obs=n,
        multistart=[(c, a) for c, a, _ in runs],
    )
    mode = _resolve_weighting(spec, opts.weighting)
    if mode == "identity":
        return stage1

    iterate = mode == "iterated"
    if iterate:
        mode = _resolve_weighting(spec, "efficient")

    A_cur = stage1.A_hat
    result = None
    max_rounds = opts.max_weight_iterations if iterate else 1
    total_iters = iters1
    for round_no in range(max_rounds):
        Sigma = _compute_sigma(Y, A_cur, spec, opts, mode, seed_shift=round_no)
        w_factor = _weight_factor(Sigma)
        # Re-minimize from the current solution only.  Sigma was estimated at
        # A_cur, so it is the right weight in A_cur's basin; polishing there
        # keeps the scaled objective chi-square calibrated.  Restarting from
        # other sign-permutation copies would evaluate a mismatched weight
        # and systematically deflate the J statistic.
        runs2, iters2 = _multistart(ws, opts, w_factor, starts=[A_cur])
        total_iters += iters2
        cost, A_new, conv = runs2[0]
        shift = float(np.linalg.norm(A_new - A_cur))
        result = EstimationResult(
            A_hat=A_new, objective=cost, converged=conv, n_iterations=total_iters,
            weighting=mode if not iterate else "iterated", spec=spec, n_obs=n,
            Sigma_hat=Sigma, stage1=stage1,
            multistart=[(c, a) for c, a, _ in runs2],
        )
        A_cur = A_new
        if not iterate or shift <= opts.iterate_tol * (1.0 + float(np.linalg.norm(A_new))):
            break

    # sandwich-free variance of vec(A_hat): inverse curvature at the optimum
    J = ws.jacobian(result.A_hat)
    JW = _weight_factor(result.Sigma_hat) @ J
    try:
        result.S_hat = np.linalg.inv(JW.T @ JW)
    except np.linalg.LinAlgError:
        log.warning("curvature matrix singular at the optimum; no standard errors")
    return result


# ----------------------------------------------------------------------
# orthogonal-group exploration hook (used by restrictions.explore_identified_set)


def _minimize_pattern_on_orthogonal(T: SymmetricTensor, pattern: ZeroPattern,
                                    Q0: np.ndarray):
    """Drive the pattern coordinates of the action on T to their targets over O(d).

    Orthogonality is enforced as an extra residual block (Q Q' - I), which
    vanishes at any solution, so plain damped least squares applies.  The
    returned matrix is polar-projected back onto O(d); None if the run blew up.
    """
    d = T.d
    spec = RestrictionSpec(pattern=pattern, stat="cumulant")
    ws = _Workspace(SymmetricTensor.from_dense(np.eye(d)), T, spec)
    opts = EstimatorOptions(n_starts=1, max_iterations=300, gradient_tol=1e-12)
    Q, _cost, _its, _conv = _lm_minimize(ws, np.asarray(Q0, dtype=float), opts)
    U, _s, Vt = np.linalg.svd(Q)
    Q = U @ Vt
    if not np.all(np.isfinite(Q)):
        return None
    return Q
