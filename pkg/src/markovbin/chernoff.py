"""Chernoff information between stationary Markov chains.

C(p1, p2) is the smallest D_c(p||p1) over consistent p on the decision
boundary D_c(p||p1) = D_c(p||p2).  The boundary term is linear in p,

    D_c(p||p1) - D_c(p||p2) = sum_ab p(ab) [log p2(b|a) - log p1(b|a)],

so the problem is a convex objective over an affine set.  The solver runs
infeasible-start Newton on the KKT system from a geometric-mean initializer;
if that stalls, an augmented-Lagrangian loop on softmax parameters (L-BFGS
inner solves) supplies a warm start and Newton polishes from there.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .markov import (
    InvalidInput,
    JointDistribution,
    MarkovModel,
    conditional_relative_entropy,
    stationary_context_distribution,
)

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
POSITIVITY_FLOOR = 1e-12
INNER_MAXITER = 300
WARM_START_TOL = 1e-6


class DegenerateInput(InvalidInput):
    """Both models are the same chain; the boundary is the whole space."""


@dataclass
class ChernoffResult:
    value: float
    p_star: JointDistribution
    constraint_gap: float
    iterations: int
    converged: bool
    stationarity: float = math.nan

    def to_dict(self) -> dict:
        return {"value": self.value, "constraint_gap": self.constraint_gap,
                "iterations": self.iterations, "converged": self.converged,
                "stationarity": self.stationarity, "p_star": self.p_star.to_dict()}


@dataclass
class ResolvabilityReport:
    c_min: float
    argmin_pair: tuple[int, int]
    lbar_threshold: float
    per_pair: np.ndarray
    converged: np.ndarray
    results: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "c_min": self.c_min,
            "argmin_pair": list(self.argmin_pair),
            "lbar_threshold": self.lbar_threshold,
            "per_pair": self.per_pair.tolist(),
            "converged": self.converged.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def consistency_matrix(order: int, size: int) -> np.ndarray:
    """A with (A p)_a = sum_b p(ab) - sum_b p(ba); last (redundant) row dropped."""
    n_ctx = size ** order
    n = n_ctx * size
    A = np.zeros((n_ctx, n))
    idx = np.arange(n)
    A[idx // size, idx] += 1.0
    A[idx % n_ctx, idx] -= 1.0
    return A[:-1]


def context_sum_matrix(order: int, size: int) -> np.ndarray:
    n_ctx = size ** order
    S = np.zeros((n_ctx, n_ctx * size))
    idx = np.arange(n_ctx * size)
    S[idx // size, idx] = 1.0
    return S


class _Problem:
    """min_p D_c(p||q) s.t. A p = 0, 1'p = 1, w'p = rhs (all in bits)."""

    def __init__(self, q: MarkovModel, w: np.ndarray, rhs: float = 0.0):
        self.order = q.order
        self.size = q.alphabet.size
        self.n = w.size
        self.log_q = q.log_transitions
        self.w = w
        self.A = consistency_matrix(self.order, self.size)
        self.S = context_sum_matrix(self.order, self.size)
        self.B = np.vstack([self.A, w[None, :], np.ones((1, self.n))])
        self.b = np.zeros(self.B.shape[0])
        self.b[-2] = rhs
        self.b[-1] = 1.0

    def log_cond(self, p: np.ndarray) -> np.ndarray:
        p = np.maximum(p, POSITIVITY_FLOOR)
        rows = p.reshape(-1, self.size)
        return (np.log2(rows) - np.log2(rows.sum(axis=1, keepdims=True))).ravel()

    def objective(self, p: np.ndarray) -> float:
        return float(p @ (self.log_cond(p) - self.log_q))

    def gradient(self, p: np.ndarray) -> np.ndarray:
        return self.log_cond(p) - self.log_q

    def hessian(self, p: np.ndarray) -> np.ndarray:
        p = np.maximum(p, POSITIVITY_FLOOR)
        marg = self.S @ p
        return (np.diag(1.0 / p) - self.S.T @ np.diag(1.0 / marg) @ self.S) / LN2

    def residual(self, p: np.ndarray) -> np.ndarray:
        return self.B @ p - self.b

    def stationarity(self, p: np.ndarray) -> float:
        """Norm of the objective gradient after removing the constraint normals."""
        g = self.gradient(p)
        nu, *_ = np.linalg.lstsq(self.B.T, g, rcond=None)
        return float(np.abs(g - self.B.T @ nu).max())


def _initial_point(p1: MarkovModel, p2: MarkovModel) -> np.ndarray:
    # geometric mean of the two transition laws, made consistent by taking
    # the stationary joint of the resulting chain
    geo = np.sqrt(p1.transitions * p2.transitions)
    geo = np.maximum(geo, POSITIVITY_FLOOR)
    rows = geo / geo.sum(axis=1, keepdims=True)
    pi = stationary_context_distribution(rows, p1.order)
    p0 = (pi[:, None] * rows).ravel()
    p0 = np.maximum(p0, POSITIVITY_FLOOR)
    return p0 / p0.sum()


def _augmented_lagrangian(prob: _Problem, p0: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    theta = np.log(p0)
    n_con = prob.A.shape[0] + 1
    mu = np.zeros(n_con)
    rho = 10.0
    iterations = 0
    prev_violation = math.inf

    def constraints(p):
        return np.concatenate([prob.A @ p, [prob.w @ p - prob.b[-2]]])

    def fun(th, mu, rho):
        logp = th - logsumexp(th)
        p = np.exp(logp)
        c = constraints(p)
        val = prob.objective(p) + mu @ c + 0.5 * rho * c @ c
        g_p = prob.gradient(p) + prob.A.T @ (mu[:-1] + rho * c[:-1]) + prob.w * (mu[-1] + rho * c[-1])
        g_th = p * (g_p - p @ g_p)
        return val, g_th

    for _ in range(50):
        budget = max(10, min(INNER_MAXITER, max_iter - iterations))
        res = minimize(fun, theta, args=(mu, rho), jac=True, method="L-BFGS-B",
                       options={"maxiter": budget, "gtol": 1e-10, "ftol": 1e-14})
        iterations += int(res.nit)
        theta = res.x
        p = softmax(theta)
        c = constraints(p)
        violation = float(np.abs(c).max())
        mu = mu + rho * c
        if violation <= tol or iterations >= max_iter:
            break
        if violation > 0.25 * prev_violation:
            rho = min(rho * 10.0, 1e8)
        prev_violation = violation
    return softmax(theta), iterations


def _newton_polish(prob: _Problem, p: np.ndarray, steps: int = 50, tol: float = 1e-13) -> tuple[np.ndarray, int]:
    """Infeasible-start Newton on the KKT system, line search on the residual norm."""
    m = prob.B.shape[0]
    nu, *_ = np.linalg.lstsq(prob.B.T, -prob.gradient(p), rcond=None)

    def kkt_residual(pp, nn):
        return np.concatenate([prob.gradient(pp) + prob.B.T @ nn, prob.residual(pp)])

    used = 0
    for _ in range(steps):
        r = kkt_residual(p, nu)
        norm = float(np.linalg.norm(r))
        if norm < tol:
            break
        K = np.block([[prob.hessian(p), prob.B.T], [prob.B, np.zeros((m, m))]])
        sol, *_ = np.linalg.lstsq(K, -r, rcond=None)
        dp, dnu = sol[: prob.n], sol[prob.n:]
        used += 1
        t = 1.0
        neg = dp < 0
        if np.any(neg):
            t = min(1.0, 0.99 * float(np.min(-p[neg] / dp[neg])))
        while t > 1e-10:
            cand = p + t * dp
            if cand.min() > 0 and np.linalg.norm(kkt_residual(cand, nu + t * dnu)) <= (1 - 0.01 * t) * norm:
                break
            t *= 0.5
        if t <= 1e-10:
            break
        p = p + t * dp
        nu = nu + t * dnu
    return p, used


def _solved(prob: _Problem, p: np.ndarray, tol: float) -> bool:
    return bool(p.min() > 0 and np.abs(prob.residual(p)).max() <= tol and prob.stationarity(p) <= tol)


def _project_affine(prob: _Problem, p: np.ndarray) -> np.ndarray:
    """Smallest correction putting p exactly on the affine constraint set."""
    r = prob.residual(p)
    corr, *_ = np.linalg.lstsq(prob.B, r, rcond=None)
    return p - corr


def _models_equal(p1: MarkovModel, p2: MarkovModel) -> bool:
    return bool(np.array_equal(p1.joint.probs, p2.joint.probs))


def chernoff_information(p1: MarkovModel, p2: MarkovModel, tol: float = 1e-8,
                         max_iter: int = 10_000) -> ChernoffResult:
    """Solve for C(p1, p2) and the boundary minimizer p*.

    Raises :class:`DegenerateInput` when the two models coincide.
    """
    if not (p1.joint.same_shape(p2.joint)):
        raise InvalidInput("models differ in order or alphabet")
    if not (p1.in_p_tilde() and p2.in_p_tilde()):
        raise InvalidInput("both models must be strictly positive and consistent")
    if _models_equal(p1, p2):
        raise DegenerateInput("identical models: Chernoff information is undefined (boundary is everything)")

    w = p2.log_transitions - p1.log_transitions
    prob = _Problem(p1, w)
    p0 = _initial_point(p1, p2)
    p, iterations = _newton_polish(prob, p0)
    if not _solved(prob, p, tol):
        log.info("newton from the geometric-mean start stalled; warm-starting with augmented Lagrangian")
        p, al_iters = _augmented_lagrangian(prob, p0, WARM_START_TOL, max_iter)
        p, newton_steps = _newton_polish(prob, p)
        iterations += al_iters + newton_steps
    p = _project_affine(prob, np.maximum(p, POSITIVITY_FLOOR))
    p = np.maximum(p, POSITIVITY_FLOOR)
    p = p / p.sum()

    p_star = JointDistribution(p1.order, p1.alphabet, p)
    d1 = conditional_relative_entropy(p_star, p1.joint)
    d2 = conditional_relative_entropy(p_star, p2.joint)
    gap = abs(d1 - d2)
    stat = prob.stationarity(p)
    converged = bool(gap <= tol and p_star.consistency_residual() <= 1e-12
                     and stat <= tol and iterations <= max_iter)
    if not converged:
        log.warning("chernoff solve not converged: gap=%.3g stationarity=%.3g", gap, stat)
    return ChernoffResult(value=d1, p_star=p_star, constraint_gap=gap, iterations=iterations,
                          converged=converged, stationarity=stat)


def boundary_value(p: JointDistribution, p1: MarkovModel, p2: MarkovModel) -> float:
    """D_c(p||p2) - D_c(p||p1); non-negative on the H1 decision region."""
    return conditional_relative_entropy(p, p2.joint) - conditional_relative_entropy(p, p1.joint)


def min_pairwise_chernoff(models: list[MarkovModel], tol: float = 1e-8, max_workers: int | None = None,
                          symmetric_check: bool = False) -> ResolvabilityReport:
    """All unordered pairs; ``symmetric_check`` also solves (l, k) and fills the lower triangle from it."""
    M = len(models)
    if M < 2:
        raise InvalidInput("need at least two models")
    pairs = list(itertools.combinations(range(M), 2))
    jobs = pairs + ([(l, k) for k, l in pairs] if symmetric_check else [])
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        solved = list(pool.map(lambda kl: chernoff_information(models[kl[0]], models[kl[1]], tol), jobs))
    results = dict(zip(jobs, solved))
    per_pair = np.zeros((M, M))
    converged = np.ones((M, M), dtype=bool)
    for (k, l), res in results.items():
        per_pair[k, l] = res.value
        converged[k, l] = res.converged
        if not symmetric_check:
            per_pair[l, k] = res.value
            converged[l, k] = res.converged
    k, l = min(pairs, key=lambda kl: per_pair[kl])
    c_min = float(per_pair[k, l])
    return ResolvabilityReport(c_min=c_min, argmin_pair=(k, l), lbar_threshold=1.0 / c_min,
                               per_pair=per_pair, converged=converged, results=results)


def iid_chernoff(p: np.ndarray, q: np.ndarray, grid: int = 100_001) -> tuple[float, float]:
    """Classical Chernoff information -min_lambda log2 sum p^l q^(1-l), by lambda scan."""
    lam = np.linspace(0.0, 1.0, grid)
    vals = np.log2((p[None, :] ** lam[:, None] * q[None, :] ** (1 - lam[:, None])).sum(axis=1))
    i = int(np.argmin(vals))
    return float(-vals[i]), float(lam[i])


# --- brute-force oracle ----------------------------------------------------

def _binary_joint_grid(resolution: int):
    h = 1.0 / resolution
    a = np.arange(resolution + 1) * h
    A, Bv = np.meshgrid(a, a, indexing="ij")
    P11 = 1.0 - A - 2.0 * Bv
    return A, Bv, P11


def _dc_binary(p00, p01, p11, log_t: np.ndarray) -> np.ndarray:
    """Vectorized D_c(p||q) for consistent binary bigram p = (p00, p01, p01, p11)."""
    m0 = p00 + p01
    m1 = p01 + p11
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (p00 * (np.log2(p00 / m0) - log_t[0])
                 + p01 * (np.log2(p01 / m0) - log_t[1])
                 + p01 * (np.log2(p01 / m1) - log_t[2])
                 + p11 * (np.log2(p11 / m1) - log_t[3]))
    return terms


def grid_oracle_chernoff(p1: MarkovModel, p2: MarkovModel, resolution: int = 2000,
                         bisection_steps: int = 60) -> float:
    """Brute-force Chernoff information for binary first-order chains.

    Consistent binary bigram laws are (p00, p01, p01, p11), a 2-parameter
    family.  Grid edges whose endpoints lie on opposite sides of the boundary
    D_c(.||p1) = D_c(.||p2) are bisected to the crossing; the oracle returns the
    smallest D_c(.||p1) among the crossings.
    """
    if p1.order != 1 or p1.alphabet.size != 2 or not p1.joint.same_shape(p2.joint):
        raise InvalidInput("grid oracle supports binary first-order models only")
    if _models_equal(p1, p2):
        return 0.0
    lt1 = p1.log_transitions
    lt2 = p2.log_transitions

    def diff(p00, p01, p11):
        return _dc_binary(p00, p01, p11, lt1) - _dc_binary(p00, p01, p11, lt2)

    A, Bv, P11 = _binary_joint_grid(resolution)
    interior = (A > 0) & (Bv > 0) & (P11 > 0)
    with np.errstate(invalid="ignore"):
        G = np.where(interior, diff(A, Bv, P11), np.nan)

    best = math.inf
    for axis in (0, 1):
        g0 = G.take(np.arange(resolution), axis=axis)
        g1 = G.take(np.arange(1, resolution + 1), axis=axis)
        cross = np.isfinite(g0) & np.isfinite(g1) & (np.sign(g0) != np.sign(g1))
        if not cross.any():
            continue
        a0 = A.take(np.arange(resolution), axis=axis)[cross]
        b0 = Bv.take(np.arange(resolution), axis=axis)[cross]
        a1 = A.take(np.arange(1, resolution + 1), axis=axis)[cross]
        b1 = Bv.take(np.arange(1, resolution + 1), axis=axis)[cross]
        lo = np.zeros(a0.size)
        hi = np.ones(a0.size)
        s0 = np.sign(g0[cross])
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            am = a0 + mid * (a1 - a0)
            bm = b0 + mid * (b1 - b0)
            gm = diff(am, bm, 1.0 - am - 2.0 * bm)
            same = np.sign(gm) == s0
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        t = 0.5 * (lo + hi)
        am = a0 + t * (a1 - a0)
        bm = b0 + t * (b1 - b0)
        vals = _dc_binary(am, bm, 1.0 - am - 2.0 * bm, lt1)
        best = min(best, float(np.nanmin(vals)))
    # exact zeros of the boundary function on grid nodes
    on = interior & (G == 0)
    if on.any():
        best = min(best, float(np.nanmin(_dc_binary(A[on], Bv[on], P11[on], lt1))))
    return best


# --- information projection onto the complement of an l1 ball ---------------

@dataclass
class ProjectionResult:
    value: float
    p_star: JointDistribution | None
    converged: bool
    faces_tried: int


def information_projection_l1(q: MarkovModel, center: JointDistribution, radius: float,
                              tol: float = 1e-8, exhaustive_limit: int = 8, restarts: int = 8,
                              seed: int = 0) -> ProjectionResult:
    """inf D_c(p||q) over consistent p with ||p - center||_1 >= radius.

    ||p - c||_1 >= r holds iff s'(p - c) >= r for some sign vector s, so the
    infimum is the smallest of the half-space problems, each solved like the
    Chernoff problem (the constraint is active when q lies inside the ball).
    Sign vectors are enumerated for up to ``exhaustive_limit`` grams; larger
    alphabets iterate s <- sign(p* - c) from several starts.
    """
    n = q.joint.probs.size
    if not q.joint.same_shape(center):
        raise InvalidInput("model and center differ in order or alphabet")
    if radius <= 0 or np.abs(q.joint.probs - center.probs).sum() >= radius:
        return ProjectionResult(0.0, q.joint, True, 0)
    if radius > 2.0:
        return ProjectionResult(math.inf, None, True, 0)

    def solve_face(signs: np.ndarray):
        prob = _Problem(q, signs.astype(float), radius + float(signs @ center.probs))
        p, _ = _newton_polish(prob, q.joint.probs.copy(), steps=100)
        if not _solved(prob, p, tol):
            return None
        p = np.maximum(p, 0.0)
        p = p / p.sum()
        return prob.objective(p), p

    best = None
    tried = 0
    all_converged = True
    if n <= exhaustive_limit:
        candidates = (np.array(bits) for bits in itertools.product((-1.0, 1.0), repeat=n))
        for signs in candidates:
            tried += 1
            sol = solve_face(signs)
            if sol is not None and (best is None or sol[0] < best[0]):
                best = sol
    else:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            for _ in range(50):
                tried += 1
                sol = solve_face(signs)
                if sol is None:
                    break
                new = np.where(sol[1] - center.probs >= 0, 1.0, -1.0)
                if best is None or sol[0] < best[0]:
                    best = sol
                if np.array_equal(new, signs):
                    break
                signs = new
            else:
                all_converged = False
    if best is None:
        return ProjectionResult(math.nan, None, False, tried)
    p_star = JointDistribution(q.order, q.alphabet, best[1])
    return ProjectionResult(float(best[0]), p_star, all_converged, tried)
