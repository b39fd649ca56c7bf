"""Candidate scoring: canonical scores and model-assisted quasi-EM scores.

The masked value g(p) has a two-point preimage {g, s(g)}, so a parametric
model of the p-values can be fit by EM with the branch indicator as the
hidden variable.  Three model families are provided: a Beta regression on an
additive spline basis fit by a Gamma-type IRLS, a Gaussian model with
tree-isotonic means, and a Gaussian model with Laplacian-smoothed means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import BSpline
from scipy.sparse.linalg import cg as sparse_cg
from scipy.special import ndtr, ndtri

from peelfdr import accum

__all__ = [
    "ScoreModel",
    "BasisSpec",
    "canonical_score",
    "estep_weights",
    "fit_beta_gam",
    "fit_gauss_isotonic",
    "fit_gauss_laplacian",
    "tree_isotonic",
    "select_worst",
    "CanonicalRule",
    "ModelAssistedRule",
    "make_rule",
    "observed_loglik_beta",
]

Z_CLIP = 8.2  # double-precision normal cdf saturates past this


@dataclass
class BasisSpec:
    """Cubic B-spline basis with knots at empirical quantiles.

    Additive by default; the tensor option crosses the two per-coordinate
    bases, which is needed when the signal region is not axis-separable
    (only supported for 2-dimensional covariates).
    """

    knots: int = 8
    degree: int = 3
    tensor: bool = False


@dataclass
class ScoreModel:
    kind: str
    scores: np.ndarray                 # per-hypothesis fitted signal strength
    beta: np.ndarray | None = None     # beta_gam coefficients
    basis: object = None
    lam: float = 1.0
    degraded: bool = False
    direction: str = "peel_smallest"


# canonical ------------------------------------------------------------


def _masked_g_map(view) -> dict:
    return dict(zip((int(i) for i in view.masked_ids), view.masked_g))


def canonical_score(view, candidate) -> float:
    """Average masked value over the candidate; larger looks more null."""
    gmap = _masked_g_map(view)
    vals = []
    for i in candidate:
        if int(i) not in gmap:
            raise ValueError(f"candidate id {i} is not masked")
        vals.append(gmap[int(i)])
    return float(np.mean(vals))


# shared pseudo-data ---------------------------------------------------


def _masked_pair(view, spec):
    """Masked branch values: the disclosed small branch and its reflection."""
    q = np.asarray(view.masked_g, dtype=float)
    q = np.clip(q, 0.0, spec.fixed_point)
    s = accum.s_eval(spec, q)
    return q, np.atleast_1d(s)


def _log_sprime_mag(spec, q):
    sp = accum.s_prime(spec, q)
    return np.log(np.maximum(np.abs(np.atleast_1d(sp)), 1e-300))


def _weights_from_logf(logf_low, logf_high, log_sp):
    """Posterior weight on the disclosed branch from branch log-densities."""
    with np.errstate(over="ignore"):
        w = 1.0 / (1.0 + np.exp(np.clip(logf_high + log_sp - logf_low,
                                        -700, 700)))
    return np.clip(w, 0.0, 1.0)


def estep_weights(model: ScoreModel, view, spec) -> np.ndarray:
    """Posterior probability that each masked p equals its small branch."""
    q, s = _masked_pair(view, spec)
    mu = np.asarray(model.scores, dtype=float)[view.masked_ids]
    log_sp = _log_sprime_mag(spec, q)
    if model.kind == "beta_gam":
        logf_low = _beta_logf(q, mu)
        logf_high = _beta_logf(s, mu)
    elif model.kind in ("gauss_isotonic", "gauss_laplacian"):
        logf_low = _gauss_logf_p(q, mu)
        logf_high = _gauss_logf_p(s, mu)
    else:
        raise ValueError(f"model kind {model.kind!r} has no E-step")
    w = _weights_from_logf(logf_low, logf_high, log_sp)
    if np.any(~np.isfinite(w)):
        raise ArithmeticError("non-finite E-step weights")
    return w


def _beta_logf(p, mu):
    p = np.clip(p, 1e-300, 1.0)
    mu = np.maximum(mu, 1e-8)
    return -np.log(mu) + (1.0 / mu - 1.0) * np.log(p)


def _z_of_p(p):
    return np.clip(ndtri(1.0 - np.clip(p, 1e-16, 1.0 - 1e-16)), -Z_CLIP, Z_CLIP)


def _gauss_logf_p(p, mu):
    """Log-density of p = 1 - Phi(z) when z ~ N(mu, 1)."""
    z = _z_of_p(p)
    return -0.5 * (z - mu) ** 2 + 0.5 * z ** 2


# Beta-GLM GAM ---------------------------------------------------------


class _SplineBasis:
    """Design matrix builder: intercept plus per-coordinate cubic B-splines."""

    def __init__(self, X, spec: BasisSpec):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.spec = spec
        self.knot_vectors = []
        k = spec.degree
        for j in range(X.shape[1]):
            col = X[:, j]
            lo, hi = float(col.min()), float(col.max())
            if hi - lo < 1e-12:
                self.knot_vectors.append(None)  # constant coordinate
                continue
            qs = np.linspace(0, 1, spec.knots + 2)[1:-1]
            interior = np.unique(np.quantile(col, qs))
            interior = interior[(interior > lo) & (interior < hi)]
            t = np.concatenate([[lo] * (k + 1), interior, [hi] * (k + 1)])
            self.knot_vectors.append(t)

    def design(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = self.spec.degree
        per_dim = []
        for j, t in enumerate(self.knot_vectors):
            if t is None:
                continue
            x = np.clip(X[:, j], t[0], t[-1])
            per_dim.append(
                BSpline.design_matrix(x, t, k, extrapolate=False).toarray())
        if self.spec.tensor and len(per_dim) == 2:
            A, B = per_dim
            return np.einsum("ij,ik->ijk", A, B).reshape(A.shape[0], -1)
        return np.hstack([np.ones((X.shape[0], 1))] + per_dim)


def _gamma_irls(Phi, y, ridge=1e-6, beta0=None, max_iter=50, tol=1e-10,
                halving_cap=20):
    """Gamma-type GLM with inverse link: mean(y) = 1 / (Phi beta).

    Returns (beta, degraded).  Step-halving keeps every fitted mean positive.
    """
    n, m = Phi.shape
    y = np.maximum(np.asarray(y, dtype=float), 1e-8)
    flat = np.full(n, 1.0 / float(np.mean(y)))
    if beta0 is None:
        beta = np.linalg.lstsq(Phi, flat, rcond=None)[0]
    else:
        beta = np.asarray(beta0, dtype=float).copy()
    eta = Phi @ beta
    if np.any(eta <= 0):
        beta = np.linalg.lstsq(Phi, flat, rcond=None)[0]
        eta = Phi @ beta
    if np.any(eta <= 0):
        raise ArithmeticError("could not find a feasible starting point")
    degraded = False
    for _ in range(max_iter):
        mu = 1.0 / eta
        w = mu * mu
        z = eta - (y - mu) / (mu * mu)
        WP = Phi * w[:, None]
        A = Phi.T @ WP + ridge * np.eye(m)
        b = WP.T @ z
        try:
            beta_new = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            degraded = True
            break
        step = beta_new - beta
        scale = 1.0
        for _ in range(halving_cap):
            eta_try = Phi @ (beta + scale * step)
            if np.all(eta_try > 1e-10):
                break
            scale *= 0.5
        else:
            degraded = True
            break
        delta = float(np.max(np.abs(scale * step)))
        beta = beta + scale * step
        eta = Phi @ beta
        if delta < tol:
            break
    return beta, degraded


def _pseudo_response_beta(view, spec, w):
    """Per-id response y with E(y) = mu(x) under the Beta model."""
    n = view.covariates.shape[0]
    y = np.empty(n)
    rev = view.revealed_ids
    y[rev] = -np.log(np.clip(view.revealed_p, 1e-300, 1.0))
    q, s = _masked_pair(view, spec)
    lo = -np.log(np.clip(q, 1e-300, 1.0))
    hi = -np.log(np.clip(s, 1e-300, 1.0))
    y[view.masked_ids] = w * lo + (1.0 - w) * hi
    return y


def observed_loglik_beta(view, spec, mu) -> float:
    """Observed-data log-likelihood of the Beta model given the view."""
    mu = np.asarray(mu, dtype=float)
    total = float(np.sum(_beta_logf(np.asarray(view.revealed_p),
                                    mu[view.revealed_ids])))
    q, s = _masked_pair(view, spec)
    mum = mu[view.masked_ids]
    log_sp = _log_sprime_mag(spec, q)
    lo = _beta_logf(q, mum)
    hi = _beta_logf(s, mum) + log_sp
    m = np.maximum(lo, hi)
    total += float(np.sum(m + np.log(np.exp(lo - m) + np.exp(hi - m))))
    return total


def fit_beta_gam(view, spec, basis: BasisSpec | None = None, iters: int = 10,
                 ridge: float = 1e-6, init: ScoreModel | None = None
                 ) -> ScoreModel:
    """Quasi-EM fit of the Beta regression model on a spline basis.

    Scores are the fitted means of -log p; larger means stronger signal, so
    the automated rule peels the smallest.
    """
    basis = basis or BasisSpec()
    sb = init.basis if init is not None and init.basis is not None \
        else _SplineBasis(view.covariates, basis)
    Phi = sb.design(view.covariates)
    model = init
    if model is None:
        w = np.full(len(view.masked_ids), 0.5)
        y = _pseudo_response_beta(view, spec, w)
        model = ScoreModel(kind="beta_gam",
                           scores=np.full(Phi.shape[0], float(np.mean(y))),
                           basis=sb)
    beta = model.beta
    degraded = False
    for _ in range(max(1, iters)):
        w = estep_weights(model, view, spec)
        y = _pseudo_response_beta(view, spec, w)
        beta, bad = _gamma_irls(Phi, y, ridge=ridge, beta0=beta)
        degraded = degraded or bad
        mu = 1.0 / np.maximum(Phi @ beta, 1e-10)
        model = ScoreModel(kind="beta_gam", scores=mu, beta=beta, basis=sb,
                           degraded=degraded)
    return model


# Gaussian tree / graph models ----------------------------------------


class _TreeBlock:
    __slots__ = ("val", "wt", "members", "kids")

    def __init__(self, val, wt, members, kids):
        self.val = val
        self.wt = wt
        self.members = members
        self.kids = kids


def tree_isotonic(children, root, y, w=None) -> np.ndarray:
    """Exact weighted L2 isotonic regression on a rooted tree.

    Fits mu minimizing sum w_i (y_i - mu_i)^2 subject to mu_parent >= mu_child.
    Bottom-up block merging: a node's block absorbs the largest violating
    child block until no adjacent block exceeds it.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)

    # iterative post-order to avoid recursion limits on deep chains
    order = []
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(children[v])
    block_of = [None] * n
    for v in reversed(order):
        kids = [block_of[c] for c in children[v]]
        B = _TreeBlock(float(y[v]), float(w[v]), [v], kids)
        while True:
            worst = None
            for kb in B.kids:
                if kb.val > B.val + 1e-15 and \
                        (worst is None or kb.val > worst.val):
                    worst = kb
            if worst is None:
                break
            tot = B.wt + worst.wt
            B.val = (B.wt * B.val + worst.wt * worst.val) / tot
            B.wt = tot
            B.members.extend(worst.members)
            B.kids.remove(worst)
            B.kids.extend(worst.kids)
        block_of[v] = B
    mu = np.empty(n)
    stack = [block_of[root]]
    while stack:
        B = stack.pop()
        for i in B.members:
            mu[i] = B.val
        stack.extend(B.kids)
    return mu


def _pseudo_response_gauss(view, spec, w):
    n = view.covariates.shape[0]
    r = np.empty(n)
    r[view.revealed_ids] = _z_of_p(np.asarray(view.revealed_p))
    q, s = _masked_pair(view, spec)
    z_lo = _z_of_p(q)   # small p-branch => large z
    z_hi = _z_of_p(s)
    r[view.masked_ids] = w * z_lo + (1.0 - w) * z_hi
    return r


def fit_gauss_isotonic(view, spec, tree_constraint, iters: int = 10,
                       init: ScoreModel | None = None) -> ScoreModel:
    """Quasi-EM Gaussian fit with tree-isotonic means (parent >= child)."""
    if tree_constraint.kind != "tree":
        raise ValueError("isotonic scores require a tree constraint")
    root = int(np.nonzero(tree_constraint.parent < 0)[0][0])
    n = view.covariates.shape[0]
    model = init or ScoreModel(kind="gauss_isotonic", scores=np.zeros(n))
    for _ in range(max(1, iters)):
        w = estep_weights(model, view, spec)
        r = _pseudo_response_gauss(view, spec, w)
        mu = tree_isotonic(tree_constraint.children, root, r)
        model = ScoreModel(kind="gauss_isotonic", scores=mu)
    return model


def graph_laplacian(n, edges) -> sparse.csr_matrix:
    """Laplacian of the undirected skeleton of an edge list."""
    pairs = set()
    for u, v in edges:
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    rows, cols, vals = [], [], []
    deg = np.zeros(n)
    for u, v in pairs:
        rows += [u, v]
        cols += [v, u]
        vals += [-1.0, -1.0]
        deg[u] += 1
        deg[v] += 1
    rows += list(range(n))
    cols += list(range(n))
    vals += deg.tolist()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def solve_smoothing(L, lam, r, tol=1e-8) -> np.ndarray:
    """Solve (I + lam L) mu = r by conjugate gradient."""
    n = L.shape[0]
    A = sparse.identity(n, format="csr") + lam * L
    mu, info = sparse_cg(A, r, rtol=0.0, atol=tol * np.linalg.norm(r) if
                         np.linalg.norm(r) > 0 else 1e-300, maxiter=10 * n)
    if info != 0:
        raise ArithmeticError("conjugate gradient failed to converge")
    return mu


def fit_gauss_laplacian(view, spec, graph_constraint, lam: float = 1.0,
                        iters: int = 10, init: ScoreModel | None = None
                        ) -> ScoreModel:
    """Quasi-EM Gaussian fit with Laplacian-penalized means."""
    if graph_constraint.kind in ("dag_strong", "dag_weak"):
        edges = graph_constraint.edges
        n = graph_constraint.n
    elif graph_constraint.kind == "tree":
        par = graph_constraint.parent
        n = len(par)
        edges = [(int(par[v]), v) for v in range(n) if par[v] >= 0]
    else:
        raise ValueError("Laplacian scores require a tree or DAG constraint")
    L = graph_laplacian(n, edges)
    model = init or ScoreModel(kind="gauss_laplacian", scores=np.zeros(n),
                               lam=lam)
    for _ in range(max(1, iters)):
        w = estep_weights(model, view, spec)
        r = _pseudo_response_gauss(view, spec, w)
        mu = solve_smoothing(L, lam, r) if lam > 0 else r
        model = ScoreModel(kind="gauss_laplacian", scores=mu, lam=lam)
    return model


# selection ------------------------------------------------------------


def select_worst(candidates, scores, direction: str):
    """Arg-extreme candidate; ties go to the lexicographically smallest set."""
    if not candidates:
        raise ValueError("no candidates to select from")
    scores = np.asarray(scores, dtype=float)
    if direction == "peel_largest":
        best = np.max(scores)
    elif direction == "peel_smallest":
        best = np.min(scores)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    tied = [candidates[i] for i in range(len(candidates))
            if scores[i] == best]
    return min(tied, key=lambda c: tuple(sorted(c)))


# automated rules ------------------------------------------------------


class CanonicalRule:
    """Peel the candidate with the largest average masked value."""

    direction = "peel_largest"

    def reset(self, session) -> None:
        pass

    def choose(self, view):
        gmap = np.full(view.covariates.shape[0], np.nan)
        gmap[view.masked_ids] = view.masked_g
        scores = [float(np.mean(gmap[c])) for c in view.candidates]
        return select_worst(view.candidates, scores, self.direction)


class ModelAssistedRule:
    """Peel the candidate with the weakest fitted signal strength.

    The model warms up from the previous step's fit, so a small per-step
    iteration cap suffices.
    """

    direction = "peel_smallest"

    def __init__(self, kind: str, knots: int = 8, ridge: float = 1e-6,
                 lam: float = 1.0, em_iters: int = 10, tensor: bool = False,
                 warm_iters: int | None = None, refit_every: int = 1):
        if kind not in ("beta_gam", "gauss_isotonic", "gauss_laplacian"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.basis = BasisSpec(knots=knots, tensor=tensor)
        self.ridge = ridge
        self.lam = lam
        self.em_iters = em_iters
        self.warm_iters = warm_iters or max(em_iters, 20)
        self.refit_every = max(1, refit_every)
        self._model = None
        self._calls = 0

    def reset(self, session) -> None:
        self._model = None
        self._calls = 0
        ck = session.constraint.kind
        if self.kind == "gauss_isotonic" and ck != "tree":
            raise ValueError("isotonic rule requires a tree constraint")
        if self.kind == "gauss_laplacian" and \
                ck not in ("tree", "dag_strong", "dag_weak"):
            raise ValueError("Laplacian rule requires a tree or DAG constraint")

    def _fit(self, view):
        stale = self._calls % self.refit_every == 0
        iters = self.warm_iters if self._model is None else self.em_iters
        self._calls += 1
        if self._model is not None and not stale:
            return self._model
        if self.kind == "beta_gam":
            self._model = fit_beta_gam(view, view.spec, basis=self.basis,
                                       iters=iters, ridge=self.ridge,
                                       init=self._model)
        elif self.kind == "gauss_isotonic":
            self._model = fit_gauss_isotonic(view, view.spec, view.constraint,
                                             iters=iters, init=self._model)
        else:
            self._model = fit_gauss_laplacian(view, view.spec, view.constraint,
                                              lam=self.lam, iters=iters,
                                              init=self._model)
        return self._model

    def choose(self, view):
        model = self._fit(view)
        scores = [float(np.mean(model.scores[c])) for c in view.candidates]
        return select_worst(view.candidates, scores, self.direction)


def make_rule(obj: dict):
    """Build an update rule from its JSON configuration."""
    kind = obj.get("kind", "canonical")
    if kind == "canonical":
        return CanonicalRule()
    return ModelAssistedRule(kind,
                             knots=obj.get("knots", 8),
                             ridge=obj.get("ridge", 1e-6),
                             lam=obj.get("lambda", 1.0),
                             em_iters=obj.get("em_iters", 10),
                             tensor=obj.get("tensor", False),
                             warm_iters=obj.get("warm_iters"),
                             refit_every=obj.get("refit_every", 1))
