"""Variational minimization of the rate functionals over grid-supported measures.

Measures are discretized on a fixed finite grid; the solvers minimize over
the probability simplex on the grid nodes.  Grid infima upper-approximate the
continuum infima and converge under refinement for the catalog potentials.

* ``minimize_I`` -- entropic mirror descent (multiplicative weights) for the
  entropy + interaction functional, with a monotone line-search safeguard.
* ``minimize_J`` -- Frank-Wolfe with away steps for the pure energy
  functional, whose linear minimization oracle is an argmin over nodes.
* ``simplex_scan_oracle`` -- exhaustive scan of a weight lattice on at most
  four nodes, the brute-force ground truth the solvers are tested against.

Singular kernels (+inf on the diagonal, e.g. Coulomb in d >= 2) make every
measure with atoms carry infinite energy, a discretization ambiguity the
continuum formulation never meets.  The solvers then run on the
off-diagonal-corrected objective plus a self-energy surrogate
(1/2) w_i^2 * W(a_i, a_i + (h/2) e_1) per node, and the result records the
surrogate so downstream comparisons use the same convention.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._enum import compositions_array
from .measures import DiscreteMeasure, ReferenceMeasure, _as_points
from .potentials import PotentialPair, evaluate_V, evaluate_W, pair_matrix

DEFAULT_TOL = 1e-8
DEFAULT_STARTS = 5
SCAN_NODE_LIMIT = 4
SCAN_MIN_STEP = 1e-3


class GridSpec:
    """Finite node set for discretizing measures: a regular box grid or an
    explicit point list."""

    def __init__(self, nodes, step=None, cap=200000):
        nodes = _as_points(nodes)
        if len(nodes) < 1:
            raise ValueError("grid needs at least one node")
        if len(nodes) > cap:
            raise ValueError(f"grid with {len(nodes)} nodes exceeds cap {cap}")
        self._nodes = nodes
        self.step = step

    @classmethod
    def regular(cls, bounds, h, cap=200000):
        b = np.asarray(bounds, dtype=float)
        if h <= 0:
            raise ValueError("grid step h must be positive")
        axes = [np.arange(lo, hi + h / 2, h) for lo, hi in b]
        if any(len(a) < 2 for a in axes):
            raise ValueError("each axis needs at least two nodes")
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        return cls(nodes, step=h, cap=cap)

    @classmethod
    def from_points(cls, points, cap=200000):
        return cls(points, step=None, cap=cap)

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def dim(self) -> int:
        return self._nodes.shape[1]

    def min_spacing(self) -> float:
        if self.step is not None:
            return self.step
        pts = self._nodes
        if len(pts) < 2:
            return 1.0
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        return float(np.sqrt(d2.min()))


@dataclass
class MinimizationResult:
    minimizer: DiscreteMeasure
    value: float
    iterations: int
    convergence_gap: float
    method: str
    seeds: list = field(default_factory=list)
    local: bool | None = None
    surrogate: dict | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "iterations": self.iterations,
                "convergence_gap": self.convergence_gap,
                "method": self.method,
                "seeds": self.seeds,
                "local": self.local,
                "surrogate": self.surrogate,
                "minimizer": json.loads(self.minimizer.to_json()),
            },
            sort_keys=True,
        )


class LinearTilt:
    """Linear functional of the weights: value g . w."""

    def __init__(self, g):
        self.g = np.asarray(g, dtype=float)

    def value(self, w):
        return float(self.g @ w)

    def grad(self, w):
        return self.g

    def value_batch(self, wmat):
        return wmat @ self.g


def _resolve_tilt(tilt, k):
    if tilt is None:
        return None
    if isinstance(tilt, LinearTilt):
        if len(tilt.g) != k:
            raise ValueError("tilt length does not match feasible node count")
        return tilt
    if isinstance(tilt, (list, tuple, np.ndarray)):
        g = np.asarray(tilt, dtype=float)
        if len(g) != k:
            raise ValueError("tilt length does not match feasible node count")
        return LinearTilt(g)
    if hasattr(tilt, "value") and hasattr(tilt, "grad"):
        return tilt
    raise TypeError("tilt must be None, an array, or provide value/grad")


class _Objective:
    """Simplex objective: optional entropy vs nu, quadratic kernel, linear v, tilt."""

    def __init__(self, nodes, kernel, v=None, nu=None, tilt=None, surrogate=None):
        self.nodes = nodes
        self.K = kernel
        self.v = v
        self.nu = nu
        self.tilt = tilt
        self.surrogate = surrogate

    @property
    def k(self):
        return len(self.nodes)

    def value(self, w):
        total = 0.5 * float(w @ (self.K @ w))
        if self.v is not None:
            total += float(self.v @ w)
        if self.nu is not None:
            mask = w > 0
            total += float(np.sum(w[mask] * np.log(w[mask] / self.nu[mask])))
        if self.tilt is not None:
            total += self.tilt.value(w)
        return total

    def grad(self, w):
        g = self.K @ w
        if self.v is not None:
            g = g + self.v
        if self.nu is not None:
            wsafe = np.maximum(w, 1e-300)
            g = g + np.log(wsafe / self.nu) + 1.0
        if self.tilt is not None:
            g = g + self.tilt.grad(w)
        return g

    def value_batch(self, wmat):
        totals = 0.5 * np.einsum("bi,ij,bj->b", wmat, self.K, wmat)
        if self.v is not None:
            totals = totals + wmat @ self.v
        if self.nu is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(wmat > 0, wmat * np.log(wmat / self.nu), 0.0)
            totals = totals + terms.sum(axis=1)
        if self.tilt is not None:
            if hasattr(self.tilt, "value_batch"):
                totals = totals + self.tilt.value_batch(wmat)
            else:
                totals = totals + np.array([self.tilt.value(w) for w in wmat])
        return totals


def _kernel_on_nodes(pair: PotentialPair, nodes, spacing):
    """Symmetrized kernel matrix with the diagonal surrogate where singular."""
    K = pair_matrix(pair.W, nodes, nodes)
    surrogate = None
    diag = np.diag(K)
    if np.any(diag == np.inf):
        offset = spacing / 2.0
        probe = nodes.copy()
        probe[:, 0] += offset
        bar = evaluate_W(pair.W, nodes, probe)
        K = K.copy()
        np.fill_diagonal(K, bar)
        surrogate = {"kind": "self-energy", "spacing": spacing, "offset": offset}
    if np.any(~np.isfinite(K)):
        raise ValueError(
            "kernel is infinite off the diagonal on this grid; "
            "the variational solvers only correct diagonal singularities"
        )
    return 0.5 * (K + K.T), surrogate


def _node_reference(ref: ReferenceMeasure, pair: PotentialPair, nodes):
    """Normalized weights of exp(-V) ell restricted to the grid nodes."""
    v_vals = evaluate_V(pair.V, nodes)
    if ref.is_finite:
        lookup = {a.tobytes(): w for a, w in
                  zip(np.asarray(ref.atoms, dtype=float), ref.weights)}
        ell_w = np.array([lookup.get((n + 0.0).tobytes(), 0.0) for n in nodes])
    else:
        logdens = np.asarray(ref.log_density(nodes), dtype=float)
        with np.errstate(over="ignore"):
            ell_w = np.exp(logdens)
    with np.errstate(over="ignore"):
        raw = ell_w * np.exp(-v_vals)
    total = raw.sum()
    if not (0.0 < total < np.inf):
        raise ValueError("reference restricted to the grid has no mass")
    return raw / total


def _starts(k, nu, starts, seed):
    rng = np.random.default_rng(seed)
    inits = [np.full(k, 1.0 / k)]
    if nu is not None:
        pos = np.maximum(nu, 1e-12)
        inits.append(pos / pos.sum())
    while len(inits) < starts:
        w = rng.dirichlet(np.ones(k))
        inits.append(np.maximum(w, 1e-12) / np.maximum(w, 1e-12).sum())
    return inits[:max(starts, 1)]


def _mirror_descent(obj: _Objective, w0, tol, max_iter):
    w = np.array(w0, dtype=float)
    w = w / w.sum()
    fval = obj.value(w)
    eta = 1.0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = obj.grad(w)
        gap = float(w @ g - g.min())
        if gap < tol:
            break
        improved = False
        for _ in range(60):
            e = -eta * g
            e -= e.max()
            trial = w * np.exp(e)
            s = trial.sum()
            if s <= 0 or not np.isfinite(s):
                eta *= 0.5
                continue
            trial = trial / s
            ftrial = obj.value(trial)
            if ftrial <= fval:
                w = np.maximum(trial, 1e-300)
                w = w / w.sum()
                fval = ftrial
                eta = min(eta * 1.3, 50.0)
                improved = True
                break
            eta *= 0.5
        if not improved:
            break
    return w, fval, it, gap


def _frank_wolfe_away(obj: _Objective, w0, tol, max_iter):
    w = np.array(w0, dtype=float)
    w = w / w.sum()
    Kw = obj.K @ w
    fval = obj.value(w)
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = Kw.copy()
        if obj.v is not None:
            g += obj.v
        if obj.tilt is not None:
            g = g + obj.tilt.grad(w)
        s = int(np.argmin(g))
        gap = float(w @ g - g[s])
        if gap < tol:
            break
        support = np.flatnonzero(w > 1e-16)
        a = int(support[np.argmax(g[support])])
        fw_decrease = g[s] - float(w @ g)
        away_decrease = float(w @ g) - g[a]
        use_away = away_decrease > -fw_decrease and w[a] < 1.0 - 1e-16
        if use_away:
            d = w.copy()
            d[a] -= 1.0
            gamma_max = w[a] / (1.0 - w[a])
            Kd = Kw - obj.K[:, a]
        else:
            d = -w.copy()
            d[s] += 1.0
            gamma_max = 1.0
            Kd = obj.K[:, s] - Kw
        lin = float(g @ d)
        curv = float(d @ Kd)
        if obj.tilt is None or isinstance(obj.tilt, LinearTilt):
            gamma = gamma_max if curv <= 0 else min(gamma_max, max(0.0, -lin / curv))
            if gamma <= 0:
                break
            w = w + gamma * d
            Kw = Kw + gamma * Kd
            fval = obj.value(w)
        else:
            gamma = gamma_max if curv <= 0 else min(gamma_max, max(1e-16, -lin / curv))
            ok = False
            for _ in range(60):
                trial = w + gamma * d
                ftrial = obj.value(trial)
                if ftrial <= fval + 0.25 * gamma * lin:
                    w = trial
                    Kw = Kw + gamma * Kd
                    fval = ftrial
                    ok = True
                    break
                gamma *= 0.5
            if not ok:
                break
        if it % 512 == 0:
            Kw = obj.K @ w     # refresh accumulated drift
        w = np.maximum(w, 0.0)
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            w = w / total
            Kw = obj.K @ w
    return w, obj.value(w), it, gap


def _finish(obj, best_w, best_val, iterations, gap, method, feasible, all_nodes,
            seeds, local, tol):
    weights = np.zeros(len(all_nodes))
    weights[feasible] = best_w
    keep = weights > 0
    minimizer = DiscreteMeasure(all_nodes[keep], weights[keep] / weights[keep].sum())
    return MinimizationResult(
        minimizer=minimizer,
        value=float(best_val),
        iterations=iterations,
        convergence_gap=float(gap),
        method=method,
        seeds=seeds,
        local=local,
        surrogate=obj.surrogate,
    )


def build_objective_I(pair: PotentialPair, ref: ReferenceMeasure, grid: GridSpec,
                      tilt=None):
    """Entropy + interaction objective restricted to feasible grid nodes.

    Feasible nodes are those with positive reference weight under exp(-V) ell;
    elsewhere the entropy term is +inf by definition.  Returns the objective
    and the index array of feasible nodes.
    """
    nodes = grid.nodes
    nu_full = _node_reference(ref, pair, nodes)
    feasible = np.flatnonzero(nu_full > 0.0)
    if len(feasible) == 0:
        raise ValueError("empty feasible grid: no node carries reference mass")
    sub = nodes[feasible]
    K, surrogate = _kernel_on_nodes(pair, sub, grid.min_spacing())
    nu = nu_full[feasible]
    nu = nu / nu.sum()
    tilt = _resolve_tilt(tilt, len(feasible))
    return _Objective(sub, K, v=None, nu=nu, tilt=tilt, surrogate=surrogate), feasible


def build_objective_J(pair: PotentialPair, grid: GridSpec, tilt=None):
    """Pure energy objective on the nodes where the confinement is finite."""
    nodes = grid.nodes
    v_vals = evaluate_V(pair.V, nodes)
    feasible = np.flatnonzero(np.isfinite(v_vals))
    if len(feasible) == 0:
        raise ValueError("all confinement values are infinite on the grid")
    sub = nodes[feasible]
    K, surrogate = _kernel_on_nodes(pair, sub, grid.min_spacing())
    tilt = _resolve_tilt(tilt, len(feasible))
    return _Objective(sub, K, v=v_vals[feasible], nu=None, tilt=tilt,
                      surrogate=surrogate), feasible


def _psd_certified(K) -> bool:
    evals = np.linalg.eigvalsh(0.5 * (K + K.T))
    return bool(evals.min() >= -1e-10 * max(1.0, abs(evals.max())))


def minimize_I(pair: PotentialPair, ref: ReferenceMeasure, grid: GridSpec,
               tilt=None, tol=DEFAULT_TOL, max_iter=20000, starts=DEFAULT_STARTS,
               seed=0) -> MinimizationResult:
    """Minimize entropy + interaction (+ optional tilt) over the grid simplex.

    Entropic mirror descent with a backtracking safeguard, so the objective
    decreases monotonically along every run; multi-start keeps the best value.
    """
    obj, feasible = build_objective_I(pair, ref, grid, tilt)
    inits = _starts(obj.k, obj.nu, starts, seed)
    best = None
    total_iters = 0
    for w0 in inits:
        w, fval, it, gap = _mirror_descent(obj, w0, tol, max_iter)
        total_iters += it
        if best is None or fval < best[1]:
            best = (w, fval, gap)
    local = None if _psd_certified(obj.K) else True
    return _finish(obj, best[0], best[1], total_iters, best[2], "mirror_descent",
                   feasible, grid.nodes, [seed], local, tol)


def minimize_J(pair: PotentialPair, grid: GridSpec, tilt=None, tol=DEFAULT_TOL,
               max_iter=50000, starts=DEFAULT_STARTS, seed=0) -> MinimizationResult:
    """Minimize the pure energy functional (+ optional tilt) over the grid simplex.

    Frank-Wolfe with away steps; the linear minimization oracle is an argmin
    of the first variation over nodes.  Results carry ``local=True`` unless
    the kernel is certified positive semidefinite on the grid.
    """
    obj, feasible = build_objective_J(pair, grid, tilt)
    inits = _starts(obj.k, None, starts, seed)
    best = None
    total_iters = 0
    for w0 in inits:
        w, fval, it, gap = _frank_wolfe_away(obj, w0, tol, max_iter)
        total_iters += it
        if best is None or fval < best[1]:
            best = (w, fval, gap)
    local = None if _psd_certified(obj.K) else True
    return _finish(obj, best[0], best[1], total_iters, best[2], "frank_wolfe_away",
                   feasible, grid.nodes, [seed], local, tol)


def simplex_scan_oracle(objective, nodes, step) -> MinimizationResult:
    """Exhaustive weight-lattice scan: the brute-force ground truth.

    ``objective`` is either a callable on weight vectors or an objective with
    a ``value_batch`` method (as produced by the builders above).  Supports at
    most four nodes and steps no finer than 1e-3; ties resolve to the
    lexicographically first weight vector in lattice order.
    """
    nodes = _as_points(nodes)
    k = len(nodes)
    if k > SCAN_NODE_LIMIT:
        raise ValueError(f"scan oracle supports at most {SCAN_NODE_LIMIT} nodes")
    if step < SCAN_MIN_STEP:
        raise ValueError(f"scan step below {SCAN_MIN_STEP} exceeds the budget")
    resolution = int(round(1.0 / step))
    lattice = compositions_array(resolution, k).astype(float) / resolution
    if hasattr(objective, "value_batch"):
        vals = np.asarray(objective.value_batch(lattice), dtype=float)
    else:
        vals = np.array([float(objective(w)) for w in lattice])
    vals = np.where(np.isnan(vals), np.inf, vals)
    if np.all(vals == np.inf):
        raise ValueError("objective is infinite on the entire lattice")
    idx = int(np.argmin(vals))      # argmin returns the first (lexicographic) tie
    w = lattice[idx]
    keep = w > 0
    minimizer = DiscreteMeasure(nodes[keep], w[keep] / w[keep].sum())
    return MinimizationResult(
        minimizer=minimizer,
        value=float(vals[idx]),
        iterations=len(lattice),
        convergence_gap=0.0,
        method="simplex_scan",
        seeds=[],
        local=None,
        surrogate=getattr(objective, "surrogate", None),
    )
