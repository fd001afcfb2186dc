"""Finitely supported probability measures on R^d and the metrics comparing them.

A :class:`DiscreteMeasure` is the computational stand-in for a probability
measure: a list of distinct atoms in R^d with positive weights summing to one.
Three metrics are provided:

* ``d_bl``    -- bounded-Lipschitz distance, computed exactly as a small
  linear program over function values on the union support.
* ``d_psi``   -- bounded-Lipschitz part plus the discrepancy of psi-integrals,
  the weighted metric that upgrades weak convergence to psi-moment convergence.
  The weak-topology part uses d_bl as a computable surrogate for the
  Levy-Prohorov metric (they induce the same topology, d_w <= 3*sqrt(d_bl)).
* ``wasserstein_p`` -- optimal transport cost with ground cost |x-y|^p.
  Returns the raw cost (no p-th root), via exact quantile coupling in
  dimension one and a transportation LP otherwise.
"""
from __future__ import annotations

import json
import math
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

WEIGHT_SUM_TOL = 1e-12
# weights below this after merging are dropped and the measure renormalized,
# so entropy terms never see log(0) from stray near-zero mass
WEIGHT_DROP_TOL = 1e-15


def _as_points(points, dim: int | None = None) -> np.ndarray:
    """Coerce input to a (k, d) float array; 1-d input is read as k points in R^1."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"points must be a (k, d) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected d={dim}, got d={arr.shape[1]}")
    # normalize -0.0 to +0.0 so duplicate detection is stable
    return arr + 0.0


class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    Atoms are canonicalized at construction: duplicates are merged by summing
    weights, atoms are sorted lexicographically, weights below
    ``WEIGHT_DROP_TOL`` are dropped and the rest renormalized.  Instances are
    immutable; all operations on them are pure functions.
    """

    __slots__ = ("_atoms", "_weights")

    def __init__(self, atoms, weights):
        atoms = _as_points(atoms)
        weights = np.asarray(weights, dtype=float).ravel()
        if len(weights) != len(atoms):
            raise ValueError("atoms and weights must have the same length")
        if len(atoms) == 0:
            raise ValueError("a probability measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atom coordinates must be finite")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be non-negative and finite")
        total = math.fsum(weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1 within {WEIGHT_SUM_TOL}, got {total!r}")

        # merge exact duplicates, then sort lexicographically for a canonical form
        order = np.lexsort(atoms.T[::-1])
        atoms = atoms[order]
        weights = weights[order]
        keep_atoms = []
        keep_weights = []
        i = 0
        while i < len(atoms):
            j = i + 1
            w = weights[i]
            while j < len(atoms) and np.array_equal(atoms[j], atoms[i]):
                w += weights[j]
                j += 1
            keep_atoms.append(atoms[i])
            keep_weights.append(w)
            i = j
        atoms = np.array(keep_atoms)
        weights = np.array(keep_weights)

        mask = weights > WEIGHT_DROP_TOL
        if not np.any(mask):
            raise ValueError("all weights below drop tolerance")
        atoms = atoms[mask]
        weights = weights[mask]
        weights = weights / math.fsum(weights)

        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "_atoms", atoms)
        object.__setattr__(self, "_weights", weights)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteMeasure is immutable")

    @property
    def atoms(self) -> np.ndarray:
        return self._atoms

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def dim(self) -> int:
        return self._atoms.shape[1]

    @property
    def support_size(self) -> int:
        return self._atoms.shape[0]

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        """Point mass at ``point``."""
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(pt[None, :], [1.0])

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        """Uniform measure on the given points (duplicates merge their mass)."""
        pts = _as_points(points)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self._atoms.shape == other._atoms.shape
            and np.array_equal(self._atoms, other._atoms)
            and np.array_equal(self._weights, other._weights)
        )

    def __hash__(self):
        return hash((self._atoms.tobytes(), self._weights.tobytes()))

    def __repr__(self):
        return f"DiscreteMeasure(k={self.support_size}, d={self.dim})"

    # -- serialization -------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(
            {"dim": self.dim, "atoms": self._atoms.tolist(), "weights": self._weights.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        obj = json.loads(text)
        atoms = _as_points(obj["atoms"], dim=obj["dim"])
        return cls(atoms, obj["weights"])

    def to_csv(self, path) -> None:
        """Write columns x_1..x_d,w with full (17 significant digit) precision."""
        header = ",".join(f"x_{i+1}" for i in range(self.dim)) + ",w"
        lines = [header]
        for a, w in zip(self._atoms, self._weights):
            lines.append(",".join(f"{v:.17g}" for v in a) + f",{w:.17g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


class ParticleConfig:
    """Ordered n-tuple of points in R^d, the argument of the energy functional."""

    __slots__ = ("_points",)

    def __init__(self, points):
        pts = _as_points(points)
        if len(pts) < 1:
            raise ValueError("a configuration needs at least one particle")
        if not np.all(np.isfinite(pts)):
            raise ValueError("all coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "_points", pts)

    def __setattr__(self, name, value):
        raise AttributeError("ParticleConfig is immutable")

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __repr__(self):
        return f"ParticleConfig(n={self.n}, d={self.dim})"


class WeightFunction:
    """Positive continuous weight psi: R^d -> [0, inf) used by the d_psi metric.

    ``satisfies_growth`` asserts that inf over the sphere of radius c of psi
    diverges as c -> infinity; it holds by construction for the norm-power
    catalog entries psi(x) = |x|^q with q > 0.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], description: str = "",
                 satisfies_growth: bool = False):
        self._fn = fn
        self.description = description or "custom"
        self.satisfies_growth = satisfies_growth

    @classmethod
    def norm_power(cls, q: float) -> "WeightFunction":
        """psi(x) = |x|^q (Euclidean norm)."""
        def fn(points):
            pts = np.asarray(points, dtype=float)
            return np.linalg.norm(pts, axis=-1) ** q
        return cls(fn, description=f"|x|^{q:g}", satisfies_growth=q > 0)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        vals = np.asarray(self._fn(pts), dtype=float)
        if np.any(np.isnan(vals)) or np.any(vals < 0):
            raise ValueError(f"weight function '{self.description}' returned negative or NaN values")
        return vals

    def __repr__(self):
        return f"WeightFunction({self.description})"


class ReferenceMeasure:
    """Sigma-finite reference measure, either finite atoms or a density on a box.

    Finite mode stores an atom cloud with arbitrary positive weights (total
    mass need not be one); it is the exact-enumeration workhorse.  Density
    mode stores a log-density against Lebesgue measure on an axis-aligned box
    and is used by the Metropolis sampler.
    """

    __slots__ = ("mode", "atoms", "weights", "log_density", "box", "description")

    def __init__(self, mode, atoms=None, weights=None, log_density=None, box=None,
                 description=""):
        if mode not in ("finite", "density"):
            raise ValueError("mode must be 'finite' or 'density'")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "log_density", log_density)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "description", description)

    def __setattr__(self, name, value):
        raise AttributeError("ReferenceMeasure is immutable")

    @classmethod
    def finite(cls, atoms, weights=None) -> "ReferenceMeasure":
        atoms = _as_points(atoms)
        if weights is None:
            weights = np.ones(len(atoms))
        weights = np.asarray(weights, dtype=float).ravel()
        if len(weights) != len(atoms):
            raise ValueError("atoms and weights must have the same length")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("reference weights must be positive and finite")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        return cls("finite", atoms=atoms, weights=weights,
                   description=f"finite({len(atoms)} atoms)")

    @classmethod
    def lebesgue_box(cls, bounds) -> "ReferenceMeasure":
        """Lebesgue measure restricted to the closed box given by (low, high) per axis."""
        box = np.asarray(bounds, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("bounds must be a (d, 2) array of (low, high) pairs")

        def log_density(points):
            pts = np.asarray(points, dtype=float)
            inside = np.all((pts >= box[:, 0]) & (pts <= box[:, 1]), axis=-1)
            return np.where(inside, 0.0, -np.inf)

        return cls("density", log_density=log_density, box=box,
                   description=f"lebesgue_box(d={len(box)})")

    @classmethod
    def density_on_box(cls, log_density, bounds, description="density") -> "ReferenceMeasure":
        box = np.asarray(bounds, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("bounds must be a (d, 2) array of (low, high) pairs")
        return cls("density", log_density=log_density, box=box, description=description)

    @property
    def is_finite(self) -> bool:
        return self.mode == "finite"

    @property
    def dim(self) -> int:
        if self.is_finite:
            return self.atoms.shape[1]
        return self.box.shape[0]

    def __repr__(self):
        return f"ReferenceMeasure({self.description})"


# -----------------------------------------------------------------------------
# operations
# -----------------------------------------------------------------------------
def empirical_measure(config: ParticleConfig) -> DiscreteMeasure:
    """Empirical measure (1/n) sum of Dirac masses at the configuration points."""
    n = config.n
    return DiscreteMeasure(config.points, np.full(n, 1.0 / n))


def psi_integral(mu: DiscreteMeasure, psi: WeightFunction) -> float:
    """Integral of psi against mu: sum of w_i * psi(a_i)."""
    return math.fsum(mu.weights * psi(mu.atoms))


def tail_psi_mass(mu: DiscreteMeasure, psi: WeightFunction, r: float) -> float:
    """psi-mass outside the closed ball of radius r: sum over |a_i| > r of w_i psi(a_i)."""
    if r < 0:
        raise ValueError("r must be non-negative")
    norms = np.linalg.norm(mu.atoms, axis=1)
    mask = norms > r
    if not np.any(mask):
        return 0.0
    return math.fsum(mu.weights[mask] * psi(mu.atoms[mask]))


def _union_support(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Union support points with signed weight difference mu - nu."""
    pts = np.vstack([mu.atoms, nu.atoms])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    signed = signed[order]
    out_pts, out_w = [], []
    i = 0
    while i < len(pts):
        j = i + 1
        w = signed[i]
        while j < len(pts) and np.array_equal(pts[j], pts[i]):
            w += signed[j]
            j += 1
        out_pts.append(pts[i])
        out_w.append(w)
        i = j
    return np.array(out_pts), np.array(out_w)


def d_bl(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Bounded-Lipschitz distance, solved exactly as a linear program.

    Maximizes |integral of f d(mu - nu)| over test functions with
    max(Lip(f), 2*sup|f|) <= 1; only the values of f on the union support
    matter, so the sup is a finite LP with pairwise Lipschitz constraints
    and the box constraint |f| <= 1/2.
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch between measures")
    if mu == nu:
        return 0.0
    pts, signed = _union_support(mu, nu)
    k = len(pts)
    if k == 1:
        return 0.0
    # rows: f_u - f_v <= |u - v| for every ordered pair u != v
    dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    iu, ju = np.triu_indices(k, 1)
    rows = []
    rhs = []
    for a, b in zip(iu, ju):
        r = np.zeros(k)
        r[a], r[b] = 1.0, -1.0
        rows.append(r.copy())
        rhs.append(dists[a, b])
        r[a], r[b] = -1.0, 1.0
        rows.append(r)
        rhs.append(dists[a, b])
    res = linprog(
        c=-signed,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=[(-0.5, 0.5)] * k,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return max(0.0, -res.fun)


def d_psi(mu: DiscreteMeasure, nu: DiscreteMeasure, psi: WeightFunction) -> float:
    """Weighted metric: d_bl(mu, nu) + |psi_integral(mu) - psi_integral(nu)|."""
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch between measures")
    return d_bl(mu, nu) + abs(psi_integral(mu, psi) - psi_integral(nu, psi))


def _wasserstein_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Exact transport cost in R^1 via the quantile (monotone) coupling."""
    xa = mu.atoms[:, 0]
    xb = nu.atoms[:, 0]
    ca = np.cumsum(mu.weights)
    cb = np.cumsum(nu.weights)
    levels = np.union1d(ca, cb)
    levels = levels[levels <= 1.0 + 1e-15]
    prev = 0.0
    terms = []
    for lv in levels:
        length = lv - prev
        if length > 0:
            mid = 0.5 * (prev + lv)
            qa = xa[min(np.searchsorted(ca, mid), len(xa) - 1)]
            qb = xb[min(np.searchsorted(cb, mid), len(xb) - 1)]
            terms.append(length * abs(qa - qb) ** p)
        prev = lv
    return math.fsum(terms)


def wasserstein_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Transport cost via the transportation linear program on the support product.

    Serves as the exact value in dimension >= 2 and as the independent check
    of the 1-d quantile formula.
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch between measures")
    if p < 1:
        raise ValueError("p must be >= 1")
    cost = np.linalg.norm(mu.atoms[:, None, :] - nu.atoms[None, :, :], axis=-1) ** p
    ka, kb = mu.support_size, nu.support_size
    c = cost.ravel()
    a_eq = []
    b_eq = []
    for i in range(ka):
        row = np.zeros((ka, kb))
        row[i, :] = 1.0
        a_eq.append(row.ravel())
        b_eq.append(mu.weights[i])
    for j in range(kb):
        row = np.zeros((ka, kb))
        row[:, j] = 1.0
        a_eq.append(row.ravel())
        b_eq.append(nu.weights[j])
    res = linprog(c=c, A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=[(0, None)] * (ka * kb), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(0.0, res.fun)


def wasserstein_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Optimal transport cost inf over couplings of the integral of |x-y|^p.

    Returns the raw cost without the p-th root (matching the metric display
    that defines the distance as the infimum of the cost integral itself).
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch between measures")
    if p < 1:
        raise ValueError("p must be >= 1")
    if mu == nu:
        return 0.0
    if mu.dim == 1:
        return _wasserstein_1d(mu, nu, p)
    return wasserstein_lp(mu, nu, p)


def product_measure(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Product measure mu (x) nu as a discrete measure on R^{2d}."""
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch between measures")
    ka, kb = mu.support_size, nu.support_size
    left = np.repeat(mu.atoms, kb, axis=0)
    right = np.tile(nu.atoms, (ka, 1))
    w = np.outer(mu.weights, nu.weights).ravel()
    return DiscreteMeasure(np.hstack([left, right]), w)
