"""Chart-based representation of compact Riemannian manifolds with boundary.

A manifold is described on a single chart box by a metric field, a boundary
defining function (positive inside, zero on the boundary), and an optional
set of deck identifications gluing faces of the fundamental domain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

BOUNDARY_EPS = 1e-12
DECK_ISOMETRY_TOL = 1e-10


class ChartDomainError(ValueError):
    """Raised when a point leaves the chart domain ("chart violation")."""


class DegenerateMetricError(ValueError):
    """Raised when the metric matrix is singular at a queried point."""


class NotBoundaryPointError(ValueError):
    """Raised when a boundary-only operation is queried off the boundary."""


class AtlasError(ValueError):
    """Raised when no deck map applies and the point is outside the domain."""


def _fd_step(x):
    # central-difference step, goes with O(1)-curvature metrics
    return np.maximum(1e-5, 1e-5 * np.abs(x))


class MetricField:
    """Field of symmetric positive-definite matrices over a chart.

    Parameters
    ----------
    dimension : int
        Chart dimension n >= 2 (1 allowed internally for interval factors).
    matrix_fn : callable
        Maps a chart point (n,) to the metric matrix (n, n).
    derivative_fn : callable, optional
        Maps a chart point to the array d[l, i, j] = d g_ij / d x^l.  When
        absent, central finite differences of ``matrix_fn`` are used.
    """

    def __init__(self, dimension, matrix_fn, derivative_fn=None, name=""):
        self.dimension = int(dimension)
        self._matrix_fn = matrix_fn
        self._derivative_fn = derivative_fn
        self.name = name
        self.provenance = "analytic" if derivative_fn is not None else "finite-difference"

    def matrix(self, x):
        g = np.asarray(self._matrix_fn(np.asarray(x, dtype=float)), dtype=float)
        return 0.5 * (g + g.T)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dimension
        if self._derivative_fn is not None:
            dg = np.asarray(self._derivative_fn(x), dtype=float)
        else:
            dg = np.empty((n, n, n))
            h = _fd_step(x)
            for l in range(n):
                xp = x.copy()
                xm = x.copy()
                xp[l] += h[l]
                xm[l] -= h[l]
                dg[l] = (self.matrix(xp) - self.matrix(xm)) / (2.0 * h[l])
        return 0.5 * (dg + np.swapaxes(dg, 1, 2))


class BoundaryChart:
    """Defining function of the boundary: b > 0 inside, b = 0 on the boundary."""

    def __init__(self, value_fn, gradient_fn, hessian_fn=None, eps=BOUNDARY_EPS):
        self._value_fn = value_fn
        self._gradient_fn = gradient_fn
        self._hessian_fn = hessian_fn
        self.eps = float(eps)

    def value(self, x):
        return float(self._value_fn(np.asarray(x, dtype=float)))

    def gradient(self, x):
        return np.asarray(self._gradient_fn(np.asarray(x, dtype=float)), dtype=float)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self._hessian_fn is not None:
            h = np.asarray(self._hessian_fn(x), dtype=float)
        else:
            n = x.size
            h = np.empty((n, n))
            step = _fd_step(x)
            for l in range(n):
                xp = x.copy()
                xm = x.copy()
                xp[l] += step[l]
                xm[l] -= step[l]
                h[l] = (self.gradient(xp) - self.gradient(xm)) / (2.0 * step[l])
        return 0.5 * (h + h.T)

    def on_boundary(self, x):
        return abs(self.value(x)) <= self.eps


@dataclass
class DeckMap:
    """Isometric face identification of the fundamental domain.

    ``face`` is a signed scalar: positive strictly inside the fundamental
    domain, zero on the face glued by this map.  ``apply`` teleports a point
    that crossed the face back into the domain; ``differential`` transports
    tangent vectors.  Each map is registered together with its inverse.
    """

    name: str
    face: Callable[[np.ndarray], float]
    apply: Callable[[np.ndarray], np.ndarray]
    differential: Callable[[np.ndarray], np.ndarray]
    inverse: Optional["DeckMap"] = None

    def face_value(self, x):
        return float(self.face(np.asarray(x, dtype=float)))

    def apply_point(self, x):
        return np.asarray(self.apply(np.asarray(x, dtype=float)), dtype=float)

    def apply_vector(self, x, v):
        d = np.asarray(self.differential(np.asarray(x, dtype=float)), dtype=float)
        return d @ np.asarray(v, dtype=float)


def link_inverses(a: DeckMap, b: DeckMap):
    a.inverse = b
    b.inverse = a
    return a, b


@dataclass
class BoundaryPatch:
    """Parametrized piece of the boundary: [0,1)^param_dim -> chart points.

    ``periodic`` flags, per parameter axis, whether u and u+1 map to the
    same boundary point (possibly through a deck identification); None means
    every axis wraps.
    """

    name: str
    param_dim: int
    sample: Callable[[np.ndarray], np.ndarray]  # (m, param_dim) -> (m, n)
    periodic: Optional[tuple] = None

    def points(self, params):
        params = np.atleast_2d(np.asarray(params, dtype=float))
        return np.asarray(self.sample(params), dtype=float)

    def axis_periodic(self):
        return self.periodic if self.periodic is not None else (True,) * self.param_dim


@dataclass
class ManifoldSpec:
    """Computational stand-in for a compact Riemannian manifold with boundary."""

    name: str
    metric: MetricField
    boundary: BoundaryChart
    domain: np.ndarray  # (n, 2) chart box
    deck_maps: list[DeckMap] = field(default_factory=list)
    boundary_patches: list[BoundaryPatch] = field(default_factory=list)
    scale_hint: float = 1.0
    annotations: dict = field(default_factory=dict)
    chart_notes: str = ""

    @property
    def dimension(self):
        return self.metric.dimension

    def in_domain(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        lo = self.domain[:, 0] - margin
        hi = self.domain[:, 1] + margin
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def require_in_domain(self, x):
        if not self.in_domain(x):
            raise ChartDomainError(f"chart violation: {np.asarray(x)} outside {self.name!r} domain")

    def deck_images(self, x, depth=2):
        """Point together with its images under up to ``depth`` deck applications."""
        x = np.asarray(x, dtype=float)
        images = [x]
        frontier = [x]
        for _ in range(depth):
            new = []
            for y in frontier:
                for d in self.deck_maps:
                    z = d.apply_point(y)
                    if all(np.linalg.norm(z - w) > 1e-13 for w in images):
                        images.append(z)
                        new.append(z)
            frontier = new
            if not frontier:
                break
        return images

    def chart_distance(self, x, y):
        """Chart distance modulo deck identifications."""
        y = np.asarray(y, dtype=float)
        return min(float(np.linalg.norm(img - y)) for img in self.deck_images(x))


# ---------------------------------------------------------------------------
# metric algebra helpers

def metric_inner(g_matrix, u, w):
    return float(np.asarray(u) @ g_matrix @ np.asarray(w))


def metric_norm(g_matrix, u):
    return float(np.sqrt(max(metric_inner(g_matrix, u, u), 0.0)))


def gram_schmidt(g_matrix, vectors):
    """g-orthonormalize the rows of ``vectors`` (discarding dependent ones)."""
    out = []
    for v in np.atleast_2d(np.asarray(vectors, dtype=float)):
        w = v.copy()
        for e in out:
            w -= metric_inner(g_matrix, w, e) * e
        nw = metric_norm(g_matrix, w)
        if nw > 1e-12:
            out.append(w / nw)
    return np.array(out)


# ---------------------------------------------------------------------------
# core differential-geometry operations

def christoffel_raw(metric: MetricField, x):
    """Christoffel symbols Gamma[k, i, j] without domain validation."""
    g = metric.matrix(x)
    dg = metric.derivative(x)  # dg[l, i, j] = d_l g_ij
    n = metric.dimension
    # A[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij, symmetric in (i, j)
    A = dg.transpose(2, 0, 1) + dg.transpose(2, 1, 0) - dg
    try:
        gamma = 0.5 * np.linalg.solve(g, A.reshape(n, n * n)).reshape(n, n, n)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError(f"degenerate metric at {np.asarray(x)}") from exc
    return gamma


def christoffel(spec: ManifoldSpec, x):
    """Christoffel symbols of the Levi-Civita connection at a chart point."""
    x = np.asarray(x, dtype=float)
    spec.require_in_domain(x)
    if spec.boundary.value(x) < -spec.boundary.eps:
        raise ChartDomainError(f"chart violation: {x} lies outside the manifold (b < 0)")
    return christoffel_raw(spec.metric, x)


def curvature_operator_raw(metric: MetricField, x, v):
    """Matrix of w -> R(v, w)v in chart coordinates, sign convention
    R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y]."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = metric.dimension
    gamma = christoffel_raw(metric, x)
    dgamma = np.empty((n, n, n, n))  # dgamma[l] = d_l Gamma
    h = _fd_step(x)
    for l in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[l] += h[l]
        xm[l] -= h[l]
        dgamma[l] = (christoffel_raw(metric, xp) - christoffel_raw(metric, xm)) / (2.0 * h[l])
    # R^k_{l i j} = d_i Gamma^k_{j l} - d_j Gamma^k_{i l}
    #              + Gamma^k_{i m} Gamma^m_{j l} - Gamma^k_{j m} Gamma^m_{i l}
    # operator entries M[k, j] = R^k_{l i j} v^i v^l
    termA = np.einsum("i,ikjl,l->kj", v, dgamma, v)
    termB = np.einsum("jkil,i,l->kj", dgamma, v, v)
    P = np.einsum("kim,i->km", gamma, v)
    Q = np.einsum("mjl,l->mj", gamma, v)
    r = np.einsum("mil,i,l->m", gamma, v, v)
    termD = np.einsum("kjm,m->kj", gamma, r)
    return termA - termB + P @ Q - termD


def curvature_operator(spec: ManifoldSpec, x, v):
    """Curvature operator along a unit vector v (the tidal operator of v)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    spec.require_in_domain(x)
    g = spec.metric.matrix(x)
    speed = metric_inner(g, v, v)
    if abs(speed - 1.0) > 1e-8:
        raise ValueError(f"curvature_operator expects a unit vector, got g(v,v)={speed}")
    return curvature_operator_raw(spec.metric, x, v)


def gradient_vector(spec: ManifoldSpec, x):
    """Metric gradient of the boundary defining function."""
    g = spec.metric.matrix(x)
    db = spec.boundary.gradient(x)
    return np.linalg.solve(g, db)


def inward_unit_normal(spec: ManifoldSpec, p):
    """Unit inward-pointing normal at a boundary point."""
    p = np.asarray(p, dtype=float)
    g = spec.metric.matrix(p)
    grad = gradient_vector(spec, p)
    nrm = metric_norm(g, grad)
    if nrm <= 1e-12:
        raise ValueError(f"boundary gradient vanishes at {p} (not a regular value)")
    return grad / nrm


def second_fundamental_form(spec: ManifoldSpec, p):
    """Second fundamental form of the boundary w.r.t. the inward normal.

    Returns an (n, n) symmetric matrix S meant to be contracted with vectors
    tangent to the boundary: S(u, w) = u^T S w.  Sign convention: the boundary
    circle of a flat disk of radius L has S(u, u) = +1/L for unit tangent u.
    """
    p = np.asarray(p, dtype=float)
    if not spec.boundary.on_boundary(p):
        raise NotBoundaryPointError(f"not a boundary point: {p} (b={spec.boundary.value(p)})")
    g = spec.metric.matrix(p)
    db = spec.boundary.gradient(p)
    hess = spec.boundary.hessian(p)
    gamma = christoffel_raw(spec.metric, p)
    # covariant Hessian of b, then normalized by |grad b|_g
    cov_hess = hess - np.einsum("kij,k->ij", gamma, db)
    grad = np.linalg.solve(g, db)
    nrm = metric_norm(g, grad)
    return -cov_hess / nrm


def boundary_tangent_basis(spec: ManifoldSpec, p):
    """g-orthonormal basis of the boundary tangent space at p, rows (n-1, n)."""
    p = np.asarray(p, dtype=float)
    g = spec.metric.matrix(p)
    nu = inward_unit_normal(spec, p)
    n = spec.dimension
    candidates = np.eye(n)
    # drop the chart direction most aligned with the normal, project the rest
    scores = np.abs(g @ nu)
    order = np.argsort(scores)[::-1]
    kept = candidates[order[1:]]
    tang = kept - np.outer(kept @ g @ nu, nu)
    basis = gram_schmidt(g, tang)
    if basis.shape[0] != n - 1:
        raise ValueError(f"failed to build boundary tangent basis at {p}")
    return basis


def shape_operator_matrix(spec: ManifoldSpec, p, basis=None):
    """Second fundamental form in a boundary tangent basis ((n-1) x (n-1))."""
    if basis is None:
        basis = boundary_tangent_basis(spec, p)
    S = second_fundamental_form(spec, p)
    return basis @ S @ basis.T


def normalize_into_domain(spec: ManifoldSpec, x, v=None, max_steps=None):
    """Apply deck maps until the point lies in the fundamental domain.

    The tangent vector, when given, is transported by the deck differentials.
    """
    x = np.asarray(x, dtype=float).copy()
    v = None if v is None else np.asarray(v, dtype=float).copy()
    if max_steps is None:
        max_steps = 4 * max(len(spec.deck_maps), 1) + 4
    for _ in range(max_steps):
        offending = None
        for d in spec.deck_maps:
            if d.face_value(x) < -1e-13:
                offending = d
                break
        if offending is None:
            break
        if v is not None:
            v = offending.apply_vector(x, v)
        x = offending.apply_point(x)
    else:
        raise AtlasError(f"left atlas: {x} cannot be normalized into {spec.name!r}")
    if not spec.in_domain(x, margin=1e-9):
        if not spec.deck_maps:
            raise AtlasError(f"left atlas: {x} outside domain of {spec.name!r}")
    return (x, v) if v is not None else (x, None)


def deck_isometry_residual(spec: ManifoldSpec, deck: DeckMap, x):
    """|| dpsi^T g(psi(x)) dpsi - g(x) || for the isometry invariant."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(deck.differential(x), dtype=float)
    g_here = spec.metric.matrix(x)
    g_there = spec.metric.matrix(deck.apply_point(x))
    return float(np.linalg.norm(d.T @ g_there @ d - g_here))
