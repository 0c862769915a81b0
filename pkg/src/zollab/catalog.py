"""Built-in manifold constructors with closed-form charts and ground truth.

Each example documents its chart and carries annotations (half-length,
index, boundary components, soul dimension) used by the verification
harness as ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import (
    BoundaryChart,
    BoundaryPatch,
    DeckMap,
    ManifoldSpec,
    MetricField,
    link_inverses,
)

DECK_ISO_TOL = 1e-10


class ExampleParameterError(ValueError):
    """Raised for parameters outside an example's validity range."""


# ---------------------------------------------------------------------------
# metric and boundary building blocks

def euclidean_metric(n):
    eye = np.eye(n)
    zeros = np.zeros((n, n, n))
    return MetricField(n, lambda x: eye, lambda x: zeros, name="euclidean")


def stereographic_sphere_metric(n):
    """Round unit sphere S^n in the stereographic chart: g = (2/(1+|u|^2))^2 I."""
    eye = np.eye(n)

    def matrix(x):
        lam = 2.0 / (1.0 + float(x @ x))
        return lam * lam * eye

    def derivative(x):
        lam = 2.0 / (1.0 + float(x @ x))
        dg = np.zeros((n, n, n))
        for l in range(n):
            dg[l] = (-2.0 * lam ** 3 * x[l]) * eye
        return dg

    return MetricField(n, matrix, derivative, name="stereographic-sphere")


def latitude_band_metric():
    """Unit S^2 in (latitude, longitude): g = d(lat)^2 + cos^2(lat) d(lon)^2."""

    def matrix(x):
        return np.diag([1.0, np.cos(x[0]) ** 2])

    def derivative(x):
        dg = np.zeros((2, 2, 2))
        dg[0, 1, 1] = -np.sin(2.0 * x[0])
        return dg

    return MetricField(2, matrix, derivative, name="latitude-band")


def ball_boundary(n, radius):
    r = float(radius)
    return BoundaryChart(
        lambda x: (r * r - float(x @ x)) / (2.0 * r),
        lambda x: -np.asarray(x, dtype=float) / r,
        lambda x: -np.eye(n) / r,
    )


def slab_boundary(n, axis, length):
    """b = t (length - t) / length along one chart axis, zero at t in {0, length}."""
    L = float(length)

    def value(x):
        t = x[axis]
        return t * (L - t) / L

    def gradient(x):
        g = np.zeros(n)
        g[axis] = 1.0 - 2.0 * x[axis] / L
        return g

    def hessian(x):
        h = np.zeros((n, n))
        h[axis, axis] = -2.0 / L
        return h

    return BoundaryChart(value, gradient, hessian)


def symmetric_slab_boundary(n, axis, half_width):
    """b = (w^2 - x^2) / (2w) along one axis, zero at x = +-w."""
    w = float(half_width)

    def value(x):
        return (w * w - x[axis] ** 2) / (2.0 * w)

    def gradient(x):
        g = np.zeros(n)
        g[axis] = -x[axis] / w
        return g

    def hessian(x):
        h = np.zeros((n, n))
        h[axis, axis] = -1.0 / w
        return h

    return BoundaryChart(value, gradient, hessian)


def translation_decks(n, axis, period, name):
    """Identify chart faces x[axis]=0 and x[axis]=period by translation."""
    e = np.zeros(n)
    e[axis] = period
    eye = np.eye(n)
    hi = DeckMap(f"{name}+", lambda x, _a=axis, _p=period: _p - x[_a],
                 lambda x, _e=e: np.asarray(x, dtype=float) - _e,
                 lambda x, _i=eye: _i)
    lo = DeckMap(f"{name}-", lambda x, _a=axis: float(x[_a]),
                 lambda x, _e=e: np.asarray(x, dtype=float) + _e,
                 lambda x, _i=eye: _i)
    return list(link_inverses(hi, lo))


def flip_translation_decks(n, axis, period, flip_axis, name):
    """Identify x[axis]=0 with x[axis]=period while negating x[flip_axis]."""
    e = np.zeros(n)
    e[axis] = period
    d = np.eye(n)
    d[flip_axis, flip_axis] = -1.0

    def fwd(x, _e=e, _f=flip_axis):
        y = np.asarray(x, dtype=float).copy()
        y[_f] = -y[_f]
        return y - _e

    def bwd(x, _e=e, _f=flip_axis):
        y = np.asarray(x, dtype=float).copy()
        y[_f] = -y[_f]
        return y + _e

    hi = DeckMap(f"{name}+", lambda x, _a=axis, _p=period: _p - x[_a], fwd,
                 lambda x, _d=d: _d)
    lo = DeckMap(f"{name}-", lambda x, _a=axis: float(x[_a]), bwd,
                 lambda x, _d=d: _d)
    return list(link_inverses(hi, lo))


def sphere_points(u, dim, radius):
    """Map parameters in [0,1)^(dim-1) to points of the (dim-1)-sphere.

    Hyperspherical angle parametrization (polar angles pi*u, azimuth 2*pi*u);
    parameter lines are great circles, which keeps finite differences across
    neighboring launches exactly orthogonal to radial directions.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    m = u.shape[0]
    if dim == 1:
        return np.full((m, 1), radius)
    if dim == 2:
        th = 2.0 * np.pi * u[:, 0]
        return radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    # angles ordered azimuth-last so axis 0 is the periodic one in dim 3
    polar = np.pi * u[:, 1: dim - 1]
    phi = 2.0 * np.pi * u[:, 0]
    pts = np.empty((m, dim))
    sin_prod = np.ones(m)
    for i in range(dim - 2):
        pts[:, dim - 1 - i] = sin_prod * np.cos(polar[:, dim - 3 - i])
        sin_prod = sin_prod * np.sin(polar[:, dim - 3 - i])
    pts[:, 0] = sin_prod * np.cos(phi)
    pts[:, 1] = sin_prod * np.sin(phi)
    return radius * pts


def sphere_patch_periodic(dim):
    if dim <= 1:
        return ()
    return (True,) + (False,) * (dim - 2)


# ---------------------------------------------------------------------------
# catalog constructors

def flat_disk(radius=1.0):
    if radius <= 0:
        raise ExampleParameterError("parameter violates example validity: radius must be > 0")
    return euclidean_ball(2, radius, name=f"flat_disk(L={radius:g})")


def euclidean_ball(n, radius=1.0, name=None):
    n = int(n)
    if n < 1 or radius <= 0:
        raise ExampleParameterError("parameter violates example validity: need n >= 1, radius > 0")
    r = float(radius)
    if n == 1:
        patches = [
            BoundaryPatch("right", 0, lambda u, _r=r: np.full((max(len(np.atleast_2d(u)), 1), 1), _r), ()),
            BoundaryPatch("left", 0, lambda u, _r=r: np.full((max(len(np.atleast_2d(u)), 1), 1), -_r), ()),
        ]
    else:
        patches = [BoundaryPatch("sphere", n - 1,
                                 lambda u, _n=n, _r=r: sphere_points(u, _n, _r),
                                 sphere_patch_periodic(n))]
    return ManifoldSpec(
        name=name or f"euclidean_ball(n={n},L={r:g})",
        metric=euclidean_metric(n),
        boundary=ball_boundary(n, r),
        domain=np.array([[-2.0 * r, 2.0 * r]] * n),
        deck_maps=[],
        boundary_patches=patches,
        scale_hint=2.0 * r,
        annotations={"zoll": True, "half_length": r, "index": n - 1,
                     "components": 1 if n >= 2 else 2,
                     "soul_dim": 0 if n >= 2 else None, "dimension": n},
        chart_notes="Cartesian chart; b = (L^2 - |x|^2)/(2L).",
    )


def flat_band(half_length=1.0, circumference=2.0 * np.pi):
    if half_length <= 0 or circumference <= 0:
        raise ExampleParameterError("parameter violates example validity: positive sizes required")
    L, C = float(half_length), float(circumference)
    patches = [
        BoundaryPatch("bottom", 1, lambda u, _c=C: np.stack(
            [np.zeros(len(np.atleast_2d(u))), _c * np.atleast_2d(u)[:, 0]], axis=1), (True,)),
        BoundaryPatch("top", 1, lambda u, _c=C, _l=L: np.stack(
            [np.full(len(np.atleast_2d(u)), 2.0 * _l), _c * np.atleast_2d(u)[:, 0]], axis=1), (True,)),
    ]
    return ManifoldSpec(
        name=f"flat_band(L={L:g},C={C:g})",
        metric=euclidean_metric(2),
        boundary=slab_boundary(2, 0, 2.0 * L),
        domain=np.array([[-L, 3.0 * L], [-0.3 * C, 1.3 * C]]),
        deck_maps=translation_decks(2, 1, C, "wrap"),
        boundary_patches=patches,
        scale_hint=2.0 * L,
        annotations={"zoll": True, "half_length": L, "index": 0,
                     "components": 2, "soul_dim": None, "dimension": 2},
        chart_notes="Flat chart (t, s), t across the band, s periodic with period C.",
    )


def flat_moebius(width=1.0, twist_length=3.0):
    if width <= 0 or twist_length <= 0:
        raise ExampleParameterError("parameter violates example validity: positive sizes required")
    w, c = float(width), float(twist_length)

    def rim(u, _w=w, _c=c):
        u = np.atleast_2d(u)[:, 0]
        ell = 2.0 * _c * u
        x = np.where(ell < _c, _w, -_w)
        t = np.where(ell < _c, ell, ell - _c)
        return np.stack([x, t], axis=1)

    return ManifoldSpec(
        name=f"flat_moebius(w={w:g},c={c:g})",
        metric=euclidean_metric(2),
        boundary=symmetric_slab_boundary(2, 0, w),
        domain=np.array([[-1.5 * w, 1.5 * w], [-0.3 * c, 1.3 * c]]),
        deck_maps=flip_translation_decks(2, 1, c, 0, "twist"),
        boundary_patches=[BoundaryPatch("rim", 1, rim, (True,))],
        scale_hint=2.0 * w,
        annotations={"zoll": True, "half_length": w, "index": 0,
                     "components": 1, "soul_dim": 1, "dimension": 2},
        chart_notes="Flat chart (x, t), x in [-w, w], t glued with a flip after period c.",
    )


def spherical_cap(radius=np.pi / 6.0, dim=2):
    L = float(radius)
    n = int(dim)
    if not (0.0 < L < np.pi / 2.0):
        raise ExampleParameterError("parameter violates example validity: need 0 < L < pi/2")
    if n < 2:
        raise ExampleParameterError("parameter violates example validity: need dim >= 2")
    rc = np.tan(L / 2.0)
    return ManifoldSpec(
        name=f"spherical_cap(L={L:g},n={n})",
        metric=stereographic_sphere_metric(n),
        boundary=ball_boundary(n, rc),
        domain=np.array([[-3.0 * rc, 3.0 * rc]] * n),
        deck_maps=[],
        boundary_patches=[BoundaryPatch("rim", n - 1,
                                        lambda u, _n=n, _r=rc: sphere_points(u, _n, _r),
                                        sphere_patch_periodic(n))],
        scale_hint=2.0 * L,
        annotations={"zoll": True, "half_length": L, "index": n - 1,
                     "components": 1, "soul_dim": 0, "dimension": n},
        chart_notes="Stereographic chart of the unit sphere; cap of geodesic radius L "
                    "is the chart ball of radius tan(L/2).",
    )


def spherical_band(max_latitude=np.pi / 6.0):
    th = float(max_latitude)
    if not (0.0 < th < np.pi / 2.0):
        raise ExampleParameterError("parameter violates example validity: need 0 < theta0 < pi/2")

    def circle(u, lat):
        u = np.atleast_2d(u)[:, 0]
        return np.stack([np.full(len(u), lat), 2.0 * np.pi * u], axis=1)

    lam_box = 0.5 * (th + np.pi / 2.0)
    return ManifoldSpec(
        name=f"spherical_band(theta0={th:g})",
        metric=latitude_band_metric(),
        boundary=symmetric_slab_boundary(2, 0, th),
        domain=np.array([[-lam_box, lam_box], [-2.0, 2.0 * np.pi + 2.0]]),
        deck_maps=translation_decks(2, 1, 2.0 * np.pi, "lon"),
        boundary_patches=[
            BoundaryPatch("south", 1, lambda u, _t=th: circle(u, -_t), (True,)),
            BoundaryPatch("north", 1, lambda u, _t=th: circle(u, _t), (True,)),
        ],
        scale_hint=2.0 * th,
        annotations={"zoll": True, "half_length": th, "index": 0,
                     "components": 2, "soul_dim": None, "dimension": 2},
        chart_notes="(latitude, longitude) chart of the unit sphere, longitude periodic.",
    )


def ellipse(a=2.0, b=1.0):
    if a <= 0 or b <= 0 or abs(a - b) < 1e-12:
        raise ExampleParameterError(
            "parameter violates example validity: need a, b > 0 and a != b (non-Zoll control)")
    a, b = float(a), float(b)

    def value(x):
        return (1.0 - (x[0] / a) ** 2 - (x[1] / b) ** 2) / 2.0

    def gradient(x):
        return np.array([-x[0] / a ** 2, -x[1] / b ** 2])

    def hessian(x):
        return np.diag([-1.0 / a ** 2, -1.0 / b ** 2])

    def rim(u, _a=a, _b=b):
        th = 2.0 * np.pi * np.atleast_2d(u)[:, 0]
        return np.stack([_a * np.cos(th), _b * np.sin(th)], axis=1)

    return ManifoldSpec(
        name=f"ellipse(a={a:g},b={b:g})",
        metric=euclidean_metric(2),
        boundary=BoundaryChart(value, gradient, hessian),
        domain=np.array([[-2.0 * a, 2.0 * a], [-2.0 * b, 2.0 * b]]),
        deck_maps=[],
        boundary_patches=[BoundaryPatch("rim", 1, rim, (True,))],
        scale_hint=2.0 * min(a, b),
        annotations={"zoll": False, "dimension": 2},
        chart_notes="Cartesian chart; flat metric; non-Zoll refutation control.",
    )


# ---------------------------------------------------------------------------
# mapping torus

@dataclass
class Isometry:
    """Point map with differential and registered inverse."""

    name: str
    apply: Callable[[np.ndarray], np.ndarray]
    differential: Callable[[np.ndarray], np.ndarray]
    inverse_apply: Callable[[np.ndarray], np.ndarray]
    inverse_differential: Callable[[np.ndarray], np.ndarray]


def identity_isometry(n):
    eye = np.eye(n)
    ident = lambda x: np.asarray(x, dtype=float)
    const = lambda x: eye
    return Isometry("identity", ident, const, ident, const)


def rotation_isometry(alpha):
    """Rotation of a planar chart about the origin."""
    c, s = np.cos(alpha), np.sin(alpha)
    rot = np.array([[c, -s], [s, c]])
    inv = rot.T
    return Isometry(
        f"rotation({alpha:g})",
        lambda x: rot @ np.asarray(x, dtype=float),
        lambda x: rot,
        lambda x: inv @ np.asarray(x, dtype=float),
        lambda x: inv,
    )


def isometry_residual(base: ManifoldSpec, iso: Isometry, n_samples=40, seed=0):
    """Worst deviation of dphi^T g(phi(x)) dphi from g(x) over sampled points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    pts = []
    for patch in base.boundary_patches:
        d = max(patch.param_dim, 1)
        u = rng.random((max(n_samples // max(len(base.boundary_patches), 1), 4), patch.param_dim))
        pts.extend(patch.points(u if patch.param_dim else np.zeros((1, 0))))
    for x in pts:
        x = np.asarray(x, dtype=float)
        dphi = np.asarray(iso.differential(x), dtype=float)
        gx = base.metric.matrix(x)
        gphi = base.metric.matrix(iso.apply(x))
        worst = max(worst, float(np.linalg.norm(dphi.T @ gphi @ dphi - gx)))
        back = iso.inverse_apply(iso.apply(x))
        worst = max(worst, float(np.linalg.norm(back - x)))
    return worst


def mapping_torus(base: ManifoldSpec, iso: Optional[Isometry] = None, name=None):
    """Quotient of base x R by (x, t) -> (phi(x), t + 1) for an isometry phi.

    The result has one extra periodic chart coordinate, metric g + dt^2, and
    inherits half-length, index and boundary component count from the base.
    """
    n = base.dimension
    if iso is None:
        iso = identity_isometry(n)
    res = isometry_residual(base, iso)
    if res > DECK_ISO_TOL:
        raise ValueError(
            f"mapping torus rejected: {iso.name} is not an isometry of {base.name!r} "
            f"(residual {res:.3e})")
    m = n + 1
    base_metric = base.metric

    def matrix(x, _bm=base_metric, _n=n):
        g = np.eye(_n + 1)
        g[:_n, :_n] = _bm.matrix(x[:_n])
        return g

    def derivative(x, _bm=base_metric, _n=n):
        dg = np.zeros((_n + 1, _n + 1, _n + 1))
        dbase = _bm.derivative(x[:_n])
        dg[:_n, :_n, :_n] = dbase
        return dg

    metric = MetricField(m, matrix, derivative, name=f"{base.metric.name}+dt^2")

    base_boundary = base.boundary
    boundary = BoundaryChart(
        lambda x: base_boundary.value(x[:n]),
        lambda x: np.concatenate([base_boundary.gradient(x[:n]), [0.0]]),
        lambda x: _lift_hessian(base_boundary, x[:n], n),
        eps=base_boundary.eps,
    )

    decks = []
    for d in base.deck_maps:
        decks.append(_lift_deck(d, n))
    linked = {}
    for d, lifted in zip(base.deck_maps, decks):
        linked[d.name] = lifted
    for d, lifted in zip(base.deck_maps, decks):
        if d.inverse is not None and d.inverse.name in linked:
            lifted.inverse = linked[d.inverse.name]

    def tau_hi_apply(x, _iso=iso, _n=n):
        y = np.asarray(x, dtype=float).copy()
        y[:_n] = _iso.inverse_apply(y[:_n])
        y[_n] -= 1.0
        return y

    def tau_lo_apply(x, _iso=iso, _n=n):
        y = np.asarray(x, dtype=float).copy()
        y[:_n] = _iso.apply(y[:_n])
        y[_n] += 1.0
        return y

    def tau_hi_diff(x, _iso=iso, _n=n):
        d = np.eye(_n + 1)
        d[:_n, :_n] = _iso.inverse_differential(np.asarray(x, dtype=float)[:_n])
        return d

    def tau_lo_diff(x, _iso=iso, _n=n):
        d = np.eye(_n + 1)
        d[:_n, :_n] = _iso.differential(np.asarray(x, dtype=float)[:_n])
        return d

    hi = DeckMap("torus+", lambda x, _n=n: 1.0 - x[_n], tau_hi_apply, tau_hi_diff)
    lo = DeckMap("torus-", lambda x, _n=n: float(x[_n]), tau_lo_apply, tau_lo_diff)
    decks.extend(link_inverses(hi, lo))

    # crossing the tau seam composes with the gluing isometry, so the tau
    # parameter axis is walkable as periodic only for the identity twist
    tau_periodic = iso.name == "identity"
    patches = [
        BoundaryPatch(
            f"{p.name}*S1", p.param_dim + 1,
            lambda u, _p=p: np.column_stack([_p.points(np.atleast_2d(u)[:, :_p.param_dim]),
                                             np.atleast_2d(u)[:, _p.param_dim]]),
            p.axis_periodic() + (tau_periodic,))
        for p in base.boundary_patches
    ]

    domain = np.vstack([base.domain, [-0.3, 1.3]])
    ann = dict(base.annotations)
    ann["dimension"] = m
    if ann.get("soul_dim") is not None:
        ann["soul_dim"] = ann["soul_dim"] + 1
    torus_name = name or f"mapping_torus({base.name},{iso.name})"
    return ManifoldSpec(
        name=torus_name,
        metric=metric,
        boundary=boundary,
        domain=domain,
        deck_maps=decks,
        boundary_patches=patches,
        scale_hint=base.scale_hint,
        annotations=ann,
        chart_notes=base.chart_notes + " Extra periodic coordinate tau in [0,1), "
                    "glued through the isometry " + iso.name + ".",
    )


def _lift_hessian(base_boundary, x, n):
    h = np.zeros((n + 1, n + 1))
    h[:n, :n] = base_boundary.hessian(x)
    return h


def _lift_deck(d: DeckMap, n):
    def apply(x, _d=d, _n=n):
        y = np.asarray(x, dtype=float).copy()
        y[:_n] = _d.apply_point(y[:_n])
        return y

    def diff(x, _d=d, _n=n):
        out = np.eye(_n + 1)
        out[:_n, :_n] = np.asarray(_d.differential(np.asarray(x, dtype=float)[:_n]))
        return out

    return DeckMap(d.name, lambda x, _d=d, _n=n: _d.face_value(x[:_n]), apply, diff)


def solid_torus(radius=1.0, rotation=0.0):
    """Mapping torus of a flat disk, optionally twisted by a rotation."""
    base = flat_disk(radius)
    iso = rotation_isometry(rotation) if rotation else identity_isometry(2)
    return mapping_torus(base, iso, name=f"solid_torus(L={radius:g},alpha={rotation:g})")


def index_ladder(n, k, rotation=0.0):
    """An n-dimensional certified example of index k (2 <= n <= 5)."""
    n, k = int(n), int(k)
    if n > 5:
        raise ExampleParameterError("desk-scale cap: index_ladder supports n <= 5")
    if n < 2 or not (0 <= k <= n - 1):
        raise ExampleParameterError("parameter violates example validity: need 2 <= n, 0 <= k <= n-1")
    if k == n - 1:
        return euclidean_ball(n, 1.0)
    if n == 2 and k == 0:
        return flat_moebius(1.0, 3.0)
    base = euclidean_ball(k + 1, 1.0)
    for step in range(n - 1 - k):
        iso = None
        if rotation and base.dimension == 2 and step == 0:
            iso = rotation_isometry(rotation)
        base = mapping_torus(base, iso)
    base.name = f"index_ladder(n={n},k={k})"
    return base


# ---------------------------------------------------------------------------
# registry

CATALOG = {
    "flat_disk": (flat_disk, {"radius": 1.0}),
    "flat_band": (flat_band, {"half_length": 1.0, "circumference": 2.0 * np.pi}),
    "flat_moebius": (flat_moebius, {"width": 1.0, "twist_length": 3.0}),
    "spherical_cap": (spherical_cap, {"radius": np.pi / 6.0, "dim": 2}),
    "spherical_band": (spherical_band, {"max_latitude": np.pi / 6.0}),
    "euclidean_ball": (euclidean_ball, {"n": 3, "radius": 1.0}),
    "ellipse": (ellipse, {"a": 2.0, "b": 1.0}),
    "solid_torus": (solid_torus, {"radius": 1.0, "rotation": 0.0}),
    "index_ladder": (index_ladder, {"n": 3, "k": 1, "rotation": 0.0}),
}


def catalog_names():
    return sorted(CATALOG)


def make_example(name, **params):
    """Instantiate a catalog example by name with keyword parameters."""
    if name not in CATALOG:
        raise KeyError(f"unknown catalog example {name!r}; known: {', '.join(catalog_names())}")
    fn, defaults = CATALOG[name]
    merged = dict(defaults)
    unknown = set(params) - set(defaults)
    if unknown:
        raise ExampleParameterError(
            f"unknown parameters {sorted(unknown)} for {name!r}; schema: {sorted(defaults)}")
    merged.update(params)
    return fn(**merged)


def example_manifest(name, **params):
    """Manifest fragment reproducing a catalog example."""
    fn, defaults = CATALOG[name]
    merged = dict(defaults)
    merged.update(params)
    return {"catalog": name, "params": {k: (float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) and k not in ("n", "k", "dim") else v) for k, v in merged.items()}}
