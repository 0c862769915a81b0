"""Certification of the boundary-return property and its structure checks.

``certify`` aggregates a launch sweep into a verdict (certified, refuted or
inconclusive) and, on request, verifies the global structure: boundary
component count, index agreement between the two Morse index computations,
soul geometry, fiber structure of the midpoint projection, metric splitting
along the geodesic flow, and the symmetry of equidistant slices.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .engine import (
    LaunchSet,
    SweepResult,
    first_return_map,
    sample_boundary,
)
from .geometry import ManifoldSpec, boundary_tangent_basis, metric_inner, metric_norm
from .jacobi import (
    arrival_degeneracy_form,
    assemble_index_form,
    focal_instants,
    integrate_jacobi_frame,
    morse_index_focal,
    morse_index_quadratic,
)

ALL_ANALYSES = ("certify", "jacobi", "soul", "fibers", "splitting", "slices")


@dataclass
class Tolerances:
    """Numerical thresholds used by the certification pipeline."""

    length_rel: float = 1e-8          # relative spread of return times
    orthogonality: float = 1e-7       # max tangential arrival component
    rtol: float = 1e-10               # integrator relative tolerance
    atol: float = 1e-12
    refute_factor: float = 10.0       # failures beyond this multiple refute
    grazing: float = 1e-6
    neg_eig: float = 1e-6
    cluster_radius_rel: float = 1e-4  # midpoint clustering, relative to L
    pca_rel: float = 0.2
    pca_floor_rel: float = 1e-4       # absolute PCA floor, relative to L
    link_factor: float = 3.0          # boundary graph linking, x median NN
    partner_rel: float = 1e-5         # involution partner match, relative to L
    passage_rel: float = 1e-4         # geodesic-passes-through-point threshold

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}


# ---------------------------------------------------------------------------
# deck-aware point-cloud helpers

def _deck_images(spec, x):
    return [np.asarray(im, dtype=float) for im in spec.deck_images(x)]


def _pairwise_distance(spec, pts):
    m = len(pts)
    D = np.zeros((m, m))
    image_sets = [np.array(_deck_images(spec, p)) for p in pts]
    for i in range(m):
        diffs = image_sets[i][:, None, :] - np.asarray(pts)[None, :, :]
        D[i] = np.min(np.linalg.norm(diffs, axis=2), axis=0)
    return np.minimum(D, D.T)


def _nearest_image(spec, x, center):
    imgs = _deck_images(spec, x)
    dists = [np.linalg.norm(im - center) for im in imgs]
    return imgs[int(np.argmin(dists))]


def _hausdorff(spec, A, B):
    DA = np.array([[min(np.linalg.norm(im - b) for im in _deck_images(spec, a)) for b in B]
                   for a in A])
    return max(float(DA.min(axis=1).max()), float(DA.min(axis=0).max()))


def _cluster_points(spec, pts, radius):
    """Union-find clustering of a point cloud at the given linking radius."""
    m = len(pts)
    D = _pairwise_distance(spec, pts)
    adj = csr_matrix(D <= radius)
    _, labels = connected_components(adj, directed=False)
    return labels


# ---------------------------------------------------------------------------
# boundary components

@dataclass
class BoundaryComponents:
    labels: np.ndarray
    count: int
    sizes: list[int]
    link_distance: float
    pairing_ok: bool
    pairing: dict
    diagnostics: list[str] = field(default_factory=list)


def boundary_components(spec: ManifoldSpec, launch_set: LaunchSet,
                        arrivals=None, link_factor=3.0):
    """Partition boundary samples into connected components.

    Samples are linked when within chart distance h_link (a multiple of the
    median nearest-neighbor spacing); in addition, samples from the same
    boundary patch are linked a priori, since a patch is a connected
    parametrized piece by construction (point linking alone fragments
    anisotropic launch grids).
    """
    pts = launch_set.points
    D = _pairwise_distance(spec, pts)
    m = len(pts)
    nn = np.array([np.min(D[i][np.arange(m) != i]) for i in range(m)])
    h_link = link_factor * float(np.median(nn))
    adj = (D <= h_link)
    same_patch = launch_set.patch_ids[:, None] == launch_set.patch_ids[None, :]
    adj = csr_matrix(adj | same_patch)
    count, labels = connected_components(adj, directed=False)
    sizes = [int(np.sum(labels == c)) for c in range(count)]

    diagnostics = []
    if count > 2:
        diagnostics.append("contradiction with the two-component bound "
                           f"({count} classes found)")

    pairing = {}
    pairing_ok = True
    if arrivals is not None:
        for c in range(count):
            targets = set()
            for i in np.flatnonzero(labels == c):
                q = arrivals[i]
                if q is None:
                    continue
                d_to = [min(np.linalg.norm(im - p) for im in _deck_images(spec, q))
                        for p in pts]
                targets.add(int(labels[int(np.argmin(d_to))]))
            if len(targets) > 1:
                pairing_ok = False
            pairing[c] = sorted(targets)
    return BoundaryComponents(labels, int(count), sizes, h_link, pairing_ok,
                              pairing, diagnostics)


def intercomponent_distance(spec: ManifoldSpec, launch_set: LaunchSet,
                            labels, n_gauss=32):
    """Shortest g-length of straight chart segments joining the two components.

    On the built-in two-component examples the minimizing free boundary
    geodesics are straight chart segments, so the minimum over sampled pairs
    measures the distance between the components independently of shooting.
    """
    pts = launch_set.points
    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
    best = np.inf
    for i in idx0:
        for j in idx1:
            for b in _deck_images(spec, pts[j]):
                a = pts[i]
                seg = b - a
                if not spec.in_domain(a + 0.5 * seg, margin=1e-9):
                    continue
                length = 0.0
                for z, w in zip(nodes, weights):
                    x = a + 0.5 * (z + 1.0) * seg
                    g = spec.metric.matrix(x)
                    length += 0.5 * w * metric_norm(g, seg)
                best = min(best, length)
    return float(best)


# ---------------------------------------------------------------------------
# soul reconstruction

@dataclass
class SoulCloud:
    points: np.ndarray            # cluster representatives
    midpoints: np.ndarray         # raw per-launch midpoints
    singular_values: list         # per-point local PCA spectra
    local_dims: list[int]
    dimension_estimate: int
    diameter: float
    distance_residual: float      # worst | dist-to-boundary - L | over spot checks
    k_neighbors: int


def _local_pca(coords, rel, floor):
    centered = coords - coords.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s.size == 0 or s[0] < floor:
        return 0, s
    return int(np.sum(s > rel * s[0])), s


def build_soul(spec: ManifoldSpec, sweep: SweepResult, tol: Tolerances,
               k_neighbors=12, n_distance_checks=8):
    """Midpoint cloud with a local-PCA dimension estimate."""
    recs = sweep.ok_records
    if not recs:
        raise ValueError("undersampled soul")
    L = float(np.mean([r.return_time for r in recs]) / 2.0)
    mids = np.array([r.path.position_at(r.return_time / 2.0) for r in recs])
    labels = _cluster_points(spec, mids, tol.cluster_radius_rel * L)
    reps = np.array([mids[labels == c].mean(axis=0) for c in range(labels.max() + 1)])

    spectra = []
    if len(reps) == 1:
        local_dims = [0]
        d_hat = 0
        diameter = float(np.max(np.linalg.norm(mids - reps[0], axis=1))) if len(mids) else 0.0
    else:
        if len(reps) < k_neighbors + 1:
            raise ValueError(
                f"undersampled soul: {len(reps)} distinct midpoints < k+1 = {k_neighbors + 1}")
        D = _pairwise_distance(spec, reps)
        floor = tol.pca_floor_rel * L
        local_dims = []
        for i, p in enumerate(reps):
            order = np.argsort(D[i])
            neigh = [i] + [int(j) for j in order if j != i][:k_neighbors]
            coords = np.array([_nearest_image(spec, reps[j], p) for j in neigh])
            dim, s = _local_pca(coords, tol.pca_rel, floor)
            local_dims.append(dim)
            spectra.append(s)
        d_hat = int(round(float(np.median(local_dims))))
        diameter = float(D.max())

    residual = 0.0
    spot = np.linspace(0, len(recs) - 1, min(n_distance_checks, len(recs))).astype(int)
    for i in spot:
        r = recs[i]
        x = r.path.position_at(r.return_time / 2.0)
        d_est = nearest_boundary_distance(spec, sweep, x, tol)
        if d_est is not None:
            residual = max(residual, abs(d_est - L))
    return SoulCloud(reps, mids, spectra, local_dims, d_hat, diameter, residual,
                     k_neighbors)


def nearest_boundary_distance(spec: ManifoldSpec, sweep: SweepResult, x,
                              tol: Tolerances):
    """Distance from x to the boundary, estimated along the swept geodesics.

    Every point of a certified manifold lies on boundary-orthogonal geodesics
    and the minimizers to the boundary are among them, so the estimate is the
    smallest arc-length parameter at which any swept geodesic passes through x.
    """
    recs = sweep.ok_records
    if not recs:
        return None
    L = float(np.mean([r.return_time for r in recs]) / 2.0)
    pass_tol = tol.passage_rel * L
    best = None
    images = _deck_images(spec, x)
    for r in recs:
        path = r.path
        coarse = np.inf
        t_coarse = None
        img_best = None
        for img in images:
            d = np.linalg.norm(path.points - img, axis=1)
            j = int(np.argmin(d))
            if d[j] < coarse:
                coarse = d[j]
                t_coarse = path.times[j]
                img_best = img
        if coarse > 20.0 * pass_tol and coarse > 0.05 * L:
            continue
        lo = max(0.0, t_coarse - 0.1 * L)
        hi = min(r.return_time, t_coarse + 0.1 * L)
        res = minimize_scalar(
            lambda t: float(np.linalg.norm(path.position_at(t) - img_best)),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * L})
        if res.fun < pass_tol:
            t_star = float(res.x)
            cand = min(t_star, r.return_time - t_star)
            best = cand if best is None else min(best, cand)
    return best


def min_geodesic_separation(spec: ManifoldSpec, sweep: SweepResult, stride=4):
    """Smallest chart distance between dense samples of distinct geodesics.

    Strictly positive separation witnesses that the swept geodesics are
    pairwise disjoint (expected exactly when the index is zero).
    """
    recs = sweep.ok_records
    clouds = [r.path.points[::stride] for r in recs]
    transforms = [lambda P: P]
    for deck in spec.deck_maps:
        transforms.append(lambda P, _d=deck: np.array([_d.apply_point(x) for x in P]))
    best = np.inf
    for i in range(len(clouds)):
        for j in range(i + 1, len(clouds)):
            A = clouds[i]
            for tf in transforms:
                B = tf(clouds[j])
                d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2).min()
                best = min(best, float(d))
    return best


def soul_dimension_check(cloud: SoulCloud, dimension, index):
    """Soul dimension must equal (manifold dimension - 1 - index)."""
    expected = dimension - 1 - index
    passed = cloud.dimension_estimate == expected
    return {
        "passed": bool(passed),
        "estimated": int(cloud.dimension_estimate),
        "expected": int(expected),
        "dimension": int(dimension),
        "index": int(index),
    }


# ---------------------------------------------------------------------------
# fiber structure of the midpoint projection

@dataclass
class FiberSummary:
    kind: str                     # "two-fold-cover" or "sphere-bundle"
    cluster_sizes: list[int]
    partner_residual: Optional[float]
    nontrivial: Optional[bool]
    loop_transport_used: bool
    fiber_dimension: Optional[int]
    cluster_count: int
    diagnostics: list[str] = field(default_factory=list)


def fiber_analysis(spec: ManifoldSpec, sweep: SweepResult, index,
                   tol: Tolerances, components: Optional[BoundaryComponents] = None):
    """Cluster launches by midpoint and test the structure of the fibers."""
    recs = sweep.ok_records
    L = float(np.mean([r.return_time for r in recs]) / 2.0)
    mids = np.array([r.path.position_at(r.return_time / 2.0) for r in recs])
    labels = _cluster_points(spec, mids, tol.cluster_radius_rel * L)
    n_clusters = labels.max() + 1
    sizes = [int(np.sum(labels == c)) for c in range(n_clusters)]
    diagnostics = []

    if index == 0:
        bad = [s for s in sizes if s != 2]
        if bad:
            diagnostics.append(f"cluster sizes {sorted(set(bad))} differ from 2 with index 0")
        partner_residual = 0.0
        for c in range(n_clusters):
            members = np.flatnonzero(labels == c)
            if len(members) != 2:
                continue
            i, j = members
            d_ij = min(np.linalg.norm(im - recs[j].launch)
                       for im in _deck_images(spec, recs[i].arrival))
            d_ji = min(np.linalg.norm(im - recs[i].launch)
                       for im in _deck_images(spec, recs[j].arrival))
            partner_residual = max(partner_residual, d_ij, d_ji)
        nontrivial, used_walk = _covering_nontrivial(spec, sweep, labels, components)
        return FiberSummary("two-fold-cover", sizes, partner_residual, nontrivial,
                            used_walk, None, int(n_clusters), diagnostics)

    # index > 0: per-cluster dimension from tangent-projected local PCA
    dims = []
    floor = tol.pca_floor_rel * L
    for c in range(n_clusters):
        members = np.flatnonzero(labels == c)
        if len(members) < index + 2:
            diagnostics.append(f"cluster {c} too small ({len(members)}) to estimate dimension")
            continue
        pts = np.array([recs[i].launch for i in members])
        kf = min(max(index + 2, len(members) // 8), 12, len(members) - 1)
        D = _pairwise_distance(spec, pts)
        cluster_dims = []
        for a, p in enumerate(pts):
            order = np.argsort(D[a])
            neigh = [a] + [int(b) for b in order if b != a][:kf]
            basis = boundary_tangent_basis(spec, p)
            g = spec.metric.matrix(p)
            coords = np.array([
                basis @ g @ (_nearest_image(spec, pts[b], p) - p) for b in neigh])
            cluster_dims.append(_local_pca(coords, tol.pca_rel, floor)[0])
        dims.append(int(round(float(np.median(cluster_dims)))))
    fiber_dim = int(round(float(np.median(dims)))) if dims else None
    return FiberSummary("sphere-bundle", sizes, None, None, False, fiber_dim,
                        int(n_clusters), diagnostics)


def _covering_nontrivial(spec, sweep, labels, components):
    """Walk boundary loops and watch when the midpoint cluster first recurs.

    Revisiting the starting cluster strictly before the loop closes witnesses
    a sheet exchange (nontrivial two-fold cover); falls back to the component
    count criterion when the boundary is not one-parameter walkable.
    """
    recs = sweep.ok_records
    patch_ids = np.array([sweep.launch_set.patch_ids[r.index] for r in recs])
    params = [sweep.launch_set.params[r.index] for r in recs]
    if not all(len(p) == 1 for p in params):
        if components is None:
            return None, False
        return components.count == 1, False

    comp_labels = (components.labels if components is not None
                   else np.zeros(len(recs), dtype=int))
    for comp in sorted(set(int(comp_labels[r.index]) for r in recs)):
        member_idx = [i for i, r in enumerate(recs) if comp_labels[r.index] == comp]
        if len(member_idx) < 3:
            continue
        member_idx.sort(key=lambda i: (patch_ids[i], float(params[i][0])))
        seq = [labels[i] for i in member_idx]
        if any(seq[step] == seq[0] for step in range(1, len(seq))):
            return True, True
    return False, True


# ---------------------------------------------------------------------------
# metric splitting along the geodesic flow

@dataclass
class SplittingResult:
    max_unit_residual: float
    max_cross_residual: float
    t_values: list[float]
    n_launches: int


def _structured_sweep(spec: ManifoldSpec, n_side, tol: Tolerances):
    """Launch grids with known neighbor structure, per boundary patch."""
    sweeps = []
    for pid, patch in enumerate(spec.boundary_patches):
        d = patch.param_dim
        if d == 0:
            continue
        shape = (n_side,) * d
        axes = [(np.arange(s) + 0.5) / s for s in shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        params = np.stack([a.ravel() for a in mesh], axis=1)
        pts = patch.points(params)
        ls = LaunchSet(pts, np.full(len(pts), pid), [u.copy() for u in params],
                       "uniform", len(pts))
        sweep = first_return_map(spec, ls, rtol=tol.rtol, atol=tol.atol)
        sweeps.append((patch, shape, sweep))
    return sweeps


def splitting_residual(spec: ManifoldSpec, n_side=16, t_fracs=None,
                       tol: Optional[Tolerances] = None):
    """Orthogonality residuals of the geodesic foliation chart.

    Along each swept geodesic, the flow direction must stay g-unit and
    g-orthogonal to the finite-difference variation across neighboring
    launches; residuals are taken over a parameter grid bounded away from
    the midpoint by 5 percent of the half-length.
    """
    tol = tol or Tolerances()
    if t_fracs is None:
        t_fracs = [0.05, 0.2, 0.4, 0.6, 0.8, 0.95]
    sweeps = _structured_sweep(spec, n_side, tol)
    unit_res = 0.0
    cross_res = 0.0
    t_used = []
    n_launch = 0
    for patch, shape, sweep in sweeps:
        recs = sweep.ok_records
        if len(recs) != int(np.prod(shape)):
            raise RuntimeError(f"splitting sweep failed on {spec.name!r}")
        n_launch += len(recs)
        L = float(np.mean([r.return_time for r in recs]) / 2.0)
        periodic = getattr(patch, "periodic", None) or (True,) * patch.param_dim
        grid = np.array([r.index for r in recs]).reshape(shape)
        # map flattened index -> record
        rec_of = {r.index: r for r in recs}
        for t_frac in t_fracs:
            t = t_frac * L
            t_used.append(t)
            it = np.ndindex(*shape)
            for idx in it:
                r = rec_of[int(grid[idx])]
                x = r.path.position_at(t)
                v = r.path.velocity_at(t)
                g = spec.metric.matrix(x)
                unit_res = max(unit_res, abs(metric_inner(g, v, v) - 1.0))
                for axis in range(len(shape)):
                    ip = list(idx)
                    im = list(idx)
                    ip[axis] += 1
                    im[axis] -= 1
                    if periodic[axis]:
                        ip[axis] %= shape[axis]
                        im[axis] %= shape[axis]
                    elif ip[axis] >= shape[axis] or im[axis] < 0:
                        continue
                    rp = rec_of[int(grid[tuple(ip)])]
                    rm = rec_of[int(grid[tuple(im)])]
                    yp = _nearest_image(spec, rp.path.position_at(t), x)
                    ym = _nearest_image(spec, rm.path.position_at(t), x)
                    dvec = 0.5 * (yp - ym)
                    norm = metric_norm(g, dvec)
                    if norm < 1e-14:
                        continue
                    cross_res = max(cross_res, abs(metric_inner(g, v, dvec)) / norm)
    return SplittingResult(unit_res, cross_res, sorted(set(t_used)), n_launch)


def slice_circumference(spec: ManifoldSpec, t, n_side=64, tol: Optional[Tolerances] = None,
                        patch_index=0):
    """Length of the image of one boundary component at flow parameter t."""
    tol = tol or Tolerances()
    patch = spec.boundary_patches[patch_index]
    if patch.param_dim != 1:
        raise ValueError("slice circumference needs a one-parameter boundary patch")
    params = ((np.arange(n_side) + 0.5) / n_side).reshape(-1, 1)
    pts = patch.points(params)
    ls = LaunchSet(pts, np.zeros(len(pts), dtype=int), [u.copy() for u in params],
                   "uniform", len(pts))
    sweep = first_return_map(spec, ls, rtol=tol.rtol, atol=tol.atol)
    recs = sweep.ok_records
    du = 1.0 / n_side
    total = 0.0
    for i, r in enumerate(recs):
        x = r.path.position_at(t)
        rp = recs[(i + 1) % n_side]
        rm = recs[(i - 1) % n_side]
        yp = _nearest_image(spec, rp.path.position_at(t), x)
        ym = _nearest_image(spec, rm.path.position_at(t), x)
        dvec = (yp - ym) / (2.0 * du)
        total += metric_norm(spec.metric.matrix(x), dvec) * du
    return float(total)


# ---------------------------------------------------------------------------
# slice symmetry and distances

@dataclass
class SliceCheck:
    t: float
    hausdorff: float
    max_distance_residual: float
    passed: bool


def slice_distance_check(spec: ManifoldSpec, sweep: SweepResult, t,
                         tol: Optional[Tolerances] = None,
                         hausdorff_rel=1e-6, distance_rel=1e-5):
    """Verify the forward and mirrored slices coincide and sit at distance t."""
    tol = tol or Tolerances()
    recs = sweep.ok_records
    L = float(np.mean([r.return_time for r in recs]) / 2.0)
    if not (0.0 < t <= L + 1e-12):
        raise ValueError("slice parameter must lie in (0, L]")
    A = np.array([r.path.position_at(t) for r in recs])
    B = np.array([r.path.position_at(r.return_time - t) for r in recs])
    hausdorff = _hausdorff(spec, A, B)

    worst = 0.0
    for i in np.linspace(0, len(recs) - 1, min(6, len(recs))).astype(int):
        d_est = nearest_boundary_distance(spec, sweep, A[i], tol)
        if d_est is not None:
            worst = max(worst, abs(d_est - t))
    passed = hausdorff <= hausdorff_rel * L and worst <= distance_rel * L
    return SliceCheck(float(t), float(hausdorff), float(worst), bool(passed))


# ---------------------------------------------------------------------------
# certification report

@dataclass
class ZollReport:
    name: str
    verdict: str
    reason: str
    n_launches: int
    seed: int
    strategy: str
    half_length: Optional[float]
    length_mean: Optional[float]
    length_spread_rel: Optional[float]
    orthogonality_max: Optional[float]
    grazing_count: int
    component_count: Optional[int]
    component_sizes: Optional[list]
    component_pairing_ok: Optional[bool]
    intercomponent_distance: Optional[float]
    index_focal: Optional[int]
    index_quadratic: Optional[int]
    index_agreement: Optional[bool]
    nullity_estimate: Optional[int]
    endpoint_focal_warnings: int
    arrival_form_norm: Optional[float]
    focal_midpoint_residual: Optional[float]
    focal_multiplicities: Optional[list]
    soul: Optional[dict]
    fibers: Optional[dict]
    splitting: Optional[dict]
    slices: Optional[list]
    ground_truth: Optional[dict]
    diagnostics: list
    tolerances: dict

    def to_dict(self):
        return {
            "name": self.name,
            "verdict": self.verdict,
            "reason": self.reason,
            "n_launches": self.n_launches,
            "seed": self.seed,
            "strategy": self.strategy,
            "half_length": self.half_length,
            "length_mean": self.length_mean,
            "length_spread_rel": self.length_spread_rel,
            "orthogonality_max": self.orthogonality_max,
            "grazing_count": self.grazing_count,
            "component_count": self.component_count,
            "component_sizes": self.component_sizes,
            "component_pairing_ok": self.component_pairing_ok,
            "intercomponent_distance": self.intercomponent_distance,
            "index_focal": self.index_focal,
            "index_quadratic": self.index_quadratic,
            "index_agreement": self.index_agreement,
            "nullity_estimate": self.nullity_estimate,
            "endpoint_focal_warnings": self.endpoint_focal_warnings,
            "arrival_form_norm": self.arrival_form_norm,
            "focal_midpoint_residual": self.focal_midpoint_residual,
            "focal_multiplicities": self.focal_multiplicities,
            "soul": self.soul,
            "fibers": self.fibers,
            "splitting": self.splitting,
            "slices": self.slices,
            "ground_truth": self.ground_truth,
            "diagnostics": self.diagnostics,
            "tolerances": self.tolerances,
        }


def certify(spec: ManifoldSpec, n_launches=64, tolerances: Optional[Tolerances] = None,
            seed=0, strategy="uniform", analyses=("certify",), mesh_size=256,
            n_index_spots=6, sweep: Optional[SweepResult] = None) -> ZollReport:
    """Run the certification sweep and the requested structure analyses."""
    if n_launches < 32:
        raise ValueError("N below certification minimum (need at least 32 launches)")
    tol = tolerances or Tolerances()
    if "all" in analyses:
        analyses = ALL_ANALYSES
    analyses = set(analyses)

    if sweep is None:
        launch_set = sample_boundary(spec, n_launches, strategy=strategy, seed=seed)
        sweep = first_return_map(spec, launch_set, rtol=tol.rtol, atol=tol.atol)
    else:
        launch_set = sweep.launch_set

    diagnostics: list[str] = []
    recs = sweep.ok_records
    grazing_count = int(sum(r.grazing for r in sweep.records))

    verdict = "certified"
    reason = ""
    L = length_mean = spread_rel = orth_max = None
    if sweep.errors:
        verdict = "refuted"
        reason = f"{len(sweep.errors)} launches without boundary return"
    if recs:
        rt = sweep.return_times
        length_mean = float(rt.mean())
        spread_rel = float((rt.max() - rt.min()) / length_mean)
        orth_max = float(max(r.normal_deviation for r in recs))
        L = length_mean / 2.0
        if verdict != "refuted":
            ratios = [spread_rel / tol.length_rel, orth_max / tol.orthogonality]
            if grazing_count:
                verdict = "refuted"
                reason = "tangential approach to the boundary"
            elif max(ratios) <= 1.0:
                verdict = "certified"
            elif max(ratios) > tol.refute_factor:
                verdict = "refuted"
                reason = ("length spread" if ratios[0] >= ratios[1]
                          else "non-orthogonal arrival") + " beyond 10x tolerance"
            else:
                verdict = "inconclusive"
                reason = "violations within 10x tolerance band"
    elif not sweep.errors:
        verdict = "refuted"
        reason = "no usable launches"

    comps = comp_sizes = pairing_ok = None
    inter_dist = None
    comp_result = None
    if recs:
        arrivals = [r.arrival for r in sweep.records]
        comp_result = boundary_components(spec, launch_set, arrivals,
                                          link_factor=tol.link_factor)
        comps = comp_result.count
        comp_sizes = comp_result.sizes
        pairing_ok = comp_result.pairing_ok
        diagnostics.extend(comp_result.diagnostics)
        if verdict == "certified" and comps > 2:
            diagnostics.append("certified verdict with more than two boundary components")
        if comps == 2:
            inter_dist = intercomponent_distance(spec, launch_set, comp_result.labels)

    index_focal_val = index_quad_val = agreement = nullity = None
    endpoint_warnings = 0
    arrival_norm = None
    focal_resid = None
    focal_mults = None
    if "jacobi" in analyses and recs and verdict != "refuted":
        spots = np.linspace(0, len(recs) - 1, min(n_index_spots, len(recs))).astype(int)
        focal_indices = []
        focal_resid = 0.0
        focal_mults = []
        arrival_norm = 0.0
        frames = {}
        for i in spots:
            r = recs[int(i)]
            frame = integrate_jacobi_frame(spec, r.path, rtol=tol.rtol, atol=tol.atol)
            frames[int(i)] = frame
            record = focal_instants(frame)
            focal_indices.append(morse_index_focal(record))
            endpoint_warnings += len(record.endpoint_instants)
            for inst in record.instants:
                focal_resid = max(focal_resid, abs(inst.time - r.return_time / 2.0))
                focal_mults.append(inst.multiplicity)
            A = arrival_degeneracy_form(spec, frame)
            arrival_norm = max(arrival_norm, float(np.linalg.norm(A)))
        if len(set(focal_indices)) > 1:
            diagnostics.append(f"focal index differs across launches: {sorted(set(focal_indices))}")
        index_focal_val = int(focal_indices[0]) if focal_indices else None

        quad_vals = []
        nullities = []
        for i in list(spots)[:3]:
            r = recs[int(i)]
            mat = assemble_index_form(spec, r.path, mesh_size, frame=frames[int(i)])
            kq, nq = morse_index_quadratic(mat, neg_tol=tol.neg_eig)
            quad_vals.append(kq)
            nullities.append(nq)
        if quad_vals:
            index_quad_val = int(quad_vals[0])
            nullity = int(min(nullities))
            if len(set(quad_vals)) > 1:
                diagnostics.append(f"quadratic index differs across launches: {sorted(set(quad_vals))}")
        agreement = (index_focal_val == index_quad_val
                     if index_focal_val is not None and index_quad_val is not None else None)

    soul_doc = None
    soul_cloud = None
    if "soul" in analyses and recs and verdict != "refuted":
        try:
            soul_cloud = build_soul(spec, sweep, tol)
            soul_doc = {
                "count": int(len(soul_cloud.points)),
                "dimension": int(soul_cloud.dimension_estimate),
                "diameter": float(soul_cloud.diameter),
                "distance_residual": float(soul_cloud.distance_residual),
            }
            if index_focal_val is not None:
                check = soul_dimension_check(soul_cloud, spec.dimension, index_focal_val)
                soul_doc["dimension_check"] = check
                if not check["passed"]:
                    diagnostics.append("soul dimension mismatch: "
                                       f"estimated {check['estimated']}, expected {check['expected']}")
        except ValueError as exc:
            soul_doc = {"error": str(exc)}
            diagnostics.append(str(exc))

    fiber_doc = None
    if "fibers" in analyses and recs and verdict != "refuted" and index_focal_val is not None:
        fib = fiber_analysis(spec, sweep, index_focal_val, tol, comp_result)
        fiber_doc = {
            "kind": fib.kind,
            "cluster_count": fib.cluster_count,
            "cluster_sizes_minmax": [int(min(fib.cluster_sizes)), int(max(fib.cluster_sizes))],
            "partner_residual": fib.partner_residual,
            "nontrivial_cover": fib.nontrivial,
            "loop_transport_used": fib.loop_transport_used,
            "fiber_dimension": fib.fiber_dimension,
        }
        diagnostics.extend(fib.diagnostics)

    splitting_doc = None
    if "splitting" in analyses and recs and verdict != "refuted":
        n_side = 16 if spec.dimension <= 2 else 8
        split = splitting_residual(spec, n_side=n_side, tol=tol)
        splitting_doc = {
            "max_unit_residual": float(split.max_unit_residual),
            "max_cross_residual": float(split.max_cross_residual),
            "n_launches": int(split.n_launches),
        }

    slices_doc = None
    # the slice at t and its mirror at 2L - t coincide as clouds because the
    # launch set covers every boundary component
    if "slices" in analyses and recs and verdict != "refuted" and L is not None:
        slices_doc = []
        for frac in (0.25, 0.5, 0.75):
            check = slice_distance_check(spec, sweep, frac * L, tol)
            slices_doc.append({
                "t_over_L": frac,
                "hausdorff": check.hausdorff,
                "max_distance_residual": check.max_distance_residual,
                "passed": check.passed,
            })

    ground_truth = None
    ann = spec.annotations
    if ann:
        ground_truth = {"expected_zoll": bool(ann.get("zoll", True))}
        checks = {}
        if verdict in ("certified", "refuted"):
            checks["verdict"] = (verdict == "certified") == bool(ann.get("zoll", True))
        if ann.get("zoll", True):
            if L is not None and ann.get("half_length") is not None:
                checks["half_length"] = bool(abs(L - ann["half_length"])
                                             <= 1e-6 * max(1.0, ann["half_length"]))
            if index_focal_val is not None and ann.get("index") is not None:
                checks["index"] = index_focal_val == ann["index"]
            if comps is not None and ann.get("components") is not None:
                checks["components"] = comps == ann["components"]
            if (soul_doc and "dimension" in soul_doc
                    and ann.get("soul_dim") is not None):
                checks["soul_dim"] = soul_doc["dimension"] == ann["soul_dim"]
        ground_truth["checks"] = checks
        ground_truth["all_match"] = all(checks.values()) if checks else True

    return ZollReport(
        name=spec.name,
        verdict=verdict,
        reason=reason,
        n_launches=len(sweep.records),
        seed=int(seed),
        strategy=strategy,
        half_length=L,
        length_mean=length_mean,
        length_spread_rel=spread_rel,
        orthogonality_max=orth_max,
        grazing_count=grazing_count,
        component_count=comps,
        component_sizes=comp_sizes,
        component_pairing_ok=pairing_ok,
        intercomponent_distance=inter_dist,
        index_focal=index_focal_val,
        index_quadratic=index_quad_val,
        index_agreement=agreement,
        nullity_estimate=nullity,
        endpoint_focal_warnings=endpoint_warnings,
        arrival_form_norm=arrival_norm,
        focal_midpoint_residual=focal_resid,
        focal_multiplicities=focal_mults,
        soul=soul_doc,
        fibers=fiber_doc,
        splitting=splitting_doc,
        slices=slices_doc,
        ground_truth=ground_truth,
        diagnostics=diagnostics,
        tolerances=tol.to_dict(),
    )
