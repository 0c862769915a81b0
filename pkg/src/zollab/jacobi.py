"""Free-boundary Jacobi fields, focal instants, and the Morse index.

The index of a free boundary geodesic is computed two independent ways:
counting focal instants with multiplicity along the geodesic, and counting
negative eigenvalues of a finite-element discretization of the second
variation of energy.  Everything is carried in a parallel-transported
orthonormal frame along the geodesic, where the Jacobi equation becomes a
linear second-order system with symmetric coefficient matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy.optimize import brentq, minimize_scalar

from .engine import GeodesicPath, integrate_flow, project_to_boundary
from .geometry import (
    ManifoldSpec,
    boundary_tangent_basis,
    christoffel_raw,
    curvature_operator_raw,
    gram_schmidt,
    inward_unit_normal,
    metric_inner,
    second_fundamental_form,
)

RANK_DROP_TOL = 1e-7
ISOLATION_WINDOW = 1e-4
ENDPOINT_WINDOW = 1e-6
NEG_EIG_TOL = 1e-6


class DegenerateFamilyError(RuntimeError):
    """Raised when the Jacobi frame loses rank over a whole interval."""


class MaximalDegeneracyError(RuntimeError):
    """Raised when the boundary-parallel Jacobi space is too small."""


def curvature_frame_matrix(metric, x, v, E):
    """Tidal operator in a g-orthonormal frame: K[a,b] = g(R(v,E_b)v, E_a)."""
    g = metric.matrix(x)
    M = curvature_operator_raw(metric, x, v)
    K = E.T @ g @ M @ E
    return 0.5 * (K + K.T)


@dataclass
class JacobiFrame:
    """Fundamental Jacobi solutions along a geodesic, in a parallel frame.

    Columns 0..n-2 start tangent to the boundary with the shape-operator
    initial slope; the last column is the solution t * gamma'(t).  The frame
    matrix E has the geodesic velocity as column 0.
    """

    path: GeodesicPath
    times: np.ndarray
    flow: object
    shape_launch: np.ndarray    # (n-1, n-1) in the launch tangent frame
    frame0: np.ndarray          # (n, n) initial frame, columns = vectors

    @property
    def spec(self):
        return self.path.spec

    @property
    def dimension(self):
        return self.path.spec.dimension

    @property
    def return_time(self):
        return self.path.return_time

    def blocks_at(self, t):
        n = self.dimension
        y = self.flow.state_at(t)
        x = y[:n]
        v = y[n:2 * n]
        E = y[2 * n:2 * n + n * n].reshape(n, n)
        Y = y[2 * n + n * n:2 * n + 2 * n * n].reshape(n, n)
        Yp = y[2 * n + 2 * n * n:].reshape(n, n)
        return x, v, E, Y, Yp

    def jacobi_block(self, t):
        return self.blocks_at(t)[3]

    def wronskian_drift(self, n_check=64):
        """Max drift of Y'^T Y - Y^T Y' (zero for exact Jacobi frames)."""
        worst = 0.0
        for t in np.linspace(0.0, self.return_time, n_check):
            _, _, _, Y, Yp = self.blocks_at(t)
            W = Yp.T @ Y - Y.T @ Yp
            worst = max(worst, float(np.abs(W).max()))
        return worst


def _padded_shape_matrix(shape_sub, n):
    S = np.zeros((n, n))
    S[1:, 1:] = shape_sub
    return S


def integrate_jacobi_frame(spec: ManifoldSpec, path: GeodesicPath,
                           rtol=None, atol=None) -> JacobiFrame:
    """Integrate the parallel frame and the fundamental Jacobi solutions."""
    if not path.returned:
        raise ValueError("Jacobi frame needs a returned geodesic")
    n = spec.dimension
    metric = spec.metric
    p = path.launch_point
    v0 = path.launch_velocity
    R = path.return_time
    rtol = 1e-10 if rtol is None else rtol
    atol = 1e-12 if atol is None else atol

    tangent = boundary_tangent_basis(spec, p)          # rows (n-1, n)
    E0 = np.column_stack([v0] + [tangent[i] for i in range(n - 1)])
    shape_sub = tangent @ second_fundamental_form(spec, p) @ tangent.T
    S0 = _padded_shape_matrix(shape_sub, n)

    Y0 = np.zeros((n, n))
    Yp0 = np.zeros((n, n))
    for a in range(n - 1):
        Y0[a + 1, a] = 1.0
        Yp0[:, a] = -S0[:, a + 1]
    Yp0[0, n - 1] = 1.0

    y0 = np.concatenate([p, v0, E0.ravel(), Y0.ravel(), Yp0.ravel()])

    def rhs(t, y):
        x = y[:n]
        v = y[n:2 * n]
        E = y[2 * n:2 * n + n * n].reshape(n, n)
        Y = y[2 * n + n * n:2 * n + 2 * n * n].reshape(n, n)
        Yp = y[2 * n + 2 * n * n:].reshape(n, n)
        gamma = christoffel_raw(metric, x)
        acc = -np.einsum("kij,i,j->k", gamma, v, v)
        dE = -np.einsum("kij,i,ja->ka", gamma, v, E)
        K = curvature_frame_matrix(metric, x, v, E)
        return np.concatenate([v, acc, dE.ravel(), Yp.ravel(), (K @ Y).ravel()])

    flow = integrate_flow(
        spec, rhs, y0, R,
        vector_blocks=[(n, n, 1), (2 * n, n, n)],
        detect_boundary=False, rtol=rtol, atol=atol)
    return JacobiFrame(path, flow.times, flow, shape_sub, E0)


# ---------------------------------------------------------------------------
# focal instants

@dataclass
class FocalInstant:
    time: float
    multiplicity: int
    singular_values: np.ndarray


@dataclass
class FocalRecord:
    return_time: float
    instants: list[FocalInstant] = field(default_factory=list)
    endpoint_instants: list[FocalInstant] = field(default_factory=list)

    @property
    def times(self):
        return [f.time for f in self.instants]


def _scaled_block(frame: JacobiFrame, t):
    """J-block with the t*gamma' column rescaled by 1/t (rank unchanged)."""
    Y = frame.jacobi_block(t)
    Y = Y.copy()
    scale = max(abs(t), 1e-12 * frame.return_time)
    Y[:, -1] /= scale
    return Y


def focal_instants(frame: JacobiFrame, n_scan=512, rank_tol=RANK_DROP_TOL) -> FocalRecord:
    """Locate parameters where the Jacobi evaluation map loses rank."""
    R = frame.return_time
    n = frame.dimension
    ts = np.linspace(1e-6 * R, R, n_scan)
    dets = np.empty(n_scan)
    smin = np.empty(n_scan)
    smax = np.empty(n_scan)
    for i, t in enumerate(ts):
        Y = _scaled_block(frame, t)
        s = np.linalg.svd(Y, compute_uv=False)
        dets[i] = np.linalg.det(Y)
        smin[i] = s[-1]
        smax[i] = s[0]

    # sustained rank loss violates isolation of focal instants
    below = smin < rank_tol * np.maximum(smax, 1e-300)
    run = 0
    for flag in below:
        run = run + 1 if flag else 0
        if run * (ts[1] - ts[0]) > 1e-2 * R:
            raise DegenerateFamilyError("degenerate family (violates isolation)")

    candidates = []
    for i in range(n_scan - 1):
        if dets[i] == 0.0 or np.sign(dets[i]) != np.sign(dets[i + 1]):
            candidates.append((max(i - 1, 0), min(i + 1, n_scan - 1), "det"))
    gate = 0.05
    for i in range(1, n_scan - 1):
        if smin[i] <= smin[i - 1] and smin[i] <= smin[i + 1] and smin[i] < gate * smax[i]:
            candidates.append((i - 1, i + 1, "min"))

    refined = []
    for lo, hi, kind in candidates:
        a, b = ts[lo], ts[hi]
        t_star = None
        if kind == "det" and np.sign(dets[lo]) != np.sign(dets[hi]) and dets[lo] != 0.0:
            try:
                t_star = brentq(lambda t: np.linalg.det(_scaled_block(frame, t)), a, b,
                                xtol=1e-13 * R, maxiter=200)
            except (RuntimeError, ValueError):
                t_star = None  # flat high-multiplicity zero; fall through
        if t_star is None:
            res = minimize_scalar(
                lambda t: np.linalg.svd(_scaled_block(frame, t), compute_uv=False)[-1] ** 2,
                bounds=(a, b), method="bounded",
                options={"xatol": 1e-13 * R})
            t_star = float(res.x)
        s = np.linalg.svd(_scaled_block(frame, t_star), compute_uv=False)
        if s[-1] < rank_tol * s[0]:
            refined.append((t_star, s))

    refined.sort(key=lambda item: item[0])
    merged = []
    for t_star, s in refined:
        if merged and abs(t_star - merged[-1][0]) < ISOLATION_WINDOW * R:
            if s[-1] < merged[-1][1][-1]:
                merged[-1] = (t_star, s)
            continue
        merged.append((t_star, s))

    record = FocalRecord(return_time=R)
    for t_star, s in merged:
        mult = int(np.sum(s < rank_tol * s[0]))
        inst = FocalInstant(float(t_star), mult, s)
        if abs(t_star - R) <= ENDPOINT_WINDOW * R:
            record.endpoint_instants.append(inst)
        else:
            record.instants.append(inst)
    return record


def morse_index_focal(record: FocalRecord, return_time=None):
    """Morse index as the number of interior focal instants with multiplicity."""
    if return_time is not None and abs(return_time - record.return_time) > 1e-9 * record.return_time:
        raise ValueError("return_time disagrees with the focal record")
    return int(sum(f.multiplicity for f in record.instants))


# ---------------------------------------------------------------------------
# discretized index form

@dataclass
class IndexFormMatrix:
    stiffness: np.ndarray
    mass: np.ndarray
    mesh_size: int
    dimension: int
    return_time: float
    boundary_block_launch: np.ndarray
    boundary_block_arrival: np.ndarray


def assemble_index_form(spec: ManifoldSpec, path: GeodesicPath, mesh_size=256,
                        frame: Optional[JacobiFrame] = None) -> IndexFormMatrix:
    """Piecewise-linear discretization of the second variation of energy.

    The geodesic is parametrized on [0, 1]; basis fields live in the parallel
    frame with endpoint values constrained tangent to the boundary, and the
    shape-operator terms of both endpoints enter with the sign that makes a
    flat-disk diameter have exactly one negative direction.
    """
    if mesh_size < 16:
        raise ValueError("mesh_size must be at least 16")
    if frame is None:
        frame = integrate_jacobi_frame(spec, path)
    n = spec.dimension
    N = int(mesh_size)
    R = path.return_time
    h = 1.0 / N
    dof = n * (N + 1)

    S = np.zeros((dof, dof))
    M = np.zeros((dof, dof))
    eye = np.eye(n)

    gauss_nodes = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    gauss_w = np.array([0.5, 0.5])

    for e in range(N):
        i0, i1 = e * n, (e + 1) * n
        # gradient term int phi' phi' dt
        S[i0:i0 + n, i0:i0 + n] += eye / h
        S[i1:i1 + n, i1:i1 + n] += eye / h
        S[i0:i0 + n, i1:i1 + n] += -eye / h
        S[i1:i1 + n, i0:i0 + n] += -eye / h
        # consistent mass int phi phi dt
        M[i0:i0 + n, i0:i0 + n] += eye * (h / 3.0)
        M[i1:i1 + n, i1:i1 + n] += eye * (h / 3.0)
        M[i0:i0 + n, i1:i1 + n] += eye * (h / 6.0)
        M[i1:i1 + n, i0:i0 + n] += eye * (h / 6.0)
        # curvature term int phi_A phi_B Khat dt, 2-point Gauss
        for xi, w in zip(gauss_nodes, gauss_w):
            t_param = (e + xi) * h
            x, v, E, _, _ = frame.blocks_at(t_param * R)
            K = curvature_frame_matrix(spec.metric, x, v, E) * (R * R)
            n1, n2 = 1.0 - xi, xi
            wh = w * h
            S[i0:i0 + n, i0:i0 + n] += wh * n1 * n1 * K
            S[i1:i1 + n, i1:i1 + n] += wh * n2 * n2 * K
            S[i0:i0 + n, i1:i1 + n] += wh * n1 * n2 * K
            S[i1:i1 + n, i0:i0 + n] += wh * n1 * n2 * K

    # shape-operator boundary terms (launch and arrival both contribute -R*S)
    B0 = -R * _padded_shape_matrix(frame.shape_launch, n)
    q = project_to_boundary(spec, frame.blocks_at(R)[0])
    basis_q = _arrival_tangent_frame(spec, frame, q)
    shape_q = basis_q @ second_fundamental_form(spec, q) @ basis_q.T
    B1 = -R * _padded_shape_matrix(shape_q, n)
    S[:n, :n] += B0
    S[-n:, -n:] += B1

    # endpoint values constrained tangent to the boundary: drop the two
    # velocity-direction endpoint degrees of freedom
    keep = np.ones(dof, dtype=bool)
    keep[0] = False
    keep[n * N] = False
    S = S[np.ix_(keep, keep)]
    M = M[np.ix_(keep, keep)]
    S = 0.5 * (S + S.T)
    M = 0.5 * (M + M.T)
    return IndexFormMatrix(S, M, N, n, R, B0, B1)


def _arrival_tangent_frame(spec, frame, q):
    """Frame columns 1.. at arrival, projected tangent and re-orthonormalized."""
    n = spec.dimension
    _, _, E, _, _ = frame.blocks_at(frame.return_time)
    g = spec.metric.matrix(q)
    nu = inward_unit_normal(spec, q)
    rows = []
    for a in range(1, n):
        u = E[:, a] - metric_inner(g, E[:, a], nu) * nu
        rows.append(u)
    return gram_schmidt(g, np.array(rows))


def morse_index_quadratic(mat: IndexFormMatrix, neg_tol=NEG_EIG_TOL):
    """Index and nullity estimate of the discretized form (mass-normalized)."""
    try:
        eigs = sla.eigh(mat.stiffness, mat.mass, eigvals_only=True)
    except sla.LinAlgError as exc:
        raise RuntimeError("indefinite assembly error") from exc
    k = int(np.sum(eigs < -neg_tol))
    nullity = int(np.sum(np.abs(eigs) <= neg_tol))
    return k, nullity


def index_form_spectrum(mat: IndexFormMatrix, n_lowest=8):
    eigs = sla.eigh(mat.stiffness, mat.mass, eigvals_only=True)
    return np.sort(eigs)[:n_lowest]


# ---------------------------------------------------------------------------
# degeneracy form at the arrival endpoint

def arrival_degeneracy_form(spec: ManifoldSpec, frame: JacobiFrame, return_time=None,
                            strict=True):
    """Bilinear form measuring failure of the arrival boundary condition.

    Restricted to Jacobi solutions whose value at the return time is tangent
    to the boundary; it vanishes identically when every such solution also
    satisfies the arrival slope condition (maximal degeneracy).
    """
    R = frame.return_time if return_time is None else float(return_time)
    n = frame.dimension
    x, v, E, Y, Yp = frame.blocks_at(R)
    q = project_to_boundary(spec, x)
    g = spec.metric.matrix(q)
    nu = inward_unit_normal(spec, q)
    S_full = second_fundamental_form(spec, q)

    # coefficient combinations alpha with g(J_alpha(R), nu) = 0
    c = np.array([metric_inner(g, E[:, a], nu) for a in range(n)])
    row = c @ Y
    norm_row = np.linalg.norm(row)
    if norm_row < 1e-8 * max(np.linalg.norm(Y), 1.0):
        if strict:
            raise MaximalDegeneracyError("contradiction with maximal degeneracy")
        basis = np.eye(n)
    else:
        _, _, vt = np.linalg.svd(row.reshape(1, -1))
        basis = vt[1:].T          # (n, n-1) null-space basis

    dim_par = basis.shape[1]
    A = np.zeros((dim_par, dim_par))
    J = E @ (Y @ basis)           # chart values at R, columns
    Jp = E @ (Yp @ basis)
    for i in range(dim_par):
        Ji = J[:, i] - metric_inner(g, J[:, i], nu) * nu
        for j in range(dim_par):
            Jj = J[:, j] - metric_inner(g, J[:, j], nu) * nu
            # arrival velocity is the outward normal: S_{gamma'(R)} = -S_nu
            A[i, j] = -float(Ji @ S_full @ Jj) + metric_inner(g, Jp[:, i], J[:, j])
    return A
