"""Mixed P2/P1 (Taylor-Hood) finite elements for the penalized and Stokes systems.

The weak form solved is

    mu (grad u, grad v) - (p, div v) = (f, v)
    (div u, q) + eps (p, q)          = (zeta, q)

assembled as one symmetric indefinite sparse system.  At eps = 0 the pressure
is only determined up to a constant, so a zero-mean Lagrange multiplier row is
appended.  The solver is a deterministic direct factorization.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import TriMesh
from .modes import SingularMode
from .spectral import MaterialParams

log = logging.getLogger(__name__)

__all__ = [
    "EmptyMesh",
    "MissingEdgeData",
    "InconsistentEdgeData",
    "SolverBreakdown",
    "SingularSystem",
    "MeshMismatch",
    "P2Space",
    "SparseSystem",
    "MixedField",
    "assemble",
    "apply_dirichlet",
    "solve",
    "solve_psi",
    "norms",
    "diff_norms",
    "error_norms",
    "second_equation_residual",
]


class EmptyMesh(Exception):
    pass


class MissingEdgeData(Exception):
    pass


class InconsistentEdgeData(Exception):
    pass


class SolverBreakdown(Exception):
    pass


class SingularSystem(Exception):
    pass


class MeshMismatch(Exception):
    pass


# Symmetric quadrature rules on the reference triangle (weights sum to 1;
# multiply by element area).  Degree 5: 7 points.  Degree 8: 16 points.
def _sym3(a):
    b = 0.5 * (1.0 - a)
    return [(a, b), (b, a), (b, b)]


def _perm6(a, b, c):
    return [(a, b), (b, a), (a, c), (c, a), (b, c), (c, b)]


_Q5_PTS = np.array(
    [(1.0 / 3.0, 1.0 / 3.0)]
    + _sym3(0.0597158717897698)
    + _sym3(0.7974269853530873))
_Q5_W = np.array(
    [0.225]
    + [0.1323941527885062] * 3
    + [0.1259391805448271] * 3)

_Q8_PTS = np.array(
    [(1.0 / 3.0, 1.0 / 3.0)]
    + _sym3(0.0814148234145538)
    + _sym3(0.6588613844964797)
    + _sym3(0.8989055433659380)
    + _perm6(0.0083947774099576, 0.2631128296346381, 0.7284923929554043))
_Q8_W = np.array(
    [0.1443156076777871]
    + [0.0950916342672846] * 3
    + [0.1032173705347183] * 3
    + [0.0324584976231980] * 3
    + [0.0272303141744350] * 6)


def tri_quadrature(degree: int):
    """Reference-triangle rule (points in barycentric L2, L3; weights sum 1)."""
    if degree <= 5:
        return _Q5_PTS, _Q5_W
    return _Q8_PTS, _Q8_W


def p2_shape(pts):
    """P2 shape functions at reference points; order v1 v2 v3 m12 m23 m31."""
    xi, eta = pts[:, 0], pts[:, 1]
    L1, L2, L3 = 1.0 - xi - eta, xi, eta
    return np.stack([
        L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), L3 * (2 * L3 - 1),
        4 * L1 * L2, 4 * L2 * L3, 4 * L3 * L1], axis=-1)


def p2_shape_grad(pts):
    """Reference gradients, shape (npts, 6, 2)."""
    xi, eta = pts[:, 0], pts[:, 1]
    L1 = 1.0 - xi - eta
    z = np.zeros_like(xi)
    dL = {
        1: (-np.ones_like(xi), -np.ones_like(xi)),
        2: (np.ones_like(xi), z),
        3: (z, np.ones_like(xi)),
    }
    Ls = {1: L1, 2: xi, 3: eta}
    grads = []
    for i in (1, 2, 3):
        gx, gy = dL[i]
        grads.append(((4 * Ls[i] - 1) * gx, (4 * Ls[i] - 1) * gy))
    for i, j in ((1, 2), (2, 3), (3, 1)):
        gxi, gyi = dL[i]
        gxj, gyj = dL[j]
        grads.append((4 * (Ls[i] * gxj + Ls[j] * gxi),
                      4 * (Ls[i] * gyj + Ls[j] * gyi)))
    return np.stack([np.stack(g, axis=-1) for g in grads], axis=1)


def p1_shape(pts):
    xi, eta = pts[:, 0], pts[:, 1]
    return np.stack([1.0 - xi - eta, xi, eta], axis=-1)


class P2Space:
    """Scalar P2 dof numbering: mesh vertices first, then edge midpoints."""

    def __init__(self, mesh: TriMesh):
        if len(mesh.tris) == 0:
            raise EmptyMesh("mesh has no triangles")
        self.mesh = mesh
        edge_index: dict[tuple[int, int], int] = {}
        tri_dofs = np.empty((len(mesh.tris), 6), dtype=int)
        N = mesh.n_nodes
        for m, (a, b, c) in enumerate(mesh.tris):
            tri_dofs[m, :3] = (a, b, c)
            for slot, (u, v) in enumerate(((a, b), (b, c), (c, a))):
                key = (min(u, v), max(u, v))
                if key not in edge_index:
                    edge_index[key] = N + len(edge_index)
                tri_dofs[m, 3 + slot] = edge_index[key]
        self.tri_dofs = tri_dofs
        self.edge_index = edge_index
        self.n_scalar = N + len(edge_index)
        coords = np.empty((self.n_scalar, 2))
        coords[:N] = mesh.nodes
        for (u, v), d in edge_index.items():
            coords[d] = 0.5 * (mesh.nodes[u] + mesh.nodes[v])
        self.dof_coords = coords
        # Geometry caches for assembly and evaluation.
        p = mesh.nodes[mesh.tris]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        self.detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1]
        invJ[:, 0, 1] = -J[:, 0, 1]
        invJ[:, 1, 0] = -J[:, 1, 0]
        invJ[:, 1, 1] = J[:, 0, 0]
        self.invJ = invJ / self.detJ[:, None, None]
        self.tri_origin = p[:, 0]
        self.areas = 0.5 * self.detJ
        # Boundary edge -> (element, scalar dofs of the edge).
        owner: dict[tuple[int, int], int] = {}
        for m, (a, b, c) in enumerate(mesh.tris):
            for u, v in ((a, b), (b, c), (c, a)):
                owner.setdefault((min(u, v), max(u, v)), m)
        self.bedge_tri = np.array(
            [owner[(min(i, j), max(i, j))] for i, j, _ in mesh.bedges], dtype=int)

    def bedge_dofs(self, k: int) -> tuple[int, int, int]:
        i, j, _tag = self.mesh.bedges[k]
        return int(i), int(j), self.edge_index[(min(i, j), max(i, j))]

    def to_reference(self, m: int, pts):
        """Map physical points into reference coordinates of element m."""
        rel = np.asarray(pts, dtype=float) - self.tri_origin[m]
        return rel @ self.invJ[m].T


@dataclass
class SparseSystem:
    """Assembled mixed system before/after Dirichlet elimination."""

    space: P2Space
    material: MaterialParams
    K: sp.csr_matrix
    rhs: np.ndarray
    n_scalar: int
    n_pressure: int
    has_gauge: bool
    constrained: np.ndarray | None = None     # bool mask over all dofs
    values: np.ndarray | None = None          # prescribed values where constrained

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_scalar


@dataclass
class MixedField:
    """P2 velocity + P1 pressure coefficients on one mesh."""

    space: P2Space
    material: MaterialParams
    ux: np.ndarray
    uy: np.ndarray
    p: np.ndarray
    gauge: float = 0.0
    residual: float = 0.0

    @property
    def mesh(self) -> TriMesh:
        return self.space.mesh

    def velocity_dofs(self) -> np.ndarray:
        return np.stack([self.ux, self.uy], axis=-1)

    def grad_at(self, m, ref_pts):
        """Velocity gradient tensors d(u_k)/d(x_l) inside element m."""
        G = p2_shape_grad(np.atleast_2d(ref_pts)) @ self.space.invJ[m]
        dofs = self.space.tri_dofs[m]
        gx = np.einsum("qid,i->qd", G, self.ux[dofs])
        gy = np.einsum("qid,i->qd", G, self.uy[dofs])
        return np.stack([gx, gy], axis=1)

    def velocity_at(self, m, ref_pts):
        N = p2_shape(np.atleast_2d(ref_pts))
        dofs = self.space.tri_dofs[m]
        return np.stack([N @ self.ux[dofs], N @ self.uy[dofs]], axis=-1)

    def pressure_at(self, m, ref_pts):
        L = p1_shape(np.atleast_2d(ref_pts))
        return L @ self.p[self.mesh.tris[m]]

    def minus(self, other: "MixedField") -> "MixedField":
        if other.space is not self.space and not np.array_equal(
                other.mesh.nodes, self.mesh.nodes):
            raise MeshMismatch("fields live on different meshes")
        return MixedField(space=self.space, material=self.material,
                          ux=self.ux - other.ux, uy=self.uy - other.uy,
                          p=self.p - other.p)


def assemble(mesh: TriMesh, material: MaterialParams, f=None, zeta=None,
             space: P2Space | None = None) -> SparseSystem:
    """Taylor-Hood discretization of the mixed weak form.

    f    : callable (x, y) -> (..., 2) volume force, or None for zero
    zeta : callable (x, y) -> (...)    prescribed divergence source, or None
    """
    space = space or P2Space(mesh)
    mu, eps = material.mu, material.eps
    pts, w = tri_quadrature(5)
    Nsh = p2_shape(pts)                       # (q, 6)
    Gref = p2_shape_grad(pts)                 # (q, 6, 2)
    Lsh = p1_shape(pts)                       # (q, 3)
    nel = len(mesh.tris)
    S, Np = space.n_scalar, mesh.n_nodes

    Gphys = np.einsum("qid,mde->mqie", Gref, space.invJ)     # (m, q, 6, 2)
    wdet = w[None, :] * space.areas[:, None]                 # quadrature x area
    # Scalar stiffness mu * grad.grad per element: (m, 6, 6)
    Ke = mu * np.einsum("mq,mqie,mqje->mij", wdet, Gphys, Gphys)
    # Divergence coupling (pressure test k, velocity trial i), per component.
    Bxe = np.einsum("mq,qk,mqi->mki", wdet, Lsh, Gphys[..., 0])
    Bye = np.einsum("mq,qk,mqi->mki", wdet, Lsh, Gphys[..., 1])
    Me = np.einsum("mq,qk,ql->mkl", wdet, Lsh, Lsh)

    vd = space.tri_dofs                                      # (m, 6)
    pd = mesh.tris                                           # (m, 3)
    rows, cols, vals = [], [], []

    def add(r, c, block):
        rows.append(np.broadcast_to(r[:, :, None], block.shape).ravel())
        cols.append(np.broadcast_to(c[:, None, :], block.shape).ravel())
        vals.append(block.ravel())

    # Momentum rows: [mu A, 0, -Bx^T; 0, mu A, -By^T]
    add(vd, vd, Ke)                                          # ux-ux
    add(vd + S, vd + S, Ke)                                  # uy-uy
    P0 = 2 * S
    add(vd, pd + P0, -np.swapaxes(Bxe, 1, 2))
    add(vd + S, pd + P0, -np.swapaxes(Bye, 1, 2))
    # Constraint rows (negated for symmetry): [-Bx, -By, -eps M]
    add(pd + P0, vd, -Bxe)
    add(pd + P0, vd + S, -Bye)
    add(pd + P0, pd + P0, -eps * Me)

    ndof = 2 * S + Np
    has_gauge = eps == 0.0
    if has_gauge:
        # Zero-mean pressure gauge via one Lagrange multiplier row/column.
        mass_vec = np.zeros(Np)
        np.add.at(mass_vec, pd.ravel(), Me.sum(axis=2).ravel())
        gi = np.full(Np, ndof)
        rows.append(np.concatenate([gi, np.arange(Np) + P0]))
        cols.append(np.concatenate([np.arange(Np) + P0, gi]))
        vals.append(np.concatenate([mass_vec, mass_vec]))
        ndof += 1

    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof)).tocsr()

    rhs = np.zeros(ndof)
    xq = space.tri_origin[:, None, :] + np.einsum("mde,qe->mqd", _jacobians(space), pts)
    if f is not None:
        fv = np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float)  # (m, q, 2)
        Fx = np.einsum("mq,qi,mq->mi", wdet, Nsh, fv[..., 0])
        Fy = np.einsum("mq,qi,mq->mi", wdet, Nsh, fv[..., 1])
        np.add.at(rhs, vd.ravel(), Fx.ravel())
        np.add.at(rhs, (vd + S).ravel(), Fy.ravel())
    if zeta is not None:
        zv = np.asarray(zeta(xq[..., 0], xq[..., 1]), dtype=float)
        Z = np.einsum("mq,qk,mq->mk", wdet, Lsh, zv)
        np.add.at(rhs, (pd + P0).ravel(), -Z.ravel())

    return SparseSystem(space=space, material=material, K=K, rhs=rhs,
                        n_scalar=S, n_pressure=Np, has_gauge=has_gauge)


def _jacobians(space: P2Space):
    """Forward affine maps (m, 2, 2): columns are the two edge vectors."""
    p = space.mesh.nodes[space.mesh.tris]
    return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)


def apply_dirichlet(system: SparseSystem, traces: dict) -> SparseSystem:
    """Pin both velocity components at every boundary P2 node.

    traces maps polygon edge tag -> callable (x, y) -> (..., 2).  Vertex nodes
    shared by two edges must receive consistent values.
    """
    space = system.space
    mesh = space.mesh
    S = system.n_scalar
    values: dict[int, np.ndarray] = {}
    for k, (i, j, tag) in enumerate(mesh.bedges):
        if int(tag) not in traces:
            raise MissingEdgeData(f"no Dirichlet trace for boundary edge tag {tag}")
        g = traces[int(tag)]
        for dof in space.bedge_dofs(k):
            x, y = space.dof_coords[dof]
            val = np.asarray(g(x, y), dtype=float).reshape(2)
            if dof in values and not np.allclose(values[dof], val, atol=1e-10):
                raise InconsistentEdgeData(
                    f"conflicting Dirichlet values at node {dof}: "
                    f"{values[dof]} vs {val}")
            values[dof] = val

    ndof = system.K.shape[0]
    constrained = np.zeros(ndof, dtype=bool)
    vals = np.zeros(ndof)
    for dof, v in values.items():
        constrained[dof] = True
        vals[dof] = v[0]
        constrained[dof + S] = True
        vals[dof + S] = v[1]
    return SparseSystem(space=space, material=system.material, K=system.K,
                        rhs=system.rhs, n_scalar=S, n_pressure=system.n_pressure,
                        has_gauge=system.has_gauge,
                        constrained=constrained, values=vals)


def solve(system: SparseSystem) -> MixedField:
    """Direct symmetric-indefinite solve with residual verification."""
    con = system.constrained
    if con is None:
        con = np.zeros(system.K.shape[0], dtype=bool)
        system = SparseSystem(space=system.space, material=system.material,
                              K=system.K, rhs=system.rhs,
                              n_scalar=system.n_scalar,
                              n_pressure=system.n_pressure,
                              has_gauge=system.has_gauge,
                              constrained=con, values=np.zeros(system.K.shape[0]))
    free = ~con
    K = system.K.tocsc()
    xc = system.values
    rhs_f = system.rhs[free] - K[free][:, con] @ xc[con]
    Kff = K[free][:, free]
    try:
        lu = splu(Kff.tocsc())
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    xf = lu.solve(rhs_f)
    if not np.all(np.isfinite(xf)):
        raise SingularSystem("factorization produced non-finite values "
                             "(pressure gauge missing?)")
    x = xc.copy()
    x[free] = xf
    scale = max(float(np.linalg.norm(rhs_f)), 1e-30)
    resid = float(np.linalg.norm(Kff @ xf - rhs_f)) / scale
    if resid > 1e-10:
        raise SolverBreakdown(f"relative residual {resid:.3e} exceeds 1e-10")
    S, Np = system.n_scalar, system.n_pressure
    ux, uy = x[:S], x[S:2 * S]
    p = x[2 * S:2 * S + Np]
    gauge = 0.0
    if system.has_gauge:
        space = system.space
        # Exact zero-mean shift (the multiplier already enforces it weakly).
        pts, w = tri_quadrature(5)
        L = p1_shape(pts)
        mean = float(np.einsum("m,qk,mk->", space.areas, w[:, None] * L,
                               p[space.mesh.tris]))
        area = float(space.areas.sum())
        gauge = mean / area
        p = p - gauge
    return MixedField(space=system.space, material=system.material,
                      ux=ux, uy=uy, p=p, gauge=gauge, residual=resid)


def solve_psi(dual_mode: SingularMode, mesh: TriMesh, material: MaterialParams,
              polygon, space: P2Space | None = None) -> MixedField:
    """Auxiliary corrector solve for one dual mode.

    Zero volume data; Dirichlet data on the far edges is the negated dual
    trace (scaled so the penalized and Stokes data agree in the eps -> 0
    limit), and exactly zero on the two corner edges.
    """
    if dual_mode.kind != "dual":
        raise ValueError("solve_psi expects the dual mode")
    # The Stokes dual velocity carries a 1/mu prefactor; its corrector data is
    # -mu * mode so the pair (mu*dual + psi) is what extraction integrates.
    scale = -material.mu if dual_mode.family == "stokes" else -1.0

    def far_trace(x, y):
        return scale * dual_mode.eval_xy(x, y)

    zero = lambda x, y: np.zeros(np.shape(x) + (2,))
    traces = {}
    for e in polygon.edges:
        traces[e.tag] = zero if e.on_corner_ray else far_trace
    system = assemble(mesh, material, f=None, zeta=None, space=space)
    system = apply_dirichlet(system, traces)
    return solve(system)


def norms(field: MixedField) -> dict:
    """H1 (semi)norms of the velocity and L2 norms of both unknowns."""
    space = field.space
    pts, w = tri_quadrature(8)
    N = p2_shape(pts)
    L = p1_shape(pts)
    Gref = p2_shape_grad(pts)
    Gphys = np.einsum("qid,mde->mqie", Gref, space.invJ)
    vd = space.tri_dofs
    ux_e, uy_e = field.ux[vd], field.uy[vd]
    wa = 2.0 * space.areas[:, None] * w[None, :] * 0.5
    gux = np.einsum("mqie,mi->mqe", Gphys, ux_e)
    guy = np.einsum("mqie,mi->mqe", Gphys, uy_e)
    semi2 = float(np.sum(wa * (np.sum(gux ** 2, axis=-1) + np.sum(guy ** 2, axis=-1))))
    vx = ux_e @ N.T
    vy = uy_e @ N.T
    l2v2 = float(np.sum(wa * (vx ** 2 + vy ** 2)))
    pv = field.p[space.mesh.tris] @ L.T
    l2p = math.sqrt(float(np.sum(wa * pv ** 2)))
    return {
        "h1_seminorm": math.sqrt(semi2),
        "h1": math.sqrt(semi2 + l2v2),
        "l2_velocity": math.sqrt(l2v2),
        "l2_pressure": l2p,
    }


def diff_norms(a: MixedField, b: MixedField) -> dict:
    return norms(a.minus(b))


def error_norms(field: MixedField, velocity, velocity_grad=None, pressure=None) -> dict:
    """True discretization errors against analytic fields, by quadrature.

    velocity      : (x, y) -> (..., 2)
    velocity_grad : (x, y) -> (..., 2, 2) with [k, l] = d(u_k)/d(x_l), optional
    pressure      : (x, y) -> (...), optional
    """
    space = field.space
    pts, w = tri_quadrature(8)
    xq = space.tri_origin[:, None, :] + np.einsum("mde,qe->mqd", _jacobians(space), pts)
    wa = space.areas[:, None] * w[None, :]
    N = p2_shape(pts)
    vd = space.tri_dofs
    vh = np.stack([field.ux[vd] @ N.T, field.uy[vd] @ N.T], axis=-1)
    vex = np.asarray(velocity(xq[..., 0], xq[..., 1]), dtype=float)
    l2v2 = float(np.sum(wa * np.sum((vh - vex) ** 2, axis=-1)))
    out = {"l2_velocity": math.sqrt(l2v2)}
    if velocity_grad is not None:
        Gphys = np.einsum("qid,mde->mqie", p2_shape_grad(pts), space.invJ)
        gh = np.stack([np.einsum("mqie,mi->mqe", Gphys, field.ux[vd]),
                       np.einsum("mqie,mi->mqe", Gphys, field.uy[vd])], axis=2)
        gex = np.asarray(velocity_grad(xq[..., 0], xq[..., 1]), dtype=float)
        semi2 = float(np.sum(wa * np.sum((gh - gex) ** 2, axis=(-1, -2))))
        out["h1_seminorm"] = math.sqrt(semi2)
        out["h1"] = math.sqrt(semi2 + l2v2)
    if pressure is not None:
        L = p1_shape(pts)
        ph = field.p[space.mesh.tris] @ L.T
        pex = np.asarray(pressure(xq[..., 0], xq[..., 1]), dtype=float)
        out["l2_pressure"] = math.sqrt(float(np.sum(wa * (ph - pex) ** 2)))
    return out


def second_equation_residual(field: MixedField) -> float:
    """Norm of (div u_h + eps p_h) tested against P1, relative to ||p_h||."""
    space = field.space
    eps = field.material.eps
    pts, w = tri_quadrature(5)
    L = p1_shape(pts)
    Gphys = np.einsum("qid,mde->mqie", p2_shape_grad(pts), space.invJ)
    vd = space.tri_dofs
    wa = space.areas[:, None] * w[None, :]
    div = np.einsum("mqi,mi->mq", Gphys[..., 0], field.ux[vd]) \
        + np.einsum("mqi,mi->mq", Gphys[..., 1], field.uy[vd])
    ph = field.p[space.mesh.tris] @ L.T
    r = np.zeros(space.mesh.n_nodes)
    contrib = np.einsum("mq,qk,mq->mk", wa, L, div + eps * ph)
    np.add.at(r, space.mesh.tris.ravel(), contrib.ravel())
    pn = norms(field)["l2_pressure"]
    return float(np.linalg.norm(r)) / max(pn, 1e-30)
