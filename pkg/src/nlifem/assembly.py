"""Stiffness and load assembly, constraint elimination and the dense SPD solve."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .geometry import DofMap, Piece, lagrange_basis
from .operators import ProblemData
from .quadrature import clip_rectangle, fan_triangles, gauss_rule, interval_points, stiffness_order, triangle_points


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadSettings:
    stiffness_order: int | None = None   # None: exact for polynomial kernels
    error_order: int = 10
    load_order: int = 10

    def stiffness_n(self, k: int, kernel_degree: int) -> int:
        return self.stiffness_order or stiffness_order(k, kernel_degree)


@dataclass(frozen=True)
class PairTerm:
    """c * int_{x in X} int_{y in Y} (u(x)-u(y)) (v(x)-v(y)) gamma(x, y) for one field."""
    field: int
    x_zone: tuple
    y_zone: tuple
    kernel: object
    coeff: float
    label: str


def bilinear_terms(regions, interfaces: bool = True, domains: bool = True) -> list[PairTerm]:
    terms = []
    if domains:
        for i in range(regions.nfields):
            d = regions.domain(i)
            terms.append(PairTerm(i, d, d, regions.kernels[i], 0.5, f"domain{i}"))
    if interfaces:
        for m in range(len(regions.interfaces)):
            z = regions.zones(m)
            kl, kr = regions.kernels[m], regions.kernels[m + 1]
            terms.append(PairTerm(m, z.j_right, z.j_left, kl, 0.5, f"gamma{m}L"))
            terms.append(PairTerm(m + 1, z.j_left, z.j_right, kr, 0.5, f"gamma{m}R"))
            if z.omega_j is not None:
                terms.append(PairTerm(m + 1, z.j_right, z.omega_j, kr, 1.0, f"gamma{m}J"))
    return terms


def _clipped_pieces(pieces: Sequence[Piece], zone) -> list:
    lo, hi = zone
    out = []
    for p in pieces:
        a, b = max(p.lo, lo), min(p.hi, hi)
        if b > a:
            out.append((p, a, b))
    return out


@dataclass
class PanelBatch:
    """Triangles of one bilinear term with the owning x/y pieces."""
    tris: np.ndarray        # (T, 3, 2)
    xpiece: list            # per triangle
    ypiece: list


def term_panels(dofmap: DofMap, term: PairTerm) -> PanelBatch:
    pieces = dofmap.field_pieces[term.field]
    xs = _clipped_pieces(pieces, term.x_zone)
    ys = _clipped_pieces(pieces, term.y_zone)
    d = term.kernel.delta
    ylo = np.array([t[1] for t in ys])
    yhi = np.array([t[2] for t in ys])
    tris, xp, yp = [], [], []
    for px, a, b in xs:
        j0 = int(np.searchsorted(yhi, a - d, side="right"))
        j1 = int(np.searchsorted(ylo, b + d, side="left"))
        for j in range(j0, j1):
            py, c, e = ys[j]
            polys = clip_rectangle(a, b, c, e, d)
            if not polys:
                continue
            t = fan_triangles(polys)
            tris.append(t)
            xp.extend([px] * len(t))
            yp.extend([py] * len(t))
    if not tris:
        return PanelBatch(np.zeros((0, 3, 2)), [], [])
    return PanelBatch(np.concatenate(tris), xp, yp)


def _piece_arrays(dofmap: DofMap, fld: int, plist: list):
    e = np.array([p.element for p in plist], dtype=int)
    br = np.array([p.branch for p in plist], dtype=int)
    return e, br, dofmap.local_gids(fld, e, br)


def _local_basis(dofmap: DofMap, e: np.ndarray, br: np.ndarray, x: np.ndarray) -> np.ndarray:
    return lagrange_basis(dofmap.k, dofmap.ref_coord(e[:, None], br[:, None], x))


def assemble_terms(dofmap: DofMap, terms: Sequence[PairTerm], quad: QuadSettings = QuadSettings(),
                   panels: dict | None = None) -> np.ndarray:
    n = dofmap.ndofs
    A = np.zeros((n, n))
    for term in terms:
        batch = panels[term] if panels is not None and term in panels else term_panels(dofmap, term)
        if len(batch.tris) == 0:
            continue
        nq = quad.stiffness_n(dofmap.k, term.kernel.profile.degree)
        pts, w = triangle_points(batch.tris, nq)
        x, y = pts[..., 0], pts[..., 1]
        w = term.coeff * w * term.kernel.of_distance(x - y)
        ex, bx, gx = _piece_arrays(dofmap, term.field, batch.xpiece)
        ey, by, gy = _piece_arrays(dofmap, term.field, batch.ypiece)
        B = np.concatenate([_local_basis(dofmap, ex, bx, x), -_local_basis(dofmap, ey, by, y)], axis=-1)
        M = np.einsum("tq,tqa,tqb->tab", w, B, B)
        g = np.concatenate([gx, gy], axis=1)
        if np.any(g < 0):
            raise AssemblyError(f"term {term.label} touches inactive pieces")
        np.add.at(A, (g[:, :, None], g[:, None, :]), M)
    return A


def assemble_domain(dofmap: DofMap, quad: QuadSettings = QuadSettings()) -> np.ndarray:
    return assemble_terms(dofmap, bilinear_terms(dofmap.regions, interfaces=False), quad)


def assemble_interface(dofmap: DofMap, quad: QuadSettings = QuadSettings()) -> np.ndarray:
    return assemble_terms(dofmap, bilinear_terms(dofmap.regions, domains=False), quad)


def _field_load(dofmap: DofMap, fld: int, zone, func, breaks, order: int) -> np.ndarray:
    """int_zone func(x) v(x) dx for every basis function v of field fld."""
    b = np.zeros(dofmap.ndofs)
    clipped = _clipped_pieces(dofmap.field_pieces[fld], zone)
    if not clipped:
        return b
    los, his, owners = [], [], []
    for p, lo, hi in clipped:
        cuts = sorted({lo, hi, *(c for c in breaks if lo < c < hi)})
        for c0, c1 in zip(cuts, cuts[1:]):
            los.append(c0)
            his.append(c1)
            owners.append(p)
    x, w = interval_points(np.array(los), np.array(his), gauss_rule(order))
    fx = np.asarray(func(x.ravel()), dtype=float).reshape(x.shape)
    e, br, g = _piece_arrays(dofmap, fld, owners)
    B = _local_basis(dofmap, e, br, x)
    np.add.at(b, g, np.einsum("sq,sqa->sa", fx * w, B))
    return b


def assemble_load(dofmap: DofMap, data: ProblemData, quad: QuadSettings = QuadSettings()) -> np.ndarray:
    regions = dofmap.regions
    rhs = np.zeros(dofmap.ndofs)
    for i in range(regions.nfields):
        f = data.f[i]
        rhs += _field_load(dofmap, i, regions.omega(i), f, f.kinks, quad.load_order)
    for m in range(len(regions.interfaces)):
        z = regions.zones(m)
        psi_r, psi_l = data.psi[m]
        rhs += _field_load(dofmap, m, z.j_right, psi_r, psi_r.kinks, quad.load_order)
        rhs += _field_load(dofmap, m + 1, z.j_left, psi_l, psi_l.kinks, quad.load_order)
    return rhs


# ---------------------------------------------------------------- constraints

@dataclass
class Constraints:
    """x_full = T x_free + c."""
    T: np.ndarray
    c: np.ndarray
    root: np.ndarray          # representative dof of each dof's class
    fixed: np.ndarray         # bool per dof
    free_of_root: dict = field(default_factory=dict)

    @property
    def nfree(self) -> int:
        return self.T.shape[1]


@dataclass
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    constraints: Constraints
    reduced_matrix: np.ndarray
    reduced_rhs: np.ndarray


def _node_value(dofmap: DofMap, fn, gid: int) -> float:
    """Value of fn at the node of gid, taken from the smooth piece its branch lives on."""
    comp = dofmap.composite_of(gid)
    e, br = dofmap.composite_owner[comp]
    lo, hi = dofmap.mesh.nodes[e], dofmap.mesh.nodes[e + 1]
    if e in dofmap.mesh.cut:
        al = dofmap.regions.interfaces[dofmap.mesh.cut[e]]
        lo, hi = (lo, al) if br == 0 else (al, hi)
    anchor = 0.5 * (lo + hi)
    f = fn.branch(anchor) if hasattr(fn, "branch") else fn
    return float(f(np.array(dofmap.composite_x[comp])))


def build_constraints(dofmap: DofMap, data: ProblemData) -> Constraints:
    n = dofmap.ndofs
    parent = np.arange(n)
    offset = np.zeros(n)   # value(dof) = value(parent) + offset

    def find(i):
        path = []
        while parent[i] != i:
            path.append(i)
            i = parent[i]
        root = i
        acc = 0.0
        for j in reversed(path):
            acc += offset[j]
            offset[j] = acc
            parent[j] = root
        return root

    for slave, master, m in dofmap.identification:
        lift = _node_value(dofmap, data.phi[m], slave)
        rs, rm = find(slave), find(master)
        if rs == rm:
            if abs(offset[slave] - offset[master] - lift) > 1e-10:
                raise AssemblyError("inconsistent jump lifting along identification chain")
            continue
        # value(slave) = value(master) + lift, so value(rs) = value(rm) + offset[master] + lift - offset[slave]
        parent[rs] = rm
        offset[rs] = offset[master] + lift - offset[slave]
    roots = np.array([find(i) for i in range(n)])
    offs = offset.copy()
    offs[roots == np.arange(n)] = 0.0

    fixed_val = {}
    for i, ids in enumerate(dofmap.dirichlet):
        for gid in ids:
            r = roots[gid]
            val = _node_value(dofmap, data.g[i], gid) - offs[gid]
            if r in fixed_val and abs(fixed_val[r] - val) > 1e-10 * max(1.0, abs(val)):
                raise AssemblyError(f"conflicting Dirichlet values on dof class {r}")
            fixed_val.setdefault(r, val)

    free_roots = sorted({int(r) for r in roots if r not in fixed_val})
    col = {r: j for j, r in enumerate(free_roots)}
    T = np.zeros((n, len(free_roots)))
    c = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    for i in range(n):
        r = int(roots[i])
        if r in fixed_val:
            c[i] = fixed_val[r] + offs[i]
            fixed[i] = True
        else:
            T[i, col[r]] = 1.0
            c[i] = offs[i]
    return Constraints(T, c, roots, fixed, col)


def apply_constraints(A: np.ndarray, rhs: np.ndarray, dofmap: DofMap, data: ProblemData) -> LinearSystem:
    cons = build_constraints(dofmap, data)
    T = cons.T
    Ared = T.T @ A @ T
    Ared = 0.5 * (Ared + Ared.T)
    bred = T.T @ (rhs - A @ cons.c)
    return LinearSystem(A, rhs, cons, Ared, bred)


@dataclass
class Solution:
    dofmap: DofMap
    coeffs: np.ndarray
    system: LinearSystem | None = None
    residual: float = 0.0

    def evaluate(self, fld: int, x):
        return self.dofmap.evaluate(fld, self.coeffs, x)

    def field(self, fld: int):
        return lambda x: self.evaluate(fld, x)


def solve(system: LinearSystem, return_residual: bool = False):
    """Cholesky solve of the reduced system; returns the full coefficient vector
    (and the max-norm residual of the reduced system if requested)."""
    A, b = system.reduced_matrix, system.reduced_rhs
    if A.shape[0] == 0:
        x = system.constraints.c.copy()
        return (x, 0.0) if return_residual else x
    dg = np.diag(A)
    if np.any(dg <= 0):
        raise AssemblyError("reduced matrix is not positive definite")
    # symmetric Jacobi scaling tames the small-cut basis functions
    s = 1.0 / np.sqrt(dg)
    try:
        fac = linalg.cho_factor(A * s[:, None] * s[None, :], lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise AssemblyError("reduced matrix is not positive definite") from exc
    xf = s * linalg.cho_solve(fac, s * b)
    res = np.max(np.abs(A @ xf - b))
    scale = np.max(np.abs(A)) * np.max(np.abs(xf)) + np.max(np.abs(b))
    if res > 1e-10 * max(scale, 1e-300):
        raise AssemblyError(f"solve residual too large: {res:.3e}")
    x = system.constraints.T @ xf + system.constraints.c
    return (x, float(res)) if return_residual else x


def solve_dense(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Plain SPD solve for an unconstrained system."""
    fac = linalg.cho_factor(np.atleast_2d(A), lower=True)
    return linalg.cho_solve(fac, np.atleast_1d(b))


def assemble_system(dofmap: DofMap, data: ProblemData, quad: QuadSettings = QuadSettings()) -> LinearSystem:
    A = assemble_terms(dofmap, bilinear_terms(dofmap.regions), quad)
    rhs = assemble_load(dofmap, data, quad)
    return apply_constraints(A, rhs, dofmap, data)


def solve_problem(dofmap: DofMap, data: ProblemData, quad: QuadSettings = QuadSettings()) -> Solution:
    system = assemble_system(dofmap, data, quad)
    coeffs, res = solve(system, return_residual=True)
    return Solution(dofmap, coeffs, system, res)


def evaluate_solution(sol: Solution, fld: int, x):
    out = sol.evaluate(fld, x)
    return float(out) if np.ndim(out) == 0 else out


def dump_matrix(A: np.ndarray, path) -> None:
    """Coordinate-format text dump (row col value) of the nonzero entries."""
    rows, cols = np.nonzero(A)
    with open(path, "w") as fh:
        for r, c in zip(rows, cols):
            fh.write(f"{r} {c} {A[r, c]:.17g}\n")
