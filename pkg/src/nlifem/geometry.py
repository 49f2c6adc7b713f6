"""Region decomposition, uniform background mesh and the cut-element DOF map.

Fields are numbered 0..M for M interfaces; interface m separates field m
(left, horizon delta_L) from field m+1 (right, horizon delta_R).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .kernels import KernelSpec

Interval = tuple[float, float]


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class InterfaceZones:
    alpha: float
    delta_left: float
    delta_right: float
    j_left: Interval      # (alpha, alpha + delta_L): left field reaching across
    j_right: Interval     # (alpha - delta_R, alpha): right field reaching across
    gamma: Interval       # j_right U j_left
    omega_j: Interval | None  # (alpha + delta_L, alpha + delta_R) when delta_L < delta_R


@dataclass(frozen=True)
class RegionMap:
    a: float
    b: float
    interfaces: tuple[float, ...]
    kernels: tuple[KernelSpec, ...]

    @property
    def nfields(self) -> int:
        return len(self.kernels)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(k.delta for k in self.kernels)

    @property
    def lo(self) -> float:
        return self.a - self.kernels[0].delta

    @property
    def hi(self) -> float:
        return self.b + self.kernels[-1].delta

    def omega(self, i: int) -> Interval:
        pts = (self.a, *self.interfaces, self.b)
        return (pts[i], pts[i + 1])

    def collar(self, i: int) -> Interval | None:
        """Dirichlet collar I_i^D, or None for interior fields."""
        out = None
        if i == 0:
            out = (self.a - self.kernels[0].delta, self.a)
        if i == self.nfields - 1:
            right = (self.b, self.b + self.kernels[-1].delta)
            out = right if out is None else None
        return out

    def collars(self, i: int) -> list[Interval]:
        res = []
        if i == 0:
            res.append((self.a - self.kernels[0].delta, self.a))
        if i == self.nfields - 1:
            res.append((self.b, self.b + self.kernels[-1].delta))
        return res

    def domain(self, i: int) -> Interval:
        """Omega_i U I_i^D, the support of the field's own energy term."""
        lo, hi = self.omega(i)
        if i == 0:
            lo = self.a - self.kernels[0].delta
        if i == self.nfields - 1:
            hi = self.b + self.kernels[-1].delta
        return (lo, hi)

    def region(self, i: int) -> Interval:
        """Omega_i U I_i, where field i is defined."""
        d = self.kernels[i].delta
        lo = self.a - d if i == 0 else self.interfaces[i - 1] - d
        hi = self.b + d if i == self.nfields - 1 else self.interfaces[i] + d
        return (lo, hi)

    def zones(self, m: int) -> InterfaceZones:
        al = self.interfaces[m]
        dl, dr = self.kernels[m].delta, self.kernels[m + 1].delta
        omj = (al + dl, al + dr) if dl < dr else None
        return InterfaceZones(al, dl, dr, (al, al + dl), (al - dr, al), (al - dr, al + dl), omj)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.a, *self.interfaces, self.b)


def build_regions(a: float, b: float, interfaces: Sequence[float],
                  kernels: Sequence[KernelSpec]) -> RegionMap:
    """Validate the geometry and return the region map.

    Requirements per interface m (left horizon dL, right horizon dR):
    dL <= dR; the left field's own reach stays inside both adjacent
    subdomains (alpha - dL >= left end of Omega_m, alpha + dL <= right end
    of Omega_{m+1}); the interface zone Gamma stays clear of the Dirichlet
    collars (alpha - dR > a). Zones of neighbouring interfaces may overlap.
    """
    a, b = float(a), float(b)
    alphas = tuple(float(al) for al in interfaces)
    kernels = tuple(kernels)
    if not a < b:
        raise GeometryError("need a < b")
    if len(kernels) != len(alphas) + 1:
        raise GeometryError(f"{len(alphas)} interfaces need {len(alphas) + 1} kernels, got {len(kernels)}")
    pts = (a, *alphas, b)
    if any(p >= q for p, q in zip(pts, pts[1:])):
        raise GeometryError("interfaces must be strictly increasing inside (a, b)")
    for m, al in enumerate(alphas):
        dl, dr = kernels[m].delta, kernels[m + 1].delta
        if dl > dr:
            raise GeometryError(f"interface {m}: left horizon {dl} exceeds right horizon {dr}")
        if al - dl < pts[m] - 1e-14:
            raise GeometryError(f"interface {m}: left horizon {dl} leaves subdomain {m}")
        if al + dl > pts[m + 2] + 1e-14:
            raise GeometryError(f"interface {m}: interaction zone ({al}, {al + dl}) leaves subdomain {m + 1}")
        if al - dr <= a:
            raise GeometryError(f"interface {m}: Gamma reaches the Dirichlet collar at a={a}")
    return RegionMap(a, b, alphas, kernels)


def _overlaps(lo: float, hi: float, iv: Interval | None) -> bool:
    return iv is not None and lo < iv[1] and hi > iv[0]


@dataclass(frozen=True)
class Mesh:
    regions: RegionMap
    h: float
    nodes: np.ndarray
    cut: dict          # element index -> interface index
    tags: tuple        # per element frozenset of tag strings

    @property
    def nelem(self) -> int:
        return len(self.nodes) - 1

    def element_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.floor((x - self.nodes[0]) / self.h).astype(int)
        return np.clip(e, 0, self.nelem - 1)

    def elements_overlapping(self, lo: float, hi: float) -> range:
        """Elements whose interior meets the open interval (lo, hi)."""
        x0 = self.nodes[0]
        e0 = max(0, int(np.floor((lo - x0) / self.h + 1e-9)))
        e1 = min(self.nelem, int(np.ceil((hi - x0) / self.h - 1e-9)))
        return range(e0, max(e0, e1))


def _ratio(num: float, h: float, what: str) -> int:
    r = num / h
    n = int(round(r))
    if n < 1 or abs(r - n) > 1e-9 * max(1.0, r):
        raise GeometryError(f"{what} = {num} is not an integer multiple of h = {h}")
    return n


def element_tags(regions: RegionMap, lo: float, hi: float) -> frozenset:
    """Recompute an element's tag set from interval intersections."""
    tags = set()
    for i in range(regions.nfields):
        d0, d1 = regions.domain(i)
        if lo <= d1 and hi >= d0:
            tags.add(f"T{i}")
    for m in range(len(regions.interfaces)):
        z = regions.zones(m)
        if _overlaps(lo, hi, z.gamma):
            tags.add(f"TG{m}")
        if _overlaps(lo, hi, z.j_left):
            tags.add(f"TJL{m}")
        if _overlaps(lo, hi, z.j_right):
            tags.add(f"TJR{m}")
        if _overlaps(lo, hi, z.omega_j):
            tags.add(f"TOJ{m}")
        if lo < z.alpha < hi:
            tags.add("cut")
    return frozenset(tags)


def build_mesh(regions: RegionMap, h: float) -> Mesh:
    h = float(h)
    if not h > 0:
        raise GeometryError("h must be positive")
    m0 = _ratio(regions.kernels[0].delta, h, "delta_0")
    for i, k in enumerate(regions.kernels):
        _ratio(k.delta, h, f"delta_{i}")
    nin = _ratio(regions.b - regions.a, h, "b - a")
    mlast = _ratio(regions.kernels[-1].delta, h, f"delta_{regions.nfields - 1}")
    n = m0 + nin + mlast
    nodes = regions.a + (np.arange(n + 1) - m0) * h
    nodes[m0] = regions.a
    nodes[m0 + nin] = regions.b
    cut = {}
    for m, al in enumerate(regions.interfaces):
        r = (al - nodes[0]) / h
        j = int(np.floor(r))
        if min(r - j, j + 1 - r) * h <= 1e-12 * h or min(r - j, j + 1 - r) < 1e-12:
            raise GeometryError(f"interface alpha={al} lies on a grid node (h={h})")
        if j in cut:
            raise GeometryError(f"two interfaces fall in element {j}")
        cut[j] = m
    tags = tuple(element_tags(regions, nodes[e], nodes[e + 1]) for e in range(n))
    return Mesh(regions, h, nodes, cut, tags)


def lagrange_basis(k: int, xi) -> np.ndarray:
    """Equispaced Lagrange basis of degree k on [0, 1]; returns shape xi.shape + (k+1,)."""
    xi = np.asarray(xi, dtype=float)
    nodes = np.linspace(0.0, 1.0, k + 1)
    out = np.ones(xi.shape + (k + 1,))
    for i in range(k + 1):
        for j in range(k + 1):
            if j != i:
                out[..., i] *= (xi - nodes[j]) / (nodes[i] - nodes[j])
    return out


@dataclass(frozen=True)
class Piece:
    """Element e restricted to one side of its interface (branch 0/1), or whole (branch 0)."""
    element: int
    branch: int
    lo: float
    hi: float


@dataclass
class DofMap:
    mesh: Mesh
    k: int
    coupling: str
    # composite numbering: one P^k space on the whole grid broken at every alpha
    piece_dofs: dict                      # (e, branch) -> array of composite dofs (k+1,)
    composite_x: np.ndarray               # node coordinate of every composite dof
    composite_owner: list                 # composite dof -> (e, branch) owning piece
    field_pieces: list                    # per field: list[Piece]
    field_composite: list                 # per field: sorted composite dofs
    offsets: np.ndarray                   # global offset per field
    identification: list = field(default_factory=list)  # (slave_gid, master_gid, interface m)
    dirichlet: list = field(default_factory=list)       # per field: array of global ids
    frame: np.ndarray | None = None                     # (nelem, 2, 2): (left end, length) per (e, branch)

    @property
    def regions(self) -> RegionMap:
        return self.mesh.regions

    @property
    def nfields(self) -> int:
        return len(self.field_pieces)

    @property
    def ndofs(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def _gid_tables(self):
        tabs = []
        for i, comp in enumerate(self.field_composite):
            t = np.full(len(self.composite_x), -1, dtype=int)
            t[comp] = self.offsets[i] + np.arange(len(comp))
            tabs.append(t)
        return tabs

    def gid(self, i: int, composite) -> np.ndarray:
        return self._gid_tables[i][np.asarray(composite)]

    def field_of(self, gid: int) -> int:
        return int(np.searchsorted(self.offsets, gid, side="right") - 1)

    def composite_of(self, gid: int) -> int:
        i = self.field_of(gid)
        return int(self.field_composite[i][gid - self.offsets[i]])

    def dof_x(self, gid: int) -> float:
        return float(self.composite_x[self.composite_of(gid)])

    def piece_gids(self, i: int, e: int, branch: int) -> np.ndarray:
        return self.gid(i, self.piece_dofs[(e, branch)])

    def branch_of(self, e, x) -> np.ndarray:
        """Branch index of points x inside elements e."""
        e = np.asarray(e)
        x = np.asarray(x, dtype=float)
        br = np.zeros(np.broadcast(e, x).shape, dtype=int)
        for ce, m in self.mesh.cut.items():
            al = self.regions.interfaces[m]
            br = np.where((e == ce) & (x > al), 1, br)
        return br

    def locate(self, i: int, x):
        """Element, branch and reference coordinate of x for field i."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.regions.region(i)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise GeometryError(f"point outside the active region ({lo}, {hi}) of field {i}")
        e = self.mesh.element_of(x)
        br = self.branch_of(e, x)
        return e, br, self.ref_coord(e, br, x)

    def ref_coord(self, e, br, x) -> np.ndarray:
        """Reference coordinate of x in piece (e, br); cut pieces carry their own frame."""
        e, br = np.asarray(e), np.asarray(br)
        lo, ln = self.frame[e, br, 0], self.frame[e, br, 1]
        return (np.asarray(x, dtype=float) - lo) / ln

    def local_gids(self, i: int, e, br) -> np.ndarray:
        """Global ids (..., k+1) of the pieces (e, br) of field i."""
        e = np.asarray(e)
        br = np.asarray(br)
        flat = [self.piece_dofs[(int(ee), int(bb))] for ee, bb in zip(e.ravel(), br.ravel())]
        comp = np.array(flat, dtype=int).reshape(e.shape + (self.k + 1,))
        return self.gid(i, comp)

    def evaluate(self, i: int, coeffs: np.ndarray, x) -> np.ndarray:
        """Field i of the discrete function with global coefficient vector coeffs."""
        e, br, xi = self.locate(i, x)
        g = self.local_gids(i, e, br)
        if np.any(g < 0):
            raise GeometryError(f"point outside the active pieces of field {i}")
        return np.sum(coeffs[g] * lagrange_basis(self.k, xi), axis=-1)


def eval_basis(dofmap: DofMap, i: int, gid: int, x):
    """Value of the global basis function gid (belonging to field i) at x."""
    if dofmap.field_of(gid) != i:
        raise GeometryError(f"dof {gid} does not belong to field {i}")
    e, br, xi = dofmap.locate(i, x)
    g = dofmap.local_gids(i, e, br)
    vals = lagrange_basis(dofmap.k, xi)
    out = np.sum(np.where(g == gid, vals, 0.0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _piece_bounds(mesh: Mesh, e: int, branch: int) -> Interval:
    lo, hi = mesh.nodes[e], mesh.nodes[e + 1]
    if e in mesh.cut:
        al = mesh.regions.interfaces[mesh.cut[e]]
        return (lo, al) if branch == 0 else (al, hi)
    return (lo, hi)


def build_dof_map(mesh: Mesh, k: int, coupling: str = "identified") -> DofMap:
    if k < 1:
        raise GeometryError("polynomial degree must be >= 1")
    if coupling not in ("identified", "decoupled"):
        raise GeometryError(f"unknown coupling mode {coupling!r}")
    regions = mesh.regions
    h = mesh.h
    piece_dofs = {}
    xs = []
    owner = []

    def new(x, e, br):
        xs.append(x)
        owner.append((e, br))
        return len(xs) - 1

    frame = np.empty((mesh.nelem, 2, 2))
    left = new(mesh.nodes[0], 0, 0)
    ref = np.arange(k + 1) / k
    for e in range(mesh.nelem):
        x0 = mesh.nodes[e]
        loc = x0 + h * ref
        frame[e, :] = (x0, h)
        if e in mesh.cut:
            # each branch gets Lagrange nodes spread over its own piece; same space as
            # extending the element basis, far better conditioned for small cuts
            al = regions.interfaces[mesh.cut[e]]
            frame[e, 0] = (x0, al - x0)
            frame[e, 1] = (al, x0 + h - al)
            lloc = x0 + (al - x0) * ref
            rloc = al + (x0 + h - al) * ref
            lb = [left] + [new(lloc[j], e, 0) for j in range(1, k + 1)]
            rb = [new(rloc[j], e, 1) for j in range(k)]
            left = new(rloc[k], e, 1)
            piece_dofs[(e, 0)] = np.array(lb)
            piece_dofs[(e, 1)] = np.array(rb + [left])
        else:
            dofs = [left] + [new(loc[j], e, 0) for j in range(1, k)]
            left = new(loc[k], e, 0)
            piece_dofs[(e, 0)] = np.array(dofs + [left])
    composite_x = np.array(xs)

    field_pieces, field_comp = [], []
    for i in range(regions.nfields):
        lo, hi = regions.region(i)
        pieces = []
        for e in mesh.elements_overlapping(lo, hi):
            for br in ((0, 1) if e in mesh.cut else (0,)):
                plo, phi = _piece_bounds(mesh, e, br)
                if plo < hi and phi > lo:
                    pieces.append(Piece(e, br, plo, phi))
        field_pieces.append(pieces)
        comp = np.unique(np.concatenate([piece_dofs[(p.element, p.branch)] for p in pieces]))
        field_comp.append(comp)
    offsets = np.concatenate([[0], np.cumsum([len(c) for c in field_comp])])
    dm = DofMap(mesh, k, coupling, piece_dofs, composite_x, owner, field_pieces, field_comp, offsets,
                frame=frame)

    dm.dirichlet = []
    for i in range(regions.nfields):
        ids = []
        for clo, chi in regions.collars(i):
            for p in field_pieces[i]:
                if p.lo >= clo - 1e-12 * h and p.hi <= chi + 1e-12 * h:
                    ids.extend(piece_dofs[(p.element, p.branch)])
        dm.dirichlet.append(dm.gid(i, np.unique(np.array(ids, dtype=int))) if ids else np.zeros(0, dtype=int))

    if coupling == "identified":
        for m in range(len(regions.interfaces)):
            left_set = {(p.element, p.branch) for p in field_pieces[m]}
            shared = set()
            for p in field_pieces[m + 1]:
                if (p.element, p.branch) in left_set:
                    shared.update(piece_dofs[(p.element, p.branch)].tolist())
            for c in sorted(shared):
                dm.identification.append((int(dm.gid(m + 1, c)), int(dm.gid(m, c)), m))
    return dm
