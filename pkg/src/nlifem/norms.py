"""Energy, L2 and sampled max-norm errors, convergence rates and the Poincare constant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assembly import PairTerm, QuadSettings, Solution, _clipped_pieces, _local_basis, _piece_arrays, bilinear_terms, term_panels
from .geometry import DofMap, RegionMap
from .quadrature import gauss_rule, interval_points, triangle_points


@dataclass
class ErrorRecord:
    h: float
    deltas: tuple
    err_energy: float
    err_l2: float
    err_max: float
    components: dict = field(default_factory=dict)
    err_energy_omega: float = float("nan")


def _field_values(dofmap: DofMap, coeffs: np.ndarray, fld: int, pieces: list, x: np.ndarray,
                  exact=None) -> np.ndarray:
    """Discrete field (minus exact, if given) at points x[t, q] lying in pieces[t]."""
    e, br, g = _piece_arrays(dofmap, fld, pieces)
    val = np.einsum("tqa,ta->tq", _local_basis(dofmap, e, br, x), coeffs[g])
    if exact is not None:
        val = val - np.asarray(exact[fld](x.ravel())).reshape(x.shape)
    return val


def term_energy(dofmap: DofMap, coeffs: np.ndarray, term: PairTerm, exact=None, order: int = 10) -> float:
    """c * iint (w(x) - w(y))^2 gamma over the term's zones, w = u_h - exact."""
    batch = term_panels(dofmap, term)
    if len(batch.tris) == 0:
        return 0.0
    pts, w = triangle_points(batch.tris, order)
    x, y = pts[..., 0], pts[..., 1]
    wx = _field_values(dofmap, coeffs, term.field, batch.xpiece, x, exact)
    wy = _field_values(dofmap, coeffs, term.field, batch.ypiece, y, exact)
    vals = term.coeff * (wx - wy) ** 2 * term.kernel.of_distance(x - y) * w
    return math.fsum(vals.ravel())


def _omega_terms(regions: RegionMap) -> list:
    terms = []
    for i in range(regions.nfields):
        om = regions.omega(i)
        terms.append(PairTerm(i, om, om, regions.kernels[i], 0.5, f"domain{i}"))
    return terms


def energy_components(dofmap: DofMap, coeffs: np.ndarray, exact=None, quad: QuadSettings = QuadSettings(),
                      omega_only: bool = False) -> dict:
    """Squared components: 'delta{i}' per subdomain and 'gamma{m}' per interface."""
    regions = dofmap.regions
    comps = {}
    dom = _omega_terms(regions) if omega_only else bilinear_terms(regions, interfaces=False)
    for t in dom:
        comps[f"delta{t.field}"] = term_energy(dofmap, coeffs, t, exact, quad.error_order)
    for t in bilinear_terms(regions, domains=False):
        key = "gamma" + t.label[5:].rstrip("LRJ")
        comps[key] = comps.get(key, 0.0) + term_energy(dofmap, coeffs, t, exact, quad.error_order)
    return comps


def energy_norm(dofmap: DofMap, coeffs: np.ndarray, quad: QuadSettings = QuadSettings()) -> float:
    return math.sqrt(math.fsum(energy_components(dofmap, coeffs, None, quad).values()))


def energy_error(sol: Solution, exact: Sequence, quad: QuadSettings = QuadSettings(),
                 omega_only: bool = False) -> float:
    comps = energy_components(sol.dofmap, sol.coeffs, exact, quad, omega_only)
    return math.sqrt(math.fsum(comps.values()))


def l2_error(sol: Solution, exact: Sequence | None, quad: QuadSettings = QuadSettings()) -> float:
    """L2 norm over the union of subdomains of u_h - exact (or of u_h when exact is None)."""
    dm = sol.dofmap
    total = []
    for i in range(dm.nfields):
        clipped = _clipped_pieces(dm.field_pieces[i], dm.regions.omega(i))
        if not clipped:
            continue
        x, w = interval_points(np.array([c[1] for c in clipped]), np.array([c[2] for c in clipped]),
                               gauss_rule(quad.error_order))
        e = _field_values(dm, sol.coeffs, i, [c[0] for c in clipped], x, exact)
        total.append(math.fsum((e * e * w).ravel()))
    return math.sqrt(math.fsum(total))


def max_error(sol: Solution, exact: Sequence | None, samples_per_element: int = 16) -> float:
    """Sampled sup over the subdomains, at interior midpoints of each cut piece."""
    dm = sol.dofmap
    t = (np.arange(samples_per_element) + 0.5) / samples_per_element
    best = 0.0
    for i in range(dm.nfields):
        clipped = _clipped_pieces(dm.field_pieces[i], dm.regions.omega(i))
        if not clipped:
            continue
        lo = np.array([c[1] for c in clipped])[:, None]
        hi = np.array([c[2] for c in clipped])[:, None]
        x = lo + (hi - lo) * t
        e = _field_values(dm, sol.coeffs, i, [c[0] for c in clipped], x, exact)
        best = max(best, float(np.max(np.abs(e))))
    return best


def rate(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    if err_coarse <= 0 or err_fine <= 0:
        return float("nan")
    return math.log(err_coarse / err_fine) / math.log(ratio)


def rates(errors: Sequence[float], ratio: float = 2.0) -> list:
    """Rates between consecutive entries; the first entry gets None."""
    return [None] + [rate(a, b, ratio) for a, b in zip(errors, errors[1:])]


def poincare_constant(regions: RegionMap) -> float:
    """C with ||v||_L2 <= C ||v||_delta for v vanishing on the collars."""
    return math.sqrt(sum((hi - lo) ** 2 / (2.0 * k.sigma)
                         for (lo, hi), k in zip((regions.omega(i) for i in range(regions.nfields)), regions.kernels)))


def error_record(sol: Solution, exact: Sequence, h: float, quad: QuadSettings = QuadSettings(),
                 samples_per_element: int = 16) -> ErrorRecord:
    comps = energy_components(sol.dofmap, sol.coeffs, exact, quad)
    eom = energy_error(sol, exact, quad, omega_only=True)
    return ErrorRecord(h, sol.dofmap.regions.deltas, math.sqrt(math.fsum(comps.values())),
                       l2_error(sol, exact, quad), max_error(sol, exact, samples_per_element), comps, eom)
