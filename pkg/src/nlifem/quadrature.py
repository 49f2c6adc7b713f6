"""Gauss rules, kernel-band panel decomposition and batched triangle quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class GaussRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=64)
def gauss_rule(n: int) -> GaussRule:
    if n < 1:
        raise ValueError("Gauss order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussRule(n, x, w)


def stiffness_order(k: int, kernel_degree: int) -> int:
    """Points per direction making stiffness entries exact for polynomial kernels."""
    return math.ceil((2 * k + kernel_degree + 4) / 2)


def interval_points(lo, hi, rule: GaussRule):
    """Mapped nodes and weights for (batched) intervals; shapes (..., n)."""
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (rule.nodes + 1.0), half * rule.weights


def integrate_interval(interval: tuple[float, float], breakpoints: Iterable[float],
                       integrand: Callable[[np.ndarray], np.ndarray], rule: GaussRule) -> float:
    """Composite Gauss over interval, split at breakpoints lying inside it."""
    lo, hi = float(interval[0]), float(interval[1])
    if hi <= lo:
        return 0.0
    cuts = sorted({lo, hi, *(float(c) for c in breakpoints if lo < c < hi)})
    a = np.array(cuts[:-1])
    b = np.array(cuts[1:])
    x, w = interval_points(a, b, rule)
    vals = np.asarray(integrand(x.ravel()), dtype=float).reshape(x.shape)
    return math.fsum((vals * w).ravel())


@dataclass(frozen=True)
class Panel2D:
    """Convex polygon in the (x, y) plane, counter-clockwise vertices."""
    vertices: np.ndarray

    @property
    def area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def triangles(self) -> np.ndarray:
        """Fan triangulation from the first vertex, shape (n-2, 3, 2)."""
        v = self.vertices
        return np.stack([np.stack([v[0], v[i], v[i + 1]]) for i in range(1, len(v) - 1)])


def _clip(poly: list, a: float, b: float, c: float) -> list:
    """Keep the part of poly with a*x + b*y <= c (Sutherland-Hodgman, one edge)."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0.0:
            out.append(p)
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _poly_area(poly: list) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        s += poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]
    return 0.5 * s


def clip_rectangle(x0: float, x1: float, y0: float, y1: float, delta: float,
                   split_diagonal: bool = True) -> list:
    """Band {|x - y| <= delta} of the rectangle, split along y = x; list of vertex lists."""
    if y0 - x1 >= delta or x0 - y1 >= delta:
        return []
    rect = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    band = _clip(_clip(rect, -1.0, 1.0, delta), 1.0, -1.0, delta)   # y - x <= d, x - y <= d
    if len(band) < 3:
        return []
    if split_diagonal:
        pieces = [_clip(band, -1.0, 1.0, 0.0), _clip(band, 1.0, -1.0, 0.0)]
    else:
        pieces = [band]
    tol = 1e-15 * max(1.0, (x1 - x0) * (y1 - y0))
    return [p for p in pieces if len(p) >= 3 and _poly_area(p) > tol]


def decompose_pair(ka: Sequence[float], kb: Sequence[float], delta: float,
                   extra_cuts: Iterable[float] = ()) -> list[Panel2D]:
    """Panels tiling the kernel band over ka x kb, split at y = x and at extra cuts."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    cuts = list(extra_cuts)
    xs = sorted({ka[0], ka[1], *(c for c in cuts if ka[0] < c < ka[1])})
    ys = sorted({kb[0], kb[1], *(c for c in cuts if kb[0] < c < kb[1])})
    panels = []
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            for poly in clip_rectangle(x0, x1, y0, y1, delta):
                panels.append(Panel2D(np.array(poly, dtype=float)))
    return panels


def fan_triangles(polys: Iterable[list]) -> np.ndarray:
    """Stack fan triangulations of many polygons, shape (T, 3, 2)."""
    tris = []
    for p in polys:
        for i in range(1, len(p) - 1):
            tris.append((p[0], p[i], p[i + 1]))
    if not tris:
        return np.zeros((0, 3, 2))
    return np.array(tris, dtype=float)


@lru_cache(maxsize=32)
def _collapsed_reference(n: int):
    """Collapsed tensor rule on the triangle (0,0),(1,0),(1,1) written as x = u, y = u v."""
    g = gauss_rule(n)
    t = 0.5 * (g.nodes + 1.0)
    w = 0.5 * g.weights
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    return u.ravel(), v.ravel(), (wu * wv * u).ravel()


def triangle_points(tris: np.ndarray, n: int):
    """Quadrature points (T, n*n, 2) and weights (T, n*n) on a batch of triangles.

    The map P0 + u (P1 - P0) + u v (P2 - P1) has Jacobian u |det[P1-P0, P2-P1]|,
    which the reference weights already carry the u factor of.
    """
    u, v, w = _collapsed_reference(n)
    p0, p1, p2 = tris[:, 0, :], tris[:, 1, :], tris[:, 2, :]
    e1 = p1 - p0
    e2 = p2 - p1
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = (p0[:, None, :] + u[None, :, None] * e1[:, None, :]
           + (u * v)[None, :, None] * e2[:, None, :])
    return pts, det[:, None] * w[None, :]


def integrate_pair(panels: Sequence[Panel2D], integrand: Callable, rule: GaussRule | int) -> float:
    """Integrate integrand(x, y) over the union of panels."""
    n = rule.n if isinstance(rule, GaussRule) else int(rule)
    if not panels:
        return 0.0
    tris = np.concatenate([p.triangles() for p in panels])
    pts, w = triangle_points(tris, n)
    vals = np.asarray(integrand(pts[..., 0], pts[..., 1]), dtype=float)
    return math.fsum((vals * w).ravel())
