"""Nonlocal, local and interface-flux operators; manufactured data; example problems."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .geometry import RegionMap, build_regions
from .kernels import KernelSpec, make_kernel
from .quadrature import decompose_pair, gauss_rule, integrate_pair, interval_points

Func = Callable[[np.ndarray], np.ndarray]

INNER_ORDER = 16


def _wrap(f: Func) -> Func:
    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()
    return g


@dataclass(frozen=True)
class ScalarField:
    """Piecewise smooth function of one variable.

    ``pieces`` holds (value, first, second) derivative callables, with piece j
    covering (breakpoints[j-1], breakpoints[j]]; a field with a single piece has
    no breakpoints. Missing derivative callables are None.
    """

    pieces: tuple
    breakpoints: tuple = ()
    extra_breaks: tuple = ()

    def piece_index(self, x) -> np.ndarray:
        return np.searchsorted(np.asarray(self.breakpoints, dtype=float), x, side="left")

    def _apply(self, which: int, x):
        x = np.asarray(x, dtype=float)
        if len(self.pieces) == 1:
            f = self.pieces[0][which]
            if f is None:
                raise ValueError("derivative not available for this field")
            return _wrap(f)(x)
        idx = self.piece_index(x)
        out = np.zeros(x.shape)
        for j, pc in enumerate(self.pieces):
            mask = idx == j
            if np.any(mask):
                if pc[which] is None:
                    raise ValueError("derivative not available for this field")
                out[mask] = _wrap(pc[which])(x[mask])
        return out

    def __call__(self, x):
        out = self._apply(0, x)
        return float(out) if out.ndim == 0 else out

    def d1(self, x):
        out = self._apply(1, x)
        return float(out) if out.ndim == 0 else out

    def d2(self, x):
        out = self._apply(2, x)
        return float(out) if out.ndim == 0 else out

    @property
    def kinks(self) -> tuple:
        return tuple(self.breakpoints) + tuple(self.extra_breaks)

    def branch(self, anchor: float) -> "ScalarField":
        """The smooth piece containing anchor, extended to the whole line."""
        j = int(self.piece_index(anchor))
        return ScalarField((self.pieces[j],))

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return combine(self, other, 1.0, -1.0)


def scalar_field(f: Func, d1: Func | None = None, d2: Func | None = None,
                 breakpoints: Sequence[float] = ()) -> ScalarField:
    return ScalarField(((f, d1, d2),), (), tuple(float(b) for b in breakpoints))


def piecewise_field(breaks: Sequence[float], pieces: Sequence[tuple]) -> ScalarField:
    if len(pieces) != len(breaks) + 1:
        raise ValueError("need one more piece than breakpoints")
    pcs = tuple(tuple(p) + (None,) * (3 - len(p)) for p in pieces)
    return ScalarField(pcs, tuple(float(b) for b in breaks))


def constant_field(c: float) -> ScalarField:
    c = float(c)
    return scalar_field(lambda x: np.full_like(x, c), lambda x: np.zeros_like(x), lambda x: np.zeros_like(x))


def combine(u: ScalarField, w: ScalarField, a: float, b: float) -> ScalarField:
    """a*u + b*w, merging breakpoints."""
    brk = tuple(sorted(set(u.breakpoints) | set(w.breakpoints)))
    if not brk:
        pu, pw = u.pieces[0], w.pieces[0]
        return ScalarField((_lin_piece(pu, pw, a, b),), (), tuple(sorted(set(u.kinks) | set(w.kinks))))
    mids = _piece_anchors(brk)
    pieces = []
    for m in mids:
        pu = u.pieces[int(u.piece_index(m))]
        pw = w.pieces[int(w.piece_index(m))]
        pieces.append(_lin_piece(pu, pw, a, b))
    return ScalarField(tuple(pieces), brk, tuple(sorted(set(u.extra_breaks) | set(w.extra_breaks))))


def _piece_anchors(brk: Sequence[float]) -> list:
    brk = list(brk)
    out = [brk[0] - 1.0]
    out += [0.5 * (p + q) for p, q in zip(brk, brk[1:])]
    out.append(brk[-1] + 1.0)
    return out


def _lin_piece(pu, pw, a, b):
    def mk(fu, fw):
        if fu is None or fw is None:
            return None
        return lambda x: a * _wrap(fu)(x) + b * _wrap(fw)(x)
    return tuple(mk(pu[j], pw[j]) for j in range(3))


# ---------------------------------------------------------------- operators

def _intervals(region) -> list:
    if len(region) == 2 and np.isscalar(region[0]):
        return [(float(region[0]), float(region[1]))]
    return [(float(lo), float(hi)) for lo, hi in region]


def nested_integral(x, lo: float, hi: float, delta: float, breaks: Sequence[float],
                    integrand: Callable, order: int = INNER_ORDER, offsets: Sequence[float] = ()) -> np.ndarray:
    """For each x, the integral over y in (lo, hi) cap (x - delta, x + delta) of integrand(x, y).

    Panels are split at x, x +- delta, x + each offset and at every break
    inside the window.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    left = np.maximum(lo, x - delta)
    right = np.minimum(hi, x + delta)
    cols = [left, right, x] + [np.full_like(x, b) for b in breaks] + [x + o for o in offsets]
    cand = np.column_stack(cols)
    cand = np.clip(cand, left[:, None], np.maximum(left, right)[:, None])
    cand.sort(axis=1)
    a, b = cand[:, :-1], cand[:, 1:]
    y, w = interval_points(a, b, gauss_rule(order))
    vals = integrand(x[:, None, None], y)
    return np.sum(vals * w, axis=(1, 2))


def apply_nonlocal(u: ScalarField, k: KernelSpec, region, x):
    """L u(x) = int_region [u(x) - u(y)] gamma_delta(x, y) dy."""
    xa = np.asarray(x, dtype=float)
    xf = np.atleast_1d(xa)
    ux = np.asarray(u(xf))
    total = np.zeros_like(xf)
    for lo, hi in _intervals(region):
        total += nested_integral(
            xf, lo, hi, k.delta, u.kinks,
            lambda xx, yy: (ux[:, None, None] - u(yy)) * k.of_distance(xx - yy))
    return float(total[0]) if xa.ndim == 0 else total.reshape(xa.shape)


def apply_local(u: ScalarField, sigma: float, x):
    """Local limit operator -sigma u''(x)."""
    return -sigma * np.asarray(u.d2(x)) if np.ndim(x) else -sigma * u.d2(x)


def flux_at(u1: ScalarField, u2: ScalarField, k1: KernelSpec, k2: KernelSpec,
            regions: RegionMap, x, interface: int = 0):
    """Pointwise interface flux F(u1, u2)(x) for x in Gamma; zero elsewhere.

    u1, u2 are the left and right fields of the interface and k1, k2 their kernels.
    """
    z = regions.zones(interface)
    xa = np.asarray(x, dtype=float)
    xf = np.atleast_1d(xa)
    out = np.zeros_like(xf)
    jr = (xf > z.j_right[0]) & (xf <= z.j_right[1])
    jl = (xf > z.j_left[0]) & (xf < z.j_left[1])
    d = max(k1.delta, k2.delta)
    # the kernel difference also kinks at |x - y| = min(delta)
    offs = (-k1.delta, k1.delta, -k2.delta, k2.delta)
    if np.any(jr):
        xr = xf[jr]
        u2x, u1x = np.asarray(u2(xr)), np.asarray(u1(xr))
        val = np.zeros_like(xr)
        if z.omega_j is not None:
            val += nested_integral(xr, *z.omega_j, k2.delta, u2.kinks,
                                   lambda xx, yy: (u2x[:, None, None] - u2(yy)) * k2.of_distance(xx - yy))
        val += 0.5 * nested_integral(
            xr, *z.j_left, d, u1.kinks,
            lambda xx, yy: (u1x[:, None, None] - u1(yy))
            * (k2.of_distance(xx - yy) - k1.of_distance(xx - yy)), offsets=offs)
        out[jr] = val
    if np.any(jl):
        xl = xf[jl]
        u2x = np.asarray(u2(xl))
        out[jl] = 0.5 * nested_integral(
            xl, *z.j_right, d, u2.kinks,
            lambda xx, yy: (u2x[:, None, None] - u2(yy))
            * (k1.of_distance(xx - yy) - k2.of_distance(xx - yy)), offsets=offs)
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def _zone_breaks(regions: RegionMap, interface: int) -> list:
    z = regions.zones(interface)
    ends = {z.alpha, *z.gamma, *z.j_left, *z.j_right}
    if z.omega_j is not None:
        ends.update(z.omega_j)
    out = set(ends)
    for e in ends:
        for d in (z.delta_left, z.delta_right):
            out.update((e - d, e + d))
    return sorted(out)


def flux_paired(u1: ScalarField, u2: ScalarField, k1: KernelSpec, k2: KernelSpec,
                regions: RegionMap, v: ScalarField | None = None, interface: int = 0,
                method: str = "decomposed", order: int = 12) -> float:
    """(F(u1, u2), v) over Gamma.

    ``direct`` integrates the pointwise flux against v; ``decomposed`` sums the
    five double integrals obtained by splitting the kernel difference terms.
    """
    v = v if v is not None else constant_field(1.0)
    z = regions.zones(interface)
    if method == "direct":
        brk = [b for b in _zone_breaks(regions, interface)] + list(v.kinks) + list(u1.kinks) + list(u2.kinks)
        total = 0.0
        for iv in (z.j_right, z.j_left):
            cuts = sorted({iv[0], iv[1], *(c for c in brk if iv[0] < c < iv[1])})
            xq, wq = interval_points(np.array(cuts[:-1]), np.array(cuts[1:]), gauss_rule(INNER_ORDER))
            vals = flux_at(u1, u2, k1, k2, regions, xq.ravel(), interface) * v(xq.ravel())
            total += math.fsum(vals * wq.ravel())
        return total
    if method != "decomposed":
        raise ValueError(f"unknown method {method!r}")
    cuts = list(u1.kinks) + list(u2.kinks) + list(v.kinks)

    def term(xiv, yiv, u, k, c):
        if xiv is None or yiv is None:
            return 0.0
        pans = decompose_pair(xiv, yiv, k.delta, cuts)
        return c * integrate_pair(pans, lambda x, y: (u(x) - u(y)) * k.of_distance(x - y) * v(x), order)

    return math.fsum(flux_terms(z, u1, u2, k1, k2, term))


def flux_terms(z, u1, u2, k1, k2, term) -> list:
    """The five contributions I_1..I_5 of the paired flux, each built by ``term``."""
    return [
        term(z.j_right, z.omega_j, u2, k2, 1.0),
        term(z.j_right, z.j_left, u1, k2, 0.5),
        term(z.j_right, z.j_left, u1, k1, -0.5),
        term(z.j_left, z.j_right, u2, k1, 0.5),
        term(z.j_left, z.j_right, u2, k2, -0.5),
    ]


def _linear(slope: float) -> ScalarField:
    return scalar_field(lambda x: slope * x, lambda x: np.full_like(x, slope), lambda x: np.zeros_like(x))


@lru_cache(maxsize=64)
def _calibration(prof1, prof2, ratio: float) -> tuple[float, float]:
    """Paired flux of unit-slope linear fields (left only, right only) at delta_R = 1."""
    k1 = KernelSpec(prof1, ratio)
    k2 = KernelSpec(prof2, 1.0)
    reg = build_regions(-4.0, 4.0, [0.0], [k1, k2])
    zero = _linear(0.0)
    c1 = flux_paired(_linear(1.0), zero, k1, k2, reg)
    c2 = flux_paired(zero, _linear(1.0), k1, k2, reg)
    return c1, c2


def flux_calibration(k1: KernelSpec, k2: KernelSpec) -> float:
    """Normalising constant lam with (F(u1, u2), 1) ~ lam (s1 u1' - s2 u2') for linear fields.

    The paired flux of linear fields with slopes t1, t2 is c1 t1 + c2 t2 with
    c1, c2 depending only on delta_1/delta_2; lam averages c1/s1 and -c2/s2,
    which coincide for equal second moments.
    """
    c1, c2 = _calibration(k1.profile, k2.profile, round(k1.delta / k2.delta, 14))
    return 0.5 * (c1 / k1.sigma - c2 / k2.sigma)


def flux_functional(u1: ScalarField, u2: ScalarField, k1: KernelSpec, k2: KernelSpec,
                    regions: RegionMap, v: ScalarField | None = None, interface: int = 0,
                    method: str = "decomposed") -> float:
    """Paired flux divided by the linear-field calibration constant.

    With identical kernels on both sides the flux vanishes identically and the
    calibration constant is zero; the raw paired value (zero) is returned.
    """
    val = flux_paired(u1, u2, k1, k2, regions, v, interface, method)
    lam = flux_calibration(k1, k2)
    return val if abs(lam) < 1e-14 else val / lam


def local_flux_jump(du1: float, du2: float, sigmas: Sequence[float]) -> float:
    return sigmas[0] * du1 - sigmas[1] * du2


# ---------------------------------------------------------------- data

@dataclass
class ProblemData:
    """Right-hand sides for all fields.

    psi[m] = (psi on (alpha - delta_R, alpha) tested by the left field,
              psi on (alpha, alpha + delta_L) tested by the right field).
    """

    regions: RegionMap
    f: list
    g: list
    phi: list
    psi: list
    exact: list | None = None


def _operator_breaks(u: ScalarField, regions: RegionMap, i: int) -> tuple:
    d = regions.kernels[i].delta
    lo, hi = regions.region(i)
    base = set(u.kinks) | {lo, hi}
    out = set(base)
    for c in base:
        out.update((c - d, c + d))
    return tuple(sorted(out))


def nonlocal_field(u: ScalarField, k: KernelSpec, region, breaks=()) -> ScalarField:
    return scalar_field(lambda x: apply_nonlocal(u, k, region, x), breakpoints=breaks)


def manufacture_data(exact: Sequence[ScalarField], regions: RegionMap) -> ProblemData:
    """f_i = L_i u_i, g_i = u_i, phi = u_{m+1} - u_m and psi = F(u_m, u_{m+1})."""
    exact = list(exact)
    n = regions.nfields
    if len(exact) != n:
        raise ValueError(f"need {n} exact fields, got {len(exact)}")
    f = [nonlocal_field(exact[i], regions.kernels[i], regions.region(i), _operator_breaks(exact[i], regions, i))
         for i in range(n)]
    g = list(exact)
    phi, psi = [], []
    for m in range(len(regions.interfaces)):
        ul, ur = exact[m], exact[m + 1]
        kl, kr = regions.kernels[m], regions.kernels[m + 1]
        phi.append(ur - ul)
        kinks = set(ul.kinks) | set(ur.kinks)
        brk = set(_zone_breaks(regions, m)) | kinks
        for c in kinks:
            for d in (kl.delta, kr.delta):
                brk.update((c - d, c + d))
        brk = tuple(sorted(brk))

        def fl(x, ul=ul, ur=ur, kl=kl, kr=kr, m=m):
            return flux_at(ul, ur, kl, kr, regions, x, m)
        psi.append((scalar_field(fl, breakpoints=brk), scalar_field(fl, breakpoints=brk)))
    return ProblemData(regions, f, g, phi, psi, exact)


# ---------------------------------------------------------------- examples

@dataclass(frozen=True)
class Example:
    """A manufactured interface problem.

    ``branches[i]`` is (u, u', u'') of the smooth solution on subdomain i; the
    composite solution uses branch i on (alpha_{i-1}, alpha_i] and extends by
    constants into the Dirichlet collars.
    """

    name: str
    a: float
    b: float
    interfaces: tuple
    kernel: str
    branches: tuple
    default_deltas: tuple = ()
    description: str = ""
    kernel_params: tuple | None = None

    @property
    def nfields(self) -> int:
        return len(self.interfaces) + 1

    def branch(self, i: int) -> ScalarField:
        return scalar_field(*self.branches[i])

    def composite(self) -> ScalarField:
        first, last = self.branches[0], self.branches[-1]
        ca = float(_wrap(first[0])(np.array(self.a)))
        cb = float(_wrap(last[0])(np.array(self.b)))
        zero = lambda x: np.zeros_like(x)
        pieces = [(lambda x, c=ca: np.full_like(x, c), zero, zero)]
        pieces += [tuple(br) for br in self.branches]
        pieces.append((lambda x, c=cb: np.full_like(x, c), zero, zero))
        return piecewise_field((self.a, *self.interfaces, self.b), pieces)

    def kernels(self, deltas: Sequence[float]) -> list:
        return [make_kernel(self.kernel, self.kernel_params, delta=d) for d in deltas]

    def regions(self, deltas: Sequence[float]) -> RegionMap:
        return build_regions(self.a, self.b, self.interfaces, self.kernels(deltas))

    def data(self, regions: RegionMap) -> ProblemData:
        u = self.composite()
        return manufacture_data([u] * regions.nfields, regions)

    def local_jumps(self) -> list:
        sig = make_kernel(self.kernel, self.kernel_params).sigma
        out = []
        for m, al in enumerate(self.interfaces):
            d1 = float(_wrap(self.branches[m][1])(np.array(al)))
            d2 = float(_wrap(self.branches[m + 1][1])(np.array(al)))
            out.append(local_flux_jump(d1, d2, (sig, sig)))
        return out


_PI = math.pi

EXAMPLES = {
    "ex1": Example(
        "ex1", 0.0, 1.0, (_PI / 6,), "triangular",
        ((np.sin, np.cos, lambda x: -np.sin(x)),
         (lambda x: 1.5 - 2 * np.sin(x), lambda x: -2 * np.cos(x), lambda x: 2 * np.sin(x))),
        (0.25, 0.5), "continuous solution, flux jump, triangular kernel"),
    "ex2": Example(
        "ex2", 1.0, 2.0, (_PI / 2,), "constant",
        ((np.exp, np.exp, np.exp),
         (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x))),
        (0.25, 0.5), "solution jump at the interface, constant kernel"),
    "ex3": Example(
        "ex3", 0.0, 2.0, (_PI / 4, 2 * _PI / 5), "parabolic",
        ((lambda x: 0.5 * np.cos(_PI * x), lambda x: -0.5 * _PI * np.sin(_PI * x),
          lambda x: -0.5 * _PI**2 * np.cos(_PI * x)),
         (lambda x: 1 - np.sin(_PI * x), lambda x: -_PI * np.cos(_PI * x),
          lambda x: _PI**2 * np.sin(_PI * x)),
         (lambda x: x * (1 - x) + 1, lambda x: 1 - 2 * x, lambda x: np.full_like(x, -2.0))),
        (0.125, 0.25, 0.5), "two interfaces, three horizons, parabolic kernel"),
}

_SAFE = {name: getattr(np, name) for name in
         ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "arctan", "abs", "pi", "e")}


def expression(expr: str) -> Func:
    """Compile a numpy expression in x (e.g. ``"sin(pi*x) + x**2"``)."""
    code = compile(expr, "<expr>", "eval")
    for name in code.co_names:
        if name not in _SAFE and name != "x":
            raise ValueError(f"name {name!r} not allowed in expression {expr!r}")

    def f(x):
        return eval(code, {"__builtins__": {}}, {**_SAFE, "x": np.asarray(x, dtype=float)})
    return f


def _fd(f: Func, order: int, h: float = 1e-4) -> Func:
    if order == 1:
        return lambda x: (f(x + h) - f(x - h)) / (2 * h)
    return lambda x: (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)


def custom_example(a: float, b: float, interfaces: Sequence[float], kernel: str,
                   branches: Sequence[str], name: str = "custom") -> Example:
    """Example from expression strings; derivatives by central differences."""
    if len(branches) != len(interfaces) + 1:
        raise ValueError("need one branch expression per subdomain")
    brs = []
    for s in branches:
        f = _wrap(expression(s))
        brs.append((f, _fd(f, 1), _fd(f, 2)))
    return Example(name, float(a), float(b), tuple(float(al) for al in interfaces), kernel, tuple(brs))


def get_example(name: str) -> Example:
    try:
        return EXAMPLES[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
