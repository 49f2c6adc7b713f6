"""Scripted numerical studies: h-refinement, coupled refinement, local limit,
flux consistency and maximum-principle checks."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .assembly import QuadSettings, solve_problem
from .geometry import build_dof_map, build_mesh
from .norms import ErrorRecord, error_record, l2_error, max_error, rate
from .operators import (Example, get_example, ProblemData, ScalarField, constant_field, custom_example,
                        flux_functional, local_flux_jump, manufacture_data, scalar_field)

STUDY_KINDS = ("fixed_delta", "coupled", "local_limit", "flux_consistency", "max_principle")
RATE_TOL = 0.3


@dataclass
class StudyConfig:
    example: str = "ex1"
    kind: str = "fixed_delta"
    k: int = 1
    levels: list = field(default_factory=lambda: [2, 3, 4, 5])
    delta: list | None = None
    delta_multiples: list | None = None
    coupling: str = "identified"
    quad: QuadSettings = field(default_factory=QuadSettings)
    samples_per_element: int = 16
    # delta sweeps (local_limit, flux_consistency)
    delta0: float = 0.125
    halvings: int = 4
    ratios: list | None = None
    h_ratio: int = 8
    boundary: str = "corrected"
    flux_data: str = "layer"
    fields: str = "branches"
    # max_principle
    seeds: int = 20
    seed: int = 0
    max_deltas: list = field(default_factory=lambda: [0.25, 0.125])
    custom: dict | None = None
    kernel: dict | None = None

    def problem(self) -> Example:
        if self.example == "custom":
            if not self.custom:
                raise ValueError("custom example needs a 'custom' section")
            ex = custom_example(**self.custom)
        else:
            ex = get_example(self.example)
        if self.kernel:
            coeffs = self.kernel.get("coefficients")
            ex = replace(ex, kernel=self.kernel.get("kind", ex.kernel),
                         kernel_params=tuple(tuple(c) for c in coeffs) if coeffs else None)
        return ex

    def deltas_for(self, h: float) -> tuple:
        if self.delta_multiples is not None:
            return tuple(m * h for m in self.delta_multiples)
        if self.delta is not None:
            return tuple(self.delta)
        return tuple(self.problem().default_deltas)

    def sweep_ratios(self) -> tuple:
        n = self.problem().nfields
        if self.ratios is not None:
            return tuple(self.ratios)
        return tuple(float(2 ** i) if n == 2 else float(i + 1) for i in range(n))


@dataclass
class StudyReport:
    config: StudyConfig
    x_label: str
    rows: list
    flags: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    expected: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NLIFEM_THREADS", "1")))
    except ValueError:
        return 1


def _map_levels(fn, cfg: StudyConfig, items: Sequence) -> list:
    """Evaluate fn(cfg, item) for all items, in parallel when NLIFEM_THREADS > 1."""
    workers = min(_threads(), len(items))
    if workers <= 1:
        return [fn(cfg, it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [cfg] * len(items), items))


def solve_level(cfg: StudyConfig, h: float, deltas: Sequence[float]):
    ex = cfg.problem()
    regions = ex.regions(deltas)
    dm = build_dof_map(build_mesh(regions, h), cfg.k, cfg.coupling)
    data = ex.data(regions)
    sol = solve_problem(dm, data, cfg.quad)
    return sol, data


def _refinement_level(cfg: StudyConfig, level: int) -> ErrorRecord:
    h = 2.0 ** -level
    sol, data = solve_level(cfg, h, cfg.deltas_for(h))
    return error_record(sol, data.exact, h, cfg.quad, cfg.samples_per_element)


def _with_rates(records: list) -> list:
    rows = []
    for j, rec in enumerate(records):
        row = {"level": j, "h": rec.h, "deltas": list(rec.deltas),
               "err_energy": rec.err_energy, "err_l2": rec.err_l2, "err_max": rec.err_max,
               "err_energy_omega": rec.err_energy_omega, "components": dict(rec.components)}
        for key in ("energy", "l2", "max", "energy_omega"):
            name = "err_" + key
            row["rate_" + key] = None if j == 0 else rate(getattr(records[j - 1], name), getattr(rec, name))
        rows.append(row)
    return rows


def _check_levels(levels: Sequence[int]) -> None:
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing with at least two entries")
    if any(b - a != 1 for a, b in zip(levels, levels[1:])):
        warnings.warn("levels are not consecutive; rates assume halving", RuntimeWarning, stacklevel=3)


def _rate_flags(rows: list, key: str, target: float, n_last: int) -> dict:
    rs = [r["rate_" + key] for r in rows[1:]][-n_last:]
    return {f"rate_{key}[{len(rows) - len(rs) + j}]~{target:g}": abs(x - target) <= RATE_TOL
            for j, x in enumerate(rs)}


def run_fixed_delta(cfg: StudyConfig) -> StudyReport:
    _check_levels(cfg.levels)
    records = _map_levels(_refinement_level, cfg, list(cfg.levels))
    rows = _with_rates(records)
    for row, lev in zip(rows, cfg.levels):
        row["level"] = lev
    rep = StudyReport(cfg, "h", rows, expected={"energy": cfg.k + 1, "l2": cfg.k + 1})
    rep.flags.update(_rate_flags(rows, "energy", cfg.k + 1, 2))
    rep.flags.update(_rate_flags(rows, "l2", cfg.k + 1, 2))
    for row in rows:
        if row["h"] > min(row["deltas"]) + 1e-14:
            rep.notes.append(f"h={row['h']:g} exceeds min(delta); outside the h <= min(delta) regime")
    return rep


def run_coupled(cfg: StudyConfig) -> StudyReport:
    if cfg.delta_multiples is None:
        raise ValueError("coupled studies need delta_multiples (delta_i = M_i h)")
    _check_levels(cfg.levels)
    records = _map_levels(_refinement_level, cfg, list(cfg.levels))
    rows = _with_rates(records)
    for row, lev in zip(rows, cfg.levels):
        row["level"] = lev
    rep = StudyReport(cfg, "h", rows, expected={"energy": cfg.k, "l2": cfg.k + 1})
    rep.flags.update(_rate_flags(rows, "energy", cfg.k, 1))
    rep.flags.update(_rate_flags(rows, "l2", cfg.k + 1, 1))
    return rep


# ---------------------------------------------------------------- local limit

def local_limit_data(ex: Example, regions, boundary: str = "corrected", flux_data: str = "layer") -> ProblemData:
    """Nonlocal data built from the local interface problem solved by ex's branches.

    boundary: "corrected" uses g = g0 + (x - x_b) u0'(x_b), "plain" uses g = g0.
    flux_data: "layer" uses the local source away from the interfaces and the
    nonlocal operator and flux of the local solution within one horizon of
    them; "literal" sets psi to the local flux jump; "normalized" divides the
    local flux jump by the width of Gamma.
    """
    if boundary not in ("corrected", "plain"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    u0 = ex.composite()
    n = regions.nfields
    sig = [k.sigma for k in regions.kernels]
    f0 = [scalar_field(lambda x, i=i: -sig[i] * np.asarray(ex.branches[i][2](x), dtype=float)) for i in range(n)]

    g = []
    for i in range(n):
        x0 = ex.a if i == 0 else ex.b
        br = ex.branches[0] if i == 0 else ex.branches[-1]
        val = float(br[0](np.array(x0)))
        slope = float(br[1](np.array(x0))) if boundary == "corrected" else 0.0
        g.append(scalar_field(lambda x, v=val, s=slope, x0=x0: v + s * (np.asarray(x) - x0)))

    phi = [constant_field(0.0) for _ in regions.interfaces]
    jumps = [local_flux_jump(float(ex.branches[m][1](np.array(al))), float(ex.branches[m + 1][1](np.array(al))),
                             (sig[m], sig[m + 1])) for m, al in enumerate(regions.interfaces)]
    if flux_data == "literal":
        psi = [(constant_field(j), constant_field(j)) for j in jumps]
        return ProblemData(regions, f0, g, phi, psi)
    if flux_data == "normalized":
        psi = []
        for m, j in enumerate(jumps):
            z = regions.zones(m)
            c = j / (z.gamma[1] - z.gamma[0])
            psi.append((constant_field(c), constant_field(c)))
        return ProblemData(regions, f0, g, phi, psi)
    if flux_data != "layer":
        raise ValueError(f"unknown flux_data mode {flux_data!r}")

    md = manufacture_data([u0] * n, regions)
    f = []
    for i in range(n):
        d = regions.kernels[i].delta
        near = [al for al in regions.interfaces]

        def fi(x, i=i, d=d, near=near):
            x = np.asarray(x, dtype=float)
            out = np.asarray(f0[i](x), dtype=float).copy()
            mask = np.zeros(x.shape, dtype=bool)
            for al in near:
                mask |= np.abs(x - al) < d
            if np.any(mask):
                out[mask] = md.f[i](x[mask])
            return out
        brk = set(md.f[i].kinks)
        for al in near:
            brk.update((al - d, al + d))
        f.append(scalar_field(fi, breakpoints=tuple(sorted(brk))))
    return ProblemData(regions, f, g, md.phi, md.psi)


def _sweep_deltas(cfg: StudyConfig) -> list:
    ratios = cfg.sweep_ratios()
    return [tuple(cfg.delta0 * 2.0 ** -j * r for r in ratios) for j in range(cfg.halvings + 1)]


def _local_limit_level(cfg: StudyConfig, deltas) -> dict:
    ex = cfg.problem()
    h = deltas[0] / cfg.h_ratio
    regions = ex.regions(deltas)
    dm = build_dof_map(build_mesh(regions, h), cfg.k, cfg.coupling)
    data = local_limit_data(ex, regions, cfg.boundary, cfg.flux_data)
    sol = solve_problem(dm, data, cfg.quad)
    u0 = [ex.composite()] * regions.nfields
    return {"h": h, "deltas": list(deltas), "err_max": max_error(sol, u0, cfg.samples_per_element),
            "err_l2": l2_error(sol, u0, cfg.quad)}


def fitted_order(xs: Sequence[float], errs: Sequence[float]) -> float:
    """Least-squares slope of log(err) against log(x)."""
    lx, le = np.log(np.asarray(xs)), np.log(np.asarray(errs))
    return float(np.polyfit(lx, le, 1)[0])


def run_local_limit(cfg: StudyConfig) -> StudyReport:
    sweep = _sweep_deltas(cfg)
    rows = _map_levels(_local_limit_level, cfg, sweep)
    for j, row in enumerate(rows):
        row["level"] = j
        for key in ("max", "l2"):
            row["rate_" + key] = None if j == 0 else rate(rows[j - 1]["err_" + key], row["err_" + key])
    finest = rows[-1]["rate_max"]
    rep = StudyReport(cfg, "delta", rows)
    rep.notes.append(f"fitted order (max norm) {fitted_order([r['deltas'][0] for r in rows], [r['err_max'] for r in rows]):.3f}")
    if cfg.boundary == "corrected":
        rep.expected = {"max": 2}
        rep.flags["order_max~2"] = abs(finest - 2.0) <= RATE_TOL
    else:
        rep.expected = {"max": 1}
        rep.flags["order_max<1.5"] = finest < 1.5
    return rep


def run_h_plateau(cfg: StudyConfig, deltas: Sequence[float], levels: Sequence[int]) -> list:
    """Max-norm distance to the local solution at fixed delta under h-refinement."""
    ex = cfg.problem()
    regions = ex.regions(deltas)
    u0 = [ex.composite()] * regions.nfields
    out = []
    for lev in levels:
        dm = build_dof_map(build_mesh(regions, 2.0 ** -lev), cfg.k, cfg.coupling)
        sol = solve_problem(dm, local_limit_data(ex, regions, cfg.boundary, cfg.flux_data), cfg.quad)
        out.append(max_error(sol, u0, cfg.samples_per_element))
    return out


# ---------------------------------------------------------------- flux consistency

def _linear_field(slope: float, intercept: float = 0.0) -> ScalarField:
    return scalar_field(lambda x: slope * x + intercept, lambda x: np.full_like(x, slope),
                        lambda x: np.zeros_like(x))


def flux_pair(ex: Example, mode: str, interface: int = 0):
    """(u1, u2, u1'(alpha), u2'(alpha)) for the flux consistency sweep."""
    al = ex.interfaces[interface]
    if mode == "branches":
        u1, u2 = ex.branch(interface), ex.branch(interface + 1)
        return u1, u2, u1.d1(al), u2.d1(al)
    if mode == "linear":
        u = _linear_field(0.7, 0.2)
        return u, u, 0.7, 0.7
    if mode == "constant":
        u = constant_field(1.3)
        return u, u, 0.0, 0.0
    raise ValueError(f"unknown flux field mode {mode!r}")


def _flux_level(cfg: StudyConfig, deltas) -> dict:
    ex = cfg.problem()
    regions = ex.regions(deltas)
    u1, u2, d1, d2 = flux_pair(ex, cfg.fields)
    k1, k2 = regions.kernels[0], regions.kernels[1]
    val = flux_functional(u1, u2, k1, k2, regions)
    target = local_flux_jump(d1, d2, (k1.sigma, k2.sigma))
    return {"h": None, "deltas": list(deltas), "value": val, "target": target,
            "err_flux": abs(val - target)}


def run_flux_consistency(cfg: StudyConfig) -> StudyReport:
    sweep = _sweep_deltas(cfg)
    rows = _map_levels(_flux_level, cfg, sweep)
    for j, row in enumerate(rows):
        row["level"] = j
        row["rate_flux"] = None if j == 0 else rate(rows[j - 1]["err_flux"], row["err_flux"])
    rep = StudyReport(cfg, "delta", rows, expected={"flux": 2})
    if cfg.fields == "branches":
        rep.flags["order_flux~2"] = abs(rows[-1]["rate_flux"] - 2.0) <= RATE_TOL
    else:
        rep.flags["flux_exact"] = max(r["err_flux"] for r in rows) <= 1e-12
    return rep


# ---------------------------------------------------------------- maximum principle

def _node_max(sol, regions) -> float:
    """Max of u_h over grid nodes in each subdomain and both sides of each interface."""
    nodes = sol.dofmap.mesh.nodes
    best = -np.inf
    for i in range(regions.nfields):
        lo, hi = regions.omega(i)
        xs = nodes[(nodes >= lo) & (nodes <= hi)]
        eps = 1e-12 * sol.dofmap.mesh.h
        xs = np.concatenate([xs, [lo + eps, hi - eps]])
        best = max(best, float(np.max(sol.evaluate(i, xs))))
    return best


def max_principle_problem(regions, f_vals, psi_vals, g_vals) -> ProblemData:
    """Piecewise-constant data: f_i, psi_m (both zones) and g on each collar."""
    n = regions.nfields
    f = [constant_field(v) for v in f_vals]
    g = [constant_field(g_vals[0])] + [constant_field(0.0)] * (n - 2) + [constant_field(g_vals[-1])] if n > 1 \
        else [scalar_field(lambda x, a=regions.a, ga=g_vals[0], gb=g_vals[-1]: np.where(np.asarray(x) <= a, ga, gb))]
    phi = [constant_field(0.0) for _ in regions.interfaces]
    psi = [(constant_field(p), constant_field(p)) for p in psi_vals]
    return ProblemData(regions, f, g, phi, psi)


def _mp_case(cfg: StudyConfig, case) -> dict:
    ex = cfg.problem()
    deltas, fv, pv, gv, label = case
    regions = ex.regions(deltas)
    h = min(deltas) / 4
    dm = build_dof_map(build_mesh(regions, h), cfg.k, cfg.coupling)
    sol = solve_problem(dm, max_principle_problem(regions, fv, pv, gv), cfg.quad)
    umax = _node_max(sol, regions)
    bmax = max(gv)
    umaxabs = max(abs(umax), max_error(sol, None, cfg.samples_per_element))
    denom = max(abs(v) for v in gv) + max(abs(v) for v in fv) + (max(abs(v) for v in pv) if pv else 0.0)
    return {"label": label, "h": h, "deltas": list(deltas), "u_max": float(umax), "boundary_max": float(bmax),
            "ratio": float(umaxabs / denom) if denom > 0 else 0.0, "ok": bool(umax <= bmax + 1e-9)}


def max_principle_cases(cfg: StudyConfig) -> list:
    ex = cfg.problem()
    n, m = ex.nfields, ex.nfields - 1
    ratios = cfg.sweep_ratios()
    cases = []
    d0 = tuple(cfg.max_deltas[0] * r for r in ratios)
    cases.append((d0, [-1.0] * n, [0.0] * m, [0.0, 0.0], "f=-1,g=0"))
    cases.append((d0, [0.0] * n, [0.0] * m, [5.0, 5.0], "g=5"))
    rng = np.random.default_rng(cfg.seed)
    for d in cfg.max_deltas:
        deltas = tuple(d * r for r in ratios)
        for s in range(cfg.seeds):
            fv = list(-rng.uniform(0.0, 1.0, n))
            pv = list(-rng.uniform(0.0, 1.0, m))
            gv = list(rng.uniform(-1.0, 1.0, 2))
            cases.append((deltas, fv, pv, gv, f"random d={d:g} seed={s}"))
    return cases


def run_max_principle(cfg: StudyConfig) -> StudyReport:
    cases = max_principle_cases(cfg)
    rows = _map_levels(_mp_case, cfg, cases)
    for j, r in enumerate(rows):
        r["level"] = j
    rep = StudyReport(cfg, "case", rows)
    rep.flags["nodal_max<=boundary_max"] = all(r["ok"] for r in rows)
    const = [r for r in rows if r["label"] == "g=5"]
    rep.flags["constant_reproduction"] = all(abs(r["u_max"] - 5.0) < 1e-9 for r in const)
    by_delta = {}
    for r in rows:
        if r["label"].startswith("random"):
            by_delta.setdefault(r["deltas"][0], []).append(r["ratio"])
    worst = {d: max(v) for d, v in by_delta.items()}
    if worst:
        rep.notes.append("max a-priori ratio per delta_1: " + ", ".join(f"{d:g}: {v:.4f}" for d, v in sorted(worst.items())))
        # bounded uniformly: shrinking delta must not inflate the ratio beyond twice its coarsest value
        coarsest = worst[max(worst)]
        rep.flags["apriori_ratio_uniform"] = bool(max(worst.values()) <= 2.0 * coarsest)
    return rep


RUNNERS = {
    "fixed_delta": run_fixed_delta,
    "coupled": run_coupled,
    "local_limit": run_local_limit,
    "flux_consistency": run_flux_consistency,
    "max_principle": run_max_principle,
}


def run_study(cfg: StudyConfig) -> StudyReport:
    if cfg.kind not in RUNNERS:
        raise ValueError(f"unknown study kind {cfg.kind!r}")
    return RUNNERS[cfg.kind](cfg)


def config_dict(cfg: StudyConfig) -> dict:
    return asdict(cfg)


# reference table configurations
TABLES = {
    "table1": dict(example="ex1", kind="fixed_delta", delta=[0.25, 0.5], levels=[2, 3, 4, 5]),
    "table2": dict(example="ex1", kind="coupled", delta_multiples=[2, 4], levels=[3, 4, 5, 6]),
    "table3": dict(example="ex2", kind="fixed_delta", delta=[0.25, 0.5], levels=[2, 3, 4, 5]),
    "table4": dict(example="ex2", kind="coupled", delta_multiples=[2, 4], levels=[3, 4, 5, 6]),
    "table5": dict(example="ex3", kind="fixed_delta", delta=[0.125, 0.25, 0.5], levels=[3, 4, 5, 6]),
    "table6": dict(example="ex3", kind="coupled", delta_multiples=[1, 2, 3], levels=[3, 4, 5, 6]),
}

# reference values for comparison: (k, level) -> (energy, l2)
REFERENCE = {
    "table1": {(1, 5): (2.82e-04, 7.94e-05)},
    "table3": {(3, 5): (3.79e-09, 1.58e-09)},
}


def table_config(name: str, k: int, **overrides) -> StudyConfig:
    if name not in TABLES:
        raise KeyError(f"unknown table {name!r}; choose from {sorted(TABLES)}")
    kw = dict(TABLES[name])
    kw.update(overrides)
    return StudyConfig(k=k, **kw)
