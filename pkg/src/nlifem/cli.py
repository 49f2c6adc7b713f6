"""Command-line front end: ``nlifem <subcommand> [options] [--section.key=value ...]``.

Exit codes: 0 all checks pass, 1 a numerical acceptance flag failed, 2 bad
configuration, arguments or output path.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .assembly import dump_matrix
from .config import ConfigError, apply_overrides, build_config, load_raw, parse_value, table_raw
from .geometry import GeometryError
from .kernels import KernelError
from .norms import error_record
from .report import RunManifest, combined_table_csv, config_hash, fmt, report_csv, write_report
from .studies import REFERENCE, TABLES, run_study, solve_level

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (default: output.dir or .)")
    p.add_argument("--prefix", help="output file prefix")
    p.add_argument("--no-svg", action="store_true", help="skip the SVG chart")
    p.add_argument("--png", action="store_true", help="also render a matplotlib PNG")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nlifem", description="Unfitted FEM for 1D nonlocal interface problems.")
    ap.add_argument("--version", action="version", version=f"nlifem {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one manufactured problem and print its error record")
    p.add_argument("--config")
    p.add_argument("--example")
    p.add_argument("--k", type=int)
    p.add_argument("--h", type=parse_value, help="mesh size, e.g. 2^-4 or 0.0625")
    p.add_argument("--delta", type=float, nargs="+")
    p.add_argument("--coupling", choices=("identified", "decoupled"))
    p.add_argument("--dump-matrix", metavar="PATH", help="write the assembled matrix as row col value lines")

    p = sub.add_parser("convergence", help="h-refinement study (fixed or coupled horizons)")
    _common(p)
    p.add_argument("--example")
    p.add_argument("--kind", choices=("fixed_delta", "coupled"))
    p.add_argument("--k", type=int)
    p.add_argument("--levels", type=int, nargs="+")
    p.add_argument("--delta", type=float, nargs="+")
    p.add_argument("--multiples", type=int, nargs="+", help="coupled horizons delta_i = M_i h")

    p = sub.add_parser("local-limit", help="distance to the local solution as the horizons shrink")
    _common(p)
    p.add_argument("--example")
    p.add_argument("--k", type=int)
    p.add_argument("--halvings", type=int)
    p.add_argument("--boundary", choices=("corrected", "plain"))
    p.add_argument("--flux-data", choices=("layer", "literal", "normalized"))

    p = sub.add_parser("flux-check", help="nonlocal flux functional against the local flux jump")
    _common(p)
    p.add_argument("--example")
    p.add_argument("--halvings", type=int)
    p.add_argument("--fields", choices=("branches", "linear", "constant"))

    p = sub.add_parser("max-principle", help="discrete maximum principle on random sign-definite data")
    _common(p)
    p.add_argument("--example")
    p.add_argument("--seeds", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("reproduce", help="rerun a reference table configuration")
    _common(p)
    p.add_argument("table", choices=sorted(TABLES))
    p.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3])
    return ap


def _split_overrides(argv: Sequence[str]) -> tuple:
    """Separate ``--section.key=value`` tokens from ordinary arguments."""
    rest, over = [], []
    for tok in argv:
        key = tok[2:].partition("=")[0]
        if tok.startswith("--") and "=" in tok and "." in key:
            over.append(tok)
        else:
            rest.append(tok)
    return rest, over


def _raw_for(args, kind: str | None) -> dict:
    raw = load_raw(args.config) if getattr(args, "config", None) else {}
    if kind is not None:
        raw["kind"] = kind
    study = raw.setdefault("study", {})
    for flag, key in (("example", "example"), ("k", "k"), ("coupling", "coupling")):
        if getattr(args, flag, None) is not None:
            raw[key] = getattr(args, flag)
    if getattr(args, "kind", None):
        raw["kind"] = args.kind
    if getattr(args, "levels", None):
        raw.pop("mesh", None)
        raw["levels"] = args.levels
    if getattr(args, "delta", None):
        raw["delta"] = args.delta
        raw.pop("delta_multiples", None)
    if getattr(args, "multiples", None):
        raw["delta_multiples"] = args.multiples
        raw.pop("delta", None)
    for flag in ("halvings", "boundary", "flux_data", "fields", "seeds", "seed"):
        if getattr(args, flag, None) is not None:
            study[flag] = getattr(args, flag)
    if not study:
        raw.pop("study")
    if raw.get("kind") == "local_limit":
        raw.setdefault("k", 3)
    return raw


def _outputs(args, out: dict, default_prefix: str) -> tuple:
    d = Path(args.out or out["dir"])
    if not d.exists():
        try:
            d.mkdir(parents=True)
        except OSError as err:
            raise ConfigError(f"cannot create output directory {d}: {err.strerror}") from None
    prefix = args.prefix or out["prefix"] or default_prefix
    svg = out["svg"] and not args.no_svg
    png = out["png"] or args.png
    return d, prefix, svg, png


def _print_report(rep) -> None:
    sys.stdout.write(report_csv(rep))
    for note in rep.notes:
        print(f"# note: {note}")
    for name, ok in rep.flags.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")


def _cmd_solve(args, overrides) -> int:
    raw = _raw_for(args, "fixed_delta")
    if args.h is not None:
        if not isinstance(args.h, (int, float)):
            raise ConfigError(f"--h {args.h!r} is not a number or 2^-e")
        raw.pop("levels", None)
        raw["mesh"] = {"h": float(args.h)}
    raw = apply_overrides(raw, overrides)
    if "levels" not in raw and "mesh" not in raw:
        raw["mesh"] = {"h": 2.0 ** -4}
    cfg, _ = build_config(raw, min_levels=1)
    h = 2.0 ** -cfg.levels[-1]
    sol, data = solve_level(cfg, h, cfg.deltas_for(h))
    rec = error_record(sol, data.exact, h, cfg.quad, cfg.samples_per_element)
    if args.dump_matrix:
        dump_matrix(sol.system.matrix, args.dump_matrix)
    nd = len(rec.deltas)
    print(",".join(["h"] + [f"delta{i + 1}" for i in range(nd)]
                   + ["err_energy", "err_l2", "err_max", "err_energy_omega", "residual"]))
    print(",".join(fmt(v) for v in [rec.h, *rec.deltas, rec.err_energy, rec.err_l2, rec.err_max,
                                    rec.err_energy_omega, sol.residual]))
    return EXIT_OK


def _cmd_study(args, overrides, kind: str | None) -> int:
    raw = apply_overrides(_raw_for(args, kind), overrides)
    cfg, out = build_config(raw)
    d, prefix, svg, png = _outputs(args, out, f"{cfg.example}_{cfg.kind}_k{cfg.k}")
    rep = run_study(cfg)
    _print_report(rep)
    has_norms = any(key.startswith("err_") for key in rep.rows[0])
    man = write_report(rep, d / f"{prefix}.csv", d / f"{prefix}.svg" if svg and has_norms else None,
                       d / f"{prefix}.png" if png and has_norms else None)
    if out["manifest"]:
        man.write(d / f"{prefix}_manifest.json")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_reproduce(args, overrides) -> int:
    reports, files, summary = [], [], {}
    cfgs = []
    for k in args.degrees:
        cfg, out = build_config(apply_overrides(table_raw(args.table, k), overrides))
        cfgs.append(cfg)
    d, prefix, svg, png = _outputs(args, out, args.table)
    for cfg in cfgs:
        rep = run_study(cfg)
        reports.append(rep)
        stem = d / f"{prefix}_k{cfg.k}"
        man = write_report(rep, f"{stem}.csv", f"{stem}.svg" if svg else None, f"{stem}.png" if png else None)
        files += man.outputs
        summary.update({f"k{cfg.k}:{name}": bool(ok) for name, ok in rep.flags.items()})
        print(f"# k = {cfg.k}")
        _print_report(rep)
    combined = d / f"{prefix}.csv"
    combined.write_text(combined_table_csv(reports))
    files.append(str(combined))
    for rep in reports:
        for (k, lev), (pe, pl) in REFERENCE.get(args.table, {}).items():
            row = next((r for r in rep.rows if rep.config.k == k and r["level"] == lev), None)
            if row is not None:
                print(f"# reference k={k} h=2^-{lev}: energy {pe:.2e} (here {row['err_energy']:.3e}), "
                      f"L2 {pl:.2e} (here {row['err_l2']:.3e})")
    passed = all(summary.values())
    man = RunManifest(__version__, config_hash({"table": args.table, "degrees": args.degrees,
                                                "overrides": list(overrides)}),
                      datetime.now(timezone.utc).isoformat(timespec="seconds"), files, summary, passed)
    man.write(d / f"{prefix}_manifest.json")
    return EXIT_OK if passed else EXIT_FAIL


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    rest, overrides = _split_overrides(argv)
    try:
        args = build_parser().parse_args(rest)
        if args.command is None:
            build_parser().print_help()
            return EXIT_CONFIG
        if args.command == "solve":
            return _cmd_solve(args, overrides)
        if args.command == "reproduce":
            return _cmd_reproduce(args, overrides)
        kind = {"convergence": None, "local-limit": "local_limit", "flux-check": "flux_consistency",
                "max-principle": "max_principle"}[args.command]
        return _cmd_study(args, overrides, kind)
    except (ConfigError, GeometryError, KernelError) as err:
        print(f"nlifem: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"nlifem: error: {err}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
