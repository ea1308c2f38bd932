"""``agpchaos`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .lattice_models import (
    ALLOWED_TAGS,
    FAMILY_COUPLINGS,
    Family,
    HamiltonianSpec,
    ModelError,
    build_hamiltonian,
    write_matrix_cache,
)
from .sweep import (
    PRESETS,
    ConfigError,
    SeriesConfig,
    SweepConfig,
    emit_plot_script,
    figure_presets,
    fit_rows,
    read_rows,
    run_sweep,
)

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2

# flag -> coupling name
COUPLING_FLAGS = {"delta": "delta", "hx": "hx", "hz": "hz", "defect": "eps_d", "nnn": "delta2"}


def parse_sizes(values: list[str]) -> list[int]:
    """Accept ``8 10 12`` as well as ranges like ``8..16`` or ``8..16..2``."""
    sizes = []
    for v in values:
        if ".." in v:
            parts = [int(p) for p in v.split("..")]
            step = parts[2] if len(parts) == 3 else 1
            sizes += list(range(parts[0], parts[1] + 1, step))
        else:
            sizes.append(int(v))
    return sorted(set(sizes))


def _model_args(p: argparse.ArgumentParser, sizes: bool = True) -> None:
    p.add_argument("--model", required=True, choices=[f.value for f in Family])
    if sizes:
        p.add_argument("--L", nargs="+", required=True, help="sizes, e.g. 8 10 or 8..16")
    p.add_argument("--delta", type=float)
    p.add_argument("--hx", type=float)
    p.add_argument("--hz", type=float)
    p.add_argument("--defect", type=float, help="defect energy eps_d")
    p.add_argument("--nnn", type=float, help="next-nearest-neighbour coupling delta2")
    p.add_argument("--sector", default="full", choices=["full", "zero_mag"])


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="tags", nargs="+", required=True, help="deformation tag(s)")
    p.add_argument("--mu-rule", dest="mu_rules", nargs="+", default=["L/D"],
                   help="cutoff rules: L/D, L^-1/2/D, L^2/D or a number")
    p.add_argument("--window", type=float, default=0.5, help="central fraction of the spectrum")
    _common_run(p)


def _common_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--cache", choices=["readwrite", "read", "off"], default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--allow-large", action="store_true", help="lift the desk-scale size limits")
    p.add_argument("--plot", action="store_true", help="also write a gnuplot script")


def _couplings(args) -> dict[str, float]:
    allowed = FAMILY_COUPLINGS[Family(args.model)]
    out = {}
    for flag, name in COUPLING_FLAGS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if name not in allowed:
            raise ModelError(f"--{flag} does not apply to {args.model}")
        out[name] = value
    return out


def _single_series_config(args, **toggles) -> SweepConfig:
    series = SeriesConfig(
        name=args.model, family=args.model, couplings=_couplings(args), tags=args.tags,
        L=parse_sizes(args.L), sector=args.sector, cutoffs=args.mu_rules, window=args.window,
        **toggles,
    )
    return SweepConfig([series], out=args.out or "results")


def _apply_overrides(cfg: SweepConfig, args) -> SweepConfig:
    if args.out:
        cfg.out = args.out
    if args.threads:
        cfg.threads = args.threads
    if args.cache_dir:
        cfg.cache_dir = args.cache_dir
    if args.cache:
        cfg.cache = args.cache
    if args.allow_large:
        cfg.allow_large = True
    return cfg


def _execute(cfg: SweepConfig, plot: bool) -> int:
    result = run_sweep(cfg, log=lambda msg: print(msg, file=sys.stderr))
    tables = [p for k, p in result.files.items() if k in ("agp", "rstats", "spectral", "zdist")]
    if plot and tables:
        script = emit_plot_script(tables, result.out_dir / "plots.gp", result.files["fits"])
        print(f"plot script: {script}", file=sys.stderr)
    for k in ("agp", "rstats"):
        if k in result.files:
            print(result.files[k].read_text(), end="")
    if result.failures:
        print(f"{len(result.failures)} failed statistics, see {result.files['manifest']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_build(args) -> int:
    spec = HamiltonianSpec(args.model, args.L, _couplings(args), sector=args.sector)
    H = build_hamiltonian(spec)
    out = Path(args.out or f"H_{spec.family.value}_L{spec.L}.bin")
    write_matrix_cache(out, spec, H)
    print(f"{out}: dimension {H.shape[0]}, {H.nbytes / 2**20:.1f} MiB")
    return EXIT_OK


def cmd_stat(args, **toggles) -> int:
    return _execute(_apply_overrides(_single_series_config(args, **toggles), args), args.plot)


def cmd_sweep(args) -> int:
    return _execute(_apply_overrides(SweepConfig.load(args.config), args), args.plot)


def cmd_preset(args) -> int:
    cfg = _apply_overrides(figure_presets(args.name), args)
    if args.write_config:
        Path(args.write_config).write_text(cfg.to_json() + "\n")
    if not args.run:
        if not args.write_config:
            print(cfg.to_json())
        return EXIT_OK
    return _execute(cfg, args.plot)


def cmd_fit(args) -> int:
    rows = read_rows(args.table)
    if args.series:
        rows = [r for r in rows if r["series"] == args.series]
    if not rows:
        raise ConfigError(f"no rows to fit in {args.table}")
    fits = fit_rows(rows, args.kind, args.quantity, args.skip, args.parity)
    text = json.dumps(fits, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_PARTIAL if any("error" in v for v in fits.values()) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agpchaos", description="AGP norms and chaos diagnostics for spin chains")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="write a Hamiltonian matrix to a binary file")
    _model_args(p, sizes=False)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    for name, toggles, helptext in (
        ("agp", {}, "regularized AGP norms"),
        ("spectral", {"agp": False, "spectral": True}, "smoothed spectral function"),
        ("zdist", {"agp": False, "z_distribution": True}, "fidelity-susceptibility distributions"),
    ):
        p = sub.add_parser(name, help=helptext)
        _model_args(p)
        _run_args(p)
        p.set_defaults(func=lambda a, t=toggles: cmd_stat(a, **t))

    p = sub.add_parser("rstats", help="mean level-spacing ratio")
    _model_args(p)
    p.add_argument("--window", type=float, default=0.5)
    _common_run(p)
    p.set_defaults(func=lambda a: cmd_stat(a, agp=False, r_stats=True), tags=None, mu_rules=["L/D"])

    p = sub.add_parser("sweep", help="run a JSON sweep config")
    p.add_argument("config")
    _common_run(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="show or run a figure preset")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--run", action="store_true")
    p.add_argument("--write-config")
    _common_run(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("fit", help="scaling fits of an agp.csv table")
    p.add_argument("table")
    p.add_argument("--kind", choices=["exponential", "linear", "crossover"], default="exponential")
    p.add_argument("--quantity", choices=["rescaled", "norm"], default="rescaled")
    p.add_argument("--skip", type=int, default=0, help="drop this many smallest sizes")
    p.add_argument("--parity", action="store_true", help="allow an even/odd-L offset in exponential fits")
    p.add_argument("--series")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "rstats":
        # level statistics do not depend on a deformation; any allowed tag will do
        args.tags = [ALLOWED_TAGS[Family(args.model)][0].value]
    try:
        return args.func(args)
    except (ConfigError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
