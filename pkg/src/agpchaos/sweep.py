"""Declarative parameter sweeps: configs, presets, orchestration and output files.

A sweep is a list of series.  Each series fixes a model family, its
couplings and a set of deformation tags, and scans chain lengths and
(optionally) the strength of one coupling.  Every (L, strength) point runs
the pipeline once; rows are written in a fixed order so that repeated runs
produce byte-identical CSV files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .agp_core import CutoffRule
from .analytic_free import free_alpha
from .eigensolver import SOLVER_VERSION
from .lattice_models import (
    ALLOWED_TAGS,
    Family,
    HamiltonianSpec,
    ModelError,
    Sector,
    Tag,
    build_sector_basis,
)
from .pipeline import compute_point
from .scaling_analysis import (
    FitError,
    ScalingSeries,
    crossover_analysis,
    fit_exponential,
    fit_polynomial,
)
from .spectral_stats import write_rows

SCHEMA_VERSION = 1
CACHE_POLICIES = ("readwrite", "read", "off")
FIT_KINDS = ("exponential", "linear", "crossover")

AGP_COLUMNS = (
    "series", "family", "sector", "L", "D", "tag", "perturbation", "strength",
    "cutoff", "mu", "norm_sq", "rescaled_norm_sq", "bound",
)
RSTATS_COLUMNS = ("series", "family", "sector", "L", "D", "perturbation", "strength", "mean_r", "n_ratios")
SPECTRAL_COLUMNS = (
    "series", "L", "perturbation", "strength", "tag", "omega_center", "mean_weight", "count",
)
ZDIST_COLUMNS = ("series", "L", "perturbation", "strength", "tag", "z_center", "prob_density", "count")

# largest sizes run without an explicit override
GUARDRAIL_L = {Sector.FULL: 14, Sector.ZERO_MAG: 18}


class ConfigError(ValueError):
    pass


@dataclass
class SeriesConfig:
    name: str
    family: str
    couplings: dict[str, float]
    tags: list[str]
    L: list[int]
    sector: str = "full"
    perturbation: str | None = None
    strengths: list[float] = field(default_factory=list)
    cutoffs: list[str] = field(default_factory=lambda: ["L/D"])
    agp: bool = True
    spectral: bool = False
    r_stats: bool = False
    z_distribution: bool = False
    window: float = 0.5
    analytic: bool = False
    fit: str | None = None
    fit_quantity: str = "rescaled"
    fit_skip: int = 0
    fit_parity: bool = False

    def points(self) -> list[tuple[int, float]]:
        """(L, strength) pairs, ordered by L then strength."""
        strengths = self.strengths if self.perturbation else [0.0]
        return sorted((L, float(s)) for L in self.L for s in strengths)

    def spec(self, L: int, strength: float) -> HamiltonianSpec:
        couplings = dict(self.couplings)
        if self.perturbation:
            couplings[self.perturbation] = strength
        return HamiltonianSpec(self.family, L, couplings, sector=self.sector)

    def statistics(self) -> list[str]:
        names = []
        for tag in self.tags:
            if self.agp:
                names.append(f"agp:{tag}")
            if self.spectral:
                names.append(f"spectral:{tag}")
            if self.z_distribution:
                names.append(f"zdist:{tag}")
        if self.r_stats:
            names.append("rstats")
        return names

    def validate(self, allow_large: bool = False) -> None:
        if not self.L:
            raise ConfigError(f"series {self.name!r}: empty L list")
        if not self.tags:
            raise ConfigError(f"series {self.name!r}: no deformation tags")
        if self.perturbation and not self.strengths:
            raise ConfigError(f"series {self.name!r}: perturbation without strengths")
        if self.fit is not None and self.fit not in FIT_KINDS:
            raise ConfigError(f"series {self.name!r}: unknown fit kind {self.fit!r}")
        if self.fit_parity and self.fit != "exponential":
            raise ConfigError(f"series {self.name!r}: fit_parity applies to exponential fits only")
        if self.fit_quantity not in ("rescaled", "norm"):
            raise ConfigError(f"series {self.name!r}: unknown fit quantity {self.fit_quantity!r}")
        if not self.statistics():
            raise ConfigError(f"series {self.name!r}: no statistic requested")
        for rule in self.cutoffs:
            CutoffRule.parse(rule)
        family = Family(self.family)
        for tag in self.tags:
            if Tag(tag) not in ALLOWED_TAGS[family]:
                raise ModelError(f"tag {tag} is not defined for {family.value}")
        if self.analytic:
            if family is not Family.TFIM_PERIODIC or self.tags != ["hx"]:
                raise ConfigError("the closed form covers only tfim_periodic with tag hx")
            if self.spectral or self.r_stats or self.z_distribution:
                raise ConfigError("the closed form provides only AGP norms")
            return
        # building each spec checks couplings, sector and L range
        for L, strength in self.points():
            self.spec(L, strength)
        limit = GUARDRAIL_L[Sector(self.sector)]
        too_big = [L for L in self.L if L > limit]
        if too_big and not allow_large:
            raise ConfigError(
                f"series {self.name!r}: L={max(too_big)} exceeds the {self.sector} limit {limit}; "
                "set allow_large to override"
            )


@dataclass
class SweepConfig:
    series: list[SeriesConfig]
    out: str = "results"
    threads: int = 1
    cache: str = "readwrite"
    cache_dir: str | None = None
    allow_large: bool = False
    name: str = ""
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}")
        if not self.series:
            raise ConfigError("no series in sweep")
        if self.cache not in CACHE_POLICIES:
            raise ConfigError(f"cache policy must be one of {CACHE_POLICIES}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        names = [s.name for s in self.series]
        if len(set(names)) != len(names):
            raise ConfigError("series names must be unique")
        for s in self.series:
            s.validate(self.allow_large)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        """Hash of everything that determines the results (not out, threads, caching)."""
        d = self.to_dict()
        for key in ("out", "threads", "cache", "cache_dir"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        series_fields = {f.name for f in dataclasses.fields(SeriesConfig)}
        series = []
        for item in data.pop("series", []):
            bad = set(item) - series_fields
            if bad:
                raise ConfigError(f"unknown series keys {sorted(bad)}")
            series.append(SeriesConfig(**item))
        return cls(series=series, **data)

    @classmethod
    def load(cls, path: str | Path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def projected_memory(series: SeriesConfig) -> int:
    """Peak bytes for the largest point: three dense D x D float64 matrices."""
    if series.analytic:
        return 0
    D = max(build_sector_basis(L, series.sector).dimension for L in series.L)
    return 3 * 8 * D * D


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

CHAOTIC_HX = (math.sqrt(5) + 5) / 8
CHAOTIC_HZ = (math.sqrt(5) + 1) / 4
WEAK = [0.0, 1e-3, 3e-3, 1e-2]


def _xxz_defect(name, tags, L, strengths, sector="zero_mag", **kw) -> SeriesConfig:
    return SeriesConfig(
        name, "xxz_defect", {"delta": 1.1}, tags, list(L), sector,
        perturbation="eps_d", strengths=list(strengths), **kw,
    )


def figure_presets(name: str) -> SweepConfig:
    """Desk-scale sweep reproducing the data behind one figure."""
    sizes = range(8, 17)
    if name == "fig1":
        series = [
            SeriesConfig("chaotic_ising", "ising", {"hx": CHAOTIC_HX, "hz": CHAOTIC_HZ}, ["hx"],
                         list(range(8, 14)), fit="exponential"),
            SeriesConfig("xxz", "xxz", {"delta": 1.1}, ["delta"], list(sizes), "zero_mag", fit="linear"),
            SeriesConfig("free_ising", "tfim_periodic", {"hx": 0.8}, ["hx"], list(range(8, 101)),
                         analytic=True),
        ]
    elif name == "fig2a":
        series = [_xxz_defect("xxz_defect", ["delta"], sizes, WEAK, fit="crossover", r_stats=True)]
    elif name == "fig2b":
        series = [
            SeriesConfig("ising", "ising", {"hx": 0.75}, ["hx"], list(range(8, 15)),
                         perturbation="hz", strengths=WEAK, fit="crossover"),
        ]
    elif name == "fig3":
        strengths = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0]
        series = [_xxz_defect("xxz_defect", ["delta"], [16], strengths, agp=False, r_stats=True)]
    elif name == "fig4":
        series = [
            _xxz_defect("xxz_defect", ["eps_d"], range(8, 13), [0.0], sector="full",
                        fit="exponential", fit_quantity="norm"),
            SeriesConfig("ising", "ising", {"hx": 0.75}, ["hz"], list(range(8, 13)),
                         perturbation="hz", strengths=[0.0], fit="exponential", fit_quantity="norm"),
        ]
    elif name == "fig5":
        series = [_xxz_defect("xxz_defect", ["delta"], [12, 14, 16], [0.0, 0.05], spectral=True)]
    elif name == "fig6":
        series = [
            _xxz_defect("integrable_point", ["eps_d"], [12, 14, 16], [0.0], spectral=True),
            _xxz_defect("ergodic_point", ["delta"], [12, 14, 16], [0.5], spectral=True),
        ]
    elif name == "fig7":
        # the tail laws need a cutoff well below the mean level spacing; L/D sits at it
        tails = dict(z_distribution=True, cutoffs=["L^-1/2/D"])
        series = [
            _xxz_defect("integrable_point", ["eps_d"], [16], [0.0], **tails),
            _xxz_defect("ergodic_point", ["delta"], [16], [0.5], **tails),
        ]
    elif name == "appA":
        series = [
            _xxz_defect("xxz_defect", ["delta"], sizes, WEAK[1:],
                        cutoffs=["L^-1/2/D", "L^2/D", "L/D"], fit="exponential", fit_skip=4),
        ]
    elif name == "appD":
        series = [
            SeriesConfig("xxz", "xxz", {}, ["delta"], list(range(8, 17)), "zero_mag",
                         perturbation="delta", strengths=[0.5, 0.8, 1.1, 1.5, 2.0], fit="linear"),
        ]
    elif name == "appE1":
        series = [
            SeriesConfig("xxz_nnn", "xxz_nnn", {"delta": 1.1}, ["delta"], list(sizes), "zero_mag",
                         perturbation="delta2", strengths=WEAK, fit="crossover"),
        ]
    elif name == "appE2":
        series = [
            SeriesConfig("xxz_nnn", "xxz_nnn", {"delta": 1.1}, ["delta2"], list(range(8, 14)),
                         perturbation="delta2", strengths=WEAK, fit="exponential"),
        ]
    elif name == "appF":
        # full space: the symmetry content alternates with the parity of L
        series = [
            SeriesConfig("xxz_nnn", "xxz_nnn", {"delta": 1.1, "delta2": 1.0}, ["delta", "delta2"],
                         list(range(8, 14)), fit="exponential", fit_parity=True),
            SeriesConfig("xxz_defect", "xxz_defect", {"delta": 1.1, "eps_d": 1.0}, ["delta", "eps_d"],
                         list(range(8, 14)), fit="exponential", fit_parity=True),
        ]
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return SweepConfig(series=series, out=f"results/{name}", name=name)


PRESETS = (
    "fig1", "fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6", "fig7",
    "appA", "appD", "appE1", "appE2", "appF",
)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


@dataclass
class PointOutcome:
    series: str
    L: int
    strength: float
    agp: list[tuple] = field(default_factory=list)
    rstats: list[tuple] = field(default_factory=list)
    spectral: list[tuple] = field(default_factory=list)
    zdist: list[tuple] = field(default_factory=list)
    zdist_fits: dict = field(default_factory=dict)
    status: dict[str, str] = field(default_factory=dict)  # statistic -> "ok" or error text
    seconds: float = 0.0
    cache_hit: bool = False


def _analytic_point(cfg: SeriesConfig, L: int, strength: float) -> PointOutcome:
    out = PointOutcome(cfg.name, L, strength)
    hx = strength if cfg.perturbation == "hx" else cfg.couplings.get("hx", 0.0)
    c = free_alpha(L, hx)
    out.agp.append((
        cfg.name, cfg.family, cfg.sector, L, 2**L, "hx", cfg.perturbation or "", strength,
        "analytic", 0.0, c.norm_sq, c.rescaled_norm_sq, math.nan,
    ))
    out.status["agp:hx"] = "ok"
    return out


def run_point(cfg: SeriesConfig, L: int, strength: float, cache_dir: str | None, cache_write: bool) -> PointOutcome:
    """Evaluate one sweep point; failures are captured, never raised."""
    start = time.perf_counter()
    try:
        if cfg.analytic:
            out = _analytic_point(cfg, L, strength)
        else:
            out = _numeric_point(cfg, L, strength, cache_dir, cache_write)
    except Exception as exc:  # recorded in the manifest
        out = PointOutcome(cfg.name, L, strength)
        msg = f"{type(exc).__name__}: {exc}"
        out.status = {name: msg for name in cfg.statistics()}
        out.status["_traceback"] = traceback.format_exc(limit=3)
    out.seconds = time.perf_counter() - start
    return out


def _numeric_point(cfg, L, strength, cache_dir, cache_write) -> PointOutcome:
    spec = cfg.spec(L, strength)
    cutoffs = [CutoffRule.parse(c) for c in cfg.cutoffs]
    res = compute_point(
        spec, cfg.tags, cutoffs,
        agp=cfg.agp, spectral=cfg.spectral, r_stats=cfg.r_stats, zdist=cfg.z_distribution,
        window=cfg.window, cache_dir=cache_dir, cache_write=cache_write,
    )
    out = PointOutcome(cfg.name, L, strength, cache_hit=res.cache_hit)
    pert = cfg.perturbation or ""
    key = (cfg.name, L, pert, strength)
    per_tag = cfg.agp or cfg.spectral or cfg.z_distribution
    for tag in cfg.tags if per_tag else []:
        tr = res.tags[tag]
        if cfg.agp:
            for rule in cfg.cutoffs:
                rk = str(CutoffRule.parse(rule))
                rep = tr.reports[rk]
                out.agp.append((
                    cfg.name, cfg.family, cfg.sector, L, res.D, tag, pert, strength,
                    rk, rep.mu, rep.norm_sq, rep.rescaled_norm_sq, tr.bound[rk],
                ))
            out.status[f"agp:{tag}"] = "ok"
        if cfg.spectral:
            sf = tr.spectral
            out.spectral += [
                (*key, tag, c, w, n) for c, w, n in zip(sf.bin_centers, sf.bin_mean_weight, sf.counts)
            ]
            out.status[f"spectral:{tag}"] = "ok"
        if cfg.z_distribution:
            if tr.zdist is None:
                out.status[f"zdist:{tag}"] = tr.zdist_error or "no distribution"
            else:
                zd = tr.zdist
                out.zdist += [
                    (*key, tag, c, p, n) for c, p, n in zip(zd.bin_centers, zd.density, zd.counts)
                ]
                out.zdist_fits[f"{cfg.name}/{tag}/L={L}/{pert}={strength!r}"] = {
                    "gamma": zd.gamma, "fit_window": list(zd.fit_window), "samples": zd.sample_size,
                }
                out.status[f"zdist:{tag}"] = "ok"
    if cfg.r_stats:
        lv = res.levels
        out.rstats.append((cfg.name, cfg.family, cfg.sector, L, res.D, pert, strength, lv.mean_r, lv.n_used))
        out.status["rstats"] = "ok"
    return out


def _run_task(args):
    return run_point(*args)


@dataclass
class SweepResult:
    out_dir: Path
    files: dict[str, Path]
    failures: list[dict]
    manifest: dict

    @property
    def ok(self) -> bool:
        return not self.failures


def run_sweep(config: SweepConfig, log=print) -> SweepResult:
    """Run every point of ``config`` and write CSV, JSON and manifest files.

    Files in ``config.out``: ``agp.csv``, ``rstats.csv``, ``spectral.csv``,
    ``zdist.csv`` (each only when requested), ``fits.json`` and
    ``manifest.json``.  A failing point is recorded in the manifest and the
    sweep carries on.
    """
    config.validate()
    started = time.perf_counter()
    for s in config.series:
        mem = projected_memory(s)
        if mem:
            log(f"[{s.name}] projected peak memory {mem / 2**30:.2f} GiB per worker (L={max(s.L)})")
    cache_dir = None if config.cache == "off" else config.cache_dir
    cache_write = config.cache == "readwrite"
    tasks = [(s, L, eps, cache_dir, cache_write) for s in config.series for L, eps in s.points()]
    if config.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = []
        for t in tasks:
            o = _run_task(t)
            bad = [k for k, v in o.status.items() if v != "ok" and not k.startswith("_")]
            log(f"[{o.series}] L={o.L} strength={o.strength:g}: {o.seconds:.1f}s"
                + (f" FAILED {bad}" if bad else ""))
            outcomes.append(o)

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, Path] = {}
    tables = {
        "agp": (AGP_COLUMNS, [r for o in outcomes for r in o.agp]),
        "rstats": (RSTATS_COLUMNS, [r for o in outcomes for r in o.rstats]),
        "spectral": (SPECTRAL_COLUMNS, [r for o in outcomes for r in o.spectral]),
        "zdist": (ZDIST_COLUMNS, [r for o in outcomes for r in o.zdist]),
    }
    wanted = {
        "agp": any(s.agp for s in config.series),
        "rstats": any(s.r_stats for s in config.series),
        "spectral": any(s.spectral for s in config.series),
        "zdist": any(s.z_distribution for s in config.series),
    }
    for name, (header, rows) in tables.items():
        if wanted[name]:
            path = out_dir / f"{name}.csv"
            write_rows(path, header, rows)
            files[name] = path

    fits: dict = {}
    agp_rows = [dict(zip(AGP_COLUMNS, r)) for r in tables["agp"][1]]
    for s in config.series:
        if s.fit and s.agp:
            fits.update(fit_rows([r for r in agp_rows if r["series"] == s.name], s.fit, s.fit_quantity, s.fit_skip,
                                 s.fit_parity))
    zfits = {k: v for o in outcomes for k, v in o.zdist_fits.items()}
    if zfits:
        fits["zdist"] = zfits
    files["fits"] = out_dir / "fits.json"
    files["fits"].write_text(json.dumps(fits, indent=2, sort_keys=True) + "\n")

    points, failures = [], []
    for o in outcomes:
        for stat, status in o.status.items():
            if stat.startswith("_"):
                continue
            entry = {"series": o.series, "L": o.L, "strength": o.strength, "statistic": stat,
                     "status": "ok" if status == "ok" else "failed"}
            if status != "ok":
                entry["error"] = status
                failures.append(entry)
            points.append(entry)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "versions": {
            "agpchaos": __version__, "solver": SOLVER_VERSION, "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version(),
        },
        "threads": config.threads,
        "wall_seconds": time.perf_counter() - started,
        "point_seconds": [
            {"series": o.series, "L": o.L, "strength": o.strength, "seconds": o.seconds, "cache_hit": o.cache_hit}
            for o in outcomes
        ],
        "points": points,
        "failures": failures,
        "files": sorted(p.name for p in files.values()) + ["manifest.json"],
    }
    files["manifest"] = out_dir / "manifest.json"
    files["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return SweepResult(out_dir, files, failures, manifest)


# ---------------------------------------------------------------------------
# fitting from result rows
# ---------------------------------------------------------------------------


def read_rows(path: str | Path) -> list[dict]:
    """CSV rows with numeric fields converted to float (int for L and D)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k in ("L", "D", "count", "n_ratios"):
                r[k] = int(v)
            elif k in ("series", "family", "sector", "tag", "perturbation", "cutoff"):
                continue
            else:
                try:
                    r[k] = float(v)
                except ValueError:
                    pass
    return rows


def fit_rows(
    rows: list[dict], kind: str, quantity: str = "rescaled", skip: int = 0, parity: bool = False
) -> dict:
    """Scaling fits of AGP rows, grouped by (series, tag, cutoff).

    ``kind`` is ``exponential`` (one fit per strength), ``linear`` (linear fit
    per strength, with the log-space residual ratio against an exponential
    fit) or ``crossover`` (the zero-strength series is the integrable
    reference).  ``parity`` adds an even/odd-L term to exponential fits.
    Fit failures are stored as ``{"error": ...}``.
    """
    if kind not in FIT_KINDS:
        raise ConfigError(f"unknown fit kind {kind!r}")
    column = "rescaled_norm_sq" if quantity == "rescaled" else "norm_sq"
    groups: dict[tuple, dict[float, list]] = {}
    for r in rows:
        groups.setdefault((r["series"], r["tag"], r["cutoff"]), {}).setdefault(r["strength"], []).append(r)
    out = {}
    for (series, tag, cutoff), by_strength in sorted(groups.items()):
        pert = next(iter(by_strength.values()))[0]["perturbation"]
        scans = {
            eps: ScalingSeries([r["L"] for r in rs], [r[column] for r in rs], tag, eps)
            for eps, rs in sorted(by_strength.items())
            for rs in [sorted(rs, key=lambda r: r["L"])]
        }
        prefix = f"{series}/{tag}/{cutoff}"
        try:
            if kind == "crossover":
                if 0.0 not in scans:
                    raise FitError("crossover needs a zero-strength reference series")
                perturbed = [s for eps, s in scans.items() if eps != 0.0]
                report = crossover_analysis(scans[0.0], perturbed, prefix)
                out[prefix] = {"kind": kind, "quantity": column, "perturbation": pert, **dataclasses.asdict(report)}
                continue
            for eps, s in scans.items():
                key = f"{prefix}/{pert}={eps!r}" if pert else prefix
                try:
                    out[key] = _single_fit(s, kind, skip, column, parity)
                except FitError as exc:
                    out[key] = {"kind": kind, "error": str(exc)}
        except FitError as exc:
            out[prefix] = {"kind": kind, "error": str(exc)}
    return out


def _single_fit(s: ScalingSeries, kind: str, skip: int, column: str, parity: bool = False) -> dict:
    w = s.window(skip)
    exp = fit_exponential(w, parity=parity)
    result = {
        "kind": kind, "quantity": column, "L": [float(x) for x in w.L],
        "beta": exp.beta, "prefactor": exp.prefactor, "exp_log_rms": exp.rms,
    }
    if parity:
        result["parity_amplitude"] = exp.parity
    if kind == "linear":
        poly = fit_polynomial(w, "linear")
        lr = poly.log_residuals(w)
        poly_rms = float(np.sqrt(np.mean(lr**2)))
        result.update(
            slope=poly.coefficients[0], intercept=poly.coefficients[1], linear_log_rms=poly_rms,
            rejection_ratio=exp.rms / poly_rms if poly_rms > 0 else math.inf,
        )
    return result


# ---------------------------------------------------------------------------
# plotting script
# ---------------------------------------------------------------------------

_PLOT_KINDS = {
    "agp": (("series", "L", "strength", "tag", "cutoff", "rescaled_norm_sq"), "L", "rescaled_norm_sq", "y"),
    "rstats": (("series", "L", "strength", "mean_r"), "strength", "mean_r", "x"),
    "spectral": (("series", "L", "strength", "tag", "omega_center", "mean_weight"), "omega_center", "mean_weight", "xy"),
    "zdist": (("series", "L", "strength", "tag", "z_center", "prob_density"), "z_center", "prob_density", "xy"),
}


def _detect_kind(header: list[str], path: Path) -> str:
    stem = path.stem
    if stem in _PLOT_KINDS:
        return stem
    for kind, (cols, *_rest) in _PLOT_KINDS.items():
        if set(cols) <= set(header):
            return kind
    raise ValueError(f"{path}: not a recognised result table")


def _fit_overlays(fit_data: dict) -> list[str]:
    curves = []
    for key, fit in sorted(fit_data.items()):
        if not isinstance(fit, dict) or "beta" not in fit:
            continue
        if "prefactor" in fit:
            terms = [(fit["prefactor"], min(fit["L"]), max(fit["L"]), key)]
        elif "prefactors" in fit:
            terms = [
                (a, fit["fit_windows"][repr(eps)][0], fit["fit_windows"][repr(eps)][1], f"{key} {eps!r}")
                for a, eps in zip(fit["prefactors"], fit["strengths"])
            ]
        else:
            continue
        for a, lo, hi, title in terms:
            curves.append(f"[x={lo}:{hi}] {a!r}*exp({fit['beta']!r}*x) with lines dt 2 lc rgb 'black' title '{title}'")
        if fit.get("slope") is not None:
            lo, hi = min(fit["L"]), max(fit["L"])
            curves.append(
                f"[x={lo}:{hi}] {fit['slope']!r}*x+{fit['intercept']!r} "
                f"with lines dt 3 lc rgb 'black' title '{key} linear'"
            )
    return curves


def emit_plot_script(files, out: str | Path, fits: str | Path | None = None) -> Path:
    """Write a gnuplot script with one panel per result table.

    AGP tables get a log-linear panel with one curve per (series, tag,
    cutoff, strength) and the exponential fits from ``fits`` overlaid;
    spectral and susceptibility tables get log-log panels, one curve per
    (series, L, strength, tag).  The script only reads the CSV files.
    """
    files = [Path(f) for f in files]
    if not files:
        raise ValueError("no result files to plot")
    fit_data = json.loads(Path(fits).read_text()) if fits else {}
    lines = [
        "# generated by agpchaos; run with: gnuplot <this file>",
        "set datafile separator ','",
        "set terminal pngcairo size 900,650",
        "set key outside right",
    ]
    for path in files:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            body = list(reader)
        if header is None:
            raise ValueError(f"{path}: empty file")
        kind = _detect_kind(header, path)
        needed, xcol, ycol, logaxes = _PLOT_KINDS[kind]
        missing = [c for c in needed if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        col = {name: i + 1 for i, name in enumerate(header)}
        group_cols = [c for c in needed if c not in (xcol, ycol) and not (kind == "agp" and c == "L")]
        if kind == "rstats":
            group_cols = ["series", "L"]
        groups = sorted({tuple(row[col[c] - 1] for c in group_cols) for row in body})
        lines += [
            "",
            f"set output '{path.stem}.png'",
            f"set title '{path.stem}'",
            f"set xlabel '{xcol}'",
            f"set ylabel '{ycol}'",
            "unset logscale",
            f"set logscale {logaxes}",
        ]
        clauses = []
        fit_lines: list[str] = []
        for g in groups:
            cond = " && ".join(f"strcol({col[c]}) eq '{v}'" for c, v in zip(group_cols, g))
            label = " ".join(f"{c}={v}" for c, v in zip(group_cols, g))
            clauses.append(
                f"'{path.name}' every ::1 using {col[xcol]}:(({cond}) ? ${col[ycol]} : 1/0) "
                f"with linespoints title '{label}'"
            )
        if kind == "agp":
            fit_lines = _fit_overlays(fit_data)
        if not clauses:
            raise ValueError(f"{path}: no data rows")
        # per-curve x ranges need the 'sample' keyword and must come first
        head = "plot sample " if fit_lines else "plot "
        lines.append(head + ", \\\n     ".join(fit_lines + clauses))
    out = Path(out)
    out.write_text("\n".join(lines) + "\n")
    return out
