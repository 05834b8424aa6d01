"""Batch front end: INI-configured experiments with reproducible artifacts.

``wspectra run config.ini`` executes one named experiment and writes its
CSV/JSON artifacts plus a run manifest (config echo, timings, sha256 digests)
into the output directory.  ``wspectra suite --level fast|full`` runs the
acceptance criteria and prints one pass/fail line per criterion.

Config grammar: flat INI sections [run], [symbol], [grid], [tail],
[schrodinger] with ``key = value`` lines and ``#`` comments.  Unknown keys are
hard errors; there are no silent defaults for misspellings.

Exit codes: 0 success, 2 validation failure, 3 numerical-quality failure
(truncation/boundary-sensitivity flags escalated by ``strict_flags``).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import lattice, quantize, schrodinger, spectra, symbols

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_QUALITY = 3

EXPERIMENTS = ("quantize", "dual", "spectrum", "fit", "prufer", "bs-check", "phase-volume", "suite")

_KNOWN_KEYS = {
    "run": {"experiment", "out", "seed", "threads", "strict_flags", "level"},
    "symbol": {"family", "r", "radius", "center", "theta", "vertices", "phi00",
               "zeta_inner", "zeta_outer", "alpha", "beta", "gamma", "scale"},
    "grid": {"l", "n", "xi_half_width", "n_xi", "out_l", "out_n"},
    "tail": {"p", "sigma", "k_min", "k_max", "which", "decades", "per_decade", "box"},
    "schrodinger": {"g", "lambda", "radius_factor", "bs_l", "bs_n", "s_values"},
}


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass
class RunConfig:
    experiment: str
    out_dir: Path
    seed: int = 0
    threads: Optional[int] = None
    strict_flags: bool = False
    level: str = "fast"
    symbol: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)
    schrodinger: dict = field(default_factory=dict)

    def echo(self) -> dict:
        doc = {
            "run": {
                "experiment": self.experiment,
                "out": str(self.out_dir),
                "seed": str(self.seed),
                "strict_flags": "true" if self.strict_flags else "false",
                "level": self.level,
            },
        }
        if self.threads is not None:
            doc["run"]["threads"] = str(self.threads)
        for name in ("symbol", "grid", "tail", "schrodinger"):
            section = getattr(self, name)
            if section:
                doc[name] = {k: str(v) for k, v in section.items()}
        return doc


def _parse_floats(text: str) -> list:
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def parse_config(path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    unknown = []
    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            unknown.append(f"[{section}]")
            continue
        for key in cp[section]:
            if key not in _KNOWN_KEYS[section]:
                unknown.append(f"[{section}] {key}")
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    if "run" not in cp or "experiment" not in cp["run"]:
        raise ConfigError("missing [run] experiment")
    experiment = cp["run"]["experiment"].strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    cfg = RunConfig(
        experiment=experiment,
        out_dir=Path(cp["run"].get("out", "out")),
        seed=cp["run"].getint("seed", fallback=0),
        threads=cp["run"].getint("threads", fallback=None) if "threads" in cp["run"] else None,
        strict_flags=cp["run"].getboolean("strict_flags", fallback=False),
        level=cp["run"].get("level", "fast").strip(),
    )
    for name in ("symbol", "grid", "tail", "schrodinger"):
        if cp.has_section(name):
            setattr(cfg, name, {k: v.strip() for k, v in cp[name].items()})
    _validate_numbers(cfg)
    return cfg


def _validate_numbers(cfg: RunConfig) -> None:
    g = cfg.grid
    try:
        for key in ("l", "xi_half_width", "out_l"):
            if key in g and float(g[key]) <= 0:
                raise ConfigError(f"[grid] {key} must be positive")
        for key in ("n", "n_xi", "out_n"):
            if key in g:
                val = int(g[key])
                if val < 8 or val % 2:
                    raise ConfigError(f"[grid] {key} must be even and >= 8")
        if "p" in cfg.tail and not 0 < float(cfg.tail["p"]) <= 2:
            raise ConfigError("[tail] p must lie in (0, 2]")
        if "sigma" in cfg.tail and float(cfg.tail["sigma"]) < 0:
            raise ConfigError("[tail] sigma must be >= 0")
        if "g" in cfg.schrodinger and float(cfg.schrodinger["g"]) <= 0:
            raise ConfigError("[schrodinger] g must be positive")
        if "lambda" in cfg.schrodinger and float(cfg.schrodinger["lambda"]) <= 0:
            raise ConfigError("[schrodinger] lambda must be positive")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_symbol(section: dict) -> symbols.SymbolField:
    """Construct a symbol from the [symbol] section of a config."""
    if "family" not in section:
        raise ConfigError("[symbol] family is required")
    family = section["family"]
    try:
        if family == "gaussian":
            sym = symbols.Gaussian(float(section.get("r", 1.0)))
        elif family == "bump":
            center = _parse_floats(section.get("center", "0,0"))
            sym = symbols.Bump(float(section.get("radius", 1.0)), tuple(center))
        elif family == "sector_bump":
            center = _parse_floats(section.get("center", "0,0"))
            sym = symbols.SectorBump(float(section.get("theta", math.pi / 2)),
                                     float(section.get("radius", 1.0)), tuple(center))
        elif family == "polygon_bump":
            verts = _parse_floats(section["vertices"])
            if len(verts) % 2:
                raise ConfigError("[symbol] vertices needs an even number of floats")
            pairs = list(zip(verts[0::2], verts[1::2]))
            center = _parse_floats(section.get("center", "0,0"))
            sym = symbols.PolygonBump(pairs, float(section.get("radius", 1.0)), tuple(center))
        elif family == "disk_indicator":
            sym = symbols.DiskIndicator(float(section.get("radius", 1.0)))
        elif family == "b0_closed":
            sym = symbols.B0Closed(float(section.get("phi00", 1.0)),
                                   float(section.get("zeta_inner", 1.0)),
                                   float(section.get("zeta_outer", 2.0)))
        elif family == "power_decay":
            sym = symbols.PowerDecay(float(section["alpha"]), float(section["beta"]))
        elif family == "radial_power":
            sym = symbols.RadialPower(float(section["gamma"]))
        else:
            raise ConfigError(f"unknown symbol family {family!r}")
    except KeyError as exc:
        raise ConfigError(f"[symbol] missing key {exc.args[0]!r} for family {family}") from exc
    except symbols.SymbolParameterError as exc:
        raise ConfigError(str(exc)) from exc
    if "scale" in section:
        sym = symbols.Scaled(float(section["scale"]), sym)
    return sym


def _grids(cfg: RunConfig):
    g = cfg.grid
    l = float(g.get("l", 12.0))
    n = int(g.get("n", 1024))
    lxi = float(g.get("xi_half_width", l))
    nxi = int(g.get("n_xi", 2 * n))
    return quantize.Grid1D(l, n), quantize.Grid1D(lxi, nxi)


@dataclass
class RunManifest:
    config_echo: dict
    version: str
    timings: dict
    outputs: list

    def write(self, path: Path) -> None:
        doc = {
            "config": self.config_echo,
            "version": self.version,
            "timings_seconds": self.timings,
            "outputs": self.outputs,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="ascii")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class _Runner:
    """Executes one experiment, collecting artifacts, timings and flags."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.outputs: list = []
        self.timings: dict = {}
        self.flags: list = []

    def artifact(self, name: str) -> Path:
        return self.cfg.out_dir / name

    def record(self, path: Path) -> None:
        self.outputs.append(path)

    def run(self) -> int:
        cfg = self.cfg
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        handler = getattr(self, "_run_" + cfg.experiment.replace("-", "_"))
        handler()
        self.timings["experiment"] = time.perf_counter() - t0
        manifest = RunManifest(
            config_echo=cfg.echo(),
            version=__version__,
            timings=self.timings,
            outputs=[{"path": p.name, "sha256": _sha256(p)} for p in self.outputs],
        )
        manifest_path = self.artifact("manifest.json")
        manifest.write(manifest_path)
        if self.flags and cfg.strict_flags:
            print(f"numerical-quality flags raised: {self.flags}", file=sys.stderr)
            return EXIT_QUALITY
        return EXIT_OK

    # -- experiments -----------------------------------------------------

    def _quantized(self):
        sym = build_symbol(self.cfg.symbol)
        grid, xi_grid = _grids(self.cfg)
        t0 = time.perf_counter()
        op = quantize.build_weyl(sym, grid, xi_grid)
        self.timings["quantize"] = time.perf_counter() - t0
        self.flags.extend(op.flags)
        return op

    def _run_quantize(self):
        op = self._quantized()
        path = self.artifact("operator.wspq")
        quantize.save_operator(path, op)
        self.record(path)
        if op.grid.n <= 256:
            csv_path = self.artifact("operator.csv")
            quantize.export_csv(csv_path, op)
            self.record(csv_path)

    def _run_dual(self):
        sym = build_symbol(self.cfg.symbol)
        g = self.cfg.grid
        l = float(g.get("l", 10.0))
        n = int(g.get("n", 256))
        lxi = float(g.get("xi_half_width", l))
        nxi = int(g.get("n_xi", n))
        src_grid = symbols.Grid2D(l, lxi, n, nxi)
        out_grid = symbols.Grid2D(float(g.get("out_l", l)), float(g.get("out_l", lxi)),
                                  int(g.get("out_n", n)), int(g.get("out_n", nxi)))
        t0 = time.perf_counter()
        sampled = symbols.sample(sym, src_grid)
        dual = symbols.dual_symbol(sampled, out_grid)
        self.timings["dual"] = time.perf_counter() - t0
        if "truncated" in dual.provenance:
            self.flags.append("dual_truncated")
        path = self.artifact("dual.csv")
        dual.to_csv(path)
        self.record(path)

    def _spectral_data(self):
        op = self._quantized()
        t0 = time.perf_counter()
        sym_real = np.max(np.abs(op.entries - op.entries.conj().T)) <= 1e-8 * max(
            1e-300, float(np.max(np.abs(op.entries))))
        sd = spectra.eig_hermitian(op) if sym_real else spectra.singular_values(op)
        self.timings["spectra"] = time.perf_counter() - t0
        return sd

    def _run_spectrum(self):
        sd = self._spectral_data()
        path = self.artifact("spectrum.csv")
        sd.to_csv(path)
        self.record(path)

    def _run_fit(self):
        sd = self._spectral_data()
        path = self.artifact("spectrum.csv")
        sd.to_csv(path)
        self.record(path)
        tail_cfg = self.cfg.tail
        k_min = int(tail_cfg.get("k_min", 10))
        k_max = int(tail_cfg.get("k_max", min(100, len(sd.svals))))
        tp = spectra.TailParams(float(tail_cfg.get("p", 1.0)), float(tail_cfg.get("sigma", 0.0)))
        which = tail_cfg.get("which", "all")
        est = spectra.tail_functional(sd, tp, (k_min, k_max), which=which)
        exponent = spectra.decay_fit(sd, (k_min, k_max), which=which)
        tail_path = self.artifact("tail.json")
        est.to_json(tail_path)
        self.record(tail_path)
        fit_path = self.artifact("fit.json")
        fit_path.write_text(json.dumps({"k_min": k_min, "k_max": k_max,
                                        "exponent": exponent}, indent=2) + "\n")
        self.record(fit_path)

    def _run_prufer(self):
        sc = self.cfg.schrodinger
        g = float(sc.get("g", 100.0))
        lam = float(sc.get("lambda", 1.0))
        rf = float(sc.get("radius_factor", 2.0))
        radius = rf * math.sqrt(g / lam)
        v = schrodinger.coulomb_well(g)
        prob = schrodinger.SchrodingerProblem(v, lam, truncation_radius=radius)
        count, _ = schrodinger.decoupled_count(prob)
        env = schrodinger.prufer_estimate_bounds(v, lam, radius)
        path = self.artifact("prufer.csv")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("g,lambda,count,main_term,lower,upper\n")
            fh.write(f"{g:.17g},{lam:.17g},{count},{env.main_term:.17g},"
                     f"{env.lower:.17g},{env.upper:.17g}\n")
        self.record(path)

    def _run_bs_check(self):
        sc = self.cfg.schrodinger
        s_values = _parse_floats(sc.get("s_values", "0.02,0.01"))
        bs_l = float(sc.get("bs_l", 150.0))
        bs_n = int(sc.get("bs_n", 2048))
        lam = float(sc.get("lambda", 1.0))
        rows = []
        for s in s_values:
            g_eff = s**-2 / (16.0 * math.pi**2)
            v = schrodinger.coulomb_well(g_eff)
            prob = schrodinger.SchrodingerProblem(v, lam, truncation_radius=2.0 * math.sqrt(g_eff / lam))
            ode_count, _ = schrodinger.decoupled_count(prob)
            bs = schrodinger.build_bs_matrix(v, lam, quantize.Grid1D(bs_l, bs_n))
            mat_count = schrodinger.bs_count(bs)
            if bs.near_threshold:
                self.flags.append(f"bs_boundary_sensitive(s={s:g})")
            rows.append((s, ode_count, mat_count))
        path = self.artifact("bs_check.csv")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("s,ode_count,matrix_count\n")
            for s, oc, mc in rows:
                fh.write(f"{s:.17g},{oc},{mc}\n")
        self.record(path)

    def _run_phase_volume(self):
        rho = build_symbol(self.cfg.symbol)
        tail_cfg = self.cfg.tail
        p = float(tail_cfg.get("p", 1.0))
        sigma = float(tail_cfg.get("sigma", 0.0))
        decades = int(tail_cfg.get("decades", 4))
        per_decade = int(tail_cfg.get("per_decade", 40))
        box = float(tail_cfg["box"]) if "box" in tail_cfg else None
        vmax = float(np.max(np.abs(rho.eval_array(np.array([0.0]), np.array([0.0])))))
        levels = lattice.default_levels(vmax if vmax > 0 else 1.0, decades, per_decade)
        profile = lattice.PhaseProfile(rho, p, sigma, levels, box=box)
        report = lattice.N_functional(profile, mode="limsup_scan")
        if report.truncated:
            self.flags.append("phase_volume_truncated")
        path = self.artifact("phase_volume.json")
        report.to_json(path)
        self.record(path)

    def _run_suite(self):
        from . import acceptance

        results = acceptance.run_suite(level=self.cfg.level, seed=self.cfg.seed)
        path = self.artifact("suite_report.json")
        acceptance.write_report(results, path)
        self.record(path)
        for r in results:
            print(acceptance.format_line(r))
        if not all(r.passed for r in results):
            self.flags.append("suite_failure")


def _apply_threads(threads: Optional[int]) -> None:
    if threads is None:
        env = os.environ.get("WSPECTRA_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wspectra", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from an INI config")
    p_run.add_argument("config", help="path to the INI config")
    p_run.add_argument("--out", help="output directory (overrides [run] out)")
    p_run.add_argument("--threads", type=int, help="BLAS/OpenMP thread cap")
    p_run.add_argument("--seed", type=int, help="seed override for randomized checks")
    p_suite = sub.add_parser("suite", help="run the acceptance criteria")
    p_suite.add_argument("--level", choices=("fast", "full"), default="fast")
    p_suite.add_argument("--out", default=None, help="optional report directory")
    p_suite.add_argument("--seed", type=int, default=0)
    p_suite.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    _apply_threads(getattr(args, "threads", None))

    if args.command == "suite":
        from . import acceptance

        results = acceptance.run_suite(level=args.level, seed=args.seed)
        for r in results:
            print(acceptance.format_line(r))
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            acceptance.write_report(results, out / "suite_report.json")
        return EXIT_OK if all(r.passed for r in results) else EXIT_QUALITY

    try:
        cfg = parse_config(args.config)
    except (ConfigError, configparser.Error) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out:
        cfg.out_dir = Path(args.out)
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        return _Runner(cfg).run()
    except (ConfigError, symbols.SymbolParameterError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
