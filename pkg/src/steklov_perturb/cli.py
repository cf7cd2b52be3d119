"""Command-line driver: ``steklov-perturb <command> --config <path> [--out <dir>]``.

Commands: ``series``, ``eigen``, ``oracle``, ``compare``, ``decay``. Each run
writes one CSV per table plus ``summary.json`` (deterministic for a fixed
config) and ``timings.json`` (wall clock, not deterministic).

Exit codes: 0 success, 2 config error, 3 numerical-capacity error, 4 oracle
acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ball_field import ExponentUnderflow, LogPowerCapExceeded
from .direct_oracle import OracleError, converged_eigs
from .dno_series import (
    decay_estimate,
    decay_norms,
    ghat_series,
    harmonic_series,
    recursion_residuals,
)
from .sphere_basis import CapacityError, ZonalFn, sobolev_norm
from .steklov_eigen import branch_curves, first_order

log = logging.getLogger(__name__)

COMMANDS = ("series", "eigen", "oracle", "compare", "decay")
SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_ORACLE = 0, 2, 3, 4
CSV_COLUMNS = ["epsilon", "branch", "sigma", "imag_residual", "oracle_sigma", "abs_err"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    d: int
    rho: dict
    epsilons: list = field(default_factory=lambda: [0.0])
    order: int = 4
    cutoff: int = 12
    trial_degree: int = 16
    nodes: int = 40
    xi: dict = field(default_factory=lambda: {"1": 1.0})
    branches: int = 5
    norms: list | None = None
    out: str = "out"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
        if "d" not in raw:
            raise ConfigError("config field 'd' is required")
        if "rho" not in raw:
            raise ConfigError("config field 'rho' is required")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc
        cfg._normalize()
        cfg.validate()
        return cfg

    def _normalize(self) -> None:
        for name in ("rho", "xi"):
            val = getattr(self, name)
            if not isinstance(val, dict):
                raise ConfigError(f"config field '{name}' must map degree -> coefficient")
            try:
                setattr(self, name, {str(int(k)): float(v) for k, v in val.items()})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config field '{name}': {exc}") from exc
        try:
            self.epsilons = [float(e) for e in self.epsilons]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'epsilons': {exc}") from exc
        if self.norms is not None:
            try:
                self.norms = [float(x) for x in self.norms]
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config field 'norms': {exc}") from exc
        for name in ("d", "order", "cutoff", "trial_degree", "nodes", "branches"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"config field '{name}' must be an integer")

    def validate(self) -> None:
        if self.d < 2:
            raise ConfigError("config field 'd' must be >= 2")
        if self.order < 0:
            raise ConfigError("config field 'order' must be >= 0")
        if self.cutoff < 1:
            raise ConfigError("config field 'cutoff' must be >= 1")
        if self.branches < 1:
            raise ConfigError("config field 'branches' must be >= 1")
        if self.nodes < 2 * (self.trial_degree + 1):
            raise ConfigError("config field 'nodes' must be >= 2 * (trial_degree + 1)")
        if not self.epsilons:
            raise ConfigError("config field 'epsilons' must be non-empty")
        if not all(math.isfinite(e) for e in self.epsilons):
            raise ConfigError("config field 'epsilons' must be finite")
        if any(int(k) < 0 for k in self.rho):
            raise ConfigError("config field 'rho': degrees must be >= 0")
        sup = self.rho_fn().sup_norm()
        worst = max(abs(e) for e in self.epsilons) * sup
        if worst >= 0.5:
            raise ConfigError(
                f"config field 'epsilons': max |eps| * |rho|_inf = {worst:.3g} must be < 0.5"
            )

    def rho_fn(self) -> ZonalFn:
        return ZonalFn.from_sparse(self.d, self.rho)

    def xi_fn(self) -> ZonalFn:
        return ZonalFn.from_sparse(self.d, self.xi)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(raw)


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if not math.isfinite(x) else float(_num(x))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_csv(path: Path, header: list, rows: list) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, float) else v for v in row])


def _loglog_slope(eps, errs):
    e = np.asarray(eps, dtype=float)
    r = np.asarray(errs, dtype=float)
    ok = (e > 0) & (r > 0) & np.isfinite(r)
    if np.count_nonzero(ok) < 2:
        return None
    return float(np.polyfit(np.log(e[ok]), np.log(r[ok]), 1)[0])


def cmd_series(cfg: RunConfig, out: Path) -> dict:
    rho, xi = cfg.rho_fn(), cfg.xi_fn()
    hs = harmonic_series(rho, xi, cfg.order)
    res = recursion_residuals(hs)
    gh = ghat_series(rho, xi, cfg.order, hs)
    rows = []
    for n, (u, (lap, tr), g) in enumerate(zip(hs.fields, res, gh)):
        rows.append([n, u.max_abs(), lap, tr, sobolev_norm(g, 0.5), u.has_log])
    _write_csv(
        out / "series.csv",
        ["order", "u_max_coeff", "laplace_residual", "trace_error", "ghat_h12_norm", "has_log"],
        rows,
    )
    cancelled = sum(r.cancelled_resonances for r in hs.reports)
    return {
        "orders": cfg.order,
        "max_laplace_residual": max(r[0] for r in res),
        "max_trace_error": max(r[1] for r in res),
        "log_orders": hs.log_orders,
        "cancelled_resonances": cancelled,
        "ghat_h12_norms": [sobolev_norm(g, 0.5) for g in gh],
        "first_order": list(first_order(rho, cfg.cutoff)),
    }


def _grid_with_zero(eps):
    grid = sorted(set(eps) | {0.0})
    return grid


def cmd_eigen(cfg: RunConfig, out: Path) -> dict:
    rho = cfg.rho_fn()
    grid = _grid_with_zero(cfg.epsilons)
    branches = branch_curves(rho, grid, cfg.order, cfg.cutoff)
    rows = []
    for k, e in enumerate(grid):
        for b in branches:
            rows.append([e, b.label, b.sigma[k], b.imag_residual, None, None])
    _write_csv(out / "eigen.csv", CSV_COLUMNS, rows)
    return {
        "epsilons": grid,
        "branches": [
            {"label": b.label, "multiplicity": b.multiplicity, "ambiguous": b.ambiguous}
            for b in branches
        ],
        "max_imag_residual": max(b.imag_residual for b in branches),
    }


def _oracle_table(cfg: RunConfig):
    rho = cfg.rho_fn()
    table = {}
    for e in cfg.epsilons:
        table[e] = converged_eigs(
            cfg.d, rho, e, cfg.trial_degree, cfg.nodes, count=cfg.branches
        )
    return table


def cmd_oracle(cfg: RunConfig, out: Path) -> dict:
    table = _oracle_table(cfg)
    rows = []
    dropped = 0
    for e, vals in table.items():
        for b, v in enumerate(vals):
            dropped += int(np.isnan(v))
            rows.append([e, b, None, None, float(v), None])
    _write_csv(out / "oracle.csv", CSV_COLUMNS, rows)
    if all(np.all(np.isnan(v)) for v in table.values()):
        raise OracleError("no oracle eigenvalue survived the refinement check")
    return {"epsilons": cfg.epsilons, "dropped": dropped}


def cmd_compare(cfg: RunConfig, out: Path) -> dict:
    rho = cfg.rho_fn()
    table = _oracle_table(cfg)
    grid = _grid_with_zero(cfg.epsilons)
    branches = branch_curves(rho, grid, cfg.order, cfg.cutoff)[: cfg.branches]
    rows = []
    errs = {b.label: [] for b in branches}
    for e in cfg.epsilons:
        k = grid.index(e)
        orc = table[e]
        for i, b in enumerate(branches):
            o = float(orc[i]) if i < orc.size else float("nan")
            err = abs(b.sigma[k] - o) if math.isfinite(o) else float("nan")
            errs[b.label].append(err)
            rows.append([e, b.label, b.sigma[k], b.imag_residual, o, err])
    _write_csv(out / "compare.csv", CSV_COLUMNS, rows)
    fits = {str(lbl): _loglog_slope(cfg.epsilons, v) for lbl, v in errs.items()}
    if all(all(not math.isfinite(x) for x in v) for v in errs.values()):
        raise OracleError("no oracle eigenvalue survived the refinement check")
    return {
        "epsilons": cfg.epsilons,
        "target_order": cfg.order + 1,
        "loglog_slopes": fits,
        "max_abs_err": {str(k): max((x for x in v if math.isfinite(x)), default=None) for k, v in errs.items()},
    }


def cmd_decay(cfg: RunConfig, out: Path) -> dict:
    if cfg.norms is not None:
        fit = decay_estimate(cfg.norms)
        rows = [[n, x, None] for n, x in enumerate(cfg.norms)]
        _write_csv(out / "decay.csv", ["order", "ghat_h12_norm", "g_h12_norm"], rows)
        return {"source": "config", "A_est": fit.A_est, "fit_residual": fit.fit_residual, "K": fit.K}
    rep = decay_norms(cfg.rho_fn(), cfg.xi_fn(), cfg.order)
    rows = [[n, a, b] for n, (a, b) in enumerate(zip(rep.ghat_norms, rep.g_norms))]
    _write_csv(out / "decay.csv", ["order", "ghat_h12_norm", "g_h12_norm"], rows)

    def fit_dict(f):
        if f is None:
            return None
        return {"A_est": f.A_est, "fit_residual": f.fit_residual, "K": f.K}

    summary = {"source": "series", "xi_h32_norm": rep.xi_norm, "ghat": fit_dict(rep.ghat_fit), "g": fit_dict(rep.g_fit)}
    if rep.ghat_fit is not None:
        summary["A_est"] = rep.ghat_fit.A_est
        summary["fit_residual"] = rep.ghat_fit.fit_residual
    return summary


HANDLERS = {
    "series": cmd_series,
    "eigen": cmd_eigen,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "decay": cmd_decay,
}


def run(command: str, cfg: RunConfig, out: Path) -> dict:
    """Execute ``command`` and write its files into ``out``; returns the summary."""
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = HANDLERS[command](cfg, out)
    elapsed = time.perf_counter() - t0
    summary = {
        "schema": SCHEMA,
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "result": result,
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps({"command": command, "seconds": elapsed}) + "\n")
    return summary


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(prog="steklov-perturb", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides config 'out')")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config)
        out = Path(args.out if args.out is not None else cfg.out)
        run(args.command, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapacityError, LogPowerCapExceeded, ExponentUnderflow) as exc:
        print(
            f"capacity error: {exc}; try a smaller order/cutoff or raise STEKLOV_MAX_QUAD",
            file=sys.stderr,
        )
        return EXIT_CAPACITY
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
