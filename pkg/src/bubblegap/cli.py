"""Command-line front end.

``bubblegap band|defect-band|eps0|validate --config FILE [--out FILE] [--format csv|json]``

The configuration is one flat JSON object holding :class:`CrystalConfig`
fields plus run controls (see ``RUN_DEFAULTS``).  Exit codes: 0 success,
1 validation failure, 2 some points failed, 64 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics as asy
from . import greens, operators as op, solver, specfun
from .config import ConfigError, CrystalConfig

logger = logging.getLogger("bubblegap")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2
EXIT_CONFIG = 64

TWO_PI = 2.0 * math.pi

RUN_DEFAULTS = {
    "alpha1_points": 41,
    "alpha2_points": 21,
    "omega2": False,
    "omega_cap": None,
    "R_values": [0.02, 0.05, 0.08],
    "eps0_bracket": [-0.5, -0.05],
}


@dataclass(frozen=True)
class RunConfig:
    crystal: CrystalConfig
    alpha1_points: int = 41
    alpha2_points: int = 21
    omega2: bool = False
    omega_cap: float | None = None
    R_values: tuple = (0.02, 0.05, 0.08)
    eps0_bracket: tuple = (-0.5, -0.05)

    def __post_init__(self):
        for name in ("alpha1_points", "alpha2_points"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 2:
                raise ConfigError(f"{name} must be an integer >= 2, got {v!r}")
        if not isinstance(self.omega2, bool):
            raise ConfigError("omega2 must be true or false")
        if self.omega_cap is not None and not self.omega_cap > 0:
            raise ConfigError("omega_cap must be positive")
        if not self.R_values or not all(0 < r < 0.5 for r in self.R_values):
            raise ConfigError("R_values must be a non-empty list of radii in (0, 1/2)")
        lo, hi = self.eps0_bracket
        if not -1 < lo < hi < 0:
            raise ConfigError("eps0_bracket must satisfy -1 < lo < hi < 0 (units of R)")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        run_keys = set(RUN_DEFAULTS)
        crystal = CrystalConfig.from_dict({k: v for k, v in data.items() if k not in run_keys})
        run = {k: data[k] for k in run_keys if k in data}
        for k in ("R_values", "eps0_bracket"):
            if k in run:
                if not isinstance(run[k], list) or not all(isinstance(x, (int, float)) for x in run[k]):
                    raise ConfigError(f"{k} must be a list of numbers")
                run[k] = tuple(float(x) for x in run[k])
        if len(run.get("eps0_bracket", (0, 0))) != 2:
            raise ConfigError("eps0_bracket must have two entries")
        return cls(crystal, **run)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    try:
        return RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, **row):
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"missing columns {sorted(missing)}")
        self.rows.append([row[c] for c in self.columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if not math.isfinite(v) else f"{float(v):.12g}"
    return "" if v is None else str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(f"{float(v):.12g}") if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render(table: Table, fmt: str, command: str, run: RunConfig) -> str:
    if fmt == "json":
        doc = {
            "command": command,
            "config": _json_value(run.crystal.to_dict()),
            "columns": table.columns,
            "rows": [dict(zip(table.columns, (_json_value(v) for v in r))) for r in table.rows],
            "summary": _json_value(table.summary),
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

_NUMERIC_ERRORS = (ArithmeticError, ValueError, np.linalg.LinAlgError)


def cmd_band(run: RunConfig) -> tuple[Table, int]:
    """First (and optionally second) band over a uniform alpha grid on [0, 2 pi]^2."""
    cfg = run.crystal
    cols = ["alpha1", "alpha2", "omega1", "residual"]
    if run.omega2:
        cols.append("omega2")
    cols += ["status", "message"]
    table = Table(cols)
    a1s = np.linspace(0.0, TWO_PI, run.alpha1_points)
    a2s = np.linspace(0.0, TWO_PI, run.alpha2_points)
    cache = {}
    cap = run.omega_cap
    flagged = 0
    for a1 in a1s:
        for a2 in a2s:
            c = solver.canonical_alpha((a1, a2))
            key = (round(c.alpha1, 12), round(c.alpha2, 12))
            if key not in cache:
                try:
                    r = solver.band_omega1_result(c, cfg)
                    entry = {"omega1": r.omega, "residual": r.residual, "status": "ok", "message": ""}
                    if r.residual >= cfg.residual_tol:
                        entry.update(status="flagged", message="residual above threshold")
                    if run.omega2:
                        if cap is None:
                            cap = 8.0 * solver.band_omega1((math.pi, math.pi), cfg)
                        try:
                            entry["omega2"] = solver.band_omega2(c, cfg, r.omega, cap)
                        except solver.RootNotFoundError:
                            entry["omega2"] = math.nan
                            entry["message"] = f"no second band below {cap:.6g}"
                except _NUMERIC_ERRORS as exc:
                    entry = {"omega1": math.nan, "residual": math.nan, "omega2": math.nan,
                             "status": "failed", "message": str(exc)}
                cache[key] = entry
            e = cache[key]
            flagged += e["status"] != "ok"
            row = {"alpha1": a1, "alpha2": a2, **e}
            if not run.omega2:
                row.pop("omega2", None)
            table.add(**row)
    table.summary = {"points": len(table.rows), "flagged": flagged}
    return table, EXIT_PARTIAL if flagged else EXIT_OK


def cmd_defect_band(run: RunConfig) -> tuple[Table, int]:
    """Defect band by the operator method and, for shrunken bubbles, the dilute formula."""
    cfg = run.crystal
    if cfg.epsilon == 0:
        raise ConfigError("defect-band needs a nonzero epsilon")
    grid = np.linspace(0.0, TWO_PI, run.alpha1_points)
    curve = solver.defect_band(cfg, grid, omega_cap=run.omega_cap)
    table = Table(["alpha1", "omega_operator", "omega_dilute", "gap_lower", "gap_upper", "residual", "status",
                   "message"])
    failed = dict(curve.failed)
    for i, a1 in enumerate(curve.alpha1):
        dil = math.nan
        if cfg.R_d < cfg.R:
            try:
                dil = asy.dilute_defect_omega(a1, cfg)
            except _NUMERIC_ERRORS as exc:
                logger.warning("dilute root failed at alpha1 = %.4f: %s", a1, exc)
        ok = float(a1) not in failed
        table.add(alpha1=a1, omega_operator=curve.omega[i], omega_dilute=dil,
                  gap_lower=curve.meta["omega_star"][i], gap_upper=curve.meta["gap_upper"][i],
                  residual=curve.residuals[i], status="ok" if ok else "failed",
                  message="" if ok else failed[float(a1)])
    band_max = solver.band_omega1((math.pi, math.pi), cfg)
    summary = {"first_band_max": band_max, "failed": len(curve.failed)}
    if np.any(np.isfinite(curve.omega)):
        (amin, wmin), (amax, wmax) = curve.minimum(), curve.maximum()
        summary.update(defect_min=wmin, defect_min_alpha1=amin, defect_max=wmax, defect_max_alpha1=amax,
                       inside_gap=bool(wmin > band_max and not curve.partial))
    table.summary = summary
    return table, EXIT_PARTIAL if curve.partial else EXIT_OK


def cmd_eps0(run: RunConfig) -> tuple[Table, int]:
    """Critical defect size per radius from the dilute criterion and from the operator."""
    table = Table(["R", "eps0_asymptotic", "eps0_operator", "ratio_asymptotic", "ratio_operator", "residual",
                   "status", "message"])
    flagged = 0
    for R in run.R_values:
        cfg = run.crystal.replace(R=float(R), epsilon=0.0)
        row = dict(R=R, eps0_asymptotic=math.nan, eps0_operator=math.nan, ratio_asymptotic=math.nan,
                   ratio_operator=math.nan, residual=math.nan, status="ok", message="")
        try:
            a = asy.critical_epsilon(cfg)
            row.update(eps0_asymptotic=a, ratio_asymptotic=abs(a) / R)
            o = solver.operator_critical_epsilon(cfg, bracket=run.eps0_bracket)
            row.update(eps0_operator=o.epsilon, ratio_operator=abs(o.epsilon) / R, residual=o.residual)
        except (*_NUMERIC_ERRORS, ConfigError) as exc:
            row.update(status="failed", message=str(exc))
            flagged += 1
        table.add(**row)
    table.summary = {"failed": flagged}
    return table, EXIT_PARTIAL if flagged else EXIT_OK


# -- validation ---------------------------------------------------------------

_ALPHAS = [(math.pi, math.pi), (0.5, 2.0), (1.3, 2.1), (0.0, 1.0), (4.0, 5.5)]
_POINTS = np.array([(0.3, 0.2), (-0.45, 0.1), (0.13, -0.07), (0.0, 0.4), (0.37, 0.0), (1.3, -2.7),
                    (-0.2, -0.33), (0.49, 0.49), (0.05, 0.02), (2.2, 0.6)])


def _check_ewald_invariance(cfg):
    err = 0.0
    for k in (0.0, 0.05, 1.2):
        for a in _ALPHAS:
            g = greens.LatticeGreensEvaluator(k, a, ewald=cfg.ewald).gamma(_POINTS)
            h = greens.LatticeGreensEvaluator(k, a, ewald=2 * cfg.ewald).gamma(_POINTS)
            err = max(err, float(np.max(np.abs(g - h))))
    return err, 1e-10


def _check_spectral_oracle(cfg):
    err = 0.0
    for k in (0.0, 0.05, 0.8):
        for a in _ALPHAS:
            ev = greens.LatticeGreensEvaluator(k, a, ewald=cfg.ewald)
            for z in _POINTS:
                err = max(err, abs(ev.gamma(z) - greens.gamma_spectral_oracle(k, a, z)))
    return err, 1e-8


def _check_direct_oracle(cfg):
    err = 0.0
    for a in _ALPHAS[:2]:
        ev = greens.LatticeGreensEvaluator(0.6, a, ewald=cfg.ewald)
        z = _POINTS[:3]
        err = max(err, float(np.max(np.abs(ev.gamma(z) - greens.gamma_direct_windowed(0.6, a, z, radius=500)))))
    return err, 1e-8


def _check_kummer_origin(cfg):
    err = 0.0
    for k in (0.0, 0.05):
        for a in _ALPHAS[:3]:
            ev = greens.LatticeGreensEvaluator(k, a, ewald=cfg.ewald)
            err = max(err, abs(ev.remainder((0.0, 0.0)) - greens.remainder_origin_spectral_oracle(k, a)))
    return err, 1e-7


def _check_quasi_periodicity(cfg):
    err = 0.0
    for a in _ALPHAS:
        ev = greens.LatticeGreensEvaluator(0.3, a, ewald=cfg.ewald)
        g = ev.gamma(_POINTS)
        e1 = ev.gamma(_POINTS + [1.0, 0.0]) - np.exp(1j * a[0]) * g
        e2 = ev.gamma(_POINTS + [0.0, 1.0]) - np.exp(1j * a[1]) * g
        err = max(err, float(np.max(np.abs(e1))), float(np.max(np.abs(e2))))
    return err, 1e-10


def _check_wronskian(cfg):
    nmax = 2 * cfg.N + 2
    x = np.linspace(0.05, 5.0, 40)
    err = 0.0
    for n in range(-nmax, nmax + 1):
        J, Jp = specfun.bessel_j(n, x), specfun.bessel_j_prime(n, x)
        Y, Yp = specfun.bessel_y(n, x), specfun.bessel_y_prime(n, x)
        err = max(err, float(np.max(np.abs((J * Yp - Jp * Y) * math.pi * x / 2 - 1))))
    return err, 1e-9


def _check_recurrence(cfg):
    err = 0.0
    for x in (0.05, 0.5, 2.0):
        for n in range(1, 2 * cfg.N + 1):
            lhs = specfun.bessel_j(n - 1, x) + specfun.bessel_j(n + 1, x)
            err = max(err, abs(lhs - 2 * n / x * specfun.bessel_j(n, x)))
    return err, 1e-10


def _check_M_structure(cfg):
    eps = cfg.epsilon if cfg.epsilon != 0 else -0.2 * cfg.R
    star = solver.band_omega1((math.pi, math.pi), cfg)
    w = 1.2 * star
    M0 = op.assemble_M(w, cfg.replace(epsilon=0.0), math.pi).full()
    err = float(np.max(np.abs(M0 - np.eye(len(M0)))))
    M = op.assemble_M(w, cfg.replace(epsilon=eps), math.pi, omega_star=star)
    err = max(err, float(np.max(np.abs(M.a11 - np.eye(cfg.size)))), float(np.max(np.abs(M.a21))))
    return err, 0.0


VALIDATION_CHECKS = {
    "ewald_invariance": _check_ewald_invariance,
    "spectral_oracle": _check_spectral_oracle,
    "direct_sum_oracle": _check_direct_oracle,
    "kummer_origin_remainder": _check_kummer_origin,
    "quasi_periodicity": _check_quasi_periodicity,
    "wronskian": _check_wronskian,
    "bessel_recurrence": _check_recurrence,
    "M_structure": _check_M_structure,
}


def cmd_validate(run: RunConfig) -> tuple[Table, int]:
    table = Table(["check", "max_error", "tolerance", "status", "message"])
    failed = []
    for name, check in VALIDATION_CHECKS.items():
        try:
            with np.errstate(all="ignore"):
                err, tol = check(run.crystal)
            ok = bool(np.isfinite(err) and err <= tol)
            msg = ""
        except Exception as exc:  # a crashing check is a failing check
            err, tol, ok, msg = math.nan, math.nan, False, f"{type(exc).__name__}: {exc}"
        if not ok:
            failed.append(name)
        table.add(check=name, max_error=err, tolerance=tol, status="pass" if ok else "fail", message=msg)
    table.summary = {"checks": len(VALIDATION_CHECKS), "failed": failed}
    return table, EXIT_VALIDATION if failed else EXIT_OK


COMMANDS = {
    "band": cmd_band,
    "defect-band": cmd_defect_band,
    "eps0": cmd_eps0,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bubblegap", description="Bloch bands and line-defect modes of bubble crystals.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    return p


def _summary_line(command: str, summary: dict) -> str:
    parts = [f"{k}={_fmt(v) if not isinstance(v, list) else ','.join(v) or '-'}" for k, v in summary.items()]
    return f"{command}: " + " ".join(parts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config)
        table, code = COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"bubblegap: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(table, args.format, args.command, run)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"bubblegap: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(text)
    stream = sys.stderr if not args.out else sys.stdout
    print(_summary_line(args.command, table.summary), file=stream)
    if code == EXIT_VALIDATION:
        print("failing checks: " + ", ".join(table.summary["failed"]), file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
