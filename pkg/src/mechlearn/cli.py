"""Command-line entry point.

Subcommands::

    solve        envelope, LP, mechanism, certificate and feasibility for one n
    sweep-n      optimal value and thresholds across market sizes
    simulate     sequential adoption queue (full / empty / custom network)
    verify       re-check a saved mechanism (always exits 0)
    export-menu  two-agent persuasion menu

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 certificate
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .distributions import BeliefDistribution, from_config, validate
from .exceptions import (
    CertificateFailed,
    ConfigError,
    InvalidDistribution,
    LineInfeasible,
    MechLearnError,
    NoBracket,
    NoRoot,
    NotLogConcave,
    NumericalFailure,
    RangeTooSmall,
    StructureViolation,
    UnsupportedNetwork,
    WrongMarketSize,
)
from .first_best import efficient_envelope, efficient_value
from .likelihood import DEFAULT_POINTS, DEFAULT_RANGE
from .mechanisms import (
    MonotoneThresholdMechanism,
    asymptotic_family,
    designer_value,
    export_persuasion_menu,
    extract_mechanism,
    solve_logconcave,
    verify_certificate,
)
from .optimizer import check_extreme_structure, objective_weights, solve_asymptotic, solve_reduced, threshold_summary
from .rng import worker_count
from .social_sim import BinarySignalModel, QueueNetwork, compare_concealment, simulate_queue
from .verification import check_epic, check_feasibility, mc_value

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CERT = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Resolved run settings; command-line flags override the JSON file."""

    distribution: dict = field(default_factory=lambda: {"family": "uniform"})
    n: int = 2
    n_list: tuple = (2, 3, 5, 10, 20)
    grid_k: int = 2001
    grid_n: int = DEFAULT_POINTS
    log_range: float = DEFAULT_RANGE
    seed: int = 0
    mc_samples: int = 100_000
    feasibility_tol: float = 1e-6
    certificate_tol: float = 1e-8
    signals: dict = field(default_factory=lambda: {"l": 0.2, "h": 0.7})
    network: dict = field(default_factory=lambda: {"n": 10, "observe": "compare"})
    trials: int = 1_000_000
    base_dir: str = "."

    def __post_init__(self):
        if self.n < 1 or any(int(k) < 1 for k in self.n_list):
            raise ConfigError("market sizes must be positive")
        if self.grid_k < 3:
            raise ConfigError("grid_k must be at least 3")
        if self.grid_n < 3 or (self.grid_n - 1) & (self.grid_n - 2):
            raise ConfigError("grid_n must be a power of two plus one")
        if not (self.log_range > 0 and self.feasibility_tol > 0 and self.certificate_tol > 0):
            raise ConfigError("ranges and tolerances must be positive")
        if self.seed < 0 or self.trials < 1 or self.mc_samples < 0:
            raise ConfigError("seed, trials and sample counts must be nonnegative")

    def belief_distribution(self) -> BeliefDistribution:
        try:
            d = from_config(self.distribution, base_dir=self.base_dir)
        except OSError as exc:
            raise ConfigError(f"cannot read distribution file: {exc}") from exc
        validate(d)
        return d


_KEYS = {
    "distribution": dict, "n": int, "n_list": tuple, "grid_k": int, "grid_n": int, "log_range": float,
    "seed": int, "mc_samples": int, "signals": dict, "network": dict, "trials": int,
}


def load_config(path: str | None, **overrides) -> RunConfig:
    data: dict[str, Any] = {}
    base = "."
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        base = str(p.parent)
    kwargs: dict[str, Any] = {"base_dir": base}
    tolerances = data.pop("tolerances", {}) or {}
    for key, value in data.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[key] = tuple(int(v) for v in value) if _KEYS[key] is tuple else _KEYS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    for key in ("feasibility", "certificate"):
        if key in tolerances:
            kwargs[f"{key}_tol"] = float(tolerances[key])
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kwargs)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else None)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _region_labels(report, k):
    labels = ["strictly_between"] * k
    for r in report.regions:
        label = r.kind if r.kind != "at_lower" else f"at_lower_{r.part}"
        for i in range(r.start, min(r.stop, k)):
            if r.kind != "strictly_between" or labels[i] == "strictly_between":
                labels[i] = label
    return labels


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _design(cfg: RunConfig, d: BeliefDistribution, n: int):
    bounds = efficient_envelope(d, n, cfg.grid_k, cfg.grid_n, cfg.log_range)
    weights = objective_weights(d, cfg.grid_k)
    util = solve_reduced(weights, bounds)
    report = check_extreme_structure(util, bounds)
    closed = None
    if n >= 2 and d.log_concave and d.symmetric_about_half:
        closed = solve_logconcave(d, n, cfg.grid_n, cfg.log_range)
    return bounds, weights, util, report, closed


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    d = cfg.belief_distribution()
    bounds, weights, util, report, closed = _design(cfg, d, cfg.n)
    write_csv(out / "envelope.csv", ["s", "lower", "upper"], bounds.to_rows())
    labels = _region_labels(report, len(util.grid))
    write_csv(
        out / "lp_solution.csv",
        ["s", "U", "lower", "upper", "region"],
        [(float(s), float(u), float(lo), float(up), lab)
         for s, u, lo, up, lab in zip(util.grid, util.values, bounds.lower, bounds.upper, labels)],
    )
    stats = dict(util.lp_stats)
    stats.pop("seconds", None)
    write_json(out / "lp_stats.json", stats)
    mech = closed.mechanism if closed else extract_mechanism(util, bounds, d, cfg.n, cfg.grid_n, cfg.log_range)
    write_json(out / "mechanism.json", mech.to_dict())
    cert_failed = None
    if closed:
        try:
            cert = verify_certificate(mech, weights, tol=cfg.certificate_tol)
            write_json(out / "certificate.json", {"available": True, "passed": True, "tau": closed.tau, **cert.to_dict()})
        except CertificateFailed as exc:
            cert_failed = exc
            write_json(out / "certificate.json", {"available": True, "passed": False, "reason": str(exc)})
    else:
        write_json(out / "certificate.json", {"available": False, "reason": "density not log-concave and symmetric"})
    feas = check_feasibility(mech, tol=cfg.feasibility_tol).to_dict()
    if cfg.mc_samples:
        est = mc_value(mech, max(cfg.mc_samples, 10_000), cfg.seed, workers=1)
        feas.update(value_mc=est.mean, value_mc_se=est.se)
    write_json(out / "feasibility.json", feas)
    thresholds = threshold_summary(report)
    summary = {
        "n": cfg.n,
        "distribution": d.to_config(),
        "efficient_value": efficient_value(d, cfg.n, cfg.grid_n, cfg.log_range),
        "optimal_value": designer_value(mech),
        "lp_value": util.lp_stats["objective"],
        "s_min": closed.s_min if closed else thresholds.get("s_min"),
        "s_max": closed.s_max if closed else thresholds.get("s_max"),
        "kinks": thresholds["kinks"],
        "metadata": {"version": __version__, "created": datetime.now(timezone.utc).isoformat()},
    }
    if closed:
        summary["tau"] = closed.tau
    write_json(out / "summary.json", summary)
    if cert_failed is not None:
        raise cert_failed
    return EXIT_OK


def _sweep_point(cfg, d, n, u_limit):
    bounds, weights, util, report, closed = _design(cfg, d, n)
    th = threshold_summary(report)
    fam = asymptotic_family(d, n, u_limit, cfg.grid_n, cfg.log_range)
    v_n = util.lp_stats["objective"]
    s_min = closed.s_min if closed else th.get("s_min", math.nan)
    s_max = closed.s_max if closed else th.get("s_max", math.nan)
    return n, v_n, s_min, s_max, abs(v_n - designer_value(fam))


def cmd_sweep_n(cfg: RunConfig, out: Path) -> int:
    d = cfg.belief_distribution()
    weights = objective_weights(d, cfg.grid_k)
    u_limit = solve_asymptotic(weights)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(lambda n: _sweep_point(cfg, d, n, u_limit), cfg.n_list))
    write_csv(out / "sweep.csv", ["n", "V_n", "s_min", "s_max", "gap_to_asymptotic"], rows)
    write_json(out / "sweep_summary.json", {"V_infinity": u_limit.lp_stats["objective"], "n_list": list(cfg.n_list)})
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    sig = cfg.signals
    try:
        model = BinarySignalModel(float(sig["l"]), float(sig["h"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad signal model: {exc}") from exc
    spec = dict(cfg.network)
    header = ["position", "acceptance_rate", "se"]
    if spec.get("observe") == "compare":
        n = int(spec.get("n", 10))
        results = {}
        for kind in ("full", "empty"):
            res = simulate_queue(QueueNetwork(n, kind), model, cfg.trials, cfg.seed)
            write_csv(out / f"{kind}.csv", header, res.rows())
            results[kind] = res
        write_json(
            out / "comparison.json",
            {
                "verdict": compare_concealment(results["full"], results["empty"], model),
                "cascade": "reject" if model.low + model.high < 1 else "accept",
                "mean_acceptance_full": results["full"].mean_acceptance,
                "mean_acceptance_empty": results["empty"].mean_acceptance,
                "follow_first_reject_full": results["full"].follow_first_reject,
                "cascade_frequency_full": results["full"].cascade_frequency,
            },
        )
        return EXIT_OK
    net = QueueNetwork.from_config(spec)
    res = simulate_queue(net, model, cfg.trials, cfg.seed)
    write_csv(out / "queue.csv", header, res.rows())
    write_json(
        out / "queue_stats.json",
        {
            "cascade_frequency": res.cascade_frequency,
            "reject_cascade_frequency": res.reject_cascade_frequency,
            "accept_cascade_frequency": res.accept_cascade_frequency,
            "mean_cascade_onset": res.mean_cascade_onset,
            "follow_first_reject": res.follow_first_reject,
        },
    )
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, mechanism_path: str | None) -> int:
    d = cfg.belief_distribution()
    path = Path(mechanism_path) if mechanism_path else out / "mechanism.json"
    if not path.is_file():
        raise ConfigError(f"mechanism file not found: {path}")
    try:
        mech = MonotoneThresholdMechanism.from_dict(
            json.loads(path.read_text()), distribution=d, n_points=cfg.grid_n, log_range=cfg.log_range
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad mechanism file: {exc}") from exc
    report = check_feasibility(mech, tol=cfg.feasibility_tol).to_dict()
    report["epic_violation_mass"] = check_epic(mech)
    if cfg.mc_samples:
        est = mc_value(mech, max(cfg.mc_samples, 10_000), cfg.seed, workers=1)
        report.update(value_mc=est.mean, value_mc_se=est.se)
    report["designer_value"] = designer_value(mech)
    write_json(out / "verification.json", report)
    return EXIT_OK


def cmd_export_menu(cfg: RunConfig, out: Path) -> int:
    if cfg.n != 2:
        raise WrongMarketSize("persuasion menu is defined for two agents")
    d = cfg.belief_distribution()
    bounds, _, util, _, closed = _design(cfg, d, 2)
    mech = closed.mechanism if closed else extract_mechanism(util, bounds, d, 2, cfg.grid_n, cfg.log_range)
    write_json(out / "menu.json", export_persuasion_menu(mech))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mechlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "sweep-n", "simulate", "verify", "export-menu"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--grid-k", type=int, dest="grid_k")
        p.add_argument("--n", type=int)
        p.add_argument("--n-list", dest="n_list", help="comma-separated market sizes")
        if name == "simulate":
            p.add_argument("--network", help="network JSON, e.g. {\"n\": 5, \"observe\": \"full\"}")
            p.add_argument("--trials", type=int)
        if name == "verify":
            p.add_argument("--mechanism", help="mechanism JSON (default: OUT/mechanism.json)")
    return parser


def _error_code(exc: Exception) -> int:
    if isinstance(exc, CertificateFailed):
        return EXIT_CERT
    if isinstance(exc, (ConfigError, InvalidDistribution, WrongMarketSize, UnsupportedNetwork, NotLogConcave)):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalFailure, RangeTooSmall, NoRoot, NoBracket, LineInfeasible, StructureViolation)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    try:
        n_list = tuple(int(x) for x in args.n_list.split(",")) if args.n_list else None
        overrides = {"seed": args.seed, "grid_k": args.grid_k, "n": args.n, "n_list": n_list}
        if args.command == "simulate":
            if args.network:
                raw = args.network
                try:
                    net = json.loads(Path(raw).read_text()) if Path(raw).is_file() else json.loads(raw)
                except (json.JSONDecodeError, OSError) as exc:
                    raise ConfigError(f"bad network spec: {exc}") from exc
                overrides["network"] = net
            overrides["trials"] = args.trials
        cfg = load_config(args.config, **overrides)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "sweep-n":
            return cmd_sweep_n(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.mechanism)
        return cmd_export_menu(cfg, out)
    except (MechLearnError, ValueError) as exc:
        code = _error_code(exc) if isinstance(exc, MechLearnError) else EXIT_CONFIG
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(err), file=sys.stderr)
        if out.is_dir():
            write_json(out / "error.json", err)
        return code


if __name__ == "__main__":
    sys.exit(main())
