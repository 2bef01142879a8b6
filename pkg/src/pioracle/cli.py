"""Batch command-line front end.

Every subcommand reads an experiment configuration (JSON file and/or flags),
runs one module operation, and writes JSON-lines records plus a plain-text
summary table. Each record embeds the full configuration and its hash, so a
record's ``config`` block re-runs the experiment exactly.

Exit codes: 0 success, 2 configuration error, 3 capacity error,
4 infeasible constraint (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import re
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .losses import SelectionRule
from .model import ParamVector
from .oracles import InfeasibleConstraintWarning, lr_statistic, mt_scan_batch, sign_scan_batch
from .permutation_engine import CapacityError, enumerate_exact, sample_ensemble
from .posterior import NullSet, marginal_log_density, summarize_data
from .risk import (
    baseline_rules, build_oracle, derive_seed, estimate_risk, mc_upper_approx, paired_difference,
    subset_lower_bound,
)
from .simple_rule import gap_estimate

SCHEMA = 1
COMMANDS = ("posterior", "global-test", "fdr-oracle", "sign-oracle", "select-estimate", "risk", "bound", "gap")
_COMMAND_PROBLEM = {"global-test": "global", "fdr-oracle": "fdr", "sign-oracle": "sign", "select-estimate": "estimate"}

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("pioracle")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    theta: object
    sigma: float = 1.0
    problem: str = "estimate"
    alpha: float = 0.1
    selection: str = "all"
    ensemble: str = "exact"
    draws: int = 10_000
    calibration_draws: int = 100_000
    seed: int = 0
    null: object = 0.0
    m: int = 10
    z: list | None = None
    schema: int = SCHEMA
    output: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {self.schema!r} (expected {SCHEMA})")
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command in _COMMAND_PROBLEM:
            self.problem = _COMMAND_PROBLEM[self.command]
        if self.problem not in ("global", "fdr", "sign", "estimate"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if not 0 < float(self.alpha) < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not float(self.sigma) > 0:
            raise ConfigError("sigma must be positive")
        for name in ("draws", "m"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if int(self.calibration_draws) < 1000:
            raise ConfigError("calibration_draws must be >= 1000")
        try:
            SelectionRule.parse(self.selection)
            NullSet.parse(self.null)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        parse_ensemble(self.ensemble)
        theta = self.theta_vector()
        if self.z is not None:
            if len(self.z) != theta.n or not all(math.isfinite(float(v)) for v in self.z):
                raise ConfigError("z must be a finite vector of the same length as theta")
            self.z = [float(v) for v in self.z]
        if self.command == "posterior" and self.z is None:
            raise ConfigError("posterior needs a data vector (--z)")
        return self

    def theta_vector(self) -> ParamVector:
        try:
            return ParamVector(expand_theta(self.theta, int(self.seed)), float(self.sigma))
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid theta: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_GEN = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*$")


def expand_theta(spec, seed: int) -> np.ndarray:
    """Explicit list/comma string, or a generator: sparse(n,k,mu), two_group(n,k,mu1,mu2), linear(n,lo,hi).

    Generator coordinates are shuffled with a generator seeded from ``seed``.
    """
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    if not isinstance(spec, str):
        raise ConfigError(f"cannot interpret theta {spec!r}")
    m = _GEN.match(spec)
    if m is None:
        try:
            return np.array([float(v) for v in spec.split(",") if v.strip()])
        except ValueError as exc:
            raise ConfigError(f"cannot parse theta {spec!r}") from exc
    name, args = m.group(1).lower(), [a.strip() for a in m.group(2).split(",") if a.strip()]
    try:
        vals = [float(a) for a in args]
    except ValueError as exc:
        raise ConfigError(f"bad generator arguments in {spec!r}") from exc
    if name == "sparse" and len(vals) == 3:
        n, k, mu = int(vals[0]), int(vals[1]), vals[2]
        if not 0 <= k <= n:
            raise ConfigError("sparse(n, k, mu) needs 0 <= k <= n")
        theta = np.r_[np.full(k, mu), np.zeros(n - k)]
    elif name == "two_group" and len(vals) == 4:
        n, k = int(vals[0]), int(vals[1])
        if not 0 <= k <= n:
            raise ConfigError("two_group(n, k, mu1, mu2) needs 0 <= k <= n")
        theta = np.r_[np.full(k, vals[2]), np.full(n - k, vals[3])]
    elif name == "linear" and len(vals) == 3:
        theta = np.linspace(vals[1], vals[2], int(vals[0]))
    else:
        raise ConfigError(f"unknown theta generator {spec!r}")
    if theta.size < 1:
        raise ConfigError("theta generator produced an empty vector")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7E7A]))
    return theta[rng.permutation(theta.size)]


def parse_ensemble(spec: str):
    s = str(spec).strip().lower()
    if s == "exact":
        return ("exact", None)
    m = re.match(r"^sampled[(:]\s*(\d+)\s*\)?$", s)
    if m and int(m.group(1)) >= 1:
        return ("sampled", int(m.group(1)))
    raise ConfigError(f"ensemble must be 'exact' or 'sampled(m)', got {spec!r}")


def make_ensemble(cfg: ExperimentConfig, n: int):
    mode, m = parse_ensemble(cfg.ensemble)
    if mode == "exact":
        return enumerate_exact(n)
    return sample_ensemble(n, m, derive_seed(cfg.seed, "ensemble"))


# ======================================================================= runners
def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def _run_posterior(cfg, theta, ens):
    null = NullSet.parse(cfg.null)
    s = summarize_data(theta, ens, cfg.z, null)
    return [{
        "record": "posterior",
        "q_null": s.q_null, "p_pos": s.p_pos, "p_neg": s.p_neg, "post_mean": s.post_mean,
        "log_marginal_density": marginal_log_density(theta, ens, cfg.z),
        "lr_statistic": lr_statistic(theta, ens, cfg.z),
        "null_set": null.describe(), "bound_direction": "point",
    }]


def _decision_record(cfg, theta, oracle):
    z = np.asarray(cfg.z, dtype=float)[None, :]
    if cfg.problem == "global":
        action = int(oracle.decide_batch(z, seed=cfg.seed)[0])
    elif cfg.problem == "estimate":
        action = oracle.decide_batch(z)[0]
        return {"record": "decision", "estimate": action, "selected": cfg_selection(cfg).select(z[0])}
    else:
        summ = oracle.summarize(z)
        if cfg.problem == "fdr":
            action = mt_scan_batch(summ.q_null, oracle.lambda_star)[0][0].astype(int)
        else:
            lab = sign_scan_batch(summ.p_pos, summ.p_neg, oracle.lambda_star)[0][0]
            action = [{1: "+", -1: "-", 0: "NA"}[int(v)] for v in lab]
    return {"record": "decision", "action": action}


def cfg_selection(cfg):
    return SelectionRule.parse(cfg.selection)


def _oracle(cfg, theta, ens):
    return build_oracle(theta, ens, cfg.problem, cfg.alpha, cfg.calibration_draws, cfg.seed,
                        cfg_selection(cfg), NullSet.parse(cfg.null))


def _run_oracle(cfg, theta, ens):
    oracle = _oracle(cfg, theta, ens)
    report = estimate_risk(theta, oracle, cfg.problem, cfg.draws, cfg.seed, cfg_selection(cfg), NullSet.parse(cfg.null))
    report.rule = "pi_oracle"
    rec = {"record": "risk", **report.to_record(), **_oracle_fields(oracle)}
    out = [rec]
    if cfg.z is not None:
        out.append(_decision_record(cfg, theta, oracle))
    return out


def _oracle_fields(oracle):
    out = {}
    if hasattr(oracle, "lambda_star"):
        out.update(lambda_star=oracle.lambda_star, calibration_status=oracle.status,
                   calibrated_constraint=oracle.constraint_estimate,
                   calibrated_constraint_se=oracle.constraint_se, monotone_trace=oracle.monotone)
    if hasattr(oracle, "log_c"):
        out.update(threshold_c=oracle.c, threshold_c_se=oracle.c_std_error, degenerate=oracle.degenerate,
                   calibrated_null_rejection=oracle.null_rejection_rate)
    return out


def _run_risk(cfg, theta, ens):
    sel = cfg_selection(cfg)
    null = NullSet.parse(cfg.null)
    oracle = _oracle(cfg, theta, ens)
    rep_o = estimate_risk(theta, oracle, cfg.problem, cfg.draws, cfg.seed, sel, null)
    rep_o.rule = "pi_oracle"
    out = [{"record": "risk", **rep_o.to_record(), **_oracle_fields(oracle)}]
    for name, rule in baseline_rules(theta.n, cfg.alpha, theta.sigma, sel).items():
        if rule.problem != cfg.problem:
            continue
        rep = estimate_risk(theta, rule, cfg.problem, cfg.draws, cfg.seed, sel, null)
        diff, se = paired_difference(rep, rep_o)
        out.append({"record": "risk", **rep.to_record(), "ensemble_mode": "n/a",
                    "excess_over_oracle": diff, "excess_over_oracle_se": se})
    return out


def _run_bound(cfg, theta, ens):
    sel = cfg_selection(cfg)
    kw = dict(alpha=cfg.alpha, draws=cfg.draws, seed=cfg.seed, selection=sel, null_set=NullSet.parse(cfg.null),
              calibration_draws=cfg.calibration_draws)
    out = []
    lower = subset_lower_bound(theta, cfg.m, cfg.problem, **kw)
    out.append({"record": "bound", **lower.to_record()})
    if theta.n <= 10:
        oracle = _oracle(cfg, theta, enumerate_exact(theta.n))
        exact = estimate_risk(theta, oracle, cfg.problem, cfg.draws, cfg.seed, sel, NullSet.parse(cfg.null))
        exact.rule = "pi_oracle"
        out.append({"record": "bound", **exact.to_record(), **_oracle_fields(oracle)})
    upper = mc_upper_approx(theta, cfg.m, cfg.problem, **kw)
    out.append({"record": "bound", **upper.to_record()})
    return out


def _run_gap(cfg, theta, ens):
    rs, rp, gap, se = gap_estimate(theta, cfg.alpha, cfg.problem, cfg.draws, cfg.seed, cfg_selection(cfg),
                                   NullSet.parse(cfg.null), cfg.calibration_draws)
    return [
        {"record": "gap_component", **rs.to_record()},
        {"record": "gap_component", **rp.to_record()},
        {"record": "gap", "problem": cfg.problem, "risk_simple": rs.estimate, "risk_simple_se": rs.std_error,
         "risk_pi": rp.estimate, "risk_pi_se": rp.std_error, "gap": gap, "gap_se": se,
         "draws": cfg.draws, "seed": cfg.seed, "ensemble_mode": "exact", "bound_direction": "point"},
    ]


RUNNERS = {
    "posterior": _run_posterior,
    "global-test": _run_oracle,
    "fdr-oracle": _run_oracle,
    "sign-oracle": _run_oracle,
    "select-estimate": _run_oracle,
    "risk": _run_risk,
    "bound": _run_bound,
    "gap": _run_gap,
}


def run(cfg: ExperimentConfig) -> list[dict]:
    """Execute one validated configuration and return its output records."""
    cfg.validate()
    theta = cfg.theta_vector()
    ens = make_ensemble(cfg, theta.n) if cfg.command not in ("gap",) else None
    records = RUNNERS[cfg.command](cfg, theta, ens)
    base = {
        "schema": SCHEMA, "command": cfg.command, "config_hash": cfg.digest(), "config": cfg.to_dict(),
        "theta": theta.values, "sigma": theta.sigma, "seed": cfg.seed, "ensemble_mode": ens.label if ens else "exact",
    }
    return [_jsonable({**base, **r}) for r in records]


# ======================================================================== output
_TABLE_KEYS = ("record", "rule", "problem", "risk", "risk_se", "bound_direction", "ensemble_mode", "gap", "gap_se",
               "lambda_star", "threshold_c", "fdr", "dir_fdr", "reject_rate")


def summary_table(records) -> str:
    cols = [k for k in _TABLE_KEYS if any(k in r for r in records)]
    rows = [[_fmt(r.get(k, "")) for k in cols] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths)), "  ".join("-" * w for w in widths)]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def write_outputs(records, output: str | None, csv_path: str | None = None):
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    table = summary_table(records)
    if output and output != "-":
        path = Path(output)
        path.write_text(lines)
        path.with_suffix(".summary.txt").write_text(table)
        sys.stdout.write(table)
    else:
        sys.stdout.write(lines)
        sys.stderr.write(table)
    if csv_path:
        flat = [{k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()} for r in records]
        keys = sorted({k for r in flat for k in r})
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(flat)


# ========================================================================== argv
def _vector(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pi-oracle", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment configuration; flags override its fields")
        p.add_argument("--theta", help="comma list or generator, e.g. 0,0,2,2 or sparse(5,1,3)")
        p.add_argument("--sigma", type=float)
        if name not in _COMMAND_PROBLEM:
            p.add_argument("--problem", choices=("global", "fdr", "sign", "estimate"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--selection", help="all | argmax | topk:K")
        p.add_argument("--ensemble", help="exact | sampled(M)")
        p.add_argument("--draws", type=int)
        p.add_argument("--calibration-draws", type=int, dest="calibration_draws")
        p.add_argument("--seed", type=int)
        p.add_argument("--null", help="null set: a point (0) or an interval lo,hi")
        p.add_argument("--m", type=int, help="sampled subset size for 'bound'")
        p.add_argument("--z", type=_vector, help="data vector for a single decision")
        p.add_argument("--output", "-o", help="JSONL path (summary written next to it); default stdout")
        p.add_argument("--csv", help="also write the records as CSV")
        p.add_argument("--strict", action="store_true", help="exit 4 when a constraint is infeasible")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


_FIELDS = ("theta", "sigma", "problem", "alpha", "selection", "ensemble", "draws", "calibration_draws", "seed",
           "null", "m", "z", "output")


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
            try:
                data = json.loads(text)
            except json.JSONDecodeError:
                # a JSONL output file: every record carries the full config
                data = json.loads(text.splitlines()[0])
        except (OSError, IndexError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        data.pop("command", None)
    for key in _FIELDS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if "theta" not in data:
        raise ConfigError("theta is required (--theta or config file)")
    unknown = set(data) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        return ExperimentConfig(command=args.command, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args).validate()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", InfeasibleConstraintWarning)
            records = run(cfg)
        write_outputs(records, cfg.output, args.csv)
    except ConfigError as exc:
        print(f"pi-oracle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"pi-oracle: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    infeasible = [w for w in caught if issubclass(w.category, InfeasibleConstraintWarning)]
    for w in infeasible:
        print(f"pi-oracle: warning: {w.message}", file=sys.stderr)
    if infeasible and args.strict:
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
