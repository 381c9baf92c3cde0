"""Command line front end: presets, config files, and CSV/JSON emission.

The runner consumes one run-level configuration (possibly spanning several
policies), executes every (policy, threshold) pair, and writes two files
into the output directory:

``results.csv``
    One row per (policy, threshold) in configuration order, plot-ready.
    Floats are printed with 17 significant digits so downstream parsing
    reproduces the binary values exactly.

``summary.json``
    The run manifest (resolved config, package version, timestamp, output
    names), the per-policy rate constants, and the aggregate rows including
    fields that do not fit the CSV (risk stderr, empirical quantile ratio).

Exit codes: 0 success, 2 configuration error, 3 I/O error. The ``verify``
preset runs the solver cross-checks instead of a simulation and exits 0
only if every check passes (1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, TextIO

from .models import (
    Bernoulli,
    Exponential,
    Gaussian,
    ModelError,
    model_from_dict,
    model_to_dict,
)
from .oracle import (
    anomaly_hypotheses,
    hypothesis_action_kl,
    kl_quadrature,
    maximin_action_distribution,
    maximin_action_grid,
)
from .policies import POLICY_NAMES
from .rates import rate_multi, rate_single, relative_loss, unknownl_lower_bound
from .sim import ExperimentConfig, run_experiment, tau1_decay_diagnostic

_LN10 = math.log(10.0)

# Policies whose risk is measured against the unknown-count bound
# -ell * c * log c / D(g||f) rather than -c log c / I*.
_UNKNOWN_COUNT_POLICIES = frozenset({"unknown_l", "chernoff_generic"})

_CSV_COLUMNS = (
    "policy", "M", "K", "L", "neg_log_c", "c", "trials",
    "p_e", "mean_tau", "mean_tau_d", "bayes_risk", "lower_bound",
    "relative_loss", "sigma", "ci_low", "ci_high", "truncations",
)

_CONFIG_KEYS = (
    "policies", "M", "K", "L", "model", "neg_log_c", "trials", "seed",
    "priors", "fixed_hypothesis", "true_target_count", "diagnostics",
)

_DEFAULTS: dict[str, Any] = {
    "policies": ("dgf",),
    "M": 5,
    "K": 1,
    "L": 1,
    "model": {"kind": "exponential", "lambda_f": 0.5, "lambda_g": 10.0},
    "neg_log_c": (1.0, 2.0, 3.0, 4.0, 5.0),
    "trials": 10_000,
    "seed": 271_828,
    "priors": None,
    "fixed_hypothesis": None,
    "true_target_count": None,
    "diagnostics": False,
}

PRESETS: dict[str, dict[str, Any]] = {
    # Five-cell search, one probe per round, strongly informative exponentials.
    "fig2": {
        "policies": ("dgf", "chernoff"),
        "M": 5, "K": 1, "L": 1,
        "model": {"kind": "exponential", "lambda_f": 0.5, "lambda_g": 10.0},
        "neg_log_c": (1.0, 2.0, 3.0, 4.0, 5.0),
    },
    # Two probes per round, mild contrast: the policies pick top-2 cells.
    "fig3": {
        "policies": ("dgf", "chernoff"),
        "M": 5, "K": 2, "L": 1,
        "model": {"kind": "exponential", "lambda_f": 2.0, "lambda_g": 10.0},
        "neg_log_c": (1.0, 2.0, 3.0, 4.0, 5.0),
    },
    # Two probes per round, strong contrast: ranks 2..3 are probed instead.
    "fig4": {
        "policies": ("dgf", "chernoff"),
        "M": 5, "K": 2, "L": 1,
        "model": {"kind": "exponential", "lambda_f": 0.5, "lambda_g": 10.0},
        "neg_log_c": (1.0, 2.0, 3.0, 4.0, 5.0),
    },
    # Dispersion table: costs are powers of ten, c = 1e-1, 1e-3, 1e-5.
    "table2": {
        "policies": ("dgf", "chernoff"),
        "M": 5, "K": 1, "L": 1,
        "model": {"kind": "exponential", "lambda_f": 0.5, "lambda_g": 10.0},
        "neg_log_c": (_LN10, 3.0 * _LN10, 5.0 * _LN10),
    },
    # Three cells, up to two targets, exactly one present: the declare-as-you-go
    # policy against the generic maximin test, conditioned on the first
    # hypothesis being true.
    "table1_example": {
        "policies": ("unknown_l", "chernoff_generic"),
        "M": 3, "K": 1, "L": 2,
        "model": {"kind": "bernoulli", "p_f": 0.1, "p_g": 0.6},
        "neg_log_c": (8.0,),
        "fixed_hypothesis": (0,),
    },
}

PRESET_NAMES = tuple(PRESETS) + ("verify",)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclasses.dataclass(frozen=True)
class RunSpec:
    """Resolved run-level configuration: one model/geometry, many policies."""

    policies: tuple[str, ...]
    M: int
    K: int
    L: int
    model: dict
    neg_log_c: tuple[float, ...]
    trials: int
    seed: int
    priors: tuple[float, ...] | None
    fixed_hypothesis: tuple[int, ...] | None
    true_target_count: int | None
    diagnostics: bool

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("policies", "neg_log_c", "priors", "fixed_hypothesis"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    def experiment_config(self, policy: str) -> ExperimentConfig:
        return ExperimentConfig(
            num_cells=self.M,
            probes_per_round=self.K,
            policy=policy,
            model=model_from_dict(self.model),
            neg_log_c=self.neg_log_c,
            trials=self.trials,
            seed=self.seed,
            num_targets=self.L,
            true_target_count=self.true_target_count,
            priors=self.priors,
            fixed_hypothesis=self.fixed_hypothesis,
            diagnostics=self.diagnostics,
        )


def _merge(layers: Iterable[Mapping[str, Any]]) -> dict[str, Any]:
    merged = dict(_DEFAULTS)
    for layer in layers:
        for key, value in layer.items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}; expected one of {_CONFIG_KEYS}")
            if value is not None or key in ("priors", "fixed_hypothesis", "true_target_count"):
                merged[key] = value
    return merged


def resolve_config(*layers: Mapping[str, Any]) -> RunSpec:
    """Merge config layers (later wins) and validate the result.

    Raises ConfigError naming the offending field; geometry checks that the
    simulator also enforces (K <= M and so on) are re-raised in the same way
    so the caller maps every validation failure to exit code 2.
    """
    merged = _merge(layers)

    policies = merged["policies"]
    if isinstance(policies, str):
        policies = [p.strip() for p in policies.split(",") if p.strip()]
    policies = tuple(policies)
    if not policies:
        raise ConfigError("policies must name at least one policy")
    for name in policies:
        if name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
    if len(set(policies)) != len(policies):
        raise ConfigError("policies must not repeat")

    try:
        model_dict = model_to_dict(model_from_dict(merged["model"]))
    except ModelError as exc:
        raise ConfigError(str(exc)) from None

    def _int(key: str) -> int:
        value = merged[key]
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value

    spec = RunSpec(
        policies=policies,
        M=_int("M"),
        K=_int("K"),
        L=_int("L"),
        model=model_dict,
        neg_log_c=tuple(float(t) for t in merged["neg_log_c"]),
        trials=_int("trials"),
        seed=_int("seed"),
        priors=None if merged["priors"] is None else tuple(float(p) for p in merged["priors"]),
        fixed_hypothesis=None if merged["fixed_hypothesis"] is None
        else tuple(int(m) for m in merged["fixed_hypothesis"]),
        true_target_count=None if merged["true_target_count"] is None
        else int(merged["true_target_count"]),
        diagnostics=bool(merged["diagnostics"]),
    )
    # Surface geometry/threshold violations now rather than mid-run.
    for policy in spec.policies:
        try:
            spec.experiment_config(policy)
        except (ValueError, ModelError) as exc:
            raise ConfigError(f"policy {policy!r}: {exc}") from None
    return spec


def parse_config(source: str | Path | Mapping[str, Any]) -> RunSpec:
    """Load a run config from a JSON file path or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return resolve_config(source)
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return resolve_config(data)


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """What was run, with what build, when, and which files came out."""

    config: dict
    version: str
    created: str
    outputs: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "created": self.created,
            "outputs": list(self.outputs),
        }


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def _rate_entry(spec: RunSpec, policy: str) -> dict:
    model = model_from_dict(spec.model)
    d_gf, d_fg = model.kl_divergences()
    if policy in _UNKNOWN_COUNT_POLICIES:
        cfg = spec.experiment_config(policy)
        return {"d_gf": d_gf, "d_fg": d_fg, "bound": "unknown_count",
                "true_target_count": cfg.true_target_count}
    if policy in ("dgf", "chernoff"):
        report = rate_single(model, spec.M, spec.K)
    else:
        report = rate_multi(model, spec.M, spec.K, spec.L)
    return {"d_gf": report.d_gf, "d_fg": report.d_fg,
            "i_star": report.i_star, "regime": report.regime, "bound": "rate"}


def _lower_bound(spec: RunSpec, policy: str, cost: float) -> float:
    model = model_from_dict(spec.model)
    if policy in _UNKNOWN_COUNT_POLICIES:
        ell = spec.experiment_config(policy).true_target_count
        return unknownl_lower_bound(cost, ell, model)
    if policy in ("dgf", "chernoff"):
        return rate_single(model, spec.M, spec.K).lower_bound_at(cost)
    return rate_multi(model, spec.M, spec.K, spec.L).lower_bound_at(cost)


def run_spec(spec: RunSpec, workers: int = 1,
             progress: TextIO | None = None) -> list[dict]:
    """Execute every (policy, threshold) pair; returns plot-ready row dicts."""
    rows: list[dict] = []
    total = len(spec.policies) * len(spec.neg_log_c)
    emitted = [0]
    start = time.monotonic()

    def report(line: str) -> None:
        emitted[0] += 1
        if progress is not None:
            elapsed = time.monotonic() - start
            print(f"[{emitted[0]}/{total}] {line} ({elapsed:.1f}s)",
                  file=progress, flush=True)

    for policy in spec.policies:
        cfg = spec.experiment_config(policy)
        results = run_experiment(cfg, workers=workers, progress=report)
        for t, (cost, m) in zip(spec.neg_log_c, results):
            bound = _lower_bound(spec, policy, cost)
            rows.append({
                "policy": policy, "M": spec.M, "K": spec.K, "L": spec.L,
                "neg_log_c": t, "c": cost, "trials": m.trial_count,
                "p_e": m.p_e, "mean_tau": m.mean_tau, "mean_tau_d": m.mean_tau_d,
                "bayes_risk": m.bayes_risk, "lower_bound": bound,
                "relative_loss": relative_loss(m.bayes_risk, bound),
                "sigma": m.sigma, "ci_low": m.ci_low, "ci_high": m.ci_high,
                "truncations": m.truncations,
                "risk_stderr": m.risk_stderr, "r_empirical": m.r_empirical,
            })
    return rows


def emit_results(rows: Sequence[Mapping[str, Any]], spec: RunSpec, out_dir: str | Path,
                 extra: Mapping[str, Any] | None = None) -> RunManifest:
    """Write results.csv and summary.json under out_dir; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    csv_path = out / "results.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in _CSV_COLUMNS])

    outputs = ["results.csv", "summary.json"]
    if extra:
        outputs.extend(extra.get("outputs", ()))
    manifest = RunManifest(
        config=spec.to_dict(),
        version=_package_version(),
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        outputs=tuple(outputs),
    )
    summary = {
        "manifest": manifest.to_dict(),
        "rates": {policy: _rate_entry(spec, policy) for policy in spec.policies},
        "results": [dict(row) for row in rows],
    }
    if extra:
        summary.update({k: v for k, v in extra.items() if k != "outputs"})
    with (out / "summary.json").open("w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return manifest


def _package_version() -> str:
    from . import __version__

    return __version__


def _hyp_str(cells: Sequence[int] | int | None) -> str:
    if cells is None:
        return ""
    if isinstance(cells, int):
        return str(cells)
    return "|".join(str(c) for c in cells)


def _write_trial_csv(path: Path, cfg: ExperimentConfig, cost: float,
                     workers: int) -> None:
    from .sim import run_trials

    results = run_trials(cfg, cost, workers=workers)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ("trial_index", "true_hyp", "decision", "tau", "tau_d", "tau1", "correct"))
        for i, r in enumerate(results):
            writer.writerow((
                i, _hyp_str(r.true_hypothesis), _hyp_str(r.decision),
                r.tau, r.tau_d, "" if r.tau1 is None else r.tau1, int(r.correct),
            ))


def _run_diagnostics(spec: RunSpec, out: Path, workers: int,
                     progress: TextIO | None) -> dict:
    """Per-trial CSVs for the last threshold plus the tail-decay fit."""
    extra: dict[str, Any] = {"outputs": [], "diagnostics": {}}
    cost = math.exp(-spec.neg_log_c[-1])
    for policy in spec.policies:
        cfg = spec.experiment_config(policy)
        name = f"trials_{policy}.csv"
        _write_trial_csv(out / name, cfg, cost, workers)
        extra["outputs"].append(name)
        entry: dict[str, Any] = {"per_trial_csv": name}
        if policy in ("dgf", "chernoff"):
            decay = tau1_decay_diagnostic(cfg, cost, workers=workers)
            entry["tau1_decay"] = dataclasses.asdict(decay)
        extra["diagnostics"][policy] = entry
        if progress is not None:
            print(f"[diagnostics] {policy}: wrote {name}", file=progress, flush=True)
    return extra


def _check(label: str, measured: float, expected: float, tol: float,
           failures: list[str], out: TextIO) -> None:
    err = abs(measured - expected)
    ok = err <= tol
    print(f"{'ok  ' if ok else 'FAIL'} {label}: measured={measured:.10g} "
          f"expected={expected:.10g} |err|={err:.3g} tol={tol:g}", file=out)
    if not ok:
        failures.append(label)


def run_verification(out: TextIO = sys.stdout) -> int:
    """Cross-check closed forms against the independent solvers.

    Covers divergence quadrature vs the model closed forms, the maximin
    program vs the single-target closed form, the three-cell two-target
    instance, and agreement between the LP and grid-search solvers.
    """
    failures: list[str] = []

    quad_cases = [
        (Exponential(0.5, 10.0), 1e-6),
        (Exponential(2.0, 10.0), 1e-6),
        (Gaussian(0.0, 1.0, 1.0), 1e-6),
        (Bernoulli(0.2, 0.8), 1e-12),
    ]
    for model, tol in quad_cases:
        d_gf, d_fg = model.kl_divergences()
        q_gf, q_fg = kl_quadrature(model)
        name = f"{model.kind}{tuple(v for v in model_to_dict(model).values() if v != model.kind)}"
        _check(f"quadrature d_gf {name}", d_gf, q_gf, tol, failures, out)
        _check(f"quadrature d_fg {name}", d_fg, q_fg, tol, failures, out)

    # Single-probe maximin against max[D(g||f), D(f||g)/(M-1)]. The dense
    # grid corroboration only runs on the 3-action instances; the grid scan
    # is combinatorial in the action count.
    for model in (Exponential(0.5, 10.0), Exponential(10.0, 0.5)):
        d_gf, d_fg = model.kl_divergences()
        for m_cells in (3, 4, 5):
            hyps = anomaly_hypotheses(m_cells)
            kl = hypothesis_action_kl(model, hyps, m_cells)
            _, value = maximin_action_distribution(kl, 0)
            expected = max(d_gf, d_fg / (m_cells - 1))
            _check(f"maximin single-target M={m_cells} {model.kind} "
                   f"d_gf={d_gf:.3g}", value, expected, 1e-4, failures, out)
            if m_cells == 3:
                _, grid_value = maximin_action_grid(kl, 0)
                _check(f"lp-vs-grid single-target M={m_cells} d_gf={d_gf:.3g}",
                       value, grid_value, 1e-4, failures, out)

    # Three cells, one or two targets, first hypothesis true: the optimal
    # mixture ignores the declared cell and splits evenly over the others.
    model = Bernoulli(0.1, 0.6)
    _, d_fg = model.kl_divergences()
    hyps = anomaly_hypotheses(3, max_targets=2)
    kl = hypothesis_action_kl(model, hyps, 3)
    q, value = maximin_action_distribution(kl, 0)
    _check("two-target instance value", value, d_fg / 2.0, 1e-6, failures, out)
    for i, expected_qi in enumerate((0.0, 0.5, 0.5)):
        _check(f"two-target instance q[{i}]", q[i], expected_qi, 1e-4, failures, out)
    _, grid_value = maximin_action_grid(kl, 0)
    _check("lp-vs-grid two-target instance", value, grid_value, 1e-4, failures, out)

    print(("all checks passed" if not failures
           else f"{len(failures)} check(s) failed: {failures}"), file=out)
    return 0 if not failures else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomsearch",
        description="Monte Carlo runner for sequential anomaly search policies.",
    )
    parser.add_argument("config", nargs="?", help="JSON config file")
    parser.add_argument("--preset", choices=PRESET_NAMES,
                        help="named experiment ('verify' runs solver cross-checks)")
    parser.add_argument("--M", type=int, dest="M", help="number of cells")
    parser.add_argument("--K", type=int, dest="K", help="probes per round")
    parser.add_argument("--L", type=int, dest="L", help="maximum number of targets")
    parser.add_argument("--policy", help="comma-separated policy names "
                                         f"(choices: {', '.join(POLICY_NAMES)})")
    parser.add_argument("--model", choices=("exponential", "gaussian", "bernoulli"),
                        help="observation family; parameters via --lambda-f/--lambda-g")
    parser.add_argument("--lambda-f", type=float, dest="lambda_f",
                        help="normal-cell parameter (rate / mean / success prob.)")
    parser.add_argument("--lambda-g", type=float, dest="lambda_g",
                        help="abnormal-cell parameter (rate / mean / success prob.)")
    parser.add_argument("--neg-log-c", dest="neg_log_c",
                        help="comma-separated -log c grid, natural log")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", help="output directory (default anomsearch-out)")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes; results are identical for any value")
    parser.add_argument("--diagnostics", action="store_true", default=None,
                        help="also write per-trial CSVs and the tail-decay fit")
    return parser


def _flags_layer(args: argparse.Namespace) -> dict[str, Any]:
    layer: dict[str, Any] = {}
    if args.M is not None:
        layer["M"] = args.M
    if args.K is not None:
        layer["K"] = args.K
    if args.L is not None:
        layer["L"] = args.L
    if args.policy is not None:
        layer["policies"] = args.policy
    if args.model is not None or args.lambda_f is not None or args.lambda_g is not None:
        family = args.model or "exponential"
        if args.lambda_f is None or args.lambda_g is None:
            raise ConfigError("--model requires both --lambda-f and --lambda-g")
        key_f, key_g = {
            "exponential": ("lambda_f", "lambda_g"),
            "gaussian": ("mu_f", "mu_g"),
            "bernoulli": ("p_f", "p_g"),
        }[family]
        layer["model"] = {"kind": family, key_f: args.lambda_f, key_g: args.lambda_g}
    if args.neg_log_c is not None:
        try:
            layer["neg_log_c"] = tuple(
                float(tok) for tok in args.neg_log_c.split(",") if tok.strip())
        except ValueError:
            raise ConfigError(f"--neg-log-c must be comma-separated numbers, "
                              f"got {args.neg_log_c!r}") from None
    if args.trials is not None:
        layer["trials"] = args.trials
    if args.seed is not None:
        layer["seed"] = args.seed
    if args.diagnostics is not None:
        layer["diagnostics"] = args.diagnostics
    return layer


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse printed its own message
        code = exc.code
        return code if isinstance(code, int) else 2

    if args.preset == "verify":
        return run_verification()

    try:
        layers: list[Mapping[str, Any]] = []
        if args.preset is not None:
            layers.append(PRESETS[args.preset])
        if args.config is not None:
            path = Path(args.config)
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except OSError as exc:
                print(f"error: cannot read config file {path}: {exc}", file=sys.stderr)
                return 3
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            layers.append(data)
        layers.append(_flags_layer(args))
        spec = resolve_config(*layers)
        if args.workers < 1:
            raise ConfigError("--workers must be a positive integer")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out) if args.out else Path("anomsearch-out")
    try:
        rows = run_spec(spec, workers=args.workers, progress=sys.stderr)
        extra = None
        if spec.diagnostics:
            out_dir.mkdir(parents=True, exist_ok=True)
            extra = _run_diagnostics(spec, out_dir, args.workers, sys.stderr)
        manifest = emit_results(rows, spec, out_dir, extra=extra)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    for name in manifest.outputs:
        print(out_dir / name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
