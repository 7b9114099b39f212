"""Command-line front end.

Subcommands: ``score``, ``split``, ``select``, ``tune``, ``evaluate``,
``simulate`` and ``replay``. Tabular inputs and outputs are UTF-8 CSV with a
header row; reports are JSON.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error,
3 internal invariant violation (including a failed replay).
"""

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _io, _rng
from .conformal import CalibrationSet, conformal_p_values
from .errors import ValidationError
from .metrics import evaluate
from .montecarlo import SimulationConfig, load_scenario, run_simulation
from .procedures import (
    ProcedureKind,
    bh_select,
    check_alpha,
    conformal_labeling_select,
    quantile_bh_select,
    storey_bh_select,
)
from .regression import LossSpec, RegressionCalibrationRecord, acceptable, build_regression_calibration
from .scores import SCORE_INPUTS, ScoreKind, score_rows
from .tuning import DEFAULT_BOOTSTRAP, TuningConfig, bootstrap_mse, default_grid, select_hyperparameter, tuned_select

log = logging.getLogger("conformal_labeling")

ENV_SEED = "CONFORMAL_LABELING_SEED"
REPORT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

# SeedSequence label for the bootstrap seed derived from a select seed.
_TUNE_STREAM = 3


class InvariantViolation(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _default_seed():
    raw = os.environ.get(ENV_SEED)
    if raw is None:
        return 0
    try:
        return _rng.check_seed(int(raw))
    except ValueError:
        raise ValidationError(f"{ENV_SEED}={raw!r} is not a 64-bit unsigned integer") from None


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    if "lambda" in doc:
        doc["lam"] = doc.pop("lambda")
    return doc


def resolve(args, config, defaults):
    """Merge parameters: command-line flag, then config file, then default.

    A ``seed`` default of ``None`` falls back to the ``CONFORMAL_LABELING_SEED``
    environment variable, then 0.
    """
    unknown = set(config) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    out = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            value = config.get(key)
        if value is None:
            value = _default_seed() if key == "seed" else default
        out[key] = value
    return out


# ---------------------------------------------------------------- score


def cmd_score(args):
    table = _io.read_table(args.input)
    table.require("id")
    probs = _io.indexed_columns(table, "prob_")
    logits = _io.indexed_columns(table, "logit_")
    if probs and logits:
        raise ValidationError(f"{table.path}: file mixes prob_* and logit_* columns")
    kind = ScoreKind(args.kind)
    wanted = SCORE_INPUTS[kind]
    columns = probs if wanted == "prob" else logits
    if not columns:
        raise ValidationError(f"{table.path}: score kind {kind.value} needs {wanted}_0..{wanted}_K-1 columns")

    scores = []
    for i in range(len(table)):
        row = [table.float(i, c) for c in columns]
        try:
            scores.append(float(score_rows([row], kind, args.negate_score)[0]))
        except ValidationError as exc:
            raise ValidationError(f"{table.path}, line {table.lines[i]}: {exc}") from None

    passthrough = [c for c in ("label", "predicted", "correct", "y", "y_hat") if table.has(c)]
    rows = [[table.text(i, "id"), repr(s)] + [table.text(i, c) for c in passthrough]
            for i, s in enumerate(scores)]
    header = ["id", "score"] + passthrough
    if args.output:
        _io.write_table(args.output, header, rows)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------- split


def cmd_split(args):
    table = _io.read_table(args.input)
    seed = args.seed if args.seed is not None else _default_seed()
    cal_idx, test_idx = _io.split_indices(len(table), args.fraction, seed)
    for path, idx in ((args.calibration_out, cal_idx), (args.test_out, test_idx)):
        _io.write_table(path, table.header, [[table.rows[i][c] for c in table.header] for i in idx])
    print(f"calibration rows: {len(cal_idx)}  test rows: {len(test_idx)}")
    return EXIT_OK


# ---------------------------------------------------------------- select

SELECT_DEFAULTS = {
    "calibration": None,
    "test": None,
    "labeled": None,
    "split_fraction": None,
    "split_seed": None,
    "alpha": 0.1,
    "procedure": ProcedureKind.CONFORMAL_LABELING.value,
    "lam": None,
    "k0": None,
    "bootstrap": DEFAULT_BOOTSTRAP,
    "gamma": None,
    "seed": None,
    "negate_score": False,
    "loss": None,
    "epsilon": None,
}


def _regression_prediction(table, i):
    if table.has("y_hat"):
        return table.float(i, "y_hat")
    return (table.float(i, "lower") + table.float(i, "upper")) / 2.0


def _regression_score(table, i):
    if table.has("score"):
        return table.float(i, "score")
    return table.float(i, "upper") - table.float(i, "lower")


def _check_regression_columns(table, need_truth):
    if not (table.has("score") or table.has("lower", "upper")):
        raise ValidationError(f"{table.path}: needs a score column or lower/upper interval columns")
    if need_truth:
        table.require("y")
        if not (table.has("y_hat") or table.has("lower", "upper")):
            raise ValidationError(f"{table.path}: needs y_hat or lower/upper columns")


def _test_truth(table, spec):
    """Ground truth for the test rows if the file carries it, else None."""
    if spec is None:
        truth = _io.correctness(table)
        return None if truth is None else np.array(truth, dtype=bool)
    if table.has("y") and (table.has("y_hat") or table.has("lower", "upper")):
        y = table.column_floats("y")
        y_hat = [_regression_prediction(table, i) for i in range(len(table))]
        return acceptable(spec, y, y_hat)
    return None


def _load_inputs(params):
    if params["labeled"] is not None:
        if params["calibration"] is not None or params["test"] is not None:
            raise ValidationError("use either --labeled or --calibration/--test, not both")
        if params["split_fraction"] is None:
            raise ValidationError("--labeled requires --split-fraction")
        table = _io.read_table(params["labeled"])
        split_seed = params["split_seed"] if params["split_seed"] is not None else params["seed"]
        cal_idx, test_idx = _io.split_indices(len(table), params["split_fraction"], split_seed)
        digests = {"labeled": {"path": str(params["labeled"]), "sha256": _io.sha256_file(params["labeled"])}}
        return table.subset(cal_idx), table.subset(test_idx), digests
    if params["calibration"] is None or params["test"] is None:
        raise ValidationError("--calibration and --test are required (or --labeled with --split-fraction)")
    digests = {
        name: {"path": str(params[name]), "sha256": _io.sha256_file(params[name])}
        for name in ("calibration", "test")
    }
    return _io.read_table(params["calibration"]), _io.read_table(params["test"]), digests


def build_select_report(params):
    """Run the selection pipeline; returns ``(report, selected_id_rows)``.

    The report is a pure function of ``params`` and the input files' bytes.
    """
    alpha = check_alpha(params["alpha"])
    seed = _rng.check_seed(params["seed"])
    kind = ProcedureKind(params["procedure"])
    sign = -1.0 if params["negate_score"] else 1.0
    cal_table, test_table, digests = _load_inputs(params)
    if len(cal_table) == 0:
        raise ValidationError(f"{cal_table.path}: calibration set is empty")
    if len(test_table) == 0:
        raise ValidationError(f"{test_table.path}: test set is empty")
    test_table.require("id")
    ids = [test_table.text(i, "id") for i in range(len(test_table))]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{test_table.path}: duplicate test ids")

    spec = None
    if params["loss"] is not None:
        if params["epsilon"] is None:
            raise ValidationError("--loss requires --epsilon")
        spec = LossSpec(params["loss"], float(params["epsilon"]))
        _check_regression_columns(cal_table, need_truth=True)
        _check_regression_columns(test_table, need_truth=False)
        records = [
            RegressionCalibrationRecord(cal_table.float(i, "y"), _regression_prediction(cal_table, i),
                                        sign * _regression_score(cal_table, i))
            for i in range(len(cal_table))
        ]
        cal = build_regression_calibration(records, spec)
        test_scores = [sign * _regression_score(test_table, i) for i in range(len(test_table))]
    else:
        cal_table.require("score")
        test_table.require("score")
        correct = _io.correctness(cal_table)
        if correct is None:
            raise ValidationError(f"{cal_table.path}: needs a correct column or label and predicted columns")
        cal = CalibrationSet(np.array([sign * s for s in cal_table.column_floats("score")]),
                             np.array(correct, dtype=bool))
        test_scores = [sign * s for s in test_table.column_floats("score")]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pvals = conformal_p_values(cal, test_scores, seed)
        if kind is ProcedureKind.CONFORMAL_LABELING:
            outcome = conformal_labeling_select(pvals, cal.n, alpha)
        elif kind is ProcedureKind.BH:
            outcome = bh_select(pvals, alpha)
        elif kind is ProcedureKind.STOREY_BH and params["lam"] is not None:
            outcome = storey_bh_select(pvals, alpha, float(params["lam"]))
        elif kind is ProcedureKind.QUANTILE_BH and params["k0"] is not None:
            outcome = quantile_bh_select(pvals, alpha, int(params["k0"]))
        else:
            tuning = TuningConfig(bootstrap_replicates=int(params["bootstrap"]), gamma=params["gamma"],
                                  seed=_rng.derive_seed(seed, _TUNE_STREAM))
            outcome = tuned_select(pvals, kind, alpha, tuning)
    if spec is not None:
        outcome = replace(outcome, loss_spec=spec)
    for note in outcome.warnings:
        log.warning(note)

    selected = np.zeros(len(ids), dtype=bool)
    selected[outcome.selected] = True
    if int(selected.sum()) != outcome.cutoff_index:
        raise InvariantViolation("selected count differs from the step-up cutoff index")

    truth = _test_truth(test_table, spec)
    evaluation = None
    if truth is not None:
        evaluation = evaluate(outcome, truth, cal.n, len(ids)).to_dict()

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "select",
        "parameters": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "inputs": digests,
        "seed": seed,
        "n": cal.n,
        "n0": cal.n0,
        "m": len(ids),
        "records": [
            {
                "id": ids[j],
                "score": float(test_scores[j]),
                "p_value": float(pvals.p_values[j]),
                "tie_uniform": float(pvals.tie_uniforms[j]),
                "selected": bool(selected[j]),
            }
            for j in range(len(ids))
        ],
        "outcome": outcome.to_dict(),
        "evaluation": evaluation,
        "warnings": list(outcome.warnings),
    }
    return report, [[ids[j]] for j in outcome.selected]


def _selected_ids_path(args):
    if args.selected_ids:
        return args.selected_ids
    if args.output:
        out = Path(args.output)
        return out.with_name(out.stem + ".selected_ids.csv")
    return None


def cmd_select(args):
    params = resolve(args, _load_config(args.config), SELECT_DEFAULTS)
    report, id_rows = build_select_report(params)
    if args.record_time:
        report["created_at"] = datetime.now(timezone.utc).isoformat()
    text = _dump(report)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    ids_path = _selected_ids_path(args)
    if ids_path:
        _io.write_table(ids_path, ["id"], id_rows)
    log.info("selected %d of %d test instances (n=%d, n0=%d)",
             len(id_rows), report["m"], report["n"], report["n0"])
    return EXIT_OK


# ---------------------------------------------------------------- tune


def _parse_grid(raw, kind):
    if raw is None:
        return None
    items = [s for s in raw.split(",") if s.strip()]
    try:
        return tuple(float(s) for s in items) if kind == "storey" else tuple(int(s) for s in items)
    except ValueError:
        raise ValidationError(f"cannot parse grid {raw!r}") from None


def cmd_tune(args):
    table = _io.read_table(args.pvalues)
    table.require(args.column)
    p = np.array(table.column_floats(args.column))
    if p.size == 0:
        raise ValidationError(f"{table.path}: no p-values")
    gamma = args.gamma if args.gamma is not None else check_alpha(args.alpha)
    seed = args.seed if args.seed is not None else _default_seed()
    cfg = TuningConfig(grid=_parse_grid(args.grid, args.kind), bootstrap_replicates=args.bootstrap,
                       gamma=gamma, seed=seed)
    chosen = select_hyperparameter(p, args.kind, cfg)
    grid = cfg.grid if cfg.grid is not None else default_grid(args.kind, p.size)
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "tune",
        "kind": args.kind,
        "chosen": chosen,
        "grid": list(grid),
        "gamma": gamma,
        "bootstrap_replicates": cfg.bootstrap_replicates,
        "seed": cfg.seed,
        "inputs": {"pvalues": {"path": str(args.pvalues), "sha256": _io.sha256_file(args.pvalues)}},
    }
    if len(set(grid)) > 1:
        values, mse = bootstrap_mse(p, args.kind, cfg)
        doc["mse"] = {repr(v.item()): float(e) for v, e in zip(values, mse)}
    print(chosen)
    if args.output:
        Path(args.output).write_text(_dump(doc), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(args):
    with open(args.report, encoding="utf-8") as fh:
        report = json.load(fh)
    records = report.get("records")
    if not isinstance(records, list):
        raise ValidationError(f"{args.report}: not a selection report")
    truth_table = _io.read_table(args.truth)
    truth_table.require("id")

    spec = None
    if args.loss is not None:
        if args.epsilon is None:
            raise ValidationError("--loss requires --epsilon")
        spec = LossSpec(args.loss, args.epsilon)
    elif (report.get("outcome") or {}).get("loss_spec"):
        spec = LossSpec(**report["outcome"]["loss_spec"])

    if spec is None:
        flags = _io.correctness(truth_table)
        if flags is None:
            raise ValidationError(f"{truth_table.path}: needs a correct column or label and predicted columns")
    else:
        truth_table.require("y")
        if not (truth_table.has("y_hat") or truth_table.has("lower", "upper")):
            raise ValidationError(f"{truth_table.path}: needs y_hat or lower/upper columns")
        y = truth_table.column_floats("y")
        y_hat = [_regression_prediction(truth_table, i) for i in range(len(truth_table))]
        flags = [bool(v) for v in acceptable(spec, y, y_hat)]
    by_id = {truth_table.text(i, "id"): flags[i] for i in range(len(truth_table))}

    missing = [r["id"] for r in records if r["id"] not in by_id]
    if missing:
        raise ValidationError(f"{len(missing)} report id(s) missing from {truth_table.path}: "
                              + ", ".join(missing[:10]))
    truth = np.array([by_id[r["id"]] for r in records], dtype=bool)
    selected = [j for j, r in enumerate(records) if r["selected"]]
    result = evaluate(selected, truth, int(report["n"]), len(records)).to_dict()
    text = _dump(result)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def simulation_config(args):
    """Scenario from ``--scenario``/``--config`` with command-line overrides."""
    if args.scenario and args.config:
        raise ValidationError("use either --scenario or --config")
    if args.scenario:
        cfg = load_scenario(args.scenario)
    elif args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = SimulationConfig.from_dict(json.load(fh))
    else:
        cfg = SimulationConfig(seed=_default_seed())
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.alpha is not None:
        overrides["alpha_grid"] = tuple(float(a) for a in args.alpha.split(","))
    return SimulationConfig.from_dict({**cfg.to_dict(), **overrides}) if overrides else cfg


def cmd_simulate(args):
    cfg = simulation_config(args)
    report = run_simulation(cfg, workers=args.workers)
    if args.output_json:
        Path(args.output_json).write_text(report.to_json(), encoding="utf-8")
    if args.output_csv:
        Path(args.output_csv).write_text(report.to_csv(), encoding="utf-8")
    print(f"{'procedure':<28}{'alpha':>7}{'FDR':>10}{'SE':>9}{'power':>9}{'bound':>9}")
    for c in report.cells:
        print(f"{c.procedure:<28}{c.alpha:>7.3f}{c.fdr:>10.4f}{c.fdr_se:>9.4f}"
              f"{c.mean_power:>9.4f}{c.theorem_bound:>9.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- replay


def cmd_replay(args):
    """Regenerate a report from its embedded inputs and compare bytes."""
    original = Path(args.report).read_text(encoding="utf-8")
    doc = json.loads(original)
    if "cells" in doc:
        cfg = SimulationConfig.from_dict(doc["config"])
        regenerated = run_simulation(cfg, workers=args.workers).to_json()
    elif doc.get("command") == "select":
        for name, entry in doc["inputs"].items():
            if _io.sha256_file(entry["path"]) != entry["sha256"]:
                raise ValidationError(f"{entry['path']}: contents changed since the report was written")
        report, _ = build_select_report(doc["parameters"])
        if "created_at" in doc:
            original = _dump({k: v for k, v in doc.items() if k != "created_at"})
        regenerated = _dump(report)
    else:
        raise ValidationError(f"{args.report}: unrecognized report type")
    if regenerated != original:
        raise InvariantViolation(f"{args.report}: replay differs from the stored report")
    print("replay identical")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    parser = _Parser(prog="conformal-labeling", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="compute uncertainty scores from probabilities or logits")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--kind", required=True, choices=[k.value for k in SCORE_INPUTS])
    p.add_argument("--negate-score", action="store_true")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("split", help="split a labeled file into calibration and test files")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--fraction", required=True, type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--calibration-out", required=True, type=Path)
    p.add_argument("--test-out", required=True, type=Path)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("select", help="compute p-values and select trustworthy labels")
    p.add_argument("--config", type=Path, help="JSON file of parameters; flags override it")
    p.add_argument("--calibration", type=Path)
    p.add_argument("--test", type=Path)
    p.add_argument("--labeled", type=Path, help="single labeled file to split")
    p.add_argument("--split-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--procedure", choices=[k.value for k in ProcedureKind])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k0", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--negate-score", action="store_const", const=True)
    p.add_argument("--loss", choices=["squared_error", "absolute_error", "zero_one"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--output", type=Path)
    p.add_argument("--selected-ids", type=Path)
    p.add_argument("--record-time", action="store_true", help="embed a wall-clock timestamp")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("tune", help="bootstrap-select lambda or k0 for an adaptive procedure")
    p.add_argument("--pvalues", required=True, type=Path)
    p.add_argument("--column", default="p_value")
    p.add_argument("--kind", required=True, choices=["storey", "quantile"])
    p.add_argument("--grid")
    p.add_argument("--bootstrap", type=int, default=DEFAULT_BOOTSTRAP)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float, default=0.1, help="gamma defaults to this level")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="score a selection report against ground truth")
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--loss", choices=["squared_error", "absolute_error", "zero_one"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="Monte Carlo check of FDR control")
    p.add_argument("--scenario", help="bundled scenario name")
    p.add_argument("--config", type=Path, help="simulation config JSON")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", help="comma-separated alpha grid")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output-json", type=Path)
    p.add_argument("--output-csv", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="regenerate a report and check it is byte-identical")
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        # ValidationError plus enum and number conversions of user input
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
