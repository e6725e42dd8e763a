"""Command-line interface: decompose, explain, simulate.

Contracts:

* reports are JSON on stdout by default (``--out`` redirects to a file); CSV
  artifacts always require explicit paths,
* exit codes: 0 success, 2 input/validation error, 3 numerical failure,
* with fixed seeds, output bytes are identical across runs and across
  ``--threads`` settings; provenance therefore records semantic options only,
  never performance knobs or output paths.

Input schemas:

* decompose CSV: header row with columns ``y``, ``yhat``, one ``phi_<name>``
  per feature, optional constant ``phi0`` column; UTF-8, ``.`` decimal
  separator, no thousands separators,
* explain CSV: header row; one numeric target column named by ``--target``;
  every other column is a numeric feature.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .data import Dataset
from .errors import (
    DegenerateInput,
    FeatureCountExceeded,
    InvalidMatrix,
    InvalidValue,
    ModelExplainsNothing,
    NonPositiveDefinite,
    NoValidSplit,
    ShapeError,
    SingularDesign,
    TargetUnreachable,
    ValidationError,
)
from .metrics import ShapleyMatrix, decompose
from .models import LinearModel, StumpEnsemble, fit_ols, fit_stump_ensemble, tune_iterations
from .report import VERSION, build_report, dumps
from .shapley import (
    EXACT_FEATURE_CAP,
    BackgroundSet,
    SamplingConfig,
    exact_shapley,
    linear_shapley,
    sampled_shapley,
)
from .simulation import (
    DEFAULT_RHO_VALUES,
    GridSpec,
    derive_seed,
    run_grid,
)

_VALIDATION_ERRORS = (
    ValidationError,
    DegenerateInput,
    InvalidValue,
    ShapeError,
    InvalidMatrix,
)
_NUMERICAL_ERRORS = (
    SingularDesign,
    FeatureCountExceeded,
    ModelExplainsNothing,
    NoValidSplit,
    NonPositiveDefinite,
    TargetUnreachable,
)

#: Relative additivity gap beyond which an ingested phi0 triggers a warning.
INGEST_ADDITIVITY_RTOL = 1e-6


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: file is empty")
    header = [name.strip() for name in rows[0]]
    if len(set(header)) != len(header):
        raise ValidationError(f"{path}: duplicate column names in header")
    data = rows[1:]
    for i, row in enumerate(data):
        if len(row) != len(header):
            raise ValidationError(
                f"{path}, line {i + 2}: expected {len(header)} fields, got {len(row)}"
            )
    if not data:
        raise ValidationError(f"{path}: no data rows")
    return header, data


def _parse_column(name: str, idx: int, rows: list[list[str]], path: str) -> np.ndarray:
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        cell = row[idx].strip()
        try:
            if "_" in cell:  # no separators; Python float() would accept them
                raise ValueError
            value = float(cell)
        except ValueError:
            raise ValidationError(
                f"{path}, line {i + 2}, column {name!r}: not a number: {cell!r}"
            ) from None
        if not np.isfinite(value):
            raise ValidationError(
                f"{path}, line {i + 2}, column {name!r}: non-finite value {cell!r}"
            )
        out[i] = value
    return out


def _load_decompose_input(path: str, phi0_flag: float | None):
    header, rows = _read_table(path)
    for required in ("y", "yhat"):
        if required not in header:
            raise ValidationError(f"{path}: missing required column {required!r}")
    phi_names = [name for name in header if name.startswith("phi_")]
    if not phi_names:
        raise ValidationError(f"{path}: no phi_<name> attribution columns found")
    known = {"y", "yhat", "phi0", *phi_names}
    for name in header:
        if name not in known:
            raise ValidationError(f"{path}: unexpected column {name!r}")

    y = _parse_column("y", header.index("y"), rows, path)
    yhat = _parse_column("yhat", header.index("yhat"), rows, path)
    phi_cols = [
        _parse_column(name, header.index(name), rows, path) for name in phi_names
    ]

    phi0 = phi0_flag
    if "phi0" in header:
        if phi0_flag is not None:
            raise ValidationError(
                f"{path}: phi0 provided both as a column and as --phi0"
            )
        col = _parse_column("phi0", header.index("phi0"), rows, path)
        if np.unique(col).size != 1:
            raise ValidationError(f"{path}: phi0 column is not constant")
        phi0 = float(col[0])

    matrix = ShapleyMatrix(
        phi=np.column_stack(phi_cols),
        phi0=phi0,
        feature_names=tuple(name[len("phi_"):] for name in phi_names),
        provenance="ingested",
    )
    return y, yhat, matrix


def _load_explain_input(path: str, target: str) -> Dataset:
    header, rows = _read_table(path)
    if target not in header:
        raise ValidationError(f"{path}: missing target column {target!r}")
    feature_names = [name for name in header if name != target]
    if not feature_names:
        raise ValidationError(f"{path}: no feature columns besides the target")
    y = _parse_column(target, header.index(target), rows, path)
    x = np.column_stack(
        [_parse_column(name, header.index(name), rows, path) for name in feature_names]
    )
    return Dataset(x=x, y=y, feature_names=tuple(feature_names))


# ---------------------------------------------------------------------------
# Output helpers


def _write_text(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # plain-float repr even for numpy scalars
    return str(value)


def _write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def _model_document(model) -> dict:
    if isinstance(model, LinearModel):
        return {
            "type": "linear",
            "intercept": model.intercept,
            "coefficients": [float(c) for c in model.coefficients],
        }
    if isinstance(model, StumpEnsemble):
        return {
            "type": "stump_ensemble",
            "init_value": model.init_value,
            "learning_rate": model.learning_rate,
            "n_features": model.n_features,
            "stumps": [
                {
                    "feature_index": s.feature_index,
                    "threshold": s.threshold,
                    "left_value": s.left_value,
                    "right_value": s.right_value,
                }
                for s in model.stumps
            ],
        }
    raise InvalidValue(f"cannot serialize model of type {type(model).__name__}")


def model_from_document(doc: dict):
    """Rebuild a fitted model from its JSON document."""
    kind = doc.get("type")
    if kind == "linear":
        return LinearModel(
            intercept=float(doc["intercept"]),
            coefficients=np.asarray(doc["coefficients"], dtype=float),
        )
    if kind == "stump_ensemble":
        from .models import Stump

        return StumpEnsemble(
            init_value=float(doc["init_value"]),
            stumps=tuple(
                Stump(
                    feature_index=int(s["feature_index"]),
                    threshold=float(s["threshold"]),
                    left_value=float(s["left_value"]),
                    right_value=float(s["right_value"]),
                )
                for s in doc["stumps"]
            ),
            learning_rate=float(doc["learning_rate"]),
            n_features=int(doc["n_features"]),
        )
    raise ValidationError(f"unknown model document type {kind!r}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_decompose(args) -> int:
    y, yhat, matrix = _load_decompose_input(args.csv, args.phi0)
    extra_warnings: list[str] = []
    if matrix.phi0 is not None:
        gap = matrix.additivity_gap(yhat)
        if gap > INGEST_ADDITIVITY_RTOL:
            extra_warnings.append(
                f"attribution additivity violated: max relative gap {gap:.3e} "
                f"exceeds {INGEST_ADDITIVITY_RTOL:.0e}; the attribution file may "
                f"not match the model that produced yhat"
            )
    result = decompose(y, yhat, matrix, eq7_as_printed=args.eq7_as_printed)
    provenance = {
        "command": "decompose",
        "input": args.csv,
        "options": {
            "phi0": args.phi0,
            "eq7_as_printed": args.eq7_as_printed,
        },
        "seed": None,
        "version": VERSION,
    }
    report = build_report(result, provenance, tuple(extra_warnings))
    _write_text(dumps(report), args.out)
    return 0


def _fit_explain_model(args, dataset: Dataset):
    tuned_iterations = None
    if args.model == "ols":
        if args.target_r2 is not None:
            raise ValidationError("--target-r2 requires --model stumps")
        model = fit_ols(dataset)
    elif args.target_r2 is not None:
        model, _, tuned_iterations = tune_iterations(
            dataset,
            target_r2=args.target_r2,
            learning_rate=args.learning_rate,
        )
    else:
        model = fit_stump_ensemble(
            dataset, iterations=args.iterations, learning_rate=args.learning_rate
        )
    return model, tuned_iterations


def _explain_attributions(args, dataset: Dataset, model) -> ShapleyMatrix:
    if args.sampled:
        config = SamplingConfig(
            permutations_per_instance=args.permutations,
            seed=args.seed,
            background_subsample=args.background_subsample,
        )
        return sampled_shapley(
            model, dataset, BackgroundSet(dataset.x), config, threads=args.threads
        )
    background = BackgroundSet(dataset.x)
    if args.background_subsample is not None:
        if args.background_subsample > dataset.n_rows:
            raise ValidationError(
                "--background-subsample exceeds the number of data rows"
            )
        rng = np.random.Generator(
            np.random.Philox(key=np.uint64(derive_seed(args.seed, 7)))
        )
        idx = rng.choice(dataset.n_rows, size=args.background_subsample, replace=False)
        background = BackgroundSet(dataset.x[np.sort(idx)])
    try:
        return exact_shapley(model, dataset, background, threads=args.threads)
    except FeatureCountExceeded as exc:
        raise FeatureCountExceeded(
            f"{exc} (hint: pass --sampled to use permutation sampling)"
        ) from None


def cmd_explain(args) -> int:
    dataset = _load_explain_input(args.csv, args.target)
    try:
        model, tuned_iterations = _fit_explain_model(args, dataset)
    except SingularDesign as exc:
        raise SingularDesign(
            f"{exc} (hint: drop duplicated or linearly dependent feature columns)"
        ) from None
    yhat = model.predict_batch(dataset.x)
    matrix = _explain_attributions(args, dataset, model)
    result = decompose(dataset.y, yhat, matrix, eq7_as_printed=args.eq7_as_printed)

    options = {
        "target": args.target,
        "model": args.model,
        "learning_rate": args.learning_rate if args.model == "stumps" else None,
        "iterations": (
            tuned_iterations
            if tuned_iterations is not None
            else (args.iterations if args.model == "stumps" else None)
        ),
        "target_r2": args.target_r2,
        "sampled": args.sampled,
        "permutations": args.permutations if args.sampled else None,
        "background_subsample": args.background_subsample,
        "eq7_as_printed": args.eq7_as_printed,
    }
    provenance = {
        "command": "explain",
        "input": args.csv,
        "options": options,
        "seed": args.seed,
        "version": VERSION,
    }
    report = build_report(result, provenance)
    if args.emit_shap is not None:
        names = [f"phi_{name}" for name in matrix.feature_names]
        rows = [
            (
                float(dataset.y[i]),
                float(yhat[i]),
                float(matrix.phi0),
                *(float(v) for v in matrix.phi[i]),
            )
            for i in range(dataset.n_rows)
        ]
        _write_csv(args.emit_shap, ["y", "yhat", "phi0", *names], rows)
    if args.emit_model is not None:
        _write_text(dumps(_model_document(model)), args.emit_model)
    _write_text(dumps(report), args.out)
    return 0


def _grid_from_args(args) -> GridSpec:
    settings: dict = {}
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as handle:
                settings = json.load(handle)
        except OSError as exc:
            raise ValidationError(f"cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON: {exc}") from exc
        unknown = set(settings) - {
            "rho_values",
            "coefficient_configs",
            "n_samples",
            "seed",
            "noise_sd",
            "estimator",
            "permutations",
            "background_subsample",
        }
        if unknown:
            raise ValidationError(
                f"{args.config}: unknown keys {sorted(unknown)}"
            )

    if args.rhos is not None:
        try:
            settings["rho_values"] = [float(v) for v in args.rhos.split(",") if v.strip()]
        except ValueError:
            raise ValidationError(f"--rhos: not a comma-separated float list: {args.rhos!r}") from None
    if args.n_samples is not None:
        settings["n_samples"] = args.n_samples
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.noise_sd is not None:
        settings["noise_sd"] = args.noise_sd
    if args.estimator is not None:
        settings["estimator"] = args.estimator
    if args.permutations is not None:
        settings["permutations"] = args.permutations
    if args.background_subsample is not None:
        settings["background_subsample"] = args.background_subsample

    configs = settings.get("coefficient_configs")
    if configs is not None:
        try:
            parsed = tuple(
                (str(c["id"]), tuple(float(v) for v in c["coefficients"]))
                for c in configs
            )
        except (KeyError, TypeError, ValueError):
            raise ValidationError(
                "coefficient_configs must be a list of "
                '{"id": ..., "coefficients": [...]} records'
            ) from None
        if not parsed:
            raise ValidationError("coefficient_configs is empty")
        widths = {len(c) for _, c in parsed}
        if len(widths) != 1:
            raise ValidationError("coefficient_configs have inconsistent lengths")
        settings["coefficient_configs"] = parsed
        settings["feature_count"] = widths.pop()

    if "rho_values" in settings:
        settings["rho_values"] = tuple(float(v) for v in settings["rho_values"])
        for rho in settings["rho_values"]:
            if not -1.0 <= rho <= 1.0:
                raise ValidationError(f"rho {rho} is outside [-1, 1]")
    return GridSpec(**settings)


def _grid_summary(grid) -> dict:
    spec = grid.spec
    config_rows = []
    for (config_id, coefficients), row in zip(spec.coefficient_configs, grid.cells):
        completed = [
            (rho, cell) for rho, cell in zip(spec.rho_values, row)
            if cell.status == "completed"
        ]
        sigmas = [cell.sigma_unique for _, cell in completed]
        violations = sum(
            1 for a, b in zip(sigmas, sigmas[1:]) if b > a
        )
        at_zero = next(
            (cell.sigma_unique for rho, cell in completed if rho == 0.0), None
        )
        config_rows.append(
            {
                "config_id": config_id,
                "coefficients": [float(c) for c in coefficients],
                "completed": len(completed),
                "skipped_non_pd": len(row) - len(completed),
                "sigma_unique_at_rho_zero": at_zero,
                "min_sigma_unique": min(sigmas) if sigmas else None,
                "max_sigma_unique": max(sigmas) if sigmas else None,
                "monotone_violations": violations,
            }
        )
    return {
        "rho_values": [float(r) for r in spec.rho_values],
        "n_samples": spec.n_samples,
        "estimator": spec.estimator,
        "seed": spec.seed,
        "configs": config_rows,
        "version": VERSION,
    }


def cmd_simulate(args) -> int:
    grid_spec = _grid_from_args(args)
    grid = run_grid(grid_spec, threads=args.threads)
    rows = grid.rows()
    _write_csv(
        args.out,
        ["rho", "config_id", "status", "sigma_unique", "baseline_r2"],
        rows,
    )
    _write_text(dumps(_grid_summary(grid)), args.summary_out)
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapr2",
        description=(
            "Decompose a regression model's explained variance into "
            "per-feature shares using Shapley attributions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dec = sub.add_parser(
        "decompose",
        help="decompose pre-computed attributions from a CSV (y, yhat, phi_*)",
    )
    p_dec.add_argument("csv", help="input CSV with y, yhat, and phi_<name> columns")
    p_dec.add_argument("--phi0", type=float, default=None, help="base value, used only to verify additivity")
    p_dec.add_argument("--eq7-as-printed", action="store_true", help="use the literal (non-increase) unique-variance numerator")
    p_dec.add_argument("--out", default=None, help="write the JSON report here instead of stdout")

    p_exp = sub.add_parser(
        "explain",
        help="fit a built-in model, compute attributions, and decompose",
    )
    p_exp.add_argument("csv", help="input CSV; one target column plus numeric features")
    p_exp.add_argument("--target", required=True, help="name of the outcome column")
    p_exp.add_argument("--model", choices=("ols", "stumps"), default="ols")
    p_exp.add_argument("--iterations", type=int, default=100, help="boosting iterations for --model stumps")
    p_exp.add_argument("--learning-rate", type=float, default=0.1)
    p_exp.add_argument("--target-r2", type=float, default=None, help="search the stump iteration count for this training fit (within 0.01)")
    p_exp.add_argument("--sampled", action="store_true", help="permutation sampling instead of exact enumeration")
    p_exp.add_argument("--permutations", type=int, default=200)
    p_exp.add_argument("--background-subsample", type=int, default=None)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--threads", type=int, default=1)
    p_exp.add_argument("--emit-shap", default=None, help="also write the attribution matrix CSV here")
    p_exp.add_argument("--emit-model", default=None, help="also write the fitted model JSON here")
    p_exp.add_argument("--eq7-as-printed", action="store_true")
    p_exp.add_argument("--out", default=None)

    p_sim = sub.add_parser(
        "simulate",
        help="run the correlation grid and write a long-format CSV",
    )
    p_sim.add_argument("--config", default=None, help="JSON grid spec; flags override its values")
    p_sim.add_argument("--rhos", default=None, help="comma-separated correlation values (default -0.8..0.8 step 0.2)")
    p_sim.add_argument("--n-samples", type=int, default=None)
    p_sim.add_argument("--noise-sd", type=float, default=None)
    p_sim.add_argument("--estimator", choices=("linear", "sampled"), default=None)
    p_sim.add_argument("--permutations", type=int, default=None)
    p_sim.add_argument("--background-subsample", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--out", required=True, help="grid CSV destination")
    p_sim.add_argument("--summary-out", default=None, help="summary JSON destination (default stdout)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        print("error: --seed must be a non-negative integer", file=sys.stderr)
        return 2
    handlers = {
        "decompose": cmd_decompose,
        "explain": cmd_explain,
        "simulate": cmd_simulate,
    }
    try:
        return handlers[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
