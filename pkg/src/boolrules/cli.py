"""Command line entry points: train, predict, cv, and sweep.

Errors a user can cause (bad flags, malformed data, impossible splits) exit
with code 2 and a one-line diagnostic on stderr; anything else is a bug and
propagates.
"""

from __future__ import annotations

import csv
import sys
import time
from pathlib import Path

import click
import numpy as np

from .colgen import ColGenConfig
from .cv import accuracy, cross_validate, fit_rows, mean_stderr, sweep_validate
from .dataset import DatasetError, read_csv_table
from .ruleset import RuleSet

METRICS_HEADER = ["dataset", "fold", "C", "test_acc", "train_acc",
                  "complexity", "z_train", "lower_bound", "seconds"]
SWEEP_HEADER = ["dataset", "C", "test_acc", "test_stderr", "train_acc",
                "complexity", "complexity_stderr", "pareto"]


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _parse_grid(text: str, name: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        _fail(f"{name} must be a comma-separated list of integers, "
              f"got {text!r}")
    if not values:
        _fail(f"{name} is empty")
    return values


def _load_table(input_path, label_column, positive_label, missing):
    try:
        return read_csv_table(input_path, label_column=label_column,
                              positive_label=positive_label, missing=missing)
    except DatasetError as exc:
        _fail(str(exc))


def _colgen_config(complexity_bound, clause_bound, kappa, time_limit,
                   pricing_time_limit, seed) -> ColGenConfig:
    try:
        return ColGenConfig(
            complexity_bound=complexity_bound,
            clause_bound=clause_bound,
            kappa=kappa,
            time_limit=time_limit,
            pricing_time_limit=pricing_time_limit,
            seed=seed,
        )
    except ValueError as exc:
        _fail(str(exc))


def _dataset_tag(input_path) -> str:
    return Path(input_path).stem


def _sidecar(output: Path, suffix: str) -> Path:
    return output.parent / (output.stem + suffix)


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "master_value", "best_reduced_cost", "mode",
                    "added", "pool_size", "seconds"])
        for t in trace:
            w.writerow([t.iteration, t.master_value, t.best_reduced_cost,
                        t.mode, t.added, t.pool_size, f"{t.seconds:.3f}"])


data_options = [
    click.option("--input", "input_path", required=True,
                 type=click.Path(exists=True, dir_okay=False),
                 help="Input CSV with a header row."),
    click.option("--label-column", required=True,
                 help="Name of the class column."),
    click.option("--positive-label", default=None,
                 help="Which label is the positive class "
                      "(default: the lexicographically larger one)."),
    click.option("--missing", type=click.Choice(["drop", "category"]),
                 default="drop", show_default=True,
                 help="Drop rows with missing cells, or treat a missing "
                      "categorical cell as its own category."),
    click.option("--quantiles", default=9, show_default=True,
                 help="Candidate thresholds per numeric column."),
]

model_options = [
    click.option("--form", type=click.Choice(["dnf", "cnf"]), default="dnf",
                 show_default=True, help="Rule shape: OR of ANDs, or AND of "
                 "ORs learned on the negated problem."),
    click.option("--clause-bound", default=None, type=int,
                 help="Max conditions per clause (default: budget - 1)."),
    click.option("--kappa", default=5, show_default=True,
                 help="Clause size cap for heuristic pricing."),
    click.option("--seed", default=0, show_default=True,
                 help="Master random seed; folds use seed + fold index."),
]


def add_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
def main():
    """Learn small Boolean classification rules with provable quality."""


@main.command()
@add_options(data_options)
@add_options(model_options)
@click.option("--complexity-bound", "-C", required=True, type=int,
              help="Total complexity budget (clauses + conditions).")
@click.option("--time-limit", default=300.0, show_default=True,
              help="Wall-clock budget for the whole run, seconds.")
@click.option("--pricing-time-limit", default=45.0, show_default=True,
              help="Budget per exact pricing round, seconds.")
@click.option("--output", default="model.json", show_default=True,
              type=click.Path(dir_okay=False, writable=True),
              help="Model file; a trace CSV and rules text go next to it.")
def train(input_path, label_column, positive_label, missing, quantiles,
          form, clause_bound, kappa, seed, complexity_bound, time_limit,
          pricing_time_limit, output):
    """Fit one rule set on the whole file and write the model."""
    table = _load_table(input_path, label_column, positive_label, missing)
    cfg = _colgen_config(complexity_bound, clause_bound, kappa, time_limit,
                         pricing_time_limit, seed)
    t0 = time.perf_counter()
    try:
        rs, res, train_ds = fit_rows(table, np.arange(table.n), form, cfg,
                                     quantiles)
    except (DatasetError, ValueError) as exc:
        _fail(str(exc))
    seconds = time.perf_counter() - t0

    out = Path(output)
    out.write_text(rs.to_json())
    _write_trace(_sidecar(out, ".trace.csv"), res.trace)
    rules_path = _sidecar(out, ".rules.txt")
    rules_path.write_text(rs.render() + "\n")

    acc = accuracy(rs, train_ds)
    click.echo(f"trained on {table.n} rows ({len(train_ds.features)} binary "
               f"features) in {seconds:.1f}s [{res.regime} instance]")
    click.echo(f"training accuracy {acc:.4f}, complexity {rs.complexity}, "
               f"{len(rs.clauses)} clauses")
    bound_note = "certified optimal" if res.optimal else "bound gap remains"
    lb_text = "none" if res.lower_bound is None else str(res.lower_bound)
    click.echo(f"training objective {res.objective}, lower bound "
               f"{lb_text} ({bound_note})")
    click.echo(rs.render())
    click.echo(f"model: {out}  trace: {_sidecar(out, '.trace.csv')}  "
               f"rules: {rules_path}")


@main.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of samples to classify; extra columns are ignored.")
@click.option("--output", default=None, type=click.Path(dir_okay=False),
              help="Write one predicted label per line here "
                   "(default: stdout).")
def predict(model, input_path, output):
    """Apply a trained model to new rows using its stored conditions."""
    try:
        rs = RuleSet.from_json(Path(model).read_text())
    except ValueError as exc:
        _fail(f"cannot load model {model}: {exc}")

    with open(input_path, newline="") as fh:
        reader = csv.reader(fh)
        table_rows = [row for row in reader if row]
    if not table_rows:
        labels = []
    else:
        header = [cell.strip() for cell in table_rows[0]]
        try:
            labels = rs.predict_rows(header, table_rows[1:])
        except ValueError as exc:
            _fail(f"{exc} (input columns: {', '.join(header)})")

    text = "".join(label + "\n" for label in labels)
    if output is None:
        click.echo(text, nl=False)
    else:
        Path(output).write_text(text)
        click.echo(f"wrote {len(labels)} predictions to {output}")


def _write_metrics(path, tag, outcomes, zero_seconds):
    """Per-fold rows under the fixed header, then mean and stderr rows."""
    def fmt_seconds(s):
        return "0.0" if zero_seconds else f"{s:.3f}"

    rows = [[tag, o.fold, o.budget, repr(o.test_accuracy),
             repr(o.train_accuracy), o.complexity, o.z_train,
             "" if o.lower_bound is None else o.lower_bound,
             fmt_seconds(o.seconds)] for o in outcomes]
    bounds = [o.lower_bound for o in outcomes if o.lower_bound is not None]
    agg = {}
    for name, values in [
            ("C", [o.budget for o in outcomes]),
            ("test_acc", [o.test_accuracy for o in outcomes]),
            ("train_acc", [o.train_accuracy for o in outcomes]),
            ("complexity", [o.complexity for o in outcomes]),
            ("z_train", [o.z_train for o in outcomes]),
            ("lower_bound", bounds)]:
        agg[name] = mean_stderr(values) if values else (None, None)
    for stat, pick in (("mean", 0), ("stderr", 1)):
        rows.append([tag, stat]
                    + ["" if agg[c][pick] is None else repr(agg[c][pick])
                       for c in ("C", "test_acc", "train_acc", "complexity",
                                 "z_train", "lower_bound")]
                    + ["0.0"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        w.writerows(rows)
    return agg


@main.command()
@add_options(data_options)
@add_options(model_options)
@click.option("--complexity-bound", "-C", default=None, type=int,
              help="Single budget; shorthand for --c-grid with one value.")
@click.option("--c-grid", default=None,
              help="Comma-separated candidate budgets for nested selection.")
@click.option("--folds", default=10, show_default=True,
              help="Outer cross-validation folds.")
@click.option("--inner-folds", default=5, show_default=True,
              help="Inner folds for budget selection.")
@click.option("--jobs", default=1, show_default=True,
              help="Parallel fold workers; 1 is the reproducible mode and "
                   "writes 0.0 in the seconds column.")
@click.option("--time-limit", default=120.0, show_default=True,
              help="Wall-clock budget per training run, seconds.")
@click.option("--pricing-time-limit", default=30.0, show_default=True,
              help="Budget per exact pricing round, seconds.")
@click.option("--metrics", default="metrics.csv", show_default=True,
              type=click.Path(dir_okay=False, writable=True),
              help="Where to write the per-fold metrics CSV.")
def cv(input_path, label_column, positive_label, missing, quantiles, form,
       clause_bound, kappa, seed, complexity_bound, c_grid, folds,
       inner_folds, jobs, time_limit, pricing_time_limit, metrics):
    """Stratified cross-validation with nested budget selection."""
    if folds < 2:
        _fail("cv needs at least 2 folds")
    if c_grid is not None:
        grid = _parse_grid(c_grid, "--c-grid")
    elif complexity_bound is not None:
        grid = [complexity_bound]
    else:
        _fail("pass --c-grid or --complexity-bound")
    table = _load_table(input_path, label_column, positive_label, missing)
    proto = _colgen_config(max(grid), clause_bound, kappa, time_limit,
                           pricing_time_limit, seed)
    try:
        outcomes = cross_validate(table, grid, form=form, folds=folds,
                                  seed=seed, jobs=jobs,
                                  quantile_count=quantiles,
                                  inner_folds=inner_folds, proto=proto)
    except (DatasetError, ValueError) as exc:
        _fail(str(exc))

    tag = _dataset_tag(input_path)
    agg = _write_metrics(metrics, tag, outcomes, zero_seconds=(jobs <= 1))
    acc_mean, acc_se = agg["test_acc"]
    comp_mean, comp_se = agg["complexity"]
    click.echo(f"{folds}-fold cv on {tag}: test accuracy "
               f"{100 * acc_mean:.1f}% (stderr {100 * acc_se:.1f}), "
               f"complexity {comp_mean:.1f} (stderr {comp_se:.1f})")
    click.echo(f"metrics: {metrics}")


@main.command()
@add_options(data_options)
@add_options(model_options)
@click.option("--c-grid", required=True,
              help="Comma-separated budgets, strictly increasing.")
@click.option("--folds", default=10, show_default=True,
              help="Cross-validation folds behind every sweep point.")
@click.option("--jobs", default=1, show_default=True,
              help="Parallel fold workers.")
@click.option("--time-limit", default=120.0, show_default=True,
              help="Wall-clock budget per training run, seconds.")
@click.option("--pricing-time-limit", default=30.0, show_default=True,
              help="Budget per exact pricing round, seconds.")
@click.option("--metrics", default="sweep.csv", show_default=True,
              type=click.Path(dir_okay=False, writable=True),
              help="Where to write the per-budget results CSV.")
def sweep(input_path, label_column, positive_label, missing, quantiles, form,
          clause_bound, kappa, seed, c_grid, folds, jobs, time_limit,
          pricing_time_limit, metrics):
    """Trade accuracy against complexity across a list of budgets."""
    grid = _parse_grid(c_grid, "--c-grid")
    if any(a >= b for a, b in zip(grid, grid[1:])):
        _fail("--c-grid must be strictly increasing")
    table = _load_table(input_path, label_column, positive_label, missing)
    proto = _colgen_config(max(grid), clause_bound, kappa, time_limit,
                           pricing_time_limit, seed)
    try:
        points = sweep_validate(table, grid, form=form, folds=folds,
                                seed=seed, jobs=jobs,
                                quantile_count=quantiles, proto=proto)
    except (DatasetError, ValueError) as exc:
        _fail(str(exc))

    tag = _dataset_tag(input_path)
    with open(metrics, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for p in points:
            w.writerow([tag, p.budget, repr(p.test_accuracy),
                        repr(p.test_stderr), repr(p.train_accuracy),
                        repr(p.complexity), repr(p.complexity_stderr),
                        int(p.pareto)])
    for p in points:
        star = " *" if p.pareto else ""
        click.echo(f"C={p.budget:>4}  test {100 * p.test_accuracy:5.1f}% "
                   f"(stderr {100 * p.test_stderr:.1f})  complexity "
                   f"{p.complexity:.1f}{star}")
    click.echo(f"(* = efficient point)  table: {metrics}")


if __name__ == "__main__":
    main()
