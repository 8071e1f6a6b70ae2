"""Command-line entry point: gen / simulate / train-full / report / serve."""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from .acquisition import AcquisitionKind
from .al_loop import (CSV_FIELDS, ExperimentConfig, aggregate,
                      full_training_ceiling, read_curves_csv, run_experiment,
                      write_curves_csv)
from .corpus_synth import (GenerationError, GeneratorConfig, generate_corpus,
                           load_corpus, save_corpus, split)
from .table_core import ValidationError, corpus_stats
from .talm import ModelConfig, TrainConfig

_KNOWN_ERRORS = (ValidationError, GenerationError, FileNotFoundError, OSError,
                 json.JSONDecodeError)


def _fail(code: str, message: str) -> None:
    json.dump({"error": code, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    sys.exit(1)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _KNOWN_ERRORS as exc:
            _fail(type(exc).__name__, str(exc))
    return wrapper


def _load_config_file(ctx, param, value):
    if value:
        with open(value) as fh:
            ctx.default_map = json.load(fh)
    return value


@click.group(context_settings={"auto_envvar_prefix": "TABAL"})
@click.option("--config", type=click.Path(exists=True), callback=_load_config_file,
              expose_value=False, is_eager=True,
              help="JSON config file; flags override its values.")
def main():
    """Active-learning workbench for sub-cell NER in tables."""
    logging.basicConfig(level=logging.WARNING)


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@main.command()
@click.option("--out", default="out", show_default=True, help="Output directory.")
@click.option("--tables", default=55, show_default=True)
@click.option("--rows", nargs=2, type=int, default=(2, 5), show_default=True)
@click.option("--cols", nargs=2, type=int, default=(3, 8), show_default=True)
@click.option("--target-o-fraction", default=0.77, show_default=True)
@click.option("--noise-rate", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@guarded
def gen(out, tables, rows, cols, target_o_fraction, noise_rate, seed):
    """Generate a synthetic labeled corpus (JSONL) plus its statistics."""
    config = GeneratorConfig(n_tables=tables, rows_range=tuple(rows),
                             cols_range=tuple(cols),
                             target_o_cell_fraction=target_o_fraction,
                             spelling_noise_rate=noise_rate, rng_seed=seed)
    corpus = generate_corpus(config)
    out_path = _out_dir(out)
    save_corpus(corpus, out_path / "corpus.jsonl")
    stats = corpus_stats(corpus).to_json()
    with open(out_path / "stats.json", "w") as fh:
        json.dump(stats, fh, indent=2)
    click.echo(f"wrote {out_path / 'corpus.jsonl'}")
    click.echo(json.dumps(stats, indent=2))


def _experiment_config(seed_size, budget, iterations, repeats, seed, kind,
                       max_epochs) -> ExperimentConfig:
    return ExperimentConfig(seed_size=seed_size, batch_budget=budget,
                            n_iterations=iterations, n_repeats=repeats,
                            base_seed=seed, acquisition=kind,
                            train=TrainConfig(max_epochs=max_epochs))


def _load_split(corpus_path, test_corpus, test_fraction, split_seed):
    corpus = load_corpus(corpus_path)
    if test_corpus:
        return corpus, load_corpus(test_corpus)
    return split(corpus, test_fraction, split_seed)


def _simulate_one(args):
    """Run one acquisition function's experiment; module-level so that
    --jobs can ship it to worker processes."""
    kind, train, test, config = args
    batches = []
    curve = run_experiment(config, train, test,
                           on_batch=lambda k, rep, b: batches.append((rep, b)))
    return curve, batches


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--test-corpus", type=click.Path(exists=True),
              help="Separate test corpus; otherwise --test-fraction split is used.")
@click.option("--test-fraction", default=24 / 79, show_default=True)
@click.option("--split-seed", default=0, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--acquisitions", default="rand,mnlp,mnlp+,badge", show_default=True)
@click.option("--seed-size", default=100, show_default=True)
@click.option("--budget", default=50, show_default=True)
@click.option("--iterations", default=10, show_default=True)
@click.option("--repeats", default=5, show_default=True)
@click.option("--max-epochs", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True,
              help="Parallel workers across acquisition functions.")
@guarded
def simulate(corpus_path, test_corpus, test_fraction, split_seed, out, acquisitions,
             seed_size, budget, iterations, repeats, max_epochs, seed, jobs):
    """Run the AL comparison grid with a simulated oracle."""
    kinds = [AcquisitionKind.parse(k.strip()) for k in acquisitions.split(",") if k.strip()]
    train, test = _load_split(corpus_path, test_corpus, test_fraction, split_seed)
    out_path = _out_dir(out)
    batch_dir = out_path / "batches"
    batch_dir.mkdir(exist_ok=True)

    jobs_args = [(kind, train, test,
                  _experiment_config(seed_size, budget, iterations, repeats, seed,
                                     kind, max_epochs))
                 for kind in kinds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_one, jobs_args))
    else:
        results = [_simulate_one(a) for a in jobs_args]

    curves = []
    for kind, (curve, batches) in zip(kinds, results):
        curves.append(curve)
        by_rep = {}
        for rep, batch in batches:
            by_rep.setdefault(rep, []).append(batch)
        for rep, blist in by_rep.items():
            for i, batch in enumerate(blist, start=1):
                fname = batch_dir / f"{kind.value.replace('+', 'plus')}_rep{rep}_iter{i}.json"
                with open(fname, "w") as fh:
                    json.dump(batch.to_json(), fh)
        finals = [r[-1].micro_f1 for r in curve.repeats]
        click.echo(f"{kind.value}: final F1 mean "
                   f"{sum(finals) / len(finals):.4f}")
    rows = aggregate(curves)
    write_curves_csv(rows, out_path / "curves.csv")
    click.echo(f"wrote {out_path / 'curves.csv'}")


@main.command("train-full")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--test-corpus", type=click.Path(exists=True))
@click.option("--test-fraction", default=24 / 79, show_default=True)
@click.option("--split-seed", default=0, show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--repeats", default=5, show_default=True)
@click.option("--max-epochs", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@guarded
def train_full(corpus_path, test_corpus, test_fraction, split_seed, out, repeats,
               max_epochs, seed):
    """Ceiling benchmark: train on the fully labeled training set."""
    train, test = _load_split(corpus_path, test_corpus, test_fraction, split_seed)
    config = ExperimentConfig(n_repeats=repeats, base_seed=seed,
                              train=TrainConfig(max_epochs=max_epochs))
    ceiling = full_training_ceiling(config, train, test)
    out_path = _out_dir(out)
    with open(out_path / "ceiling.json", "w") as fh:
        json.dump(ceiling, fh, indent=2)
    click.echo(json.dumps(ceiling, indent=2))


@main.command()
@click.option("--curves", "curves_path", required=True, type=click.Path(exists=True))
@click.option("--out", default="out", show_default=True)
@guarded
def report(curves_path, out):
    """Render a curves CSV into a plot and a markdown summary."""
    rows = read_curves_csv(curves_path)
    out_path = _out_dir(out)
    by_kind = {}
    for row in rows:
        by_kind.setdefault(row["acquisition"], []).append(row)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for kind, series in sorted(by_kind.items()):
        series = sorted(series, key=lambda r: r["iteration"])
        xs = [r["labels"] for r in series]
        ax1.errorbar(xs, [r["f1_mean"] for r in series],
                     yerr=[r["f1_std"] for r in series], label=kind, capsize=2)
        ax2.plot([r["iteration"] for r in series[1:]],
                 [r["tables_mean"] for r in series[1:]], label=kind, marker="o")
    ax1.set_xlabel("labels"); ax1.set_ylabel("micro F1"); ax1.legend()
    ax2.set_xlabel("iteration"); ax2.set_ylabel("tables in batch"); ax2.legend()
    fig.tight_layout()
    fig.savefig(out_path / "curves.png", dpi=120)

    lines = ["# Learning curves", "",
             "| acquisition | final labels | final F1 (mean ± std) | mean tables/batch |",
             "|---|---|---|---|"]
    for kind, series in sorted(by_kind.items()):
        final = max(series, key=lambda r: r["iteration"])
        batch_rows = [r for r in series if r["iteration"] >= 1]
        mean_tables = (sum(r["tables_mean"] for r in batch_rows) / len(batch_rows)
                       if batch_rows else 0.0)
        lines.append(f"| {kind} | {final['labels']} | "
                     f"{final['f1_mean']:.4f} ± {final['f1_std']:.4f} | "
                     f"{mean_tables:.1f} |")
    (out_path / "report.md").write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {out_path / 'curves.png'} and {out_path / 'report.md'}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--data-dir", default="tabal_data", show_default=True)
@click.option("--static-dir", default=None,
              help="Directory of built UI assets to serve at /.")
@guarded
def serve(host, port, data_dir, static_dir):
    """Start the annotation service."""
    import uvicorn
    from .service import create_app
    uvicorn.run(create_app(data_dir, static_dir=static_dir), host=host, port=port)


if __name__ == "__main__":
    main()
