"""
CLI - Command line interface for GUIM pre-training and evaluation.

Commands:
- synth: Generate a synthetic multi-interest corpus
- pretrain: Pre-train a model and write a checkpoint plus metrics log
- gradcheck: Verify analytic gradients against finite differences
- params: Print the per-component parameter breakdown
- eval: CMP (recall@M) or CPP (profile accuracy) from a checkpoint
- export: Write user and item embeddings
- sweep: Pre-train and evaluate over several numbers of vectors

Every command reads the layered configuration (preset, guim.yaml, GUIM_*
environment variables, --set overrides) and one --seed drives all
randomness.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any

import torch
import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from guim import __version__
from guim.capabilities.evaluation.cmp import CmpResult, run_cmp
from guim.capabilities.evaluation.cpp import run_cpp
from guim.capabilities.evaluation.export import (
    export_embeddings,
    read_results,
    relative_improvement,
    write_results,
)
from guim.capabilities.evaluation.inference import infer_embeddings, item_embeddings
from guim.capabilities.networks.batching import CatalogFeatures
from guim.capabilities.networks.model import (
    COMPONENT_LABELS,
    GUIMModel,
    ParameterReport,
    count_parameters,
    resolve_model_config,
)
from guim.capabilities.training.checkpoint import load_checkpoint, restore_model
from guim.capabilities.training.gradcheck import run_gradcheck
from guim.capabilities.training.trainer import (
    MetricsLogWriter,
    Trainer,
    prepare_training,
    pretrain as run_pretrain,
)
from guim.core.config import (
    GUIMConfig,
    ModelConfig,
    TrainConfig,
    build_config,
    load_config,
    parse_overrides,
)
from guim.core.exceptions import (
    CheckpointError,
    ConfigError,
    CorpusError,
    EvaluationError,
    GUIMError,
)
from guim.core.logging import configure_logging, get_logger
from guim.core.models import EvalRecord, ModelVariant
from guim.domain.corpus import (
    Corpus,
    InteractionSequence,
    corpus_statistics,
    load_corpus,
    save_corpus,
    split_users,
)
from guim.domain.synthetic import generate_synthetic

logger = get_logger(__name__)

STATS_FILE = "corpus_stats.json"
METRICS_FILE = "metrics.jsonl"
RESULTS_FILE = "results.json"
USER_EMBEDDINGS_FILE = "user_embeddings.tsv"
ITEM_EMBEDDINGS_FILE = "item_embeddings.tsv"

app = typer.Typer(
    name="guim",
    help="GUIM: multi-vector user representation pre-training",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()

# ============================================================================
# Common Options
# ============================================================================

ConfigOption = Annotated[
    Path | None, typer.Option("--config", "-c", help="Path to a guim.yaml config file")
]
PresetOption = Annotated[
    str | None, typer.Option("--preset", "-p", help="Bundled preset: desk, production, acceptance")
]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Seed for all randomness")]
ThreadsOption = Annotated[int | None, typer.Option("--threads", help="Cap on worker threads")]
OutOption = Annotated[Path | None, typer.Option("--out", "-o", help="Output directory")]
SetOption = Annotated[
    list[str] | None, typer.Option("--set", help="Override a key: section.key=value")
]


def _usage_error(error: GUIMError) -> typer.BadParameter:
    return typer.BadParameter(str(error))


def load_run_config(
    config_path: Path | None,
    preset: str | None,
    seed: int | None,
    threads: int | None,
    out: Path | None,
    assignments: list[str] | None,
) -> GUIMConfig:
    """
    Merge every configuration source and apply command-line flags.

    ``--out`` relocates the corpus and checkpoint paths below it unless they
    are set explicitly.

    Raises:
        typer.BadParameter: On an unknown or invalid key
    """
    try:
        overrides: dict[str, Any] = parse_overrides(assignments or [])
        if seed is not None:
            overrides["seed"] = seed
        if threads is not None:
            overrides["threads"] = threads
        if out is not None:
            paths = overrides.setdefault("paths", {})
            paths.setdefault("out", str(out))
            paths.setdefault("corpus", str(out / "corpus"))
            paths.setdefault("checkpoint", str(out / "checkpoint.guim"))
        config = build_config(load_config(config_path, preset, overrides))
    except ConfigError as e:
        raise _usage_error(e) from e

    configure_logging(config.logging.level, config.logging.format)
    if config.threads is not None:
        torch.set_num_threads(config.threads)
    return config


def _run(action: Any) -> Any:
    """Run a command body, mapping GUIM errors to usage errors or exit code 1."""
    try:
        return action()
    except (ConfigError, CorpusError, CheckpointError, EvaluationError) as e:
        raise _usage_error(e) from e
    except GUIMError as e:
        console.print(f"[red]Error: {escape(str(e))}[/red]")
        raise typer.Exit(1) from e


def _out_dir(config: GUIMConfig) -> Path:
    path = Path(config.paths.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def evaluation_users(corpus: Corpus, train: TrainConfig) -> list[InteractionSequence]:
    """Users held out from pre-training by the user split."""
    _, validation = split_users(corpus.sequences, 1.0 - train.validation_ratio, train.seed)
    return validation


def _load_trained(config: GUIMConfig) -> tuple[GUIMModel, CatalogFeatures, Corpus, TrainConfig]:
    checkpoint = load_checkpoint(Path(config.paths.checkpoint))
    model = restore_model(checkpoint)
    corpus = load_corpus(Path(config.paths.corpus))
    features = CatalogFeatures.build(corpus.catalog, checkpoint.vocab())
    train = TrainConfig.model_validate(checkpoint.train_config)
    return model, features, corpus, train


# ============================================================================
# Display Helpers
# ============================================================================


def display_statistics(stats: dict[str, dict[str, float]]) -> None:
    table = Table(title="Purchases per user")
    table.add_column("Statistic", style="cyan")
    table.add_column("N (pre-cutoff)", justify="right", style="green")
    table.add_column("b (post-cutoff)", justify="right", style="green")
    for key in stats.get("N", {}):
        table.add_row(key, f"{stats['N'][key]:.2f}", f"{stats['b'][key]:.2f}")
    console.print(table)


def display_parameters(report: ParameterReport) -> None:
    table = Table(title=f"Parameters: {report.variant.value}, {report.num_vectors} vector(s)")
    table.add_column("Component", style="cyan")
    table.add_column("Parameters", justify="right", style="green")
    for key, count in report.components.items():
        table.add_row(COMPONENT_LABELS[key], f"{count:,}")
    console.print(table)
    console.print(f"Total: {report.total:,}")

    tables = Table(title="Input tables (reported separately)")
    tables.add_column("Table", style="cyan")
    tables.add_column("Parameters", justify="right", style="green")
    for key, count in report.input_tables.items():
        tables.add_row(key, f"{count:,}")
    console.print(tables)


def display_improvement(records: list[EvalRecord]) -> None:
    table = Table(title="Improvement over single-vector GUIM")
    for column in ("Protocol", "M", "Variant", "Vectors", "Seed", "Mean", "Improvement"):
        table.add_column(column, justify="right" if column != "Variant" else "left")
    for row in relative_improvement(records):
        improvement = "-" if row["improvement"] is None else f"{row['improvement']:+.2f}%"
        table.add_row(
            row["protocol"],
            "-" if row["m"] is None else str(row["m"]),
            row["variant"],
            str(row["num_vectors"]),
            str(row["seed"]),
            f"{row['mean']:.4f}",
            improvement,
        )
    console.print(table)


def _merge_records(path: Path, new: list[EvalRecord]) -> list[EvalRecord]:
    """Replace records of the same run in an existing results file."""
    def key(r: EvalRecord) -> tuple[Any, ...]:
        return (r.protocol, r.m, r.variant, r.num_vectors, r.seed)

    existing = read_results(path) if path.exists() else []
    replaced = {key(r) for r in new}
    merged = [r for r in existing if key(r) not in replaced] + new
    return sorted(merged, key=lambda r: (r.protocol, r.m or 0, r.seed, r.variant, r.num_vectors))


def _cmp_record(result: CmpResult, model_config: ModelConfig, seed: int) -> EvalRecord:
    return EvalRecord(
        protocol=f"CMP-{result.protocol}",
        m=result.m,
        num_vectors=model_config.num_vectors,
        variant=model_config.variant.value,
        seed=seed,
        mean=result.mean,
        users=result.users,
        excluded=result.excluded,
        quantiles=result.quantiles(),
    )


def evaluate_model(
    model: GUIMModel,
    features: CatalogFeatures,
    corpus: Corpus,
    users: list[InteractionSequence],
    config: GUIMConfig,
) -> EvalRecord:
    """Run the configured protocol (CMP-L/S/N or CPP) and build its results record."""
    if config.eval.protocol == "CPP":
        result = run_cpp(model, features, users, corpus.profiles, config.eval, seed=config.seed)
        return EvalRecord(
            protocol=f"CPP-{result.task}",
            m=None,
            num_vectors=model.config.num_vectors,
            variant=model.config.variant.value,
            seed=config.seed,
            mean=result.accuracy,
            users=result.test_size,
        )
    cmp = run_cmp(model, features, users, config.eval.protocol, config.eval)
    return _cmp_record(cmp, model.config, config.seed)


# ============================================================================
# Commands
# ============================================================================


@app.command()
def synth(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
) -> None:
    """
    Generate a synthetic corpus and print its purchase statistics.

    Examples:
        guim synth --preset desk --out runs/desk
        guim synth --set synth.num_users=5000 --seed 3
    """
    config = load_run_config(config_path, preset, seed, threads, out, assignments)

    def action() -> None:
        corpus = generate_synthetic(config.synth)
        save_corpus(corpus, Path(config.paths.corpus))
        stats = corpus_statistics(corpus.sequences)
        stats_path = _out_dir(config) / STATS_FILE
        stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        display_statistics(stats)
        console.print(
            f"[green]Corpus written:[/green] {len(corpus.sequences)} users, "
            f"{len(corpus.catalog)} items -> {config.paths.corpus}"
        )

    _run(action)


@app.command()
def pretrain(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
    resume: bool = typer.Option(False, "--resume", help="Continue from the saved checkpoint"),
) -> None:
    """
    Pre-train on the corpus and write the checkpoint and metrics log.

    Examples:
        guim pretrain --preset desk --out runs/desk
        guim pretrain --set model.num_vectors=4 --set train.epochs=20
    """
    config = load_run_config(config_path, preset, seed, threads, out, assignments)

    def action() -> list[Any]:
        corpus = load_corpus(Path(config.paths.corpus))
        checkpoint_path = Path(config.paths.checkpoint)
        metrics_path = _out_dir(config) / METRICS_FILE
        if resume:
            _, _, features, train, validation = prepare_training(corpus, config.model, config.train)
            with MetricsLogWriter(metrics_path) as metrics:
                trainer = Trainer.resume(
                    checkpoint_path, features=features, config=config.train, metrics=metrics
                )
                trainer.fit(train, validation)
            trainer.save(checkpoint_path)
            return trainer.summaries
        result = run_pretrain(
            corpus,
            config.model,
            config.train,
            checkpoint_path=checkpoint_path,
            metrics_path=metrics_path,
        )
        return result.summaries

    summaries = _run(action)
    table = Table(title="Pre-training")
    for column in ("Epoch", "Steps", "Train loss", "Validation loss", "Improved"):
        table.add_column(column, justify="right")
    for s in summaries:
        table.add_row(
            str(s.epoch),
            str(s.steps),
            f"{s.train_loss:.4f}",
            f"{s.validation_loss:.4f}",
            "yes" if s.improved else "",
        )
    console.print(table)
    console.print(f"[green]Checkpoint:[/green] {config.paths.checkpoint}")


@app.command()
def gradcheck(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
) -> None:
    """
    Compare analytic gradients with central finite differences (64-bit).

    Exits with status 1 when the worst relative error reaches the threshold.
    """
    config = load_run_config(config_path, preset, seed, threads, out, assignments)
    report = _run(lambda: run_gradcheck(config))

    table = Table(title="Gradient check")
    table.add_column("Block", style="cyan")
    table.add_column("Max relative error", justify="right")
    for block, error in sorted(report.per_block.items()):
        table.add_row(block, f"{error:.3e}")
    console.print(table)
    console.print(
        f"Worst: {report.max_rel_error:.3e} in {report.worst_block} ({report.worst_name}); "
        f"{report.samples} coordinates, {report.skipped} skipped"
    )
    threshold = config.gradcheck.threshold
    if not report.passed(threshold):
        console.print(f"[red]FAILED: error above {threshold:g}[/red]")
        raise typer.Exit(1)
    console.print(f"[green]PASSED (threshold {threshold:g})[/green]")


@app.command()
def params(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
) -> None:
    """
    Print the weights-only parameter breakdown of the configured variant.

    Vocabulary sizes left unset are read from the corpus.

    Examples:
        guim params --preset production
        guim params --preset production --set model.variant=gui_edi --set model.num_vectors=4
    """
    config = load_run_config(config_path, preset, seed, threads, out, assignments)

    def action() -> ParameterReport:
        model_config = config.model
        unresolved = None in (
            model_config.num_categories,
            model_config.word_vocab_size,
            model_config.time_rows,
        )
        if unresolved:
            model_config = resolve_model_config(model_config, load_corpus(Path(config.paths.corpus)))
        return count_parameters(model_config)

    display_parameters(_run(action))


@app.command(name="eval")
def evaluate(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
    protocol: str | None = typer.Option(None, "--protocol", help="L, S, N or CPP"),
    m: int | None = typer.Option(None, "--m", "-m", help="Retrieval depth M"),
    compare: bool = typer.Option(False, "--compare", help="Print improvement over C=1"),
) -> None:
    """
    Evaluate a checkpoint on held-out users and update the results file.

    Examples:
        guim eval --protocol L --m 20
        guim eval --protocol CPP
        guim eval --protocol N --compare
    """
    extra = list(assignments or [])
    if protocol is not None:
        extra.append(f"eval.protocol={protocol}")
    if m is not None:
        extra.append(f"eval.m={m}")
    config = load_run_config(config_path, preset, seed, threads, out, extra)

    def action() -> list[EvalRecord]:
        model, features, corpus, train = _load_trained(config)
        users = evaluation_users(corpus, train)
        record = evaluate_model(model, features, corpus, users, config)
        path = _out_dir(config) / RESULTS_FILE
        records = _merge_records(path, [record])
        write_results(path, records)
        return records

    records = _run(action)
    console.print(f"Results: {_out_dir(config) / RESULTS_FILE} ({len(records)} records)")
    if compare:
        display_improvement(records)


@app.command()
def export(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
) -> None:
    """Export user embeddings (pre-cutoff history only) and catalog item embeddings."""
    config = load_run_config(config_path, preset, seed, threads, out, assignments)

    def action() -> tuple[int, int, int]:
        model, features, corpus, _ = _load_trained(config)
        inferred = infer_embeddings(
            model, features, corpus.sequences, batch_size=config.eval.inference_batch_size
        )
        ids, vectors = item_embeddings(model, features)
        target = _out_dir(config)
        users = export_embeddings(target / USER_EMBEDDINGS_FILE, inferred.user_ids, inferred.vectors)
        items = export_embeddings(target / ITEM_EMBEDDINGS_FILE, ids.tolist(), vectors)
        return users, items, inferred.skipped

    users, items, skipped = _run(action)
    console.print(f"[green]Exported[/green] {users} users ({skipped} skipped), {items} items")


@app.command()
def sweep(
    config_path: ConfigOption = None,
    preset: PresetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    assignments: SetOption = None,
    vectors: str = typer.Option("1,2,4", "--vectors", help="Comma-separated numbers of vectors"),
    variants: str = typer.Option("guim", "--variants", help="Comma-separated model variants"),
) -> None:
    """
    Pre-train and evaluate every (variant, number of vectors) pair.

    Example:
        guim sweep --preset acceptance --vectors 1,4 --variants guim,gui_edi
    """
    config = load_run_config(config_path, preset, seed, threads, out, assignments)
    try:
        counts = [int(v) for v in vectors.split(",") if v.strip()]
        kinds = [ModelVariant(v.strip()) for v in variants.split(",") if v.strip()]
    except ValueError as e:
        raise typer.BadParameter(str(e)) from e

    def action() -> list[EvalRecord]:
        corpus = load_corpus(Path(config.paths.corpus))
        users = evaluation_users(corpus, config.train)
        target = _out_dir(config)
        new: list[EvalRecord] = []
        for kind in kinds:
            for count in counts:
                try:
                    model_config = ModelConfig.model_validate(
                        {**config.model.model_dump(), "variant": kind, "num_vectors": count}
                    )
                except ValueError as e:
                    raise ConfigError(f"Invalid sweep point {kind.value} x {count}: {e}") from e
                name = f"{kind.value}_v{count}"
                result = run_pretrain(
                    corpus,
                    model_config,
                    config.train,
                    checkpoint_path=target / "sweep" / f"{name}.guim",
                    metrics_path=target / "sweep" / f"{name}.metrics.jsonl",
                )
                new.append(
                    evaluate_model(result.model, result.trainer.features, corpus, users, config)
                )
        path = target / RESULTS_FILE
        records = _merge_records(path, new)
        write_results(path, records)
        return records

    display_improvement(_run(action))


@app.command()
def version() -> None:
    """Show the installed version."""
    console.print(f"guim {__version__}")


# ============================================================================
# Entry Point
# ============================================================================


def main() -> None:
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
