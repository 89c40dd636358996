"""Command-line interface for malproc monitor."""

import asyncio
import functools
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click
import pandas as pd
import yaml
from colorlog import ColoredFormatter
from pydantic import ValidationError

from . import __version__
from .config import Config, RunConfig
from .decision import default_grid
from .detectors import GruDetector, NeverFireDetector, calibrate, load_detector
from .exceptions import ConfigurationError, InvalidInputError, MalprocError, SamplerError
from .metrics import ComparisonTable, build_report, offline_benchmark
from .models.distillation import distill, split_holdout, train_forest_direct
from .models.gru import GruClassifier
from .models.search import random_search
from .models.training import Trainer
from .monitor import ProcessMonitor
from .notifications.telegram import TelegramNotifier
from .simulation.archetypes import default_library_text, load_library
from .simulation.engine import run_with_detector
from .simulation.scenario import read_scenarios, scenario_suite, write_scenario
from .telemetry.features import Label, ProcessTrace
from .telemetry.traces import read_traces

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_SAMPLER = 4


def setup_colored_logging():
    """Setup colored logging for CLI."""
    formatter = ColoredFormatter(
        "%(log_color)s%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        log_colors={
            "DEBUG": "cyan",
            "INFO": "green",
            "WARNING": "yellow",
            "ERROR": "red",
            "CRITICAL": "red,bg_white",
        },
    )

    handler = logging.StreamHandler()
    handler.setFormatter(formatter)

    logger = logging.getLogger()
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the stable exit-code table."""
    if isinstance(error, (ValidationError, yaml.YAMLError, ConfigurationError)):
        return EXIT_CONFIG
    if isinstance(error, (FileNotFoundError, InvalidInputError)):
        return EXIT_INPUT
    if isinstance(error, SamplerError):
        return EXIT_SAMPLER
    if isinstance(error, MalprocError):
        return error.exit_code
    return 1


def handle_errors(func):
    """Turn library errors into a message and an exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except (click.ClickException, click.Abort):
            raise
        except Exception as e:
            code = exit_code_for(e)
            click.echo(f"❌ {e}", err=True)
            if code == 1:
                logging.getLogger("cli").exception("Unexpected error")
            sys.exit(code)

    return wrapper


def _load_config(ctx) -> RunConfig:
    config_manager = Config(ctx.obj.get("config_path"))
    config = config_manager.get()
    if not ctx.obj.get("verbose"):
        logging.getLogger().setLevel(getattr(logging, config.log_level, logging.INFO))
    ctx.obj["config_manager"] = config_manager
    return config


def _load_traces(path: str) -> List[ProcessTrace]:
    """Traces from a trace file or from a directory of scenarios."""
    source = Path(path)
    if source.is_file():
        traces = read_traces(source)
    else:
        traces = [trace for scenario in read_scenarios(source) for trace in scenario.traces()]
    if not traces:
        raise InvalidInputError(f"No traces found in {path}")
    return traces


def _parse_grid(grid: Optional[str], steps: int) -> Sequence[float]:
    if grid:
        try:
            return [float(v) for v in grid.split(",") if v.strip()]
        except ValueError as e:
            raise ConfigurationError(f"Invalid threshold grid {grid!r}: {e}") from e
    return list(default_grid(steps))


def _parse_model_spec(spec: str, default: Optional[float] = None) -> Tuple[str, str, Optional[float]]:
    """Split ``LABEL=PATH[@THRESHOLD]``; ``default`` stands in for a missing θ."""
    if "=" not in spec:
        raise ConfigurationError(f"Model spec must look like LABEL=PATH[@THRESHOLD], got {spec!r}")
    label, rest = spec.split("=", 1)
    threshold = default
    if "@" in rest:
        rest, value = rest.rsplit("@", 1)
        try:
            threshold = float(value)
        except ValueError as e:
            raise ConfigurationError(f"Invalid threshold in {spec!r}") from e
    return label.strip(), rest.strip(), threshold


def _parse_split_spec(spec: str) -> Tuple[str, str]:
    if "=" not in spec:
        raise ConfigurationError(f"Split spec must look like NAME=DIR, got {spec!r}")
    name, directory = spec.split("=", 1)
    return name.strip(), directory.strip()


def _write_history(history: Sequence[float], path: Path):
    frame = pd.DataFrame({"epoch": range(1, len(history) + 1), "loss": list(history)})
    frame.to_csv(path, index=False, float_format="%.8f")


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "-c", type=click.Path(exists=True), help="Configuration file path")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.pass_context
def cli(ctx, config: Optional[str], verbose: bool):
    """Malproc Monitor - detect and kill malicious processes at run time."""
    setup_colored_logging()

    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config
    ctx.obj["verbose"] = verbose


@cli.command()
@click.option("--output", "-o", type=click.Path(), help="Directory receiving scenario-NNN/ folders")
@click.option("--count", "-n", type=int, default=1, show_default=True, help="Scenarios to generate")
@click.option("--seed", type=int, help="Seed of the first scenario")
@click.option("--benign", type=int, help="Benign applications per scenario")
@click.option("--malicious", type=int, help="Malicious applications per scenario")
@click.option("--library", type=click.Path(), help="Archetype library YAML")
@click.pass_context
@handle_errors
def generate(ctx, output, count, seed, benign, malicious, library):
    """Generate scripted multi-application scenarios."""
    config = _load_config(ctx)
    overrides = {
        key: value
        for key, value in (("seed", seed), ("benign_app_count", benign), ("malicious_app_count", malicious))
        if value is not None
    }
    scenario_config = config.scenario.model_validate({**config.scenario.model_dump(), **overrides})
    archetypes = load_library(library or config.paths.archetypes)
    if count < 1:
        raise ConfigurationError("--count must be at least 1")

    output_dir = Path(output or config.paths.data_dir)
    logging.getLogger("cli").info(
        f"Generating {count} scenario(s) of {scenario_config.app_count} applications into {output_dir}"
    )
    scenarios = scenario_suite(scenario_config, archetypes, count)
    for index, scenario in enumerate(scenarios):
        directory = output_dir if count == 1 and output else output_dir / f"scenario-{index:03d}"
        write_scenario(scenario, directory)
        malicious_apps = sum(1 for app in scenario.apps if app.label is Label.MALICIOUS)
        click.echo(
            f"✅ {directory}: {len(scenario.apps)} apps ({malicious_apps} malicious), "
            f"{len(scenario.processes)} processes, seed {scenario.config.seed}"
        )


@cli.command()
@click.option("--data", "-d", type=click.Path(), required=True, help="Training traces or scenario directory")
@click.option("--output", "-o", type=click.Path(), help="Model file to write")
@click.option("--epochs", type=int, help="Override training epochs")
@click.option("--hidden", type=int, help="Override hidden neurons")
@click.option("--window", type=int, help="Override window size")
@click.option("--loss", "loss_kind", type=click.Choice(["mse", "modified"]), help="Loss function")
@click.option("--variant", "loss_variant", help="Variant of the modified loss")
@click.option("--seed", type=int, help="Training seed")
@click.pass_context
@handle_errors
def train(ctx, data, output, epochs, hidden, window, loss_kind, loss_variant, seed):
    """Train one GRU classifier."""
    config = _load_config(ctx)
    overrides = {
        key: value
        for key, value in (
            ("epochs", epochs),
            ("hidden_neurons", hidden),
            ("window_size", window),
            ("loss_kind", loss_kind),
            ("loss_variant", loss_variant),
            ("seed", seed),
        )
        if value is not None
    }
    hyperparameters = config.training.model_validate({**config.training.model_dump(), **overrides})
    traces = _load_traces(data)

    trainer = Trainer(hyperparameters)
    model = trainer.fit(traces)

    output_path = Path(output or Path(config.paths.models_dir) / "gru.json")
    model.save(output_path)
    history_path = output_path.with_suffix(".history.csv")
    _write_history(trainer.history, history_path)
    click.echo(f"✅ Trained on {len(traces)} traces, wrote {output_path}")
    click.echo(f"📈 Loss history: {history_path}")


@cli.command()
@click.option("--data", "-d", type=click.Path(), required=True, help="Training traces or scenario directory")
@click.option("--validation", type=click.Path(), required=True, help="Validation scenario directory")
@click.option("--trials", "-n", type=int, help="Number of random trials")
@click.option("--objective", type=click.Choice(["offline", "online"]), help="Selection objective")
@click.option("--output", "-o", type=click.Path(), help="Model file for the best trial")
@click.pass_context
@handle_errors
def search(ctx, data, validation, trials, objective, output):
    """Random hyperparameter search."""
    config = _load_config(ctx)
    objective = objective or config.search.objective
    n_trials = config.search.n_trials if trials is None else trials
    traces = _load_traces(data)
    scenarios = read_scenarios(validation)
    validation_set = (
        [t for s in scenarios for t in s.traces()] if objective == "offline" else scenarios
    )

    result = random_search(
        config.search.space,
        n_trials,
        traces,
        validation_set,
        objective=objective,
        base=config.training,
        seed=config.seed,
        on_trial=lambda trial: click.echo(f"🔍 Trial {trial.index + 1}: objective {trial.score:.4f}"),
    )

    output_path = Path(output or Path(config.paths.models_dir) / "gru.json")
    result.model.save(output_path)
    _write_history(result.best.history, output_path.with_suffix(".history.csv"))
    trials_path = output_path.with_suffix(".trials.csv")
    pd.DataFrame(
        [{"trial": t.index + 1, "objective": t.score, **t.hyperparameters.model_dump()} for t in result.trials]
    ).to_csv(trials_path, index=False)
    click.echo(f"🏆 Best trial {result.best.index + 1} ({result.best.score:.4f}) written to {output_path}")
    click.echo(f"📋 Trials: {trials_path}")


@cli.command()
@click.option("--model", "-m", "model_path", type=click.Path(), required=True, help="GRU model file")
@click.option("--validation", type=click.Path(), required=True, help="Validation scenario directory")
@click.option("--steps", type=int, help="Evenly spaced thresholds over [0.5, 1]")
@click.option("--grid", help="Comma-separated thresholds")
@click.option("--output", "-o", type=click.Path(), help="CSV sweep table")
@click.pass_context
@handle_errors
def sweep(ctx, model_path, validation, steps, grid, output):
    """Calibrate θ with kills in the loop; stores the best θ in the model file."""
    config = _load_config(ctx)
    model = GruClassifier.load(model_path)
    scenarios = read_scenarios(validation)
    thresholds = _parse_grid(grid, steps or config.sweep.steps) if (grid or steps) else (
        config.sweep.grid or list(default_grid(config.sweep.steps))
    )

    result = calibrate(GruDetector(model), scenarios, thresholds)

    output_path = Path(output or Path(config.paths.reports_dir) / "sweep.csv")
    result.to_csv(output_path)
    model.threshold = result.best_threshold
    model.save(model_path)
    best = result.best_row
    click.echo(result.table.to_string(index=False))
    click.echo()
    click.echo(
        f"🎯 Best θ = {result.best_threshold:.4f} (FPR {best['fpr']:.4f}, "
        f"FNR over time {best['fnr_over_time']:.4f}); sweep table {output_path}"
    )


@cli.command("distill")
@click.option("--teacher", "-t", type=click.Path(), help="Calibrated GRU model file")
@click.option("--data", "-d", type=click.Path(), required=True, help="Training traces or scenario directory")
@click.option("--output", "-o", type=click.Path(), help="Forest file to write")
@click.option("--trees", type=int, help="Override number of trees")
@click.option("--direct", is_flag=True, help="Train on ground-truth labels instead of a teacher")
@click.pass_context
@handle_errors
def distill_cmd(ctx, teacher, data, output, trees, direct):
    """Distill a GRU into a snapshot-only random forest."""
    config = _load_config(ctx)
    forest_config = config.distill.forest
    if trees is not None:
        forest_config = forest_config.model_validate({**forest_config.model_dump(), "n_trees": trees})
    traces = _load_traces(data)

    if direct:
        forest = train_forest_direct(traces, forest_config)
        default_name = "forest_direct.json"
    else:
        if not teacher:
            raise ConfigurationError("--teacher is required unless --direct is given")
        teacher_model = GruClassifier.load(teacher)
        training, holdout = split_holdout(traces, config.distill.holdout_fraction, forest_config.seed)
        forest = distill(teacher_model, training, forest_config, holdout or None)
        default_name = "forest.json"

    output_path = Path(output or Path(config.paths.models_dir) / default_name)
    forest.save(output_path)
    click.echo(f"🌲 Wrote {forest.n_trees}-tree forest to {output_path}")
    if "teacher_agreement" in forest.metadata:
        click.echo(f"🤝 Teacher agreement: {forest.metadata['teacher_agreement']:.4f}")


@cli.command()
@click.option("--model", "-m", "models", multiple=True, help="LABEL=PATH[@THRESHOLD], replayed with kills")
@click.option("--offline-model", "offline_models", multiple=True,
              help="LABEL=PATH[@THRESHOLD], judged by the offline mean rule")
@click.option("--split", "-s", "splits", multiple=True, required=True, help="NAME=DIR of scenarios")
@click.option("--baseline", is_flag=True, help="Add a never-firing baseline row")
@click.option("--app-level", is_flag=True, help="Roll accuracy up per application")
@click.option("--output", "-o", type=click.Path(), help="Report directory")
@click.pass_context
@handle_errors
def evaluate(ctx, models, offline_models, splits, baseline, app_level, output):
    """Evaluate models on scenario splits and write the comparison table."""
    config = _load_config(ctx)
    if not models and not offline_models and not baseline:
        raise ConfigurationError("Give at least one --model, --offline-model or --baseline")
    output_dir = Path(output or config.paths.reports_dir)

    split_scenarios = {name: read_scenarios(directory) for name, directory in map(_parse_split_spec, splits)}
    table = ComparisonTable()

    for spec in offline_models:
        label, path, threshold = _parse_model_spec(spec, config.threshold)
        model = GruClassifier.load(path)
        traces_by_split = {
            name: [t for s in scenarios for t in s.traces()] for name, scenarios in split_scenarios.items()
        }
        for report in offline_benchmark(model, traces_by_split, threshold, name=label):
            table.add(report)

    detectors = []
    for spec in models:
        label, path, threshold = _parse_model_spec(spec, config.threshold)
        detectors.append((label, load_detector(path, threshold, name=label)))
    if baseline:
        detectors.append(("never-fire", NeverFireDetector()))

    damage_rows = []
    for label, detector in detectors:
        for split, scenarios in split_scenarios.items():
            runs = []
            for index, scenario in enumerate(scenarios):
                result = run_with_detector(scenario, detector)
                result.write_events(output_dir / "events" / split / label / f"scenario-{index:03d}.jsonl")
                runs.append((result.events, scenario.ground_truth()))
                damage_rows.append({
                    "split": split,
                    "model": label,
                    "scenario": index,
                    "files_modified": result.total_files_modified,
                    "baseline_files_modified": result.total_baseline_files,
                    "damage_reduction": result.damage_reduction,
                })
            table.add(build_report(split, label, runs, app_level=app_level, threshold=detector.threshold))

    table.to_csv(output_dir / "comparison.csv")
    table.write_details(output_dir / "processes.jsonl")
    if damage_rows:
        pd.DataFrame(damage_rows).to_csv(output_dir / "damage.csv", index=False)

    click.echo(table.to_text())
    click.echo()
    for split in split_scenarios:
        if table.has_all_models(split):
            click.echo(f"📊 Split {split}: all six model variants present")
    click.echo(f"📁 Reports written to {output_dir}")


@cli.command()
@click.option("--model", "-m", "model_path", type=click.Path(), help="Forest (or GRU) model file")
@click.option("--enforce/--dry-run", default=None, help="Actually kill flagged process trees")
@click.option("--allowlist", type=click.Path(), help="Names or pids never killed")
@click.option("--threshold", type=float, help="Override the model's θ")
@click.option("--event-log", type=click.Path(), help="Line-delimited event log")
@click.option("--sweeps", type=int, help="Stop after this many sweeps")
@click.pass_context
@handle_errors
def monitor(ctx, model_path, enforce, allowlist, threshold, event_log, sweeps):
    """Watch this host at 1 Hz and kill processes the model flags."""
    config = _load_config(ctx)
    overrides = {
        key: value
        for key, value in (
            ("enforce", enforce),
            ("allowlist", allowlist),
            ("threshold", threshold),
            ("event_log", event_log),
        )
        if value is not None
    }
    settings = config.monitor.model_validate({**config.monitor.model_dump(), **overrides})
    if settings.threshold is None and config.threshold is not None:
        settings = settings.model_copy(update={"threshold": config.threshold})
    model_path = model_path or Path(config.paths.models_dir) / "forest.json"
    detector = load_detector(model_path, name=Path(model_path).stem)
    process_monitor = ProcessMonitor.from_settings(
        detector, settings, config.notifications.model_dump()
    )

    click.echo(f"🚀 Starting Malproc Monitor v{__version__}")
    click.echo(f"🧠 Model: {model_path} ({type(detector).__name__}, θ = {detector.threshold:.3f})")
    click.echo(f"⏱️  Period: {settings.period_s}s")
    click.echo("🔪 Mode: ENFORCE" if settings.enforce else "👀 Mode: dry run (use --enforce to kill)")
    click.echo()

    async def run():
        process_monitor.install_signal_handlers()
        await process_monitor.run(max_sweeps=sweeps)

    asyncio.run(run())

    stats = process_monitor.stats
    click.echo()
    click.echo("📊 Session:")
    click.echo(f"  🔁 Sweeps: {stats.sweeps}")
    click.echo(f"  📸 Snapshots: {stats.snapshots}")
    click.echo(f"  🚩 Verdicts: {stats.verdicts}")
    click.echo(f"  🔪 Kills: {stats.kills}")
    click.echo(f"  👀 Dry-run kills: {stats.dry_run_kills}")
    click.echo(f"  ✅ Allowlisted: {stats.skipped_allowlist}")
    click.echo(f"  ⚠️  Warnings: {stats.warnings}")
    if stats.mean_interval is not None:
        click.echo(f"  ⏱️  Mean interval: {stats.mean_interval:.3f}s")


@cli.command()
@click.option("--output", "-o", type=click.Path(), help="Output configuration file path")
@click.pass_context
@handle_errors
def init(ctx, output: Optional[str]):
    """Write an example configuration and a copy of the archetype library."""
    config_path = ctx.obj.get("config_path")
    output_path = Path(output or config_path or "malproc.yaml")

    if output_path.exists():
        if not click.confirm(f"Configuration file {output_path} already exists. Overwrite?"):
            click.echo("❌ Cancelled")
            return

    config_manager = Config(str(output_path))
    example_config = config_manager.create_example_config()
    library_path = output_path.parent / "archetypes.yaml"
    example_config.paths.archetypes = str(library_path)
    config_manager.save(example_config)
    if not library_path.exists():
        library_path.write_text(default_library_text(), encoding="utf-8")

    click.echo(f"✅ Created configuration file: {output_path}")
    click.echo(f"✅ Archetype library: {library_path}")
    click.echo()
    click.echo("📝 Next steps:")
    click.echo("1. malproc-monitor generate -n 10 -o data/train")
    click.echo("2. malproc-monitor train -d data/train")
    click.echo("3. malproc-monitor sweep -m models/gru.json --validation data/validation")
    click.echo("4. malproc-monitor distill -t models/gru.json -d data/train")
    click.echo("5. malproc-monitor monitor (dry run until --enforce)")


@cli.command()
@click.pass_context
@handle_errors
def test_notifications(ctx):
    """Check the Telegram bot configuration."""
    config = _load_config(ctx)
    telegram = config.notifications.telegram
    if not telegram or not telegram.get("enabled"):
        click.echo("❌ No notifiers configured")
        sys.exit(1)

    notifier = TelegramNotifier(telegram)
    click.echo("📬 Testing Telegram bot...")
    if asyncio.run(notifier.test_connection()):
        click.echo("✅ Telegram bot reachable")
    else:
        click.echo("❌ Telegram test failed. Check logs for details.")
        sys.exit(1)


@cli.command()
@click.option("--format", "output_format", type=click.Choice(["yaml", "json"]), default="yaml")
@click.pass_context
@handle_errors
def config(ctx, output_format: str):
    """Display current configuration."""
    config_data = _load_config(ctx).model_dump(mode="json")

    if output_format == "yaml":
        click.echo(yaml.dump(config_data, default_flow_style=False, indent=2, sort_keys=False))
    else:
        click.echo(json.dumps(config_data, indent=2, default=str))


def main():
    """Main entry point for CLI."""
    cli()


if __name__ == "__main__":
    main()
