"""Command-line entry point: prepare / train / infer / eval / report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Machine-readable output goes to stdout, diagnostics to stderr.
"""

import sys
import json
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import fs2k, trainer
from .errors import DataError, RuntimeFailure, UsageError
from .metrics import (
    builtin_metrics,
    emit_report,
    evaluate_pairs,
    load_metric_plugin,
)
from .metrics.evaluate import report_from_dict, report_to_dict

ROOT_ENVVAR = "FSS_DATA_ROOT"


@click.group()
def cli():
    """Facial-sketch synthesis lab."""


def _stats_table(stats_by_split):
    lines = ["split\ttotal\t" + "\t".join(fs2k.SLICE_KEYS)]
    for split, stats in stats_by_split.items():
        cells = [split, str(stats.total)]
        cells += [str(stats.counts[k]) for k in fs2k.SLICE_KEYS]
        lines.append("\t".join(cells))
    return "\n".join(lines)


@cli.command("prepare")
@click.option("--root", envvar=ROOT_ENVVAR, required=True,
              type=click.Path(exists=False))
def cmd_prepare(root):
    """Validate a dataset root and print its split statistics."""
    manifest = fs2k.load_manifest(root)
    stats = {split: fs2k.compute_split_stats(manifest, split)
             for split in fs2k.SPLITS}
    click.echo(_stats_table(stats))


@cli.command("train")
@click.option("--task", type=click.Choice(trainer.TASKS), required=True)
@click.option("--root", envvar=ROOT_ENVVAR, required=True,
              type=click.Path(exists=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_file", type=click.Path(exists=False),
              default=None, help="JSON config overriding the defaults")
@click.option("--no-multi-patch", is_flag=True,
              help="ablation: skip stage 1, feed the raw input to stage 2")
@click.option("--no-style", is_flag=True,
              help="ablation: drop style conditioning (i2s)")
@click.option("--seed", type=int, default=None)
@click.option("--resume", "resume_from", type=click.Path(exists=False),
              default=None, help="checkpoint to resume from")
def cmd_train(task, root, out_dir, config_file, no_multi_patch, no_style,
              seed, resume_from):
    """Train the two-stage pipeline with the published schedule."""
    if config_file is not None:
        if not Path(config_file).exists():
            raise DataError(f"config file {config_file} not found")
        config = trainer.load_config(config_file)
        if config.task != task:
            raise UsageError(f"config file is for task {config.task!r}")
    else:
        config = trainer.default_config(task)

    if task == "s2i" and no_style:
        click.echo("warning: --no-style is redundant for s2i (style is "
                   "already excluded)", err=True)
    use_style = config.ablation.use_style_vector and not no_style
    use_patch = config.ablation.use_multi_patch and not no_multi_patch
    config.ablation = trainer.AblationFlags(use_multi_patch=use_patch,
                                            use_style_vector=use_style)
    if seed is not None:
        config.seed = seed
    config.__post_init__()

    manifest = fs2k.load_manifest(root)
    final_path, rows = trainer.train_run(
        manifest, config, out_dir, resume_from=resume_from)
    trainer.save_config(config, Path(out_dir) / "config.json")
    click.echo(str(final_path))


def _iter_input_images(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in fs2k.IMAGE_EXTS)
        if not files:
            raise DataError(f"no images under {path}")
        return files
    if not path.exists():
        raise DataError(f"input {path} not found")
    return [path]


@cli.command("infer")
@click.option("--checkpoint", required=True, type=click.Path(exists=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--style", type=click.Choice(["1", "2", "3"]), default=None)
def cmd_infer(checkpoint, input_path, out_dir, style):
    """Run the full pipeline on one image or a directory of images."""
    state = trainer.load_checkpoint(checkpoint)
    task = state.config.task
    style_label = int(style) if style is not None else None

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in _iter_input_images(input_path):
        try:
            with Image.open(src) as im:
                mode = "RGB" if task == "i2s" else "L"
                image = np.asarray(im.convert(mode))
        except OSError as exc:
            raise DataError(f"unreadable input {src}: {exc}") from exc
        result = trainer.infer(state, image, task, style=style_label)
        dest = out_dir / f"{src.stem}.png"
        Image.fromarray(result).save(dest)
        click.echo(str(dest))


@cli.command("eval")
@click.option("--pred", "pred_dir", required=True,
              type=click.Path(exists=False))
@click.option("--root", envvar=ROOT_ENVVAR, required=True,
              type=click.Path(exists=False))
@click.option("--metric", default="ssim")
@click.option("--plugin", default=None,
              help="external metric as module:attr (e.g. a SCOOT "
                   "implementation)")
@click.option("--split", type=click.Choice(fs2k.SPLITS), default="test")
@click.option("--label", default=None, help="row label for report tables")
@click.option("--out", "out_file", required=True, type=click.Path())
def cmd_eval(pred_dir, root, metric, plugin, split, label, out_file):
    """Score a prediction directory and write a MetricReport JSON file."""
    if plugin is not None:
        metric_obj = load_metric_plugin(plugin)
    else:
        metrics = builtin_metrics()
        if metric not in metrics:
            raise UsageError(
                f"unknown metric {metric!r}; built-ins: "
                f"{sorted(metrics)}; external metrics via --plugin")
        metric_obj = metrics[metric]

    manifest = fs2k.load_manifest(root)
    report = evaluate_pairs(pred_dir, manifest, split, metric_obj,
                            label=label)
    Path(out_file).write_text(json.dumps(report_to_dict(report), indent=1))
    click.echo(out_file)


@cli.command("report")
@click.option("--in", "in_files", required=True, multiple=True,
              type=click.Path(exists=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "markdown"]),
              default="csv")
@click.option("--out", "out_file", required=True, type=click.Path())
def cmd_report(in_files, fmt, out_file):
    """Render MetricReport JSON files as one comparison table."""
    reports = []
    for path in in_files:
        if not Path(path).exists():
            raise DataError(f"report file {path} not found")
        reports.append(report_from_dict(json.loads(Path(path).read_text())))
    emit_report(reports, fmt, out_file)
    click.echo(out_file)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except UsageError as exc:
        click.echo(f"usage error: {exc}", err=True)
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except (RuntimeFailure, Exception) as exc:  # noqa: BLE001
        click.echo(f"runtime failure: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
