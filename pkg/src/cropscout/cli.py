"""Batch command-line client for the detection service.

Every command builds a request, executes it against the service (in
process by default, or a remote instance via ``--server``), and writes the
result files itself. Runs are deterministic given (inputs, config, seed),
never mutate their inputs, and drop a ``*.run.json`` manifest echoing the
fully resolved configuration beside each output.

Option precedence is flags over config-file values over defaults; pass
``--config FILE`` with a JSON object keyed by option name.

Exit codes: 0 success, 2 configuration/usage error, 3 backend failure,
4 data or schema error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import click

from .client import ServiceClient, ServiceError

EXIT_CODES = {"config": 2, "backend": 3, "data": 4}


def _client(server: str | None) -> ServiceClient:
    return ServiceClient.remote(server) if server else ServiceClient.in_process()


def _fail(error: ServiceError) -> None:
    click.echo(f"error ({error.category}): {error}", err=True)
    sys.exit(EXIT_CODES[error.category])


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}")
    if not isinstance(values, dict):
        raise click.UsageError(f"config file {path} must contain a JSON object")
    return values


def _resolve(ctx: click.Context, config: dict[str, Any], names: Sequence[str]) -> dict[str, Any]:
    """Apply flag > config-file > default precedence per option."""
    unknown = set(config) - set(names)
    if unknown:
        raise click.UsageError(f"unknown config file keys: {sorted(unknown)}")
    resolved = {}
    for name in names:
        source = ctx.get_parameter_source(name)
        if source == click.core.ParameterSource.COMMANDLINE or name not in config:
            resolved[name] = ctx.params[name]
        else:
            resolved[name] = config[name]
    return resolved


def _parse_vocab(value: str) -> list[str]:
    """A vocabulary flag is a file of names (one per line) or a comma list."""
    path = Path(value)
    if path.is_file():
        names = [
            ln.strip()
            for ln in path.read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.strip().startswith("#")
        ]
    else:
        names = [part.strip() for part in value.split(",") if part.strip()]
    if not names:
        raise click.UsageError(f"vocabulary is empty: {value!r}")
    return names


def _read_prompt_file(path: str | None) -> list[str] | None:
    if path is None:
        return None
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise click.UsageError(f"cannot read prompt file {path}: {exc}")
    return [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]


def _write_jsonl(records: Sequence[dict[str, Any]], out: Path) -> None:
    lines = [json.dumps(r, ensure_ascii=False) for r in records]
    out.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _write_run_manifest(out: Path, command: str, resolved: dict[str, Any]) -> None:
    manifest = {"command": command, "resolved_config": resolved}
    out.with_suffix(".run.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def _run(call: Callable[[], None]) -> None:
    try:
        call()
    except ServiceError as error:
        _fail(error)


@click.group()
@click.version_option(package_name="cropscout")
def main() -> None:
    """Open-vocabulary crop detection tools."""


server_option = click.option("--server", default=None, help="Base URL of a running service.")
config_option = click.option(
    "--config", "config_file", default=None, help="JSON config file (flags override it)."
)
seed_option = click.option("--seed", default=0, show_default=True, help="Run seed.")


@main.command("backends")
@server_option
def cmd_backends(server: str | None) -> None:
    """List available backend suites."""

    def call() -> None:
        for name in _client(server).get("/backends")["suites"]:
            click.echo(name)

    _run(call)


@main.command("detect")
@click.option("--images", multiple=True, required=True, help="Image path (repeatable).")
@click.option("--vocab", required=True, help="Comma-separated class names or a names file.")
@click.option("--backends", default="stub", show_default=True, help="Suite name or file.")
@click.option("--iou-threshold", default=0.5, show_default=True)
@click.option("--mask-threshold", default=0.5, show_default=True)
@click.option("--class-aware-nms/--class-agnostic-nms", "class_aware_nms", default=True)
@click.option(
    "--empty-mask-policy",
    type=click.Choice(["keep", "drop"]),
    default="keep",
    show_default=True,
)
@click.option("--prompt-ensemble/--first-template-only", "prompt_ensemble", default=True)
@click.option("--prompt-file", default=None, help="Prompt template file, one per line.")
@click.option("--include-masks/--no-include-masks", "include_masks", default=True)
@click.option("--workers", default=1, show_default=True, help="Image worker pool size.")
@click.option("--annotate", default=None, help="Directory for annotated renderings.")
@click.option("--out", required=True, help="Output detection document (JSON lines).")
@seed_option
@config_option
@server_option
@click.pass_context
def cmd_detect(ctx: click.Context, **kwargs: Any) -> None:
    """Detect vocabulary classes in images."""
    config = _load_config_file(kwargs["config_file"])
    names = [
        "images",
        "vocab",
        "backends",
        "iou_threshold",
        "mask_threshold",
        "class_aware_nms",
        "empty_mask_policy",
        "prompt_ensemble",
        "prompt_file",
        "include_masks",
        "workers",
        "annotate",
        "out",
        "seed",
        "server",
    ]
    resolved = _resolve(ctx, config, names)
    vocabulary = _parse_vocab(resolved["vocab"])
    templates = _read_prompt_file(resolved["prompt_file"])
    out = Path(resolved["out"])

    def call() -> None:
        payload = {
            "images": list(resolved["images"]),
            "vocabulary": vocabulary,
            "backends": resolved["backends"],
            "seed": resolved["seed"],
            "workers": resolved["workers"],
            "iou_threshold": resolved["iou_threshold"],
            "mask_threshold": resolved["mask_threshold"],
            "class_aware_nms": resolved["class_aware_nms"],
            "empty_mask_policy": resolved["empty_mask_policy"],
            "prompt_ensemble": resolved["prompt_ensemble"],
            "prompt_templates": templates,
            "include_masks": resolved["include_masks"],
        }
        records = _client(resolved["server"]).post("/detect", payload)["records"]
        _write_jsonl(records, out)
        _write_run_manifest(out, "detect", {**resolved, "images": list(resolved["images"])})
        if resolved["annotate"]:
            _render_annotations(records, Path(resolved["annotate"]))
        click.echo(f"wrote {len(records)} detection records to {out}")

    _run(call)


def _render_annotations(records: Sequence[dict[str, Any]], directory: Path) -> None:
    from .geometry import BoundingBox
    from .images import load_image, render_annotated, save_image

    directory.mkdir(parents=True, exist_ok=True)
    for record in records:
        image = load_image(record["image"])
        boxes = [BoundingBox(*det["box"]) for det in record["detections"]]
        labels = [
            f"{det['class_name']} {det['fused_score']:.2f}" for det in record["detections"]
        ]
        annotated = render_annotated(image, boxes, labels)
        save_image(annotated, directory / (Path(record["image"]).stem + ".png"))


@main.command("classify")
@click.option("--images", multiple=True, required=True, help="Image path (repeatable).")
@click.option("--vocab", required=True, help="Comma-separated class names or a names file.")
@click.option("--backends", default="stub", show_default=True)
@click.option("--temperature", default=0.07, show_default=True)
@click.option("--prompt-ensemble/--first-template-only", "prompt_ensemble", default=True)
@click.option("--prompt-file", default=None)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", required=True, help="Output classification document (JSON lines).")
@seed_option
@config_option
@server_option
@click.pass_context
def cmd_classify(ctx: click.Context, **kwargs: Any) -> None:
    """Classify the dominant vocabulary class of whole images."""
    config = _load_config_file(kwargs["config_file"])
    names = [
        "images",
        "vocab",
        "backends",
        "temperature",
        "prompt_ensemble",
        "prompt_file",
        "workers",
        "out",
        "seed",
        "server",
    ]
    resolved = _resolve(ctx, config, names)
    vocabulary = _parse_vocab(resolved["vocab"])
    templates = _read_prompt_file(resolved["prompt_file"])
    out = Path(resolved["out"])

    def call() -> None:
        payload = {
            "images": list(resolved["images"]),
            "vocabulary": vocabulary,
            "backends": resolved["backends"],
            "seed": resolved["seed"],
            "workers": resolved["workers"],
            "temperature": resolved["temperature"],
            "prompt_ensemble": resolved["prompt_ensemble"],
            "prompt_templates": templates,
        }
        records = _client(resolved["server"]).post("/classify", payload)["records"]
        _write_jsonl(records, out)
        _write_run_manifest(out, "classify", {**resolved, "images": list(resolved["images"])})
        click.echo(f"wrote {len(records)} classification records to {out}")

    _run(call)


@main.command("train-alignment")
@click.option("--manifest", required=True, help="Caption manifest (JSON lines).")
@click.option("--epochs", default=150, show_default=True)
@click.option("--learning-rate", default=5e-7, show_default=True)
@click.option("--batch-size", default=20, show_default=True)
@click.option("--temperature-init", default=0.07, show_default=True)
@click.option("--embedding-dim", default=512, show_default=True)
@click.option("--feature-grid", default=2, show_default=True)
@click.option("--split", type=click.Choice(["train", "test"]), default="train")
@click.option("--out-trace", required=True, help="Loss trace output (TSV).")
@click.option("--out-params", required=True, help="Trained parameters output (JSON).")
@seed_option
@config_option
@server_option
@click.pass_context
def cmd_train_alignment(ctx: click.Context, **kwargs: Any) -> None:
    """Fine-tune the toy encoders on a caption manifest."""
    config = _load_config_file(kwargs["config_file"])
    names = [
        "manifest",
        "epochs",
        "learning_rate",
        "batch_size",
        "temperature_init",
        "embedding_dim",
        "feature_grid",
        "split",
        "out_trace",
        "out_params",
        "seed",
        "server",
    ]
    resolved = _resolve(ctx, config, names)
    out_trace = Path(resolved["out_trace"])
    out_params = Path(resolved["out_params"])

    def call() -> None:
        payload = {
            "manifest": resolved["manifest"],
            "epochs": resolved["epochs"],
            "learning_rate": resolved["learning_rate"],
            "batch_size": resolved["batch_size"],
            "temperature_init": resolved["temperature_init"],
            "embedding_dim": resolved["embedding_dim"],
            "feature_grid": resolved["feature_grid"],
            "split": resolved["split"],
            "seed": resolved["seed"],
        }
        result = _client(resolved["server"]).post("/train/alignment", payload)
        lines = ["epoch\tmean_loss\ttau"]
        lines.extend(
            f"{int(row['epoch'])}\t{row['mean_loss']!r}\t{row['tau']!r}"
            for row in result["trace"]
        )
        out_trace.write_text("\n".join(lines) + "\n", encoding="utf-8")
        out_params.write_text(
            json.dumps({"seed": result["seed"], **result["params"]}, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        _write_run_manifest(out_trace, "train-alignment", resolved)
        final = result["trace"][-1]
        click.echo(
            f"trained {len(result['trace'])} epochs; "
            f"final mean loss {final['mean_loss']:.6f}, tau {result['final_tau']:.6f}"
        )

    _run(call)


@main.command("eval-classification")
@click.option("--predictions", required=True, help="Predicted labels (classify output).")
@click.option("--truths", required=True, help="Ground-truth labels (JSON lines).")
@click.option("--vocab", default=None, help="Optional vocabulary for species labels.")
@click.option("--out", required=True, help="Report output (JSON, plus a .tsv table).")
@config_option
@server_option
@click.pass_context
def cmd_eval_classification(ctx: click.Context, **kwargs: Any) -> None:
    """Score predicted classes against ground truth."""
    config = _load_config_file(kwargs["config_file"])
    resolved = _resolve(ctx, config, ["predictions", "truths", "vocab", "out", "server"])
    vocabulary = _parse_vocab(resolved["vocab"]) if resolved["vocab"] else None
    out = Path(resolved["out"])

    def call() -> None:
        payload = {
            "predictions": resolved["predictions"],
            "truths": resolved["truths"],
            "vocabulary": vocabulary,
        }
        result = _client(resolved["server"]).post("/evaluate/classification", payload)
        out.write_text(
            json.dumps(result["report"], indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        out.with_suffix(".tsv").write_text(result["table"], encoding="utf-8")
        _write_run_manifest(out, "eval-classification", resolved)
        click.echo(f"overall accuracy {result['report']['overall_accuracy']:.4f}")

    _run(call)


@main.command("eval-detection")
@click.option("--detections", required=True, help="Detection document (detect output).")
@click.option("--dataset", required=True, help="Ground-truth dataset (JSON).")
@click.option(
    "--iou-thresholds", default="0.5,0.75", show_default=True, help="Comma-separated list."
)
@click.option("--out", required=True, help="Report output (JSON, plus a .tsv table).")
@config_option
@server_option
@click.pass_context
def cmd_eval_detection(ctx: click.Context, **kwargs: Any) -> None:
    """Compute average precision of a detection run."""
    config = _load_config_file(kwargs["config_file"])
    resolved = _resolve(
        ctx, config, ["detections", "dataset", "iou_thresholds", "out", "server"]
    )
    try:
        thresholds = [float(part) for part in str(resolved["iou_thresholds"]).split(",") if part]
    except ValueError as exc:
        raise click.UsageError(f"invalid --iou-thresholds: {exc}")
    out = Path(resolved["out"])

    def call() -> None:
        payload = {
            "detections": resolved["detections"],
            "dataset": resolved["dataset"],
            "iou_thresholds": thresholds,
        }
        result = _client(resolved["server"]).post("/evaluate/detection", payload)
        out.write_text(
            json.dumps(result["report"], indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        out.with_suffix(".tsv").write_text(result["table"], encoding="utf-8")
        _write_run_manifest(out, "eval-detection", resolved)
        means = ", ".join(
            f"AP@{t}={result['report']['mean_ap'][str(t)]:.4f}" for t in thresholds
        )
        click.echo(means)

    _run(call)


@main.command("gen-caption-prompts")
@click.option("--listing", required=True, help="Image listing with species (JSON lines).")
@click.option("--out", required=True, help="Prompt batch output (JSON lines).")
@config_option
@server_option
@click.pass_context
def cmd_gen_caption_prompts(ctx: click.Context, **kwargs: Any) -> None:
    """Emit captioning prompts for an external caption model."""
    config = _load_config_file(kwargs["config_file"])
    resolved = _resolve(ctx, config, ["listing", "out", "server"])
    out = Path(resolved["out"])

    def call() -> None:
        result = _client(resolved["server"]).post(
            "/captions/prompts", {"listing": resolved["listing"]}
        )
        _write_jsonl(result["records"], out)
        _write_run_manifest(out, "gen-caption-prompts", resolved)
        click.echo(f"wrote {len(result['records'])} prompts to {out}")

    _run(call)


@main.command("ingest-captions")
@click.option("--listing", required=True, help="Image listing with species (JSON lines).")
@click.option("--responses", required=True, help="Caption responses keyed by image.")
@click.option("--split", type=click.Choice(["train", "test"]), default="train")
@click.option("--strict/--no-strict", "strict", default=True, help="Species-mention check.")
@click.option("--out", required=True, help="Caption manifest output (JSON lines).")
@config_option
@server_option
@click.pass_context
def cmd_ingest_captions(ctx: click.Context, **kwargs: Any) -> None:
    """Join caption responses into a training manifest."""
    config = _load_config_file(kwargs["config_file"])
    resolved = _resolve(
        ctx, config, ["listing", "responses", "split", "strict", "out", "server"]
    )
    out = Path(resolved["out"])

    def call() -> None:
        payload = {
            "listing": resolved["listing"],
            "responses": resolved["responses"],
            "default_split": resolved["split"],
            "check_consistency": resolved["strict"],
        }
        result = _client(resolved["server"]).post("/captions/ingest", payload)
        _write_jsonl(result["records"], out)
        _write_run_manifest(out, "ingest-captions", resolved)
        click.echo(f"wrote {len(result['records'])} caption records to {out}")

    _run(call)


if __name__ == "__main__":
    main()
