"""HTTP service exposing the detection, classification, training, and
evaluation operations of the core package.

Run it with any ASGI server, e.g. ``uvicorn cropscout.service:app``.
Domain errors come back as status 400 with a ``detail`` object carrying a
``category`` of ``config``, ``data``, or ``backend``; clients map those to
their own error handling (the bundled CLI maps them to exit codes).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..alignment import (
    AlignmentBatch,
    TrainConfig,
    collect_tokens,
    init_toy_params,
    toy_image_features,
    train_toy,
)
from ..backends.registry import available_suites, resolve_suite
from ..data import (
    ingest_caption_responses,
    load_caption_manifest,
    load_caption_responses,
    load_detection_dataset,
    load_image_listing,
    render_caption_prompt,
)
from ..errors import BackendError, DataFormatError
from ..evaluation import (
    align_by_image,
    classification_report,
    classification_report_document,
    detection_report,
    detection_report_document,
    load_detection_records,
    load_labeled_images,
    per_class_table,
)
from ..images import load_image
from ..pipeline import (
    PipelineConfig,
    classification_record,
    classify_image,
    detect,
    detection_record,
)
from ..prompts import ClassVocabulary, PromptSet
from .models import (
    BackendsResponse,
    CaptionIngestRequest,
    CaptionIngestResponse,
    CaptionPromptsRequest,
    CaptionPromptsResponse,
    ClassifyRequest,
    ClassifyResponse,
    DetectRequest,
    DetectResponse,
    EvalClassificationRequest,
    EvalClassificationResponse,
    EvalDetectionRequest,
    EvalDetectionResponse,
    HealthResponse,
    TrainAlignmentRequest,
    TrainAlignmentResponse,
)

__all__ = ["create_app", "app"]


@contextmanager
def _domain_errors():
    """Translate core exceptions into categorized HTTP errors."""
    try:
        yield
    except BackendError as exc:
        raise HTTPException(400, detail={"category": "backend", "message": str(exc)}) from exc
    except DataFormatError as exc:
        raise HTTPException(400, detail={"category": "data", "message": str(exc)}) from exc
    except FileNotFoundError as exc:
        raise HTTPException(400, detail={"category": "data", "message": str(exc)}) from exc
    except (ValueError, ArithmeticError) as exc:
        raise HTTPException(400, detail={"category": "config", "message": str(exc)}) from exc


def _prompt_set(templates: list[str] | None) -> PromptSet:
    return PromptSet(templates) if templates is not None else PromptSet.default()


def _map_images(paths: list[str], workers: int, fn) -> list:
    """Apply ``fn`` to each image path on a bounded pool, preserving order."""
    if workers <= 1:
        return [fn(p) for p in paths]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, paths))


def create_app() -> FastAPI:
    app = FastAPI(title="cropscout", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/backends", response_model=BackendsResponse)
    def backends() -> BackendsResponse:
        return BackendsResponse(suites=available_suites())

    @app.post("/detect", response_model=DetectResponse)
    def run_detect(request: DetectRequest) -> DetectResponse:
        with _domain_errors():
            vocab = ClassVocabulary(request.vocabulary)
            prompt_set = _prompt_set(request.prompt_templates)
            config = PipelineConfig(
                iou_threshold=request.iou_threshold,
                mask_threshold=request.mask_threshold,
                class_aware_nms=request.class_aware_nms,
                empty_mask_policy=request.empty_mask_policy,
                prompt_ensemble=request.prompt_ensemble,
            )
            suite = resolve_suite(request.backends, seed=request.seed)

            def run_one(path: str) -> dict:
                image = load_image(path)
                detections = detect(image, vocab, suite, config=config, prompt_set=prompt_set)
                return detection_record(
                    image_id=path,
                    vocab=vocab,
                    detections=detections,
                    config=config,
                    seed=request.seed,
                    backends=request.backends,
                    include_masks=request.include_masks,
                )

            return DetectResponse(records=_map_images(request.images, request.workers, run_one))

    @app.post("/classify", response_model=ClassifyResponse)
    def run_classify(request: ClassifyRequest) -> ClassifyResponse:
        with _domain_errors():
            vocab = ClassVocabulary(request.vocabulary)
            prompt_set = _prompt_set(request.prompt_templates)
            suite = resolve_suite(request.backends, seed=request.seed)

            def run_one(path: str) -> dict:
                image = load_image(path)
                class_index, probabilities = classify_image(
                    image,
                    vocab,
                    suite,
                    tau=request.temperature,
                    prompt_set=prompt_set,
                    ensemble=request.prompt_ensemble,
                )
                return classification_record(
                    image_id=path,
                    vocab=vocab,
                    class_index=class_index,
                    probabilities=probabilities,
                    tau=request.temperature,
                    seed=request.seed,
                    backends=request.backends,
                )

            return ClassifyResponse(records=_map_images(request.images, request.workers, run_one))

    @app.post("/train/alignment", response_model=TrainAlignmentResponse)
    def run_train_alignment(request: TrainAlignmentRequest) -> TrainAlignmentResponse:
        with _domain_errors():
            manifest_path = Path(request.manifest)
            records = [
                r for r in load_caption_manifest(manifest_path) if r.split == request.split
            ]
            if not records:
                raise ValueError(f"manifest has no records in split {request.split!r}")
            root = manifest_path.parent

            def features_for(record) -> list[float]:
                image = load_image(root / record.image)
                return toy_image_features(image, grid=request.feature_grid)

            config = TrainConfig(
                epochs=request.epochs,
                learning_rate=request.learning_rate,
                batch_size=request.batch_size,
                temperature_init=request.temperature_init,
                seed=request.seed,
            )
            batches = []
            for start in range(0, len(records), config.batch_size):
                chunk = records[start : start + config.batch_size]
                if len(chunk) < 2:
                    continue
                batches.append(
                    AlignmentBatch(
                        features=[features_for(r) for r in chunk],
                        captions=[r.caption for r in chunk],
                    )
                )
            if not batches:
                raise ValueError(
                    "manifest yields no batch of >= 2 pairs at "
                    f"batch size {config.batch_size}"
                )
            tokens = collect_tokens(batches)
            params = init_toy_params(
                feature_dim=batches[0].features.shape[1],
                tokens=tokens,
                embedding_dim=request.embedding_dim,
                temperature=config.temperature_init,
                seed=config.seed,
            )
            result = train_toy(config, params, batches)
            trained = result.params
            return TrainAlignmentResponse(
                trace=[
                    {"epoch": row.epoch, "mean_loss": row.mean_loss, "tau": row.tau}
                    for row in result.trace
                ],
                final_tau=trained.tau,
                token_count=len(tokens),
                params={
                    "vision_weight": trained.vision_weight.tolist(),
                    "vision_bias": trained.vision_bias.tolist(),
                    "token_embeddings": trained.token_embeddings.tolist(),
                    "tokens": tokens,
                    "log_tau": trained.log_tau,
                },
                seed=config.seed,
            )

    @app.post("/evaluate/classification", response_model=EvalClassificationResponse)
    def run_eval_classification(
        request: EvalClassificationRequest,
    ) -> EvalClassificationResponse:
        with _domain_errors():
            truths = load_labeled_images(request.truths, vocabulary=request.vocabulary)
            predictions = load_labeled_images(
                request.predictions, vocabulary=request.vocabulary
            )
            pred_list, truth_list = align_by_image(predictions, truths)
            if request.vocabulary:
                num_classes = len(request.vocabulary)
            else:
                num_classes = max(pred_list + truth_list) + 1
            report = classification_report(pred_list, truth_list, num_classes)
            document = classification_report_document(report, request.vocabulary)
            return EvalClassificationResponse(report=document, table=per_class_table(document))

    @app.post("/evaluate/detection", response_model=EvalDetectionResponse)
    def run_eval_detection(request: EvalDetectionRequest) -> EvalDetectionResponse:
        with _domain_errors():
            detections_by_image, vocabulary = load_detection_records(request.detections)
            dataset = load_detection_dataset(request.dataset)
            folded = {name.casefold(): k for k, name in enumerate(vocabulary)}
            truths_by_image = {}
            for info in dataset.images:
                truths = []
                for box, name in dataset.truths_for(info.id):
                    key = name.casefold()
                    if key not in folded:
                        raise DataFormatError(
                            f"ground-truth class {name!r} not in detection vocabulary"
                        )
                    truths.append((box, folded[key]))
                truths_by_image[info.file_name] = truths
            report = detection_report(
                detections_by_image,
                truths_by_image,
                class_names=vocabulary,
                iou_thresholds=request.iou_thresholds,
            )
            document = detection_report_document(report)
            return EvalDetectionResponse(report=document, table=per_class_table(document))

    @app.post("/captions/prompts", response_model=CaptionPromptsResponse)
    def run_caption_prompts(request: CaptionPromptsRequest) -> CaptionPromptsResponse:
        with _domain_errors():
            listing = load_image_listing(request.listing)
            return CaptionPromptsResponse(
                records=[
                    {"image": e["image"], "prompt": render_caption_prompt(e["species"])}
                    for e in listing
                ]
            )

    @app.post("/captions/ingest", response_model=CaptionIngestResponse)
    def run_caption_ingest(request: CaptionIngestRequest) -> CaptionIngestResponse:
        with _domain_errors():
            listing = load_image_listing(request.listing)
            responses = load_caption_responses(request.responses)
            records = ingest_caption_responses(
                listing,
                responses,
                default_split=request.default_split,
                check_consistency=request.check_consistency,
            )
            return CaptionIngestResponse(
                records=[
                    {
                        "image": r.image,
                        "caption": r.caption,
                        "species": r.species,
                        "split": r.split,
                    }
                    for r in records
                ]
            )

    return app


app = create_app()
