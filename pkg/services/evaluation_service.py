"""Levenshtein evaluation of a captioner over a manifest."""

from __future__ import annotations

from pathlib import Path
from typing import List, Protocol, Tuple, Union

import structlog

from models.schemas import Engine, EvalReport, EvalSample, SampleManifest
from services.inference_service import greedy_decode
from services.model_weights import CaptionModel
from services.tokenizer import Vocab, decode
from services.vit_encoder import image_to_input
from utils.artifacts import atomic_write_text
from utils.images import load_image
from utils.text import levenshtein

logger = structlog.get_logger()


class Captioner(Protocol):
    engine: Engine

    def caption(self, image_path: str) -> str: ...


class ModelCaptioner:
    """Greedy captions from a trained model with one of the decoding engines."""

    def __init__(self, model: CaptionModel, vocab: Vocab, engine: Engine = Engine.CACHED):
        self.model = model
        self.vocab = vocab
        self.engine = Engine(engine)

    def caption(self, image_path: str) -> str:
        image = image_to_input(load_image(image_path))
        result = greedy_decode(self.model, image, self.engine)
        return decode(self.vocab, result.tokens)


def evaluate(captioner: Captioner, manifest: SampleManifest) -> EvalReport:
    """Caption every sample and score it by character-level edit distance.

    The report is labelled with the engine the captioner decodes with.
    """
    engine_name = Engine(captioner.engine).value
    samples: List[EvalSample] = []
    for row in manifest.rows:
        prediction = captioner.caption(row.path)
        samples.append(
            EvalSample(
                image_path=row.image_path,
                label=row.label,
                prediction=prediction,
                distance=levenshtein(prediction, row.label),
            )
        )
    report = EvalReport.from_samples(engine_name, samples)
    logger.info(
        "evaluation_finished",
        engine=engine_name,
        samples=report.count,
        mean_distance=round(report.mean_distance, 6),
        exact_match_rate=round(report.exact_match_rate, 6),
    )
    return report


def _clean(field: str) -> str:
    return field.replace("\t", " ").replace("\n", " ")


def format_report_tsv(report: EvalReport) -> str:
    lines = ["image_path\tlabel\tprediction\tdistance"]
    for sample in report.samples:
        lines.append(
            "\t".join([_clean(sample.image_path), sample.label, _clean(sample.prediction), str(sample.distance)])
        )
    return "\n".join(lines) + "\n"


def format_report_text(report: EvalReport) -> str:
    return (
        f"engine: {report.engine}\n"
        f"samples: {report.count}\n"
        f"mean_levenshtein: {report.mean_distance:.6f}\n"
        f"exact_match_rate: {report.exact_match_rate:.6f}\n"
    )


def summary_path_for(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".summary.txt")


def write_report(report: EvalReport, path: Union[str, Path]) -> Tuple[Path, Path]:
    """TSV at ``path``; human-readable summary beside it as ``<stem>.summary.txt``."""
    tsv = atomic_write_text(path, format_report_tsv(report))
    text = atomic_write_text(summary_path_for(path), format_report_text(report))
    return tsv, text
