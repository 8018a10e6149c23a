"""Synthetic dataset generation and TSV manifest ingestion."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Optional, Union

import structlog

from core.foundation import ImageReadError, ManifestError, MolcapException
from models.schemas import AugmentParams, ManifestRow, SampleManifest
from services.augmentation import augment
from services.molecule_generator import gen_molecule
from services.rasterizer import render
from services.tokenizer import Vocab, encode
from utils.artifacts import atomic_write_text
from utils.images import load_image, save_pgm
from utils.rng import SplitMix64

logger = structlog.get_logger()

MANIFEST_NAME = "manifest.tsv"
RECIPE_NAME = "recipe.txt"
MANIFEST_HEADER = "path\tlabel"


def recipe_line(out_dir: Union[str, Path], count: int, size: int, seed: int, params: AugmentParams) -> str:
    """The gen-data command that reproduces a dataset."""
    parts = ["molcap.py", "gen-data", "--out", str(out_dir), "--count", str(count), "--size", str(size)]
    parts += ["--seed", str(seed)]
    if params.enabled:
        parts += ["--sp-density", repr(params.sp_density), "--atom-drop", repr(params.atom_drop)]
        parts += ["--double-to-single", repr(params.double_to_single)]
        parts += ["--artifact-strokes", str(params.artifact_strokes)]
    return " ".join(parts)


def generate_sample(seed: int, index: int, size: int, params: AugmentParams):
    """(image, label) for sample ``index``; its rng stream is SplitMix64(seed ^ index)."""
    rng = SplitMix64.for_sample(seed, index)
    graph, label = gen_molecule(rng)
    rendered = render(graph, size)
    image = augment(rendered, rng, params) if params.enabled else rendered.image
    return image, label


def write_manifest(path: Union[str, Path], rows: Iterable[ManifestRow]) -> Path:
    lines = [MANIFEST_HEADER] + [f"{row.image_path}\t{row.label}" for row in rows]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def generate_dataset(
    out_dir: Union[str, Path],
    count: int,
    size: int,
    seed: int,
    params: Optional[AugmentParams] = None,
) -> SampleManifest:
    """Write ``count`` PGM drawings, ``manifest.tsv`` and ``recipe.txt`` into ``out_dir``."""
    params = params or AugmentParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: List[ManifestRow] = []
    for index in range(count):
        image, label = generate_sample(seed, index, size, params)
        name = f"sample_{index:05d}.pgm"
        save_pgm(out_dir / name, image)
        rows.append(ManifestRow(image_path=name, label=label, line=index + 2, resolved_path=str(out_dir / name)))

    manifest_path = write_manifest(out_dir / MANIFEST_NAME, rows)
    atomic_write_text(out_dir / RECIPE_NAME, recipe_line(out_dir, count, size, seed, params) + "\n")
    logger.info("dataset_generated", out_dir=str(out_dir), count=count, size=size, seed=seed)
    return SampleManifest(rows=rows, source="synthetic", path=str(manifest_path))


def load_manifest(
    path: Union[str, Path],
    vocab: Optional[Vocab] = None,
    check_images: bool = True,
) -> SampleManifest:
    """Parse and validate a ``path<TAB>label`` manifest.

    Relative image paths resolve against the manifest's directory. Each
    failure names the line it came from.
    """
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ManifestError(source, "file not found") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise ManifestError(source, f"cannot read: {exc}") from exc

    rows: List[ManifestRow] = []
    synthetic = (path.parent / RECIPE_NAME).exists()
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        if number == 1 and raw.strip() == MANIFEST_HEADER:
            continue
        columns = raw.split("\t")
        if len(columns) != 2 or not columns[0] or not columns[1]:
            raise ManifestError(source, "expected two tab-separated columns: path, label", number)
        image_path, label = columns
        resolved = Path(image_path)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        if not resolved.exists():
            raise ManifestError(source, f"image not found: {image_path}", number)
        if check_images:
            try:
                load_image(resolved)
            except ImageReadError as exc:
                raise ManifestError(source, f"unreadable image {image_path}: {exc.message}", number) from exc
        if vocab is not None:
            try:
                encode(vocab, label)
            except MolcapException as exc:
                raise ManifestError(source, f"label does not tokenize: {exc.message}", number) from exc
        rows.append(ManifestRow(image_path=image_path, label=label, line=number, resolved_path=str(resolved)))

    if not rows:
        raise ManifestError(source, "no samples")
    logger.info("manifest_loaded", path=source, samples=len(rows))
    return SampleManifest(rows=rows, source="synthetic" if synthetic else "external", path=source)
