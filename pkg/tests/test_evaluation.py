"""Edit distance and Levenshtein evaluation reports."""
from __future__ import annotations

import random
from functools import lru_cache

import numpy as np
import pytest

from conftest import random_model
from models.schemas import Engine, ManifestRow, SampleManifest
from services.evaluation_service import (
    ModelCaptioner,
    evaluate,
    format_report_text,
    summary_path_for,
    write_report,
)
from services.tokenizer import build_vocab
from utils.images import save_pgm
from utils.text import levenshtein


def _recursive_distance(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return go(i + 1, j + 1)
        return 1 + min(go(i + 1, j), go(i, j + 1), go(i + 1, j + 1))

    return go(0, 0)


def _random_strings(count, seed):
    rng = random.Random(seed)
    return ["".join(rng.choice("CHNO1-(") for _ in range(rng.randint(0, 12))) for _ in range(count)]


class _TableCaptioner:
    def __init__(self, answers, engine=Engine.CACHED):
        self.answers = answers
        self.engine = engine
        self.seen = []

    def caption(self, image_path):
        self.seen.append(image_path)
        return self.answers[image_path]


def _manifest(labels):
    return SampleManifest(
        rows=[ManifestRow(image_path=f"img_{i}.pgm", label=label, line=i + 1) for i, label in enumerate(labels)]
    )


# ---------------------------------------------------------------------------
# levenshtein
# ---------------------------------------------------------------------------


def test_reference_distances():
    assert levenshtein("", "abc") == 3
    assert levenshtein("abc", "") == 3
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("InChI=1S/CH4", "InChI=1S/CH4") == 0


def test_matches_recursive_definition():
    strings = _random_strings(50, seed=1)
    for a in strings:
        for b in strings[:20]:
            assert levenshtein(a, b) == _recursive_distance(a, b)


def test_metric_properties():
    strings = _random_strings(25, seed=2)
    for a in strings:
        for b in strings:
            d = levenshtein(a, b)
            assert d == levenshtein(b, a)
            assert (d == 0) == (a == b)
            assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
            for c in strings[:5]:
                assert levenshtein(a, c) <= d + levenshtein(b, c)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def test_oracle_captioner_scores_zero():
    labels = ["InChI=1S/CH4", "InChI=1S/C2H6/c1-2", "InChI=1S/H2O"]
    manifest = _manifest(labels)
    captioner = _TableCaptioner({row.path: row.label for row in manifest.rows})

    report = evaluate(captioner, manifest)

    assert report.mean_distance == 0.0
    assert report.exact_match_rate == 1.0
    assert report.count == 3
    assert captioner.seen == [row.path for row in manifest.rows]


def test_empty_predictions_score_the_mean_label_length():
    labels = ["InChI=1S/CH4", "InChI=1S/C2H6/c1-2", "InChI=1S/H2O"]
    manifest = _manifest(labels)

    report = evaluate(_TableCaptioner({row.path: "" for row in manifest.rows}), manifest)

    assert report.mean_distance == pytest.approx(sum(map(len, labels)) / 3)
    assert report.exact_match_rate == 0.0


def test_hand_computed_distances():
    manifest = _manifest(["CCO", "CN", "OCC"])
    answers = {"img_0.pgm": "CCO", "img_1.pgm": "CNN", "img_2.pgm": "CCO"}

    report = evaluate(_TableCaptioner(answers, Engine.NAIVE), manifest)

    assert [s.distance for s in report.samples] == [0, 1, 2]
    assert report.mean_distance == pytest.approx(1.0)
    assert report.exact_match_rate == pytest.approx(1 / 3)
    assert report.engine == "naive"


def test_report_files(tmp_path):
    manifest = _manifest(["CCO", "CN"])
    report = evaluate(_TableCaptioner({"img_0.pgm": "CCO", "img_1.pgm": "C\tN"}), manifest)

    tsv, summary = write_report(report, tmp_path / "eval.tsv")

    assert summary == summary_path_for(tmp_path / "eval.tsv") == tmp_path / "eval.summary.txt"
    lines = tsv.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "image_path\tlabel\tprediction\tdistance"
    assert lines[2] == "img_1.pgm\tCN\tC N\t1"
    assert summary.read_text(encoding="utf-8") == format_report_text(report)
    assert "mean_levenshtein: 0.500000" in format_report_text(report)


def test_model_captioner_engines_agree(tmp_path):
    vocab = build_vocab(["CCO", "CN"])
    model = random_model(seed=3, scale=25.0, vocab_size=len(vocab), max_len=8)
    pixels = (np.random.default_rng(0).random((32, 32)) * 255).astype(np.uint8)
    save_pgm(tmp_path / "a.pgm", pixels)
    path = str(tmp_path / "a.pgm")

    naive = ModelCaptioner(model, vocab, Engine.NAIVE).caption(path)
    cached = ModelCaptioner(model, vocab, Engine.CACHED).caption(path)

    assert naive == cached
    assert set(naive) <= set("CNO")


@pytest.mark.parametrize("engine", list(Engine))
def test_report_names_the_engine_that_decoded(tmp_path, engine):
    vocab = build_vocab(["CCO", "CN"])
    model = random_model(seed=3, scale=25.0, vocab_size=len(vocab), max_len=8)
    save_pgm(tmp_path / "a.pgm", (np.random.default_rng(1).random((32, 32)) * 255).astype(np.uint8))
    manifest = SampleManifest(
        rows=[ManifestRow(image_path="a.pgm", resolved_path=str(tmp_path / "a.pgm"), label="CCO", line=2)]
    )
    captioner = ModelCaptioner(model, vocab, engine)

    report = evaluate(captioner, manifest)

    assert report.engine == captioner.engine.value == engine.value
    assert report.samples[0].prediction == ModelCaptioner(model, vocab, Engine.NAIVE).caption(str(tmp_path / "a.pgm"))
