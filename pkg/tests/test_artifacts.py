"""Atomic artifact writes."""
from __future__ import annotations

from pathlib import Path

import pytest

from utils import artifacts
from utils.artifacts import atomic_write_bytes, atomic_write_text


def test_write_publishes_content_and_leaves_no_temp_files(tmp_path):
    target = tmp_path / "nested" / "report.tsv"

    assert atomic_write_text(target, "a\tb\n") == target

    assert target.read_text(encoding="utf-8") == "a\tb\n"
    assert sorted(p.name for p in target.parent.iterdir()) == ["report.tsv"]


def test_failed_sync_removes_the_temp_file(tmp_path, monkeypatch):
    target = tmp_path / "model.isck"
    target.write_bytes(b"old")

    def fail(_fd):
        raise OSError("disk full")

    monkeypatch.setattr(artifacts.os, "fsync", fail)

    with pytest.raises(OSError, match="disk full"):
        atomic_write_bytes(target, b"new")

    assert target.read_bytes() == b"old"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["model.isck"]


def test_failed_publish_removes_the_temp_file(tmp_path, monkeypatch):
    target = tmp_path / "vocab.txt"

    def fail(self, _target):
        raise PermissionError("read-only destination")

    monkeypatch.setattr(Path, "replace", fail)

    with pytest.raises(PermissionError):
        atomic_write_text(target, "<PAD>\n")

    assert list(tmp_path.iterdir()) == []
