"""Bundled datasets for demos and end-to-end tests."""

from __future__ import annotations

from pathlib import Path


def mini_dataset_dir() -> Path:
    """Directory of the bundled 20-query, 200-passage synthetic dataset."""
    return Path(__file__).resolve().parent / "mini"
