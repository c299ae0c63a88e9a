"""Extractor errors; exit code 2 for contract violations."""

from __future__ import annotations


class ExtractError(Exception):
    exit_code = 1


class ManifestError(ExtractError):
    """Malformed or inconsistent extraction manifest."""

    exit_code = 2


class ImageError(ExtractError):
    """An image file is missing or unreadable."""

    exit_code = 2


class BackboneError(ExtractError):
    """A requested backbone cannot be constructed or loaded."""

    exit_code = 2
