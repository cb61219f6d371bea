"""Exporter error type."""


class ExportError(ValueError):
    """Unusable dataset layout, mask, or configuration."""
