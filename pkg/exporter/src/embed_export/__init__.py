"""Offline embedding exporter.

Runs a frozen encoder over SQuAD 2.0 questions and writes per-token
final-layer embeddings as BEMB files, plus a JSON manifest describing the
export. The training side only ever sees the BEMB file.
"""

from .errors import ExportError
from .exporter import ExportManifest, export

__version__ = "0.1.0"

__all__ = ["ExportError", "ExportManifest", "export", "__version__"]
