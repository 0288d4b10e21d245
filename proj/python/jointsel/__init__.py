"""Joint instance and verbalizer selection for cold-start prompt learning."""

import csv
import io
import json

from . import _core
from ._core import Error, load_embeddings, load_labels, save_embeddings

__all__ = [
    "Error",
    "evaluate",
    "generate",
    "load_embeddings",
    "load_labels",
    "prepare",
    "save_embeddings",
    "select",
    "simulate",
]


def _config(options):
    return json.dumps({k: str(v) if hasattr(v, "__fspath__") else v for k, v in options.items()})


def generate(**options):
    """Write a synthetic corpus into ``output_dir``."""
    _core.generate(_config(options))


def prepare(**options):
    """Build the shared space and refined clustering; returns the manifest."""
    return json.loads(_core.prepare(_config(options)))


def select(**options):
    """Run an oracle-mode session and return its export."""
    return json.loads(_core.select(_config(options)))


def evaluate(**options):
    """Score the session's verbalizers on the test files; returns the report."""
    return json.loads(_core.evaluate(_config(options)))


def simulate(**options):
    """Run the strategy matrix; returns the CSV rows as dicts."""
    return list(csv.DictReader(io.StringIO(_core.simulate(_config(options)))))
