"""Python bindings for the l2lws C++ core."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    InputError,
    SchemaError,
    ValidationError,
    annotate,
    annotate_file,
    confidence_target,
    evaluate,
    macro_f1,
    methods,
)

__all__ = [
    "ConfigError",
    "InputError",
    "SchemaError",
    "ValidationError",
    "annotate",
    "annotate_file",
    "confidence_target",
    "evaluate",
    "generate_synthetic",
    "macro_f1",
    "methods",
    "run_experiment",
    "train",
]


def _as_text(config):
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def generate_synthetic(**spec):
    """Synthetic task splits as lists of {"id", "tokens", "label", "weak"} dicts.

    Keyword arguments are the keys of a config's data.synthetic block.
    """
    return _core.generate_synthetic(_json.dumps(spec))


def train(config, method, seed=0, checkpoint=""):
    """Train one method on one seed. Returns the run summary and metric records."""
    return _json.loads(_core.train(_as_text(config), method, seed, str(checkpoint)))


def run_experiment(config, out):
    """Run the method x seed grid, writing the usual files under `out`."""
    return _json.loads(_core.run_experiment(_as_text(config), str(out)))
