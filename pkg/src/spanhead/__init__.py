"""Span-prediction output networks for extractive QA over frozen embeddings.

Submodules are imported lazily so the command-line entry point can cap BLAS
thread pools via environment variables before numpy is first loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "diffmath",
    "heads",
    "loss_opt",
    "squad_data",
    "evaluator",
    "checkpoint",
    "training",
    "errors",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
