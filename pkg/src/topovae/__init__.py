"""Topology-aware latent variable discovery for toy physical systems.

The pipeline has two stages: persistent homology infers the Betti numbers
of an observation cloud, then an autoencoder whose latent prior is shaped by
a matching topological penalty extracts the minimal set of variables.

Submodules load on first attribute access so that the command line entry
point can fix BLAS thread counts before numpy is imported.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "PointCloud": "topovae.data",
    "Table": "topovae.data",
    "load_csv": "topovae.data",
    "load_table": "topovae.data",
    "rng_stream": "topovae.data",
    "save_csv": "topovae.data",
    "save_table": "topovae.data",
    "ExperimentConfig": "topovae.config",
    "LatentSplit": "topovae.config",
    "TrainSchedule": "topovae.config",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(_EXPORTS[name]), name)
    raise AttributeError(f"module 'topovae' has no attribute {name!r}")
