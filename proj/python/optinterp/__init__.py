"""Response-linear interpolators for overparametrized least squares.

Estimators return the n x d-to-d operator Q, so ``w = Q @ y``. Covariance
and prior arguments are dense SPD arrays; ``phi=None`` means identity.
"""

import csv
import io
import json

from ._core import *  # noqa: F401,F403
from ._core import builtin_spec as _builtin_spec
from ._core import run_experiment as _run_experiment


def builtin(name):
    return json.loads(_builtin_spec(name))


def run(spec, threads=1):
    """Run an experiment spec (dict) and return the result rows as dicts."""
    text = _run_experiment(json.dumps(spec), threads)
    return list(csv.DictReader(io.StringIO(text)))
