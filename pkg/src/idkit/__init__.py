"""idkit: an inverse-design benchmark toolkit for nanophotonics.

Modules:

* :mod:`idkit.space` mixed design spaces, points, encodings, the loss
* :mod:`idkit.problems` the three built-in problems (motf, tpv, scf)
* :mod:`idkit.tmm` transfer-matrix thin-film solver and material tables
* :mod:`idkit.shapes` B-spline supercell geometry and rasters
* :mod:`idkit.optimizers` five ask/tell black-box optimizers
* :mod:`idkit.surrogate` dense-network surrogates and inverse-design methods
* :mod:`idkit.engine` parallel/cached simulator evaluation and adapters
* :mod:`idkit.harness` datasets, targets, budgeted runs, reports
* :mod:`idkit.cli` the `idkit` command
"""

from .space import (
    Categorical,
    ConditionalContinuous,
    Continuous,
    DesignPoint,
    DesignSpace,
    ParamSpec,
    SpaceError,
    mse_loss,
)
from .problems import get_space, motf_space, problem_card, scf_space, tpv_space
from .records import EvalRecord, dump_records, load_records

__version__ = "0.1.0"

__all__ = [
    "Categorical",
    "ConditionalContinuous",
    "Continuous",
    "DesignPoint",
    "DesignSpace",
    "ParamSpec",
    "SpaceError",
    "mse_loss",
    "get_space",
    "motf_space",
    "tpv_space",
    "scf_space",
    "problem_card",
    "EvalRecord",
    "dump_records",
    "load_records",
    "__version__",
]
