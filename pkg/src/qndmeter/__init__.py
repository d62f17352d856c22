"""Quality metrics for quantum measurements and a dispersive-readout simulator.

Modules:

- ``linalg``: small dense complex linear algebra (Jacobi eigensolver, trace distances)
- ``channels``: Kraus-operator measurement models, fixtures and QND predicates
- ``metrics``: exact F, F_Q, F_I, D_D, D_E and D_P from a Kraus model
- ``estimator``: plug-in estimates from two-shot outcome counts
- ``dispersive``: heterodyne-monitored qubit-cavity trajectories and detuning sweeps
- ``cli``: the ``qndmeter`` command
"""

from .channels import KrausSet, validate_kraus
from .dispersive import SimConfig
from .errors import InputError, NumericalError, QndError
from .estimator import TwoStageCounts, empirical_metrics
from .metrics import MetricReport, full_report

__all__ = [
    "InputError",
    "KrausSet",
    "MetricReport",
    "NumericalError",
    "QndError",
    "SimConfig",
    "TwoStageCounts",
    "empirical_metrics",
    "full_report",
    "validate_kraus",
]
__version__ = "0.1.0"
