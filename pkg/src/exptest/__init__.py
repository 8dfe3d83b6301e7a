"""Learning-rate control by testing for exponential loss decay.

Modules:

* ``numstats``: eigenvalues, exponential/linear fits, F and t tests
* ``lr_control``: the learning-rate controller
* ``linear_oracle``: closed-form dynamics of a linear layer
* ``nn_engine``: dense networks, gradients, optimizers, training loop
* ``data_io``: IDX and CSV loaders, normalization, splits
* ``harness``: experiment runner behind the ``exptest`` command
"""

from .lr_control import BoundSpec, ControllerConfig, ExpTestController, TaskKind, eta_max

__all__ = ["BoundSpec", "ControllerConfig", "ExpTestController", "TaskKind", "eta_max"]
__version__ = "0.1.0"
