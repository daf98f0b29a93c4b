from kegnnflow.engine.gradcheck import grad_check, grad_check_params
from kegnnflow.engine.optim import AdamState, adam_step
from kegnnflow.engine.tape import Tape, TapeNode, as_matrix, backward

__all__ = [
    "AdamState",
    "Tape",
    "TapeNode",
    "adam_step",
    "as_matrix",
    "backward",
    "grad_check",
    "grad_check_params",
]
