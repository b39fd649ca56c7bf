"""Interactive FDR control by iterative peeling of masked p-values."""

from peelfdr.accum import (
    Accumulator,
    forward_stop,
    hinge_exp,
    seqstep,
    fdp_hat,
    h_eval,
    H_eval,
    mask,
    s_eval,
    unmask_pair,
)
from peelfdr.engine import Session, AnalystView, create_session, analyst_view, peel, check_stop, run_auto
from peelfdr.constraints import ConstraintSpec

__all__ = [
    "Accumulator",
    "seqstep",
    "forward_stop",
    "hinge_exp",
    "h_eval",
    "H_eval",
    "s_eval",
    "mask",
    "unmask_pair",
    "fdp_hat",
    "Session",
    "AnalystView",
    "ConstraintSpec",
    "create_session",
    "analyst_view",
    "peel",
    "check_stop",
    "run_auto",
]
