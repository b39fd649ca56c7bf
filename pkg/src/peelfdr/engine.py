"""Oracle protocol: session lifecycle, restricted views, peeling, stopping.

The session holds the full data (including raw p-values); the analyst only
ever sees an AnalystView, which carries masked values g(p) for hypotheses
still in the candidate set, raw p-values for those peeled off, covariates,
and the accumulated sum of h over the candidate set.  The view type is the
only serialization path, so the information restriction is structural.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field

import numpy as np

from peelfdr import accum
from peelfdr import constraints as cons

__all__ = [
    "Session",
    "AnalystView",
    "create_session",
    "analyst_view",
    "peel",
    "check_stop",
    "run_auto",
    "session_to_json",
    "session_from_json",
    "load_dataset_csv",
]


@dataclass
class AnalystView:
    """Information-restricted snapshot served to the analyst."""

    step: int
    masked_ids: np.ndarray
    masked_g: np.ndarray
    revealed_ids: np.ndarray
    revealed_p: np.ndarray
    covariates: np.ndarray
    sum_h: float
    fdp_hat: float
    candidates: list
    in_constraint: bool
    halted: bool
    alpha: float
    spec: accum.Accumulator
    constraint: cons.ConstraintSpec
    fdp_history: list

    def to_json(self) -> dict:
        return {
            "v": 1,
            "step": self.step,
            "masked": [[int(i), float(g)] for i, g in
                       zip(self.masked_ids, self.masked_g)],
            "revealed": [[int(i), float(p)] for i, p in
                         zip(self.revealed_ids, self.revealed_p)],
            "covariates": self.covariates.tolist(),
            "sum_h": float(self.sum_h),
            "fdp_hat": float(self.fdp_hat),
            "candidates": [[int(i) for i in c] for c in self.candidates],
            "in_constraint": bool(self.in_constraint),
            "halted": bool(self.halted),
            "alpha": float(self.alpha),
            "spec": accum.accumulator_to_json(self.spec),
            "constraint_kind": self.constraint.kind,
            "constraint": cons.constraint_to_json(self.constraint),
            "fdp_history": [float(v) for v in self.fdp_history],
        }


@dataclass
class Session:
    """Full-knowledge oracle state.  Raw p-values never leave this object
    except through post-halt disclosure."""

    covariates: np.ndarray
    p: np.ndarray
    spec: accum.Accumulator
    constraint: cons.ConstraintSpec
    alpha: float
    seed: int
    g: np.ndarray = field(repr=False, default=None)
    h: np.ndarray = field(repr=False, default=None)
    in_R: np.ndarray = field(repr=False, default=None)
    sum_h: float = 0.0
    step: int = 0
    history: list = field(default_factory=list)
    halted: bool = False
    disclose_on_halt: bool = True

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def current(self) -> np.ndarray:
        return np.nonzero(self.in_R)[0]

    @property
    def rejection(self) -> np.ndarray | None:
        return self.current if self.halted else None


def create_session(data, spec, constraint=None, alpha=0.1, seed=0,
                   disclose_on_halt=True) -> Session:
    """Start a session with R_0 = all hypotheses.

    data is either a list of (covariate, p) pairs or a (X, p) tuple of
    arrays.  The stopping test runs immediately, so a session may be born
    halted.
    """
    if isinstance(data, tuple):
        X, p = data
    else:
        X = [d[0] for d in data]
        p = [d[1] for d in data]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and len(p) > 1:
        X = X.T
    p = np.asarray(p, dtype=float)
    n = len(p)
    if n < 1:
        raise ValueError("need at least one hypothesis")
    if X.shape[0] != n:
        raise ValueError("covariates and p-values disagree in length")
    if np.any(p < 0) or np.any(p > 1) or np.any(~np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if constraint is None:
        constraint = cons.constraint_none()
    if constraint.kind in ("convex2d", "axisbox") and constraint.points is None:
        constraint = copy.copy(constraint)
        constraint.points = X[:, :2] if constraint.kind == "convex2d" else X
    cn = constraint.n
    if cn is not None and cn != n:
        raise ValueError(f"constraint covers {cn} ids but dataset has {n}")
    if constraint.kind in ("convex2d", "axisbox") and constraint.delta * n < 1:
        raise ValueError("delta * n must be at least 1")

    g = accum.mask(spec, p)
    h = accum.h_eval(spec, p)
    sess = Session(covariates=X, p=p, spec=spec, constraint=constraint,
                   alpha=alpha, seed=seed, g=np.atleast_1d(g),
                   h=np.atleast_1d(h), in_R=np.ones(n, dtype=bool),
                   sum_h=float(np.sum(h)), disclose_on_halt=disclose_on_halt)
    _update_halted(sess)
    return sess


def _current_fdp(sess: Session) -> float:
    return accum.fdp_hat(sess.spec, sess.sum_h, int(sess.in_R.sum()))


def _update_halted(sess: Session) -> None:
    size = int(sess.in_R.sum())
    if size == 0:
        sess.halted = True
        return
    if _current_fdp(sess) <= sess.alpha and \
            cons.in_constraint(sess.constraint, sess.current):
        sess.halted = True


def check_stop(sess: Session) -> dict:
    """Stopping test: halt when FDP-hat <= alpha and R is admissible, or R
    is empty; the comparison is inclusive."""
    out = {"halted": sess.halted}
    if sess.halted:
        out["rejection"] = [int(i) for i in sess.current]
    return out


def analyst_view(sess: Session) -> AnalystView:
    masked = sess.current
    revealed = np.nonzero(~sess.in_R)[0]
    if sess.halted and sess.disclose_on_halt:
        # procedure is over: everything is disclosed
        revealed = np.arange(sess.n)
        masked = np.array([], dtype=int)
        cands = []
    else:
        if sess.halted:
            cands = []
        else:
            try:
                cands = cons.candidates(sess.constraint, masked)
            except ValueError:
                # manual peeling may leave the constraint family; there is
                # then no structure-preserving move to offer
                cands = []
    return AnalystView(
        step=sess.step,
        masked_ids=masked,
        masked_g=sess.g[masked],
        revealed_ids=revealed,
        revealed_p=sess.p[revealed],
        covariates=sess.covariates,
        sum_h=sess.sum_h,
        fdp_hat=_current_fdp(sess),
        candidates=cands,
        in_constraint=cons.in_constraint(sess.constraint, sess.current),
        halted=sess.halted,
        alpha=sess.alpha,
        spec=sess.spec,
        constraint=sess.constraint,
        fdp_history=[rec["fdp_hat"] for rec in sess.history],
    )


def peel(sess: Session, remove) -> Session:
    """Shrink the candidate set by the given ids, revealing their p-values.

    The remaining set may temporarily leave the constraint family; only the
    stopping test requires membership.
    """
    if sess.halted:
        raise RuntimeError("session is halted")
    ids = np.asarray(sorted(set(int(i) for i in remove)), dtype=int)
    if len(ids) == 0:
        raise ValueError("peel set is empty")
    if np.any(ids < 0) or np.any(ids >= sess.n) or not np.all(sess.in_R[ids]):
        raise ValueError("peel set is not a subset of the candidate set")
    sess.in_R[ids] = False
    sess.sum_h -= float(np.sum(sess.h[ids]))
    sess.step += 1
    _update_halted(sess)
    sess.history.append({
        "step": sess.step,
        "removed": [int(i) for i in ids],
        "fdp_hat": _current_fdp(sess),
    })
    return sess


def run_auto(sess: Session, rule) -> Session:
    """Drive the session to a halt with an automated update rule.

    Each iteration serves the restricted view, scores the structure-preserving
    candidates, and peels the worst one.  Terminates within n steps because
    every peel removes at least one hypothesis.
    """
    rule.reset(sess)
    guard = sess.n + 1
    while not sess.halted:
        guard -= 1
        if guard < 0:
            raise RuntimeError("automated run failed to terminate")
        view = analyst_view(sess)
        if not view.candidates:
            peel(sess, view.masked_ids)
            continue
        cand = rule.choose(view)
        peel(sess, cand)
    return sess


# persistence ----------------------------------------------------------


def session_to_json(sess: Session, include_oracle: bool = True) -> dict:
    out = {
        "v": 1,
        "spec": accum.accumulator_to_json(sess.spec),
        "constraint": cons.constraint_to_json(sess.constraint),
        "alpha": sess.alpha,
        "step": sess.step,
        "current": [int(i) for i in sess.current],
        "history": sess.history,
        "seed": sess.seed,
        "halted": sess.halted,
        "covariates": sess.covariates.tolist(),
        "revealed": [[int(i), float(sess.p[i])]
                     for i in np.nonzero(~sess.in_R)[0]],
        "masked_g": [[int(i), float(sess.g[i])] for i in sess.current],
        "sum_h": sess.sum_h,
    }
    if include_oracle:
        out["oracle"] = {"p": sess.p.tolist()}
    return out


def session_from_json(obj: dict) -> Session:
    if "oracle" not in obj:
        raise ValueError("snapshot lacks the oracle section")
    spec = accum.accumulator_from_json(obj["spec"])
    X = np.asarray(obj["covariates"], dtype=float)
    constraint = cons.constraint_from_json(obj["constraint"], points=X)
    p = np.asarray(obj["oracle"]["p"], dtype=float)
    sess = create_session((X, p), spec, constraint, alpha=obj["alpha"],
                          seed=obj.get("seed", 0))
    # replay recorded removals to restore state and history
    sess.halted = False
    sess.history = []
    for rec in obj["history"]:
        peel(sess, rec["removed"])
    sess.halted = bool(obj["halted"])
    return sess


def load_dataset_csv(path):
    """Read a dataset CSV with header id,x1..xd,p into (X, p) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "id" or header[-1] != "p":
            raise ValueError("expected header id,x1..xd,p")
        rows = sorted((int(r[0]), [float(v) for v in r[1:-1]], float(r[-1]))
                      for r in reader if r)
    ids = [r[0] for r in rows]
    if ids != list(range(len(rows))):
        raise ValueError("ids must be dense starting at 0")
    X = np.asarray([r[1] for r in rows], dtype=float)
    p = np.asarray([r[2] for r in rows], dtype=float)
    return X, p


def save_dataset_csv(path, X, p) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != len(p):
        X = X.T
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"x{j + 1}" for j in range(X.shape[1])] + ["p"])
        for i, (row, pv) in enumerate(zip(X, p)):
            writer.writerow([i] + [repr(float(v)) for v in row] + [repr(float(pv))])
