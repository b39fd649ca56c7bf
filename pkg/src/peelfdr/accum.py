"""Accumulation functions, their masking transforms, and the FDP estimator.

An accumulation function h is non-decreasing, non-negative and integrates to
one over [0, 1]; its running sum over a candidate set estimates the number of
nulls in that set.  The masking transform g(p) = min{p, s(p)} discloses a
two-to-one view of each p-value, where s is the decreasing reflection solving
H(s(p)) = H(p) for H(p) = int_0^p (h - 1).

Unbounded families (ForwardStop, HingeExp) are truncated at a cap C and
renormalized so the truncated function still integrates to one.  All
evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Accumulator",
    "OneBitPValue",
    "seqstep",
    "forward_stop",
    "hinge_exp",
    "piecewise",
    "h_eval",
    "H_eval",
    "s_eval",
    "s_prime",
    "mask",
    "unmask_pair",
    "fdp_hat",
    "onebit_from_knockoff",
    "accumulator_from_json",
]

DEFAULT_CAP = -math.log(0.01)

_BISECT_ITERS = 200
_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class Accumulator:
    """Truncated, renormalized accumulation family.

    kind: one of {"seqstep", "forwardstop", "hingeexp", "piecewise"}.
    pstar: family parameter in (0, 1); unused for forwardstop/piecewise.
    cap: truncation level C (inf for families that are already bounded).
    norm: int_0^1 (h_raw ^ C) dp, the renormalization mass.
    fixed_point: the unique solution of s(p) = p, where H is minimized.
    """

    kind: str
    pstar: float = 0.5
    cap: float = math.inf
    norm: float = 1.0
    fixed_point: float = 0.5
    breaks: tuple = field(default=())
    values: tuple = field(default=())

    @property
    def h_max(self) -> float:
        """Value of the renormalized h at p = 1."""
        return float(self._h_arr(np.asarray([1.0]))[0])

    # internal vectorized kernels -------------------------------------

    def _raw_h(self, p):
        if self.kind == "seqstep":
            return np.where(p > self.pstar, 1.0 / (1.0 - self.pstar), 0.0)
        if self.kind == "forwardstop":
            with np.errstate(divide="ignore"):
                return -np.log1p(-np.minimum(p, 1.0 - 1e-300))
        if self.kind == "hingeexp":
            a = 1.0 - self.pstar
            with np.errstate(divide="ignore"):
                v = (np.log(a) - np.log(np.maximum(1.0 - p, 1e-300))) / a
            return np.where(p >= self.pstar, v, 0.0)
        if self.kind == "piecewise":
            idx = np.clip(np.searchsorted(self.breaks, p, side="right") - 1, 0,
                          len(self.values) - 1)
            return np.asarray(self.values, dtype=float)[idx]
        raise ValueError(f"unknown accumulator kind {self.kind!r}")

    def _h_arr(self, p):
        return np.minimum(self._raw_h(p), self.cap) / self.norm

    def _cum_arr(self, p):
        """A(p) = int_0^p min(h_raw, C), before renormalization."""
        if self.kind == "seqstep":
            return np.maximum(p - self.pstar, 0.0) / (1.0 - self.pstar)
        if self.kind == "forwardstop":
            C = self.cap
            pb = 1.0 - math.exp(-C)
            low = (1.0 - p) * np.log(np.maximum(1.0 - p, 1e-300)) + p
            a_pb = 1.0 - math.exp(-C) * (1.0 + C)
            high = a_pb + C * (p - pb)
            return np.where(p <= pb, low, high)
        if self.kind == "hingeexp":
            a = 1.0 - self.pstar
            C = self.cap
            b = C * a
            pb = 1.0 - a * math.exp(-b)
            u = np.maximum(1.0 - p, 1e-300)
            mid = 1.0 - (u / a) * (np.log(a / u) + 1.0)
            a_pb = 1.0 - math.exp(-b) * (1.0 + b)
            high = a_pb + C * (p - pb)
            out = np.where(p <= pb, mid, high)
            return np.where(p <= self.pstar, 0.0, out)
        if self.kind == "piecewise":
            vals = np.minimum(np.asarray(self.values, dtype=float), self.cap)
            brks = np.asarray(self.breaks, dtype=float)
            seg_mass = np.concatenate([[0.0], np.cumsum(vals * np.diff(brks))])
            idx = np.clip(np.searchsorted(brks, p, side="right") - 1, 0,
                          len(vals) - 1)
            return seg_mass[idx] + vals[idx] * (p - brks[idx])
        raise ValueError(f"unknown accumulator kind {self.kind!r}")

    def _H_arr(self, p):
        return self._cum_arr(p) / self.norm - p

    def _flat_interval(self):
        """Closure of {p: renormalized h == 1}, or None if a null set."""
        if self.kind != "piecewise":
            return None
        vals = np.minimum(np.asarray(self.values, dtype=float), self.cap) / self.norm
        brks = np.asarray(self.breaks, dtype=float)
        flat = np.isclose(vals, 1.0, atol=1e-12)
        if not flat.any():
            return None
        i = int(np.argmax(flat))
        j = i
        while j + 1 < len(vals) and flat[j + 1]:
            j += 1
        return float(brks[i]), float(brks[j + 1])


def _validate_p(p):
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(~np.isfinite(arr)):
        raise ValueError("p-values must lie in [0, 1]")
    return arr


def _scalarize(out, p):
    if np.isscalar(p) or (isinstance(p, np.ndarray) and p.ndim == 0):
        return float(out)
    return out


# constructors ---------------------------------------------------------


def seqstep(pstar: float = 0.5) -> Accumulator:
    """Step accumulator h(p) = 1/(1-p*) on (p*, 1]; already bounded."""
    if not 0.0 < pstar < 1.0:
        raise ValueError("pstar must be in (0, 1)")
    return Accumulator(kind="seqstep", pstar=pstar, cap=math.inf, norm=1.0,
                       fixed_point=pstar)


def forward_stop(cap: float = DEFAULT_CAP) -> Accumulator:
    """Log accumulator h(p) = -log(1-p), truncated at cap and renormalized."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    norm = 1.0 - math.exp(-cap)
    fixed = 1.0 - math.exp(-norm)
    return Accumulator(kind="forwardstop", pstar=0.0, cap=cap, norm=norm,
                       fixed_point=fixed)


def hinge_exp(pstar: float = 0.5, cap: float | None = None) -> Accumulator:
    """Hinged log accumulator, truncated at cap (default -log(0.01)/(1-p*))."""
    if not 0.0 < pstar < 1.0:
        raise ValueError("pstar must be in (0, 1)")
    if cap is None:
        cap = DEFAULT_CAP / (1.0 - pstar)
    if not cap > 0:
        raise ValueError("cap must be positive")
    a = 1.0 - pstar
    norm = 1.0 - math.exp(-cap * a)
    fixed = 1.0 - a * math.exp(-a * norm)
    return Accumulator(kind="hingeexp", pstar=pstar, cap=cap, norm=norm,
                       fixed_point=fixed)


def piecewise(breaks, values, cap: float = math.inf) -> Accumulator:
    """Piecewise-constant accumulator from breakpoints 0 = t0 < ... < tk = 1.

    values[i] is the raw height on [breaks[i], breaks[i+1]); heights must be
    non-decreasing.  The function is truncated at cap and renormalized.
    """
    brks = np.asarray(breaks, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(brks) != len(vals) + 1 or brks[0] != 0.0 or brks[-1] != 1.0:
        raise ValueError("breaks must run from 0 to 1 with one value per segment")
    if np.any(np.diff(brks) <= 0):
        raise ValueError("breaks must be strictly increasing")
    if np.any(np.diff(vals) < 0) or np.any(vals < 0):
        raise ValueError("heights must be non-negative and non-decreasing")
    tv = np.minimum(vals, cap)
    norm = float(np.sum(tv * np.diff(brks)))
    if norm <= 0:
        raise ValueError("accumulator has zero mass")
    spec = Accumulator(kind="piecewise", pstar=0.5, cap=cap, norm=norm,
                       fixed_point=0.5, breaks=tuple(brks), values=tuple(vals))
    flat = spec._flat_interval()
    if flat is not None:
        fixed = 0.5 * (flat[0] + flat[1])
    else:
        # boundary between segments below and above the mean level
        hn = tv / norm
        above = np.nonzero(hn > 1.0)[0]
        fixed = float(brks[above[0]]) if len(above) else 1.0
    object.__setattr__(spec, "fixed_point", fixed)
    return spec


# evaluators -----------------------------------------------------------


def h_eval(spec: Accumulator, p):
    """Truncated, renormalized accumulation value at p."""
    arr = _validate_p(p)
    return _scalarize(spec._h_arr(arr), p)


def H_eval(spec: Accumulator, p):
    """H(p) = int_0^p (h(x) - 1) dx for the renormalized h."""
    arr = _validate_p(p)
    return _scalarize(spec._H_arr(arr), p)


def s_eval(spec: Accumulator, p):
    """Decreasing reflection s with H(s(p)) = H(p), s(0) = 1, s(1) = 0."""
    arr = _validate_p(p)
    out = _s_arr(spec, np.atleast_1d(arr).astype(float))
    if np.isscalar(p) or (isinstance(p, np.ndarray) and p.ndim == 0):
        return float(out[0])
    return out.reshape(arr.shape)


def _s_arr(spec: Accumulator, p: np.ndarray) -> np.ndarray:
    if spec.kind == "seqstep":
        ps = spec.pstar
        hi = ps * (1.0 - p) / (1.0 - ps)
        lo = 1.0 - (1.0 - ps) * p / ps
        return np.where(p >= ps, hi, lo)

    fix = spec.fixed_point
    out = np.empty_like(p)
    flat = spec._flat_interval()
    done = np.zeros(p.shape, dtype=bool)
    if flat is not None:
        p1, p2 = flat
        m = (p >= p1) & (p <= p2)
        out[m] = p1 + p2 - p[m]
        done |= m

    target = spec._H_arr(p)
    # reflect the right branch onto [0, fix] and vice versa
    right = (p >= fix) & ~done
    left = (p < fix) & ~done
    for sel, lo0, hi0 in ((right, 0.0, fix), (left, fix, 1.0)):
        if not sel.any():
            continue
        lo = np.full(np.count_nonzero(sel), lo0)
        hi = np.full(np.count_nonzero(sel), hi0)
        tgt = target[sel]
        # H decreases on [0, fix] and increases on [fix, 1]
        sign = -1.0 if lo0 == 0.0 else 1.0
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            val = spec._H_arr(mid)
            go_right = sign * (val - tgt) < 0.0
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
            if np.max(hi - lo) <= _BISECT_TOL:
                break
        else:
            raise ArithmeticError("reflection bisection failed to converge")
        out[sel] = 0.5 * (lo + hi)
    # exact endpoints
    out[p == 0.0] = 1.0
    out[p == 1.0] = 0.0
    if flat is not None:
        p1, p2 = flat
        m = (p >= p1) & (p <= p2)
        out[m] = p1 + p2 - p[m]
    return out


def s_prime(spec: Accumulator, p):
    """One-sided derivative of s, s'(p) = (h(p) - 1)/(h(s(p)) - 1)."""
    arr = np.atleast_1d(_validate_p(p)).astype(float)
    s = _s_arr(spec, arr)
    eps = 1e-9
    below = arr <= spec.fixed_point
    p_side = np.where(below, np.maximum(arr - eps, 0.0),
                      np.minimum(arr + eps, 1.0))
    s_side = np.where(below, np.minimum(s + eps, 1.0),
                      np.maximum(s - eps, 0.0))
    num = spec._h_arr(p_side) - 1.0
    den = spec._h_arr(s_side) - 1.0
    den = np.where(np.abs(den) < 1e-12, np.sign(den) * 1e-12 + (den == 0) * 1e-12,
                   den)
    out = num / den
    return _scalarize(out if not np.isscalar(p) else out[0], p)


def mask(spec: Accumulator, p):
    """Masking transform g(p) = min{p, s(p)} <= fixed point of s."""
    arr = _validate_p(p)
    s = _s_arr(spec, np.atleast_1d(arr).astype(float))
    out = np.minimum(np.atleast_1d(arr), s)
    if np.isscalar(p) or (isinstance(p, np.ndarray) and p.ndim == 0):
        return float(out[0])
    return out.reshape(arr.shape)


def unmask_pair(spec: Accumulator, q: float) -> tuple[float, float]:
    """Two-point preimage {q, s(q)} of a masked value q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("masked value must lie in [0, 1]")
    if q > spec.fixed_point + 1e-12:
        raise ValueError("masked value exceeds the fixed point of s")
    if q >= spec.fixed_point:
        return (spec.fixed_point, spec.fixed_point)
    high = float(_s_arr(spec, np.asarray([q], dtype=float))[0])
    return (q, high)


def fdp_hat(spec: Accumulator, sum_h: float, set_size: int) -> float:
    """FDP estimate (h(1) + sum_h) / (1 + |R|)."""
    return (spec.h_max + sum_h) / (1.0 + set_size)


# knockoff adapter -----------------------------------------------------


@dataclass(frozen=True)
class OneBitPValue:
    """Sign bit of a knockoff statistic as a p-value, with |W| side info."""

    p: float
    magnitude: float


def onebit_from_knockoff(W: float) -> OneBitPValue:
    """Convert a knockoff statistic to a one-bit p-value.

    Positive W (evidence against the null) maps to the rejectable bit 1/2;
    non-positive W maps to 1, so that with the p* = 1/2 step accumulator the
    null bits have mean h = 1 under symmetric sign flips.
    """
    return OneBitPValue(p=0.5 if W > 0 else 1.0, magnitude=abs(W))


# serialization --------------------------------------------------------


def accumulator_to_json(spec: Accumulator) -> dict:
    cap = None if math.isinf(spec.cap) else spec.cap
    return {"kind": spec.kind, "pstar": spec.pstar, "cap": cap}


def accumulator_from_json(obj: dict) -> Accumulator:
    kind = obj.get("kind")
    if kind == "seqstep":
        return seqstep(obj.get("pstar", 0.5))
    if kind == "forwardstop":
        cap = obj.get("cap")
        return forward_stop(DEFAULT_CAP if cap is None else cap)
    if kind == "hingeexp":
        return hinge_exp(obj.get("pstar", 0.5), obj.get("cap"))
    raise ValueError(f"unknown accumulator kind {kind!r}")
