"""Reference multiple-testing procedures used as comparison baselines."""

from __future__ import annotations

import numpy as np

from peelfdr import accum

__all__ = ["bh", "storey_bh", "fixed_order_accumulation"]


def bh(pvals, alpha: float) -> set:
    """Benjamini-Hochberg step-up: reject the k-hat smallest p-values where
    k-hat = max{k: p_(k) <= alpha k / n}."""
    p = np.asarray(pvals, dtype=float)
    n = len(p)
    if n == 0:
        return set()
    order = np.argsort(p, kind="stable")
    ps = p[order]
    ok = np.nonzero(ps <= alpha * np.arange(1, n + 1) / n)[0]
    if len(ok) == 0:
        return set()
    k = int(ok[-1]) + 1
    return set(int(i) for i in order[:k])


def storey_bh(pvals, alpha: float, lam: float = 0.5) -> set:
    """Storey's adaptive BH: estimate the null fraction from large p-values
    and run BH at the inflated level alpha / pi0-hat."""
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must be in (0, 1)")
    p = np.asarray(pvals, dtype=float)
    n = len(p)
    if n == 0:
        return set()
    pi0 = (1.0 + int(np.sum(p > lam))) / (n * (1.0 - lam))
    return bh(p, alpha / pi0)


def fixed_order_accumulation(pvals_in_order, spec, alpha: float) -> int:
    """Largest initial block whose running estimate stays at or below alpha.

    Given p-values in a fixed order, returns k-hat = max{k:
    (h(1) + sum_{i<=k} h(p_i)) / (1 + k) <= alpha}, or 0.  This matches an
    interactive run that peels the last-ordered element at every step.
    """
    p = np.asarray(pvals_in_order, dtype=float)
    n = len(p)
    if n == 0:
        return 0
    csum = np.cumsum(accum.h_eval(spec, p))
    est = (spec.h_max + csum) / (1.0 + np.arange(1, n + 1))
    ok = np.nonzero(est <= alpha)[0]
    return int(ok[-1]) + 1 if len(ok) else 0
