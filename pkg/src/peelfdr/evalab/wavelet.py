"""Orthonormal 2D Haar analysis and quadtree-structured denoising.

A full-depth decomposition of a 2^k x 2^k image leaves a single scaling
coefficient plus three detail sub-bands (LH, HL, HH) per level.  Within a
sub-band each coarse coefficient covers the 2x2 block of coefficients one
level finer, which is exactly a rooted quadtree, so coefficient selection
can be run through the interactive engine with a tree constraint.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from peelfdr import accum, constraints as cons, engine, scores

__all__ = [
    "WaveletDataset",
    "haar_dwt2",
    "haar_idwt2",
    "wavelet_pvalues",
    "subband_tree",
    "threshold_baselines",
    "snr",
    "compression_ratio",
    "randomized_pvalue",
    "denoise_image",
    "read_pgm",
    "write_pgm",
]

SUBBANDS = ("LH", "HL", "HH")
MAD_SCALE = 0.6745


@dataclass
class WaveletDataset:
    """Full-depth decomposition.  details[j][w] has shape (2^j, 2^j); level
    0 is the coarsest.  ll is the single scaling coefficient."""

    size: int
    ll: float
    details: list
    sigma_hat: dict = field(default_factory=dict)
    pvalues: list = None

    @property
    def levels(self) -> int:
        return len(self.details)

    def total_coefficients(self) -> int:
        return self.size * self.size


def _check_dyadic(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError("image must be square")
    n = img.shape[0]
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError("image side must be a power of two")
    return img, n


def haar_dwt2(image) -> WaveletDataset:
    """Full-depth orthonormal 2D Haar analysis."""
    cur, n = _check_dyadic(image)
    details = []
    while cur.shape[0] > 1:
        a = cur[0::2, 0::2]
        b = cur[0::2, 1::2]
        c = cur[1::2, 0::2]
        d = cur[1::2, 1::2]
        ll = (a + b + c + d) / 2.0
        hl = (a - b + c - d) / 2.0   # horizontal detail (column contrast)
        lh = (a + b - c - d) / 2.0   # vertical detail (row contrast)
        hh = (a - b - c + d) / 2.0
        details.append({"LH": lh, "HL": hl, "HH": hh})
        cur = ll
    details.reverse()  # coarsest first
    return WaveletDataset(size=n, ll=float(cur[0, 0]), details=details)


def haar_idwt2(ws: WaveletDataset) -> np.ndarray:
    """Synthesis inverse of haar_dwt2."""
    cur = np.array([[ws.ll]], dtype=float)
    for lev in ws.details:
        lh, hl, hh = lev["LH"], lev["HL"], lev["HH"]
        m = cur.shape[0]
        out = np.empty((2 * m, 2 * m))
        out[0::2, 0::2] = (cur + hl + lh + hh) / 2.0
        out[0::2, 1::2] = (cur - hl + lh - hh) / 2.0
        out[1::2, 0::2] = (cur + hl - lh - hh) / 2.0
        out[1::2, 1::2] = (cur - hl - lh + hh) / 2.0
        cur = out
    return cur


def wavelet_pvalues(ws: WaveletDataset, two_sided: bool = False
                    ) -> WaveletDataset:
    """Attach per-sub-band noise scales and coefficient p-values.

    sigma is the normalized median absolute coefficient at the finest scale
    of each sub-band.  One-sided p = 1 - Phi(d/sigma); the two-sided variant
    is 2(1 - Phi(|d|/sigma)), uniform under the null either way.
    """
    if not ws.details:
        raise ValueError("decomposition has no detail levels")
    ws = copy.deepcopy(ws)
    finest = ws.details[-1]
    for w in SUBBANDS:
        s = float(np.median(np.abs(finest[w]))) / MAD_SCALE
        if s < 1e-12:
            warnings.warn(f"constant {w} sub-band; flooring sigma")
            s = 1e-12
        ws.sigma_hat[w] = s
    ws.pvalues = []
    for lev in ws.details:
        pv = {}
        for w in SUBBANDS:
            t = lev[w] / ws.sigma_hat[w]
            if two_sided:
                pv[w] = np.minimum(2.0 * (1.0 - ndtr(np.abs(t))), 1.0)
            else:
                pv[w] = 1.0 - ndtr(t)
        ws.pvalues.append(pv)
    return ws


def subband_tree(ws: WaveletDataset, w: str):
    """Flatten one sub-band into (parent array, p vector, positions).

    Ids are assigned coarsest level first, row-major inside a level; the
    coefficient at (j, r, c) parents the 2x2 block at level j+1.
    """
    if ws.pvalues is None:
        raise ValueError("call wavelet_pvalues first")
    offsets = []
    total = 0
    for j in range(ws.levels):
        offsets.append(total)
        total += 4 ** j
    parent = np.full(total, -1, dtype=int)
    p = np.empty(total)
    pos = []
    for j in range(ws.levels):
        m = 2 ** j
        pj = ws.pvalues[j][w]
        for r in range(m):
            for c in range(m):
                i = offsets[j] + r * m + c
                p[i] = pj[r, c]
                pos.append((j, r, c))
                if j > 0:
                    parent[i] = offsets[j - 1] + (r // 2) * (m // 2) + (c // 2)
    return parent, p, pos


def threshold_baselines(ws: WaveletDataset, mode: str) -> dict:
    """Universal-threshold keep (hard) or shrink (soft) baseline.

    The per-sub-band threshold is sqrt(2 sigma^2 log N) with N the total
    coefficient count.  Returns the thresholded dataset and the number of
    selected (surviving) detail coefficients.
    """
    if mode not in ("hard", "soft"):
        raise ValueError("mode must be 'hard' or 'soft'")
    if not ws.sigma_hat:
        ws = wavelet_pvalues(ws)
    out = copy.deepcopy(ws)
    n_total = ws.total_coefficients()
    selected = 0
    for lev in out.details:
        for w in SUBBANDS:
            t = math.sqrt(2.0 * ws.sigma_hat[w] ** 2 * math.log(n_total))
            d = lev[w]
            if mode == "hard":
                keep = np.abs(d) > t
                lev[w] = np.where(keep, d, 0.0)
            else:
                lev[w] = np.sign(d) * np.maximum(np.abs(d) - t, 0.0)
                keep = lev[w] != 0.0
            selected += int(np.sum(keep))
    return {"ws": out, "selected": selected}


def snr(original, recon) -> float:
    """Signal-to-noise ratio in dB: 10 log10(var(image) / var(error))."""
    original = np.asarray(original, dtype=float)
    err = np.asarray(recon, dtype=float) - original
    s_noise = float(np.var(err))
    if s_noise == 0.0:
        return float("inf")
    return 10.0 * math.log10(float(np.var(original)) / s_noise)


def compression_ratio(total: int, selected: int) -> float:
    if selected == 0:
        return float("inf")
    return total / selected


def randomized_pvalue(y: float, f0_sample, offset: float = 0.0, rng=None
                      ) -> float:
    """Continuous p-value against an empirical null: 1 - F0((y-B)-) minus a
    uniform share of the point mass at y - B."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    x = np.sort(np.asarray(f0_sample, dtype=float))
    m = len(x)
    t = y - offset
    n_lt = int(np.searchsorted(x, t, side="left"))
    n_le = int(np.searchsorted(x, t, side="right"))
    surv = 1.0 - n_lt / m          # 1 - F0(t-)
    mass = (n_le - n_lt) / m
    return surv - rng.random() * mass


def denoise_image(noisy, alpha: float = 0.1, spec=None, rule: str = "canonical",
                  two_sided: bool = False, em_iters: int = 3, seed: int = 0
                  ) -> dict:
    """Select detail coefficients by one interactive session per sub-band.

    Each sub-band quadtree is a single rooted tree, so the three sub-bands
    run as three independent sessions; the scaling coefficient is always
    kept.  Returns the reconstruction, the selected count, and the
    compression ratio, plus hard/soft universal-threshold reconstructions.
    """
    spec = spec or accum.seqstep(0.5)
    ws = wavelet_pvalues(haar_dwt2(noisy), two_sided=two_sided)
    kept = copy.deepcopy(ws)
    selected = 0
    for w in SUBBANDS:
        parent, p, pos = subband_tree(ws, w)
        keep = np.zeros(len(p), dtype=bool)
        if rule == "canonical":
            # the leaf-heap shortcut reproduces the session run exactly and
            # keeps large trees interactive
            from peelfdr.evalab.experiment import fast_tree_canonical

            rej = fast_tree_canonical(p, spec, parent, alpha)
            keep[sorted(rej)] = True
        else:
            constraint = cons.tree(parent)
            X = np.asarray([[float(j), float(r), float(c)]
                            for j, r, c in pos])
            sess = engine.create_session((X, p), spec, constraint=constraint,
                                         alpha=alpha, seed=seed)
            engine.run_auto(sess, scores.ModelAssistedRule(
                rule, em_iters=em_iters))
            keep[sess.rejection] = True
        selected += int(keep.sum())
        for i, (j, r, c) in enumerate(pos):
            if not keep[i]:
                kept.details[j][w][r, c] = 0.0
    recon = haar_idwt2(kept)
    hard = threshold_baselines(ws, "hard")
    soft = threshold_baselines(ws, "soft")
    total = ws.total_coefficients()
    return {
        "recon": recon,
        "selected": selected + 1,  # scaling coefficient
        "cr": compression_ratio(total, selected + 1),
        "hard_recon": haar_idwt2(hard["ws"]),
        "hard_cr": compression_ratio(total, hard["selected"] + 1),
        "soft_recon": haar_idwt2(soft["ws"]),
        "soft_cr": compression_ratio(total, soft["selected"] + 1),
    }


# portable graymap IO --------------------------------------------------


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), \
        int(tokens[3])
    if magic == b"P2":
        return np.array(data[i:].split(), dtype=float).reshape(h, w)
    if magic == b"P5":
        i += 1  # single whitespace after maxval
        dtype = np.uint8 if maxval < 256 else ">u2"
        return np.frombuffer(data, dtype=dtype, offset=i,
                             count=w * h).reshape(h, w).astype(float)
    raise ValueError("not a PGM file")


def write_pgm(path, img, maxval: int = 255) -> None:
    img = np.clip(np.rint(np.asarray(img, dtype=float)), 0, maxval)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        fh.write(img.astype(np.uint8 if maxval < 256 else ">u2").tobytes())
