"""Spectral data, counting functions, tail functionals and compactness checks.

The tail functionals follow the weight f_sigma(t) = t / log^sigma(t + e^(sigma+1)):
a compact operator lies in the (p, sigma) class when s_k = O(f_sigma(k)^(-1/p)),
and the limsup/liminf of s_k f_sigma(k)^(1/p) are the asymptotic quantities the
sector experiments estimate.  Finite windows can only approximate those limits,
so every windowed estimate carries a drift slope (least squares against log k)
that acceptance tests use instead of pretending convergence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .quantize import OperatorMatrix

__all__ = [
    "SpectralData",
    "TailParams",
    "TailEstimate",
    "KyFanReport",
    "eig_hermitian",
    "singular_values",
    "counting",
    "f_sigma",
    "tail_functional",
    "decay_fit",
    "check_kyfan",
    "weidl_norm",
    "check_weidl_triangle",
]

NOISE_FLOOR = 1e-10  # below this, eigenvalues are treated as discretization noise


def _entries(a) -> np.ndarray:
    return a.entries if isinstance(a, OperatorMatrix) else np.asarray(a)


@dataclass
class SpectralData:
    """Non-increasing eigenvalue/singular-value sequences of one operator.

    ``pos_eigs`` holds the positive eigenvalues, ``neg_eigs`` the magnitudes of
    the negative ones, ``svals`` all singular values; all sorted descending.
    """

    pos_eigs: np.ndarray
    neg_eigs: np.ndarray
    svals: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        for name in ("pos_eigs", "neg_eigs", "svals"):
            seq = np.asarray(getattr(self, name), dtype=float)
            if seq.size and (np.any(seq < 0) or np.any(np.diff(seq) > 0)):
                raise ValueError(f"{name} must be non-negative and non-increasing")
            setattr(self, name, seq)

    def sequence(self, which: str = "all") -> np.ndarray:
        if which == "all":
            return self.svals
        if which == "plus":
            return self.pos_eigs
        if which == "minus":
            return self.neg_eigs
        raise ValueError(f"unknown selector {which!r}")

    def to_csv(self, path) -> None:
        """Columns k,lambda_plus,lambda_minus,s; short columns padded empty."""
        kmax = max(len(self.pos_eigs), len(self.neg_eigs), len(self.svals))
        with open(path, "w", encoding="ascii") as fh:
            fh.write("k,lambda_plus,lambda_minus,s\n")
            for k in range(kmax):
                cells = [str(k + 1)]
                for seq in (self.pos_eigs, self.neg_eigs, self.svals):
                    cells.append(f"{seq[k]:.17g}" if k < len(seq) else "")
                fh.write(",".join(cells) + "\n")


@dataclass(frozen=True)
class TailParams:
    p: float
    sigma: float = 0.0

    def __post_init__(self):
        if not 0 < self.p <= 2:
            raise ValueError("p must lie in (0, 2]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass
class TailEstimate:
    """Windowed estimate of the limsup/liminf tail functionals."""

    p: float
    sigma: float
    k_min: int
    k_max: int
    series: np.ndarray
    sup_estimate: float
    inf_estimate: float
    drift_slope: float

    def to_json(self, path=None) -> str:
        doc = {
            "p": self.p,
            "sigma": self.sigma,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "sup": self.sup_estimate,
            "inf": self.inf_estimate,
            "drift_slope": self.drift_slope,
            "series": [float(v) for v in self.series],
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w", encoding="ascii") as fh:
                fh.write(text + "\n")
        return text


def eig_hermitian(a, source_tag: str = "", hermiticity_tol: float = 1e-8) -> SpectralData:
    """Full spectrum of a Hermitian matrix, split by sign.

    Rejects matrices whose relative non-Hermiticity exceeds ``hermiticity_tol``
    (use :func:`singular_values` for those).
    """
    m = _entries(a)
    scale = float(np.max(np.abs(m))) or 1.0
    defect = float(np.max(np.abs(m - m.conj().T))) / scale
    if defect > hermiticity_tol:
        raise ValueError(
            f"matrix is not Hermitian (relative defect {defect:.2e}); "
            "use singular_values instead"
        )
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    pos = np.sort(w[w > 0])[::-1]
    neg = np.sort(-w[w < 0])[::-1]
    svals = np.sort(np.abs(w))[::-1]
    tag = source_tag or getattr(a, "symbol_tag", "")
    return SpectralData(pos, neg, svals, tag)


def singular_values(a, source_tag: str = "") -> SpectralData:
    """Singular values only; the signed sequences are left empty."""
    m = _entries(a)
    s = np.linalg.svd(m, compute_uv=False)
    tag = source_tag or getattr(a, "symbol_tag", "")
    return SpectralData(np.array([]), np.array([]), np.sort(s)[::-1], tag)


def counting(sd: SpectralData, s: float, which: str = "all") -> int:
    """n(s): number of entries strictly above s in the selected sequence."""
    if s <= 0:
        raise ValueError("counting threshold must be positive")
    return int(np.count_nonzero(sd.sequence(which) > s))


def f_sigma(t, sigma: float, shift: Optional[float] = None):
    """f_sigma(t) = t / log^sigma(t + shift); shift defaults to e^(sigma+1).

    Increasing and concave for t > 0 with the default shift, hence
    subadditive; sigma = 0 gives the identity.
    """
    t = np.asarray(t, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return t + 0.0
    if shift is None:
        shift = math.exp(sigma + 1.0)
    return t / np.log(t + shift) ** sigma


def _drift_slope(series: np.ndarray, ks: np.ndarray) -> float:
    x = np.log(ks.astype(float))
    coeff = np.polyfit(x, series, 1)
    return float(coeff[0])


def tail_functional(
    sd: SpectralData,
    tp: TailParams,
    window: Tuple[int, int],
    which: str = "all",
    shift: Optional[float] = None,
    noise_floor: float = NOISE_FLOOR,
) -> TailEstimate:
    """Windowed series s_k * f_sigma(k)^(1/p) with sup/inf and drift slope.

    ``window`` is the inclusive 1-based index range (k_min, k_max).  Entries
    at or below the noise floor make the estimate meaningless and raise,
    naming the first unreliable index.
    """
    k_min, k_max = int(window[0]), int(window[1])
    seq = sd.sequence(which)
    if k_min < 1 or k_max > len(seq) or k_min > k_max:
        raise ValueError(f"window {window} outside available spectrum (len {len(seq)})")
    vals = seq[k_min - 1 : k_max]
    ks = np.arange(k_min, k_max + 1)
    bad = np.nonzero(vals <= noise_floor)[0]
    if bad.size:
        raise ValueError(
            f"spectrum reaches the noise floor {noise_floor:g} at k = {int(ks[bad[0]])}"
        )
    series = vals * f_sigma(ks, tp.sigma, shift=shift) ** (1.0 / tp.p)
    return TailEstimate(
        p=tp.p,
        sigma=tp.sigma,
        k_min=k_min,
        k_max=k_max,
        series=series,
        sup_estimate=float(series.max()),
        inf_estimate=float(series.min()),
        drift_slope=_drift_slope(series, ks),
    )


def decay_fit(
    sd: SpectralData,
    window: Tuple[int, int],
    which: str = "all",
    noise_floor: float = NOISE_FLOOR,
) -> float:
    """Least-squares exponent e with s_k ~ C k^e over the window (log-log)."""
    k_min, k_max = int(window[0]), int(window[1])
    seq = sd.sequence(which)
    if k_min < 1 or k_max > len(seq) or k_min > k_max:
        raise ValueError(f"window {window} outside available spectrum (len {len(seq)})")
    vals = seq[k_min - 1 : k_max]
    ks = np.arange(k_min, k_max + 1)
    bad = np.nonzero(vals <= noise_floor)[0]
    if bad.size:
        raise ValueError(
            f"spectrum reaches the noise floor {noise_floor:g} at k = {int(ks[bad[0]])}"
        )
    coeff = np.polyfit(np.log(ks.astype(float)), np.log(vals), 1)
    return float(coeff[0])


@dataclass
class KyFanReport:
    passed: bool
    n_checked: int
    first_violation: Optional[dict] = None


def _svals(m: np.ndarray) -> np.ndarray:
    return np.sort(np.linalg.svd(m, compute_uv=False))[::-1]


def check_kyfan(a, b, counting_samples: int = 25, rel_slack: float = 1e-10) -> KyFanReport:
    """Exhaustive singular-value and counting-function Ky Fan checks.

    Verifies s_{k+m-1}(A+B) <= s_k(A) + s_m(B) for every valid (k, m), the
    counting form n(s1+s2; A+B) <= n(s1; A) + n(s2; B) on a sample of
    thresholds, and (for Hermitian pairs) the signed analogues.  The slack
    covers eigensolver round-off only; the inequalities are exact theorems.
    """
    ma, mb = _entries(a), _entries(b)
    if ma.shape != mb.shape or ma.shape[0] != ma.shape[1]:
        raise ValueError("matrices must share a square shape")
    if ma.shape[0] > 64:
        raise ValueError("exhaustive Ky Fan check capped at 64 x 64")
    n = ma.shape[0]
    sa, sb, ss = _svals(ma), _svals(mb), _svals(ma + mb)
    scale = max(sa[0], sb[0], ss[0], 1.0)
    tol = rel_slack * scale
    checked = 0
    for k in range(1, n + 1):
        # vectorized over m at fixed k
        m_idx = np.arange(1, n - k + 2)
        lhs = ss[k + m_idx - 2]
        rhs = sa[k - 1] + sb[m_idx - 1]
        checked += len(m_idx)
        bad = np.nonzero(lhs > rhs + tol)[0]
        if bad.size:
            m_bad = int(m_idx[bad[0]])
            return KyFanReport(False, checked, {
                "form": "singular",
                "k": k,
                "m": m_bad,
                "lhs": float(lhs[bad[0]]),
                "rhs": float(rhs[bad[0]]),
            })
    thresholds = np.linspace(ss[-1] + 1e-12, ss[0], counting_samples)
    for s1 in thresholds:
        for s2 in thresholds:
            lhs = int(np.count_nonzero(ss > s1 + s2))
            rhs = int(np.count_nonzero(sa > s1 - tol)) + int(np.count_nonzero(sb > s2 - tol))
            checked += 1
            if lhs > rhs:
                return KyFanReport(False, checked, {
                    "form": "counting", "s1": float(s1), "s2": float(s2),
                    "lhs": lhs, "rhs": rhs,
                })
    herm = (
        np.max(np.abs(ma - ma.conj().T)) <= 1e-12 * scale
        and np.max(np.abs(mb - mb.conj().T)) <= 1e-12 * scale
    )
    if herm:
        for sign in (1.0, -1.0):
            ea = np.sort(sign * np.linalg.eigvalsh(ma))[::-1]
            eb = np.sort(sign * np.linalg.eigvalsh(mb))[::-1]
            es = np.sort(sign * np.linalg.eigvalsh(ma + mb))[::-1]
            ea, eb, es = ea[ea > 0], eb[eb > 0], es[es > 0]
            for k in range(1, len(ea) + 1):
                top = min(len(eb), len(es) - k + 1)
                if top < 1:
                    continue
                m_idx = np.arange(1, top + 1)
                lhs = es[k + m_idx - 2]
                rhs = ea[k - 1] + eb[m_idx - 1]
                checked += len(m_idx)
                bad = np.nonzero(lhs > rhs + tol)[0]
                if bad.size:
                    return KyFanReport(False, checked, {
                        "form": "signed", "sign": sign, "k": k, "m": int(m_idx[bad[0]]),
                        "lhs": float(lhs[bad[0]]), "rhs": float(rhs[bad[0]]),
                    })
    return KyFanReport(True, checked)


def weidl_norm(svals: np.ndarray, p: float, sigma: float) -> float:
    """Finite-matrix (p, sigma)-class norm: max_k s_k f_sigma(k)^(1/p)."""
    svals = np.asarray(svals, dtype=float)
    ks = np.arange(1, len(svals) + 1)
    return float(np.max(svals * f_sigma(ks, sigma) ** (1.0 / p)))


def check_weidl_triangle(a, b, p: float, sigma: float, rel_slack: float = 1e-10) -> bool:
    """Triangle inequality with exponent p/(p+1) for the (p, sigma) norm."""
    ma, mb = _entries(a), _entries(b)
    q = p / (p + 1.0)
    na = weidl_norm(_svals(ma), p, sigma)
    nb = weidl_norm(_svals(mb), p, sigma)
    ns = weidl_norm(_svals(ma + mb), p, sigma)
    return ns**q <= na**q + nb**q + rel_slack * max(1.0, na**q + nb**q)
