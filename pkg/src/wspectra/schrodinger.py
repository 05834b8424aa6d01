"""Eigenvalue counting for -u'' - V u via Prufer shooting and Birman-Schwinger.

The Dirichlet count below -lam on (a, b) is floor(phi(b)/pi) for the Prufer
angle of the solution with u(a) = 0.  The plain angle theta (u = rho sin
theta, u' = rho cos theta) obeys theta' = cos^2 + (V - lam) sin^2 and whips
through pi at rate up to V inside deep wells, so a step keyed to sqrt(V)
under-resolves it and a step keyed to V would need ~1e9 RK4 steps for the
g ~ 1e7 scans this module exists for.  We integrate the scaled angle instead
(u' = rho * omega * cos phi with omega = sqrt((V - lam)_+ + lam + 1)):

    phi' = omega cos^2 phi + ((V - lam)/omega) sin^2 phi
           + (omega'/(2 omega)) sin 2 phi,

which advances at the uniform rate ~omega, crosses multiples of pi upward
(phi' = omega > 0 there, so floor(phi/pi) still counts zeros), and needs a
step of only eta/omega.  The count is integer-valued, so agreement under
halving eta is the acceptance certificate (Richardson self-check).

The matrix route builds T(lam) = D_sqrtV F* diag(1/(xi_m^2 + lam)) F D_sqrtV
on a periodic grid of period 2L with integer-spaced dual frequencies
xi_m = pi m / L; counting eigenvalues above 1 reproduces the ODE count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from .quantize import Grid1D, OperatorMatrix
from .symbols import (
    Bump,
    Gaussian,
    PowerDecay,
    RadialPower,
    Scaled,
    Shifted,
    SymbolField,
    SymbolParameterError,
)

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


__all__ = [
    "SchrodingerProblem",
    "BSProblem",
    "PruferEnvelope",
    "coulomb_well",
    "prufer_count",
    "decoupled_count",
    "prufer_estimate_bounds",
    "build_bs_matrix",
    "bs_count",
]

DEFAULT_ETA = 0.05
_H_CAP = 0.1
BS_THRESHOLD_TOL = 1e-6

# potential codes understood by the compiled kernel
_P_CONST = 0
_P_COULOMB = 1
_P_GAUSS = 2
_P_BUMP = 3
_P_POWER = 4
_P_CALLABLE = -1


def coulomb_well(g: float) -> SymbolField:
    """g / (1 + x^2): the scaled Coulomb-type well used by the counting scans."""
    return Scaled(g, PowerDecay(2.0, 2.0))


@dataclass
class _PotentialSpec:
    code: int
    p1: float = 0.0
    p2: float = 0.0
    p3: float = 0.0
    p4: float = 0.0
    fn: Optional[Callable] = None  # vectorized python fallback

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.code == _P_CONST:
            return np.full(x.shape, self.p1)
        if self.code == _P_COULOMB:
            return self.p1 / (1.0 + x**2)
        if self.code == _P_GAUSS:
            return self.p1 * np.exp(-self.p2 * x**2)
        if self.code == _P_BUMP:
            u = ((x - self.p3) ** 2 + self.p4**2) / self.p2**2
            out = np.zeros(x.shape)
            inside = u < 1.0 - 1e-9
            out[inside] = self.p1 * np.exp(1.0 - 1.0 / (1.0 - u[inside]))
            return out
        if self.code == _P_POWER:
            return self.p1 * (1.0 + x**2) ** (-self.p2 / 2.0)
        return np.asarray(self.fn(x), dtype=float)


def _compile_potential(v: Union[SymbolField, Callable, float]) -> _PotentialSpec:
    """Map a potential onto a kernel code; anything unrecognized falls back to
    the (slower) python integrator through a callable."""
    scale = 1.0
    base = v
    while isinstance(base, Scaled):
        scale *= base.c
        base = base.base
    if isinstance(base, (int, float)):
        return _PotentialSpec(_P_CONST, scale * float(base))
    if isinstance(base, Gaussian):
        return _PotentialSpec(_P_GAUSS, scale, base.r)
    if isinstance(base, PowerDecay):
        if base.alpha == 2.0:
            return _PotentialSpec(_P_COULOMB, scale)
        return _PotentialSpec(_P_POWER, scale, base.alpha)
    if isinstance(base, RadialPower):
        if base.gamma == 2.0:
            return _PotentialSpec(_P_COULOMB, scale)
        return _PotentialSpec(_P_POWER, scale, base.gamma)
    if isinstance(base, Bump):
        return _PotentialSpec(_P_BUMP, scale, base.radius, base.center[0], base.center[1])
    if isinstance(base, Shifted) and base.dxi == 0.0 and isinstance(base.base, Bump):
        b = base.base
        return _PotentialSpec(_P_BUMP, scale, b.radius, b.center[0] + base.dx, b.center[1])
    if isinstance(base, SymbolField):
        sym = base
        c = scale
        return _PotentialSpec(_P_CALLABLE, fn=lambda x: c * np.real(np.asarray(sym.eval_array(np.asarray(x, float), 0.0))))
    if callable(base):
        fn = base
        c = scale
        return _PotentialSpec(_P_CALLABLE, fn=lambda x: c * np.asarray([fn(t) for t in np.atleast_1d(np.asarray(x, float))]).reshape(np.shape(np.asarray(x, float))))
    raise SymbolParameterError(f"cannot interpret potential {v!r}")


@dataclass
class SchrodingerProblem:
    """Potential plus spectral threshold: count eigenvalues of -u''-Vu below -lam.

    Either a finite ``interval`` (a, b) or a whole-line problem with a
    ``truncation_radius`` R for the decoupled middle interval (-R, R).
    """

    V: Union[SymbolField, Callable, float]
    lam: float
    interval: Optional[Tuple[float, float]] = None
    truncation_radius: Optional[float] = None

    def __post_init__(self):
        if self.lam <= 0:
            raise SymbolParameterError("lam must be positive")
        if (self.interval is None) == (self.truncation_radius is None):
            raise SymbolParameterError("specify exactly one of interval / truncation_radius")
        if self.interval is not None and not self.interval[0] < self.interval[1]:
            raise SymbolParameterError("interval must satisfy a < b")
        self._spec = _compile_potential(self.V)


class PruferEnvelope(NamedTuple):
    lower: float
    upper: float
    main_term: float


# ---------------------------------------------------------------------------
# ODE kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _pot_kernel(x, code, p1, p2, p3, p4):
    if code == 0:
        return p1
    if code == 1:
        return p1 / (1.0 + x * x)
    if code == 2:
        return p1 * math.exp(-p2 * x * x)
    if code == 3:
        u = ((x - p3) * (x - p3) + p4 * p4) / (p2 * p2)
        if u < 1.0 - 1e-9:
            return p1 * math.exp(1.0 - 1.0 / (1.0 - u))
        return 0.0
    return p1 * (1.0 + x * x) ** (-p2 / 2.0)


@njit(cache=True)
def _dpot_kernel(x, code, p1, p2, p3, p4):
    if code == 0:
        return 0.0
    if code == 1:
        q = 1.0 + x * x
        return -2.0 * p1 * x / (q * q)
    if code == 2:
        return -2.0 * p2 * x * p1 * math.exp(-p2 * x * x)
    if code == 3:
        u = ((x - p3) * (x - p3) + p4 * p4) / (p2 * p2)
        if u < 1.0 - 1e-9:
            du = 2.0 * (x - p3) / (p2 * p2)
            w = 1.0 - u
            return -p1 * math.exp(1.0 - 1.0 / w) * du / (w * w)
        return 0.0
    return -p1 * p2 * x * (1.0 + x * x) ** (-p2 / 2.0 - 1.0)


@njit(cache=True)
def _phi_rhs(x, phi, lam, c0, code, p1, p2, p3, p4):
    v = _pot_kernel(x, code, p1, p2, p3, p4)
    w = v - lam
    wp = w if w > 0.0 else 0.0
    omega = math.sqrt(wp + c0)
    if w > 0.0:
        domega = _dpot_kernel(x, code, p1, p2, p3, p4) / (2.0 * omega)
    else:
        domega = 0.0
    s, c = math.sin(phi), math.cos(phi)
    return omega * c * c + (w / omega) * s * s + (domega / omega) * s * c


@njit(cache=True)
def _theta_kernel(a, b, lam, eta, h_cap, code, p1, p2, p3, p4):
    c0 = lam + 1.0
    phi = 0.0
    x = a
    while x < b:
        v = _pot_kernel(x, code, p1, p2, p3, p4)
        w = v - lam
        omega = math.sqrt((w if w > 0.0 else 0.0) + c0)
        dv = _dpot_kernel(x, code, p1, p2, p3, p4)
        h = eta / (omega + abs(dv) / (2.0 * omega * omega))
        if h > h_cap:
            h = h_cap
        if x + h > b:
            h = b - x
        k1 = _phi_rhs(x, phi, lam, c0, code, p1, p2, p3, p4)
        k2 = _phi_rhs(x + 0.5 * h, phi + 0.5 * h * k1, lam, c0, code, p1, p2, p3, p4)
        k3 = _phi_rhs(x + 0.5 * h, phi + 0.5 * h * k2, lam, c0, code, p1, p2, p3, p4)
        k4 = _phi_rhs(x + h, phi + h * k3, lam, c0, code, p1, p2, p3, p4)
        phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x += h
    return phi


def _theta_python(a, b, lam, eta, h_cap, spec: _PotentialSpec) -> float:
    c0 = lam + 1.0

    def pot(x):
        return float(spec(np.float64(x)))

    def dpot(x):
        hh = 1e-6 * (1.0 + abs(x))
        return (pot(x + hh) - pot(x - hh)) / (2.0 * hh)

    def rhs(x, phi):
        w = pot(x) - lam
        omega = math.sqrt(max(w, 0.0) + c0)
        domega = dpot(x) / (2.0 * omega) if w > 0.0 else 0.0
        s, c = math.sin(phi), math.cos(phi)
        return omega * c * c + (w / omega) * s * s + (domega / omega) * s * c

    phi = 0.0
    x = a
    while x < b:
        w = pot(x) - lam
        omega = math.sqrt(max(w, 0.0) + c0)
        h = min(eta / (omega + abs(dpot(x)) / (2.0 * omega * omega)), h_cap, b - x)
        k1 = rhs(x, phi)
        k2 = rhs(x + 0.5 * h, phi + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h, phi + 0.5 * h * k2)
        k4 = rhs(x + h, phi + h * k3)
        phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x += h
    return phi


def _terminal_angle(spec: _PotentialSpec, a, b, lam, eta) -> float:
    h_cap = min(_H_CAP, (b - a) / 16.0)
    if spec.code >= 0:
        return float(_theta_kernel(float(a), float(b), float(lam), float(eta), h_cap,
                                   spec.code, spec.p1, spec.p2, spec.p3, spec.p4))
    return _theta_python(float(a), float(b), float(lam), float(eta), h_cap, spec)


def prufer_count(prob: SchrodingerProblem, lam: Optional[float] = None, eta: float = DEFAULT_ETA) -> int:
    """Dirichlet eigenvalue count below -lam on the problem's interval.

    Integrates at step factors eta and eta/2 and requires the integer counts
    to agree; on disagreement the step is refined (at most 3 times) before
    giving up.
    """
    if prob.interval is None:
        raise SymbolParameterError("prufer_count needs a finite interval")
    lam = prob.lam if lam is None else float(lam)
    a, b = prob.interval
    spec = prob._spec
    for _ in range(4):
        c1 = math.floor(_terminal_angle(spec, a, b, lam, eta) / math.pi)
        c2 = math.floor(_terminal_angle(spec, a, b, lam, eta / 2.0) / math.pi)
        if c1 == c2:
            return int(c1)
        eta /= 2.0
    raise RuntimeError(
        "Prufer count failed its step-halving self-check after 3 refinements; "
        "the potential may be too rough for the step policy"
    )


def decoupled_count(
    prob: SchrodingerProblem,
    lam: Optional[float] = None,
    R: Optional[float] = None,
    eta: float = DEFAULT_ETA,
) -> Tuple[int, int]:
    """Whole-line count via the middle Dirichlet interval (-R, R).

    Requires V < lam outside [-R, R] so both outer counts vanish; splitting
    the line changes the count by at most 2, which is the returned error bar.
    """
    lam = prob.lam if lam is None else float(lam)
    R = prob.truncation_radius if R is None else float(R)
    if R is None:
        raise SymbolParameterError("decoupled_count needs a truncation radius")
    spec = prob._spec
    xs = np.concatenate([np.linspace(R, 4.0 * R, 1024), np.geomspace(4.0 * R, 1024.0 * R, 256)])
    for sign in (1.0, -1.0):
        vals = spec(sign * xs)
        bad = np.nonzero(vals >= lam)[0]
        if bad.size:
            x_bad = sign * xs[bad[0]]
            raise SymbolParameterError(
                f"V({x_bad:g}) = {vals[bad[0]]:g} >= lam = {lam:g}; "
                "outer counts do not vanish at this truncation radius"
            )
    inner = SchrodingerProblem(prob.V, lam, interval=(-R, R))
    return prufer_count(inner, lam, eta=eta), 2


def _potential_derivative(v, spec: _PotentialSpec):
    if isinstance(v, SymbolField) and v.derivative_mode == "closed_form":
        return lambda x: float(np.real(np.asarray(v.derivative_array(1, 0, np.float64(x), 0.0))))
    h = 1e-6

    def dfd(x):
        return float((spec(np.float64(x + h)) - spec(np.float64(x - h))) / (2 * h))

    return dfd


def prufer_estimate_bounds(
    v: Union[SymbolField, Callable, float],
    lam: float,
    R: float,
) -> PruferEnvelope:
    """Two-sided envelope for the middle-interval count.

    main = (1/pi) int sqrt(V); the half-width adds the |V'|/(V + |lam|)
    quadrature term, 6 R sqrt(|lam| + 1)/pi and 1.  Potentials must be C^1 and
    non-negative on [-R, R].
    """
    from scipy.integrate import quad

    spec = _compile_potential(v)
    dv = _potential_derivative(v, spec)

    def sqrt_v(x):
        val = float(spec(np.float64(x)))
        if val < -1e-12:
            raise SymbolParameterError(f"potential negative at x = {x:g}")
        return math.sqrt(max(val, 0.0))

    def err_integrand(x):
        return abs(dv(x)) / (float(spec(np.float64(x))) + abs(lam))

    main = 0.0
    err = 0.0
    for lo, hi in ((-R, 0.0), (0.0, R)):
        main += quad(sqrt_v, lo, hi, epsabs=1e-12, epsrel=1e-8, limit=400)[0]
        err += quad(err_integrand, lo, hi, epsabs=1e-12, epsrel=1e-8, limit=400)[0]
    main /= math.pi
    half_width = err / (4.0 * math.pi) + 6.0 * R * math.sqrt(abs(lam) + 1.0) / math.pi + 1.0
    return PruferEnvelope(main - half_width, main + half_width, main)


# ---------------------------------------------------------------------------
# Birman-Schwinger matrix
# ---------------------------------------------------------------------------


@dataclass
class BSProblem:
    V: Union[SymbolField, Callable, float]
    lam: float
    grid: Grid1D
    matrix: OperatorMatrix
    near_threshold: list = field(default_factory=list)


def build_bs_matrix(v: Union[SymbolField, Callable, float], lam: float, grid: Grid1D) -> BSProblem:
    """T(lam) = D_sqrtV * F^* diag((xi_m^2 + lam)^-1) F * D_sqrtV.

    F is the unitary DFT on the periodic grid of period 2L, so the middle
    factor is a circulant built from the inverse FFT of the resolvent weights;
    the result is Hermitian positive semidefinite by construction.
    """
    if lam <= 0:
        raise SymbolParameterError("lam must be positive")
    spec = _compile_potential(v)
    vals = np.asarray(spec(grid.nodes), dtype=float)
    if np.any(vals < 0):
        j = int(np.argmin(vals))
        raise SymbolParameterError(f"potential negative at x = {grid.nodes[j]:g}")
    n = grid.n
    xi = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.h)  # = pi * m / L, integer m
    w = 1.0 / (xi**2 + lam)
    c = np.fft.ifft(w)
    # circulant C[j, l] = c[(j - l) mod n]; w real and even makes c real
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    cmat = c.real[idx]
    sq = np.sqrt(vals)
    t = sq[:, None] * cmat * sq[None, :]
    t = 0.5 * (t + t.T)
    tag = v.tag() if isinstance(v, SymbolField) else "potential"
    op = OperatorMatrix(t.astype(complex), grid, 0.0, f"bs[{tag}]")
    return BSProblem(v, float(lam), grid, op)


def bs_count(bs: BSProblem, threshold_tol: float = BS_THRESHOLD_TOL) -> int:
    """Number of eigenvalues of T(lam) strictly above 1.

    Eigenvalues within ``threshold_tol`` of 1 are recorded on
    ``bs.near_threshold`` so integer comparisons can reject flapping results.
    """
    eigs = np.linalg.eigvalsh(bs.matrix.entries)
    bs.near_threshold = [float(e) for e in eigs if abs(e - 1.0) <= threshold_tol]
    return int(np.count_nonzero(eigs > 1.0))
