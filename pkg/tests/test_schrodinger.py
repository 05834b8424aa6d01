import math

import numpy as np
import pytest

from wspectra import quantize as Q
from wspectra import schrodinger as SCH
from wspectra import symbols as S

PI = math.pi


# ---------------------------------------------------------------------------
# Prufer counting
# ---------------------------------------------------------------------------


def test_free_operator_has_no_bound_states():
    prob = SCH.SchrodingerProblem(0.0, 1.0, interval=(-10.0, 10.0))
    assert SCH.prufer_count(prob) == 0
    whole = SCH.SchrodingerProblem(0.0, 0.5, truncation_radius=5.0)
    assert SCH.decoupled_count(whole) == (0, 2)


@pytest.mark.parametrize("g", [10.5, 100.25, 1000.7])
@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_box_potential_oracle_exact(g, lam):
    # V = g on (0, pi) with Dirichlet ends: eigenvalues k^2 - g, so the count
    # below -lam is floor(sqrt(g - lam))
    prob = SCH.SchrodingerProblem(float(g), lam, interval=(0.0, PI))
    assert SCH.prufer_count(prob) == int(math.floor(math.sqrt(g - lam)))


def test_richardson_step_halving_stable():
    prob = SCH.SchrodingerProblem(SCH.coulomb_well(500.0), 1.0, interval=(-40.0, 40.0))
    c1 = SCH.prufer_count(prob, eta=SCH.DEFAULT_ETA)
    c2 = SCH.prufer_count(prob, eta=SCH.DEFAULT_ETA / 2)
    c3 = SCH.prufer_count(prob, eta=SCH.DEFAULT_ETA / 4)
    assert c1 == c2 == c3


def test_count_monotone_in_g_and_lambda():
    counts_g = []
    for g in (10.0, 40.0, 160.0, 640.0):
        prob = SCH.SchrodingerProblem(SCH.coulomb_well(g), 1.0, interval=(-60.0, 60.0))
        counts_g.append(SCH.prufer_count(prob))
    assert all(a <= b for a, b in zip(counts_g, counts_g[1:]))
    counts_lam = []
    for lam in (0.25, 0.5, 1.0, 2.0):
        prob = SCH.SchrodingerProblem(SCH.coulomb_well(200.0), lam, interval=(-60.0, 60.0))
        counts_lam.append(SCH.prufer_count(prob))
    assert all(a >= b for a, b in zip(counts_lam, counts_lam[1:]))


def test_python_fallback_matches_kernel():
    # a plain callable cannot be compiled; both integrators must agree
    g = 80.0
    compiled = SCH.SchrodingerProblem(SCH.coulomb_well(g), 1.0, interval=(-15.0, 15.0))
    fallback = SCH.SchrodingerProblem(lambda x: g / (1.0 + x * x), 1.0, interval=(-15.0, 15.0))
    assert SCH.prufer_count(compiled) == SCH.prufer_count(fallback)


def test_deep_well_counting_asymptotics():
    # |#(1, gV) - (sqrt g / pi) log g| <= 3 sqrt g for the scaled Coulomb well
    for g in (1e2, 1e4):
        prob = SCH.SchrodingerProblem(SCH.coulomb_well(g), 1.0,
                                      truncation_radius=2.0 * math.sqrt(g))
        count, bar = SCH.decoupled_count(prob)
        assert bar == 2
        main = math.sqrt(g) / PI * math.log(g)
        assert abs(count - main) <= 3.0 * math.sqrt(g)


def test_decoupled_count_precondition_violation():
    # V(x) = 200/(1+x^2) stays above lam = 1 well beyond R = 5
    prob = SCH.SchrodingerProblem(SCH.coulomb_well(200.0), 1.0, truncation_radius=5.0)
    with pytest.raises(S.SymbolParameterError, match="outer counts"):
        SCH.decoupled_count(prob)


def test_decoupled_count_outer_region_algebra():
    # g V(R) = g/(1+4g) < 1 at R = 2 sqrt(g), so the precondition holds
    g = 100.0
    r = 2.0 * math.sqrt(g)
    assert g / (1.0 + r**2) < 1.0
    prob = SCH.SchrodingerProblem(SCH.coulomb_well(g), 1.0, truncation_radius=r)
    count, _ = SCH.decoupled_count(prob)
    assert count > 0


def test_problem_validation():
    with pytest.raises(S.SymbolParameterError):
        SCH.SchrodingerProblem(0.0, -1.0, interval=(0.0, 1.0))
    with pytest.raises(S.SymbolParameterError):
        SCH.SchrodingerProblem(0.0, 1.0)  # neither interval nor radius
    with pytest.raises(S.SymbolParameterError):
        SCH.SchrodingerProblem(0.0, 1.0, interval=(2.0, 1.0))


# ---------------------------------------------------------------------------
# Prufer envelope (two-sided estimate)
# ---------------------------------------------------------------------------


def test_envelope_zero_potential():
    lam, r = 1.0, 5.0
    env = SCH.prufer_estimate_bounds(0.0, lam, r)
    assert env.main_term == 0.0
    halfwidth = 6.0 * r * math.sqrt(lam + 1.0) / PI + 1.0
    assert env.lower == pytest.approx(-halfwidth, rel=1e-12)
    assert env.upper == pytest.approx(halfwidth, rel=1e-12)


def test_envelope_main_term_log_growth():
    # (1/pi) int sqrt(g/(1+x^2)) over |x| < sqrt g = (sqrt g/pi)(log g + O(1))
    g = 1e4
    env = SCH.prufer_estimate_bounds(SCH.coulomb_well(g), 1.0, math.sqrt(g))
    analytic = math.sqrt(g) / PI * 2.0 * math.asinh(math.sqrt(g))
    assert env.main_term == pytest.approx(analytic, rel=1e-8)
    assert env.main_term == pytest.approx(math.sqrt(g) / PI * math.log(g), rel=0.35)


@pytest.mark.parametrize("v", [
    S.Gaussian(0.5),
    SCH.coulomb_well(30.0),
    S.Scaled(20.0, S.Bump(4.0)),
])
def test_count_inside_envelope(v):
    for r in (5.0, 10.0, 20.0):
        for lam in (0.5, 1.0, 2.0):
            prob = SCH.SchrodingerProblem(v, lam, interval=(-r, r))
            count = SCH.prufer_count(prob)
            env = SCH.prufer_estimate_bounds(v, lam, r)
            assert env.lower <= count <= env.upper


# ---------------------------------------------------------------------------
# Birman-Schwinger matrix
# ---------------------------------------------------------------------------


def test_bs_zero_potential():
    bs = SCH.build_bs_matrix(0.0, 1.0, Q.Grid1D(20.0, 64))
    assert np.all(bs.matrix.entries == 0.0)
    assert SCH.bs_count(bs) == 0


def test_bs_requires_nonnegative_potential():
    with pytest.raises(S.SymbolParameterError, match="negative"):
        SCH.build_bs_matrix(lambda x: -1.0, 1.0, Q.Grid1D(10.0, 32))
    with pytest.raises(S.SymbolParameterError):
        SCH.build_bs_matrix(1.0, -2.0, Q.Grid1D(10.0, 32))


def test_bs_trace_identity():
    # trace T = sum_j sum_m V(x_j) h (xi_m^2 + lam)^-1 / (2L), exactly
    grid = Q.Grid1D(30.0, 128)
    lam = 0.7
    v = SCH.coulomb_well(12.0)
    bs = SCH.build_bs_matrix(v, lam, grid)
    vals = 12.0 / (1.0 + grid.nodes**2)
    xi = 2.0 * PI * np.fft.fftfreq(grid.n, d=grid.h)
    explicit = np.sum(vals) * grid.h * np.sum(1.0 / (xi**2 + lam)) / (2.0 * grid.half_width)
    assert np.trace(bs.matrix.entries).real == pytest.approx(explicit, rel=1e-12)


def test_bs_matrix_hermitian_psd():
    bs = SCH.build_bs_matrix(S.Scaled(5.0, S.Bump(3.0)), 1.0, Q.Grid1D(40.0, 256))
    m = bs.matrix.entries
    assert np.max(np.abs(m - m.conj().T)) < 1e-12
    eigs = np.linalg.eigvalsh(m)
    assert eigs.min() > -1e-10


def test_bs_norm_decays_in_lambda():
    v = S.Scaled(5.0, S.Bump(3.0))
    grid = Q.Grid1D(40.0, 512)
    n1 = np.linalg.norm(SCH.build_bs_matrix(v, 1.0, grid).matrix.entries, 2)
    n100 = np.linalg.norm(SCH.build_bs_matrix(v, 100.0, grid).matrix.entries, 2)
    assert n100 < n1 / 50.0


@pytest.mark.parametrize("g", [10.0, 50.0, 100.0])
def test_bs_count_matches_ode_count(g):
    v = SCH.coulomb_well(g)
    prob = SCH.SchrodingerProblem(v, 1.0, truncation_radius=2.0 * math.sqrt(g))
    ode, bar = SCH.decoupled_count(prob)
    bs = SCH.build_bs_matrix(v, 1.0, Q.Grid1D(150.0, 2048))
    mat = SCH.bs_count(bs)
    assert abs(mat - ode) <= bar
    assert not bs.near_threshold


@pytest.mark.full
def test_bs_count_exact_equality_reference_grid():
    # reference-resolution check: integer equality at L = 200, n = 4096
    g = 50.0
    v = SCH.coulomb_well(g)
    prob = SCH.SchrodingerProblem(v, 1.0, truncation_radius=2.0 * math.sqrt(g))
    ode, _ = SCH.decoupled_count(prob)
    bs = SCH.build_bs_matrix(v, 1.0, Q.Grid1D(200.0, 4096))
    assert SCH.bs_count(bs) == ode


@pytest.mark.parametrize("s", [0.02, 0.01])
def test_counting_bridge_both_routes(s):
    # n(s; op^l(1/(4 pi <x> <xi>))) = #(1; s^-2 V) with V = (16 pi^2 (1+x^2))^-1;
    # the left side is the eigenvalue count above 1 of T(1) with the scaled
    # potential, the right side the decoupled ODE count
    g_eff = s**-2 / (16.0 * PI**2)
    v = SCH.coulomb_well(g_eff)
    prob = SCH.SchrodingerProblem(v, 1.0, truncation_radius=2.0 * math.sqrt(g_eff))
    ode, bar = SCH.decoupled_count(prob)
    bs = SCH.build_bs_matrix(v, 1.0, Q.Grid1D(120.0, 2048))
    mat = SCH.bs_count(bs)
    assert abs(mat - ode) <= bar
