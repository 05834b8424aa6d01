import math

import numpy as np
import pytest

from wspectra import lattice as LAT
from wspectra import symbols as S

PI = math.pi


# ---------------------------------------------------------------------------
# partition of unity
# ---------------------------------------------------------------------------


def test_partition_sums_to_one_at_random_points():
    rng = np.random.default_rng(42)
    pts = rng.uniform(-50.0, 50.0, size=(10_000, 2))
    worst = 0.0
    for x, xi in pts:
        worst = max(worst, abs(sum(LAT.partition_weight((x, xi)).values()) - 1.0))
    assert worst <= 1e-12


def test_partition_examples():
    # four nearest lattice points at (0.5, 0.5)
    w = LAT.partition_weight((0.5, 0.5))
    assert set(w) <= {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert sum(w.values()) == pytest.approx(1.0, abs=1e-12)
    # support: zeta_0 vanishes at (1.5, 0)
    assert LAT.partition_weight((1.5, 0.0)).get((0, 0), 0.0) == 0.0
    # center value w(0)^2
    w0 = float(LAT.window1d(0.0))
    assert w0 == 1.0
    assert LAT.partition_weight((0.0, 0.0))[(0, 0)] == w0**2


def test_window_support_and_smooth_range():
    ts = np.linspace(-1.5, 1.5, 301)
    vals = LAT.window1d(ts)
    assert np.all(vals[np.abs(ts) >= 1.0] == 0.0)
    inside = vals[np.abs(ts) < 0.999]
    assert np.all(inside > 0.0)
    assert float(LAT.window1d(0.5)) == pytest.approx(0.5, abs=1e-15)


# ---------------------------------------------------------------------------
# lattice sequences
# ---------------------------------------------------------------------------


def test_derivative_order():
    assert LAT.derivative_order(1.0) == 2
    assert LAT.derivative_order(0.5) == 3
    assert LAT.derivative_order(0.45) == 3
    assert LAT.derivative_order(0.25) == 5
    with pytest.raises(S.SymbolParameterError):
        LAT.derivative_order(0.0)


def test_zero_symbol_sequences_vanish():
    zero = S.Scaled(0.0, S.Gaussian(1.0))
    v = LAT.v_sequence(zero, q=0.5, box_radius=4)
    w = LAT.w_sequence(zero, box_radius=4)
    assert np.all(v.values == 0.0) and np.all(w.values == 0.0)


def test_sequences_require_closed_form():
    with pytest.raises(S.SymbolParameterError):
        LAT.v_sequence(S.SectorBump(PI / 2, 1.0), q=0.5, box_radius=4)


def test_constant_region_mixed_derivative_vanishes():
    # deep inside the b0 plateau region the 1D factors are 1/t, but a
    # gaussian-free constant check: bump far plateau is zero; use gaussian
    # scaled tiny? simplest: w_k of b0 on a cube where zeta == 0 identically
    w = LAT.w_sequence(S.B0Closed(1.0), box_radius=6)
    assert w.value(0, 0) == 0.0  # zeta vanishes on (-1,1)^2


def test_w_below_v_pointwise():
    for sym, q in ((S.B0Closed(1.0), 0.5), (S.PowerDecay(2.0, 2.0), 0.45)):
        v = LAT.v_sequence(sym, q=q, box_radius=8)
        w = LAT.w_sequence(sym, box_radius=8)
        assert v.n_order >= 1
        assert np.all(w.values <= v.values * (1.0 + 1e-12) + 1e-300)


def test_b0_sequence_axis_decay():
    b0 = S.B0Closed(1.0)
    v = LAT.v_sequence(b0, q=0.5, box_radius=24)
    w = LAT.w_sequence(b0, box_radius=24)
    k1 = np.arange(6, 25)
    sv = np.polyfit(np.log(k1), np.log([v.value(k, 1) for k in k1]), 1)[0]
    sw = np.polyfit(np.log(k1), np.log([w.value(k, 1) for k in k1]), 1)[0]
    assert abs(sv - (-1.0)) <= 0.15
    assert abs(sw - (-2.0)) <= 0.2


def test_power_decay_slowly_varying_comparability():
    # v_k tracks <k1>^-2 <k2>^-2 with a ratio bounded over the box; the
    # comparability constant is fitted (it depends on the derivative order),
    # not asserted a priori
    pd = S.PowerDecay(2.0, 2.0)
    v = LAT.v_sequence(pd, q=0.45, box_radius=24)
    k = np.arange(-24, 25)
    rho = pd.eval_array(k[:, None].astype(float), k[None, :].astype(float))
    ratio = v.values / rho
    c_fit = max(float(ratio.max()), 1.0 / float(ratio.min()))
    assert np.all(ratio > 0)
    assert c_fit < 200.0


def test_lattice_csv(tmp_path):
    v = LAT.v_sequence(S.Gaussian(1.0), q=0.5, box_radius=3)
    path = tmp_path / "v.csv"
    v.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k1,k2,value"
    assert len(lines) == 1 + 7 * 7
    assert lines[1].startswith("-3,-3,")


# ---------------------------------------------------------------------------
# M functional
# ---------------------------------------------------------------------------


def test_m_functional_zero_sequence():
    seq = LAT.LatticeSeq(2, np.zeros((5, 5)), "v", 2)
    scan = LAT.M_functional(seq, p=1.0, sigma=0.0)
    assert scan.value == 0.0


def test_m_functional_single_point():
    vals = np.zeros((5, 5))
    vals[2, 2] = 1.0
    seq = LAT.LatticeSeq(2, vals, "v", 2)
    scan = LAT.M_functional(seq, p=1.0, sigma=0.0, mode="sup")
    # sup over E < 1 of E * 1 is approached at the top grid level just below 1
    assert scan.value == pytest.approx(float(scan.levels[0]), rel=1e-12)
    assert 0.99 < scan.value < 1.0


def test_m_functional_truncation_flag():
    vals = np.full((5, 5), 0.5)  # boundary values sit above the scanned levels
    seq = LAT.LatticeSeq(2, vals, "v", 2)
    scan = LAT.M_functional(seq, p=1.0, sigma=0.0)
    assert scan.truncated


def test_m_scan_log_class_stabilizes_against_wrong_class():
    # p = d/alpha = 1/2, sigma = 1/p = 2 is the finite class for <k>^-2 <k>^-2:
    # its scan peaks interior to the level range (the sup has been attained),
    # while the sigma = 0 scan of the same sequence keeps climbing all the way
    # to the deepest level (that class is infinite)
    v = LAT.v_sequence(S.PowerDecay(2.0, 2.0), q=0.45, box_radius=64)
    lv = LAT.default_levels(float(v.values.max()), decades=4, per_decade=40)
    right = LAT.M_functional(v, p=0.5, sigma=2.0, mode="sup", levels=lv)
    wrong = LAT.M_functional(v, p=0.5, sigma=0.0, mode="sup", levels=lv)
    assert not right.truncated and not wrong.truncated
    i_right = int(np.argmax(right.values))
    i_wrong = int(np.argmax(wrong.values))
    assert i_right < len(lv) // 2  # stabilized: sup reached early in the scan
    assert i_wrong > len(lv) - 40  # still growing within the deepest decade
    # residual last-decade drift reflects the near/far comparability
    # transient; it shrinks with the box and stays moderate here
    scan = LAT.M_functional(v, p=0.5, sigma=2.0, mode="limsup_scan", levels=lv)
    assert abs(scan.drift_slope) / scan.value < 0.35


def test_scan_report_json(tmp_path):
    v = LAT.v_sequence(S.Gaussian(1.0), q=0.5, box_radius=4)
    scan = LAT.M_functional(v, p=1.0, sigma=0.0)
    path = tmp_path / "scan.json"
    scan.to_json(path)
    import json

    doc = json.loads(path.read_text())
    assert doc["p"] == 1.0 and len(doc["levels"]) == len(doc["values"])
    assert "truncated" in doc and "drift_slope" in doc


# ---------------------------------------------------------------------------
# phase volumes
# ---------------------------------------------------------------------------


def test_phase_volume_radial_analytic():
    rho = S.RadialPower(2.0)
    for e in (0.5, 0.1, 0.02):
        vol = LAT.phase_volume(rho, e, box=30.0)
        exact = PI * (1.0 / e - 1.0)
        assert vol == pytest.approx(exact, rel=0.005)


def test_phase_volume_above_sup_is_zero():
    assert LAT.phase_volume(S.RadialPower(2.0), 1.5, box=10.0) == 0.0


def test_phase_volume_boundary_error():
    with pytest.raises(S.SymbolParameterError, match="box"):
        LAT.phase_volume(S.RadialPower(2.0), 0.01, box=5.0)


def test_phase_volume_separable_scaling():
    # <x>^-1 <xi>^-2: E * vol(E) stays bounded as E drops (p = d/alpha = 1)
    rho = S.PowerDecay(1.0, 2.0)
    vals = []
    for e in (0.2, 0.1, 0.05):
        vol = LAT.phase_volume(rho, e, box=60.0)
        vals.append(e * vol)
    assert max(vals) < 3.0 * min(vals)
    assert max(vals) < 20.0


def test_n_functional_radial_within_tolerance():
    levels = LAT.default_levels(1.0)
    prof = LAT.PhaseProfile(S.RadialPower(2.0), 1.0, 0.0, levels, box=128.0)
    scan = LAT.N_functional(prof, mode="sup")
    analytic = float(np.max(levels * PI * (1.0 / levels - 1.0)))
    assert abs(scan.value - analytic) / analytic <= 0.20


def test_n_functional_log_case_bounded():
    levels = LAT.default_levels(1.0)
    prof = LAT.PhaseProfile(S.PowerDecay(2.0, 2.0), 0.5, 2.0, levels, box=128.0)
    scan = LAT.N_functional(prof, mode="limsup_scan")
    assert abs(scan.drift_slope) / scan.value <= 0.1


def test_n_functional_homogeneity():
    # sigma = 0: scanning mu * rho at levels mu * E reproduces mu * values
    levels = LAT.default_levels(1.0, decades=2, per_decade=10)
    rho = S.RadialPower(2.0)
    base = LAT.N_functional(LAT.PhaseProfile(rho, 1.0, 0.0, levels, box=64.0))
    mu = 3.0
    scaled = LAT.N_functional(
        LAT.PhaseProfile(S.Scaled(mu, rho), 1.0, 0.0, mu * levels, box=64.0))
    assert np.max(np.abs(scaled.values - mu * base.values)) <= 1e-6 * mu * base.value


def test_phase_profile_validation():
    with pytest.raises(S.SymbolParameterError):
        LAT.PhaseProfile(S.RadialPower(2.0), 1.0, 0.0, np.array([0.1, 0.5]))  # increasing
    with pytest.raises(S.SymbolParameterError):
        LAT.PhaseProfile(S.RadialPower(2.0), 1.0, 0.0, np.array([0.5, -0.1]))


# ---------------------------------------------------------------------------
# cross-module shape checks (quantized operators vs scan functionals)
# ---------------------------------------------------------------------------


@pytest.mark.full
def test_quasiclassical_bound_shape_across_families():
    # within one class (p = 1/2, sigma = 0, q = 0.45) the windowed tail
    # estimate of the quantized operator divided by the lattice scan value is
    # a family-independent constant up to one order of magnitude; the paper's
    # constant is symbol-independent only at fixed class parameters
    from wspectra import quantize as Q
    from wspectra import spectra as SP

    cases = [
        (S.PowerDecay(2.0, 3.0), 96, 4, Q.Grid1D(24.0, 768), Q.Grid1D(24.0, 1536)),
        (S.PowerDecay(2.0, 4.0), 96, 4, Q.Grid1D(24.0, 768), Q.Grid1D(24.0, 1536)),
        (S.RadialPower(4.0), 48, 5, Q.Grid1D(20.0, 640), Q.Grid1D(20.0, 1280)),
    ]
    ratios = []
    for sym, box, decades, grid, xi_grid in cases:
        sd = SP.eig_hermitian(Q.build_weyl(sym, grid, xi_grid))
        ghat = SP.tail_functional(sd, SP.TailParams(0.5, 0.0), (20, 150)).sup_estimate
        v = LAT.v_sequence(sym, q=0.45, box_radius=box)
        lv = LAT.default_levels(float(v.values.max()), decades=decades, per_decade=20)
        scan = LAT.M_functional(v, 0.5, 0.0, mode="limsup_scan", levels=lv)
        assert not scan.truncated
        ratios.append(ghat / scan.value)
    assert max(ratios) / min(ratios) <= 10.0


@pytest.mark.full
def test_envelope_dominated_shape_with_volume_functional():
    # same shape check with the phase-volume functional in place of the
    # lattice scan, for envelope-dominated symbols of one class
    from wspectra import quantize as Q
    from wspectra import spectra as SP

    levels = LAT.default_levels(1.0)
    cases = [
        (S.PowerDecay(2.0, 4.0), Q.Grid1D(24.0, 768), Q.Grid1D(24.0, 1536)),
        (S.RadialPower(4.0), Q.Grid1D(20.0, 640), Q.Grid1D(20.0, 1280)),
    ]
    ratios = []
    for sym, grid, xi_grid in cases:
        sd = SP.eig_hermitian(Q.build_weyl(sym, grid, xi_grid))
        ghat = SP.tail_functional(sd, SP.TailParams(0.5, 0.0), (20, 150)).sup_estimate
        prof = LAT.PhaseProfile(sym, 0.5, 0.0, levels, box=96.0)
        scan = LAT.N_functional(prof, mode="limsup_scan")
        ratios.append(ghat / scan.value)
    assert max(ratios) / min(ratios) <= 10.0


def test_quantized_radial_power_decay_exponents():
    # gamma-power envelopes quantize to spectra with s_k ~ k^(-gamma/2)
    from wspectra import quantize as Q
    from wspectra import spectra as SP

    for gamma, grid, xi_grid in [
        (2.0, Q.Grid1D(30.0, 1024), Q.Grid1D(30.0, 2048)),
        (3.0, Q.Grid1D(24.0, 1024), Q.Grid1D(24.0, 2048)),
    ]:
        sd = SP.eig_hermitian(Q.build_weyl(S.RadialPower(gamma), grid, xi_grid))
        fit = SP.decay_fit(sd, (20, 120))
        assert abs(fit - (-gamma / 2.0)) <= 0.1
