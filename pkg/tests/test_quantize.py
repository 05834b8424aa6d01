import math

import numpy as np
import pytest

from wspectra import quantize as Q
from wspectra import spectra as SP
from wspectra import symbols as S

PI = math.pi


def mehler_eigs(r, k):
    """Closed-form Weyl eigenvalues of exp(-r(x^2+xi^2)); validated below
    against the trace and Hilbert-Schmidt identities before use."""
    return (1.0 / (1.0 + r)) * ((1.0 - r) / (1.0 + r)) ** np.arange(k)


class XiOnly(S.SymbolField):
    """Test helper: a(x, xi) = exp(-xi^2), independent of x."""

    family = "xi_only"

    def __init__(self):
        super().__init__()

    def eval_array(self, X, XI):
        X = np.asarray(X, float)
        XI = np.asarray(XI, float)
        return np.exp(-(XI**2)) * np.ones(np.broadcast_shapes(X.shape, XI.shape))


@pytest.fixture(scope="module")
def small_grids():
    return Q.Grid1D(8.0, 256), Q.Grid1D(8.0, 512)


def test_grid1d_properties():
    g = Q.Grid1D(4.0, 16)
    assert g.h == 0.5
    nodes = g.nodes
    assert np.all(nodes != 0.0) and np.max(np.abs(nodes)) < 4.0
    # symmetric as a set and midpoints include 0
    assert np.allclose(np.sort(-nodes), nodes)
    assert 0.0 in g.midpoints.tolist()
    with pytest.raises(S.SymbolParameterError):
        Q.Grid1D(4.0, 15)


def test_mehler_oracle_prevalidation_and_spectrum(small_grids):
    grid, xi_grid = small_grids
    for r in (1.0, 1.0 / 3.0):
        eigs = mehler_eigs(r, 60)
        ratio = (1 - r) / (1 + r)
        # oracle consistency: trace = (2pi)^-1 int a = 1/(2r), HS^2 = 1/(4r)
        assert np.sum(eigs) == pytest.approx((1 / (1 + r)) / (1 - ratio), rel=1e-12)
        assert (1 / (1 + r)) / (1 - ratio) == pytest.approx(1 / (2 * r), rel=1e-12)
        assert (1 / (1 + r)) ** 2 / (1 - ratio**2) == pytest.approx(1 / (4 * r), rel=1e-12)
        op = Q.build_weyl(S.Gaussian(r), grid, xi_grid)
        sd = SP.eig_hermitian(op)
        assert np.max(np.abs(sd.pos_eigs[:6] - eigs[:6])) < 1e-3
    op1 = Q.build_weyl(S.Gaussian(1.0), grid, xi_grid)
    sd1 = SP.eig_hermitian(op1)
    assert SP.counting(sd1, 1e-3, "all") == 1
    assert sd1.pos_eigs[0] == pytest.approx(0.5, abs=1e-3)
    assert SP.counting(sd1, 1e-6, "minus") == 0


def test_zero_symbol_builds_zero_matrix(small_grids):
    grid, xi_grid = small_grids
    zero = S.Scaled(0.0, S.Gaussian(1.0))
    for build in (Q.build_weyl, Q.build_kn):
        assert np.all(build(zero, grid, xi_grid).entries == 0.0)
    assert np.all(Q.build_t(zero, grid, xi_grid, 0.3).entries == 0.0)


def test_xi_only_symbol_weyl_equals_kn():
    grid, xi_grid = Q.Grid1D(6.0, 64), Q.Grid1D(6.0, 256)
    w = Q.build_weyl(XiOnly(), grid, xi_grid)
    k = Q.build_kn(XiOnly(), grid, xi_grid)
    assert np.max(np.abs(w.entries - k.entries)) < 1e-13


def test_build_t_limits_match_weyl_and_kn():
    grid, xi_grid = Q.Grid1D(6.0, 64), Q.Grid1D(6.0, 128)
    sym = S.Bump(3.0)
    w = Q.build_weyl(sym, grid, xi_grid)
    k = Q.build_kn(sym, grid, xi_grid)
    assert np.max(np.abs(Q.build_t(sym, grid, xi_grid, 0.5).entries - w.entries)) < 1e-14
    assert np.max(np.abs(Q.build_t(sym, grid, xi_grid, 0.0).entries - k.entries)) < 1e-14
    with pytest.raises(S.SymbolParameterError):
        Q.build_t(sym, grid, xi_grid, 1.5)


def test_build_t_rational_path_matches_direct_quadrature():
    grid, xi_grid = Q.Grid1D(6.0, 48), Q.Grid1D(6.0, 96)
    sym = S.Bump(3.0)
    x, xi = grid.nodes, xi_grid.nodes
    p = np.exp(1j * np.outer(x, xi))
    for t in (0.25, 0.75, 1.0):
        brute = np.zeros((48, 48), complex)
        for i in range(48):
            args = (1 - t) * x[i] + t * x
            sarr = np.asarray(sym.eval_tensor(args, xi))
            brute[i] = grid.h * ((sarr * p.conj()) @ (p[i] * (xi_grid.h / (2 * PI))))
        fast = Q.build_t(sym, grid, xi_grid, t)
        assert np.max(np.abs(fast.entries - brute)) < 1e-13


def test_hs_identity_shared_across_t():
    # Hilbert-Schmidt mass is t-independent: one right-hand side for every t
    sym = S.Gaussian(1.0)
    grid, xi_grid = Q.Grid1D(8.0, 128), Q.Grid1D(8.0, 256)
    rhs = 0.25  # (2pi)^-1 integral of exp(-2(x^2+xi^2))
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        op = Q.build_t(sym, grid, xi_grid, t)
        assert Q.hs_norm_matrix(op) ** 2 == pytest.approx(rhs, rel=1e-4)


def test_hs_norm_examples(small_grids):
    grid, xi_grid = small_grids
    zero = Q.OperatorMatrix(np.zeros((grid.n, grid.n)), grid, 0.5, "zero")
    assert Q.hs_norm_matrix(zero) == 0.0
    op = Q.build_weyl(S.Gaussian(1.0), grid, xi_grid)
    assert Q.hs_norm_matrix(op) ** 2 == pytest.approx(0.25, rel=0.01)


def test_sector_hs_against_symbol_quadrature():
    sym = S.SectorBump(PI / 2, 6.0)
    g2 = S.Grid2D(8.0, 8.0, 1024, 1024)
    vals = np.abs(sym.eval_tensor(g2.x_nodes, g2.xi_nodes)) ** 2
    ref = float(vals.sum() * g2.cell_area / (2 * PI))
    op = Q.build_weyl(sym, Q.Grid1D(48.0, 1024), Q.Grid1D(8.0, 1024))
    assert Q.hs_norm_matrix(op) ** 2 == pytest.approx(ref, rel=0.02)


def test_weyl_hermitian_before_symmetrization(small_grids):
    grid, xi_grid = small_grids
    for sym in (S.Gaussian(1.0), S.SectorBump(PI / 2, 4.0), S.B0Closed(1.0)):
        op = Q.build_weyl(sym, grid, xi_grid)
        assert op.hermiticity_defect <= 1e-10


def test_reflection_unitary_involution():
    grid = Q.Grid1D(6.0, 64)
    u = Q.reflection(grid)
    ident = u.entries @ u.entries
    assert np.max(np.abs(ident - np.eye(64))) == 0.0
    even = np.cos(grid.nodes)
    assert np.allclose(u.entries @ even, even)
    sd = SP.singular_values(u)
    assert np.allclose(sd.svals, 1.0)


def test_reflection_preserves_singular_values():
    grid, xi_grid = Q.Grid1D(8.0, 128), Q.Grid1D(8.0, 256)
    a = Q.build_weyl(S.Gaussian(0.5), grid, xi_grid)
    u = Q.reflection(grid)
    s1 = SP.singular_values(a).svals
    s2 = SP.singular_values(Q.OperatorMatrix(a.entries @ u.entries, grid, 0.5, "au")).svals
    assert np.max(np.abs(s1 - s2)) < 1e-12


def test_duality_theorem_gaussian_svals():
    # op^w(a) U = op^w(a*): singular values agree between the two routes
    grid, xi_grid = Q.Grid1D(10.0, 256), Q.Grid1D(10.0, 512)
    sym = S.Gaussian(1.0 / 3.0)
    direct = Q.build_weyl(sym, grid, xi_grid)
    sampled = S.sample(sym, S.Grid2D(10.0, 10.0, 256, 256))
    dual_op = Q.build_weyl(S.DualSymbol(sampled), grid, xi_grid)
    s1 = SP.eig_hermitian(direct).svals[:20]
    s2 = SP.singular_values(dual_op).svals[:20]
    assert np.max(np.abs(s1 - s2) / s1) < 0.01


def test_lemma_hs_difference_bound():
    # |op^w - op^l|_HS^2 <= (1/8pi) int |d_x d_xi a|^2, with quadrature slack
    grid, xi_grid = Q.Grid1D(16.0, 512), Q.Grid1D(16.0, 1024)
    g2 = S.Grid2D(16.0, 16.0, 1024, 1024)
    for sym in (S.Gaussian(1.0), S.PowerDecay(2.0, 2.0), S.B0Closed(1.0), S.RadialPower(3.0)):
        mixed = sym.derivative_array(1, 1, g2.x_nodes[:, None], g2.xi_nodes[None, :])
        bound = float(np.sum(np.abs(mixed) ** 2) * g2.cell_area / (8.0 * PI))
        w = Q.build_weyl(sym, grid, xi_grid)
        k = Q.build_kn(sym, grid, xi_grid)
        diff2 = Q.hs_norm_matrix(Q.OperatorMatrix(w.entries - k.entries, grid, 0.5, "d")) ** 2
        assert diff2 <= bound * 1.1


def test_quarter_plane_grid_convergence():
    # the corner eigenfunctions are log-chirps near the origin, so the deep
    # singular values converge like h^2 in the position resolution
    sym = S.SectorBump(PI / 2, 4.0)
    coarse = Q.build_weyl(sym, Q.Grid1D(20.0, 1024), Q.Grid1D(6.0, 1024))
    fine = Q.build_weyl(sym, Q.Grid1D(20.0, 2048), Q.Grid1D(6.0, 2048))
    s1 = SP.eig_hermitian(coarse).svals[:20]
    s2 = SP.eig_hermitian(fine).svals[:20]
    assert np.max(np.abs(s1 - s2) / s2) < 0.02


def test_xi_truncation_flag():
    # b0 decays like 1/xi: a narrow xi grid must be flagged
    op = Q.build_weyl(S.B0Closed(1.0), Q.Grid1D(8.0, 64), Q.Grid1D(4.0, 64))
    assert "xi_truncated" in op.flags
    ok = Q.build_weyl(S.Bump(2.0), Q.Grid1D(8.0, 64), Q.Grid1D(8.0, 64))
    assert ok.flags == ()


def test_operator_serialization_roundtrip(tmp_path):
    grid, xi_grid = Q.Grid1D(6.0, 32), Q.Grid1D(6.0, 64)
    op = Q.build_weyl(S.Gaussian(1.0), grid, xi_grid)
    path = tmp_path / "op.wspq"
    Q.save_operator(path, op)
    raw = path.read_bytes()
    assert raw[:4] == b"WSPQ"
    assert len(raw) == 4 + 4 + 8 + 8 + 8 + 16 * 32 * 32
    back = Q.load_operator(path)
    assert back.grid.n == 32 and back.grid.half_width == 6.0 and back.t_param == 0.5
    assert np.array_equal(back.entries, op.entries)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ValueError):
        Q.load_operator(bad)


def test_operator_csv_export(tmp_path):
    grid, xi_grid = Q.Grid1D(6.0, 16), Q.Grid1D(6.0, 32)
    op = Q.build_weyl(S.Gaussian(1.0), grid, xi_grid)
    path = tmp_path / "op.csv"
    Q.export_csv(path, op)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,re,im"
    assert len(lines) == 1 + 16 * 16
    big = Q.OperatorMatrix(np.zeros((512, 512)), Q.Grid1D(6.0, 512), 0.5, "big")
    with pytest.raises(ValueError):
        Q.export_csv(path, big)
