"""Program compilation: identity structure, sizes, matching rows."""

import math

import numpy as np
import pytest

from reachsos.poly import Polynomial, monomial_basis, parse_polynomial
from reachsos.problemio import load_bundled_problem
from reachsos.sosbuild import (
    DegreePlan,
    Method,
    MethodKind,
    build_program,
    check_alpha_multiplier,
    expand_identity,
    reconstruct,
)


def vdp():
    return load_bundled_problem("vdp")


class TestMethod:
    def test_beta_required(self):
        with pytest.raises(ValueError, match="beta"):
            Method(MethodKind.EXP)
        with pytest.raises(ValueError, match="beta"):
            Method(MethodKind.COMBINED, beta=-1.0)

    def test_beta_rejected_elsewhere(self):
        with pytest.raises(ValueError):
            Method(MethodKind.ASYM, beta=0.5)

    def test_alpha_required(self):
        with pytest.raises(ValueError, match="alpha"):
            Method(MethodKind.GENERAL)

    def test_labels(self):
        assert Method(MethodKind.EXP, beta=0.1).label() == "exp(beta=0.1)"
        assert Method(MethodKind.ASYM).label() == "asym"


class TestDegreePlan:
    def test_sweep(self):
        assert DegreePlan.sweep().degrees == [2, 4, 6, 8, 10, 12, 14, 16, 18, 20]

    def test_odd_rejected(self):
        with pytest.raises(ValueError):
            DegreePlan([2, 3])

    def test_non_increasing_rejected(self):
        with pytest.raises(ValueError):
            DegreePlan([4, 4])


class TestExpandIdentity:
    def test_perfect_square(self):
        # x^2 + 2xy + y^2 over basis (x, y): svec vars [q11, r2*q12, q22]
        target = parse_polynomial("x1^2 + 2*x1*x2 + x2^2", 2)
        basis = [(1, 0), (0, 1)]
        rows = expand_identity(target, basis)
        by_mono = {mono: (entries, rhs) for mono, entries, rhs in rows}
        assert by_mono[(2, 0)] == ([(0, 1.0)], 1.0)
        entries, rhs = by_mono[(1, 1)]
        assert rhs == 2.0 and entries == [(1, math.sqrt(2.0))]
        assert by_mono[(0, 2)] == ([(2, 1.0)], 1.0)
        # the all-ones Gram matrix solves these rows and is PSD
        Q = np.ones((2, 2))
        assert np.linalg.eigvalsh(Q).min() >= 0

    def test_zero_target(self):
        rows = expand_identity(Polynomial.zero(1), [(0,)])
        assert rows == [((0,), [(0, 1.0)], 0.0)]

    def test_quartic(self):
        # x^4 + 1 over basis (1, x, x^2): five matched degrees 0..4
        target = parse_polynomial("x1^4 + 1", 1)
        rows = expand_identity(target, [(0,), (1,), (2,)])
        assert len(rows) == 5
        by_mono = {mono: (entries, rhs) for mono, entries, rhs in rows}
        assert by_mono[(0,)][1] == 1.0
        assert by_mono[(4,)][1] == 1.0
        assert by_mono[(2,)][1] == 0.0
        # diag(1, 0, 1) satisfies the matching with the cross-term balance
        q = np.zeros(6)
        q[0] = 1.0  # (1,1)
        q[5] = 1.0  # (x^2, x^2)
        for mono, entries, rhs in rows:
            assert sum(coeff * q[idx] for idx, coeff in entries) == pytest.approx(rhs)


class TestBuildStructure:
    def test_vdp_asym_degree8_sizes(self):
        prob, layout = build_program(vdp(), Method(MethodKind.ASYM), 8)
        # 4 identity groups for one target and one initial constraint
        assert len(layout.identities) == 4
        names = [i.name for i in layout.identities]
        assert names == ["initial", "derivative[1]", "coupling[1]", "boundary"]
        # multiplier Gram blocks over the degree-4 basis are 15 x 15
        mult_sizes = {layout.block_sizes[info.block_index]
                      for name, info in layout.grams.items()
                      if ":s" in name}
        assert mult_sizes == {15}
        # free polynomials v, w, p over the degree-8 basis: 45 coefficients
        assert set(layout.free_polys) == {"v", "w", "p"}
        for info in layout.free_polys.values():
            assert len(info.basis) == 45

    def test_dubins_exp_identity_count(self):
        # two target constraints duplicate the derivative identity: 1 + 2 + 1
        inst = load_bundled_problem("dubins")
        prob, layout = build_program(inst, Method(MethodKind.EXP, beta=1.0), 4)
        assert len(layout.identities) == 4
        names = [i.name for i in layout.identities]
        assert names == ["initial", "derivative[1]", "derivative[2]", "boundary"]

    def test_combined_identity_count(self):
        prob, layout = build_program(vdp(), Method(MethodKind.COMBINED, beta=1.0), 4)
        assert len(layout.identities) == 6
        assert set(layout.free_polys) == {"v1", "v2", "w", "p"}

    def test_combined_split_boundary(self):
        prob, layout = build_program(vdp(), Method(MethodKind.COMBINED, beta=1.0), 4,
                                     split_boundary_multiplier=True)
        assert set(layout.free_polys) == {"v1", "v2", "w", "p1", "p2"}

    def test_prajna_identities(self):
        prob, layout = build_program(vdp(), Method(MethodKind.PRAJNA), 4)
        names = [i.name for i in layout.identities]
        assert names == ["initial", "derivative[1]", "boundary"]
        assert set(layout.free_polys) == {"v", "q"}

    def test_eps_placement(self):
        # exponential family: eps sits in the initial identity only
        _, layout = build_program(vdp(), Method(MethodKind.EXP, beta=1.0), 4, eps=1e-6)
        fixed = {i.name: i.fixed for i in layout.identities}
        assert fixed["initial"].coefficient((0, 0)) == pytest.approx(-1e-6)
        assert fixed["derivative[1]"].is_zero()
        assert fixed["boundary"].is_zero()
        # the older encoding subtracts eps in the derivative and boundary
        # identities instead
        _, layout = build_program(vdp(), Method(MethodKind.PRAJNA), 4, eps=1e-6)
        fixed = {i.name: i.fixed for i in layout.identities}
        assert fixed["initial"].is_zero()
        assert fixed["derivative[1]"].coefficient((0, 0)) == pytest.approx(-1e-6)
        assert fixed["boundary"].coefficient((0, 0)) == pytest.approx(-1e-6)

    def test_rebuild_deterministic(self):
        a, la = build_program(vdp(), Method(MethodKind.ASYM), 6)
        b, lb = build_program(vdp(), Method(MethodKind.ASYM), 6)
        assert a.block_sizes == b.block_sizes
        assert a.n_free == b.n_free
        assert np.array_equal(a.b, b.b)
        for blk_a, blk_b in zip(a.a_blocks + [a.a_free], b.a_blocks + [b.a_free]):
            assert (blk_a != blk_b).nnz == 0

    def test_odd_degree_rejected(self):
        with pytest.raises(ValueError, match="even"):
            build_program(vdp(), Method(MethodKind.ASYM), 5)

    def test_negative_alpha_rejected(self):
        method = Method(MethodKind.GENERAL,
                        alpha_multiplier=parse_polynomial("-x1^2", 2))
        with pytest.raises(ValueError, match="alpha"):
            build_program(vdp(), method, 4)

    def test_alpha_check_values(self):
        inst = load_bundled_problem("tan1")
        ok = check_alpha_multiplier(inst, parse_polynomial("2 - x2", 2))
        assert ok >= -1e-9
        bad = check_alpha_multiplier(inst, parse_polynomial("-1 + x1", 2))
        assert bad < -0.5


class TestReconstruct:
    def test_slice_semantics(self):
        prob, layout = build_program(vdp(), Method(MethodKind.ASYM), 4)
        x = np.zeros(prob.n_cols)
        cert = reconstruct(layout, x)
        # all-zero solution gives all-zero certificate polynomials
        assert all(p.is_zero() for p in cert.polynomials.values())
        assert cert.v.is_zero()

    def test_v_coefficient_count_bound(self):
        prob, layout = build_program(vdp(), Method(MethodKind.ASYM), 8)
        rng = np.random.default_rng(0)
        cert = reconstruct(layout, rng.normal(size=prob.n_cols))
        assert len(cert.polynomials["v"]) <= 45

    def test_combined_reports_sum(self):
        prob, layout = build_program(vdp(), Method(MethodKind.COMBINED, beta=1.0), 4)
        rng = np.random.default_rng(1)
        cert = reconstruct(layout, rng.normal(size=prob.n_cols))
        s = cert.polynomials["v1"] + cert.polynomials["v2"]
        assert (cert.v - s).max_abs_coeff() <= 1e-12

    def test_length_mismatch(self):
        prob, layout = build_program(vdp(), Method(MethodKind.ASYM), 4)
        with pytest.raises(ValueError, match="length"):
            reconstruct(layout, np.zeros(prob.n_cols + 1))

    def test_round_trip_through_gram_expansion(self):
        # multiplier polynomials must expand to the same polynomial the rows
        # encode: spot-check one solved cell at low degree
        inst = load_bundled_problem("tan1")
        prob, layout = build_program(inst, Method(MethodKind.ASYM), 4)
        from reachsos.sdp import solve
        out = solve(prob)
        if out.x is not None:
            cert = reconstruct(layout, out.x)
            for name in cert.gram_blocks:
                block = cert.gram_blocks[name]
                assert block.matrix.shape[0] == len(block.basis)
