from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import flowsteer as fs
from flowsteer.correction import (CorrectionSettings, PsiWeight,
                                  _solve_poisson_dirichlet, refinement_delta)
from flowsteer.sampling import Box

BOX4 = Box((-4 * np.pi, -4 * np.pi), (4 * np.pi, 4 * np.pi))


class TestPsiWeight:
    def test_value_at_zero(self):
        w = PsiWeight(0.75, 1.0, 2)
        assert fs.psi_eval(w, np.zeros(2)) == pytest.approx(1.0)
        assert np.all(fs.grad_psi(w, np.zeros(2)) == 0.0)

    def test_hand_value(self):
        w = PsiWeight(0.75, 2.0, 2)
        assert fs.psi_eval(w, np.zeros(2)) == pytest.approx(2 ** -1.5, abs=1e-12)

    @pytest.mark.parametrize("p", [0.5, 1.0, 1.2, 0.0])
    def test_exponent_range_validated_2d(self, p):
        with pytest.raises(ValueError):
            PsiWeight(p, 1.0, 2)

    def test_exponent_range_3d(self):
        PsiWeight(1.25, 1.0, 3)  # valid
        with pytest.raises(ValueError):
            PsiWeight(0.75, 1.0, 3)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            PsiWeight(0.75, 0.0, 2)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.51, 0.99),
           st.floats(0.5, 5.0))
    def test_grad_matches_finite_differences(self, x, y, p, alpha):
        w = PsiWeight(p, alpha, 2)
        pt = np.array([x, y])
        h = 1e-6
        fd = np.array([(w.value(pt + h * e) - w.value(pt - h * e)) / (2 * h)
                       for e in np.eye(2)])
        scale = max(1.0, float(np.linalg.norm(w.grad(pt))))
        assert np.linalg.norm(w.grad(pt) - fd) / scale < 1e-8

    def test_default_p_is_midpoint(self):
        assert PsiWeight.default_p(2) == pytest.approx(0.75)
        assert PsiWeight.default_p(3) == pytest.approx(1.25)


class TestPoissonSolver:
    def test_manufactured_solution(self):
        # h = sin(k pi x / L) sin(m pi y / L) on [0, L]^2 vanishes on the
        # boundary; lap h = -((k pi/L)^2 + (m pi/L)^2) h
        n, L = 127, 2.0
        dx = L / (n + 1)
        xs = dx * np.arange(1, n + 1)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        k, m = 3, 5
        want = np.sin(k * np.pi * X / L) * np.sin(m * np.pi * Y / L)
        lam = (k * np.pi / L) ** 2 + (m * np.pi / L) ** 2
        got = _solve_poisson_dirichlet(-lam * want, dx, L)
        assert np.max(np.abs(got - want)) < 1e-12


class TestCorrect:
    def test_rotation_correction_is_identity(self, rotation):
        res = fs.correct(rotation, 0.1, settings=CorrectionSettings(
            box=Box((-2, -2), (2, 2)), resolution=64))
        assert res.sup_delta < 1e-14
        assert res.div_residual < 1e-12

    def test_zero_field(self):
        V = fs.builtin_field("zero", dim=2)
        res = fs.correct(V, 0.1, settings=CorrectionSettings(
            box=Box((-1, -1), (1, 1)), resolution=32))
        assert res.sup_delta == 0.0
        pts = np.random.default_rng(0).uniform(-1, 1, (20, 2))
        assert np.all(res.field.eval(pts) == 0.0)

    def test_cellular_contract(self, cellular):
        res = fs.correct(cellular, 0.1, settings=CorrectionSettings(
            box=BOX4, resolution=256))
        assert res.sup_delta < 0.1
        assert res.div_residual < 1e-6
        assert res.div_tilde_sup < 0.1
        assert res.alpha_used >= BOX4.diameter

    def test_non_divergence_free_rejected(self):
        V = fs.expression_field(["x", "y"], region=Box((-1, -1), (1, 1)))
        with pytest.raises(ValueError):
            fs.correct(V, 0.1, settings=CorrectionSettings(
                box=Box((-1, -1), (1, 1)), resolution=32))

    def test_coarse_grid_failure_surfaces_in_report(self, cellular):
        settings = CorrectionSettings(box=BOX4, resolution=12, strict=False,
                                      div_tol=1e-10)
        res = fs.correct(cellular, 0.1, None, settings)
        assert not res.passed and "ResidualTooLarge" in res.failure
        report = fs.certify_proposition(cellular, res, 0.1, box=Box((0.5, 0.5), (2.5, 2.5)),
                                        n_points=4, T_max=30.0)
        assert not report.passed
        assert not report.items["weighted_div_residual"]["pass"]

    def test_strict_mode_raises(self, cellular):
        with pytest.raises(fs.ResidualTooLarge):
            fs.correct(cellular, 0.1, None, CorrectionSettings(
                box=BOX4, resolution=12, div_tol=1e-10))

    def test_descriptor_roundtrip(self, cellular):
        from flowsteer.fieldstore import field_from_descriptor

        res = fs.correct(cellular, 0.1, settings=CorrectionSettings(
            box=BOX4, resolution=64, strict=False))
        back = field_from_descriptor(res.field.descriptor)
        pts = np.random.default_rng(1).uniform(-10, 10, (50, 2))
        assert np.array_equal(back.eval(pts), res.field.eval(pts))


class TestWeightedDivfree:
    def test_rotation_with_radial_weight(self, rotation):
        w = PsiWeight(0.75, 2.0, 2)
        pts = np.random.default_rng(2).uniform(-1.5, 1.5, (100, 2))
        assert fs.check_weighted_divfree(rotation, w, pts, 1e-4) < 1e-9

    def test_constant_field_closed_form(self):
        c = np.array([0.6, -0.8])
        V = fs.builtin_field("constant", c=c)
        w = PsiWeight(0.75, 1.5, 2)
        pts = np.random.default_rng(3).uniform(-2, 2, (200, 2))
        got = fs.check_weighted_divfree(V, w, pts, 1e-4)
        want = float(np.max(np.abs(np.sum(w.grad(pts) * c, axis=1))))
        assert got == pytest.approx(want, abs=1e-6)
        assert got > 0.0

    def test_corrected_field_consistent_with_result(self, cellular):
        res = fs.correct(cellular, 0.1, settings=CorrectionSettings(
            box=BOX4, resolution=256))
        meta = res.grid_meta
        lo = np.asarray(meta["padded_lo"])
        dx = meta["spacing"]
        n = meta["resolution"]
        axes = lo[0] + dx * np.arange(1, n + 1)
        inner = axes[(axes >= -4 * np.pi) & (axes <= 4 * np.pi)][1:-1:7]
        pts = np.stack(np.meshgrid(inner, inner, indexing="ij"), axis=-1).reshape(-1, 2)
        got = fs.check_weighted_divfree(res.field, res.psi, pts, dx)
        assert got <= res.div_residual * (1 + 1e-9)

    def test_rejects_bad_step(self, rotation):
        with pytest.raises(ValueError):
            fs.check_weighted_divfree(rotation, PsiWeight(0.75, 1.0, 2),
                                      np.zeros((1, 2)), 0.0)


class TestRefinement:
    def test_cellular_refinement_stable(self, cellular):
        d = refinement_delta(cellular, 0.1, CorrectionSettings(box=BOX4, resolution=256))
        assert d < 1e-7


class TestCertify:
    def test_rotation_all_items_pass(self, rotation):
        res = fs.correct(rotation, 0.1, settings=CorrectionSettings(
            box=Box((-2, -2), (2, 2)), resolution=64))
        report = fs.certify_proposition(rotation, res, 0.1,
                                        box=Box((-1, -1), (1, 1)),
                                        n_points=10, radius=1e-3, T_max=10.0)
        assert report.passed
        assert report.items["recurrence_fraction"]["value"] == 1.0
        assert "proxy" in report.items["recurrence_fraction"]["note"]


class TestSymmetry:
    def test_odd_field_gives_odd_correction(self, cellular):
        # the cellular flow is odd under x -> -x; the corrected field
        # inherits that symmetry
        res = fs.correct(cellular, 0.1, settings=CorrectionSettings(
            box=BOX4, resolution=256))
        rng = np.random.default_rng(8)
        pts = rng.uniform(-10, 10, (300, 2))
        left = res.field.eval(pts)
        right = -res.field.eval(-pts)
        assert np.max(np.linalg.norm(left - right, axis=1)) < 1e-8

    def test_alpha_history_recorded_and_monotone(self, cellular):
        res = fs.correct(cellular, 0.1, settings=CorrectionSettings(
            box=BOX4, resolution=64, strict=False))
        hist = res.grid_meta["alpha_history"]
        assert hist[-1]["sup_delta"] == res.sup_delta
        deltas = [h["sup_delta"] for h in hist]
        assert all(b <= a for a, b in zip(deltas, deltas[1:]))


class TestThreeDimensional:
    def test_abc_field_correction(self):
        V = fs.builtin_field("abc", a=1.0, b=1.0, c=1.0)
        box = Box((-2 * np.pi,) * 3, (2 * np.pi,) * 3)
        res = fs.correct(V, 0.5, settings=CorrectionSettings(
            box=box, resolution=48))
        assert res.psi.p == pytest.approx(1.25)  # midpoint of (1, 1.5)
        assert res.sup_delta < 0.5
        assert res.div_residual < 1e-6
        assert res.div_tilde_sup < 0.5
        # corrected field still matches the base away from strong weight
        pts = np.random.default_rng(0).uniform(-3, 3, (50, 3))
        dev = np.linalg.norm(res.field.eval(pts) - V.eval(pts), axis=1)
        assert np.max(dev) <= res.sup_delta * (1 + 1e-9)
