"""Admissibility margin at the contact-height slice of the unit ball."""

import numpy as np
import pytest

from capflow.condition import (
    ConditionError,
    condition_check,
    condition_margin,
    condition_margin_translated,
    scan_max_omega,
    slice_frame,
)
from capflow.norms import make_norm
from capflow.wulff import TranslatedNorm

SPHERE = make_norm("sphere")
A2 = make_norm("quartic_a2")


def a2_margin_closed_form(omega0: float) -> float:
    """Slice margin of the rotationally symmetric quartic, by hand.

    On the slice z = -omega0 of the unit ball with s = x^2 + y^2, the
    margin works out to -omega0 (2 + 3 s omega0^2) / (2 + 9 s omega0^2),
    independent of the slice angle.
    """
    # s from the level-set equation (s + w^2) s + w^4 = 1 at height w = -omega0
    w2 = omega0 * omega0
    s = (-w2 + np.sqrt(w2 * w2 + 4.0 * (1.0 - w2**2))) / 2.0
    return -omega0 * (2.0 + 3.0 * s * w2) / (2.0 + 9.0 * s * w2)


class TestFrame:
    def test_orthogonality(self):
        fr = slice_frame(A2, -0.3, 0.7)
        assert fr.nu @ fr.mu == pytest.approx(0.0, abs=1e-12)
        for t in fr.tangents:
            assert fr.nu @ t == pytest.approx(0.0, abs=1e-12)
            assert fr.mu @ t == pytest.approx(0.0, abs=1e-12)

    def test_conormal_points_down(self):
        fr = slice_frame(A2, -0.3, 1.2)
        assert fr.mu[2] < 0.0

    def test_slice_point_on_ball_at_height(self):
        fr = slice_frame(A2, -0.3, 0.4)
        assert A2.f0(fr.z) == pytest.approx(1.0, abs=1e-10)
        assert fr.z[2] == pytest.approx(0.3, abs=1e-10)

    def test_empty_slice(self):
        with pytest.raises(ConditionError):
            slice_frame(SPHERE, -1.2, 0.0)


class TestMargin:
    def test_sphere_margin_is_minus_omega(self):
        # round ball: Q = 0, so the margin reduces to -omega0
        for omega0 in (-0.5, -0.1, 0.2):
            fr = slice_frame(SPHERE, omega0, 0.3)
            assert condition_margin(SPHERE, omega0, fr) == pytest.approx(
                -omega0, abs=1e-10
            )

    @pytest.mark.parametrize("omega0", [-0.45, -0.2, 0.1, 0.35])
    def test_quartic_closed_form(self, omega0):
        fr = slice_frame(A2, omega0, 0.9)
        margin = condition_margin(A2, omega0, fr)
        assert margin == pytest.approx(a2_margin_closed_form(omega0), abs=1e-9)

    def test_translated_form_sign_agreement(self):
        for omega0 in (-0.4, -0.1, 0.1, 0.4):
            tn = TranslatedNorm(A2, omega0)
            fr = slice_frame(A2, omega0, 1.0)
            m = condition_margin(A2, omega0, fr)
            mt = condition_margin_translated(tn, fr)
            if abs(m) > 1e-6:
                assert np.sign(m) == np.sign(mt)

    def test_a3_equality_at_shift(self):
        # shifting the quartic down by z0 moves the threshold to exactly z0
        z0 = 0.3
        a3 = make_norm("quartic_a3", [z0])
        fr = slice_frame(a3, z0, 0.5)
        assert condition_margin(a3, z0, fr) == pytest.approx(0.0, abs=1e-10)


class TestCheck:
    def test_sphere_accepts_negative(self):
        rep = condition_check(SPHERE, -0.5, slice_samples=32)
        assert rep.satisfied
        assert rep.min_margin == pytest.approx(0.5, abs=1e-9)
        assert rep.both_forms_agree

    def test_quartic_rejects_positive(self):
        rep = condition_check(A2, 0.1, slice_samples=32)
        assert not rep.satisfied
        assert rep.min_margin < -1e-3

    def test_quartic_accepts_negative(self):
        rep = condition_check(A2, -0.3, slice_samples=32)
        assert rep.satisfied and rep.both_forms_agree

    def test_report_samples_complete(self):
        rep = condition_check(A2, -0.2, slice_samples=16)
        assert len(rep.samples) == 16
        assert all(np.isfinite(s["margin"]) for s in rep.samples)


class TestScan:
    def test_sphere_threshold_zero(self):
        w = scan_max_omega(SPHERE, (-0.2, 0.5), slice_samples=16)
        assert abs(w) <= 1e-3

    def test_quartic_threshold_zero(self):
        w = scan_max_omega(A2, (-0.2, 0.5), slice_samples=16)
        assert abs(w) <= 1e-3

    def test_bad_bracket(self):
        with pytest.raises(ConditionError):
            scan_max_omega(SPHERE, (0.5, -0.5))
