"""Admissibility check for the contact parameter.

Samples the slice of the unit ball of the dual gauge at the contact height,
builds the co-normal frame there, and evaluates the third-order-tensor
margin that decides whether a given contact parameter is admissible for a
given norm.  Also evaluates the equivalent translated-ball form and scans
for the largest admissible parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .norms import Norm, fibonacci_sphere
from .wulff import TranslatedNorm, WulffError

TOL_CONDITION = 1e-6
TOL_DEGENERATE = 1e-8


class ConditionError(ValueError):
    pass


@dataclass
class SliceFrame:
    """Frame at one slice point of the unit ball at the contact height."""

    z: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    tangents: np.ndarray  # (m, d) basis of the slice tangent space
    af_mu: np.ndarray
    f_of_nu: float
    degenerate: bool


@dataclass
class ConditionReport:
    omega0: float
    samples: list = field(default_factory=list)
    min_margin: float = np.inf
    satisfied: bool = False
    both_forms_agree: bool = True
    min_margin_translated: float = np.inf
    min_margin_opposite: float = np.inf
    degenerate_count: int = 0


def _slice_point(norm: Norm, omega0: float, plane_dir: np.ndarray) -> np.ndarray:
    """Point of the unit ball at height -omega0 along a horizontal direction."""
    d = norm.d
    offset = np.zeros(d)
    offset[-1] = -omega0
    if omega0 != 0.0 and float(norm.f0_many(offset[None, :])[0]) >= 1.0:
        raise ConditionError("empty slice: contact height outside the ball")
    lo, hi = 0.0, 2.0
    for _ in range(60):
        if float(norm.f0_many((hi * plane_dir + offset)[None, :])[0]) >= 1.0:
            break
        hi *= 2.0
    rho = 0.5 * (lo + hi)
    for _ in range(100):
        jet = norm.gauge_jets((rho * plane_dir + offset)[None, :], order=2)
        g = float(jet.val[0]) - 1.0
        if g > 0:
            hi = rho
        else:
            lo = rho
        slope = float(jet.grad[0] @ plane_dir)
        rho_new = rho - g / slope if slope != 0 else 0.5 * (lo + hi)
        if not (lo < rho_new < hi):
            rho_new = 0.5 * (lo + hi)
        if abs(rho_new - rho) <= 1e-14 * max(1.0, rho):
            rho = rho_new
            break
        rho = rho_new
    return rho * plane_dir + offset


def slice_frame(norm: Norm, omega0: float, angle, second_angle: float | None = None) -> SliceFrame:
    """Slice point, outward normal, outward co-normal, and slice tangents.

    The co-normal is tangent to the ball boundary, orthogonal to the slice,
    and oriented downward (negative vertical component), pointing out of the
    region of the ball above the contact plane.
    """
    d = norm.d
    if d == 3:
        plane_dir = np.array([np.cos(angle), np.sin(angle), 0.0])
    else:
        if second_angle is None:
            second_angle = 0.5 * np.pi
        plane_dir = np.array(
            [
                np.sin(second_angle) * np.cos(angle),
                np.sin(second_angle) * np.sin(angle),
                np.cos(second_angle),
                0.0,
            ]
        )
    z = _slice_point(norm, omega0, plane_dir)
    grad = norm.grad_f0(z)
    nu = grad / np.linalg.norm(grad)
    e_up = np.zeros(d)
    e_up[-1] = 1.0
    # slice tangents: orthogonal to both the vertical axis and the normal
    up_perp = e_up - (e_up @ nu) * nu
    nrm_up = np.linalg.norm(up_perp)
    span = [nu] if nrm_up < 1e-12 else [nu, up_perp / nrm_up]
    basis = []
    for seed in np.eye(d):
        v = seed.copy()
        for b in span + basis:
            v -= (v @ b) * b
        nrm = np.linalg.norm(v)
        if nrm > 1e-10:
            basis.append(v / nrm)
    tangents = np.array(basis[: d - 2])
    if tangents.shape[0] != d - 2:
        raise ConditionError("degenerate slice tangent space")
    # co-normal: tangent to the ball, orthogonal to the slice tangents
    mu = e_up - (e_up @ nu) * nu
    for b in tangents:
        mu -= (mu @ b) * b
    nrm = np.linalg.norm(mu)
    if nrm < 1e-12:
        raise ConditionError("degenerate co-normal")
    mu /= nrm
    if mu @ e_up > 0:
        mu = -mu
    f_val, zmax, _, ok = norm.support_many(nu[None, :], z0=(z / max(norm.f0(z), 1e-300))[None, :])
    if not ok[0]:
        raise ConditionError("dual solve failed at slice point")
    af = norm.support_hessian_many(nu[None, :], maximizers=zmax)[0]
    af_mu = af @ mu
    g_mat = norm.metric_G_many(z[None, :])[0]
    deg = float(af_mu @ g_mat @ af_mu) < TOL_DEGENERATE**2
    return SliceFrame(z, nu, mu, tangents, af_mu, float(f_val[0]), deg)


def condition_margin(norm: Norm, omega0: float, frame: SliceFrame, y_vec=None) -> float:
    """Margin of the admissibility inequality at one frame.

    Positive means the inequality holds strictly at this sample.  For d = 4
    the minimum over a 32-direction tangent sweep is returned.
    """
    e_up = np.zeros(norm.d)
    e_up[-1] = 1.0
    g_mat = norm.metric_G_many(frame.z[None, :])[0]
    q_ten = norm.tensor_Q_many(frame.z[None, :])[0]
    scale = float(frame.mu @ e_up) * frame.f_of_nu

    def rhs(y):
        q_val = np.einsum("ijk,i,j,k->", q_ten, y, y, frame.af_mu)
        g_val = float(y @ g_mat @ y)
        return q_val * scale / g_val

    if y_vec is not None:
        return rhs(np.asarray(y_vec, dtype=float)) - omega0
    if norm.d == 3:
        return rhs(frame.tangents[0]) - omega0
    t1, t2 = frame.tangents
    sweep = np.linspace(0.0, np.pi, 32, endpoint=False)
    return min(rhs(np.cos(a) * t1 + np.sin(a) * t2) for a in sweep) - omega0


def condition_margin_translated(tn: TranslatedNorm, frame: SliceFrame, y_vec=None) -> float:
    """Translated-ball form of the margin: minus the transferred third-order
    tensor paired with (Y, Y, A_F(nu) mu).

    Agrees in sign with the original margin up to a positive factor.
    """
    y = np.asarray(y_vec, dtype=float) if y_vec is not None else frame.tangents[0]
    _, q_t = tn.transfer_G_Q_many(
        frame.z[None, :], y[None, :], y[None, :], frame.af_mu[None, :]
    )
    return float(-q_t[0])


def condition_check(
    norm: Norm,
    omega0: float,
    slice_samples: int = 512,
    tol: float = TOL_CONDITION,
    translated: bool = True,
) -> ConditionReport:
    """Sampled check of the admissibility inequality over the whole slice."""
    report = ConditionReport(omega0=float(omega0))
    tn = None
    if translated:
        try:
            tn = TranslatedNorm(norm, omega0)
        except WulffError:
            tn = None
    if norm.d == 3:
        angles = np.linspace(0.0, 2.0 * np.pi, slice_samples, endpoint=False)
        frames = [(a, slice_frame(norm, omega0, a)) for a in angles]
    else:
        dirs = fibonacci_sphere(slice_samples)
        frames = []
        for u in dirs:
            a = float(np.arctan2(u[1], u[0]))
            b = float(np.arccos(np.clip(u[2], -1.0, 1.0)))
            frames.append((a, slice_frame(norm, omega0, a, second_angle=b)))
    agree = True
    for a, fr in frames:
        m = condition_margin(norm, omega0, fr)
        # margin under the opposite co-normal orientation, reported to expose
        # convention sensitivity
        fr_opp = SliceFrame(
            fr.z, fr.nu, -fr.mu, fr.tangents, -fr.af_mu, fr.f_of_nu, fr.degenerate
        )
        m_opp = condition_margin(norm, omega0, fr_opp)
        report.samples.append({"z": fr.z, "Y": fr.tangents[0], "margin": m})
        report.min_margin = min(report.min_margin, m)
        report.min_margin_opposite = min(report.min_margin_opposite, m_opp)
        if fr.degenerate:
            report.degenerate_count += 1
        if tn is not None:
            mt = condition_margin_translated(tn, fr)
            report.min_margin_translated = min(report.min_margin_translated, mt)
            same = (m >= -tol and mt >= -tol) or (m < -tol and mt < -tol) \
                or abs(m) <= tol or abs(mt) <= tol
            agree = agree and same
    report.both_forms_agree = agree
    report.satisfied = report.min_margin >= -tol
    return report


def scan_max_omega(
    norm: Norm,
    bracket: tuple[float, float],
    slice_samples: int = 256,
    tol_omega: float = 1e-3,
) -> float:
    """Bisection for the supremum admissible contact parameter."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ConditionError("invalid bracket")

    def ok(w):
        rep = condition_check(norm, w, slice_samples=slice_samples, translated=False)
        return rep.min_margin >= -TOL_CONDITION

    ok_lo, ok_hi = ok(lo), ok(hi)
    if ok_lo and ok_hi:
        return hi
    if not ok_lo:
        return lo
    while hi - lo > tol_omega:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
