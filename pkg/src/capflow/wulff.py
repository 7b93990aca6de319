"""Capillary model shapes and translated-ball machinery.

Holds the anchor vector construction, the capillary model shape (a scaled,
vertically anchored translate of the unit ball of the dual gauge restricted
to the upper half-space), the translated gauge with its transferred metric
and third-order tensor, and the planar support function of the boundary
slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .norms import Norm, NormError, ShiftedGaugeNorm


class WulffError(ValueError):
    """Invalid capillary shape construction or query."""


@dataclass(frozen=True)
class AnchorVector:
    """Center-line direction of the capillary model shapes.

    Satisfies <e_f, E_up> = 1 where E_up is the vertical unit vector.
    """

    e_f: np.ndarray
    omega0: float


def vertical(d: int) -> np.ndarray:
    e = np.zeros(d)
    e[-1] = 1.0
    return e


def admissible_interval(norm: Norm) -> tuple[float, float]:
    """Open interval of admissible contact parameters for this norm."""
    e_up = vertical(norm.d)
    return (-norm.support(e_up).value, norm.support(-e_up).value)


def anchor_vector(norm: Norm, omega0: float) -> AnchorVector:
    """Anchor direction for the given contact parameter.

    Built from the touching point of the supporting plane orthogonal to the
    vertical axis, from above for omega0 < 0 and from below for omega0 > 0;
    the vertical unit vector is chosen for omega0 = 0.
    """
    lo, hi = admissible_interval(norm)
    if not lo < omega0 < hi:
        raise WulffError(
            f"omega0={omega0} outside admissible interval ({lo:.6g}, {hi:.6g})"
        )
    e_up = vertical(norm.d)
    if omega0 < 0:
        res = norm.support(e_up)
        e_f = res.maximizer / res.value
    elif omega0 > 0:
        res = norm.support(-e_up)
        e_f = -res.maximizer / res.value
    else:
        e_f = e_up.copy()
    pairing = float(np.dot(e_f, e_up))
    if abs(pairing - 1.0) > 1e-10:
        raise WulffError(f"anchor pairing {pairing} != 1")
    return AnchorVector(e_f, float(omega0))


class CapillaryWulffShape:
    """Scaled translated unit ball of the dual gauge, cut by the half-space.

    Boundary points x satisfy gauge(x - r*omega0*e_f) = r.
    """

    def __init__(self, norm: Norm, r: float, omega0: float, anchor: AnchorVector | None = None):
        if r <= 0:
            raise WulffError("radius must be positive")
        self.norm = norm
        self.r = float(r)
        self.omega0 = float(omega0)
        self.anchor = anchor if anchor is not None else anchor_vector(norm, omega0)
        self.center = self.r * self.omega0 * self.anchor.e_f
        # ray solvability from the origin needs the center strictly interior
        # (a centered shape trivially is; the gauge is singular at 0)
        if self.omega0 != 0.0 and float(
            norm.f0_many((-self.center / self.r)[None, :])[0]
        ) >= 1.0:
            raise WulffError("origin is not interior to the shape")

    def radial_many(self, directions: np.ndarray) -> np.ndarray:
        """Radial distances along unit directions, Newton with bisection fallback."""
        u = np.asarray(directions, dtype=float)
        flat = u.reshape(-1, self.norm.d)
        n = flat.shape[0]
        lo = np.zeros(n)
        hi = np.full(n, self.r * 2.0)
        # expand until the gauge exceeds the radius along every ray
        for _ in range(60):
            vals = self.norm.f0_many(hi[:, None] * flat - self.center)
            grow = vals < self.r
            if not np.any(grow):
                break
            hi[grow] *= 2.0
        rho = 0.5 * (lo + hi)
        for _ in range(100):
            pts = rho[:, None] * flat - self.center
            jet = self.norm.gauge_jets(pts, order=2)
            g = jet.val - self.r
            hi = np.where(g > 0, rho, hi)
            lo = np.where(g <= 0, rho, lo)
            slope = np.einsum("ni,ni->n", jet.grad, flat)
            with np.errstate(all="ignore"):
                rho_new = rho - g / slope
            bad = ~np.isfinite(rho_new) | (rho_new <= lo) | (rho_new >= hi)
            rho_new[bad] = 0.5 * (lo[bad] + hi[bad])
            if np.all(np.abs(rho_new - rho) <= 1e-12 * np.maximum(1.0, rho)):
                rho = rho_new
                break
            rho = rho_new
        return rho.reshape(u.shape[:-1])

    def radial_function(self, direction) -> float:
        return float(self.radial_many(np.asarray(direction, dtype=float)[None, :])[0])

    def surface_points(self, directions: np.ndarray) -> np.ndarray:
        u = np.asarray(directions, dtype=float)
        return self.radial_many(u)[..., None] * u

    def normals(self, points: np.ndarray) -> np.ndarray:
        """Outward Euclidean unit normals at boundary points."""
        g = self.norm.gauge_jets(points - self.center, order=2).grad
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def static_residual(self, sample_count: int = 1000, seed: int = 42) -> float:
        """Max violation of the first-order shape identity at sampled points.

        The identity states 1 + omega0 * G(nu_F)(nu_F, e_f) = u_hat / r at
        every boundary point.
        """
        from .norms import fibonacci_sphere, random_directions

        if self.norm.d == 3:
            dirs = fibonacci_sphere(2 * sample_count)
        else:
            dirs = random_directions(2 * sample_count, self.norm.d, seed=seed)
        dirs = dirs[dirs[:, -1] > 1e-6][:sample_count]
        pts = self.surface_points(dirs)
        nus = self.normals(pts)
        f_val, z, _, ok = self.norm.support_many(nus)
        if not np.all(ok):
            raise WulffError("dual solve failed while sampling the shape")
        u_hat = np.einsum("ni,ni->n", pts, nus) / f_val
        pairing = (nus @ self.anchor.e_f) / f_val
        res = 1.0 + self.omega0 * pairing - u_hat / self.r
        return float(np.abs(res).max())


class TranslatedNorm:
    """The base ball translated by omega0 times the anchor direction."""

    def __init__(self, base: Norm, omega0: float, anchor: AnchorVector | None = None):
        self.base = base
        self.omega0 = float(omega0)
        self.anchor = anchor if anchor is not None else anchor_vector(base, omega0)
        self.eta = self.omega0 * self.anchor.e_f
        if float(np.linalg.norm(self.eta)) > 0 and base.f0(-self.eta) >= 1.0:
            raise WulffError("translated ball does not contain the origin")
        self._gauge: ShiftedGaugeNorm | None = None

    @property
    def gauge(self) -> ShiftedGaugeNorm:
        """Gauge of the translated ball (lazy; shares the base jets)."""
        if self._gauge is None:
            self._gauge = ShiftedGaugeNorm(
                self.base, self.eta, name=f"translated-{self.base.name}"
            )
        return self._gauge

    def tilde_support(self, x) -> float:
        """Support function of the translated ball."""
        x = np.asarray(x, dtype=float)
        return self.base.support(x).value + float(np.dot(self.eta, x))

    def transfer_denominator_many(self, zs: np.ndarray) -> np.ndarray:
        """1 + G(z)(z, eta) = 1 + <Dgauge(z), eta> on the base unit ball."""
        grads = self.base.gauge_jets(np.asarray(zs, dtype=float), order=2).grad
        return 1.0 + grads @ self.eta

    def transfer_G_Q_many(
        self, zs: np.ndarray, xs: np.ndarray, ys: np.ndarray, zvecs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Transferred metric and third-order tensor values at base points.

        zs lie on the base unit ball and xs, ys, zvecs are tangent there; the
        values refer to the translated ball at zs + eta.
        """
        zs = np.asarray(zs, dtype=float)
        jets = self.base.gauge_jets(zs, order=3)
        g_mat = self.base.metric_G_many(zs, jets=jets)
        q_ten = self.base.tensor_Q_many(zs, jets=jets)
        c = 1.0 + jets.grad @ self.eta
        if np.any(c <= 0.0):
            raise WulffError("transfer hypothesis violated: 1 + G(z)(z,eta) <= 0")
        g_xy = np.einsum("ni,nij,nj->n", xs, g_mat, ys)
        g_zy = np.einsum("ni,nij,nj->n", zvecs, g_mat, ys)
        g_xz = np.einsum("ni,nij,nj->n", xs, g_mat, zvecs)
        eta = self.eta
        g_xe = np.einsum("ni,nij,j->n", xs, g_mat, eta)
        g_ye = np.einsum("ni,nij,j->n", ys, g_mat, eta)
        g_ze = np.einsum("ni,nij,j->n", zvecs, g_mat, eta)
        q_val = np.einsum("nijk,ni,nj,nk->n", q_ten, xs, ys, zvecs)
        g_t = g_xy / c
        q_t = q_val / c - (g_zy * g_xe + g_xy * g_ze + g_xz * g_ye) / c**2
        return g_t, q_t

    # -- boundary slice ----------------------------------------------------

    def slice_points(self, angles: np.ndarray) -> np.ndarray:
        """Base-ball points at height -omega0, one per planar angle (d = 3)."""
        if self.base.d != 3:
            raise WulffError("slice_points is for ambient dimension 3")
        angles = np.asarray(angles, dtype=float)
        n = angles.size
        plane_dirs = np.stack(
            [np.cos(angles), np.sin(angles), np.zeros(n)], axis=1
        )
        offset = np.array([0.0, 0.0, -self.omega0])
        if self.omega0 != 0.0 and self.base.f0_many(offset[None, :])[0] >= 1.0:
            raise WulffError("empty boundary slice")
        lo = np.zeros(n)
        hi = np.full(n, 2.0)
        for _ in range(60):
            vals = self.base.f0_many(hi[:, None] * plane_dirs + offset)
            grow = vals < 1.0
            if not np.any(grow):
                break
            hi[grow] *= 2.0
        rho = 0.5 * (lo + hi)
        for _ in range(100):
            pts = rho[:, None] * plane_dirs + offset
            jet = self.base.gauge_jets(pts, order=2)
            g = jet.val - 1.0
            hi = np.where(g > 0, rho, hi)
            lo = np.where(g <= 0, rho, lo)
            slope = np.einsum("ni,ni->n", jet.grad, plane_dirs)
            with np.errstate(all="ignore"):
                rho_new = rho - g / slope
            bad = ~np.isfinite(rho_new) | (rho_new <= lo) | (rho_new >= hi)
            rho_new[bad] = 0.5 * (lo[bad] + hi[bad])
            if np.all(np.abs(rho_new - rho) <= 1e-13 * np.maximum(1.0, rho)):
                rho = rho_new
                break
            rho = rho_new
        return rho[:, None] * plane_dirs + offset

    def slice_support(self, planar_unit, samples: int = 512) -> float:
        """Planar support function of the translated ball cut at height zero.

        Dense angle sweep with a bounded scalar refinement around the best
        sample.
        """
        u = np.asarray(planar_unit, dtype=float)
        if self.base.d == 3:
            angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
            pts = self.slice_points(angles) + self.eta
            vals = pts[:, 0] * u[0] + pts[:, 1] * u[1]
            j = int(np.argmax(vals))
            da = 2.0 * np.pi / samples

            def neg(a):
                p = self.slice_points(np.array([a]))[0] + self.eta
                return -(p[0] * u[0] + p[1] * u[1])

            res = minimize_scalar(
                neg,
                bounds=(angles[j] - da, angles[j] + da),
                method="bounded",
                options={"xatol": 1e-12},
            )
            return float(-res.fun)
        # ambient dimension 4: sweep the two slice angles (lower bound)
        from .norms import random_directions

        dirs3 = random_directions(4096, 3, seed=7)
        offset = np.zeros(4)
        offset[3] = -self.omega0
        lo = np.zeros(dirs3.shape[0])
        hi = np.full(dirs3.shape[0], 2.0)
        dirs4 = np.concatenate([dirs3, np.zeros((dirs3.shape[0], 1))], axis=1)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            vals = self.base.f0_many(mid[:, None] * dirs4 + offset)
            hi = np.where(vals > 1.0, mid, hi)
            lo = np.where(vals <= 1.0, mid, lo)
        pts = (0.5 * (lo + hi))[:, None] * dirs4 + offset + self.eta
        return float(np.max(pts[:, :3] @ u))

    def slice_support_table(self, samples: int = 512) -> np.ndarray:
        """Support values at uniformly spaced planar normal angles (d = 3)."""
        thetas = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
        # support at angle theta needs the slice point whose outward planar
        # normal is (cos t, sin t); dense sweep once, then per-angle max
        angles = np.linspace(0.0, 2.0 * np.pi, 4 * samples, endpoint=False)
        pts = self.slice_points(angles) + self.eta
        proj = np.einsum(
            "nk,mk->nm",
            np.stack([np.cos(thetas), np.sin(thetas)], axis=1),
            pts[:, :2],
        )
        return proj.max(axis=1)


def translated_metric_Q(tn: TranslatedNorm, z, x_vec, y_vec, z_vec) -> tuple[float, float]:
    """Transferred metric and third-order tensor values at one base point."""
    g_t, q_t = tn.transfer_G_Q_many(
        np.asarray(z, dtype=float)[None, :],
        np.asarray(x_vec, dtype=float)[None, :],
        np.asarray(y_vec, dtype=float)[None, :],
        np.asarray(z_vec, dtype=float)[None, :],
    )
    return float(g_t[0]), float(q_t[0])


def slice_support(tn: TranslatedNorm, planar_unit, samples: int = 512) -> float:
    """Module-level convenience wrapper."""
    return tn.slice_support(planar_unit, samples=samples)


def slice_support_from_boundary(
    tn: TranslatedNorm, nu: np.ndarray, nu_f: np.ndarray, mu: np.ndarray
) -> float:
    """Boundary identity for the slice support, used as a cross-check.

    With nu the surface normal at a boundary point, nu_f its image on the
    base ball, and mu the outward co-normal in the boundary plane, the slice
    support at the planar normal equals
    <nu, e_f> <nu_f, mu> - F(nu) <e_f, mu>.
    """
    # nu_f lies on the unit ball so F(nu) = <nu, nu_f>
    f_val = float(np.dot(nu, nu_f))
    e_f = tn.anchor.e_f
    return float(np.dot(nu, e_f) * np.dot(nu_f, mu) - f_val * np.dot(e_f, mu))
