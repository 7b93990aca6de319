"""Radial graphs over the closed half-sphere: grids, geometry, integrals.

A star-shaped capillary hypersurface is stored as phi = log(radius) on a
lattice over the upper half-sphere.  The geometry bundle carries every
pointwise quantity the flow and the integral checks need: normals, dual
support values, anisotropic principal curvatures, support functions, and
the speed field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .norms import Norm
from .wulff import AnchorVector, CapillaryWulffShape, TranslatedNorm, anchor_vector


class SurfaceError(RuntimeError):
    """Geometry evaluation failed (dual solve or non-finite derivative)."""


class HalfSphereGrid:
    """Lattice over the closed upper half-sphere.

    n = 2: node lattice (beta_i, lambda_j) with beta in [0, pi/2], the pole
    at row 0, the boundary circle at row n_beta, and one ghost row beyond
    it; lambda periodic.  Ring quadrature weights are exact cell integrals
    of sin(beta), so the quadrature of 1 is exactly 2*pi.

    n = 3: cell-centered lattice (beta, lam1, lam2) used for interior
    integrals only.
    """

    def __init__(self, n: int = 2, n_beta: int = 64, n_lambda: int = 128,
                 n_lambda2: int | None = None):
        if n not in (2, 3):
            raise SurfaceError("intrinsic dimension must be 2 or 3")
        if n_beta < 8 or n_lambda < 8:
            raise SurfaceError("grid too coarse")
        self.n = n
        self.n_beta = n_beta
        self.n_lambda = n_lambda
        self.d = n + 1
        if n == 2:
            self.dbeta = 0.5 * np.pi / n_beta
            self.dlam = 2.0 * np.pi / n_lambda
            self.betas = self.dbeta * np.arange(n_beta + 1)
            self.lambdas = self.dlam * np.arange(n_lambda)
            half = 0.5 * self.dbeta
            w = np.cos(self.betas - half) - np.cos(self.betas + half)
            w[0] = 1.0 - np.cos(half)
            w[-1] = np.cos(0.5 * np.pi - half)
            self.ring_weights = w
        else:
            self.n_lambda2 = n_lambda2 if n_lambda2 is not None else n_lambda
            self.dbeta = 0.5 * np.pi / n_beta
            self.dlam1 = np.pi / n_lambda
            self.dlam2 = 2.0 * np.pi / self.n_lambda2
            self.betas = self.dbeta * (np.arange(n_beta) + 0.5)
            self.lam1 = self.dlam1 * (np.arange(n_lambda) + 0.5)
            self.lam2 = self.dlam2 * np.arange(self.n_lambda2)

    # -- directions --------------------------------------------------------

    def directions(self) -> np.ndarray:
        """Unit vectors at every lattice node (no ghost)."""
        if self.n == 2:
            b = self.betas[:, None]
            l = self.lambdas[None, :]
            return np.stack(
                [np.sin(b) * np.cos(l) + 0 * l,
                 np.sin(b) * np.sin(l) + 0 * l,
                 np.cos(b) + 0 * l], axis=-1)
        b = self.betas[:, None, None]
        l1 = self.lam1[None, :, None]
        l2 = self.lam2[None, None, :]
        sb, cb = np.sin(b), np.cos(b)
        s1, c1 = np.sin(l1), np.cos(l1)
        zero = np.zeros((self.n_beta, self.n_lambda, self.n_lambda2))
        return np.stack(
            [sb * s1 * np.cos(l2) + zero,
             sb * s1 * np.sin(l2) + zero,
             sb * c1 + zero,
             cb + zero], axis=-1)

    def quad(self, field: np.ndarray, pole_value: float | None = None) -> float:
        """Integral over the half-sphere of a nodal field.

        n = 2: field has shape (n_beta, n_lambda) over rings 1..n_beta; the
        pole cell uses the supplied exact value or a two-ring Richardson
        estimate of the ring means.
        """
        if self.n == 2:
            means = field.mean(axis=1)
            if pole_value is None:
                pole_value = (4.0 * means[0] - means[1]) / 3.0
            w = self.ring_weights
            return float(2.0 * np.pi * (w[0] * pole_value + w[1:] @ means))
        meas = (np.sin(self.betas)[:, None, None] ** 2
                * np.sin(self.lam1)[None, :, None])
        return float(np.sum(field * meas) * self.dbeta * self.dlam1 * self.dlam2)


class GraphSurface:
    """phi = log(radius) on a half-sphere grid.

    For n = 2 phi has shape (n_beta + 2, n_lambda): row 0 is the pole,
    row n_beta the boundary circle, row n_beta + 1 the ghost layer.
    """

    def __init__(self, grid: HalfSphereGrid, phi: np.ndarray, time: float = 0.0):
        self.grid = grid
        self.phi = np.asarray(phi, dtype=float)
        self.time = float(time)
        if grid.n == 2:
            expect = (grid.n_beta + 2, grid.n_lambda)
        else:
            expect = (grid.n_beta, grid.n_lambda, grid.n_lambda2)
        if self.phi.shape != expect:
            raise SurfaceError(f"phi shape {self.phi.shape} != {expect}")
        if not np.all(np.isfinite(self.phi)):
            raise SurfaceError("non-finite phi")

    @classmethod
    def from_radial(cls, grid: HalfSphereGrid, radial) -> "GraphSurface":
        """Build from a callable mapping direction arrays to radii."""
        dirs = grid.directions()
        rho = np.asarray(radial(dirs.reshape(-1, grid.d)), dtype=float)
        rho = rho.reshape(dirs.shape[:-1])
        if np.any(rho <= 0):
            raise SurfaceError("non-star-shaped data")
        phi = np.log(rho)
        if grid.n == 2:
            full = np.empty((grid.n_beta + 2, grid.n_lambda))
            full[: grid.n_beta + 1] = phi
            # ghost row: even reflection, later replaced by the boundary solve
            full[grid.n_beta + 1] = phi[grid.n_beta - 1]
            return cls(grid, full)
        return cls(grid, phi)

    @classmethod
    def from_wulff(cls, grid: HalfSphereGrid, shape: CapillaryWulffShape) -> "GraphSurface":
        surf = cls.from_radial(grid, shape.radial_many)
        if grid.n == 2:
            # the model shape continues below the plane, so the ghost row can
            # be sampled exactly
            beta_g = 0.5 * np.pi + grid.dbeta
            dirs = np.stack(
                [np.sin(beta_g) * np.cos(grid.lambdas),
                 np.sin(beta_g) * np.sin(grid.lambdas),
                 np.full(grid.n_lambda, np.cos(beta_g))], axis=-1)
            surf.phi[grid.n_beta + 1] = np.log(shape.radial_many(dirs))
        return surf

    def copy(self) -> "GraphSurface":
        return GraphSurface(self.grid, self.phi.copy(), self.time)

    def interior_phi(self) -> np.ndarray:
        """phi on the geometry rings (1..n_beta for n = 2)."""
        if self.grid.n == 2:
            return self.phi[1 : self.grid.n_beta + 1]
        return self.phi


@dataclass
class GeometryBundle:
    """Pointwise geometry over the geometry nodes, plus grid bookkeeping.

    All fields are flattened over the geometry nodes; `shape` restores the
    lattice layout.
    """

    surface: GraphSurface
    norm: Norm
    omega0: float
    anchor: AnchorVector
    shape: tuple
    X: np.ndarray
    nu: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    F: np.ndarray
    nu_F: np.ndarray
    u_hat: np.ndarray
    u_bar: np.ndarray
    pairing: np.ndarray       # G(nu_F)(nu_F, E^F) = <nu, E^F>/F(nu)
    g: np.ndarray             # induced metric, orthonormal sphere frame
    h: np.ndarray             # second fundamental form, same frame
    ghat: np.ndarray
    hhat: np.ndarray
    kappaF: np.ndarray        # (N, n) anisotropic principal curvatures
    Hk: np.ndarray            # (N, n+1) normalized symmetric functions
    HF: np.ndarray            # sum of kappaF
    f: np.ndarray             # flow speed
    area_el: np.ndarray       # rho^n * v (per unit round measure)
    diffusion_max: float
    maximizers: np.ndarray

    def field(self, name: str) -> np.ndarray:
        return getattr(self, name).reshape(self.shape)

    def quad(self, values: np.ndarray, pole_value: float | None = None) -> float:
        return self.surface.grid.quad(values.reshape(self.shape), pole_value)

    def trace_free_sq(self) -> np.ndarray:
        """|hhat - (HF/n) ghat|^2 in the ghat metric, from the curvatures."""
        n = self.surface.grid.n
        mean = self.HF / n
        return np.sum((self.kappaF - mean[:, None]) ** 2, axis=1)


def _frame_data_n2(surface: GraphSurface):
    """Derivatives of phi on rings 1..n_beta in the orthonormal frame."""
    grid = surface.grid
    nb, nl = grid.n_beta, grid.n_lambda
    db, dl = grid.dbeta, grid.dlam
    phi = surface.phi
    rows = phi[1 : nb + 1]
    up = phi[2 : nb + 2]
    down = phi[0:nb]
    p_b = (up - down) / (2 * db)
    p_bb = (up - 2 * rows + down) / db**2
    p_l = (np.roll(rows, -1, axis=1) - np.roll(rows, 1, axis=1)) / (2 * dl)
    p_ll = (np.roll(rows, -1, axis=1) - 2 * rows + np.roll(rows, 1, axis=1)) / dl**2
    p_bl = (np.roll(up, -1, axis=1) - np.roll(up, 1, axis=1)
            - np.roll(down, -1, axis=1) + np.roll(down, 1, axis=1)) / (4 * db * dl)
    beta = grid.betas[1:][:, None]
    sb, cb = np.sin(beta), np.cos(beta)
    cot = cb / sb
    # frame derivatives and the covariant Hessian on the round sphere
    f1 = p_b
    f2 = p_l / sb
    H11 = p_bb
    H12 = (p_bl - cot * p_l) / sb
    H22 = p_ll / sb**2 + cot * p_b
    grad = np.stack([f1, f2], axis=-1)
    hess = np.stack(
        [np.stack([H11, H12], axis=-1), np.stack([H12, H22], axis=-1)], axis=-2
    )
    lam = grid.lambdas[None, :]
    u = np.stack([sb * np.cos(lam), sb * np.sin(lam), cb + 0 * lam], axis=-1)
    e1 = np.stack([cb * np.cos(lam), cb * np.sin(lam), -sb + 0 * lam], axis=-1)
    e2 = np.stack([-np.sin(lam) + 0 * sb, np.cos(lam) + 0 * sb, 0 * sb * lam], axis=-1)
    frame = np.stack([e1, e2], axis=-2)
    return rows, grad, hess, u, frame


def _d1(a, axis, h):
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2 * h)


def _d1_edge(a, axis, h):
    """Central interior, second-order one-sided at the two edges."""
    out = _d1(a, axis, h)
    sl = [slice(None)] * a.ndim

    def take(i):
        sl2 = sl.copy()
        sl2[axis] = i
        return a[tuple(sl2)]

    first = (-3 * take(0) + 4 * take(1) - take(2)) / (2 * h)
    last = (3 * take(-1) - 4 * take(-2) + take(-3)) / (2 * h)
    sl_first, sl_last = sl.copy(), sl.copy()
    sl_first[axis] = 0
    sl_last[axis] = -1
    out[tuple(sl_first)] = first
    out[tuple(sl_last)] = last
    return out


def _d2_edge(a, axis, h):
    out = (np.roll(a, -1, axis=axis) - 2 * a + np.roll(a, 1, axis=axis)) / h**2
    sl = [slice(None)] * a.ndim

    def take(i):
        sl2 = sl.copy()
        sl2[axis] = i
        return a[tuple(sl2)]

    first = (2 * take(0) - 5 * take(1) + 4 * take(2) - take(3)) / h**2
    last = (2 * take(-1) - 5 * take(-2) + 4 * take(-3) - take(-4)) / h**2
    sl_first, sl_last = sl.copy(), sl.copy()
    sl_first[axis] = 0
    sl_last[axis] = -1
    out[tuple(sl_first)] = first
    out[tuple(sl_last)] = last
    return out


def _frame_data_n3(surface: GraphSurface):
    grid = surface.grid
    phi = surface.phi
    db, d1, d2 = grid.dbeta, grid.dlam1, grid.dlam2
    p_b = _d1_edge(phi, 0, db)
    p_1 = _d1_edge(phi, 1, d1)
    p_2 = _d1(phi, 2, d2)
    p_bb = _d2_edge(phi, 0, db)
    p_11 = _d2_edge(phi, 1, d1)
    p_22 = (np.roll(phi, -1, axis=2) - 2 * phi + np.roll(phi, 1, axis=2)) / d2**2
    p_b1 = _d1_edge(p_b, 1, d1)
    p_b2 = _d1(p_b, 2, d2)
    p_12 = _d1(p_1, 2, d2)
    b = grid.betas[:, None, None]
    l1 = grid.lam1[None, :, None]
    sb, cb = np.sin(b), np.cos(b)
    s1, c1 = np.sin(l1), np.cos(l1)
    cotb = cb / sb
    cot1 = c1 / s1
    # covariant Hessian in coordinates, then rescale to the orthonormal frame
    Hbb = p_bb
    Hb1 = p_b1 - cotb * p_1
    Hb2 = p_b2 - cotb * p_2
    H11c = p_11 + sb * cb * p_b
    H12c = p_12 - cot1 * p_2
    H22c = p_22 + sb * cb * s1**2 * p_b + s1 * c1 * p_1
    s2f = sb
    s3f = sb * s1
    f = np.stack([p_b, p_1 / s2f, p_2 / s3f], axis=-1)
    hess = np.empty(phi.shape + (3, 3))
    hess[..., 0, 0] = Hbb
    hess[..., 0, 1] = hess[..., 1, 0] = Hb1 / s2f
    hess[..., 0, 2] = hess[..., 2, 0] = Hb2 / s3f
    hess[..., 1, 1] = H11c / s2f**2
    hess[..., 1, 2] = hess[..., 2, 1] = H12c / (s2f * s3f)
    hess[..., 2, 2] = H22c / s3f**2
    l2 = grid.lam2[None, None, :]
    zero = np.zeros(phi.shape)
    u = np.stack([sb * s1 * np.cos(l2) + zero, sb * s1 * np.sin(l2) + zero,
                  sb * c1 + zero, cb + zero], axis=-1)
    e1 = np.stack([cb * s1 * np.cos(l2) + zero, cb * s1 * np.sin(l2) + zero,
                   cb * c1 + zero, -sb + zero], axis=-1)
    e2 = np.stack([c1 * np.cos(l2) + zero, c1 * np.sin(l2) + zero,
                   -s1 + zero, zero], axis=-1)
    e3 = np.stack([-np.sin(l2) + zero, np.cos(l2) + zero, zero, zero], axis=-1)
    frame = np.stack([e1, e2, e3], axis=-2)
    return phi, f, hess, u, frame


def _elementary_symmetric(kappa: np.ndarray) -> np.ndarray:
    """Normalized elementary symmetric functions H_0..H_n of the rows."""
    n = kappa.shape[1]
    out = np.empty((kappa.shape[0], n + 1))
    out[:, 0] = 1.0
    if n == 2:
        out[:, 1] = 0.5 * (kappa[:, 0] + kappa[:, 1])
        out[:, 2] = kappa[:, 0] * kappa[:, 1]
    else:
        k1, k2, k3 = kappa[:, 0], kappa[:, 1], kappa[:, 2]
        out[:, 1] = (k1 + k2 + k3) / 3.0
        out[:, 2] = (k1 * k2 + k1 * k3 + k2 * k3) / 3.0
        out[:, 3] = k1 * k2 * k3
    return out


def geometry(
    surface: GraphSurface,
    norm: Norm,
    omega0: float,
    anchor: AnchorVector | None = None,
    warm: np.ndarray | None = None,
    dual_tol: float = 1e-12,
) -> GeometryBundle:
    """Full pointwise geometry of the graph surface under the given norm."""
    grid = surface.grid
    n = grid.n
    if anchor is None:
        anchor = anchor_vector(norm, omega0)
    if n == 2:
        rows, grad, hess, u, frame = _frame_data_n2(surface)
    else:
        rows, grad, hess, u, frame = _frame_data_n3(surface)
    shape = rows.shape
    N = rows.size
    d = grid.d
    rho = np.exp(rows).reshape(N)
    p = grad.reshape(N, n)
    H = hess.reshape(N, n, n)
    u = u.reshape(N, d)
    frame = frame.reshape(N, n, d)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(H))):
        raise SurfaceError("non-finite derivative (blow-up?)")
    v = np.sqrt(1.0 + np.sum(p**2, axis=1))
    nu = (u - (p[:, :, None] * frame).sum(axis=1)) / v[:, None]
    X = rho[:, None] * u
    eye = np.eye(n)
    outer_p = p[:, :, None] * p[:, None, :]
    g = (rho**2)[:, None, None] * (eye + outer_p)
    h = (rho / v)[:, None, None] * (eye + outer_p - H)
    f_val, xi, _, ok, xi_jets = norm.support_many(
        nu, z0=warm, tol=dual_tol, return_jets=True
    )
    if not np.all(ok):
        raise SurfaceError(f"dual solve failed at {int(np.sum(~ok))} nodes")
    G_xi = norm.metric_G_many(xi, jets=xi_jets)
    # ambient coordinate tangents in the orthonormal sphere frame
    T = rho[:, None, None] * (p[:, :, None] * u[:, None, :] + frame)
    ghat = T @ G_xi @ T.transpose(0, 2, 1)
    hhat = h / f_val[:, None, None]
    if n == 2:
        a = ghat[:, 0, 0] * ghat[:, 1, 1] - ghat[:, 0, 1] ** 2
        b = (hhat[:, 0, 0] * ghat[:, 1, 1] + hhat[:, 1, 1] * ghat[:, 0, 0]
             - 2.0 * hhat[:, 0, 1] * ghat[:, 0, 1])
        c = hhat[:, 0, 0] * hhat[:, 1, 1] - hhat[:, 0, 1] ** 2
        disc = np.sqrt(np.maximum(b**2 - 4.0 * a * c, 0.0))
        kappa = np.stack([(b - disc) / (2 * a), (b + disc) / (2 * a)], axis=1)
    else:
        # eigenvalues in a ghat-orthonormal basis via Cholesky
        L = np.linalg.cholesky(ghat)
        Linv = np.linalg.inv(L)
        M = np.einsum("nab,nbc,ndc->nad", Linv, hhat, Linv)
        kappa = np.linalg.eigvalsh(M)
    Hk = _elementary_symmetric(kappa)
    HF = kappa.sum(axis=1)
    u_hat = rho / (v * f_val)
    pairing = (nu @ anchor.e_f) / f_val
    denom = 1.0 + omega0 * pairing
    u_bar = u_hat / denom
    f_speed = n * denom - u_hat * HF
    area_el = rho**n * v
    # explicit-step diffusion bound: linearizing the speed in the frame
    # second derivatives of phi gives the matrix u_hat * ghat^{-1}
    if n == 2:
        det = ghat[:, 0, 0] * ghat[:, 1, 1] - ghat[:, 0, 1] ** 2
        tr = ghat[:, 0, 0] + ghat[:, 1, 1]
        lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4 * det, 0.0)))
    else:
        lam_min = np.linalg.eigvalsh(ghat)[:, 0]
    diffusion_max = float(np.max(u_hat / lam_min))
    return GeometryBundle(
        surface=surface, norm=norm, omega0=float(omega0), anchor=anchor,
        shape=shape, X=X, nu=nu, v=v, rho=rho, F=f_val, nu_F=xi,
        u_hat=u_hat, u_bar=u_bar, pairing=pairing, g=g, h=h,
        ghat=ghat, hhat=hhat, kappaF=kappa, Hk=Hk, HF=HF, f=f_speed,
        area_el=area_el, diffusion_max=diffusion_max, maximizers=xi,
    )


# -- global integrals ------------------------------------------------------


def enclosed_volume(bundle: GeometryBundle) -> float:
    """(n+1)-volume enclosed by the surface and the bottom plane."""
    grid = bundle.surface.grid
    n = grid.n
    vals = bundle.rho ** (n + 1)
    pole = None
    if n == 2:
        pole = float(np.exp(bundle.surface.phi[0, 0]) ** (n + 1))
    return bundle.quad(vals, pole) / (n + 1)


def _boundary_rho(surface: GraphSurface) -> np.ndarray:
    return np.exp(surface.phi[surface.grid.n_beta])


def wetted_area(surface: GraphSurface) -> float:
    """Area of the wetted region enclosed by the boundary trace (n = 2)."""
    rb = _boundary_rho(surface)
    return float(0.5 * np.sum(rb**2) * surface.grid.dlam)


def capillary_area(bundle: GeometryBundle, omega0: float | None = None) -> float:
    """Anisotropic area plus omega0 times the wetted area, normalized."""
    if omega0 is None:
        omega0 = bundle.omega0
    grid = bundle.surface.grid
    n = grid.n
    if n == 3:
        return quermassintegral_interior(bundle, 0)
    aniso = bundle.quad(bundle.F * bundle.area_el)
    return (aniso + omega0 * wetted_area(bundle.surface)) / (n + 1)


def quermassintegral_interior(bundle: GeometryBundle, k: int) -> float:
    """V_{k+1} by the interior formula (valid for capillary surfaces)."""
    n = bundle.surface.grid.n
    if not 0 <= k <= n:
        raise SurfaceError("k out of range")
    integrand = bundle.Hk[:, k] * (1.0 + bundle.omega0 * bundle.pairing) \
        * bundle.F * bundle.area_el
    return bundle.quad(integrand) / (n + 1)


class SliceSupportTable:
    """Periodic spline of the boundary slice support function (n = 2)."""

    def __init__(self, tn: TranslatedNorm, samples: int = 1024):
        thetas = np.linspace(0.0, 2.0 * np.pi, samples + 1)
        vals = tn.slice_support_table(samples)
        self.spline = CubicSpline(
            thetas, np.concatenate([vals, vals[:1]]), bc_type="periodic"
        )

    def value(self, theta: np.ndarray) -> np.ndarray:
        return self.spline(np.mod(theta, 2.0 * np.pi))

    def second(self, theta: np.ndarray) -> np.ndarray:
        return self.spline(np.mod(theta, 2.0 * np.pi), 2)


def _boundary_curve(surface: GraphSurface):
    """Boundary trace radius and its spectral lambda-derivatives."""
    rb = _boundary_rho(surface)
    nl = rb.size
    freq = np.fft.rfftfreq(nl, d=1.0 / nl)
    fr = np.fft.rfft(rb)
    rb1 = np.fft.irfft(1j * freq * fr, nl)
    rb2 = np.fft.irfft(-(freq**2) * fr, nl)
    return rb, rb1, rb2


def quermassintegral_boundary(
    bundle: GeometryBundle, k: int, table: SliceSupportTable
) -> float:
    """V_{k+1} by interior curvature term plus the boundary slice term (n = 2)."""
    grid = bundle.surface.grid
    n = grid.n
    if n != 2:
        raise SurfaceError("boundary form implemented for n = 2 only")
    if not 1 <= k <= n:
        raise SurfaceError("k out of range")
    interior = bundle.quad(bundle.Hk[:, k] * bundle.F * bundle.area_el)
    rb, rb1, rb2 = _boundary_curve(bundle.surface)
    lam = grid.lambdas
    speed = np.sqrt(rb**2 + rb1**2)
    # outward planar normal angle of the trace curve
    x1 = rb1 * np.cos(lam) - rb * np.sin(lam)
    y1 = rb1 * np.sin(lam) + rb * np.cos(lam)
    theta = np.arctan2(-x1, y1)
    barf = table.value(theta)
    if k == 1:
        weight = np.ones_like(rb)
    else:
        kappa_plane = (rb**2 + 2 * rb1**2 - rb * rb2) / speed**3
        weight = (barf + table.second(theta)) * kappa_plane
    boundary = np.sum(weight * barf * speed) * grid.dlam
    return (interior + (bundle.omega0 / n) * boundary) / (n + 1)


def minkowski_residual(bundle: GeometryBundle, k: int) -> float:
    """Normalized defect of the capillary curvature-integral identity."""
    n = bundle.surface.grid.n
    if not 0 <= k <= n - 1:
        raise SurfaceError("k out of range")
    dmu = bundle.F * bundle.area_el
    num = bundle.quad(
        (bundle.Hk[:, k] * (1.0 + bundle.omega0 * bundle.pairing)
         - bundle.Hk[:, k + 1] * bundle.u_hat) * dmu
    )
    return num / bundle.quad(dmu)


def boundary_capillarity_residual(bundle: GeometryBundle) -> float:
    """max |<nu_F, E_up> + omega0| over the boundary ring (n = 2)."""
    grid = bundle.surface.grid
    if grid.n != 2:
        raise SurfaceError("boundary residual is for n = 2")
    nu_F = bundle.nu_F.reshape(bundle.shape + (3,))
    return float(np.max(np.abs(nu_F[-1, :, 2] + bundle.omega0)))


# -- export ----------------------------------------------------------------


def export_obj(surface: GraphSurface, path: str) -> None:
    """Wavefront OBJ mesh of the graph surface (n = 2)."""
    grid = surface.grid
    if grid.n != 2:
        raise SurfaceError("OBJ export is for n = 2")
    nb, nl = grid.n_beta, grid.n_lambda
    dirs = grid.directions()
    rho = np.exp(surface.phi[: nb + 1])
    pts = rho[..., None] * dirs
    lines = ["# capflow surface export"]
    pole = pts[0].mean(axis=0)
    lines.append(f"v {pole[0]:.9g} {pole[1]:.9g} {pole[2]:.9g}")
    for i in range(1, nb + 1):
        for j in range(nl):
            x, y, z = pts[i, j]
            lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")

    def vid(i, j):
        return 2 + (i - 1) * nl + (j % nl)

    for j in range(nl):
        lines.append(f"f 1 {vid(1, j)} {vid(1, j + 1)}")
    for i in range(1, nb):
        for j in range(nl):
            a, b = vid(i, j), vid(i, j + 1)
            c, d2 = vid(i + 1, j + 1), vid(i + 1, j)
            lines.append(f"f {a} {b} {c}")
            lines.append(f"f {a} {c} {d2}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
