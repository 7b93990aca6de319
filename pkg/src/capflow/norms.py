"""Minkowski norms, dual support solves, and the derived tensors.

A norm object exposes the gauge function together with its derivatives up to
third order.  From those it derives the support function of the unit ball
(by a bordered Newton solve on the level set), the map sending a direction to
the touching point of the supporting hyperplane, the squared-gauge Hessian
metric, its third-derivative tensor, and the tangential curvature matrix of
the support function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as expr_mod
from .expr import EvalDomainError, Expression, Jet, symmetrize_hess, symmetrize_third

DUAL_TOL = 1e-12
DUAL_MAX_ITER = 60


class NormError(ValueError):
    """Base class for norm failures."""


class DualSolveError(NormError):
    """The support solve failed to converge."""


@dataclass
class DualSolveResult:
    """Outcome of a support evaluation at one direction."""

    value: float
    maximizer: np.ndarray
    iterations: int
    converged: bool


def fibonacci_sphere(count: int) -> np.ndarray:
    """Quasi-uniform sample of the unit 2-sphere, shape (count, 3)."""
    i = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / count)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=1
    )


def random_directions(count: int, d: int, seed: int = 42) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sym3_hg(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    t = np.einsum("nij,nk->nijk", h, g)
    return t + np.einsum("njk,ni->nijk", h, g) + np.einsum("nik,nj->nijk", h, g)


class Norm:
    """A smooth elliptic gauge on R^d with derivative oracles.

    Subclasses implement gauge_jets.  Everything else (support solve, metric,
    third-order tensor, curvature matrix of the support function) is generic.
    """

    def __init__(self, d: int, name: str = "norm", homogeneity_check_tol: float = 1e-8):
        self.d = d
        self.name = name
        self.homogeneity_check_tol = homogeneity_check_tol

    # -- gauge evaluation -------------------------------------------------

    def gauge_jets(self, pts: np.ndarray, order: int = 2) -> Jet:
        raise NotImplementedError

    def f0_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return self.gauge_jets(pts, order=2).val

    def f0(self, x) -> float:
        return float(self.f0_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_f0(self, x) -> np.ndarray:
        return self.gauge_jets(np.asarray(x, dtype=float)[None, :], order=2).grad[0]

    # -- dual support -----------------------------------------------------

    def support_many(
        self,
        xs: np.ndarray,
        z0: np.ndarray | None = None,
        tol: float = DUAL_TOL,
        return_jets: bool = False,
    ):
        """Support values and maximizers for a batch of directions.

        Solves max <x,z> subject to gauge(z) = 1 by a damped bordered Newton
        method on the stationarity system x = s*Dgauge(z), gauge(z) = 1.
        Returns (values, maximizers, iterations, converged_mask) and, with
        return_jets, the gauge jets at the maximizers as a fifth item.
        """
        xs = np.asarray(xs, dtype=float)
        n, d = xs.shape
        norms_x = np.linalg.norm(xs, axis=1)
        if np.any(norms_x == 0.0):
            raise NormError("support direction must be nonzero")
        start = xs if z0 is None else np.asarray(z0, dtype=float)
        jet0 = self.gauge_jets(start, order=2)
        # rescale the jets onto the unit level set by homogeneity instead of
        # re-evaluating: grad is 0-homogeneous, hess is (-1)-homogeneous
        c = jet0.val
        z = start / c[:, None]
        jet = Jet(np.ones(n), jet0.grad, jet0.hess * c[:, None, None], None)
        s = np.einsum("ni,ni->n", xs, z)
        scale = np.maximum(1.0, norms_x)

        def residual_from(jetc, sc):
            r = np.empty((n, d + 1))
            r[:, :d] = xs - sc[:, None] * jetc.grad
            r[:, d] = jetc.val - 1.0
            return r

        r = residual_from(jet, s)
        rnorm = np.linalg.norm(r, axis=1) / scale
        iterations = 0
        for iterations in range(1, DUAL_MAX_ITER + 1):
            act = np.nonzero(rnorm > tol)[0]
            if act.size == 0:
                break
            # Newton system assembled and solved on unconverged rows only
            na = act.size
            jac = np.zeros((na, d + 1, d + 1))
            jac[:, :d, :d] = -s[act, None, None] * jet.hess[act]
            jac[:, :d, d] = -jet.grad[act]
            jac[:, d, :d] = jet.grad[act]
            try:
                delta = np.linalg.solve(jac, -r[act, :, None])[:, :, 0]
            except np.linalg.LinAlgError as exc:
                raise DualSolveError(f"singular dual system for {self.name}") from exc
            step = 1.0
            for _ in range(30):
                z_try = z[act] + step * delta[:, :d]
                s_try = s[act] + step * delta[:, d]
                with np.errstate(all="ignore"):
                    jet_try = self.gauge_jets(z_try, order=2)
                    r_try = np.empty((na, d + 1))
                    r_try[:, :d] = xs[act] - s_try[:, None] * jet_try.grad
                    r_try[:, d] = jet_try.val - 1.0
                rnorm_try = np.linalg.norm(r_try, axis=1) / scale[act]
                if np.all(np.isfinite(rnorm_try) & (rnorm_try <= rnorm[act])):
                    break
                step *= 0.5
            z[act], s[act], r[act], rnorm[act] = z_try, s_try, r_try, rnorm_try
            jet.val[act] = jet_try.val
            jet.grad[act] = jet_try.grad
            jet.hess[act] = jet_try.hess
        converged = rnorm <= max(tol, DUAL_TOL) * 10
        if return_jets:
            return s, z, iterations, converged, jet
        return s, z, iterations, converged

    def support(self, x) -> DualSolveResult:
        """Support value and touching point for one direction."""
        xs = np.asarray(x, dtype=float)[None, :]
        s, z, iters, ok = self.support_many(xs)
        if not ok[0]:
            raise DualSolveError(
                f"support solve did not converge for {self.name} at {x}"
            )
        return DualSolveResult(float(s[0]), z[0], iters, bool(ok[0]))

    def cahn_hoffman(self, unit_direction) -> np.ndarray:
        """Touching point of the supporting plane with unit outward normal x."""
        return self.support(unit_direction).maximizer

    def cahn_hoffman_many(self, dirs: np.ndarray, z0=None) -> np.ndarray:
        return self.support_many(dirs, z0=z0)[1]

    # -- derived tensors --------------------------------------------------

    def metric_G_many(self, xis: np.ndarray, jets: Jet | None = None) -> np.ndarray:
        """Hessian of half the squared gauge, shape (N,d,d)."""
        if jets is None:
            jets = self.gauge_jets(np.asarray(xis, dtype=float), order=2)
        outer = np.einsum("ni,nj->nij", jets.grad, jets.grad)
        return jets.val[:, None, None] * jets.hess + outer

    def metric_G(self, xi) -> np.ndarray:
        return self.metric_G_many(np.asarray(xi, dtype=float)[None, :])[0]

    def tensor_Q_many(self, xis: np.ndarray, jets: Jet | None = None) -> np.ndarray:
        """Third derivative of half the squared gauge, shape (N,d,d,d)."""
        if jets is None or jets.third is None:
            jets = self.gauge_jets(np.asarray(xis, dtype=float), order=3)
        q = jets.val[:, None, None, None] * jets.third + _sym3_hg(jets.hess, jets.grad)
        return symmetrize_third(q)

    def tensor_Q(self, xi) -> np.ndarray:
        return self.tensor_Q_many(np.asarray(xi, dtype=float)[None, :])[0]

    def support_hessian_many(
        self,
        nus: np.ndarray,
        maximizers: np.ndarray | None = None,
        jets: Jet | None = None,
    ) -> np.ndarray:
        """Ambient Hessian of the support function at directions nu.

        Uses the inverse-function identity against the metric of the gauge:
        support_value(nu) * D2(support)(nu) = (I - outer(z, Dgauge(z))) G(z)^-1
        with z the touching point for nu.  Restricted to the tangent plane of
        the direction sphere this is the curvature matrix of the unit ball.
        """
        nus = np.asarray(nus, dtype=float)
        if maximizers is None:
            _, maximizers, _, ok = self.support_many(nus)
            if not np.all(ok):
                raise DualSolveError(f"support solve failed for {self.name}")
        z = maximizers
        if jets is None:
            jets = self.gauge_jets(z, order=2)
        g_mat = self.metric_G_many(z, jets=jets)
        g_inv = np.linalg.inv(g_mat)
        eye = np.eye(self.d)[None, :, :]
        proj = eye - np.einsum("ni,nj->nij", z, jets.grad)
        f_val = np.einsum("ni,ni->n", nus, z)
        return np.einsum("nij,njk->nik", proj, g_inv) / f_val[:, None, None]

    def tangent_basis(self, nu: np.ndarray) -> np.ndarray:
        """Orthonormal basis of the hyperplane orthogonal to nu, (d-1,d)."""
        nu = np.asarray(nu, dtype=float)
        d = self.d
        basis = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            v = e - np.dot(e, nu) * nu
            for b in basis:
                v -= np.dot(v, b) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                basis.append(v / nv)
            if len(basis) == d - 1:
                break
        return np.array(basis)

    def a_f_matrix(self, nu) -> np.ndarray:
        """Curvature matrix of the support function on the tangent plane of nu.

        Returned in an orthonormal tangent basis; symmetric positive definite
        for elliptic norms.
        """
        nu = np.asarray(nu, dtype=float)
        nu = nu / np.linalg.norm(nu)
        amb = self.support_hessian_many(nu[None, :])[0]
        basis = self.tangent_basis(nu)
        mat = basis @ amb @ basis.T
        return 0.5 * (mat + mat.T)

    # -- diagnostics ------------------------------------------------------

    def ellipticity_report(self, samples: int = 1000) -> dict:
        """Min eigenvalue of the squared-gauge Hessian over sampled directions."""
        if self.d == 3:
            dirs = fibonacci_sphere(samples)
        else:
            dirs = random_directions(samples, self.d)
        jets = self.gauge_jets(dirs, order=2)
        g_mat = self.metric_G_many(dirs, jets=jets)
        eig = np.linalg.eigvalsh(g_mat)
        min_eig = float(eig[:, 0].min())
        return {
            "min_eigenvalue": min_eig,
            "max_eigenvalue": float(eig[:, -1].max()),
            "near_degenerate": min_eig < 1e-6,
        }

    def homogeneity_residual(self, samples: int = 200) -> float:
        if self.d == 3:
            dirs = fibonacci_sphere(samples)
        else:
            dirs = random_directions(samples, self.d)
        res = 0.0
        base = self.f0_many(dirs)
        for lam in (0.5, 2.0):
            res = max(res, float(np.abs(self.f0_many(lam * dirs) - lam * base).max()))
        return res

    def verify_duality(self, samples: int = 100, seed: int = 42) -> dict:
        """Max residuals of the inverse-gauge identities over random samples.

        (a) gauge of the maximizer is 1; (b) the gauge gradient at the
        maximizer is the rescaled input direction; (c) the metric pairing of
        the maximizer against any vector equals the Euclidean pairing with the
        direction divided by the support value.
        """
        if self.d == 3:
            dirs = fibonacci_sphere(samples)
        else:
            dirs = random_directions(samples, self.d, seed=seed)
        ys = random_directions(samples, self.d, seed=seed + 1)
        f_val, z, _, ok = self.support_many(dirs)
        jets = self.gauge_jets(z, order=2)
        res_a = float(np.abs(jets.val - 1.0).max())
        res_b = float(np.abs(jets.grad - dirs / f_val[:, None]).max())
        g_mat = self.metric_G_many(z, jets=jets)
        lhs = np.einsum("ni,nij,nj->n", z, g_mat, ys)
        rhs = np.einsum("ni,ni->n", ys, dirs) / f_val
        res_c = float(np.abs(lhs - rhs).max())
        return {
            "gauge_of_maximizer": res_a,
            "gradient_alignment": res_b,
            "metric_pairing": res_c,
            "all_converged": bool(np.all(ok)),
        }


class QuadraticNorm(Norm):
    """Gauge sqrt(x^T M x) with closed-form support and derivatives."""

    def __init__(self, m: np.ndarray, name: str = "quadratic"):
        m = np.asarray(m, dtype=float)
        super().__init__(m.shape[0], name=name)
        self.m = m
        self.m_inv = np.linalg.inv(m)

    def gauge_jets(self, pts: np.ndarray, order: int = 2) -> Jet:
        pts = np.asarray(pts, dtype=float)
        mx = pts @ self.m
        q = np.einsum("ni,ni->n", pts, mx)
        if np.any(q <= 0.0):
            raise EvalDomainError("quadratic gauge evaluated at the origin")
        val = np.sqrt(q)
        grad = mx / val[:, None]
        hess = (self.m[None, :, :] - np.einsum("ni,nj->nij", grad, grad)) / val[
            :, None, None
        ]
        third = None
        if order >= 3:
            third = -_sym3_hg(hess, grad) / val[:, None, None, None]
            symmetrize_third(third)
        return Jet(val, grad, hess, third)

    def support_many(self, xs, z0=None, tol=DUAL_TOL, return_jets=False):
        xs = np.asarray(xs, dtype=float)
        minv_x = xs @ self.m_inv
        val = np.sqrt(np.einsum("ni,ni->n", xs, minv_x))
        z = minv_x / val[:, None]
        ok = np.ones(xs.shape[0], dtype=bool)
        if return_jets:
            return val, z, 0, ok, self.gauge_jets(z, order=2)
        return val, z, 0, ok


class ExpressionNorm(Norm):
    """Gauge given by a parsed expression."""

    def __init__(self, expression: Expression, name: str = "custom"):
        super().__init__(expression.dim, name=name)
        self.expression = expression

    def gauge_jets(self, pts: np.ndarray, order: int = 2) -> Jet:
        return expr_mod.evaluate(self.expression, pts, order=order)


class ShiftedGaugeNorm(Norm):
    """Gauge of a translated unit ball: the set base-ball + eta.

    The value t solves base_gauge(x - t*eta) = t; derivatives follow from
    implicit differentiation of that relation and are exact closed forms in
    the base jets.  Requires base_gauge(-eta) < 1 so the origin stays interior.
    """

    def __init__(self, base: Norm, eta: np.ndarray, name: str | None = None):
        eta = np.asarray(eta, dtype=float)
        super().__init__(base.d, name=name or f"shifted-{base.name}")
        if float(np.linalg.norm(eta)) > 0 and base.f0(-eta) >= 1.0:
            raise NormError("shift puts the origin outside the translated ball")
        self.base = base
        self.eta = eta

    def _solve_value(self, pts: np.ndarray) -> np.ndarray:
        eta = self.eta
        t = self.base.f0_many(pts)
        for _ in range(60):
            y = pts - t[:, None] * eta[None, :]
            jet = self.base.gauge_jets(y, order=2)
            g = jet.val - t
            dg = -(jet.grad @ eta) - 1.0
            step = g / dg
            t_new = t - step
            if np.all(np.abs(step) <= 1e-14 * np.maximum(1.0, np.abs(t))):
                t = t_new
                break
            t = t_new
        return t

    def gauge_jets(self, pts: np.ndarray, order: int = 2) -> Jet:
        pts = np.asarray(pts, dtype=float)
        eta = self.eta
        t = self._solve_value(pts)
        y = pts - t[:, None] * eta[None, :]
        base_jet = self.base.gauge_jets(y, order=3 if order >= 3 else 2)
        g = base_jet.grad
        h = base_jet.hess
        c = 1.0 + g @ eta
        grad = g / c[:, None]
        h_eta = np.einsum("nij,j->ni", h, eta)
        s2 = h_eta @ eta
        outer_gg = np.einsum("ni,nj->nij", g, g)
        hess = (
            h / c[:, None, None]
            - (
                np.einsum("ni,nj->nij", h_eta, g)
                + np.einsum("ni,nj->nij", g, h_eta)
            )
            / (c**2)[:, None, None]
            + s2[:, None, None] * outer_gg / (c**3)[:, None, None]
        )
        third = None
        if order >= 3:
            t3 = base_jet.third
            t3_eta = np.einsum("nijl,l->nij", t3, eta)
            t3_eta2 = np.einsum("nij,j->ni", t3_eta, eta)
            t3_eta3 = t3_eta2 @ eta

            def sym3_hg(hh, gg):
                out = np.einsum("nij,nk->nijk", hh, gg)
                return (
                    out
                    + np.einsum("njk,ni->nijk", hh, gg)
                    + np.einsum("nik,nj->nijk", hh, gg)
                )

            def sym3_vgg(w, gg):
                out = np.einsum("ni,nj,nk->nijk", w, gg, gg)
                return (
                    out
                    + np.einsum("nj,ni,nk->nijk", w, gg, gg)
                    + np.einsum("nk,ni,nj->nijk", w, gg, gg)
                )

            c1 = c[:, None, None, None]
            term1 = t3 / c1
            term2 = (sym3_hg(t3_eta, g) + sym3_hg(h, h_eta)) / c1**2
            ggg = np.einsum("ni,nj,nk->nijk", g, g, g)
            term3 = (
                sym3_vgg(t3_eta2, g)
                + s2[:, None, None, None] * sym3_hg(h, g)
                + 2.0 * sym3_hg(np.einsum("ni,nj->nij", h_eta, h_eta), g)
            ) / c1**3
            term4 = (
                t3_eta3[:, None, None, None] * ggg
                + 3.0 * s2[:, None, None, None] * sym3_vgg(h_eta, g)
            ) / c1**4
            term5 = 3.0 * (s2**2)[:, None, None, None] * ggg / c1**5
            third = term1 - term2 + term3 - term4 + term5
            symmetrize_third(third)
        # note: hess of sym terms built from symmetric pieces; enforce exactly
        hess = 0.5 * (hess + hess.transpose(0, 2, 1))
        return Jet(t, grad, hess, third)


class QuarticGaugeNorm(Norm):
    """Hand-vectorized jets for the quartic family

        gauge(x)^4 = (x^2 + c*y^2 + z^2) * (x^2 + c*y^2) + z^4.

    c = 1 gives the rotationally symmetric example, c = 2 its stretched
    variant.  Equivalent to the expression-backed norm but roughly 5x faster
    in the flow hot path.
    """

    def __init__(self, c: float = 1.0, name: str = "quartic"):
        super().__init__(3, name=name)
        self.c = float(c)

    def gauge_jets(self, pts: np.ndarray, order: int = 2) -> Jet:
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[0]
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        c = self.c
        q = x * x + c * y * y
        s = q + z * z
        p = s * q + z**4
        if np.any(p <= 0.0):
            raise EvalDomainError("quartic gauge evaluated at the origin")
        qs = q + s
        dp = np.empty((n, 3))
        dp[:, 0] = 2.0 * x * qs
        dp[:, 1] = 2.0 * c * y * qs
        dp[:, 2] = 2.0 * z * q + 4.0 * z**3
        # d2p = ds (x) dq + dq (x) ds + q*d2s + s*d2q expanded componentwise
        d2p = np.empty((n, 3, 3))
        d2p[:, 0, 0] = 8.0 * x * x + 2.0 * qs
        d2p[:, 0, 1] = d2p[:, 1, 0] = 8.0 * c * x * y
        d2p[:, 0, 2] = d2p[:, 2, 0] = 4.0 * x * z
        d2p[:, 1, 1] = 8.0 * c * c * y * y + 2.0 * c * qs
        d2p[:, 1, 2] = d2p[:, 2, 1] = 4.0 * c * y * z
        d2p[:, 2, 2] = 2.0 * q + 12.0 * z * z
        # gauge = p^(1/4); derivative factors via val to avoid extra pow calls
        val = np.sqrt(np.sqrt(p))
        a1 = 0.25 * val / p
        a2 = -0.75 * a1 / p
        grad = a1[:, None] * dp
        outer = dp[:, :, None] * dp[:, None, :]
        hess = a1[:, None, None] * d2p + a2[:, None, None] * outer
        third = None
        if order >= 3:
            dq = np.zeros((n, 3))
            dq[:, 0] = 2.0 * x
            dq[:, 1] = 2.0 * c * y
            ds = dq.copy()
            ds[:, 2] = 2.0 * z
            d2q = np.diag([2.0, 2.0 * c, 0.0])
            d2s = np.diag([2.0, 2.0 * c, 2.0])
            d3p = _sym3_hg(
                np.broadcast_to(d2s, (n, 3, 3)), dq
            ) + _sym3_hg(np.broadcast_to(d2q, (n, 3, 3)), ds)
            d3p = np.array(d3p)
            d3p[:, 2, 2, 2] += 24 * z
            a3 = -1.75 * a2 / p
            third = (
                a1[:, None, None, None] * d3p
                + a2[:, None, None, None] * _sym3_hg(d2p, dp)
                + a3[:, None, None, None]
                * np.einsum("ni,nj,nk->nijk", dp, dp, dp)
            )
            symmetrize_third(third)
        symmetrize_hess(hess)
        return Jet(val, grad, hess, third)


# ---------------------------------------------------------------------------
# Builtin norm catalogue

QUARTIC_A2_TEXT = "((x^2+y^2+z^2)*(x^2+y^2)+z^4)^(1/4)"
QUARTIC_A2_PRIME_TEXT = "((x^2+2*y^2+z^2)*(x^2+2*y^2)+z^4)^(1/4)"

NORM_KINDS = (
    "sphere",
    "ellipsoid",
    "quartic_a2",
    "quartic_a2_prime",
    "quartic_a3",
    "custom",
)


def make_norm(
    kind: str,
    params: list[float] | None = None,
    f0_expr: str | None = None,
    dim: int = 3,
) -> Norm:
    """Construct one of the builtin norms or a custom expression norm."""
    params = list(params or [])
    if kind == "sphere":
        return QuadraticNorm(np.eye(dim), name="sphere")
    if kind == "ellipsoid":
        if len(params) != dim:
            raise NormError(f"ellipsoid needs {dim} axis parameters")
        if min(params) <= 0:
            raise NormError("ellipsoid parameters must be positive")
        return QuadraticNorm(np.diag([1.0 / a for a in params]), name="ellipsoid")
    if kind == "quartic_a2":
        return QuarticGaugeNorm(1.0, name="quartic_a2")
    if kind == "quartic_a2_prime":
        return QuarticGaugeNorm(2.0, name="quartic_a2_prime")
    if kind == "quartic_a3":
        if len(params) != 1:
            raise NormError("quartic_a3 needs the shift parameter [z0]")
        z0 = float(params[0])
        if not -1.0 < z0 < 1.0:
            raise NormError("quartic_a3 shift must lie in (-1, 1)")
        base = QuarticGaugeNorm(1.0, name="quartic_a2")
        return ShiftedGaugeNorm(
            base, np.array([0.0, 0.0, -z0]), name=f"quartic_a3(z0={z0})"
        )
    if kind == "custom":
        if not f0_expr:
            raise NormError("custom norm needs f0_expr")
        return ExpressionNorm(expr_mod.parse(f0_expr, dim=dim), name="custom")
    raise NormError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
