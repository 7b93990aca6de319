"""Explicit time stepping of the graph flow with the oblique boundary solve.

The scalar unknown is phi = log(radius) on the half-sphere lattice.  Each
step evaluates the geometry bundle, forms the speed, filters the
high-azimuthal modes near the pole (standard lat-long stiffness control),
advances phi by forward Euler under a diffusion-scaled CFL limit, and
re-solves the ghost layer so the contact-angle relation holds at the
boundary ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .norms import Norm
from .surface import (
    GeometryBundle,
    GraphSurface,
    HalfSphereGrid,
    SliceSupportTable,
    boundary_capillarity_residual,
    capillary_area,
    enclosed_volume,
    export_obj,
    geometry,
    minkowski_residual,
    quermassintegral_boundary,
    quermassintegral_interior,
)
from .wulff import AnchorVector, CapillaryWulffShape, TranslatedNorm, anchor_vector


class FlowError(RuntimeError):
    pass


class BlowUpError(FlowError):
    """Non-finite state or runaway amplitude during stepping."""


@dataclass
class FlowConfig:
    norm: Norm
    omega0: float
    n_beta: int = 64
    n_lambda: int = 128
    cfl_sigma: float = 0.4
    t_end: float = 10.0
    convergence_tol: float = 1e-2
    boundary_tol: float = 1e-8
    record_every: int = 25
    snapshot_every: int = 0
    epsilon: float = 0.1
    seed: int = 42
    initial: str = "perturbed-cap"
    dt_override: float | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if not 0.0 < self.cfl_sigma < 1.0:
            raise FlowError("cfl_sigma must lie in (0, 1)")
        if self.n_beta < 16 or self.n_lambda < 16:
            raise FlowError("grid sizes must be at least 16")


TRACE_COLUMNS = (
    "t", "dt", "V0", "V1_boundary", "V1_interior", "V2_interior", "supF",
    "min_kappaF", "min_ubar", "mink_res_k0", "mink_res_k1",
    "rate_err_k0", "rate_err_k1",
)


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    blow_up: bool = False
    r0: float = float("nan")
    radial_deviation: float = float("nan")
    barrier_r1: float = float("nan")
    barrier_r2: float = float("nan")
    barrier_violation: float = 0.0
    min_ubar_initial: float = float("nan")
    min_ubar_drop: float = 0.0
    v1_increase: float = 0.0
    steps: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def to_csv(self, path: str) -> None:
        errs = rate_checks(self)
        lines = [",".join(TRACE_COLUMNS)]
        for i, r in enumerate(self.records):
            row = dict(r)
            row["rate_err_k0"] = errs["err_k0"][i]
            row["rate_err_k1"] = errs["err_k1"][i]
            lines.append(",".join(f"{row[c]:.12g}" for c in TRACE_COLUMNS))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def speed_field(bundle: GeometryBundle) -> np.ndarray:
    """Normal speed of the volume-preserving flow at the geometry nodes."""
    return bundle.f


def perturbation_field(grid: HalfSphereGrid, epsilon: float, seed: int) -> np.ndarray:
    """Low-harmonic radial perturbation vanishing to second order at the rim.

    Returns the multiplicative factor (1 + epsilon * P) on the full node
    lattice (rows 0..n_beta), max |P| = 1.
    """
    rng = np.random.default_rng(seed)
    b = grid.betas[:, None]
    l = grid.lambdas[None, :]
    p = np.zeros((grid.n_beta + 1, grid.n_lambda))
    for m in range(4):
        amp_c, amp_s = rng.uniform(-1.0, 1.0, size=2)
        # m-fold modes must vanish like sin(beta)^m at the pole for smoothness
        radial = np.sin(b) ** m if m > 0 else 1.0
        p += radial * (amp_c * np.cos(m * l) + amp_s * np.sin(m * l))
    p *= np.cos(b) ** 2
    p /= np.abs(p).max()
    return 1.0 + epsilon * p


def initial_surface(config: FlowConfig, anchor: AnchorVector) -> GraphSurface:
    grid = HalfSphereGrid(2, config.n_beta, config.n_lambda)
    shape = CapillaryWulffShape(config.norm, 1.0, config.omega0, anchor)
    surf = GraphSurface.from_wulff(grid, shape)
    if config.initial == "cap":
        return surf
    if config.initial == "perturbed-cap":
        factor = perturbation_field(grid, config.epsilon, config.seed)
        surf.phi[: grid.n_beta + 1] += np.log(factor)
        boundary_enforce(surf, config.norm, config.omega0, config.boundary_tol)
        return surf
    raise FlowError(f"unknown initial preset {config.initial!r}")


def boundary_enforce(
    surface: GraphSurface,
    norm: Norm,
    omega0: float,
    tol: float = 1e-8,
    max_iter: int = 50,
    warm_state: dict | None = None,
) -> float:
    """Solve the ghost row so the contact relation holds at the boundary ring.

    The unknown is the ghost value entering the centered beta-derivative at
    beta = pi/2.  Newton on <Psi(nu), -E_up> = omega0, which is monotone in
    the ghost unknown because the support Hessian is positive on tangent
    directions.  Returns the final max residual.
    """
    grid = surface.grid
    if grid.n != 2:
        raise FlowError("boundary enforcement is for n = 2")
    nb = grid.n_beta
    db, dl = grid.dbeta, grid.dlam
    lam = grid.lambdas
    row = surface.phi[nb]
    inner = surface.phi[nb - 1]
    p_l = (np.roll(row, -1) - np.roll(row, 1)) / (2 * dl)
    u = np.stack([np.cos(lam), np.sin(lam), np.zeros_like(lam)], axis=1)
    e2 = np.stack([-np.sin(lam), np.cos(lam), np.zeros_like(lam)], axis=1)
    horizontal = u - p_l[:, None] * e2
    ghost = surface.phi[nb + 1].copy()
    z_warm = warm_state.get("z") if warm_state else None
    res = np.inf
    for it in range(max_iter):
        p_b = (ghost - inner) / (2 * db)
        w = horizontal.copy()
        w[:, 2] = p_b
        f_val, z, _, ok, jets = norm.support_many(
            w, z0=z_warm, tol=min(tol, 1e-10), return_jets=True
        )
        if not np.all(ok):
            bad = int(np.argmax(~ok))
            raise FlowError(f"boundary dual solve failed at node {bad}")
        z_warm = z
        psi = -z[:, 2] - omega0
        res = float(np.abs(psi).max())
        if res <= tol:
            break
        # d psi / d ghost through the support Hessian acting on E_up
        hess = norm.support_hessian_many(w, maximizers=z, jets=jets)
        dpsi = -hess[:, 2, 2] / (2 * db)
        if np.any(dpsi == 0.0):
            raise FlowError("degenerate boundary Newton derivative")
        ghost = ghost - psi / dpsi
    else:
        raise FlowError(
            f"boundary Newton did not reach {tol} (residual {res:.3e})"
        )
    surface.phi[nb + 1] = ghost
    if warm_state is not None:
        warm_state["z"] = z_warm
    return res


def polar_filter(rhs: np.ndarray, grid: HalfSphereGrid) -> np.ndarray:
    """Damp unresolvable azimuthal modes on the rings next to the pole.

    On rings where the physical azimuthal spacing sin(beta)*dlam drops below
    dbeta, modes with wavelength shorter than ~2*dbeta are zeroed.  This is
    the standard spectral fix for the lat-long time-step restriction; it
    leaves resolved content untouched.
    """
    nb, nl = grid.n_beta, grid.n_lambda
    sin_b = np.sin(grid.betas[1:])
    cutoff_rows = np.nonzero(sin_b * grid.dlam < grid.dbeta)[0]
    if cutoff_rows.size == 0:
        return rhs
    spec = np.fft.rfft(rhs[cutoff_rows], axis=1)
    m = np.arange(spec.shape[1])
    for idx, i in enumerate(cutoff_rows):
        m_max = max(2, int(np.pi * sin_b[i] / grid.dbeta))
        spec[idx, m > m_max] = 0.0
    rhs = rhs.copy()
    rhs[cutoff_rows] = np.fft.irfft(spec, nl, axis=1)
    return rhs


def cfl_dt(grid: HalfSphereGrid, diffusion_max: float, cfl_sigma: float) -> float:
    """Euler step bound: sigma * h_min^2 / (2 n D_max) with h_min = dbeta.

    The polar filter guarantees the finest resolved wavelength is ~dbeta in
    both directions, so dbeta is the correct h_min despite sin(beta)*dlam
    being smaller near the pole.
    """
    return cfl_sigma * grid.dbeta**2 / (2.0 * grid.n * diffusion_max)


def step(
    surface: GraphSurface,
    norm: Norm,
    omega0: float,
    anchor: AnchorVector,
    cfl_sigma: float = 0.4,
    bundle: GeometryBundle | None = None,
    dt: float | None = None,
    boundary_tol: float = 1e-8,
) -> tuple[GraphSurface, float, GeometryBundle]:
    """One forward-Euler step; returns the advanced surface and its bundle."""
    if bundle is None:
        bundle = geometry(surface, norm, omega0, anchor)
    grid = surface.grid
    if dt is None:
        dt = cfl_dt(grid, bundle.diffusion_max, cfl_sigma)
    if dt < 1e-12:
        raise FlowError("time step underflow")
    new = surface.copy()
    _advance(new, bundle, dt)
    boundary_enforce(new, norm, omega0, boundary_tol)
    new.time = surface.time + dt
    bundle_new = geometry(
        new, norm, omega0, anchor, warm=bundle.maximizers, dual_tol=1e-9
    )
    return new, dt, bundle_new


def _advance(surface: GraphSurface, bundle: GeometryBundle, dt: float) -> None:
    grid = surface.grid
    nb = grid.n_beta
    rhs = (bundle.v * bundle.F * bundle.f / bundle.rho).reshape(bundle.shape)
    rhs = polar_filter(rhs, grid)
    means = rhs.mean(axis=1)
    pole_rhs = (4.0 * means[0] - means[1]) / 3.0
    surface.phi[1 : nb + 1] += dt * rhs
    surface.phi[0] += dt * pole_rhs
    if np.abs(surface.phi).max() > 20.0 or not np.all(np.isfinite(surface.phi)):
        raise BlowUpError("phi out of range")


def _radial_ratio(
    surface: GraphSurface,
    unit_shape: CapillaryWulffShape,
    base: np.ndarray | None = None,
) -> np.ndarray:
    grid = surface.grid
    if base is None:
        dirs = grid.directions().reshape(-1, 3)
        base = unit_shape.radial_many(dirs).reshape(grid.n_beta + 1, grid.n_lambda)
    return np.exp(surface.phi[: grid.n_beta + 1]) / base


def run(config: FlowConfig):
    """Run the flow to convergence or t_end; returns (trace, final surface).

    Convergence means sup|f| below config.convergence_tol.  The trace
    records the quermassintegrals, residuals, and monitor values every
    record_every steps plus the final state.
    """
    norm, omega0 = config.norm, config.omega0
    anchor = anchor_vector(norm, omega0)
    surface = initial_surface(config, anchor)
    grid = surface.grid
    unit_shape = CapillaryWulffShape(norm, 1.0, omega0, anchor)
    unit_radial = unit_shape.radial_many(
        grid.directions().reshape(-1, 3)
    ).reshape(grid.n_beta + 1, grid.n_lambda)
    table = SliceSupportTable(TranslatedNorm(norm, omega0, anchor))
    trace = FlowTrace()

    # containment barriers from the initial data
    f0_vals = norm.f0_many(
        np.exp(surface.phi[: grid.n_beta + 1]).reshape(-1, 1)
        * grid.directions().reshape(-1, 3)
        / 1.0
    )
    e_f = anchor.e_f
    c3, c4 = float(f0_vals.min()), float(f0_vals.max())
    f0_plus = norm.f0(omega0 * e_f) if omega0 != 0.0 else 0.0
    f0_minus = norm.f0(-omega0 * e_f) if omega0 != 0.0 else 0.0
    trace.barrier_r1 = c3 / (2.0 * (1.0 + f0_plus))
    trace.barrier_r2 = 2.0 * c4 / (1.0 - f0_minus)

    bundle = geometry(surface, norm, omega0, anchor)
    trace.min_ubar_initial = float(bundle.u_bar.min())
    v0_unit = enclosed_volume(
        geometry(GraphSurface.from_wulff(grid, unit_shape), norm, omega0, anchor)
    )
    dt = cfl_dt(grid, bundle.diffusion_max, config.cfl_sigma)
    if config.dt_override is not None:
        dt = config.dt_override
    prev_v1 = None

    def record(b, used_dt):
        nonlocal prev_v1
        v1b = capillary_area(b)
        v1i = quermassintegral_interior(b, 0)
        rec = {
            "t": b.surface.time,
            "dt": used_dt,
            "V0": enclosed_volume(b),
            "V1_boundary": v1b,
            "V1_interior": v1i,
            "V2_interior": quermassintegral_interior(b, 1),
            "V2_boundary": quermassintegral_boundary(b, 1, table),
            "supF": float(np.abs(b.f).max()),
            "min_kappaF": float(b.kappaF.min()),
            "min_ubar": float(b.u_bar.min()),
            "mink_res_k0": minkowski_residual(b, 0),
            "mink_res_k1": minkowski_residual(b, 1),
            "bc_residual": boundary_capillarity_residual(b),
            "rate_err_k0": 0.0,
            "rate_err_k1": 0.0,
            # instantaneous rate integrals for the post-hoc comparisons
            "rate_V1": -grid.n / ((grid.n + 1) * (grid.n - 1))
            * b.quad(b.trace_free_sq() * b.u_hat * b.F * b.area_el),
            "rate_V2": (grid.n - 1) / (grid.n + 1)
            * b.quad(b.f * b.Hk[:, 2] * b.F * b.area_el),
            "rate_V1_speed": grid.n / (grid.n + 1)
            * b.quad(b.f * b.Hk[:, 1] * b.F * b.area_el),
            "steps": trace.steps,
        }
        ratio = _radial_ratio(b.surface, unit_shape, base=unit_radial)
        rec["ratio_min"] = float(ratio.min())
        rec["ratio_max"] = float(ratio.max())
        trace.barrier_violation = max(
            trace.barrier_violation,
            max(trace.barrier_r1 - rec["ratio_min"], 0.0),
            max(rec["ratio_max"] - trace.barrier_r2, 0.0),
        )
        trace.min_ubar_drop = max(
            trace.min_ubar_drop, trace.min_ubar_initial - rec["min_ubar"]
        )
        if prev_v1 is not None:
            steps_between = max(trace.steps - prev_v1[1], 1)
            slack = 1e-6 * abs(v1b) * steps_between
            trace.v1_increase = max(trace.v1_increase, v1b - prev_v1[0] - slack)
        prev_v1 = (v1b, trace.steps)
        trace.records.append(rec)
        if config.snapshot_every and config.output_dir:
            if trace.steps % config.snapshot_every == 0:
                export_obj(
                    b.surface, f"{config.output_dir}/snap_{trace.steps}.obj"
                )

    record(bundle, dt)
    bc_warm: dict = {}
    try:
        while surface.time < config.t_end:
            if float(np.abs(bundle.f).max()) <= config.convergence_tol:
                trace.converged = True
                break
            new = surface.copy()
            _advance(new, bundle, dt)
            boundary_enforce(new, norm, omega0, config.boundary_tol, warm_state=bc_warm)
            new.time = surface.time + dt
            bundle = geometry(
                new, norm, omega0, anchor, warm=bundle.maximizers, dual_tol=1e-9
            )
            surface = new
            trace.steps += 1
            if trace.steps % 20 == 0 and config.dt_override is None:
                dt = cfl_dt(grid, bundle.diffusion_max, config.cfl_sigma)
            if dt < 1e-12:
                raise FlowError("time step underflow")
            if trace.steps % config.record_every == 0:
                record(bundle, dt)
    except FlowError:
        # any stepping failure (runaway amplitude, degenerate boundary solve,
        # dt underflow) ends the run with the partial trace intact
        trace.blow_up = True
        return trace, surface
    if trace.records and trace.records[-1]["steps"] != trace.steps:
        record(bundle, dt)
    # convergence fit: radius from volume, deviation along grid rays
    v0 = trace.records[-1]["V0"]
    trace.r0 = (v0 / v0_unit) ** (1.0 / (grid.n + 1))
    ratio = _radial_ratio(surface, unit_shape, base=unit_radial)
    trace.radial_deviation = float(np.abs(ratio - trace.r0).max())
    return trace, surface


def rate_checks(trace: FlowTrace) -> dict:
    """Centered-difference quermassintegral rates vs the integral formulas.

    err_k0 compares dV1/dt against the trace-free curvature integral, err_k1
    compares dV2/dt against the speed-weighted curvature integral.  Ends use
    one-sided differences.
    """
    recs = trace.records
    m = len(recs)
    err0 = np.zeros(m)
    err1 = np.zeros(m)
    abs0 = np.zeros(m)
    abs1 = np.zeros(m)
    if m < 3:
        return {"err_k0": err0, "err_k1": err1, "abs_k0": abs0, "abs_k1": abs1}
    t = np.array([r["t"] for r in recs])
    v1 = np.array([r["V1_boundary"] for r in recs])
    v2 = np.array([r["V2_interior"] for r in recs])
    dv1 = np.gradient(v1, t)
    dv2 = np.gradient(v2, t)
    for i in range(m):
        r1, r2 = recs[i]["rate_V1"], recs[i]["rate_V2"]
        abs0[i] = abs(dv1[i] - r1)
        abs1[i] = abs(dv2[i] - r2)
        err0[i] = abs0[i] / max(abs(r1), 1e-12)
        err1[i] = abs1[i] / max(abs(r2), 1e-12)
    return {"err_k0": err0, "err_k1": err1, "abs_k0": abs0, "abs_k1": abs1}
