"""Coupled time integrator: immersion, tangential correction, modulus.

One step assembles the velocity triple

    dphi/dt   = -grad W + U                (normal descent + tangential)
    dw/dw u   =  2 (I - P~)(-grad W . h0)  (conformality-preserving part)
    dh/dt     =  Re[ P(-grad W . calH0) ]  (Teichmueller motion)

and advances the immersion with a first-order IMEX update whose
implicit part is a constant-coefficient biharmonic drag, diagonal in
the Fourier basis.  The modulus is advanced by explicit Euler (its
stiffness is O(1)).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dbar import TangentField01, dbar_solve
from .geometry import (
    DegenerateImmersion,
    GeometryBundle,
    ImmersionField,
    _dot,
    compute_geometry,
    willmore_energy,
)
from .grid import FlatModulus, Grid
from .moduli import QuadDifferential, modulus_velocity, project_quadratic
from .willmore import WillmoreGradient, willmore_gradient


class StepRejected(RuntimeError):
    """Post-step checks failed; the caller should retry with smaller dt."""


class ReprojectionFailed(RuntimeError):
    def __init__(self, defect: float, message: str = ""):
        self.defect = defect
        super().__init__(message or f"reprojection failed at defect {defect:.3e}")


class RunStatus(enum.Enum):
    COMPLETED = "Completed"
    ENERGY_GUARD = "EnergyGuard"
    DEFECT_GUARD = "DefectGuard"
    MODULUS_GUARD = "ModulusGuard"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class FlowState:
    """Immersion plus flow time; the modulus lives on the grid."""

    immersion: ImmersionField
    t: float = 0.0
    step_count: int = 0

    @property
    def grid(self) -> Grid:
        return self.immersion.grid

    @property
    def modulus(self) -> FlatModulus:
        return self.immersion.grid.modulus

    @property
    def phi(self) -> np.ndarray:
        return self.immersion.phi


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters; see the README for the config-file schema."""

    t_end: float = 0.1
    dt_policy: str = "cfl"  # "fixed" or "cfl"
    dt: float = 1e-4  # used by the fixed policy
    lambda_cfl: float = 0.5
    kappa: float = 1.0  # implicit drag strength
    tangential: bool = True  # the parametric flow's defining term
    reproject_every: int = 0  # 0 = never
    record_every: int = 1
    max_steps: int = 1_000_000
    max_retries: int = 20
    tol_energy: float = 1e-8  # relative per-step increase tolerance
    guard_defect: float = 0.1
    guard_b: float = 0.05  # b must stay in [guard_b, 1/guard_b]
    beta: float = 8.0 * math.pi / 3.0  # concentration guard level
    guard_R: float = 0.0  # 0 = use l_star/4 at record time
    concentration_guard: bool = False

    def __post_init__(self) -> None:
        if self.dt_policy not in ("fixed", "cfl"):
            raise ValueError("dt_policy must be 'fixed' or 'cfl'")
        if self.lambda_cfl <= 0:
            raise ValueError("lambda_cfl must be positive")
        if not 0.0 < self.beta <= 8.0 * math.pi / 3.0 + 1e-12:
            raise ValueError("beta must lie in (0, 8*pi/3]")


@dataclass(frozen=True)
class Velocity:
    """Assembled right-hand side of the coupled system at one state."""

    dphi_dt: np.ndarray
    u01: TangentField01
    qdot: QuadDifferential
    da_dt: float
    db_dt: float
    bundle: GeometryBundle
    gradient: WillmoreGradient

    @property
    def tangential_field(self) -> np.ndarray:
        return self.u01.pushforward(self.bundle.dphi_w)


def assemble_velocity(
    state: FlowState,
    bundle: GeometryBundle | None = None,
    tangential: bool = True,
) -> Velocity:
    """Build (dphi/dt, u, dh/dt) from the current state.

    The pairing field is psi = V . h0 with V = -grad W the normal
    descent velocity and h0 = H0/2 the Weingarten coefficient; its
    holomorphic projection (grid mean) drives the modulus through
    calH0 = h0 / (2 b), and the mean-free part, doubled, sources the
    dbar problem for the tangential correction.
    """
    grid = state.grid
    if bundle is None:
        bundle = compute_geometry(state.immersion)
    gw = willmore_gradient(bundle)
    # The gradient is analytically normal only in exact conformal gauge;
    # projecting removes the O(defect) tangential leakage that would
    # otherwise feed spurious forcing into the pairing fields.
    v_normal = -bundle.project_normal(gw.delta_w)

    h0c = 0.5 * bundle.H0
    psi = grid.dealias(_dot(v_normal.astype(np.complex128), h0c))
    q, fluct = project_quadratic(psi / (2.0 * grid.modulus.b), grid.modulus)
    da_dt, db_dt = modulus_velocity(q, grid.modulus)

    if tangential:
        F = 2.0 * (psi - psi.mean())
        u01 = dbar_solve(grid, F)
        dphi_dt = v_normal + u01.pushforward(bundle.dphi_w)
    else:
        u01 = TangentField01(grid, np.zeros_like(psi))
        dphi_dt = v_normal
    return Velocity(
        dphi_dt=dphi_dt,
        u01=u01,
        qdot=q,
        da_dt=da_dt,
        db_dt=db_dt,
        bundle=bundle,
        gradient=gw,
    )


def _imex_advance(
    state: FlowState, vel: Velocity, dt: float, kappa: float
) -> FlowState:
    """One IMEX update of the immersion and explicit update of the modulus.

    In Fourier space the update is phi += dt * vel / (1 + dt*kappa*L)
    with L the flat-chart bi-Laplacian scaled by the spatial median of
    4 e^{-4 lam}; a zero velocity therefore reproduces the state exactly.
    """
    grid = state.grid
    scale = float(np.median(4.0 * np.exp(-4.0 * vel.bundle.lam)))
    L = kappa * scale * grid.lap_symbol**2
    vel_hat = grid.fft(vel.dphi_dt)
    vel_hat /= (1.0 + dt * L)[:, :, None]
    phi_new = state.phi + dt * np.real(grid.ifft(vel_hat))

    mod = grid.modulus
    new_mod = FlatModulus(mod.a + dt * vel.da_dt, mod.b + dt * vel.db_dt)
    new_grid = Grid(grid.N, new_mod)
    return FlowState(
        immersion=ImmersionField(new_grid, phi_new),
        t=state.t + dt,
        step_count=state.step_count + 1,
    )


def step(
    state: FlowState,
    vel: Velocity,
    dt: float,
    config: FlowConfig,
    w_before: float | None = None,
) -> tuple[FlowState, GeometryBundle, float]:
    """Advance one accepted step or raise :class:`StepRejected`.

    Rejection triggers on a degenerate post-step immersion or on an
    energy increase beyond ``tol_energy`` relative.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if w_before is None:
        w_before = willmore_energy(vel.bundle)
    new_state = _imex_advance(state, vel, dt, config.kappa)
    try:
        new_bundle = compute_geometry(new_state.immersion)
    except DegenerateImmersion as exc:
        raise StepRejected(f"degenerate immersion after step: {exc}") from exc
    w_after = willmore_energy(new_bundle)
    if w_after > w_before * (1.0 + config.tol_energy):
        raise StepRejected(
            f"energy increased: {w_before:.12e} -> {w_after:.12e}"
        )
    return new_state, new_bundle, w_after


def cfl_dt(bundle: GeometryBundle, config: FlowConfig) -> float:
    """Quartic step bound from the finest surface-metric grid spacing."""
    grid = bundle.grid
    h_g = math.exp(float(np.min(bundle.lam))) * min(1.0, grid.modulus.b) / grid.N
    return config.lambda_cfl * h_g**4


def reproject_conformal(
    state: FlowState,
    target_factor: float = 10.0,
    max_iter: int = 40,
    tol_energy: float = 1e-8,
    target_defect: float | None = None,
    strict: bool = True,
) -> FlowState:
    """Restore conformal gauge by a torus diffeomorphism and a tau shift.

    A damped fixed point on the parametrization Beltrami field
    -Q e^{-2 lam}: the mean-free part is integrated to a displacement
    (composition with a near-identity diffeomorphism); the mean is a
    Teichmueller obstruction removed by a Newton update of (a, b).
    The image surface is untouched up to interpolation error.

    Raises
    ------
    ReprojectionFailed
        If the starting defect exceeds 0.1, or the iteration cannot
        reduce the defect by ``target_factor`` (suppressed for
        ``strict=False``, which returns the best state reached), or
        the energy drifts by more than ``tol_energy`` relative.
    """
    bundle = compute_geometry(state.immersion)
    defect0 = bundle.defect_sup
    if defect0 > 0.1:
        raise ReprojectionFailed(defect0, "defect too large to reparametrize")
    w0 = willmore_energy(bundle)
    if target_defect is not None:
        target = max(target_defect, 1e-14)
    else:
        target = max(defect0 / target_factor, 1e-14)

    def mean_beltrami(bnd: GeometryBundle) -> complex:
        return complex((bnd.Q * np.exp(-2.0 * bnd.lam)).mean())

    # The diffeomorphism is represented as one accumulated displacement
    # field applied to the pristine input samples, so interpolation
    # error does not compound across passes.
    phi0 = state.immersion.phi
    grid0 = state.grid
    N = grid0.N
    disp1 = np.zeros((N, N))
    disp2 = np.zeros((N, N))
    imm = state.immersion
    prev_defect = np.inf
    for _ in range(max_iter):
        if bundle.defect_sup <= target:
            break
        grid = imm.grid
        mod = grid.modulus

        # Constant part of the defect is a Teichmueller obstruction:
        # Newton step on (a, b) against the mean Beltrami field.
        q_mean = mean_beltrami(bundle)
        if abs(q_mean) > max(0.25 * target, 1e-15):
            eps = 1e-6 * max(1.0, abs(mod.tau))
            jac = np.empty((2, 2))
            for col, trial in enumerate(
                (FlatModulus(mod.a + eps, mod.b), FlatModulus(mod.a, mod.b + eps))
            ):
                btry = compute_geometry(
                    ImmersionField(Grid(N, trial), imm.phi)
                )
                dq = (mean_beltrami(btry) - q_mean) / eps
                jac[0, col], jac[1, col] = dq.real, dq.imag
            try:
                dab = np.linalg.solve(jac, -np.array([q_mean.real, q_mean.imag]))
            except np.linalg.LinAlgError:
                dab = np.zeros(2)
            mod = FlatModulus(mod.a + float(dab[0]), mod.b + float(dab[1]))
            grid = Grid(N, mod)
            imm = ImmersionField(grid, imm.phi)
            bundle = compute_geometry(imm)
            if bundle.defect_sup <= target:
                break

        # Fluctuating part: displacement v with d/dw conj(v) = -(Q e^{-2 lam})',
        # accumulated into the total diffeomorphism.
        rho = -bundle.Q * np.exp(-2.0 * bundle.lam)
        rho = rho - rho.mean()
        v = np.conj(grid.solve_dw(rho))
        dx2 = np.imag(v) / mod.b
        dx1 = np.real(v) - mod.a * dx2
        max_disp = float(np.max(np.hypot(dx1, dx2)))
        damp = min(1.0, 1.0 / (N * max_disp + 1e-300))
        disp1 += damp * dx1
        disp2 += damp * dx2
        pts = np.stack(
            [(grid0.x1 + disp1).ravel(), (grid0.x2 + disp2).ravel()], axis=-1
        )
        phi_new = grid0.evaluate(phi0, pts).reshape(phi0.shape)
        imm = ImmersionField(grid, phi_new)
        new_bundle = compute_geometry(imm)
        if (
            new_bundle.defect_sup >= 0.97 * prev_defect
            and abs(q_mean) <= max(0.25 * target, 1e-15)
        ):
            bundle = new_bundle
            break
        prev_defect = new_bundle.defect_sup
        bundle = new_bundle

    if strict and bundle.defect_sup > target:
        raise ReprojectionFailed(
            bundle.defect_sup,
            f"could not reach target defect {target:.3e}",
        )
    w1 = willmore_energy(bundle)
    if strict and abs(w1 - w0) > tol_energy * abs(w0):
        raise ReprojectionFailed(
            bundle.defect_sup,
            f"energy drifted under reparametrization: {w0!r} -> {w1!r}",
        )
    return FlowState(immersion=imm, t=state.t, step_count=state.step_count)


@dataclass
class RunResult:
    status: RunStatus
    final: FlowState
    records: list = field(default_factory=list)
    message: str = ""


def run(
    config: FlowConfig,
    initial: FlowState,
    recorder=None,
    snapshot_cb=None,
) -> RunResult:
    """Drive the flow to ``t_end`` with step-size control and guards.

    ``recorder(state, vel, bundle, extras) -> record`` is called every
    ``record_every`` accepted steps (defaults to the diagnostics
    module's aggregator); ``snapshot_cb(state)`` at the same cadence.
    Math failures end the run with a terminal status, never an
    exception.
    """
    from . import diagnostics as _diag

    if recorder is None:
        recorder = _diag.record

    records: list = []
    state = initial
    bundle = compute_geometry(state.immersion)
    w_now = willmore_energy(bundle)

    def emit(vel: Velocity, extras: dict) -> None:
        records.append(recorder(state, vel, bundle, extras))
        if snapshot_cb is not None:
            snapshot_cb(state)

    steps_done = 0
    while state.t < config.t_end - 1e-15 and steps_done < config.max_steps:
        vel = assemble_velocity(state, bundle=bundle, tangential=config.tangential)
        if config.dt_policy == "fixed":
            dt = min(config.dt, config.t_end - state.t)
        else:
            dt = min(cfl_dt(bundle, config), config.t_end - state.t)

        retries = 0
        while True:
            try:
                new_state, new_bundle, w_new = step(
                    state, vel, dt, config, w_before=w_now
                )
                break
            except StepRejected as exc:
                retries += 1
                if retries > config.max_retries:
                    emit(vel, {"dt": dt, "retries": retries})
                    return RunResult(
                        RunStatus.STEP_FAILURE, state, records, str(exc)
                    )
                dt *= 0.5

        state, bundle, w_now = new_state, new_bundle, w_new
        steps_done += 1

        if config.reproject_every and state.step_count % config.reproject_every == 0:
            try:
                state = reproject_conformal(state)
                bundle = compute_geometry(state.immersion)
                w_now = willmore_energy(bundle)
            except ReprojectionFailed as exc:
                return RunResult(
                    RunStatus.DEFECT_GUARD, state, records, str(exc)
                )

        if steps_done % config.record_every == 0 or state.t >= config.t_end - 1e-15:
            extras: dict = {"dt": dt, "retries": retries}
            if config.concentration_guard:
                from .moduli import concentration

                R = config.guard_R or state.modulus.l_star / 4.0
                cmap = concentration(bundle, state.modulus, 2.0 * R, stride=8)
                extras["E_sup_2R"] = cmap.sup_value
                if cmap.sup_value >= config.beta:
                    emit(vel, extras)
                    return RunResult(
                        RunStatus.ENERGY_GUARD,
                        state,
                        records,
                        f"E(2R) = {cmap.sup_value:.6f} >= beta",
                    )
            emit(vel, extras)

        if bundle.defect_sup > config.guard_defect:
            return RunResult(
                RunStatus.DEFECT_GUARD,
                state,
                records,
                f"conformality defect {bundle.defect_sup:.3e}",
            )
        b = state.modulus.b
        if not (config.guard_b <= b <= 1.0 / config.guard_b):
            return RunResult(
                RunStatus.MODULUS_GUARD, state, records, f"b = {b:.6f}"
            )

    return RunResult(RunStatus.COMPLETED, state, records)
