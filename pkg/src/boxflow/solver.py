"""Strong-solution time integration of incompressible Navier-Stokes on Q_alpha.

The state marches in spectral space with an integrating-factor RK4: the
viscous semigroup e^{-nu |k|^2 dt} is applied exactly (true |k|^2, Nyquist
included), so only the nonlinear term is under the Runge-Kutta clock.  The
nonlinear term is evaluated pseudo-spectrally in convective form
(u . grad) u (rotational form available as a cross-check), 2/3-dealiased,
Leray-projected, and its zero mode is zeroed — analytically it already
vanishes, and zeroing the roundoff makes momentum conservation bit-exact.

Each audit point records energy, enstrophy, ||Delta u||, max |u|, the
running energy-equality residual, and the pressure-gradient-to-nonlinearity
ratio; `energy_audit` / `enstrophy_audit` replay those series against the
energy equality and the enstrophy differential inequality, and
`existence_time` evaluates the guaranteed-existence horizon
T = 2 / (9 C^4 M^2) for an H^1 bound M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.fft as sfft

from .errors import (
    BlowUpError,
    ConfigurationError,
    DataError,
    StepSizeError,
    UsageError,
)
from .norms import (
    DiagnosticsRecord,
    grad_l2_sq,
    l2_norm,
    lap_l2_sq,
    relative_divergence,
    sobolev_norm,
)
from .spectral_core import BoxGrid, Field

_AXES = (-3, -2, -1)

DIAGNOSTIC_COLUMNS = (
    "t",
    "energy",
    "enstrophy",
    "laplacian_norm",
    "max_u",
    "energy_residual",
    "pressure_ratio",
)


@dataclass(frozen=True)
class SolverConfig:
    """Step size, horizon, and the knobs around one NSE solve.

    `dt` must already respect the advective CFL ceiling for the data being
    run (checked per step against max |u| dt / h <= 0.5); the viscous limit
    needs no ceiling because the semigroup is applied exactly.
    """

    dt: float
    t_end: float
    viscosity: float = 1.0
    dealias: bool = True
    form: str = "convective"  # or "rotational" (agrees after projection)
    snapshot_times: tuple[float, ...] = ()
    audit_every: int = 1
    blowup_max_u: float = 1e6
    blowup_max_enstrophy: float = 1e8

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.t_end) and self.t_end >= 0.0):
            raise ConfigurationError(
                f"t_end must be nonnegative, got {self.t_end!r}"
            )
        if not (np.isfinite(self.viscosity) and self.viscosity > 0.0):
            raise ConfigurationError(
                f"viscosity must be positive, got {self.viscosity!r}"
            )
        if self.form not in ("convective", "rotational"):
            raise ConfigurationError(
                f"form must be 'convective' or 'rotational', got {self.form!r}"
            )
        if int(self.audit_every) != self.audit_every or self.audit_every < 1:
            raise ConfigurationError(
                f"audit_every must be a positive integer, got {self.audit_every!r}"
            )


@dataclass
class Trajectory:
    """Stored states of one solve plus the per-audit diagnostic series.

    `times` are the actual completed-step times of the stored states
    (snapshot requests snap to the nearest step).  Construction re-checks
    the invariants: strictly increasing times, and every state
    divergence-free to 1e-10 relative.
    """

    times: tuple[float, ...]
    states: tuple[Field, ...]
    diagnostics: list[DiagnosticsRecord] = dataclass_field(default_factory=list)
    config: SolverConfig | None = None

    def __post_init__(self):
        if len(self.times) != len(self.states) or not self.states:
            raise UsageError("trajectory needs matching, nonempty times/states")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DataError("trajectory times must be strictly increasing")
        for t, state in zip(self.times, self.states):
            rel = relative_divergence(state)
            if rel > 1e-10:
                raise DataError(
                    f"state at t={t} is not divergence-free: {rel:.3e}"
                )

    @property
    def final(self) -> Field:
        return self.states[-1]


@dataclass(frozen=True)
class ExistenceEstimate:
    """Guaranteed strong-solution horizon from the H^1 size of the data.

    `h1_bound` is M with ||u0||_{H^1}^2 <= M (here: equality), and
    `t_guaranteed` = 2 / (9 c^4 M^2) — quartic in the constant, quadratic
    in the data bound, +inf for zero data.
    """

    h1_bound: float
    t_guaranteed: float
    c_agmon: float


class _StepKernel:
    """Precomputed spectral machinery for repeated steps on one grid."""

    def __init__(self, grid: BoxGrid, cfg: SolverConfig):
        self.grid = grid
        self.cfg = cfg
        self.kx, self.ky, self.kz = grid.k_axes(diff=True)
        with np.errstate(divide="ignore"):
            self.inv_ksq = np.where(grid.ksq_diff > 0.0, 1.0 / grid.ksq_diff, 0.0)
        if cfg.dealias:
            keep = grid.dealias_keep1d
            self.keep3d = (
                keep[:, None, None] & keep[None, :, None] & keep[None, None, :]
            )
        else:
            self.keep3d = None
        self._half_decay = {}  # dt -> e^{-nu |k|^2 dt / 2}

    def half_decay(self, dt: float) -> np.ndarray:
        got = self._half_decay.get(dt)
        if got is None:
            got = np.exp(-0.5 * self.cfg.viscosity * dt * self.grid.ksq)
            self._half_decay[dt] = got
        return got

    def to_physical(self, what: np.ndarray) -> np.ndarray:
        return sfft.ifftn(what, axes=_AXES, norm="forward").real

    def nonlinear_spectral(self, uhat, u_phys=None, form=None) -> np.ndarray:
        """F-hat for F = (u.grad)u (or omega x u), dealiased, unprojected."""
        if u_phys is None:
            u_phys = self.to_physical(uhat)
        if form is None:
            form = self.cfg.form
        if form == "convective":
            f = np.empty_like(u_phys)
            for i in range(3):
                f[i] = (
                    u_phys[0] * self.to_physical(1j * self.kx * uhat[i])
                    + u_phys[1] * self.to_physical(1j * self.ky * uhat[i])
                    + u_phys[2] * self.to_physical(1j * self.kz * uhat[i])
                )
        else:
            w = np.empty_like(u_phys)
            w[0] = self.to_physical(1j * (self.ky * uhat[2] - self.kz * uhat[1]))
            w[1] = self.to_physical(1j * (self.kz * uhat[0] - self.kx * uhat[2]))
            w[2] = self.to_physical(1j * (self.kx * uhat[1] - self.ky * uhat[0]))
            f = np.cross(w, u_phys, axis=0)
        fhat = sfft.fftn(f, axes=_AXES, norm="forward")
        if self.keep3d is not None:
            fhat *= self.keep3d
        return fhat

    def rhs(self, uhat, u_phys=None) -> np.ndarray:
        """Projected, sign-flipped nonlinear term; zero mode exactly zero."""
        fhat = self.nonlinear_spectral(uhat, u_phys)
        div = self.kx * fhat[0] + self.ky * fhat[1] + self.kz * fhat[2]
        div *= self.inv_ksq
        fhat[0] -= self.kx * div
        fhat[1] -= self.ky * div
        fhat[2] -= self.kz * div
        fhat[..., 0, 0, 0] = 0.0
        return -fhat

    def advance(self, uhat, dt: float, u_phys=None) -> np.ndarray:
        """One integrating-factor RK4 step of length dt."""
        e = self.half_decay(dt)
        e2 = e * e
        a = self.rhs(uhat, u_phys)
        b = self.rhs(e * (uhat + (0.5 * dt) * a))
        c = self.rhs(e * uhat + (0.5 * dt) * b)
        d = self.rhs(e2 * uhat + dt * (e * c))
        return e2 * uhat + (dt / 6.0) * (e2 * a + 2.0 * (e * (b + c)) + d)

    def max_speed(self, u_phys) -> float:
        return float(np.sqrt(np.sum(u_phys * u_phys, axis=0)).max())

    def check_cfl(self, umax: float, dt: float) -> None:
        if umax * dt / self.grid.h > 0.5:
            raise StepSizeError(
                f"advective CFL violated: max|u| dt / h = "
                f"{umax * dt / self.grid.h:.3f} > 0.5",
                suggested_dt=0.5 * self.grid.h / umax,
            )

    def pressure_ratio(self, uhat) -> tuple[float, bool]:
        """||grad p|| / ||(u.grad)u||, with the degenerate zero-F flag."""
        # the pressure is defined through the convective product regardless
        # of which form the stepper runs
        fhat = self.nonlinear_spectral(uhat, form="convective")
        f_sq = float(np.sum(np.abs(fhat) ** 2))
        if f_sq == 0.0:
            return 0.0, True
        phat = (
            1j
            * (self.kx * fhat[0] + self.ky * fhat[1] + self.kz * fhat[2])
            * self.inv_ksq
        )
        gp_sq = float(np.sum(self.grid.ksq_diff * np.abs(phat) ** 2))
        return math.sqrt(gp_sq / f_sq), False


def _require_solvable(u: Field) -> None:
    if u.rank != "vector":
        raise UsageError("the solver integrates vector velocity fields")
    coeffs = u.spectral
    if not np.all(np.isfinite(coeffs)):
        raise DataError("velocity field contains non-finite values")
    rel = relative_divergence(u)
    if rel > 1e-10:
        raise DataError(f"velocity is not divergence-free: {rel:.3e}")
    scale = float(np.abs(u.physical).max())
    mean = float(np.abs(u.mean_value()).max())
    if scale > 0.0 and mean > 1e-10 * scale:
        raise DataError(f"velocity carries a mean: {mean:.3e}")


def nse_step(u: Field, cfg: SolverConfig) -> Field:
    """One integrating-factor RK4 step of length cfg.dt."""
    _require_solvable(u)
    kernel = _StepKernel(u.grid, cfg)
    u_phys = u.physical
    kernel.check_cfl(kernel.max_speed(u_phys), cfg.dt)
    out = kernel.advance(u.spectral, cfg.dt, u_phys)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(
            "step produced non-finite values", last_valid_time=0.0
        )
    return Field.from_spectral(u.grid, out)


def _plan_steps(cfg: SolverConfig) -> tuple[list[float], list[float]]:
    """Step lengths and the completed-step times they reach."""
    n_full = int(math.floor(cfg.t_end / cfg.dt + 1e-12))
    remainder = cfg.t_end - n_full * cfg.dt
    lengths = [cfg.dt] * n_full
    times = [cfg.dt * (k + 1) for k in range(n_full)]
    if remainder > 1e-9 * cfg.dt:
        lengths.append(remainder)
        times.append(cfg.t_end)
    elif times:
        times[-1] = cfg.t_end  # absorb roundoff so the horizon is exact
    return lengths, times


def _snapshot_steps(cfg: SolverConfig, step_times: list[float]) -> set[int]:
    """Map requested snapshot times to nearest completed-step indices."""
    all_times = [0.0] + step_times
    wanted = {0, len(step_times)}
    for ts in cfg.snapshot_times:
        k = min(range(len(all_times)), key=lambda i: abs(all_times[i] - ts))
        wanted.add(k)
    return wanted


def nse_solve(u0: Field, cfg: SolverConfig) -> Trajectory:
    """March u0 to t_end, collecting snapshots and per-audit diagnostics.

    Audits happen every `audit_every` steps plus always at t = 0 and the
    final step.  Blow-up (configured thresholds on max |u| and enstrophy,
    or non-finite values) raises with the last valid time attached.
    """
    _require_solvable(u0)
    kernel = _StepKernel(u0.grid, cfg)
    lengths, step_times = _plan_steps(cfg)
    snap_at = _snapshot_steps(cfg, step_times)

    uhat = u0.spectral.copy()
    u_phys = u0.physical.copy()
    times = [0.0]
    states = [Field.from_spectral(u0.grid, uhat.copy())]
    diagnostics: list[DiagnosticsRecord] = []

    integral = 0.0  # running trapezoid of enstrophy over audit times
    last_audit = None  # (t, enstrophy)
    energy0 = None

    def audit(t: float) -> None:
        nonlocal integral, last_audit, energy0
        fu = Field.from_spectral(u0.grid, uhat)
        energy = 0.5 * l2_norm(fu) ** 2
        enstrophy = grad_l2_sq(fu)
        if energy0 is None:
            energy0 = energy
        if last_audit is not None:
            t_prev, ens_prev = last_audit
            integral += 0.5 * (t - t_prev) * (ens_prev + enstrophy)
        last_audit = (t, enstrophy)
        ratio, degenerate = kernel.pressure_ratio(uhat)
        diagnostics.append(
            DiagnosticsRecord(
                time=t,
                entries={
                    "energy": energy,
                    "enstrophy": enstrophy,
                    "laplacian_norm": math.sqrt(lap_l2_sq(fu)),
                    "max_u": kernel.max_speed(u_phys),
                    "energy_residual": energy + integral - energy0,
                    "pressure_ratio": ratio,
                },
                flags={"pressure_degenerate": degenerate},
            )
        )

    audit(0.0)
    t_prev = 0.0
    for step, (dt_k, t_k) in enumerate(zip(lengths, step_times), start=1):
        kernel.check_cfl(kernel.max_speed(u_phys), dt_k)
        uhat = kernel.advance(uhat, dt_k, u_phys)
        if not np.all(np.isfinite(uhat)):
            raise BlowUpError(
                f"non-finite values after t={t_prev}", last_valid_time=t_prev
            )
        u_phys = kernel.to_physical(uhat)
        umax = kernel.max_speed(u_phys)
        fu = Field.from_spectral(u0.grid, uhat)
        if umax > cfg.blowup_max_u or grad_l2_sq(fu) > cfg.blowup_max_enstrophy:
            raise BlowUpError(
                f"blow-up thresholds exceeded at t={t_k}: max|u|={umax:.3e}",
                last_valid_time=t_prev,
            )
        if step % cfg.audit_every == 0 or step == len(lengths):
            audit(t_k)
        if step in snap_at:
            times.append(t_k)
            states.append(Field.from_spectral(u0.grid, uhat.copy()))
        t_prev = t_k

    return Trajectory(
        times=tuple(times),
        states=tuple(states),
        diagnostics=diagnostics,
        config=cfg,
    )


def pressure_solve(u: Field) -> Field:
    """Zero-mean pressure with -Delta p = div[(u.grad)u], solved spectrally.

    The nonlinear term is the same dealiased convective product the solver
    uses, so the recovered pressure is the one the discrete evolution
    implicitly eliminates.
    """
    if u.rank != "vector":
        raise UsageError("pressure solve needs a velocity field")
    cfg = SolverConfig(dt=1.0, t_end=0.0)  # defaults: convective, dealiased
    kernel = _StepKernel(u.grid, cfg)
    fhat = kernel.nonlinear_spectral(u.spectral)
    phat = (
        1j
        * (kernel.kx * fhat[0] + kernel.ky * fhat[1] + kernel.kz * fhat[2])
        * kernel.inv_ksq
    )
    phat[0, 0, 0] = 0.0
    return Field.from_spectral(u.grid, phat)


def write_diagnostics_csv(records, path) -> None:
    """Stream DiagnosticsRecords to CSV with the fixed diagnostic columns.

    Floats are written with repr (shortest round-trip form), so identical
    runs produce byte-identical files.
    """
    lines = [",".join(DIAGNOSTIC_COLUMNS)]
    for rec in records:
        row = [repr(float(rec.time))]
        row += [repr(float(rec.entries[c])) for c in DIAGNOSTIC_COLUMNS[1:]]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def energy_audit(traj: Trajectory, tol: float | None = None) -> list[DiagnosticsRecord]:
    """Replay the energy equality over the audit series.

    For each audit time t, the residual rho(t) = E(t) + int_0^t ||grad u||^2
    - E(0) (trapezoid in time) should sit at quadrature level; rho(t) > tol
    is flagged as a violation of the energy inequality.  Default tol is
    1e-6 E(0).
    """
    if not traj.diagnostics:
        raise UsageError("trajectory carries no audit records")
    e0 = traj.diagnostics[0].entries["energy"]
    if tol is None:
        tol = 1e-6 * e0
    out = []
    integral = 0.0
    prev = None
    for rec in traj.diagnostics:
        ens = rec.entries["enstrophy"]
        if prev is not None:
            t_prev, ens_prev = prev
            integral += 0.5 * (rec.time - t_prev) * (ens_prev + ens)
        prev = (rec.time, ens)
        residual = rec.entries["energy"] + integral - e0
        out.append(
            DiagnosticsRecord(
                time=rec.time,
                entries={
                    "energy": rec.entries["energy"],
                    "dissipation_integral": integral,
                    "residual": residual,
                },
                flags={"violation": residual > tol},
            )
        )
    return out


def enstrophy_audit(traj: Trajectory, c_agmon: float) -> list[DiagnosticsRecord]:
    """Check the enstrophy differential inequality interval by interval.

    Per audit interval, the discrete d/dt ||grad u||^2 plus the mean
    ||Delta u||^2 is compared against (27/16) c^4 ||grad u||^6 (endpoint
    average); `margin` = RHS - LHS should be nonnegative up to quadrature
    noise.  Where 1 - (27/8) c^4 t ||grad u0||^4 stays positive, the
    closed-form enstrophy bound is evaluated too and checked from above.
    """
    if not np.isfinite(c_agmon) or c_agmon <= 0.0:
        raise UsageError(f"constant must be positive, got {c_agmon!r}")
    if len(traj.diagnostics) < 2:
        raise UsageError("enstrophy audit needs at least two audit points")
    c4 = c_agmon**4
    recs = traj.diagnostics
    t0 = recs[0].time
    y0 = recs[0].entries["enstrophy"]
    out = []
    for left, right in zip(recs, recs[1:]):
        dt = right.time - left.time
        ya, yb = left.entries["enstrophy"], right.entries["enstrophy"]
        za = left.entries["laplacian_norm"] ** 2
        zb = right.entries["laplacian_norm"] ** 2
        lhs = (yb - ya) / dt + 0.5 * (za + zb)
        rhs = (27.0 / 16.0) * c4 * 0.5 * (ya**3 + yb**3)
        margin = rhs - lhs
        denom = 1.0 - (27.0 / 8.0) * c4 * (right.time - t0) * y0**2
        applicable = denom > 0.0
        bound = y0 / math.sqrt(denom) if applicable else float("nan")
        out.append(
            DiagnosticsRecord(
                time=0.5 * (left.time + right.time),
                entries={
                    "lhs": lhs,
                    "rhs": rhs,
                    "margin": margin,
                    "enstrophy": yb,
                    "closed_form_bound": bound,
                },
                flags={
                    "violation": margin < -1e-8 * max(abs(lhs), rhs, 1e-300),
                    "bound_applicable": applicable,
                    "bound_violated": applicable and yb > bound * (1.0 + 1e-10),
                },
            )
        )
    return out


def existence_time(u0: Field, c_agmon: float) -> ExistenceEstimate:
    """Guaranteed horizon T = 2 / (9 c^4 M^2) with M = ||u0||_{H^1}^2."""
    if not np.isfinite(c_agmon) or c_agmon <= 0.0:
        raise UsageError(f"constant must be positive, got {c_agmon!r}")
    m = sobolev_norm(u0, 1.0) ** 2
    if m == 0.0:
        return ExistenceEstimate(
            h1_bound=0.0, t_guaranteed=float("inf"), c_agmon=c_agmon
        )
    return ExistenceEstimate(
        h1_bound=m,
        t_guaranteed=2.0 / (9.0 * c_agmon**4 * m**2),
        c_agmon=c_agmon,
    )
