"""Lattice and spectral norms, tail masses, and inequality reports.

Lebesgue norms are plain lattice quadrature with weight h^3 (exact for p = 2
by Parseval).  Sobolev norms are spectral sums,

    homogeneous    ||f||_{Hdot^s}^2 = vol * sum_k |k|^(2s) |fhat_k|^2,
    inhomogeneous  ||f||_{H^s}^2    = vol * sum_k (1 + |k|^2)^s |fhat_k|^2,

with vol = (2 alpha)^3 and the k = 0 term of the homogeneous sum dropped for
s > 0.  When a field arrives without cached coefficients the sums run through
a real-to-complex transform one component at a time, which matters on the
largest reference boxes; both routes agree to machine precision.

The dimensionless ratios reported by `inequality_report`,

    agmon_ratio  = ||u||_inf / (||grad u|| ||lap u||)^(1/2)
    l6_ratio     = ||u||_L6 / ||grad u||
    interp_ratio = ||u||_H1 / (||u||_L2 ||u||_H2)^(1/2)

are invariant under the pure dilation u(x) -> u(x/lambda), so constants
measured on the unit box transfer to any box of the shared-spacing family.
Constants are always measured on concrete fields, never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.fft

from . import spectral_core
from .errors import DataError, UsageError
from .spectral_core import BoxGrid, Field, divergence

_ZERO_MEAN_RTOL = 1e-8


# ---------------------------------------------------------------------------
# Spectral moments
# ---------------------------------------------------------------------------

def _half_grid_weights(grid: BoxGrid, diff: bool):
    """|k|^2 on the rfft half-grid plus the Hermitian multiplicity factors."""
    k = grid.k1d_diff if diff else grid.k1d
    nh = grid.N // 2 + 1
    kz = np.abs(k[:nh])
    if not diff:
        kz[-1] = abs(k[grid.N // 2])  # the +N/2 column mirrors the stored -N/2 row
    ksq = (
        k[:, None, None] ** 2 + k[None, :, None] ** 2 + (kz**2)[None, None, :]
    )
    mult = np.full(nh, 2.0)
    mult[0] = 1.0
    mult[-1] = 1.0
    return ksq, mult


def spectral_moment(f: Field, weight, diff: bool = False) -> float:
    """vol * sum_k weight(|k|^2) |fhat_k|^2, summed over components.

    `weight` maps an array of |k|^2 values to the per-mode weight.  With
    diff=True the Nyquist-zeroed differentiation wavevectors are used, making
    the result consistent with the package's differential operators.
    """
    g = f.grid
    if f.has_spectral:
        ksq = g.ksq_diff if diff else g.ksq
        total = float(np.sum(weight(ksq) * np.abs(f.spectral) ** 2))
        return g.volume * total
    ksq, mult = _half_grid_weights(g, diff)
    w = weight(ksq) * mult[None, None, :]
    comps = f.physical[None] if f.rank == "scalar" else f.physical
    total = 0.0
    for c in comps:
        ch = scipy.fft.rfftn(
            c, norm="forward", workers=spectral_core.get_default_workers()
        )
        total += float(np.sum(w * (ch.real**2 + ch.imag**2)))
    return g.volume * total


def l2_norm(f: Field) -> float:
    """||f||_{L^2} via Parseval (all components)."""
    return float(np.sqrt(spectral_moment(f, lambda ksq: 1.0 + 0.0 * ksq)))


def grad_l2_sq(f: Field) -> float:
    """||grad f||_{L^2}^2 summed over all components and directions."""
    return spectral_moment(f, lambda ksq: ksq, diff=True)


def lap_l2_sq(f: Field) -> float:
    """||lap f||_{L^2}^2 (componentwise Laplacian)."""
    return spectral_moment(f, lambda ksq: ksq**2, diff=True)


def l2_inner(f: Field, g: Field) -> float:
    """Lattice L^2 inner product (components contracted)."""
    if f.grid != g.grid or f.rank != g.rank:
        raise UsageError("inner product needs matching grids and ranks")
    return float(np.sum(f.physical * g.physical) * f.grid.h**3)


# ---------------------------------------------------------------------------
# Public norms
# ---------------------------------------------------------------------------

def lebesgue_norm(f: Field, p: float) -> float:
    """L^p lattice norm of |f|, p in [1, inf]."""
    if not np.isinf(p) and p < 1:
        raise UsageError(f"Lebesgue exponent must satisfy p >= 1, got {p!r}")
    mag = f.magnitude()
    if not np.all(np.isfinite(mag)):
        raise DataError("non-finite field samples")
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * f.grid.h**3) ** (1.0 / p))


def _require_zero_mean(f: Field, context: str) -> None:
    mean = np.atleast_1d(f.mean_value())
    scale = max(float(np.abs(f.physical).max()), 1e-300)
    if np.abs(mean).max() > _ZERO_MEAN_RTOL * scale:
        raise DataError(
            f"{context} requires a zero-mean field "
            f"(relative mean {np.abs(mean).max() / scale:.2e})"
        )


def sobolev_norm(f: Field, s: float, homogeneous: bool = False) -> float:
    """H^s (or homogeneous Hdot^s) norm by spectral sum; fractional s allowed.

    Homogeneous norms require a zero-mean field (the k = 0 mode carries no
    derivative information and would silently vanish otherwise).
    """
    if not np.isfinite(s) or s < 0:
        raise UsageError(f"Sobolev order must satisfy s >= 0, got {s!r}")
    if homogeneous:
        if s > 0:
            _require_zero_mean(f, "homogeneous Sobolev norm")
        return float(np.sqrt(spectral_moment(f, lambda ksq: ksq**s)))
    return float(np.sqrt(spectral_moment(f, lambda ksq: (1.0 + ksq) ** s)))


def tail_mass(f: Field, R: float) -> float:
    """int_{|x| >= R} |f|^2 over the box, lattice quadrature."""
    if R < 0:
        raise UsageError(f"tail radius must be nonnegative, got {R!r}")
    x = f.grid.x1d
    r2 = x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2
    mask = r2 >= R * R
    mag2 = f.magnitude() ** 2
    return float(np.sum(mag2[mask]) * f.grid.h**3)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class NormReport:
    """Named norm/ratio values for one field, CSV-serializable."""

    entries: dict[str, float]
    flags: dict[str, bool] = dataclass_field(default_factory=dict)

    def columns(self) -> list[str]:
        return list(self.entries) + list(self.flags)

    def row(self) -> list:
        return [self.entries[k] for k in self.entries] + [
            int(self.flags[k]) for k in self.flags
        ]


@dataclass
class DiagnosticsRecord:
    """Named norms/ratios/residuals attached to one instant of time."""

    time: float
    entries: dict[str, float]
    flags: dict[str, bool] = dataclass_field(default_factory=dict)


def inequality_report(u: Field, zero_mean: bool = True) -> NormReport:
    """Measure the dimensionless functional-inequality ratios on one field.

    Args:
        u: vector field (conventionally divergence-free, zero-mean).
        zero_mean: verify the zero-mean precondition (disable for fields that
            deliberately carry a mean, e.g. cutoff extensions).

    The zero field is reported with NaN ratios and the `degenerate` flag set.
    """
    if u.rank != "vector":
        raise UsageError("inequality_report expects a vector field")
    if zero_mean:
        _require_zero_mean(u, "inequality_report")
    linf = lebesgue_norm(u, np.inf)
    l2 = l2_norm(u)
    l6 = lebesgue_norm(u, 6)
    grad = np.sqrt(grad_l2_sq(u))
    lap = np.sqrt(lap_l2_sq(u))
    h1 = np.sqrt(l2**2 + grad**2)
    h2 = sobolev_norm(u, 2)
    degenerate = linf == 0.0 or grad == 0.0 or lap == 0.0
    if degenerate:
        agmon = l6r = interp = float("nan")
    else:
        agmon = linf / np.sqrt(grad * lap)
        l6r = l6 / grad
        interp = h1 / np.sqrt(l2 * h2)
    entries = {
        "l2": l2,
        "linf": linf,
        "l6": l6,
        "grad_l2": float(grad),
        "lap_l2": float(lap),
        "h1": float(h1),
        "h2": h2,
        "agmon_ratio": float(agmon),
        "l6_ratio": float(l6r),
        "interp_ratio": float(interp),
    }
    return NormReport(entries=entries, flags={"degenerate": bool(degenerate)})


def relative_divergence(u: Field) -> float:
    """||div u|| / ||grad u||, a dimensionless divergence-freeness measure."""
    grad = np.sqrt(grad_l2_sq(u))
    if grad == 0.0:
        return 0.0
    return l2_norm(divergence(u)) / grad
