"""Smooth cutoff extension of box fields to a larger box, and restriction back.

A field u on Q_alpha = (-alpha, alpha)^3 is extended to a reference box
Q_beta by

    u_ext(x) = psi(x) * u_per(x),

where u_per is the periodic extension of u and psi is a tensor product of
per-axis quintic-smoothstep profiles: psi = 1 on Q_alpha, psi = 0 outside
Q_(alpha+1), with the fade happening on a band of unit width regardless of
alpha.  That fixed band is what makes the derivative bounds of the cutoff
independent of the box size, and with them the extension-operator constants:

    ||u_ext||_L2  <= 27 ||u||_L2
    ||grad u_ext||_L2 <= max(26*M1, 27) ||u||_H1
    ||u_ext||_H2  <= max(27*M2, 52*M1, 27) ||u||_H2

where M1, M2 bound |grad psi| and |hess psi|.  The factor 27 counts the 3^3
neighbouring periodic cells a point of the padded box can pull values from;
the same counting gives the tail comparison

    int_{|x| >= R} |u_ext|^2  <=  27 * int_{x in Q_alpha, |x| >= R} |u|^2

for every R <= alpha - 1, which on shared-spacing lattices is an exact
counting identity, not an estimate (each source lattice point has at most 27
images, each weighted by psi^2 <= 1, and any image of a point with |y| < R
either keeps its coordinates or gains one of size > alpha - 1 >= R).

All grids involved must belong to one shared-spacing family (equal h); the
lattices of such a family coincide where the boxes overlap, so extension and
restriction are pure index arithmetic with no interpolation anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    GridCompatibilityError,
    SupportError,
    UsageError,
)
from .spectral_core import BoxGrid, Field

# Per-axis profile bounds for the quintic smoothstep 6t^5 - 15t^4 + 10t^3:
# max |zeta'| = 15/8 (at mid-band), max |zeta''| = 10/sqrt(3).
AXIS_GRAD_BOUND = 15.0 / 8.0
AXIS_CURV_BOUND = 10.0 / np.sqrt(3.0)

# Whole-cutoff bounds from the tensor-product structure (0 <= zeta <= 1):
# |grad psi|^2 <= 3 max|zeta'|^2, |hess psi|^2 <= 3 max|zeta''|^2 + 6 max|zeta'|^4.
CUTOFF_GRAD_BOUND = float(np.sqrt(3.0) * AXIS_GRAD_BOUND)
CUTOFF_HESS_BOUND = float(
    np.sqrt(3.0 * AXIS_CURV_BOUND**2 + 6.0 * AXIS_GRAD_BOUND**4)
)

# Extension-operator constants (independent of alpha).
EXTENSION_L2_BOUND = 27.0
EXTENSION_GRAD_BOUND = max(26.0 * CUTOFF_GRAD_BOUND, 27.0)
EXTENSION_H2_BOUND = max(27.0 * CUTOFF_HESS_BOUND, 52.0 * CUTOFF_GRAD_BOUND, 27.0)

_LEAK_RTOL = 1e-8


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """The C^2 quintic 6t^5 - 15t^4 + 10t^3 on [0, 1]."""
    return t * t * t * (10.0 + t * (6.0 * t - 15.0))


@dataclass(frozen=True)
class Cutoff:
    """Tensor-product cutoff: 1 on Q_alpha, 0 outside Q_(alpha+1).

    `grad_bound` and `hess_bound` are analytic sup bounds on |grad psi| and
    the Frobenius norm of the Hessian; both are the same for every alpha.
    """

    alpha: float
    grad_bound: float = CUTOFF_GRAD_BOUND
    hess_bound: float = CUTOFF_HESS_BOUND

    def axis_profile(self, s) -> np.ndarray:
        """One axis factor: 1 for |s| <= alpha, smooth fade to 0 by alpha+1."""
        t = np.clip(np.abs(np.asarray(s, dtype=np.float64)) - self.alpha, 0.0, 1.0)
        return 1.0 - _smoothstep(t)

    def sample(self, grid: BoxGrid) -> np.ndarray:
        """psi on the grid lattice, shape (N, N, N)."""
        z = self.axis_profile(grid.x1d)
        return z[:, None, None] * z[None, :, None] * z[None, None, :]


def make_cutoff(alpha: float) -> Cutoff:
    """Cutoff that is 1 on Q_alpha; needs alpha >= 1 so Q_(alpha-1) exists."""
    if not np.isfinite(alpha) or alpha < 1.0:
        raise ConfigurationError(
            f"cutoff needs alpha >= 1, got {alpha!r}"
        )
    return Cutoff(alpha=float(alpha))


def _shared_spacing_offset(src: BoxGrid, dst: BoxGrid) -> int:
    """Index shift aligning two lattices of one shared-spacing family."""
    if abs(src.h - dst.h) > 1e-12 * src.h:
        raise GridCompatibilityError(
            f"grids do not share lattice spacing: h={src.h!r} vs {dst.h!r}"
        )
    # With equal h and even N on both sides the offset is automatically an
    # integer number of cells, so the lattices coincide on the overlap.
    return (dst.N - src.N) // 2


def extend_field(u: Field, target: BoxGrid, cutoff: Cutoff) -> Field:
    """psi * (periodic extension of u), sampled on the target lattice.

    The result equals u exactly on Q_alpha and vanishes outside
    Q_(alpha+1).  Requires the target box to contain the whole fade band:
    beta >= alpha + 1.
    """
    if target.N < u.grid.N:
        raise GridCompatibilityError(
            f"extension target Q_{target.alpha} is smaller than the source "
            f"box Q_{u.grid.alpha}"
        )
    offset = _shared_spacing_offset(u.grid, target)
    if target.alpha < cutoff.alpha + 1.0 - 1e-12:
        raise SupportError(
            f"target box Q_{target.alpha} truncates the cutoff band of "
            f"Q_{cutoff.alpha} (need beta >= alpha + 1)"
        )
    idx = (np.arange(target.N) - offset) % u.grid.N
    ext = u.physical[
        ..., idx[:, None, None], idx[None, :, None], idx[None, None, :]
    ]
    ext = ext * cutoff.sample(target)
    return Field.from_physical(target, ext)


def restrict_field(u: Field, alpha: float, band: float = 1.0) -> tuple[Field, float]:
    """Copy samples onto the Q_alpha sub-lattice and re-enforce zero mean.

    No wrapping is ever performed, so the field must not carry data the
    restriction silently loses.  Samples inside the cutoff band
    Q_(alpha+band) \\ Q_alpha *are* legitimately discardable — they are what
    `extend_field`'s fade writes there, which is how the round trip
    restrict(extend(u), alpha) recovers u exactly.  Anything beyond
    Q_(alpha+band) larger than 1e-8 of the max magnitude is a support
    violation; pass band=0.0 to demand genuine compact support in Q_alpha
    (the right setting when the result feeds a periodic solve).

    Returns the restricted field and the largest per-component mean that was
    subtracted.
    """
    src = u.grid
    n_exact = 2.0 * alpha / src.h
    n_target = int(round(n_exact))
    if abs(n_exact - n_target) > 1e-9:
        raise GridCompatibilityError(
            f"Q_{alpha} is not commensurate with lattice spacing {src.h!r}"
        )
    if n_target > src.N:
        raise UsageError(
            f"restriction target Q_{alpha} exceeds the source box Q_{src.alpha}"
        )
    if band < 0:
        raise UsageError(f"band must be nonnegative, got {band!r}")
    target = BoxGrid(alpha, n_target)
    off = (src.N - n_target) // 2
    sl = slice(off, off + n_target)

    n_keep = min(int(round(2.0 * (alpha + band) / src.h)), src.N)
    off_keep = (src.N - n_keep) // 2
    sk = slice(off_keep, off_keep + n_keep)
    mag = np.abs(u.physical)
    overall = float(mag.max())
    mag[..., sk, sk, sk] = 0.0
    leak = float(mag.max())
    if leak > _LEAK_RTOL * overall:
        raise SupportError(
            f"field leaks outside Q_{alpha + band}: max outside = {leak:.3e} "
            f"vs max overall = {overall:.3e}"
        )

    block = u.physical[..., sl, sl, sl].copy()
    means = block.mean(axis=(-3, -2, -1), keepdims=True)
    block -= means
    return Field.from_physical(target, block), float(np.abs(means).max())


def rehost_compact(f: Field, target: BoxGrid) -> Field:
    """Move a compactly supported field between boxes of one spacing family.

    Pure zero-padding (growing) or cropping (shrinking) of the sample block;
    cropping checks that nothing is cut off.  Unlike `restrict_field` the
    samples are left untouched, so an exactly supported field stays exact.
    """
    offset = _shared_spacing_offset(f.grid, target)
    if target.N == f.grid.N:
        return Field.from_physical(target, f.physical.copy())
    if target.N > f.grid.N:
        shape = f.physical.shape[:-3] + (target.N,) * 3
        out = np.zeros(shape, dtype=np.float64)
        sl = slice(offset, offset + f.grid.N)
        out[..., sl, sl, sl] = f.physical
        return Field.from_physical(target, out)
    off = -offset
    sl = slice(off, off + target.N)
    mag = np.abs(f.physical)
    overall = float(mag.max())
    mag[..., sl, sl, sl] = 0.0
    leak = float(mag.max())
    if leak > _LEAK_RTOL * overall:
        raise SupportError(
            f"cropping to Q_{target.alpha} would discard samples of size "
            f"{leak:.3e} (max overall {overall:.3e})"
        )
    return Field.from_physical(target, f.physical[..., sl, sl, sl].copy())
