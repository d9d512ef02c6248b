"""Shared fixtures and field generators for the test suite."""

import numpy as np
import pytest

from boxflow.spectral_core import BoxGrid, Field, leray_project


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def white_field(grid: BoxGrid, rng, rank="scalar") -> Field:
    """Unfiltered white-noise samples (rough; fine for transform tests)."""
    shape = (grid.N,) * 3 if rank == "scalar" else (3,) + (grid.N,) * 3
    return Field.from_physical(grid, rng.standard_normal(shape))


def smooth_field(grid: BoxGrid, rng, rank="scalar", zero_mean=True, m0=None) -> Field:
    """Random field with an exp(-|m|^2/m0^2) spectral envelope.

    Smooth enough that second derivatives are well resolved, which the
    inequality and identity tests need.
    """
    if m0 is None:
        m0 = grid.N / 8
    f = white_field(grid, rng, rank=rank)
    m = grid.modes1d
    env = np.exp(-(m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2) / m0**2)
    coeffs = f.spectral * env
    if zero_mean:
        coeffs[..., 0, 0, 0] = 0.0
    out = Field.from_spectral(grid, coeffs)
    out.physical  # realize samples (also enforces reality once)
    return Field.from_physical(grid, out.physical)


def div_free_field(grid: BoxGrid, rng, m0=None) -> Field:
    """Random smooth divergence-free, zero-mean vector field."""
    return leray_project(smooth_field(grid, rng, rank="vector", m0=m0))


def taylor_green(grid: BoxGrid, amplitude=1.0) -> Field:
    """The classic single-scale divergence-free test flow.

    u = A (sin x' cos y' cos z', -cos x' sin y' cos z', 0) with x' = pi x / alpha,
    so the field is exactly periodic on any box.
    """
    s = np.pi / grid.alpha
    x, y, z = grid.meshgrid()
    u = np.empty((3, grid.N, grid.N, grid.N))
    u[0] = amplitude * np.sin(s * x) * np.cos(s * y) * np.cos(s * z)
    u[1] = -amplitude * np.cos(s * x) * np.sin(s * y) * np.cos(s * z)
    u[2] = 0.0
    return Field.from_physical(grid, u)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criteria verdicts after the test summary."""
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
