"""Convergence, tail, and transfer studies over expanding boxes, plus reports.

This module turns the library's building blocks into the four numerical
programs that probe how well the periodic box Q_alpha = (-alpha, alpha)^3
stands in for the whole space, all driven by one declarative JSON config:

* ``inversion`` -- invert one compactly supported vorticity on every box,
  extend each velocity to the reference box Q_beta, and watch the L^2/H^1
  gap to the reference inversion close as alpha grows;
* ``solution``  -- evolve the same initial data on every box and measure
  discrete L^2(0,T;H^1) and L^4(0,T;H^1.5) errors against the reference
  trajectory, plus sup-in-time tail masses;
* ``tail``      -- audit the a-priori tail bound
  tail(u(t), R) <= tail(u0, r) + Gamma/(R - r), with Gamma assembled from
  measured quantities of the run itself;
* ``transfer``  -- run the reference box to T* and sweep ascending alphas
  for the first alpha* from which every larger box keeps its H^1 norm
  squared below twice the reference bound M.

"R^3" is operationalised as the largest box Q_beta with beta >= 2*max(alpha);
all boxes share one lattice spacing h = 2*alpha_1/N_1 so fields nest exactly.

Config schema (JSON object; unknown keys anywhere are rejected)::

    {
      "kind": "inversion" | "solution" | "tail" | "transfer",
      "alphas": [1, 2, 4],            # strictly ascending box half-widths
      "base_n": 32,                   # resolution on the smallest box
      "beta": 8,                      # optional; default 2*max(alphas)
      "initial_data": {
        "family": "bump" | "trefoil" | "zero",
        # bump:    support_radius (req), amplitude, direction, support_tol
        # trefoil: major_radius, tube_radius, strength (req),
        #          resolution, div_tol, support_tol
        # zero:    support_radius (optional)
      },
      "solver": {                     # solution/tail/transfer only
        "dt": 1e-3, "t_end": 0.05,    # transfer derives t_end; omit it there
        "snapshot_every": 10,         # steps between stored snapshots
        "audit_every": 1              # steps between diagnostic audits
      },
      "norms": ["L2", "H1"],          # inversion/solution error columns
      "tail": {"inner_radius": 1.0, "radii": [2, 2.5, 3]},   # tail only
      "transfer": {"t_star_factor": 3.0},                    # transfer only
      "checks": {"ratio_bound": 0.5, "support_margin": <2h>},
      "allow_beyond_guaranteed": false,   # solution only
      "out_dir": "reports",           # optional; CLI --out overrides
      "seed": 0                       # reserved; generators are deterministic
    }

Reports are CSV files with stable schemas plus ``checks.csv`` (one
machine-readable pass/fail record per assertion) and ``metadata.json``
(normalised config echo, code version, measured constants, wall time).
On the single-threaded reference path two runs of the same config produce
byte-identical CSVs; only the wall time in ``metadata.json`` may differ.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BlowUpError,
    ConfigurationError,
    DomainTooSmallError,
    UsageError,
)
from .extension import extend_field, make_cutoff
from .initial_data import BumpSpec, TrefoilSpec, bump_vorticity, trefoil_vorticity
from .norms import (
    grad_l2_sq,
    inequality_report,
    l2_norm,
    lebesgue_norm,
    sobolev_norm,
    tail_mass,
)
from .solver import SolverConfig, existence_time, nse_solve, pressure_solve
from .spectral_core import BoxGrid, Field, grid_make
from .vorticity import (
    VorticityField,
    curl_identity_report,
    curl_inv_periodic,
)

__all__ = [
    "CheckRecord",
    "StudyConfig",
    "StudyResult",
    "emit_report",
    "load_config",
    "measure_constants",
    "parse_config",
    "run_inversion_study",
    "run_snapshot_audit",
    "run_solution_study",
    "run_study",
    "run_tail_study",
    "run_transfer_study",
]

STUDY_KINDS = ("inversion", "solution", "tail", "transfer")

#: Relative slack for curl-identity and consistency checks inside studies.
_IDENTITY_TOL = 1e-10

#: sup-in-time tail columns of a solution study are taken at these fractions
#: of the smallest box half-width (recorded per run in metadata).
_SOLUTION_TAIL_FRACTIONS = (0.5, 0.75)


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StudyConfig:
    """A fully validated, normalised study description.

    Instances come from :func:`parse_config`/:func:`load_config`;
    :meth:`to_dict` returns a JSON-able echo that parses back to an equal
    config, which is what ``metadata.json`` stores for reruns.
    """

    kind: str
    alphas: tuple[float, ...]
    base_n: int
    beta: float
    ns: tuple[int, ...]
    beta_n: int
    h: float
    initial_data: dict
    solver: dict | None
    norms: tuple[str, ...]
    tail_inner: float | None
    tail_radii: tuple[float, ...]
    t_star_factor: float | None
    ratio_bound: float
    support_margin: float
    allow_beyond_guaranteed: bool
    out_dir: str | None
    seed: int

    def to_dict(self) -> dict:
        """Normalised config echo; ``parse_config(cfg.to_dict()) == cfg``."""
        out: dict = {
            "kind": self.kind,
            "alphas": list(self.alphas),
            "base_n": self.base_n,
            "beta": self.beta,
            "initial_data": dict(self.initial_data),
            "checks": {
                "ratio_bound": self.ratio_bound,
                "support_margin": self.support_margin,
            },
            "seed": self.seed,
        }
        if self.solver is not None:
            out["solver"] = dict(self.solver)
        if self.kind in ("inversion", "solution"):
            out["norms"] = list(self.norms)
        if self.kind == "tail":
            out["tail"] = {
                "inner_radius": self.tail_inner,
                "radii": list(self.tail_radii),
            }
        if self.kind == "transfer":
            out["transfer"] = {"t_star_factor": self.t_star_factor}
        if self.kind == "solution":
            out["allow_beyond_guaranteed"] = self.allow_beyond_guaranteed
        if self.out_dir is not None:
            out["out_dir"] = self.out_dir
        return out

    @property
    def support_radius(self) -> float:
        """Outer radius of the configured vorticity support."""
        data = self.initial_data
        if data["family"] == "bump":
            return data["support_radius"]
        if data["family"] == "trefoil":
            return data["major_radius"] + 3.0 * data["tube_radius"]
        return data["support_radius"]


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {unknown} in {where}; allowed keys: {sorted(allowed)}"
        )


def _get_number(section: dict, key: str, where: str, *, default=None) -> float:
    if key not in section:
        if default is None:
            raise ConfigurationError(f"missing required key '{key}' in {where}")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"'{key}' in {where} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigurationError(f"'{key}' in {where} must be finite, got {value!r}")
    return float(value)


def _get_int(section: dict, key: str, where: str, *, default=None) -> int:
    if key not in section:
        if default is None:
            raise ConfigurationError(f"missing required key '{key}' in {where}")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(
            f"'{key}' in {where} must be an integer, got {value!r}"
        )
    return value


def _norm_function(name: str):
    """Map a norm name like "L2", "H1", "H1.5" to a Field -> float callable."""
    if isinstance(name, str) and len(name) > 1:
        kind, order = name[0], name[1:]
        try:
            value = float(order)
        except ValueError:
            value = None
        if value is not None:
            if kind == "L" and value == 2.0:
                return l2_norm
            if kind == "L" and value >= 1.0:
                return lambda f: lebesgue_norm(f, value)
            if kind == "H" and value >= 0.0:
                return lambda f: sobolev_norm(f, value)
    raise ConfigurationError(
        f"unrecognised norm name {name!r}; use 'L<p>' (p >= 1) or 'H<s>' (s >= 0)"
    )


def _parse_initial_data(section, min_alpha: float) -> dict:
    if not isinstance(section, dict):
        raise ConfigurationError("'initial_data' must be an object")
    family = section.get("family")
    if family == "bump":
        _reject_unknown(
            section,
            ("family", "support_radius", "amplitude", "direction", "support_tol"),
            "initial_data (bump)",
        )
        radius = _get_number(section, "support_radius", "initial_data")
        direction = section.get("direction", [0.0, 0.0, 1.0])
        if not (
            isinstance(direction, (list, tuple))
            and len(direction) == 3
            and all(isinstance(c, (int, float)) for c in direction)
        ):
            raise ConfigurationError("bump 'direction' must be a 3-vector")
        if not any(direction):
            raise ConfigurationError("bump 'direction' must be nonzero")
        return {
            "family": "bump",
            "support_radius": radius,
            "amplitude": _get_number(section, "amplitude", "initial_data", default=1.0),
            "direction": [float(c) for c in direction],
            "support_tol": _get_number(
                section, "support_tol", "initial_data", default=1e-2
            ),
        }
    if family == "trefoil":
        _reject_unknown(
            section,
            (
                "family",
                "major_radius",
                "tube_radius",
                "strength",
                "resolution",
                "div_tol",
                "support_tol",
            ),
            "initial_data (trefoil)",
        )
        return {
            "family": "trefoil",
            "major_radius": _get_number(section, "major_radius", "initial_data"),
            "tube_radius": _get_number(section, "tube_radius", "initial_data"),
            "strength": _get_number(section, "strength", "initial_data"),
            "resolution": _get_int(section, "resolution", "initial_data", default=512),
            "div_tol": _get_number(section, "div_tol", "initial_data", default=1e-10),
            "support_tol": _get_number(
                section, "support_tol", "initial_data", default=1e-6
            ),
        }
    if family == "zero":
        _reject_unknown(section, ("family", "support_radius"), "initial_data (zero)")
        return {
            "family": "zero",
            "support_radius": _get_number(
                section, "support_radius", "initial_data", default=0.5 * min_alpha
            ),
        }
    raise ConfigurationError(
        f"initial_data 'family' must be 'bump', 'trefoil', or 'zero', got {family!r}"
    )


def _parse_solver(section, kind: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigurationError("'solver' must be an object")
    _reject_unknown(
        section, ("dt", "t_end", "snapshot_every", "audit_every"), "solver"
    )
    dt = _get_number(section, "dt", "solver")
    if dt <= 0.0:
        raise ConfigurationError(f"solver 'dt' must be positive, got {dt}")
    out = {
        "dt": dt,
        "snapshot_every": _get_int(section, "snapshot_every", "solver", default=10),
        "audit_every": _get_int(section, "audit_every", "solver", default=1),
    }
    if out["snapshot_every"] < 1 or out["audit_every"] < 1:
        raise ConfigurationError("solver cadences must be >= 1")
    if kind == "transfer":
        if "t_end" in section:
            raise ConfigurationError(
                "transfer studies derive t_end from the guaranteed existence "
                "time; remove solver 't_end'"
            )
    else:
        t_end = _get_number(section, "t_end", "solver")
        if t_end <= 0.0:
            raise ConfigurationError(f"solver 't_end' must be positive, got {t_end}")
        out["t_end"] = t_end
    return out


_TOP_KEYS = (
    "kind",
    "alphas",
    "base_n",
    "beta",
    "initial_data",
    "solver",
    "norms",
    "tail",
    "transfer",
    "checks",
    "allow_beyond_guaranteed",
    "out_dir",
    "seed",
)


def parse_config(data: dict) -> StudyConfig:
    """Validate a raw config mapping and resolve every default.

    Raises ConfigurationError for unknown keys (at any level), missing
    required keys, non-nesting grids, and data that cannot fit the boxes.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")

    kind = data.get("kind")
    if kind not in STUDY_KINDS:
        raise ConfigurationError(
            f"'kind' must be one of {list(STUDY_KINDS)}, got {kind!r}"
        )

    alphas_raw = data.get("alphas")
    if not isinstance(alphas_raw, list) or not alphas_raw:
        raise ConfigurationError("'alphas' must be a non-empty list of box sizes")
    if not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) and a > 0
        for a in alphas_raw
    ):
        raise ConfigurationError("'alphas' entries must be positive numbers")
    alphas = tuple(float(a) for a in alphas_raw)
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ConfigurationError(f"'alphas' must be strictly ascending, got {alphas}")

    base_n = _get_int(data, "base_n", "config")
    if base_n < 8 or base_n % 2:
        raise ConfigurationError(f"'base_n' must be an even integer >= 8, got {base_n}")
    h = 2.0 * alphas[0] / base_n

    beta = _get_number(data, "beta", "config", default=2.0 * alphas[-1])
    if beta < 2.0 * alphas[-1]:
        raise ConfigurationError(
            f"reference box beta={beta} must be >= 2*max(alphas)={2.0 * alphas[-1]}"
        )

    def lattice_points(alpha: float, label: str) -> int:
        n = 2.0 * alpha / h
        if abs(n - round(n)) > 1e-9 or round(n) % 2:
            raise ConfigurationError(
                f"boxes do not share the lattice: {label}={alpha} needs "
                f"N={n:.6g} points at h={h:.6g} (must be an even integer)"
            )
        return int(round(n))

    ns = tuple(lattice_points(a, "alpha") for a in alphas)
    beta_n = lattice_points(beta, "beta")

    initial = _parse_initial_data(data.get("initial_data"), alphas[0])

    checks_raw = data.get("checks", {})
    if not isinstance(checks_raw, dict):
        raise ConfigurationError("'checks' must be an object")
    _reject_unknown(checks_raw, ("ratio_bound", "support_margin"), "checks")
    ratio_bound = _get_number(checks_raw, "ratio_bound", "checks", default=0.5)
    if not 0.0 < ratio_bound <= 1.0:
        raise ConfigurationError(f"'ratio_bound' must be in (0, 1], got {ratio_bound}")
    support_margin = _get_number(
        checks_raw, "support_margin", "checks", default=2.0 * h
    )
    if support_margin < 0.0:
        raise ConfigurationError("'support_margin' must be nonnegative")

    norms = data.get("norms")
    if kind in ("inversion", "solution"):
        if norms is None:
            norms = ["L2", "H1"]
        if not isinstance(norms, list) or not norms:
            raise ConfigurationError("'norms' must be a non-empty list of names")
        for name in norms:
            _norm_function(name)
        norms = tuple(str(n) for n in norms)
    elif norms is not None:
        raise ConfigurationError(
            f"'norms' applies to inversion/solution studies, not {kind!r}"
        )
    else:
        norms = ()

    solver = data.get("solver")
    if kind == "inversion":
        if solver is not None:
            raise ConfigurationError("inversion studies take no 'solver' section")
    else:
        if solver is None:
            raise ConfigurationError(f"{kind} studies need a 'solver' section")
        solver = _parse_solver(solver, kind)

    tail_inner: float | None = None
    tail_radii: tuple[float, ...] = ()
    tail_raw = data.get("tail")
    if kind == "tail":
        if not isinstance(tail_raw, dict):
            raise ConfigurationError("tail studies need a 'tail' section")
        _reject_unknown(tail_raw, ("inner_radius", "radii"), "tail")
        tail_inner = _get_number(tail_raw, "inner_radius", "tail")
        radii_raw = tail_raw.get("radii")
        if not isinstance(radii_raw, list) or not radii_raw:
            raise ConfigurationError("tail 'radii' must be a non-empty list")
        if not all(
            isinstance(r, (int, float)) and not isinstance(r, bool) for r in radii_raw
        ):
            raise ConfigurationError("tail 'radii' entries must be numbers")
        tail_radii = tuple(float(r) for r in radii_raw)
        if any(b <= a for a, b in zip(tail_radii, tail_radii[1:])):
            raise ConfigurationError("tail 'radii' must be strictly ascending")
        if tail_inner >= tail_radii[0]:
            raise ConfigurationError(
                f"tail inner radius r={tail_inner} must be below the smallest "
                f"R={tail_radii[0]}"
            )
        for alpha in alphas:
            # The extension tail estimate needs R <= alpha - 1; the boundary
            # case is the closed limit and is accepted.
            if tail_radii[-1] > alpha - 1.0 + 1e-12:
                raise ConfigurationError(
                    f"tail radius R={tail_radii[-1]} exceeds alpha - 1 "
                    f"on the alpha={alpha} box"
                )
    elif tail_raw is not None:
        raise ConfigurationError("'tail' section applies to tail studies only")

    t_star_factor: float | None = None
    transfer_raw = data.get("transfer")
    if kind == "transfer":
        if transfer_raw is None:
            transfer_raw = {}
        if not isinstance(transfer_raw, dict):
            raise ConfigurationError("'transfer' must be an object")
        _reject_unknown(transfer_raw, ("t_star_factor",), "transfer")
        t_star_factor = _get_number(
            transfer_raw, "t_star_factor", "transfer", default=1.0
        )
        if t_star_factor <= 0.0:
            raise ConfigurationError("'t_star_factor' must be positive")
    elif transfer_raw is not None:
        raise ConfigurationError("'transfer' section applies to transfer studies only")

    allow_beyond = data.get("allow_beyond_guaranteed", False)
    if allow_beyond is not False and kind != "solution":
        raise ConfigurationError(
            "'allow_beyond_guaranteed' applies to solution studies only"
        )
    if not isinstance(allow_beyond, bool):
        raise ConfigurationError("'allow_beyond_guaranteed' must be a boolean")

    out_dir = data.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigurationError("'out_dir' must be a string path")

    seed = _get_int(data, "seed", "config", default=0)

    cfg = StudyConfig(
        kind=kind,
        alphas=alphas,
        base_n=base_n,
        beta=beta,
        ns=ns,
        beta_n=beta_n,
        h=h,
        initial_data=initial,
        solver=solver,
        norms=norms,
        tail_inner=tail_inner,
        tail_radii=tail_radii,
        t_star_factor=t_star_factor,
        ratio_bound=ratio_bound,
        support_margin=support_margin,
        allow_beyond_guaranteed=bool(allow_beyond),
        out_dir=out_dir,
        seed=seed,
    )

    if kind in ("inversion", "solution") and alphas[0] < 1.0:
        raise ConfigurationError(
            "extension to the reference box needs alpha >= 1 on every box, "
            f"got min alpha = {alphas[0]}"
        )
    limit = alphas[0] - cfg.support_margin
    if cfg.support_radius > limit:
        raise ConfigurationError(
            f"initial data reaches radius {cfg.support_radius:.6g} but must stay "
            f"within {limit:.6g} (= min alpha - support margin) on the "
            f"alpha={alphas[0]} box"
        )
    if kind == "tail" and cfg.support_radius >= tail_inner:
        raise ConfigurationError(
            f"tail inner radius r={tail_inner} must exceed the data support "
            f"radius {cfg.support_radius:.6g}"
        )
    return cfg


def load_config(path) -> StudyConfig:
    """Read and validate a JSON study config from disk."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class CheckRecord:
    """One machine-readable assertion outcome."""

    name: str
    passed: bool
    measured: float
    threshold: float
    note: str = ""


@dataclass
class StudyResult:
    """Everything a study produced: table rows, assertions, and metadata."""

    kind: str
    columns: tuple[str, ...]
    rows: list[dict]
    checks: list[CheckRecord]
    constants: dict[str, float]
    extras: dict
    config: dict
    wall_time_s: float
    time_columns: tuple[str, ...] = ()
    time_rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(record.passed for record in self.checks)


def _grid_for(cfg: StudyConfig, index: int) -> BoxGrid:
    return grid_make(cfg.alphas[index], cfg.ns[index])


def _reference_grid(cfg: StudyConfig) -> BoxGrid:
    return grid_make(cfg.beta, cfg.beta_n)


def _build_vorticity(cfg: StudyConfig, grid: BoxGrid) -> VorticityField:
    """Realise the configured vorticity family on one grid."""
    data = cfg.initial_data
    try:
        if data["family"] == "bump":
            spec = BumpSpec(
                support_radius=data["support_radius"],
                amplitude=data["amplitude"],
                direction=tuple(data["direction"]),
            )
            return bump_vorticity(spec, grid, support_tol=data["support_tol"])
        if data["family"] == "trefoil":
            spec = TrefoilSpec(
                major_radius=data["major_radius"],
                tube_radius=data["tube_radius"],
                strength=data["strength"],
                resolution=data["resolution"],
            )
            return trefoil_vorticity(
                spec, grid, div_tol=data["div_tol"], support_tol=data["support_tol"]
            )
    except DomainTooSmallError as exc:
        raise ConfigurationError(
            f"initial data does not fit the alpha={grid.alpha} box: {exc}"
        ) from exc
    zeros = Field.from_physical(grid, np.zeros((3, grid.N, grid.N, grid.N)))
    return VorticityField(zeros, support_radius=data["support_radius"])


def _solver_config(cfg: StudyConfig, t_end: float, *, snapshots: bool) -> SolverConfig:
    sd = cfg.solver
    dt, every = sd["dt"], sd["snapshot_every"]
    times = []
    if snapshots:
        k = every
        while k * dt < t_end - 1e-9 * dt:
            times.append(k * dt)
            k += every
    return SolverConfig(
        dt=dt,
        t_end=t_end,
        snapshot_times=tuple(times),
        audit_every=sd["audit_every"],
    )


def measure_constants(fields) -> dict[str, float]:
    """Largest functional-inequality ratios over the given velocity fields.

    Returns the measured Agmon constant, the L^6 Sobolev constant, and the
    pressure Calderon-Zygmund ratio ||p|| / ||u||_{L^4}^2; entries are NaN
    when every field is degenerate (zero).
    """
    agmon, sob6, press = [], [], []
    for u in fields:
        report = inequality_report(u)
        if report.flags["degenerate"]:
            continue
        agmon.append(report.entries["agmon_ratio"])
        sob6.append(report.entries["l6_ratio"])
        l4 = lebesgue_norm(u, 4)
        if l4 > 0.0:
            press.append(l2_norm(pressure_solve(u)) / l4**2)
    return {
        "c_agmon": max(agmon) if agmon else float("nan"),
        "c_sobolev6": max(sob6) if sob6 else float("nan"),
        "c_pressure": max(press) if press else float("nan"),
    }


def _check_decreasing(
    rows: list[dict], column: str, *, label: str | None = None
) -> list[CheckRecord]:
    """Strict-decrease records per consecutive alpha pair (zero rows pass)."""
    out = []
    label = label or column
    for prev, nxt in zip(rows, rows[1:]):
        a, b = prev[column], nxt[column]
        name = f"{label}_decreasing_alpha_{prev['alpha']:g}_to_{nxt['alpha']:g}"
        if math.isnan(a) or math.isnan(b):
            out.append(
                CheckRecord(name, False, float("nan"), a, note="non-finite error")
            )
        else:
            passed = b < a or (a == 0.0 and b == 0.0)
            note = "degenerate (both zero)" if a == b == 0.0 else ""
            out.append(CheckRecord(name, passed, b, a, note=note))
    return out


def _check_halving(rows: list[dict], column: str, bound: float) -> list[CheckRecord]:
    """err(2a)/err(a) <= bound for consecutive box-doubling pairs."""
    out = []
    for prev, nxt in zip(rows, rows[1:]):
        if abs(nxt["alpha"] / prev["alpha"] - 2.0) > 1e-12:
            continue
        a, b = prev[column], nxt[column]
        name = f"{column}_ratio_alpha_{prev['alpha']:g}_to_{nxt['alpha']:g}"
        if a == 0.0 and b == 0.0:
            out.append(CheckRecord(name, True, 0.0, bound, note="degenerate"))
        elif a == 0.0 or math.isnan(a) or math.isnan(b):
            out.append(CheckRecord(name, False, float("nan"), bound))
        else:
            out.append(CheckRecord(name, b / a <= bound, b / a, bound))
    return out


# --------------------------------------------------------------------------
# studies


def run_inversion_study(cfg: StudyConfig) -> StudyResult:
    """Invert one vorticity on every box and measure the gap on Q_beta.

    Per alpha: u_alpha = curl_inv_periodic(omega), extended to the reference
    box and compared with the reference inversion in each configured norm.
    Emits per-row gradient and vorticity norms (equal by the curl identity)
    and asserts strict error decrease plus the halving ratio on H^1.
    """
    if cfg.kind != "inversion":
        raise UsageError(f"run_inversion_study got a {cfg.kind!r} config")
    start = time.perf_counter()
    ref_grid = _reference_grid(cfg)
    omega_ref = _build_vorticity(cfg, ref_grid)
    u_ref = curl_inv_periodic(omega_ref)
    del omega_ref

    norm_fns = [(name, _norm_function(name)) for name in cfg.norms]
    rows: list[dict] = []
    identity_worst = 0.0
    constants: dict[str, float] | None = None
    for i, alpha in enumerate(cfg.alphas):
        grid = _grid_for(cfg, i)
        w = _build_vorticity(cfg, grid)
        u = curl_inv_periodic(w)
        if constants is None:
            constants = measure_constants([u])
        omega_norm = l2_norm(w.omega)
        del w
        grad_norm = math.sqrt(grad_l2_sq(u))
        extended = extend_field(u, ref_grid, make_cutoff(alpha))
        del u
        diff = extended - u_ref
        del extended
        row = {"alpha": alpha}
        for name, fn in norm_fns:
            row[f"err_{name}"] = fn(diff)
        del diff
        row["grad_norm"] = grad_norm
        row["omega_norm"] = omega_norm
        rows.append(row)
        if omega_norm > 0.0:
            identity_worst = max(
                identity_worst, abs(grad_norm - omega_norm) / omega_norm
            )

    checks: list[CheckRecord] = []
    for name in cfg.norms:
        checks.extend(_check_decreasing(rows, f"err_{name}"))
    if "H1" in cfg.norms:
        checks.extend(_check_halving(rows, "err_H1", cfg.ratio_bound))
    checks.append(
        CheckRecord(
            "curl_identity_per_row",
            identity_worst <= _IDENTITY_TOL,
            identity_worst,
            _IDENTITY_TOL,
            note="max |grad_norm - omega_norm| / omega_norm over rows",
        )
    )

    columns = ("alpha", *(f"err_{n}" for n in cfg.norms), "grad_norm", "omega_norm")
    return StudyResult(
        kind="inversion",
        columns=columns,
        rows=rows,
        checks=checks,
        constants=constants or measure_constants([]),
        extras={"beta": cfg.beta, "h": cfg.h},
        config=cfg.to_dict(),
        wall_time_s=time.perf_counter() - start,
    )


def _solution_columns(cfg: StudyConfig, tail_radii) -> tuple[str, ...]:
    return (
        "alpha",
        "err_L2T_H1",
        "err_L4T_H1.5",
        *(f"tail_sup_R{j + 1}" for j in range(len(tail_radii))),
        "blown_up",
    )


def run_solution_study(cfg: StudyConfig) -> StudyResult:
    """Evolve identical data on every box; compare against the Q_beta run.

    Emits per-snapshot errors (``solution_times.csv``) and per-alpha
    discrete L^2(0,T;H^1) / L^4(0,T;H^1.5) integrals with sup-in-time tail
    columns.  A blow-up on any box aborts the sweep with a failed record.
    """
    if cfg.kind != "solution":
        raise UsageError(f"run_solution_study got a {cfg.kind!r} config")
    start = time.perf_counter()
    t_end = cfg.solver["t_end"]
    ref_grid = _reference_grid(cfg)

    grids = [_grid_for(cfg, i) for i in range(len(cfg.alphas))]
    initial = [curl_inv_periodic(_build_vorticity(cfg, g)) for g in grids]
    u0_ref = curl_inv_periodic(_build_vorticity(cfg, ref_grid))

    c_probe = measure_constants([initial[0]])
    checks: list[CheckRecord] = []
    t_min = float("inf")
    if not math.isnan(c_probe["c_agmon"]):
        horizons = [
            existence_time(u, c_probe["c_agmon"]).t_guaranteed
            for u in (*initial, u0_ref)
        ]
        t_min = min(horizons)
    if t_end > t_min:
        if not cfg.allow_beyond_guaranteed:
            raise ConfigurationError(
                f"t_end={t_end} exceeds the guaranteed existence time "
                f"{t_min:.6g}; set allow_beyond_guaranteed to proceed"
            )
        warnings.warn(
            f"integrating to t_end={t_end} beyond the guaranteed horizon "
            f"{t_min:.6g}",
            stacklevel=2,
        )
    checks.append(
        CheckRecord(
            "within_guaranteed_horizon",
            True,
            t_end,
            t_min,
            note=(
                "waived by allow_beyond_guaranteed" if t_end > t_min else ""
            ),
        )
    )

    tail_radii = tuple(f * cfg.alphas[0] for f in _SOLUTION_TAIL_FRACTIONS)
    rows: list[dict] = []
    time_rows: list[dict] = []
    aborted = False

    scfg = _solver_config(cfg, t_end, snapshots=True)
    try:
        ref_traj = nse_solve(u0_ref, scfg)
    except BlowUpError as exc:
        checks.append(
            CheckRecord(
                "no_blowup_reference",
                False,
                exc.last_valid_time,
                t_end,
                note=str(exc),
            )
        )
        return StudyResult(
            kind="solution",
            columns=_solution_columns(cfg, tail_radii),
            rows=rows,
            checks=checks,
            constants=c_probe,
            extras={
                "beta": cfg.beta,
                "h": cfg.h,
                "t_end": t_end,
                "t_guaranteed_min": t_min,
                "tail_sup_radii": list(tail_radii),
                "aborted": True,
            },
            config=cfg.to_dict(),
            wall_time_s=time.perf_counter() - start,
            time_columns=("alpha", "t", *(f"err_{n}" for n in cfg.norms)),
        )
    constants = measure_constants(ref_traj.states)

    norm_fns = [(name, _norm_function(name)) for name in cfg.norms]
    h1 = _norm_function("H1")
    h15 = _norm_function("H1.5")

    for i, alpha in enumerate(cfg.alphas):
        try:
            traj = nse_solve(initial[i], scfg)
        except BlowUpError as exc:
            checks.append(
                CheckRecord(
                    f"no_blowup_alpha_{alpha:g}",
                    False,
                    exc.last_valid_time,
                    t_end,
                    note=str(exc),
                )
            )
            row = {"alpha": alpha, "err_L2T_H1": float("nan"),
                   "err_L4T_H1.5": float("nan")}
            for j in range(len(tail_radii)):
                row[f"tail_sup_R{j + 1}"] = float("nan")
            row["blown_up"] = 1
            rows.append(row)
            aborted = True
            break
        if traj.times != ref_traj.times:
            raise UsageError(
                "snapshot schedules diverged between boxes; this is a bug"
            )
        cutoff = make_cutoff(alpha)
        h1_sq, h15_q4 = [], []
        tail_sups = [0.0] * len(tail_radii)
        for idx, (t, state) in enumerate(zip(traj.times, traj.states)):
            diff = extend_field(state, ref_grid, cutoff) - ref_traj.states[idx]
            trow = {"alpha": alpha, "t": t}
            for name, fn in norm_fns:
                trow[f"err_{name}"] = fn(diff)
            time_rows.append(trow)
            e1 = h1(diff)
            h1_sq.append(e1 * e1)
            e15 = h15(diff)
            h15_q4.append(e15**4)
            del diff
            for j, radius in enumerate(tail_radii):
                tail_sups[j] = max(tail_sups[j], tail_mass(state, radius))
        row = {
            "alpha": alpha,
            "err_L2T_H1": math.sqrt(np.trapezoid(h1_sq, traj.times)),
            "err_L4T_H1.5": float(np.trapezoid(h15_q4, traj.times)) ** 0.25,
        }
        for j, sup in enumerate(tail_sups):
            row[f"tail_sup_R{j + 1}"] = sup
        row["blown_up"] = 0
        rows.append(row)

    clean = [r for r in rows if not r["blown_up"]]
    checks.extend(_check_decreasing(clean, "err_L2T_H1"))
    checks.extend(_check_decreasing(clean, "err_L4T_H1.5"))
    finite_ok = all(math.isfinite(r["err_L4T_H1.5"]) for r in clean)
    checks.append(
        CheckRecord(
            "err_L4T_H1.5_finite",
            finite_ok,
            max((r["err_L4T_H1.5"] for r in clean), default=0.0),
            float("inf"),
        )
    )

    # t = 0 row must reproduce the plain restriction/inversion error.
    worst_t0 = 0.0
    for i, alpha in enumerate(cfg.alphas):
        t0_rows = [r for r in time_rows if r["alpha"] == alpha and r["t"] == 0.0]
        if not t0_rows:
            continue
        diff0 = extend_field(initial[i], ref_grid, make_cutoff(alpha)) - u0_ref
        for name, fn in norm_fns:
            expected = fn(diff0)
            got = t0_rows[0][f"err_{name}"]
            scale = max(abs(expected), 1e-300)
            worst_t0 = max(worst_t0, abs(got - expected) / scale)
        del diff0
    checks.append(
        CheckRecord(
            "t0_matches_inversion_error",
            worst_t0 <= 1e-12,
            worst_t0,
            1e-12,
            note="relative gap between t=0 rows and direct restriction errors",
        )
    )

    time_columns = ("alpha", "t", *(f"err_{n}" for n in cfg.norms))
    return StudyResult(
        kind="solution",
        columns=_solution_columns(cfg, tail_radii),
        rows=rows,
        checks=checks,
        constants=constants,
        extras={
            "beta": cfg.beta,
            "h": cfg.h,
            "t_end": t_end,
            "t_guaranteed_min": t_min,
            "tail_sup_radii": list(tail_radii),
            "aborted": aborted,
        },
        config=cfg.to_dict(),
        wall_time_s=time.perf_counter() - start,
        time_columns=time_columns,
        time_rows=time_rows,
    )


def run_tail_study(cfg: StudyConfig) -> StudyResult:
    """Audit tail(u(t), R) <= tail(u0, r) + Gamma/(R - r) on every box.

    Gamma is assembled from measured quantities of each run: with
    I = integral of the enstrophy over [0, T] (trapezoid on audit times)
    and C6 the largest measured L^6/gradient ratio over the snapshots,

        Gamma = 2 ||u0|| [ sqrt(T) I + 2 C6^(3/2) ||u0||^(1/2) T^(1/4) I^(3/4) ].

    Rows carry both sides and the margin at every snapshot time and radius.
    """
    if cfg.kind != "tail":
        raise UsageError(f"run_tail_study got a {cfg.kind!r} config")
    start = time.perf_counter()
    t_end = cfg.solver["t_end"]
    inner = cfg.tail_inner
    rows: list[dict] = []
    checks: list[CheckRecord] = []
    gammas: dict[str, float] = {}
    min_margin = float("inf")
    constants = None
    scfg = _solver_config(cfg, t_end, snapshots=True)
    for i, alpha in enumerate(cfg.alphas):
        grid = _grid_for(cfg, i)
        u0 = curl_inv_periodic(_build_vorticity(cfg, grid))
        try:
            traj = nse_solve(u0, scfg)
        except BlowUpError as exc:
            checks.append(
                CheckRecord(
                    f"no_blowup_alpha_{alpha:g}",
                    False,
                    exc.last_valid_time,
                    t_end,
                    note=str(exc),
                )
            )
            break
        run_constants = measure_constants(traj.states)
        if constants is None or (
            not math.isnan(run_constants["c_agmon"])
            and math.isnan(constants["c_agmon"])
        ):
            constants = run_constants

        u0_l2 = l2_norm(u0)
        tail0 = tail_mass(u0, inner)
        audit_t = [rec.time for rec in traj.diagnostics]
        audit_ens = [rec.entries["enstrophy"] for rec in traj.diagnostics]
        dissipation = float(np.trapezoid(audit_ens, audit_t))
        if u0_l2 == 0.0:
            gamma = 0.0
        else:
            c6 = run_constants["c_sobolev6"]
            gamma = (
                2.0
                * u0_l2
                * (
                    math.sqrt(t_end) * dissipation
                    + 2.0
                    * c6**1.5
                    * math.sqrt(u0_l2)
                    * t_end**0.25
                    * dissipation**0.75
                )
            )
        gammas[f"{alpha:g}"] = gamma

        for t, state in zip(traj.times, traj.states):
            for radius in cfg.tail_radii:
                lhs = tail_mass(state, radius)
                rhs = tail0 + gamma / (radius - inner)
                margin = rhs - lhs
                min_margin = min(min_margin, margin)
                rows.append(
                    {
                        "alpha": alpha,
                        "t": t,
                        "R": radius,
                        "lhs": lhs,
                        "rhs": rhs,
                        "margin": margin,
                    }
                )

    checks.append(
        CheckRecord(
            "tail_bound_margin_nonnegative",
            min_margin >= 0.0,
            min_margin if math.isfinite(min_margin) else float("nan"),
            0.0,
            note="min over all snapshot times and radii of RHS - LHS",
        )
    )
    return StudyResult(
        kind="tail",
        columns=("alpha", "t", "R", "lhs", "rhs", "margin"),
        rows=rows,
        checks=checks,
        constants=constants or measure_constants([]),
        extras={
            "h": cfg.h,
            "t_end": t_end,
            "inner_radius": inner,
            "gamma": gammas,
        },
        config=cfg.to_dict(),
        wall_time_s=time.perf_counter() - start,
    )


def run_transfer_study(cfg: StudyConfig) -> StudyResult:
    """Sweep ascending boxes for the H^1 transfer threshold alpha*.

    The reference box fixes M = ||u0||_{H^1}^2 and the guaranteed horizon
    T_g; the sweep integrates every box to T* = t_star_factor * T_g and
    reports the first alpha* from which all larger boxes keep
    sup_t ||u(t)||_{H^1}^2 <= 2M.  Blow-ups are recorded per box, not fatal.
    """
    if cfg.kind != "transfer":
        raise UsageError(f"run_transfer_study got a {cfg.kind!r} config")
    start = time.perf_counter()
    ref_grid = _reference_grid(cfg)
    u0_ref = curl_inv_periodic(_build_vorticity(cfg, ref_grid))
    constants = measure_constants([u0_ref])
    if math.isnan(constants["c_agmon"]):
        raise ConfigurationError("transfer studies need nonzero initial data")

    estimate = existence_time(u0_ref, constants["c_agmon"])
    big_m = estimate.h1_bound
    t_star = cfg.t_star_factor * estimate.t_guaranteed

    def sup_stats(traj) -> tuple[float, float]:
        ens = max(rec.entries["enstrophy"] for rec in traj.diagnostics)
        h1_sq = max(
            2.0 * rec.entries["energy"] + rec.entries["enstrophy"]
            for rec in traj.diagnostics
        )
        return ens, h1_sq

    checks: list[CheckRecord] = []
    rows: list[dict] = []
    scfg = _solver_config(cfg, t_star, snapshots=False)
    try:
        ref_traj = nse_solve(u0_ref, scfg)
        ref_ens, ref_h1_sq = sup_stats(ref_traj)
        ref_blown = 0
        del ref_traj
    except BlowUpError as exc:
        ref_ens = ref_h1_sq = float("nan")
        ref_blown = 1
        checks.append(
            CheckRecord(
                "reference_completes", False, exc.last_valid_time, t_star,
                note=str(exc),
            )
        )
    del u0_ref

    reference_ok = not ref_blown and ref_h1_sq <= big_m * (1.0 + 1e-9)
    checks.append(
        CheckRecord(
            "reference_within_bound",
            reference_ok,
            ref_h1_sq,
            big_m,
            note="sup_t ||u_ref||_{H^1}^2 must stay within M",
        )
    )

    alpha_star = None
    if reference_ok:
        for i, alpha in enumerate(cfg.alphas):
            u0 = curl_inv_periodic(_build_vorticity(cfg, _grid_for(cfg, i)))
            try:
                traj = nse_solve(u0, scfg)
                ens, h1_sq = sup_stats(traj)
                blown = 0
                del traj
            except BlowUpError:
                ens = h1_sq = float("nan")
                blown = 1
            rows.append(
                {
                    "alpha": alpha,
                    "sup_enstrophy": ens,
                    "sup_h1_sq": h1_sq,
                    "within_2m": int(not blown and h1_sq <= 2.0 * big_m),
                    "blown_up": blown,
                    "is_reference": 0,
                }
            )
        for row in reversed(rows):
            if not row["within_2m"]:
                break
            alpha_star = row["alpha"]
        checks.append(
            CheckRecord(
                "alpha_star_found",
                alpha_star is not None,
                alpha_star if alpha_star is not None else float("nan"),
                cfg.alphas[-1],
                note="first alpha from which every larger box stays <= 2M",
            )
        )

    rows.append(
        {
            "alpha": cfg.beta,
            "sup_enstrophy": ref_ens,
            "sup_h1_sq": ref_h1_sq,
            "within_2m": int(reference_ok),
            "blown_up": ref_blown,
            "is_reference": 1,
        }
    )
    return StudyResult(
        kind="transfer",
        columns=(
            "alpha",
            "sup_enstrophy",
            "sup_h1_sq",
            "within_2m",
            "blown_up",
            "is_reference",
        ),
        rows=rows,
        checks=checks,
        constants=constants,
        extras={
            "h": cfg.h,
            "m_bound": big_m,
            "t_guaranteed": estimate.t_guaranteed,
            "t_star": t_star,
            "t_star_factor": cfg.t_star_factor,
            "alpha_star": alpha_star,
        },
        config=cfg.to_dict(),
        wall_time_s=time.perf_counter() - start,
    )


def run_snapshot_audit(cfg: StudyConfig) -> StudyResult:
    """Evaluate the inequality ratios and the curl identity per box.

    Accepts any study config; only the boxes and the initial data are used.
    """
    start = time.perf_counter()
    rows: list[dict] = []
    checks: list[CheckRecord] = []
    fields = []
    for i, alpha in enumerate(cfg.alphas):
        grid = _grid_for(cfg, i)
        u = curl_inv_periodic(_build_vorticity(cfg, grid))
        report = inequality_report(u)
        identity = curl_identity_report(u)
        l4 = lebesgue_norm(u, 4)
        pressure_ratio = (
            l2_norm(pressure_solve(u)) / l4**2 if l4 > 0.0 else float("nan")
        )
        degenerate = report.flags["degenerate"]
        rows.append(
            {
                "alpha": alpha,
                "l2": report.entries["l2"],
                "h1": report.entries["h1"],
                "agmon_ratio": report.entries["agmon_ratio"],
                "l6_ratio": report.entries["l6_ratio"],
                "interp_ratio": report.entries["interp_ratio"],
                "pressure_ratio": pressure_ratio,
                "grad_norm": identity.entries["grad_norm"],
                "curl_norm": identity.entries["curl_norm"],
                "curl_rel_diff": identity.entries["rel_diff"],
                "degenerate": int(degenerate),
            }
        )
        rel = identity.entries["rel_diff"]
        applicable = not identity.flags["not_applicable"] and not degenerate
        checks.append(
            CheckRecord(
                f"curl_identity_alpha_{alpha:g}",
                (rel <= _IDENTITY_TOL) if applicable else True,
                rel,
                _IDENTITY_TOL,
                note="" if applicable else "degenerate field; vacuous",
            )
        )
        fields.append(u)
    return StudyResult(
        kind="audit",
        columns=(
            "alpha",
            "l2",
            "h1",
            "agmon_ratio",
            "l6_ratio",
            "interp_ratio",
            "pressure_ratio",
            "grad_norm",
            "curl_norm",
            "curl_rel_diff",
            "degenerate",
        ),
        rows=rows,
        checks=checks,
        constants=measure_constants(fields),
        extras={"h": cfg.h},
        config=cfg.to_dict(),
        wall_time_s=time.perf_counter() - start,
    )


_RUNNERS = {
    "inversion": run_inversion_study,
    "solution": run_solution_study,
    "tail": run_tail_study,
    "transfer": run_transfer_study,
}


def run_study(cfg: StudyConfig) -> StudyResult:
    """Dispatch to the runner matching ``cfg.kind``."""
    return _RUNNERS[cfg.kind](cfg)


# --------------------------------------------------------------------------
# reports


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return None if not math.isfinite(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def emit_report(result: StudyResult, out_dir) -> list[Path]:
    """Write the study's CSV tables, check records, and metadata.

    Returns the written paths.  CSV bytes depend only on the config on the
    single-threaded path; ``metadata.json`` additionally records wall time.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    table = out / f"{result.kind}.csv"
    _write_csv(table, result.columns, result.rows)
    written.append(table)

    if result.time_rows:
        times = out / f"{result.kind}_times.csv"
        _write_csv(times, result.time_columns, result.time_rows)
        written.append(times)

    checks = out / "checks.csv"
    _write_csv(
        checks,
        ("name", "passed", "measured", "threshold", "note"),
        [
            {
                "name": c.name,
                "passed": int(c.passed),
                "measured": c.measured,
                "threshold": c.threshold,
                "note": c.note,
            }
            for c in result.checks
        ],
    )
    written.append(checks)

    from . import __version__

    meta = {
        "study": result.kind,
        "code_version": __version__,
        "config": result.config,
        "constants": result.constants,
        "wall_time_s": result.wall_time_s,
        "passed": result.passed,
        **{k: v for k, v in result.extras.items()},
    }
    meta_path = out / "metadata.json"
    meta_path.write_text(json.dumps(_json_safe(meta), indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written
