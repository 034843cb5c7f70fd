"""Plain-text run descriptions and the scenario factory built from them.

A run file is UTF-8 text with one ``key = value`` assignment per line.
Blank lines are skipped and ``#`` starts a comment (whole-line or trailing).
Keys are dotted, values are plain tokens; every parse or validation error
cites ``source:line`` so a typo is a one-glance fix.

Recognized keys::

    grid.Nx  grid.Ny  grid.Nz     resolution (required; Nx, Ny even >= 4)
    grid.L1  grid.L2              horizontal periods        [1.0]
    grid.b0                       reference depth           [1.0]
    bottom                        "flat" or mode rows       [flat]
    init.eta                      mode rows for eta(0)      [rest]
    init.u0                       "zero" or checkpoint path [zero]
    extension.mode                epsilon_poisson | standard_poisson
    extension.epsilon             "auto" or a number in (0, 1)
    time.dt  time.T               step size / final time (required)
    time.checkpoint_every         snapshot every k steps; 0 disables  [0]
    picard.tol                    inner-loop tolerance      [1e-10]
    picard.max_iter               inner-loop budget         [40]
    diag.N                        report depth (levels up to 2N - 2)  [4]
    diag.lambda                   low-frequency weight in (0, 1)      [0.5]
    diag.J_max                    backward time differences, 0 or 1   [1]
    seed                          integer for every random draw       [0]

A mode-row list is ``n1,n2,amplitude`` or ``n1,n2,amplitude,phase`` groups
joined with ``;``.  Each row contributes

    amplitude * cos(2 pi (n1 x1 / L1 + n2 x2 / L2) + phase)

and the bottom profile adds its rows on top of the constant b0 (the result
must stay strictly positive).  With ``extension.epsilon = auto`` the decay
rate and the Jacobian floor come from the top-row search in
:func:`slabflow.extension.select_epsilon`; an explicit epsilon keeps the
floor delta = min(eta0 + b) / (2 b0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from . import evolution as ev
from . import extension as ex
from .errors import ConfigError
from .fields import HorizontalGrid, SurfaceField, VolumeField, VolumeGrid


@dataclass(frozen=True)
class ModeRow:
    """One cosine contribution to a surface profile."""

    n1: int
    n2: int
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if self.n1 == 0 and self.n2 == 0:
            raise ConfigError("mode row (0, 0) is a constant shift; fold it "
                              "into b0 instead")
        for v in (self.amplitude, self.phase):
            if not math.isfinite(v):
                raise ConfigError(f"mode row entries must be finite, got {v!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulation run needs, already type-checked.

    ``epsilon = None`` means "pick it from the initial data"; ``u0`` is
    either the literal string ``zero`` or a path to a checkpoint whose
    velocity (and pressure) seed the run.
    """

    Nx: int
    Ny: int
    Nz: int
    dt: float
    T: float
    L1: float = 1.0
    L2: float = 1.0
    b0: float = 1.0
    bottom: tuple[ModeRow, ...] = ()
    eta0: tuple[ModeRow, ...] = ()
    u0: str = "zero"
    ext_mode: str = "epsilon_poisson"
    epsilon: float | None = None
    checkpoint_every: int = 0
    picard_tol: float = 1e-10
    picard_max: int = 40
    diag_N: int = 4
    diag_lambda: float = 0.5
    diag_J_max: int = 1
    seed: int = 0
    source: str = "<config>"

    def __post_init__(self):
        if self.Nx < 4 or self.Ny < 4 or self.Nx % 2 or self.Ny % 2:
            raise ConfigError("horizontal resolutions must be even and at "
                              f"least 4, got {self.Nx} x {self.Ny}")
        if self.Nz < 8:
            raise ConfigError(f"need at least 8 vertical points, got {self.Nz}")
        for name, v in (("L1", self.L1), ("L2", self.L2), ("b0", self.b0),
                        ("dt", self.dt), ("T", self.T),
                        ("picard.tol", self.picard_tol)):
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        if self.T < self.dt:
            raise ConfigError(f"final time {self.T!r} is shorter than one step {self.dt!r}")
        if self.ext_mode not in ex.MODES:
            raise ConfigError(f"extension mode must be one of {ex.MODES}, "
                              f"got {self.ext_mode!r}")
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1) or be auto, got {self.epsilon!r}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint interval cannot be negative")
        if self.picard_max < 1:
            raise ConfigError("picard.max_iter must be at least 1")
        if self.diag_N < 1:
            raise ConfigError(f"diag.N must be at least 1, got {self.diag_N}")
        if not 0.0 < self.diag_lambda < 1.0:
            raise ConfigError(f"diag.lambda must lie in (0, 1), got {self.diag_lambda!r}")
        if self.diag_J_max not in (0, 1):
            raise ConfigError(f"diag.J_max must be 0 or 1, got {self.diag_J_max!r}")
        if not self.u0:
            raise ConfigError("init.u0 must be 'zero' or a checkpoint path")


# ---------------------------------------------------------------------------
# the flat-text grammar


def _parse_int(tok: str) -> int:
    try:
        return int(tok, 10)
    except ValueError:
        raise ConfigError(f"expected an integer, got {tok!r}") from None


def _parse_float(tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ConfigError(f"expected a number, got {tok!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {tok!r}")
    return v


def _parse_rows(tok: str) -> tuple[ModeRow, ...]:
    rows = []
    for part in tok.split(";"):
        part = part.strip()
        if not part:
            raise ConfigError("empty mode row (stray ';'?)")
        pieces = [p.strip() for p in part.split(",")]
        if len(pieces) not in (3, 4):
            raise ConfigError(f"mode row needs n1,n2,amplitude[,phase], got {part!r}")
        n1, n2 = _parse_int(pieces[0]), _parse_int(pieces[1])
        amp = _parse_float(pieces[2])
        phase = _parse_float(pieces[3]) if len(pieces) == 4 else 0.0
        rows.append(ModeRow(n1, n2, amp, phase))
    return tuple(rows)


def _parse_bottom(tok: str):
    return () if tok == "flat" else _parse_rows(tok)


def _parse_epsilon(tok: str):
    return None if tok == "auto" else _parse_float(tok)


def _parse_u0(tok: str) -> str:
    return tok


# key -> (RunConfig attribute, coercion)
_KEYS = {
    "grid.Nx": ("Nx", _parse_int),
    "grid.Ny": ("Ny", _parse_int),
    "grid.Nz": ("Nz", _parse_int),
    "grid.L1": ("L1", _parse_float),
    "grid.L2": ("L2", _parse_float),
    "grid.b0": ("b0", _parse_float),
    "bottom": ("bottom", _parse_bottom),
    "init.eta": ("eta0", _parse_rows),
    "init.u0": ("u0", _parse_u0),
    "extension.mode": ("ext_mode", str),
    "extension.epsilon": ("epsilon", _parse_epsilon),
    "time.dt": ("dt", _parse_float),
    "time.T": ("T", _parse_float),
    "time.checkpoint_every": ("checkpoint_every", _parse_int),
    "picard.tol": ("picard_tol", _parse_float),
    "picard.max_iter": ("picard_max", _parse_int),
    "diag.N": ("diag_N", _parse_int),
    "diag.lambda": ("diag_lambda", _parse_float),
    "diag.J_max": ("diag_J_max", _parse_int),
    "seed": ("seed", _parse_int),
}

_REQUIRED = ("grid.Nx", "grid.Ny", "grid.Nz", "time.dt", "time.T")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Turn run-file text into a RunConfig, citing source:line on any error."""
    values: dict[str, object] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, tok = line.partition("=")
        key, tok = key.strip(), tok.strip()
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: {key!r} already set on line {seen[key]}")
        if not tok:
            raise ConfigError(f"{source}:{lineno}: {key!r} has no value")
        seen[key] = lineno
        attr, coerce = _KEYS[key]
        try:
            values[attr] = coerce(tok)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None

    missing = [k for k in _REQUIRED if k not in seen]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")
    try:
        return RunConfig(source=source, **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    """Read and parse a run file from disk."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror or exc}") from None
    return parse_config(text, source=str(path))


# ---------------------------------------------------------------------------
# from description to concrete objects


def build_grid(cfg: RunConfig) -> VolumeGrid:
    h = HorizontalGrid(cfg.L1, cfg.L2, cfg.Nx, cfg.Ny)
    return VolumeGrid(h, cfg.b0, cfg.Nz)


def mode_surface(h: HorizontalGrid, rows, offset: float = 0.0) -> SurfaceField:
    """Sum of cosine rows on the grid, plus a constant offset."""
    X1, X2 = np.meshgrid(h.x1, h.x2, indexing="ij")
    vals = np.full((h.Nx, h.Ny), float(offset))
    for r in rows:
        vals += r.amplitude * np.cos(
            2.0 * np.pi * (r.n1 * X1 / h.L1 + r.n2 * X2 / h.L2) + r.phase)
    return SurfaceField(h, vals)


def build_bottom(cfg: RunConfig, h: HorizontalGrid) -> SurfaceField:
    b = mode_surface(h, cfg.bottom, offset=cfg.b0)
    if float(np.min(b.values)) <= 0.0:
        raise ConfigError(f"{cfg.source}: bottom profile dips to "
                          f"{float(np.min(b.values)):.3g}; it must stay positive")
    return b


def build_eta0(cfg: RunConfig, h: HorizontalGrid) -> SurfaceField:
    return mode_surface(h, cfg.eta0)


def step_config(cfg: RunConfig) -> ev.StepConfig:
    return ev.StepConfig(dt=cfg.dt, picard_tol=cfg.picard_tol,
                         picard_max=cfg.picard_max)


def diag_config(cfg: RunConfig) -> dg.DiagConfig:
    return dg.DiagConfig(n_level=cfg.diag_N + 2, lam=cfg.diag_lambda,
                         J_max=cfg.diag_J_max)


def build_state(cfg: RunConfig) -> ev.FlowState:
    """Assemble the starting state: fields, decay rate, Jacobian floor, pressure."""
    grid = build_grid(cfg)
    h = grid.horizontal
    b = build_bottom(cfg, h)
    eta0 = build_eta0(cfg, h)

    if cfg.epsilon is None:
        epsilon, delta = ex.select_epsilon(eta0, b, cfg.b0)
    else:
        epsilon = cfg.epsilon
        gap = float(np.min(eta0.values + b.values))
        if gap <= 0.0:
            raise ConfigError(f"{cfg.source}: initial surface touches the bottom")
        delta = gap / (2.0 * cfg.b0)
    ext_cfg = ex.ExtensionConfig(cfg.ext_mode, epsilon)

    if cfg.u0 == "zero":
        zeros = VolumeField(grid, np.zeros((h.Nx, h.Ny, cfg.Nz)))
        u0 = (zeros, zeros, zeros)
        p0 = None
    else:
        from . import io as _io  # deferred: io itself needs evolution
        snap = _io.read_checkpoint(cfg.u0)
        if snap.u[0].grid != grid:
            raise ConfigError(f"{cfg.source}: init.u0 checkpoint grid does not "
                              "match grid.* settings")
        u0, p0 = snap.u, snap.p
    return ev.initial_state(eta0, u0, b, grid, epsilon, delta, p0=p0,
                            ext_cfg=ext_cfg)
