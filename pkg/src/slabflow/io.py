"""On-disk formats: energy-report series and binary state snapshots.

Series files are JSON Lines.  The first line is a header
``{"format": "slabflow-series", "version": 1, ...}``; every following line
is one report with the scalar fields spelled out, the advisory flags as a
string list, and the monitored quotients as ``{label, value, theta,
reference}`` objects.  A CSV mirror with the scalar columns is written next
to the JSONL file so the series can be eyeballed in anything that reads
tables.

Snapshots ("checkpoints") are little-endian binary:

    bytes 0..3    magic ``SLBW``
    u32           format version (currently 1)
    u32 x 3       Nx, Ny, Nz
    f64 x 6       L1, L2, b0, epsilon, delta, t
    u32           extension-mode index into :data:`slabflow.extension.MODES`
    f64           extension rate parameter (NaN when the mode ignores it)
    u32           number of trailing prior states (0 or 1)
    f64           time of the prior state (NaN when absent)
    u32           flag word; bit 0 set when the saved instant has a surface
                  rate attached to its geometry

followed by raw float64 arrays in C order: bottom, eta, eta_t (surface
shaped), then u1, u2, u3, p (volume shaped), then the same five fields
again for the prior state when present.  Storing eta_t lets the reader
rebuild the geometry of the saved instant bit-for-bit, so a resumed run and
its diagnostics are exactly the ones the uninterrupted run would produce.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import struct
from dataclasses import asdict

import numpy as np

from . import evolution as ev
from . import extension as ex
from . import geometry as geo
from .diagnostics import EnergyReport, RatioEntry
from .errors import CheckpointError, ConfigError
from .fields import HorizontalGrid, SurfaceField, VolumeField, VolumeGrid

SERIES_FORMAT = "slabflow-series"
SERIES_VERSION = 1

SCALAR_FIELDS = (
    "t", "E_n2", "D_n2", "E_n", "D_n", "E_n1", "F2N", "kappa", "GN",
    "res_geometric", "res_perturbed",
    "sup_E2N", "sup_weighted1", "sup_weighted2", "sup_F2N_ratio",
)


def report_to_dict(report: EnergyReport) -> dict:
    d = {name: float(getattr(report, name)) for name in SCALAR_FIELDS}
    d["flags"] = list(report.flags)
    d["ratios"] = [asdict(r) for r in report.monitored_ratios]
    return d


def report_from_dict(d: dict) -> EnergyReport:
    try:
        scalars = {name: float(d[name]) for name in SCALAR_FIELDS}
        ratios = tuple(RatioEntry(r["label"], float(r["value"]),
                                  float(r["theta"]), r["reference"])
                       for r in d.get("ratios", ()))
        flags = tuple(str(f) for f in d.get("flags", ()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed series record: {exc!r}") from None
    return EnergyReport(monitored_ratios=ratios, flags=flags, **scalars)


class SeriesWriter:
    """Append reports to a JSONL file and keep the CSV mirror in step."""

    def __init__(self, path, csv_path=None, meta: dict | None = None):
        self.path = str(path)
        self.csv_path = str(csv_path) if csv_path is not None else _csv_twin(self.path)
        header = {"format": SERIES_FORMAT, "version": SERIES_VERSION,
                  "fields": list(SCALAR_FIELDS)}
        if meta:
            header.update(meta)
        self._jf = open(self.path, "w", encoding="utf-8")
        self._jf.write(json.dumps(header) + "\n")
        self._cf = open(self.csv_path, "w", encoding="utf-8", newline="")
        self._csv = csv.writer(self._cf)
        self._csv.writerow(SCALAR_FIELDS)

    def append(self, report: EnergyReport) -> None:
        d = report_to_dict(report)
        self._jf.write(json.dumps(d) + "\n")
        self._csv.writerow(f"{d[name]:.17g}" for name in SCALAR_FIELDS)

    def close(self) -> None:
        self._jf.close()
        self._cf.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _csv_twin(path: str) -> str:
    stem = path[:-6] if path.endswith(".jsonl") else path
    return stem + ".csv"


def write_series(path, reports, csv_path=None, meta=None) -> None:
    """One-shot convenience wrapper around SeriesWriter."""
    with SeriesWriter(path, csv_path=csv_path, meta=meta) as w:
        for r in reports:
            w.append(r)


def read_series(path) -> list[EnergyReport]:
    """Load a JSONL series back into report objects, validating the header."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read series {path!r}: "
                          f"{exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not a text series file") from None
    if not lines:
        raise ConfigError(f"{path}: empty series file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not JSONL ({exc})") from None
    if header.get("format") != SERIES_FORMAT:
        raise ConfigError(f"{path}: not a series file (format {header.get('format')!r})")
    if header.get("version") != SERIES_VERSION:
        raise ConfigError(f"{path}: unsupported series version {header.get('version')!r}")
    reports = []
    for i, ln in enumerate(lines[1:], start=2):
        try:
            d = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{i}: bad record ({exc})") from None
        try:
            reports.append(report_from_dict(d))
        except ConfigError as exc:
            raise ConfigError(f"{path}:{i}: {exc}") from None
    return reports


# ---------------------------------------------------------------------------
# binary snapshots

MAGIC = b"SLBW"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<4sI3I6dIdIdI")
_FLAG_HAS_RATE = 1


def _raw(f) -> bytes:
    return np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def _state_blobs(state: ev.FlowState, eta_t: SurfaceField | None) -> list[bytes]:
    h = state.grid.horizontal
    rate = eta_t if eta_t is not None else SurfaceField(h, np.zeros((h.Nx, h.Ny)))
    blobs = [_raw(state.eta), _raw(rate)]
    blobs += [_raw(c) for c in state.u]
    blobs.append(_raw(state.p))
    return blobs


def write_checkpoint(path, state: ev.FlowState) -> None:
    """Snapshot a state (and at most one ring entry) to a SLBW file."""
    g = state.geometry
    grid = g.grid
    h = grid.horizontal
    cfg = g.ext_cfg
    prev = state.history[0] if state.history else None
    ext_eps = cfg.epsilon if cfg.epsilon is not None else float("nan")
    head = _HEAD.pack(MAGIC, CHECKPOINT_VERSION, h.Nx, h.Ny, grid.Nz,
                      h.L1, h.L2, grid.b0, g.epsilon, g.delta, state.t,
                      ex.MODES.index(cfg.mode), ext_eps,
                      1 if prev is not None else 0,
                      prev.t if prev is not None else float("nan"),
                      _FLAG_HAS_RATE if g.eta_t is not None else 0)
    blobs = [head, _raw(g.bottom)]
    blobs += _state_blobs(state, g.eta_t)
    if prev is not None:
        # drop the eta slot's rate; a ring entry's geometry is never consulted
        blobs += _state_blobs(prev, None)
    with open(path, "wb") as fh:
        for b in blobs:
            fh.write(b)


class _Cursor:
    def __init__(self, buf: bytes, path: str):
        self.buf, self.off, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated (needed {n} more bytes)")
        chunk = self.buf[self.off:self.off + n]
        self.off += n
        return chunk

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(8 * n)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def read_checkpoint(path) -> ev.FlowState:
    """Rebuild a flow state, geometry included, from a SLBW file."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path!r}: "
                              f"{exc.strerror or exc}") from None
    cur = _Cursor(buf, str(path))
    try:
        (magic, version, Nx, Ny, Nz, L1, L2, b0, epsilon, delta, t,
         mode_idx, ext_eps, nprev, t_prev, flags) = _HEAD.unpack(cur.take(_HEAD.size))
    except struct.error as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from None
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}; not a snapshot file")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported snapshot version {version}")
    if not 0 <= mode_idx < len(ex.MODES):
        raise CheckpointError(f"{path}: unknown extension-mode index {mode_idx}")
    if nprev not in (0, 1):
        raise CheckpointError(f"{path}: prior-state count must be 0 or 1, got {nprev}")

    h = HorizontalGrid(L1, L2, Nx, Ny)
    grid = VolumeGrid(h, b0, Nz)
    s2, v3 = (Nx, Ny), (Nx, Ny, Nz)
    bottom = SurfaceField(h, cur.array(s2))
    ext_cfg = ex.ExtensionConfig(ex.MODES[mode_idx],
                                 None if np.isnan(ext_eps) else ext_eps)

    def one_state(tval, with_rate):
        eta = SurfaceField(h, cur.array(s2))
        rate_vals = cur.array(s2)
        u = tuple(VolumeField(grid, cur.array(v3)) for _ in range(3))
        p = VolumeField(grid, cur.array(v3))
        rate = SurfaceField(h, rate_vals) if with_rate else None
        gstate = geo.build_geometry(eta, rate, bottom, grid, epsilon, delta,
                                    ext_cfg=ext_cfg)
        return ev.FlowState(u=u, p=p, eta=eta, t=tval, geometry=gstate)

    state = one_state(t, with_rate=bool(flags & _FLAG_HAS_RATE))
    if nprev:
        prev = one_state(t_prev, with_rate=False)
        state = dataclasses.replace(state, history=(prev,))
    if cur.off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - cur.off} trailing bytes")
    return state
