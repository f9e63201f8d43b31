"""Initial-data library, serialization, and run artifacts.

File formats
------------
config      flat ``key = value`` text with sections (see README)
records.csv one row per emitted diagnostics record, 17-significant-digit
            decimal text (bit-exact round trip for doubles)
snapshot    little-endian binary: magic ``PWFL``, version u32, N u32,
            m u32, a f64, b f64, t f64, then m*N*N complex128 spectral
            coefficients (numpy fft2 layout, component-major)
surface     Wavefront OBJ (quad faces, periodic wrap) or csv_grid
manifest    structured text listing every emitted artifact
"""
from __future__ import annotations

import configparser
import datetime
import io as _io
import math
import struct
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsRecord
from .flow import FlowConfig, FlowState, reproject_conformal
from .geometry import ImmersionField, compute_geometry
from .grid import FlatModulus, Grid

SNAPSHOT_MAGIC = b"PWFL"
SNAPSHOT_VERSION = 1
CONFIG_SCHEMA_VERSION = 1


class BadParameters(ValueError):
    """Malformed inputs: parameters out of range or unreadable files."""


class NonConformalInput(ValueError):
    def __init__(self, defect: float):
        self.defect = defect
        super().__init__(
            f"loaded immersion has conformality defect {defect:.3e} > 1e-3"
        )


class UnsupportedAmbientDim(ValueError):
    """OBJ export needs three ambient coordinates."""


# -- initial data ------------------------------------------------------------


def clifford_immersion(N: int) -> FlowState:
    """The flat product torus in R^4 at tau = i; exactly conformal."""
    grid = Grid(N, FlatModulus(0.0, 1.0))
    r = 1.0 / math.sqrt(2.0)
    phi = np.stack(
        [
            r * np.cos(2.0 * np.pi * grid.x1),
            r * np.sin(2.0 * np.pi * grid.x1),
            r * np.cos(2.0 * np.pi * grid.x2),
            r * np.sin(2.0 * np.pi * grid.x2),
        ],
        axis=-1,
    )
    return FlowState(ImmersionField(grid, phi))


def perturbation_field(
    grid: Grid, seed: int, kmax: int = 20, spectral_decay: float = 0.18
) -> np.ndarray:
    """Seeded band-limited random field, identical across resolutions.

    Coefficients are drawn in a fixed (component, k1, k2) order so the
    same seed describes the same continuum field at every N.
    """
    if 2 * kmax >= grid.N:
        raise BadParameters(f"kmax = {kmax} is not resolved at N = {grid.N}")
    rng = np.random.default_rng(seed)
    N = grid.N
    out = np.zeros((N, N, 4))
    for comp in range(4):
        coef = np.zeros((N, N), dtype=np.complex128)
        for k1 in range(-kmax, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                z = rng.standard_normal() + 1j * rng.standard_normal()
                coef[k1, k2] = math.exp(-spectral_decay * math.hypot(k1, k2)) * z
        out[..., comp] = (np.fft.ifft2(coef) * N * N).real
    return out


def clifford_perturbed(
    N: int, seed: int = 1, amplitude: float = 0.01, kmax: int = 20
) -> FlowState:
    """Clifford torus plus a normal random field, reprojected conformal."""
    if amplitude < 0 or amplitude > 0.2:
        raise BadParameters(f"amplitude {amplitude} out of range [0, 0.2]")
    state = clifford_immersion(N)
    bundle = compute_geometry(state.immersion)
    psi = perturbation_field(state.grid, seed, kmax=kmax)
    psi = bundle.project_normal(psi)
    psi /= np.abs(psi).max()
    phi = state.phi + amplitude * psi
    state = FlowState(ImmersionField(state.grid, phi))
    return reproject_conformal(
        state, target_defect=1e-9, max_iter=150, strict=False
    )


def revolution_immersion(N: int, c_over_r: float) -> FlowState:
    """Torus of revolution in R^3 in its conformal parametrization.

    The raw angles are (u, v) with profile radius 1 and center distance
    ``c_over_r``; the conformal longitude sigma satisfies
    d sigma = dv / (c + cos v), giving the rectangular modulus
    b = 1 / sqrt(c^2 - 1).
    """
    c = float(c_over_r)
    if not c > 1.0:
        raise BadParameters("revolution requires c_over_r > 1")
    root = math.sqrt(c * c - 1.0)
    b = 1.0 / root
    grid = Grid(N, FlatModulus(0.0, b))
    # Invert sigma(v): tan(v/2) = sqrt((c+1)/(c-1)) tan(sigma*root/2),
    # branch-tracked through atan2 so v is continuous over one period.
    half = np.pi * grid.x2  # = (sigma / S) * pi with S the sigma-period
    v = 2.0 * np.arctan2(
        math.sqrt((c + 1.0) / (c - 1.0)) * np.sin(half), np.cos(half)
    )
    u = 2.0 * np.pi * grid.x1
    phi = np.stack(
        [
            (c + np.cos(v)) * np.cos(u),
            (c + np.cos(v)) * np.sin(u),
            np.sin(v),
        ],
        axis=-1,
    )
    return FlowState(ImmersionField(grid, phi))


def init_immersion(kind: str, N: int, **params) -> FlowState:
    """Construct initial data by name; see the config schema in README."""
    if kind == "clifford":
        return clifford_immersion(N)
    if kind == "clifford_perturbed":
        return clifford_perturbed(
            N,
            seed=int(params.get("seed", 1)),
            amplitude=float(params.get("amplitude", 0.01)),
            kmax=int(params.get("kmax", 20)),
        )
    if kind == "revolution":
        return revolution_immersion(N, float(params.get("c_over_r", math.sqrt(2.0))))
    if kind == "from_file":
        path = params.get("path")
        if not path:
            raise BadParameters("from_file requires path=...")
        state = read_snapshot(path)
        defect = compute_geometry(state.immersion).defect_sup
        if defect > 1e-3:
            raise NonConformalInput(defect)
        return state
    raise BadParameters(f"unknown initial kind {kind!r}")


# -- snapshots ---------------------------------------------------------------


def write_snapshot(state: FlowState, path: str | Path) -> None:
    """Spectral-coefficient snapshot; exact state resume at any N."""
    grid = state.grid
    N, m = grid.N, state.immersion.m
    mod = grid.modulus
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, N, m))
        fh.write(struct.pack("<ddd", mod.a, mod.b, state.t))
        for comp in range(m):
            coeff = np.fft.fft2(state.phi[..., comp]).astype("<c16")
            fh.write(coeff.tobytes(order="C"))


def read_snapshot(path: str | Path) -> FlowState:
    data = Path(path).read_bytes()
    off = 0

    def need(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise BadParameters(
                f"truncated snapshot {path}: needed {n} bytes at offset {off}, "
                f"file has {len(data)}"
            )
        chunk = data[off : off + n]
        off += n
        return chunk

    if need(4) != SNAPSHOT_MAGIC:
        raise BadParameters(f"{path}: bad magic at offset 0")
    version, N, m = struct.unpack("<III", need(12))
    if version != SNAPSHOT_VERSION:
        raise BadParameters(f"{path}: unsupported snapshot version {version}")
    a, b, t = struct.unpack("<ddd", need(24))
    grid = Grid(N, FlatModulus(a, b))
    phi = np.empty((N, N, m))
    for comp in range(m):
        coeff = np.frombuffer(need(16 * N * N), dtype="<c16").reshape(N, N)
        phi[..., comp] = np.fft.ifft2(coeff).real
    return FlowState(ImmersionField(grid, phi), t=t)


# -- surfaces ----------------------------------------------------------------


def export_surface(
    state: FlowState, path: str | Path, format: str, project: bool = False
) -> None:
    """Write the sampled surface as OBJ (m = 3) or csv_grid (any m)."""
    phi = state.phi
    N, m = state.grid.N, phi.shape[2]
    if format == "obj":
        if m != 3 and not project:
            raise UnsupportedAmbientDim(
                f"obj export needs m = 3, got m = {m}; pass project=True "
                "to keep the first three coordinates"
            )
        pts = phi[..., :3]
        buf = _io.StringIO()
        for i in range(N):
            for j in range(N):
                buf.write(
                    "v %.17g %.17g %.17g\n" % (pts[i, j, 0], pts[i, j, 1], pts[i, j, 2])
                )

        def vid(i: int, j: int) -> int:
            return (i % N) * N + (j % N) + 1

        for i in range(N):
            for j in range(N):
                buf.write(
                    f"f {vid(i, j)} {vid(i + 1, j)} {vid(i + 1, j + 1)} {vid(i, j + 1)}\n"
                )
        Path(path).write_text(buf.getvalue())
    elif format == "csv_grid":
        cols = ",".join(f"phi_{k + 1}" for k in range(m))
        lines = [f"x1,x2,{cols}"]
        for i in range(N):
            for j in range(N):
                vals = ",".join("%.17g" % v for v in phi[i, j])
                lines.append("%.17g,%.17g,%s" % (i / N, j / N, vals))
        Path(path).write_text("\n".join(lines) + "\n")
    else:
        raise BadParameters(f"unknown surface format {format!r}")


def read_csv_grid(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of csv_grid export; returns (coords, values)."""
    lines = Path(path).read_text().strip().split("\n")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    arr = np.array(rows)
    return arr[:, :2], arr[:, 2:]


# -- config ------------------------------------------------------------------

_FLOW_KEYS = {
    "t_end": float,
    "dt_policy": str,
    "dt": float,
    "lambda_cfl": float,
    "kappa": float,
    "tangential": bool,
    "reproject_every": int,
    "record_every": int,
    "max_steps": int,
    "max_retries": int,
    "tol_energy": float,
    "guard_defect": float,
    "guard_b": float,
    "beta": float,
    "guard_R": float,
    "concentration_guard": bool,
}

_INITIAL_KEYS = {
    "kind": str,
    "N": int,
    "seed": int,
    "amplitude": float,
    "kmax": int,
    "c_over_r": float,
    "path": str,
}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep key case
    return cp


def parse_config(text: str) -> dict:
    """Parse the run-config text into a nested plain dict."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise BadParameters(f"config parse error: {exc}") from exc
    out: dict = {}
    for section in cp.sections():
        out[section] = dict(cp.items(section))
    version = int(out.get("schema", {}).get("version", CONFIG_SCHEMA_VERSION))
    if version != CONFIG_SCHEMA_VERSION:
        raise BadParameters(f"unsupported config schema version {version}")
    return out


def serialize_config(config: dict) -> str:
    cp = _parser()
    for section, items in config.items():
        cp[section] = {k: str(v) for k, v in items.items()}
    buf = _io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _coerce(raw: dict, schema: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise BadParameters(f"unknown config key {key!r}")
        typ = schema[key]
        if typ is bool:
            out[key] = str(value).strip().lower() in ("1", "true", "yes", "on")
        else:
            try:
                out[key] = typ(value)
            except ValueError as exc:
                raise BadParameters(f"bad value for {key}: {value!r}") from exc
    return out


def flow_config_from(config: dict) -> FlowConfig:
    raw = _coerce(config.get("flow", {}), _FLOW_KEYS)
    try:
        return FlowConfig(**raw)
    except ValueError as exc:
        raise BadParameters(str(exc)) from exc


def initial_state_from(config: dict) -> FlowState:
    raw = _coerce(config.get("initial", {}), _INITIAL_KEYS)
    kind = raw.pop("kind", "clifford")
    N = raw.pop("N", 32)
    return init_immersion(kind, N, **raw)


# -- records and manifest ----------------------------------------------------


def write_records_csv(records: list[DiagnosticsRecord], path: str | Path) -> None:
    cols = DiagnosticsRecord.columns()
    lines = [",".join(cols)]
    for rec in records:
        vals = []
        for c in cols:
            v = getattr(rec, c)
            vals.append(str(v) if isinstance(v, int) else "%.17g" % v)
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(
    path: str | Path,
    config_text: str,
    status: str,
    started: datetime.datetime,
    finished: datetime.datetime,
    artifacts: dict[str, str],
    message: str = "",
) -> None:
    cp = _parser()
    cp["manifest"] = {
        "schema_version": str(CONFIG_SCHEMA_VERSION),
        "status": status,
        "message": message,
        "started": started.isoformat(),
        "finished": finished.isoformat(),
    }
    cp["artifacts"] = artifacts
    buf = _io.StringIO()
    cp.write(buf)
    buf.write("\n; config echo\n")
    for line in config_text.splitlines():
        buf.write(f"; {line}\n")
    Path(path).write_text(buf.getvalue())
