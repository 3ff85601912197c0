"""Command-line pipelines with deterministic file output.

Each subcommand runs one pipeline and writes fixed-schema CSV/JSON files
plus rendered figures into the output directory, all staged in a
temporary directory first and published by rename so interrupted runs
never leave partial output.  Identical configurations reproduce the
data files byte for byte; floats are written in their shortest
round-trip representation.

Exit codes: 0 success, 2 configuration error, 3 domain error (gauge
singularity, critical mass, unmatched flip, ambiguous branch, ...),
4 insufficient cycles for a period estimate.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, InsufficientCycles, QwzmemError
from .memory import (
    DEFAULT_PROBE_RADIUS,
    PROBE_NAMES,
    PROBE_PI_PI,
    PROBE_ZERO_ZERO,
    coincidence_test,
    decode_joint,
    decode_quench_mass,
    default_t_max,
    estimate_period,
    flip_times,
    prequench_field,
    probe_node,
    scan_period_vs_mass,
    vorticity_series,
)
from .model import (
    GAUGE_A,
    GAUGE_B,
    KGrid,
    ground_state_field,
    ground_state_field_global,
    ground_state_gauge_a,
    ground_state_gauge_b,
)
from .quench import QuenchProtocol, evolve_field, loschmidt_series
from .topology import (
    DEFAULT_DISK_RADIUS,
    berry_connection,
    chern_fhs,
    chern_patchwise,
    hall_conductance,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_CYCLES = 4

MANIFEST_SCHEMA = 1
#: per-file schema versions recorded in the manifest
FILE_SCHEMAS = {
    "phase_diagram": 1,
    "vorticity": 1,
    "loschmidt": 1,
    "period_scan": 1,
    "coincidence": 1,
    "decode": 1,
    "field": 1,
    "figure": 1,
}

DEFAULT_PHASE_MASSES = (-3.0, -1.0, 1.0, 3.0)
DEFAULT_SCAN_MASSES = (-1.5, -1.0, -0.5, 0.5, 1.0, 1.5)

COMMANDS = (
    "phase-diagram",
    "quench",
    "scan-period",
    "coincidence",
    "decode",
    "export-field",
)


# ----------------------------------------------------------------------
# Run configuration
# ----------------------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved configuration of one pipeline run."""

    command: str
    m_initial: float = 3.0
    m_quench: float = 1.0
    n_side: int = 100
    dt: float = 0.01
    t_max: float | None = None  # None: ten theoretical periods, capped
    delay: float = 0.0
    probe: object = PROBE_PI_PI  # name or explicit (kx, ky)
    disk_radius: float = DEFAULT_DISK_RADIUS
    probe_radius: float = DEFAULT_PROBE_RADIUS
    masses: tuple | None = None  # None: per-command default list
    time: float = 0.0  # field-snapshot instant
    hint: str | None = None
    seed: int = 0
    output_dir: str | None = None  # None: runs/<command>
    plot: bool = True


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command"}


def _flatten_config(doc, out=None, path=""):
    """Accept one level of nesting in the config file; leaves must be
    known RunConfig keys."""
    if out is None:
        out = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file must be a mapping, got {type(doc).__name__}")
    for key, value in doc.items():
        if isinstance(value, dict):
            _flatten_config(value, out, f"{path}{key}.")
        elif key in _CONFIG_KEYS:
            if key in out:
                raise ConfigError(f"config key {key!r} given more than once")
            out[key] = value
        else:
            raise ConfigError(f"unknown config key {path}{key!r}")
    return out


def load_config(command: str, config_path: str | None, overrides: dict) -> RunConfig:
    """Merge the config file (if any) with CLI flag overrides; flags win."""
    values: dict = {}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path) as fh:
            try:
                doc = yaml.safe_load(fh) or {}
            except yaml.YAMLError as err:
                raise ConfigError(f"config file is not valid YAML: {err}") from err
        values.update(_flatten_config(doc))
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(command=command, **values)
    validate_config(cfg)
    return cfg


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate_config(cfg: RunConfig) -> None:
    """Check every statically checkable precondition before any work."""
    _require(cfg.command in COMMANDS, f"unknown command {cfg.command!r}")
    _require(
        isinstance(cfg.n_side, (int, np.integer)) and not isinstance(cfg.n_side, bool),
        f"n_side must be an integer, got {cfg.n_side!r}",
    )
    _require(
        cfg.n_side >= 4 and cfg.n_side % 2 == 0,
        f"n_side must be even and >= 4, got {cfg.n_side}",
    )
    for name in ("m_initial", "m_quench", "dt", "delay", "time"):
        v = getattr(cfg, name)
        _require(
            isinstance(v, (int, float)) and np.isfinite(v),
            f"{name} must be a finite number, got {v!r}",
        )
    _require(cfg.dt > 0, f"dt must be positive, got {cfg.dt}")
    _require(cfg.delay >= 0, f"delay must be nonnegative, got {cfg.delay}")
    _require(cfg.time >= 0, f"time must be nonnegative, got {cfg.time}")
    if cfg.t_max is not None:
        _require(
            np.isfinite(cfg.t_max) and cfg.t_max >= cfg.dt,
            f"t_max must be at least dt={cfg.dt}, got {cfg.t_max!r}",
        )
    delta_k = 2.0 * np.pi / cfg.n_side
    used_radii = {
        "phase-diagram": ("disk_radius",),
        "quench": ("probe_radius",),
        "scan-period": ("probe_radius",),
        "coincidence": ("probe_radius",),
        "decode": ("probe_radius",),
        "export-field": (),
    }[cfg.command]
    for name in ("disk_radius", "probe_radius"):
        r = getattr(cfg, name)
        _require(
            isinstance(r, (int, float)) and np.isfinite(r) and r > 0,
            f"{name} must be a positive number, got {r!r}",
        )
        if name in used_radii:
            _require(
                r >= delta_k,
                f"{name}={r} is below one grid spacing {delta_k:.4f}; "
                "increase the radius or n_side",
            )
            _require(r < np.pi / 2, f"{name}={r} too large for the zone")
    if cfg.hint is not None:
        _require(
            cfg.hint in ("above", "below"),
            f"hint must be 'above' or 'below', got {cfg.hint!r}",
        )
    _require(
        isinstance(cfg.seed, (int, np.integer)),
        f"seed must be an integer, got {cfg.seed!r}",
    )
    if cfg.masses is not None:
        _require(
            len(cfg.masses) > 0
            and all(isinstance(m, (int, float)) and np.isfinite(m) for m in cfg.masses),
            f"masses must be a nonempty list of finite numbers, got {cfg.masses!r}",
        )
    _parse_probe_spec(cfg.probe)  # raises ConfigError on bad values


def _parse_probe_spec(spec):
    """Normalize a probe given as a name or an explicit (kx, ky) pair."""
    if isinstance(spec, str):
        if spec in PROBE_NAMES:
            return spec
        parts = spec.split(",")
        if len(parts) == 2:
            try:
                return (float(parts[0]), float(parts[1]))
            except ValueError:
                pass
        raise ConfigError(
            f"probe must be one of {PROBE_NAMES} or 'kx,ky', got {spec!r}"
        )
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        try:
            return (float(spec[0]), float(spec[1]))
        except (TypeError, ValueError):
            pass
    raise ConfigError(f"probe must be a name or a (kx, ky) pair, got {spec!r}")


def _resolve_probe(cfg: RunConfig, grid: KGrid):
    """Return (name or None, grid node) for the configured probe."""
    spec = _parse_probe_spec(cfg.probe)
    if isinstance(spec, str):
        return spec, probe_node(grid, spec)
    node = grid.nearest_node(*spec)
    half = grid.n_side // 2
    if node == (half, half):
        return PROBE_PI_PI, node
    if node == (0, 0):
        return PROBE_ZERO_ZERO, node
    return None, node


# ----------------------------------------------------------------------
# Deterministic file output
# ----------------------------------------------------------------------

def _fmt(value) -> str:
    """Shortest round-trip text for a table cell."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: str, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(_fmt(cell) for cell in row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _file_kind(name: str) -> str:
    if name.endswith(".png"):
        return "figure"
    if name.startswith("field_t"):
        return "field"
    return name.rsplit(".", 1)[0]


def _publish(stage: str, out_dir: str) -> None:
    """Move the staged run into place: whole-directory rename when the
    target does not exist yet, per-file replace otherwise."""
    if not os.path.exists(out_dir):
        try:
            os.rename(stage, out_dir)
            return
        except OSError:
            os.makedirs(out_dir, exist_ok=True)
    for name in sorted(os.listdir(stage)):
        os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    os.rmdir(stage)


def _config_echo(cfg: RunConfig) -> dict:
    echo = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = list(v)
        echo[f.name] = v
    return echo


# ----------------------------------------------------------------------
# Pipelines (each writes its files into the stage directory)
# ----------------------------------------------------------------------

def _resolved_t_max(cfg: RunConfig, k) -> float:
    if cfg.t_max is not None:
        return float(cfg.t_max)
    return default_t_max(cfg.m_quench, k) + cfg.delay


def _protocol(cfg: RunConfig, k) -> QuenchProtocol:
    return QuenchProtocol(
        m_initial=cfg.m_initial,
        m_quench=cfg.m_quench,
        dt=cfg.dt,
        t_max=_resolved_t_max(cfg, k),
        delay=cfg.delay,
    )


def _loschmidt_ready_field(cfg: RunConfig, grid: KGrid, node, probe):
    """Pre-quench field regular on the probe loop, with the probe node
    itself patched from the other gauge if needed (the pointwise
    Loschmidt overlap is phase invariant, so the patch is harmless)."""
    field = prequench_field(cfg.m_initial, grid, probe, cfg.probe_radius)
    i, j = node
    if field.excluded[i, j]:
        k = grid.node_momentum(i, j)
        psi = (
            ground_state_gauge_a(cfg.m_initial, k)
            if field.gauge == GAUGE_B
            else ground_state_gauge_b(cfg.m_initial, k)
        )
        field.c1[i, j] = psi.c1
        field.c2[i, j] = psi.c2
        field.excluded[i, j] = False
    return field


def _quench_products(cfg: RunConfig, grid: KGrid):
    name, node = _resolve_probe(cfg, grid)
    k = grid.node_momentum(*node)
    protocol = _protocol(cfg, k)
    series = vorticity_series(protocol, grid, node, radius=cfg.probe_radius)
    field = _loschmidt_ready_field(cfg, grid, node, node)
    loschmidt = loschmidt_series(field, protocol, node)
    return name, node, protocol, series, loschmidt


def _write_vorticity_csv(stage: str, series) -> None:
    _write_csv(
        os.path.join(stage, "vorticity.csv"),
        "t,index,raw_winding",
        zip(series.times, series.indices, series.raw_windings),
    )


def _write_loschmidt_csv(stage: str, loschmidt) -> None:
    _write_csv(
        os.path.join(stage, "loschmidt.csv"),
        "t,re,im,abs",
        zip(
            loschmidt.times,
            np.real(loschmidt.values),
            np.imag(loschmidt.values),
            np.abs(loschmidt.values),
        ),
    )


def _run_phase_diagram(cfg: RunConfig, grid: KGrid, stage: str) -> list[str]:
    masses = cfg.masses if cfg.masses is not None else DEFAULT_PHASE_MASSES
    rows = []
    for m in masses:
        c_patch = chern_patchwise(float(m), grid, cfg.disk_radius)
        c_flux = chern_fhs(ground_state_field_global(float(m), grid))
        rows.append(
            {
                "m": float(m),
                "c_patchwise": c_patch,
                "c_fhs": c_flux,
                "sigma_xy": hall_conductance(c_patch),
            }
        )
    _write_csv(
        os.path.join(stage, "phase_diagram.csv"),
        "m,c_patchwise,c_fhs,sigma_xy",
        ([r["m"], r["c_patchwise"], r["c_fhs"], r["sigma_xy"]] for r in rows),
    )
    out = ["phase_diagram.csv"]
    if cfg.plot:
        from . import report

        report.render_phase_diagram(rows, os.path.join(stage, "phase_diagram.png"))
        out.append("phase_diagram.png")
    return out


def _run_quench(cfg: RunConfig, grid: KGrid, stage: str) -> list[str]:
    _, _, _, series, loschmidt = _quench_products(cfg, grid)
    _write_vorticity_csv(stage, series)
    _write_loschmidt_csv(stage, loschmidt)
    out = ["vorticity.csv", "loschmidt.csv"]
    if cfg.plot:
        from . import report

        report.render_vorticity(series, os.path.join(stage, "vorticity.png"))
        report.render_loschmidt(loschmidt, os.path.join(stage, "loschmidt.png"))
        out.extend(["vorticity.png", "loschmidt.png"])
    return out


def _run_scan_period(cfg: RunConfig, grid: KGrid, stage: str) -> list[str]:
    _, node = _resolve_probe(cfg, grid)
    masses = cfg.masses if cfg.masses is not None else DEFAULT_SCAN_MASSES
    rows = scan_period_vs_mass(
        cfg.m_initial,
        [float(m) for m in masses],
        grid,
        node,
        dt=cfg.dt,
        radius=cfg.probe_radius,
    )
    _write_csv(
        os.path.join(stage, "period_scan.csv"),
        "m_quench,period_measured,period_theory,ratio,n_cycles",
        (
            [r.m_quench, r.period, r.period_theory, r.ratio, r.n_cycles]
            for r in rows
        ),
    )
    out = ["period_scan.csv"]
    if cfg.plot:
        from . import report

        report.render_period_scan(rows, os.path.join(stage, "period_scan.png"))
        out.append("period_scan.png")
    return out


def _run_coincidence(cfg: RunConfig, grid: KGrid, stage: str) -> list[str]:
    _, _, _, series, loschmidt = _quench_products(cfg, grid)
    rep = coincidence_test(loschmidt, series)
    _write_vorticity_csv(stage, series)
    _write_loschmidt_csv(stage, loschmidt)
    _write_csv(
        os.path.join(stage, "coincidence.csv"),
        "flip,matched,offset",
        zip(rep.flips, rep.matched, rep.offsets),
    )
    out = ["vorticity.csv", "loschmidt.csv", "coincidence.csv"]
    if cfg.plot:
        from . import report

        report.render_coincidence(
            loschmidt, rep, os.path.join(stage, "coincidence.png")
        )
        out.append("coincidence.png")
    return out


def _run_decode(cfg: RunConfig, grid: KGrid, stage: str) -> list[str]:
    periods = {}

    def estimate_at(probe_name: str):
        sub = replace(cfg, probe=probe_name)
        _, node = _resolve_probe(sub, grid)
        k = grid.node_momentum(*node)
        series = vorticity_series(
            _protocol(sub, k), grid, node, radius=cfg.probe_radius
        )
        est = estimate_period(flip_times(series), cfg.dt)
        periods[probe_name] = {
            "period": est.period,
            "uncertainty": est.uncertainty,
            "n_flips": est.n_flips,
            "n_cycles": est.n_cycles_used,
        }
        return est

    if cfg.hint is not None:
        name, _ = _resolve_probe(cfg, grid)
        if name is None:
            raise ConfigError(
                "decoding requires a named probe (pi-pi or zero-zero)"
            )
        decoded = decode_quench_mass(estimate_at(name), name, cfg.hint)
    else:
        decoded = decode_joint(
            estimate_at(PROBE_PI_PI), estimate_at(PROBE_ZERO_ZERO)
        )
    _write_json(
        os.path.join(stage, "decode.json"),
        {
            "m_quench": decoded.m_quench,
            "uncertainty": decoded.uncertainty,
            "candidates": list(decoded.candidates),
            "probe": decoded.probe,
            "hint": cfg.hint,
            "periods": periods,
        },
    )
    return ["decode.json"]


def _run_export_field(cfg: RunConfig, grid: KGrid, stage: str) -> list[str]:
    field0 = ground_state_field(
        cfg.m_initial, grid, GAUGE_B, exclude_singular=True
    )
    t_eff = max(0.0, cfg.time - cfg.delay)
    evolved = evolve_field(field0, cfg.m_quench, t_eff)
    conn = berry_connection(evolved)
    with np.errstate(invalid="ignore"):
        density = np.abs(evolved.c1) ** 2
    name = f"field_t{cfg.time:g}.csv"
    rows = []
    for i in range(grid.n_side):
        for j in range(grid.n_side):
            rows.append(
                [
                    grid.ks[i],
                    grid.ks[j],
                    conn.ax[i, j],
                    conn.ay[i, j],
                    density[i, j],
                    int(evolved.excluded[i, j]),
                ]
            )
    _write_csv(os.path.join(stage, name), "kx,ky,ax,ay,density1,flag", rows)
    out = [name]
    if cfg.plot:
        from . import report

        fig_name = f"field_t{cfg.time:g}.png"
        report.render_field(
            grid, conn, density, os.path.join(stage, fig_name), cfg.time
        )
        out.append(fig_name)
    return out


_PIPELINES = {
    "phase-diagram": _run_phase_diagram,
    "quench": _run_quench,
    "scan-period": _run_scan_period,
    "coincidence": _run_coincidence,
    "decode": _run_decode,
    "export-field": _run_export_field,
}


def run(cfg: RunConfig) -> dict:
    """Execute the configured pipeline; returns the manifest dict."""
    validate_config(cfg)
    started = time.monotonic()
    grid = KGrid(cfg.n_side)
    out_dir = cfg.output_dir or os.path.join("runs", cfg.command)
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".stage-", dir=parent)
    try:
        names = _PIPELINES[cfg.command](cfg, grid, stage)
        manifest = {
            "schema": {"manifest": MANIFEST_SCHEMA},
            "version": __version__,
            "command": cfg.command,
            "config": _config_echo(cfg),
            "files": {
                name: {
                    "sha256": _sha256(os.path.join(stage, name)),
                    "bytes": os.path.getsize(os.path.join(stage, name)),
                    "schema": FILE_SCHEMAS[_file_kind(name)],
                }
                for name in sorted(names)
            },
            "wall_time_s": round(time.monotonic() - started, 6),
        }
        _write_json(os.path.join(stage, "manifest.json"), manifest)
        _publish(stage, out_dir)
    except BaseException:
        import shutil

        shutil.rmtree(stage, ignore_errors=True)
        raise
    return manifest


# ----------------------------------------------------------------------
# Argument parsing and entry point
# ----------------------------------------------------------------------

def _masses_flag(text: str):
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"masses must be comma-separated numbers, got {text!r}"
        ) from err


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file; flags override it")
    common.add_argument("--m-initial", type=float, dest="m_initial")
    common.add_argument("--m-quench", type=float, dest="m_quench")
    common.add_argument("--n-side", type=int, dest="n_side")
    common.add_argument("--dt", type=float)
    common.add_argument("--t-max", type=float, dest="t_max")
    common.add_argument("--delay", type=float)
    common.add_argument(
        "--probe", help="pi-pi, zero-zero, or explicit 'kx,ky'"
    )
    common.add_argument("--disk-radius", type=float, dest="disk_radius")
    common.add_argument("--probe-radius", type=float, dest="probe_radius")
    common.add_argument("--masses", type=_masses_flag)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", dest="output_dir")
    common.add_argument(
        "--no-plot",
        action="store_const",
        const=False,
        dest="plot",
        help="skip figure rendering",
    )

    parser = argparse.ArgumentParser(
        prog="qwzmem",
        description=(
            "Two-band lattice model pipelines: Chern phase diagram, "
            "quench dynamics, vortex-oscillation readout."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "phase-diagram",
        parents=[common],
        help="Chern numbers and Hall conductance over a mass list",
    )
    sub.add_parser(
        "quench",
        parents=[common],
        help="vorticity and Loschmidt series for one quench",
    )
    sub.add_parser(
        "scan-period",
        parents=[common],
        help="flip period against the gap law over a mass list",
    )
    sub.add_parser(
        "coincidence",
        parents=[common],
        help="pair vorticity flips with Loschmidt sign changes",
    )
    decode = sub.add_parser(
        "decode",
        parents=[common],
        help="recover the post-quench mass from the flip period",
    )
    decode.add_argument(
        "--hint",
        choices=("above", "below"),
        help="branch hint for single-probe decoding (default: joint decode)",
    )
    export = sub.add_parser(
        "export-field",
        parents=[common],
        help="connection-field snapshot at one instant",
    )
    export.add_argument(
        "--time", type=float, help="snapshot instant (default 0)"
    )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        cfg = load_config(command, config_path, overrides)
        manifest = run(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientCycles as err:
        print(f"insufficient cycles: {err}", file=sys.stderr)
        return EXIT_CYCLES
    except QwzmemError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    out_dir = cfg.output_dir or os.path.join("runs", cfg.command)
    for name in sorted(manifest["files"]):
        print(os.path.join(out_dir, name))
    print(os.path.join(out_dir, "manifest.json"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
