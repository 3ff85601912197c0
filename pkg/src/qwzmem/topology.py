"""Discrete Berry connection, transition-phase windings and Chern numbers.

All constructions work on a :class:`~qwzmem.model.SpinorField` sampled on
the periodic momentum grid.  The discrete Berry connection is built from
link phases,

    a_mu(k) = Im log <psi(k) | psi(k + delta_mu)> / delta_k ,

and two independent routes to the Chern number are provided:

* ``chern_patchwise`` counts transition-phase windings around small disks
  excised at the singular nodes of the globally chosen gauge, and
* ``chern_fhs`` sums branch-reduced plaquette phases of the four-link
  Wilson loop over the whole zone (manifestly gauge invariant).

Sign convention: plaquettes and loops are traversed so that the phase
with 0 < m < 2 carries Chern number -1.  Equivalently the curvature is
the negative of the one generated by -i<psi|d psi> with counterclockwise
orientation; see README for the full convention table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CriticalMass,
    GaugeSingularity,
    SingularField,
    SingularPlaquette,
    UndefinedPhaseOnLoop,
)
from .model import (
    GAUGE_A,
    GAUGE_B,
    KGrid,
    MassParameter,
    SpinorField,
    Spinor,
    ground_state_field,
    r_components,
)

#: link overlaps below this modulus make the discrete connection singular
LINK_TOL = 1e-6
#: plaquette links below this modulus make the Wilson loop singular
PLAQUETTE_TOL = 1e-9
#: spinor components below this modulus leave the transition phase undefined
PHASE_TOL = 1e-9

DEFAULT_DISK_RADIUS = 0.3
RETRY_DISK_RADII = (0.2, 0.45)

#: loops with mean |(ax, ay)| below this carry no discernible vortex
VORTICITY_FLOOR = 1e-3
#: loops with |circulation| / 2pi below this carry no discernible vortex
CIRCULATION_FLOOR = 0.05


# ----------------------------------------------------------------------
# Berry connection from link phases
# ----------------------------------------------------------------------

@dataclass
class ConnectionField:
    """Discrete Berry connection (ax, ay) per node, forward-link based.

    ``ax[i, j]`` is the phase of the link from node (i, j) to (i+1, j)
    divided by delta_k, with periodic wraparound; NaN where a link
    touches an excluded node (mirrored in ``undefined_x``/``undefined_y``).
    """

    grid: KGrid
    ax: np.ndarray
    ay: np.ndarray
    time: float = 0.0
    undefined_x: np.ndarray = None  # type: ignore[assignment]
    undefined_y: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        n = self.grid.n_side
        if self.undefined_x is None:
            self.undefined_x = np.zeros((n, n), dtype=bool)
        if self.undefined_y is None:
            self.undefined_y = np.zeros((n, n), dtype=bool)


def berry_connection(field: SpinorField) -> ConnectionField:
    """Forward-link discrete Berry connection of a spinor field.

    Links between well-defined nodes whose overlap modulus falls below
    1e-6 raise SingularField; links touching excluded nodes are recorded
    as undefined instead of raising.
    """
    dk = field.grid.delta_k
    c1, c2 = field.c1, field.c2

    def link(axis: int) -> tuple[np.ndarray, np.ndarray]:
        ov = (
            np.conj(c1) * np.roll(c1, -1, axis=axis)
            + np.conj(c2) * np.roll(c2, -1, axis=axis)
        )
        bad = field.excluded | np.roll(field.excluded, -1, axis=axis)
        mod = np.abs(ov)
        tiny = ~bad & (mod < LINK_TOL)
        if tiny.any():
            nodes = [tuple(p) for p in np.argwhere(tiny)]
            raise SingularField(
                f"{len(nodes)} link overlap(s) below {LINK_TOL} along axis "
                f"{axis}: first at node {nodes[0]}"
            )
        with np.errstate(invalid="ignore"):
            a = np.angle(ov) / dk
        a = np.where(bad, np.nan, a)
        return a, bad

    ax, bad_x = link(0)
    ay, bad_y = link(1)
    return ConnectionField(
        grid=field.grid,
        ax=ax,
        ay=ay,
        time=field.time,
        undefined_x=bad_x,
        undefined_y=bad_y,
    )


# ----------------------------------------------------------------------
# Transition phase between the two gauges
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionPhase:
    """Phase xi relating the two gauge representatives of a ray.

    ``value`` lies in (-pi, pi]; ``defined`` is False (value NaN) when
    either spinor component is numerically zero.
    """

    value: float
    defined: bool


def gauge_transition_phase(psi: Spinor) -> TransitionPhase:
    """arg(xi_A) - arg(xi_B) with xi_A the second and xi_B the first
    component, branch-reduced to (-pi, pi]."""
    if abs(psi.c1) < PHASE_TOL or abs(psi.c2) < PHASE_TOL:
        return TransitionPhase(float("nan"), False)
    raw = np.angle(psi.c2) - np.angle(psi.c1)
    return TransitionPhase(float(_wrap_phase(raw)), True)


def _wrap_phase(x):
    """Reduce a phase (array or scalar) to the branch (-pi, pi]."""
    out = np.mod(-x + np.pi, 2.0 * np.pi)
    return np.pi - out


# ----------------------------------------------------------------------
# Loops on the grid
# ----------------------------------------------------------------------

@dataclass
class WindingLoop:
    """Closed counterclockwise loop of grid nodes around a center node.

    Consecutive samples are neighboring nodes differing by one step
    along a single axis (a staircase approximation of the circle), and
    the last sample connects back to the first.
    """

    grid: KGrid
    center: tuple[int, int]
    radius: float
    samples: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.samples)


def loop_around(
    grid: KGrid, center: tuple[int, int], radius: float
) -> WindingLoop:
    """Build the staircase circle of the given radius around a node.

    The radius is in momentum units; it must resolve to at least one
    grid spacing.  Raises ValueError for unusable radii.
    """
    r_steps = radius / grid.delta_k
    if r_steps < 1.0:
        raise ValueError(
            f"loop radius {radius} below one grid spacing {grid.delta_k:.4f}"
        )
    if radius >= np.pi / 2:
        raise ValueError(f"loop radius {radius} too large for the zone")
    ci, cj = center
    n_samp = max(64, int(32 * r_steps))
    angles = np.linspace(0.0, 2.0 * np.pi, n_samp, endpoint=False)
    snapped: list[tuple[int, int]] = []
    for t in angles:
        di = int(np.rint(r_steps * np.cos(t)))
        dj = int(np.rint(r_steps * np.sin(t)))
        if not snapped or (di, dj) != snapped[-1]:
            snapped.append((di, dj))
    if snapped[0] == snapped[-1]:
        snapped.pop()

    # connect diagonal jumps with an intermediate node, picking the
    # candidate closer to the target circle
    path: list[tuple[int, int]] = []
    for a, b in zip(snapped, snapped[1:] + snapped[:1]):
        path.append(a)
        ddi, ddj = b[0] - a[0], b[1] - a[1]
        if abs(ddi) + abs(ddj) == 2 and abs(ddi) == 1 and abs(ddj) == 1:
            cand1 = (b[0], a[1])
            cand2 = (a[0], b[1])
            d1 = abs(np.hypot(*cand1) - r_steps)
            d2 = abs(np.hypot(*cand2) - r_steps)
            path.append(cand1 if d1 <= d2 else cand2)
        elif abs(ddi) + abs(ddj) > 2:
            raise ValueError(
                f"loop sampling too coarse near offset {a} -> {b}"
            )

    # drop immediate backtracks introduced by snapping
    cleaned: list[tuple[int, int]] = []
    for p in path:
        if len(cleaned) >= 2 and cleaned[-2] == p:
            cleaned.pop()
        elif not cleaned or cleaned[-1] != p:
            cleaned.append(p)
    while len(cleaned) >= 2 and cleaned[0] == cleaned[-1]:
        cleaned.pop()
    if len(cleaned) < 4:
        raise ValueError(f"loop of radius {radius} collapsed to {cleaned}")

    n = grid.n_side
    samples = [((ci + di) % n, (cj + dj) % n) for di, dj in cleaned]

    # orientation check on the unwrapped offsets (shoelace > 0 is ccw)
    area = 0.0
    for (x1, y1), (x2, y2) in zip(cleaned, cleaned[1:] + cleaned[:1]):
        area += x1 * y2 - x2 * y1
    if area <= 0:
        samples = samples[::-1]

    return WindingLoop(grid=grid, center=center, radius=radius, samples=samples)


# ----------------------------------------------------------------------
# Winding of the transition phase
# ----------------------------------------------------------------------

def winding_number(field: SpinorField, loop: WindingLoop) -> int:
    """Winding of the transition phase along the loop, an exact integer.

    Sums branch-reduced increments of xi between consecutive samples
    (counterclockwise); the closed-loop total is a multiple of 2pi by
    construction.  Raises UndefinedPhaseOnLoop if any sample has an
    undefined phase or is excluded from the field.
    """
    phases = []
    for (i, j) in loop.samples:
        if field.excluded[i, j]:
            raise UndefinedPhaseOnLoop(
                f"loop sample ({i}, {j}) is excluded from the field"
            )
        tp = gauge_transition_phase(field.spinor_at(i, j))
        if not tp.defined:
            raise UndefinedPhaseOnLoop(
                f"transition phase undefined at loop sample ({i}, {j})"
            )
        phases.append(tp.value)
    xi = np.asarray(phases)
    inc = _wrap_phase(np.diff(np.concatenate([xi, xi[:1]])))
    total = float(inc.sum())
    w = total / (2.0 * np.pi)
    if abs(w - np.rint(w)) > 1e-6:
        raise UndefinedPhaseOnLoop(
            f"loop winding {w} did not quantize; loop too coarse?"
        )
    return int(np.rint(w))


# ----------------------------------------------------------------------
# Patchwise Chern number
# ----------------------------------------------------------------------

@dataclass
class PatchDecomposition:
    """Outer gauge plus the excised disks around its singular nodes."""

    m: float
    outer_gauge: str
    disk_centers: list[tuple[int, int]]
    disk_radii: list[float]
    windings: list[int]


def _hs_singular_nodes(m: float, grid: KGrid, gauge: str) -> list[tuple[int, int]]:
    nodes = []
    for (i, j) in grid.high_symmetry_nodes():
        _, _, rz = r_components(m, grid.ks[i], grid.ks[j])
        if (gauge == GAUGE_A and rz >= 0.0) or (gauge == GAUGE_B and rz <= 0.0):
            nodes.append((i, j))
    return nodes


def patch_decomposition(
    m: float,
    grid: KGrid,
    disk_radius: float = DEFAULT_DISK_RADIUS,
    retry_radii: tuple[float, ...] = RETRY_DISK_RADII,
) -> PatchDecomposition:
    """Choose the outer gauge and wind the transition phase around each
    of its singular nodes.

    The outer gauge is the one with the fewer singular high-symmetry
    nodes.  Each disk isolates exactly one singular node; on a failed
    winding the retry radii are attempted in order.
    """
    if MassParameter(m).is_critical:
        raise CriticalMass(f"Chern number undefined at critical mass m={m}")
    sing_a = _hs_singular_nodes(m, grid, GAUGE_A)
    sing_b = _hs_singular_nodes(m, grid, GAUGE_B)
    outer = GAUGE_B if len(sing_b) <= len(sing_a) else GAUGE_A
    centers = sing_b if outer == GAUGE_B else sing_a
    field = ground_state_field(m, grid, outer, exclude_singular=True)

    radii_used: list[float] = []
    windings: list[int] = []
    for c in centers:
        last_err: Exception | None = None
        for radius in (disk_radius, *retry_radii):
            try:
                loop = loop_around(grid, c, radius)
                w = winding_number(field, loop)
            except (UndefinedPhaseOnLoop, ValueError) as err:
                last_err = err
                continue
            radii_used.append(radius)
            windings.append(w)
            break
        else:
            raise UndefinedPhaseOnLoop(
                f"no usable disk around node {c} for m={m}: {last_err}"
            )
    return PatchDecomposition(
        m=m,
        outer_gauge=outer,
        disk_centers=centers,
        disk_radii=radii_used,
        windings=windings,
    )


def chern_patchwise(
    m: float,
    grid: KGrid,
    disk_radius: float = DEFAULT_DISK_RADIUS,
    retry_radii: tuple[float, ...] = RETRY_DISK_RADII,
) -> int:
    """Chern number as the total transition-phase winding over the
    excised disks of the outer gauge (sign per the module convention)."""
    decomp = patch_decomposition(m, grid, disk_radius, retry_radii)
    return -int(sum(decomp.windings))


# ----------------------------------------------------------------------
# Plaquette (field-strength) Chern number
# ----------------------------------------------------------------------

def chern_fhs(field: SpinorField) -> int:
    """Chern number from branch-reduced plaquette phases of the Wilson
    loop U_x(k) U_y(k+x) U_x(k+y)* U_y(k)*, summed over the zone.

    Gauge invariant; raises SingularPlaquette when any link modulus is
    below 1e-9 and GaugeSingularity when the field has excluded nodes.
    """
    if field.excluded.any():
        raise GaugeSingularity(
            "chern_fhs needs a globally defined field",
            nodes=field.excluded_nodes(),
        )
    c1, c2 = field.c1, field.c2

    def link(axis: int) -> np.ndarray:
        ov = (
            np.conj(c1) * np.roll(c1, -1, axis=axis)
            + np.conj(c2) * np.roll(c2, -1, axis=axis)
        )
        mod = np.abs(ov)
        if (mod < PLAQUETTE_TOL).any():
            where = np.argwhere(mod < PLAQUETTE_TOL)[0]
            raise SingularPlaquette(
                f"plaquette link modulus below {PLAQUETTE_TOL} at node "
                f"({where[0]}, {where[1]}) along axis {axis}"
            )
        return ov

    ux = link(0)
    uy = link(1)
    wilson = (
        ux
        * np.roll(uy, -1, axis=0)
        * np.conj(np.roll(ux, -1, axis=1))
        * np.conj(uy)
    )
    flux = np.angle(wilson)
    total = flux.sum() / (2.0 * np.pi)
    if abs(total - np.rint(total)) > 1e-6:
        raise SingularPlaquette(
            f"plaquette flux total {total} did not quantize"
        )
    # module sign convention: clockwise plaquette orientation
    return -int(np.rint(total))


def hall_conductance(chern: int) -> float:
    """Hall conductance in units of e^2/h for a given Chern number."""
    return -float(chern) + 0.0  # +0.0 folds -0.0 into 0.0


# ----------------------------------------------------------------------
# Z2 vorticity of the connection field
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class VortexMeasure:
    """Loop diagnostics behind a Z2 vorticity call."""

    index: int
    raw_winding: int
    circulation: float
    mean_abs: float


def loop_circulation(conn: ConnectionField, loop: WindingLoop) -> tuple[float, float]:
    """Circulation of (ax, ay) along the loop and the mean |(ax, ay)|.

    Each unit step consumes exactly the stored forward-link value of the
    crossed link, so the circulation equals the summed link phases.
    """
    n = conn.grid.n_side
    dk = conn.grid.delta_k
    circ = 0.0
    mags = []
    for (i, j), (i2, j2) in zip(
        loop.samples, loop.samples[1:] + loop.samples[:1]
    ):
        di = (i2 - i + n // 2) % n - n // 2
        dj = (j2 - j + n // 2) % n - n // 2
        if di == 1 and dj == 0:
            seg = conn.ax[i, j] * dk
        elif di == -1 and dj == 0:
            seg = -conn.ax[i2, j2] * dk
        elif di == 0 and dj == 1:
            seg = conn.ay[i, j] * dk
        elif di == 0 and dj == -1:
            seg = -conn.ay[i2, j2] * dk
        else:
            raise ValueError(f"loop step ({i},{j}) -> ({i2},{j2}) is not a unit step")
        if not np.isfinite(seg):
            raise UndefinedPhaseOnLoop(
                f"connection undefined on loop segment ({i},{j}) -> ({i2},{j2})"
            )
        circ += float(seg)
        a1, a2 = conn.ax[i, j], conn.ay[i, j]
        if np.isfinite(a1) and np.isfinite(a2):
            mags.append(float(np.hypot(a1, a2)))
    mean_abs = float(np.mean(mags)) if mags else 0.0
    return circ, mean_abs


def vortex_measure(
    conn: ConnectionField,
    center: tuple[int, int],
    radius: float = DEFAULT_DISK_RADIUS,
    floor: float = VORTICITY_FLOOR,
    circulation_floor: float = CIRCULATION_FLOOR,
) -> VortexMeasure:
    loop = loop_around(conn.grid, center, radius)
    circ, mean_abs = loop_circulation(conn, loop)
    w = circ / (2.0 * np.pi)
    raw = int(np.rint(w))
    if mean_abs < floor or abs(w) < circulation_floor:
        index = 0
    else:
        index = 1 if circ > 0 else -1
    return VortexMeasure(
        index=index, raw_winding=raw, circulation=circ, mean_abs=mean_abs
    )


def vorticity_z2(
    conn: ConnectionField,
    center: tuple[int, int],
    radius: float = DEFAULT_DISK_RADIUS,
    floor: float = VORTICITY_FLOOR,
    circulation_floor: float = CIRCULATION_FLOOR,
) -> int:
    """Z2 rotation index of the connection field around a node.

    +1 for counterclockwise circulation, -1 for clockwise, 0 when the
    loop carries no discernible vortex (mean magnitude below ``floor``
    or circulation below ``circulation_floor`` turns of 2pi).
    """
    return vortex_measure(conn, center, radius, floor, circulation_floor).index
