"""Two-band Bloch model on the square lattice.

The Hamiltonian is H(k) = R(k) . sigma with

    R(k) = (sin kx, sin ky, m - cos kx - cos ky)

acting on a two-component spinor at each momentum k of a periodic
n x n grid covering [0, 2pi) x [0, 2pi).  The band energies are
+-|R(k)| and the lower band is the ground state at half filling.

Two explicit gauge choices for the lower-band eigenvector are provided:

    gauge A:  (R_z - |R|,  R_x + i R_y) / N_A
    gauge B:  (-R_x + i R_y,  R_z + |R|) / N_B

Gauge A degenerates exactly where R_x = R_y = 0 and R_z >= 0, gauge B
exactly where R_x = R_y = 0 and R_z <= 0; between them the whole
Brillouin zone is covered for every non-critical mass.  The spinors keep
the natural phases of these formulas (gauge A has a real first component,
gauge B a real non-negative second component); at momenta where the
defining component vanishes but the gauge is still well defined the
spinor is rephased so its nonzero component is real positive, i.e.
(1, 0) for gauge A and (0, 1) for gauge B.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GaugeSingularity

TWO_PI = 2.0 * np.pi

# Pauli matrices, fixed once.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

#: masses where the bulk gap closes somewhere in the zone
CRITICAL_MASSES = (-2.0, 0.0, 2.0)
CRITICAL_TOL = 1e-9

# A gauge node counts as singular when rx^2 + ry^2 < SINGULAR_TOL2 and
# R_z has the forbidden sign for that gauge.
SINGULAR_TOL2 = 1e-18

GAUGE_A = "A"
GAUGE_B = "B"
#: gauge label of fields patched pointwise with the other gauge
GAUGE_MIXED = "mixed"
GAUGE_EVOLVED = "evolved"


def reduce_momentum(k: float) -> float:
    """Reduce a momentum component to the fundamental interval [0, 2pi)."""
    return float(np.mod(k, TWO_PI))


@dataclass(frozen=True)
class MomentumPoint:
    """A point of the Brillouin zone, components reduced to [0, 2pi)."""

    kx: float
    ky: float

    def __post_init__(self):
        object.__setattr__(self, "kx", reduce_momentum(self.kx))
        object.__setattr__(self, "ky", reduce_momentum(self.ky))

    def as_tuple(self) -> tuple[float, float]:
        return (self.kx, self.ky)


@dataclass(frozen=True)
class MassParameter:
    """Band-tuning mass m, with a flag for the gap-closing values."""

    m: float

    @property
    def is_critical(self) -> bool:
        return any(abs(self.m - mc) < CRITICAL_TOL for mc in CRITICAL_MASSES)


@dataclass(frozen=True)
class BlochVector:
    """The vector R(k) and its magnitude |R(k)|."""

    rx: float
    ry: float
    rz: float

    @property
    def magnitude(self) -> float:
        return float(np.sqrt(self.rx**2 + self.ry**2 + self.rz**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])


@dataclass(frozen=True)
class Spinor:
    """A normalized two-component state (c1, c2)."""

    c1: complex
    c2: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2], dtype=complex)

    @property
    def norm(self) -> float:
        return float(np.sqrt(abs(self.c1) ** 2 + abs(self.c2) ** 2))


class KGrid:
    """Uniform n x n momentum grid on [0, 2pi) with periodic wraparound.

    n_side must be even and at least 4 so that the four high-symmetry
    momenta (0,0), (pi,0), (0,pi), (pi,pi) all coincide with grid nodes.
    """

    def __init__(self, n_side: int = 100):
        if n_side < 4 or n_side % 2 != 0:
            raise ValueError(f"n_side must be even and >= 4, got {n_side}")
        self.n_side = int(n_side)
        self.delta_k = TWO_PI / self.n_side
        self.ks = np.arange(self.n_side) * self.delta_k
        # node (i, j) has momentum (kx[i,j], ky[i,j]); axis 0 is kx
        self.kx, self.ky = np.meshgrid(self.ks, self.ks, indexing="ij")

    def node_momentum(self, i: int, j: int) -> MomentumPoint:
        return MomentumPoint(self.ks[i % self.n_side], self.ks[j % self.n_side])

    def nearest_node(self, kx: float, ky: float) -> tuple[int, int]:
        i = int(np.rint(reduce_momentum(kx) / self.delta_k)) % self.n_side
        j = int(np.rint(reduce_momentum(ky) / self.delta_k)) % self.n_side
        return i, j

    def high_symmetry_nodes(self) -> list[tuple[int, int]]:
        half = self.n_side // 2
        return [(0, 0), (half, 0), (0, half), (half, half)]

    def __eq__(self, other) -> bool:
        return isinstance(other, KGrid) and other.n_side == self.n_side

    def __repr__(self) -> str:
        return f"KGrid(n_side={self.n_side})"


@dataclass
class SpinorField:
    """A spinor per grid node, stored as two complex arrays.

    ``excluded`` marks nodes where the generating formula was singular;
    their spinor entries are NaN and every consumer must either skip them
    or refuse to touch them.
    """

    grid: KGrid
    gauge: str
    c1: np.ndarray
    c2: np.ndarray
    time: float = 0.0
    excluded: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.excluded is None:
            self.excluded = np.zeros((self.grid.n_side,) * 2, dtype=bool)

    def spinor_at(self, i: int, j: int) -> Spinor:
        n = self.grid.n_side
        i, j = i % n, j % n
        if self.excluded[i, j]:
            raise GaugeSingularity(
                f"node ({i}, {j}) is excluded from this field", nodes=[(i, j)]
            )
        return Spinor(complex(self.c1[i, j]), complex(self.c2[i, j]))

    def excluded_nodes(self) -> list[tuple[int, int]]:
        return [tuple(p) for p in np.argwhere(self.excluded)]


# ----------------------------------------------------------------------
# Bloch vector and bands
# ----------------------------------------------------------------------

def r_components(m: float, kx: np.ndarray, ky: np.ndarray):
    """R(k) for scalar or array momenta; returns (rx, ry, rz)."""
    rx = np.sin(kx)
    ry = np.sin(ky)
    rz = m - np.cos(kx) - np.cos(ky)
    return rx, ry, rz


def r_vector(m: float, k: MomentumPoint) -> BlochVector:
    rx, ry, rz = r_components(m, k.kx, k.ky)
    return BlochVector(float(rx), float(ry), float(rz))


def band_energies(m: float, k: MomentumPoint) -> tuple[float, float]:
    """The two band energies (-|R|, +|R|) at momentum k."""
    mag = r_vector(m, k).magnitude
    return (-mag, mag)


def bloch_hamiltonian(m: float, k: MomentumPoint) -> np.ndarray:
    """The 2x2 matrix R(k) . sigma."""
    r = r_vector(m, k)
    return r.rx * SIGMA_X + r.ry * SIGMA_Y + r.rz * SIGMA_Z


def _check_mass(m: float) -> None:
    if not np.isfinite(m):
        raise ValueError(f"mass must be finite, got {m}")


# ----------------------------------------------------------------------
# Ground-state gauges (pointwise)
# ----------------------------------------------------------------------

def ground_state_gauge_a(m: float, k: MomentumPoint) -> Spinor:
    """Lower-band eigenvector in gauge A: (R_z - |R|, R_x + i R_y)/N_A.

    Raises GaugeSingularity when R_x = R_y = 0 and R_z >= 0, where the
    numerator vanishes identically.
    """
    _check_mass(m)
    r = r_vector(m, k)
    planar2 = r.rx**2 + r.ry**2
    if planar2 < SINGULAR_TOL2 and r.rz >= 0.0:
        raise GaugeSingularity(
            f"gauge A undefined at k=({k.kx:.6f}, {k.ky:.6f}) for m={m}"
        )
    if planar2 < SINGULAR_TOL2:
        # R_z < 0 node: the ray is (1, 0); keep it real positive
        return Spinor(1.0 + 0.0j, 0.0j)
    mag = r.magnitude
    c1 = r.rz - mag
    c2 = r.rx + 1.0j * r.ry
    norm = np.sqrt(c1 * c1 + planar2)
    return Spinor(complex(c1 / norm), complex(c2 / norm))


def ground_state_gauge_b(m: float, k: MomentumPoint) -> Spinor:
    """Lower-band eigenvector in gauge B: (-R_x + i R_y, R_z + |R|)/N_B.

    Raises GaugeSingularity when R_x = R_y = 0 and R_z <= 0.
    """
    _check_mass(m)
    r = r_vector(m, k)
    planar2 = r.rx**2 + r.ry**2
    if planar2 < SINGULAR_TOL2 and r.rz <= 0.0:
        raise GaugeSingularity(
            f"gauge B undefined at k=({k.kx:.6f}, {k.ky:.6f}) for m={m}"
        )
    if planar2 < SINGULAR_TOL2:
        return Spinor(0.0j, 1.0 + 0.0j)
    mag = r.magnitude
    c1 = -r.rx + 1.0j * r.ry
    c2 = r.rz + mag
    norm = np.sqrt(planar2 + c2 * c2)
    return Spinor(complex(c1 / norm), complex(c2 / norm))


# ----------------------------------------------------------------------
# Ground-state fields (whole grid, vectorized)
# ----------------------------------------------------------------------

def _gauge_singular_mask(gauge: str, rx, ry, rz) -> np.ndarray:
    planar2 = rx**2 + ry**2
    if gauge == GAUGE_A:
        return (planar2 < SINGULAR_TOL2) & (rz >= 0.0)
    if gauge == GAUGE_B:
        return (planar2 < SINGULAR_TOL2) & (rz <= 0.0)
    raise ValueError(f"unknown gauge {gauge!r}")


def ground_state_field(
    m: float,
    grid: KGrid,
    gauge: str = GAUGE_B,
    exclude_singular: bool = False,
) -> SpinorField:
    """Lower-band spinor field over the whole grid in the given gauge.

    By default the presence of any singular node raises GaugeSingularity
    listing the offending (i, j) indices.  With exclude_singular=True the
    singular nodes are masked out instead and the rest of the field is
    returned; downstream loop constructions refuse to cross masked nodes.
    """
    _check_mass(m)
    rx, ry, rz = r_components(m, grid.kx, grid.ky)
    mag = np.sqrt(rx**2 + ry**2 + rz**2)
    bad = _gauge_singular_mask(gauge, rx, ry, rz)
    if bad.any() and not exclude_singular:
        nodes = [tuple(p) for p in np.argwhere(bad)]
        raise GaugeSingularity(
            f"gauge {gauge} singular at {len(nodes)} node(s) for m={m}: {nodes}",
            nodes=nodes,
        )

    planar2 = rx**2 + ry**2
    degenerate = planar2 < SINGULAR_TOL2  # includes the singular nodes
    with np.errstate(invalid="ignore", divide="ignore"):
        if gauge == GAUGE_A:
            c1 = (rz - mag).astype(complex)
            c2 = rx + 1.0j * ry
        else:
            c1 = -rx + 1.0j * ry
            c2 = (rz + mag).astype(complex)
        norm = np.sqrt(np.abs(c1) ** 2 + np.abs(c2) ** 2)
        c1 = c1 / norm
        c2 = c2 / norm

    # well-defined degenerate nodes carry the fixed representative
    fixable = degenerate & ~bad
    if fixable.any():
        if gauge == GAUGE_A:
            c1[fixable], c2[fixable] = 1.0, 0.0
        else:
            c1[fixable], c2[fixable] = 0.0, 1.0
    if bad.any():
        c1[bad] = np.nan + 0.0j
        c2[bad] = np.nan + 0.0j

    return SpinorField(grid=grid, gauge=gauge, c1=c1, c2=c2, excluded=bad)


def ground_state_field_global(
    m: float, grid: KGrid, gauge: str = GAUGE_B
) -> SpinorField:
    """Ground-state field defined at every node, for phase-insensitive use.

    Starts from the requested gauge and substitutes the opposite gauge's
    representative at its singular nodes (the two gauges are never
    singular at the same node away from the critical masses).  The result
    is generally not smooth at the substituted nodes, so only gauge-
    invariant constructions such as plaquette fluxes should consume it.
    """
    out = ground_state_field(m, grid, gauge, exclude_singular=True)
    other = GAUGE_B if gauge == GAUGE_A else GAUGE_A
    patched = out.excluded_nodes()
    for (i, j) in patched:
        k = grid.node_momentum(i, j)
        psi = (
            ground_state_gauge_a(m, k)
            if other == GAUGE_A
            else ground_state_gauge_b(m, k)
        )
        out.c1[i, j] = psi.c1
        out.c2[i, j] = psi.c2
    out.excluded[:] = False
    if patched:
        out.gauge = GAUGE_MIXED
    return out


def gap_minimum(m: float, grid: KGrid) -> tuple[float, tuple[int, int]]:
    """Minimum band gap 2|R| over the grid and the node where it occurs."""
    rx, ry, rz = r_components(m, grid.kx, grid.ky)
    gap = 2.0 * np.sqrt(rx**2 + ry**2 + rz**2)
    idx = np.unravel_index(np.argmin(gap), gap.shape)
    return float(gap[idx]), (int(idx[0]), int(idx[1]))
