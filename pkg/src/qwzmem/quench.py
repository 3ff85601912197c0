"""Sudden-quench time evolution and Loschmidt overlaps.

The pre-quench ground-state field evolves under the post-quench
Hamiltonian H'(k) = R'(k) . sigma, momentum by momentum, via the exact
two-level propagator

    U(k, t) = cos(|R'| t) 1 - i sin(|R'| t) / |R'| (R'(k) . sigma) .

The Loschmidt amplitude is the pointwise overlap of the initial spinor
with its evolved image; modulus one marks momenta where the initial
state is an eigenstate of the post-quench Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GaugeSingularity
from .model import (
    GAUGE_EVOLVED,
    KGrid,
    Spinor,
    SpinorField,
    r_components,
)
from .topology import ConnectionField, berry_connection


@dataclass(frozen=True)
class QuenchProtocol:
    """Sudden mass quench m_initial -> m_quench with a sampling clock.

    ``delay`` holds the state frozen until that time, so every later
    feature of the evolution is shifted rigidly by the same amount.
    """

    m_initial: float
    m_quench: float
    dt: float = 0.01
    t_max: float = 10.0
    delay: float = 0.0

    def __post_init__(self):
        for name in ("m_initial", "m_quench", "dt", "t_max", "delay"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v}")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_max < self.dt:
            raise ConfigError(
                f"t_max {self.t_max} must cover at least one step dt={self.dt}"
            )
        if self.delay < 0.0:
            raise ConfigError(f"delay must be nonnegative, got {self.delay}")

    def times(self) -> np.ndarray:
        """Sampling instants 0, dt, 2 dt, ... up to and including t_max."""
        n = int(np.floor(self.t_max / self.dt + 0.5)) + 1
        return self.dt * np.arange(n)

    def effective_time(self, t):
        """Evolution time actually elapsed at clock time t."""
        return np.maximum(0.0, np.asarray(t, dtype=float) - self.delay)


def _propagator_entries(m_quench, kx, ky, t):
    """Entries of the closed-form two-level propagator, broadcast over
    any compatible shapes of (kx, ky) and t."""
    rx, ry, rz = r_components(m_quench, kx, ky)
    w = np.sqrt(rx * rx + ry * ry + rz * rz)
    # sin(w t)/w via sinc handles gap closings (w -> 0) smoothly
    s = t * np.sinc(w * t / np.pi)
    c = np.cos(w * t)
    u11 = c - 1j * rz * s
    u12 = -1j * s * (rx - 1j * ry)
    u21 = -1j * s * (rx + 1j * ry)
    u22 = c + 1j * rz * s
    return u11, u12, u21, u22


def evolve_spinor(psi: Spinor, m_quench: float, kx: float, ky: float, t: float) -> Spinor:
    """Evolve a single spinor at momentum (kx, ky) for time t."""
    u11, u12, u21, u22 = _propagator_entries(m_quench, kx, ky, t)
    return Spinor(
        c1=complex(u11 * psi.c1 + u12 * psi.c2),
        c2=complex(u21 * psi.c1 + u22 * psi.c2),
    )


def evolve_field(field: SpinorField, m_quench: float, t: float) -> SpinorField:
    """Evolve every node of a spinor field for time t.

    Exclusions carry over unchanged: evolution is pointwise unitary and
    cannot repair an undefined node.
    """
    u11, u12, u21, u22 = _propagator_entries(
        m_quench, field.grid.kx, field.grid.ky, t
    )
    return SpinorField(
        grid=field.grid,
        gauge=GAUGE_EVOLVED,
        c1=u11 * field.c1 + u12 * field.c2,
        c2=u21 * field.c1 + u22 * field.c2,
        time=field.time + t,
        excluded=field.excluded.copy(),
    )


def loschmidt_pointwise(
    field: SpinorField, m_quench: float, node: tuple[int, int], t
) -> np.ndarray:
    """Loschmidt amplitude <psi_0(k)|psi_t(k)> at one grid node.

    ``t`` may be a scalar or an array of times; only the named node is
    evolved.  Raises GaugeSingularity at excluded nodes.
    """
    i, j = node
    if field.excluded[i, j]:
        raise GaugeSingularity(
            f"Loschmidt amplitude undefined at excluded node ({i}, {j})",
            nodes=[(i, j)],
        )
    kx = field.grid.ks[i]
    ky = field.grid.ks[j]
    c1, c2 = field.c1[i, j], field.c2[i, j]
    ts = np.asarray(t, dtype=float)
    u11, u12, u21, u22 = _propagator_entries(m_quench, kx, ky, ts)
    e1 = u11 * c1 + u12 * c2
    e2 = u21 * c1 + u22 * c2
    return np.conj(c1) * e1 + np.conj(c2) * e2


@dataclass
class LoschmidtSeries:
    """Loschmidt amplitude at one probe node over the protocol clock."""

    probe: tuple[int, int]
    times: np.ndarray
    values: np.ndarray


def loschmidt_series(
    field: SpinorField,
    protocol: QuenchProtocol,
    node: tuple[int, int],
) -> LoschmidtSeries:
    """Loschmidt amplitude at a node for every protocol sampling time.

    The delay freezes the amplitude at 1 until the quench happens.
    """
    times = protocol.times()
    amps = loschmidt_pointwise(
        field, protocol.m_quench, node, protocol.effective_time(times)
    )
    return LoschmidtSeries(probe=tuple(node), times=times, values=amps)


def time_dependent_connection(
    field: SpinorField, m_quench: float, t: float
) -> ConnectionField:
    """Berry connection of the evolved field at one instant."""
    return berry_connection(evolve_field(field, m_quench, t))
