"""Vortex-texture readout of a sudden quench: the oscillating Z2 index.

After a sudden mass quench the spinor field near a gapped high-symmetry
momentum stays a coherent two-level superposition, and the local vortex
texture of the evolved field rotates rigidly at the local Rabi frequency
2|R'(k*)|.  The rotation sense relative to the pre-quench texture is a
Z2 index that flips sign every half period, exactly on the grid of
Loschmidt-amplitude sign changes, so the flip times encode the
post-quench mass through

    period = 2 pi / (2 |R'(k*)|)

with |R'| = |m' + 2| at k* = (pi, pi) and |m' - 2| at k* = (0, 0).

The detector compares the transition phase xi(k, t) = arg c2 - arg c1 on
a small loop around the probe against its initial values: the loop mean
of sin(xi(k, 0) - xi(k, t)) is positive while the texture leads
counterclockwise and negative while it lags, and its sign changes are
the flips.  Loops whose connection magnitude falls below a floor, or
whose orientation signal is numerically zero, read index 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousBranch,
    ConfigError,
    GapClosed,
    GaugeSingularity,
    InsufficientCycles,
    UndefinedPhaseOnLoop,
    UnmatchedFlip,
)
from .model import (
    GAUGE_A,
    GAUGE_B,
    KGrid,
    MomentumPoint,
    SpinorField,
    ground_state_field,
    r_vector,
)
from .quench import LoschmidtSeries, QuenchProtocol, _propagator_entries
from .topology import WindingLoop, _wrap_phase, loop_around

#: default loop radius for the time-resolved probe (momentum units);
#: small loops keep the local Rabi frequency dispersion negligible
DEFAULT_PROBE_RADIUS = 0.1
#: loops with mean |(ax, ay)| below this read index 0
SERIES_FLOOR = 1e-4
#: orientation signals below this modulus read index 0
ORIENTATION_TOL = 1e-6
#: zero-index interludes shorter than this many samples are debounced
DEBOUNCE_SAMPLES = 2
#: a flip must pair with a Loschmidt sign change within this many steps
COINCIDENCE_WINDOW_STEPS = 5
#: post-quench gaps below this raise GapClosed
GAP_TOL = 1e-12

PROBE_PI_PI = "pi-pi"
PROBE_ZERO_ZERO = "zero-zero"
PROBE_NAMES = (PROBE_PI_PI, PROBE_ZERO_ZERO)


def probe_node(grid: KGrid, probe) -> tuple[int, int]:
    """Resolve a probe given by name or (i, j) indices to a grid node."""
    if isinstance(probe, str):
        half = grid.n_side // 2
        if probe == PROBE_PI_PI:
            return (half, half)
        if probe == PROBE_ZERO_ZERO:
            return (0, 0)
        raise ConfigError(
            f"unknown probe {probe!r}; expected one of {PROBE_NAMES}"
        )
    i, j = probe
    return (int(i) % grid.n_side, int(j) % grid.n_side)


def probe_momentum(grid: KGrid, probe) -> MomentumPoint:
    i, j = probe_node(grid, probe)
    return grid.node_momentum(i, j)


# ----------------------------------------------------------------------
# Time-resolved vorticity of the evolved field
# ----------------------------------------------------------------------

@dataclass
class VorticitySeries:
    """Z2 vortex index of the evolved field on a probe loop over time.

    ``indices`` holds the gated rotation sense per sample (+1, -1 or 0),
    ``raw_windings`` the rounded connection circulation in turns of 2pi,
    and ``orientation``/``circulation``/``mean_abs`` the underlying
    loop diagnostics.
    """

    probe: tuple[int, int]
    momentum: MomentumPoint
    radius: float
    times: np.ndarray
    indices: np.ndarray
    raw_windings: np.ndarray
    orientation: np.ndarray
    circulation: np.ndarray
    mean_abs: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def _involved_nodes(grid: KGrid, loop: WindingLoop):
    """Loop samples plus their +x and +y link partners, deduplicated.

    Returns (nodes, sample_idx, xnb_idx, ynb_idx) with the index lists
    pointing into ``nodes``.
    """
    n = grid.n_side
    nodes: list[tuple[int, int]] = []
    seen: dict[tuple[int, int], int] = {}

    def idx(p):
        if p not in seen:
            seen[p] = len(nodes)
            nodes.append(p)
        return seen[p]

    sample_idx = [idx(p) for p in loop.samples]
    xnb_idx = [idx(((i + 1) % n, j)) for (i, j) in loop.samples]
    ynb_idx = [idx((i, (j + 1) % n)) for (i, j) in loop.samples]
    return nodes, sample_idx, xnb_idx, ynb_idx


def prequench_field(
    m_initial: float,
    grid: KGrid,
    probe,
    radius: float = DEFAULT_PROBE_RADIUS,
) -> SpinorField:
    """Pre-quench ground state in a gauge regular on the probe loop.

    Tries gauge B first, then gauge A; the surviving singular nodes of
    the chosen gauge are excluded but are guaranteed not to touch the
    loop samples or their forward link partners.
    """
    center = probe_node(grid, probe)
    loop = loop_around(grid, center, radius)
    nodes, _, _, _ = _involved_nodes(grid, loop)
    last: Exception | None = None
    for gauge in (GAUGE_B, GAUGE_A):
        fld = ground_state_field(m_initial, grid, gauge, exclude_singular=True)
        if not any(fld.excluded[i, j] for (i, j) in nodes):
            return fld
        last = GaugeSingularity(
            f"gauge {gauge} singular on the probe loop at m={m_initial}"
        )
    raise UndefinedPhaseOnLoop(
        f"no gauge is regular on the probe loop for m={m_initial}: {last}"
    )


def vorticity_series(
    protocol: QuenchProtocol,
    grid: KGrid,
    probe,
    radius: float = DEFAULT_PROBE_RADIUS,
    floor: float = SERIES_FLOOR,
    orientation_tol: float = ORIENTATION_TOL,
    field: SpinorField | None = None,
) -> VorticitySeries:
    """Evolve the probe loop through the quench and read the Z2 index.

    Only the loop samples and their link partners are propagated, so the
    cost is linear in the number of time steps.  ``field`` overrides the
    automatically gauged pre-quench ground state; it must be regular on
    the loop.
    """
    center = probe_node(grid, probe)
    loop = loop_around(grid, center, radius)
    nodes, sample_idx, xnb_idx, ynb_idx = _involved_nodes(grid, loop)
    if field is None:
        field = prequench_field(protocol.m_initial, grid, probe, radius)
    elif field.grid != grid:
        raise ConfigError("field grid does not match the requested grid")
    bad = [p for p in nodes if field.excluded[p[0], p[1]]]
    if bad:
        raise UndefinedPhaseOnLoop(
            f"pre-quench field excluded at loop node(s) {bad}"
        )

    times = protocol.times()
    t_eff = protocol.effective_time(times)
    kx = np.array([grid.ks[i] for (i, _) in nodes])
    ky = np.array([grid.ks[j] for (_, j) in nodes])
    c10 = np.array([field.c1[i, j] for (i, j) in nodes])
    c20 = np.array([field.c2[i, j] for (i, j) in nodes])
    u11, u12, u21, u22 = _propagator_entries(
        protocol.m_quench, kx[:, None], ky[:, None], t_eff[None, :]
    )
    c1 = u11 * c10[:, None] + u12 * c20[:, None]
    c2 = u21 * c10[:, None] + u22 * c20[:, None]

    # orientation signal: loop mean of sin(xi(0) - xi(t)) over the samples
    xi = np.angle(c2) - np.angle(c1)
    dxi = _wrap_phase(xi[:, :1] - xi)
    s = np.sin(dxi[sample_idx]).mean(axis=0)

    # forward-link connection restricted to the sample nodes
    dk = grid.delta_k
    ax = np.angle(
        np.conj(c1[sample_idx]) * c1[xnb_idx]
        + np.conj(c2[sample_idx]) * c2[xnb_idx]
    ) / dk
    ay = np.angle(
        np.conj(c1[sample_idx]) * c1[ynb_idx]
        + np.conj(c2[sample_idx]) * c2[ynb_idx]
    ) / dk
    mean_abs = np.hypot(ax, ay).mean(axis=0)

    # circulation along the staircase, consuming stored forward links
    n = grid.n_side
    circ = np.zeros_like(times)
    samples = loop.samples
    order = list(range(len(samples)))
    for a, b in zip(order, order[1:] + order[:1]):
        (i, j), (i2, j2) = samples[a], samples[b]
        di = (i2 - i + n // 2) % n - n // 2
        dj = (j2 - j + n // 2) % n - n // 2
        if di == 1:
            circ += ax[a] * dk
        elif di == -1:
            circ -= ax[b] * dk
        elif dj == 1:
            circ += ay[a] * dk
        else:
            circ -= ay[b] * dk

    raw = np.rint(circ / (2.0 * np.pi)).astype(int)
    quiet = (mean_abs < floor) | (np.abs(s) < orientation_tol)
    indices = np.where(quiet, 0, np.sign(s)).astype(int)
    return VorticitySeries(
        probe=center,
        momentum=grid.node_momentum(*center),
        radius=radius,
        times=times,
        indices=indices,
        raw_windings=raw,
        orientation=s,
        circulation=circ,
        mean_abs=mean_abs,
    )


# ----------------------------------------------------------------------
# Flip extraction and period estimation
# ----------------------------------------------------------------------

def flip_times(
    series: VorticitySeries, min_run: int = DEBOUNCE_SAMPLES
) -> np.ndarray:
    """Times where the index reverses sign, debounced.

    Zero-index interludes shorter than ``min_run`` samples between
    nonzero plateaus are treated as part of the transition.  Each sign
    reversal contributes one flip at the midpoint between the flanking
    nonzero plateaus.
    """
    idxs = series.indices
    times = series.times
    runs: list[list[int]] = []  # [value, first, last]
    start = 0
    for i in range(1, len(idxs) + 1):
        if i == len(idxs) or idxs[i] != idxs[start]:
            runs.append([int(idxs[start]), start, i - 1])
            start = i
    kept: list[list[int]] = []
    for r in runs:
        short = (r[2] - r[1] + 1) < min_run
        if r[0] == 0 and short and kept and kept[-1][0] != 0:
            continue
        if kept and kept[-1][0] == r[0]:
            kept[-1][2] = r[2]
        else:
            kept.append(r)
    nonzero = [r for r in kept if r[0] != 0]
    flips = [
        0.5 * (times[a[2]] + times[b[1]])
        for a, b in zip(nonzero, nonzero[1:])
        if a[0] != b[0]
    ]
    return np.asarray(flips, dtype=float)


@dataclass(frozen=True)
class PeriodEstimate:
    """Oscillation period from the flip-time sequence."""

    period: float
    uncertainty: float
    n_flips: int
    n_cycles_used: int


def estimate_period(flips: np.ndarray, dt: float) -> PeriodEstimate:
    """Twice the mean inter-flip gap, with a sampling-limited floor on
    the uncertainty.  Raises InsufficientCycles below three flips."""
    flips = np.asarray(flips, dtype=float)
    if len(flips) < 3:
        raise InsufficientCycles(
            f"need at least 3 flips for a period estimate, got {len(flips)}; "
            "increase t_max"
        )
    gaps = np.diff(flips)
    period = 2.0 * float(gaps.mean())
    uncertainty = max(dt / 2.0, float(gaps.std()))
    return PeriodEstimate(
        period=period,
        uncertainty=uncertainty,
        n_flips=len(flips),
        n_cycles_used=(len(flips) - 1) // 2,
    )


def theoretical_period(m_quench: float, k: MomentumPoint) -> float:
    """2 pi / (2 |R'(k)|), the local Rabi period after the quench.

    Raises GapClosed when the post-quench gap at k is numerically zero.
    """
    mag = r_vector(m_quench, k).magnitude
    if mag < GAP_TOL:
        raise GapClosed(
            f"post-quench gap closes at k=({k.kx:.6f}, {k.ky:.6f}) "
            f"for m'={m_quench}"
        )
    return np.pi / mag


def default_t_max(m_quench: float, k: MomentumPoint, cap: float = 1000.0) -> float:
    """Ten theoretical periods, capped; the cap also covers closed gaps."""
    try:
        return min(10.0 * theoretical_period(m_quench, k), cap)
    except GapClosed:
        return cap


# ----------------------------------------------------------------------
# Mass scans
# ----------------------------------------------------------------------

STATUS_OK = "ok"
STATUS_INSUFFICIENT = "insufficient-cycles"
STATUS_GAP_CLOSED = "gap-closed"


@dataclass
class PeriodScanRow:
    """One post-quench mass of a period scan."""

    m_quench: float
    status: str
    period: float
    uncertainty: float
    period_theory: float
    n_flips: int
    n_cycles: int

    @property
    def ratio(self) -> float:
        if self.period_theory > 0 and np.isfinite(self.period):
            return self.period / self.period_theory
        return float("nan")


def scan_period_vs_mass(
    m_initial: float,
    masses,
    grid: KGrid,
    probe,
    dt: float = 0.01,
    radius: float = DEFAULT_PROBE_RADIUS,
    t_max_cap: float = 1000.0,
    n_periods: float = 10.0,
) -> list[PeriodScanRow]:
    """Measure the flip period for each post-quench mass at one probe.

    Rows where too few flips occur within the time window are reported
    with status ``insufficient-cycles`` instead of aborting the scan;
    a closed post-quench gap at the probe is reported as ``gap-closed``
    without simulating.
    """
    k = probe_momentum(grid, probe)
    rows: list[PeriodScanRow] = []
    for m_q in masses:
        try:
            t_theory = theoretical_period(m_q, k)
        except GapClosed:
            rows.append(
                PeriodScanRow(
                    m_quench=float(m_q),
                    status=STATUS_GAP_CLOSED,
                    period=float("nan"),
                    uncertainty=float("nan"),
                    period_theory=float("nan"),
                    n_flips=0,
                    n_cycles=0,
                )
            )
            continue
        t_max = min(n_periods * t_theory, t_max_cap)
        protocol = QuenchProtocol(
            m_initial=m_initial, m_quench=float(m_q), dt=dt, t_max=t_max
        )
        series = vorticity_series(protocol, grid, probe, radius=radius)
        flips = flip_times(series)
        try:
            est = estimate_period(flips, dt)
        except InsufficientCycles:
            rows.append(
                PeriodScanRow(
                    m_quench=float(m_q),
                    status=STATUS_INSUFFICIENT,
                    period=float("nan"),
                    uncertainty=float("nan"),
                    period_theory=t_theory,
                    n_flips=len(flips),
                    n_cycles=0,
                )
            )
            continue
        rows.append(
            PeriodScanRow(
                m_quench=float(m_q),
                status=STATUS_OK,
                period=est.period,
                uncertainty=est.uncertainty,
                period_theory=t_theory,
                n_flips=est.n_flips,
                n_cycles=est.n_cycles_used,
            )
        )
    return rows


# ----------------------------------------------------------------------
# Coincidence with Loschmidt sign changes
# ----------------------------------------------------------------------

def sign_change_times(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Zero crossings of a sampled real signal, linearly interpolated.

    Exact zero samples count as a crossing only when they separate
    opposite signs (or terminate the record after a nonzero stretch);
    an identically zero signal has no crossings.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    out = []
    prev_sign = 0.0
    zero_start: int | None = None
    for i, v in enumerate(values):
        if v == 0.0:
            if zero_start is None:
                zero_start = i
            continue
        s = np.sign(v)
        if zero_start is not None:
            if prev_sign != 0.0 and s != prev_sign:
                out.append(0.5 * (times[zero_start] + times[i - 1]))
            zero_start = None
        elif prev_sign != 0.0 and s != prev_sign:
            a, b = values[i - 1], v
            frac = a / (a - b)
            out.append(times[i - 1] + frac * (times[i] - times[i - 1]))
        prev_sign = s
    if zero_start is not None and prev_sign != 0.0:
        out.append(times[zero_start])
    return np.asarray(out, dtype=float)


@dataclass
class CoincidenceReport:
    """Pairing of vorticity flips with Loschmidt-amplitude sign changes."""

    flips: np.ndarray
    matched: np.ndarray
    offsets: np.ndarray
    window: float

    @property
    def max_offset(self) -> float:
        return float(np.max(np.abs(self.offsets))) if len(self.offsets) else 0.0


def coincidence_test(
    loschmidt: LoschmidtSeries,
    series: VorticitySeries,
    window: float | None = None,
) -> CoincidenceReport:
    """Pair every flip with the nearest sign change of Re L or Im L.

    Both series must share the sampling clock.  Raises UnmatchedFlip
    when a flip has no sign change within the window (default
    COINCIDENCE_WINDOW_STEPS sampling steps).
    """
    if len(loschmidt.times) != len(series.times) or not np.allclose(
        loschmidt.times, series.times
    ):
        raise ConfigError(
            "coincidence test needs matching time grids for the Loschmidt "
            "and vorticity series"
        )
    if window is None:
        window = COINCIDENCE_WINDOW_STEPS * series.dt
    changes = np.sort(
        np.concatenate(
            [
                sign_change_times(loschmidt.times, np.real(loschmidt.values)),
                sign_change_times(loschmidt.times, np.imag(loschmidt.values)),
            ]
        )
    )
    flips = flip_times(series)
    if len(changes) == 0 and len(flips) > 0:
        raise UnmatchedFlip(
            f"{len(flips)} flip(s) but no Loschmidt sign changes at all"
        )
    matched = np.empty_like(flips)
    offsets = np.empty_like(flips)
    for i, t in enumerate(flips):
        j = int(np.argmin(np.abs(changes - t)))
        off = t - changes[j]
        if abs(off) > window:
            raise UnmatchedFlip(
                f"flip at t={t:.4f} has no Loschmidt sign change within "
                f"{window:.4f} (nearest at {changes[j]:.4f})"
            )
        matched[i] = changes[j]
        offsets[i] = off
    return CoincidenceReport(
        flips=flips, matched=matched, offsets=offsets, window=window
    )


# ----------------------------------------------------------------------
# Mass decoding from the measured period
# ----------------------------------------------------------------------

HINT_ABOVE = "above"
HINT_BELOW = "below"

#: anchor mass of the period law per probe name
_PROBE_ANCHOR = {PROBE_PI_PI: -2.0, PROBE_ZERO_ZERO: 2.0}
#: open mass window of the intermediate phases, used for branch selection
BRANCH_WINDOW = (-2.0, 2.0)


def _decode_candidates(period: float, probe_name: str) -> tuple[float, float]:
    if probe_name not in _PROBE_ANCHOR:
        raise ConfigError(
            f"decoding needs probe {PROBE_NAMES}, got {probe_name!r}"
        )
    if period <= 0 or not np.isfinite(period):
        raise ConfigError(f"period must be positive and finite, got {period}")
    anchor = _PROBE_ANCHOR[probe_name]
    shift = np.pi / period
    return (anchor + shift, anchor - shift)


@dataclass(frozen=True)
class DecodedMass:
    """Post-quench mass recovered from the flip period."""

    m_quench: float
    uncertainty: float
    candidates: tuple[float, ...]
    probe: str


def decode_quench_mass(
    series_or_estimate,
    probe_name: str,
    hint: str | None = None,
) -> DecodedMass:
    """Invert period = pi / |m' -+ 2| for the post-quench mass.

    Accepts either a VorticitySeries (flips are extracted and the period
    estimated, so InsufficientCycles can propagate) or a ready
    PeriodEstimate.  The sign of the anchor offset is a branch choice:
    ``hint`` picks the candidate above or below the anchor mass (-2 for
    pi-pi, +2 for zero-zero).  Without a hint the candidate inside the
    window (-2, 2) wins if it is unique; otherwise AmbiguousBranch is
    raised.
    """
    estimate = series_or_estimate
    if isinstance(estimate, VorticitySeries):
        estimate = estimate_period(flip_times(estimate), estimate.dt)
    above, below = _decode_candidates(estimate.period, probe_name)
    unc = np.pi / estimate.period**2 * estimate.uncertainty
    if hint == HINT_ABOVE:
        chosen = above
    elif hint == HINT_BELOW:
        chosen = below
    elif hint is not None:
        raise ConfigError(
            f"hint must be {HINT_ABOVE!r} or {HINT_BELOW!r}, got {hint!r}"
        )
    else:
        lo, hi = BRANCH_WINDOW
        inside = [c for c in (above, below) if lo < c < hi]
        if len(inside) != 1:
            raise AmbiguousBranch(
                f"candidates {above:.6f} and {below:.6f} cannot be told "
                "apart without a branch hint"
            )
        chosen = inside[0]
    return DecodedMass(
        m_quench=float(chosen),
        uncertainty=float(unc),
        candidates=(above, below),
        probe=probe_name,
    )


def decode_joint(
    estimate_pi_pi: PeriodEstimate,
    estimate_zero_zero: PeriodEstimate,
) -> DecodedMass:
    """Resolve the branch by intersecting the two probes' candidates.

    Each probe leaves two mass candidates; the pair (one per probe) with
    the smallest separation identifies the true mass, reported as the
    inverse-variance weighted mean.  Raises AmbiguousBranch when the
    runner-up pair is not separated from the best by more than the
    combined uncertainty.
    """
    cand_p = _decode_candidates(estimate_pi_pi.period, PROBE_PI_PI)
    cand_z = _decode_candidates(estimate_zero_zero.period, PROBE_ZERO_ZERO)
    unc_p = np.pi / estimate_pi_pi.period**2 * estimate_pi_pi.uncertainty
    unc_z = np.pi / estimate_zero_zero.period**2 * estimate_zero_zero.uncertainty
    pairs = sorted(
        ((abs(a - b), a, b) for a in cand_p for b in cand_z),
        key=lambda t: t[0],
    )
    best, runner = pairs[0], pairs[1]
    combined = unc_p + unc_z
    if runner[0] - best[0] <= combined:
        raise AmbiguousBranch(
            f"joint decode degenerate: pair separations {best[0]:.6f} and "
            f"{runner[0]:.6f} within combined uncertainty {combined:.6f}"
        )
    w_p = 1.0 / max(unc_p, 1e-300) ** 2
    w_z = 1.0 / max(unc_z, 1e-300) ** 2
    m = (w_p * best[1] + w_z * best[2]) / (w_p + w_z)
    unc = 1.0 / np.sqrt(w_p + w_z)
    return DecodedMass(
        m_quench=float(m),
        uncertainty=float(unc),
        candidates=(best[1], best[2]),
        probe="joint",
    )
