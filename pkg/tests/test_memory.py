"""Tests for the oscillating vortex-index readout and mass decoding."""

import numpy as np
import pytest

from qwzmem.errors import (
    AmbiguousBranch,
    ConfigError,
    GapClosed,
    InsufficientCycles,
    UndefinedPhaseOnLoop,
    UnmatchedFlip,
)
from qwzmem.memory import (
    DEFAULT_PROBE_RADIUS,
    PROBE_PI_PI,
    PROBE_ZERO_ZERO,
    STATUS_GAP_CLOSED,
    STATUS_INSUFFICIENT,
    STATUS_OK,
    PeriodEstimate,
    VorticitySeries,
    coincidence_test,
    decode_joint,
    decode_quench_mass,
    default_t_max,
    estimate_period,
    flip_times,
    prequench_field,
    probe_momentum,
    probe_node,
    scan_period_vs_mass,
    sign_change_times,
    theoretical_period,
    vorticity_series,
)
from qwzmem.model import (
    GAUGE_A,
    GAUGE_B,
    KGrid,
    MomentumPoint,
    ground_state_field,
)
from qwzmem.quench import LoschmidtSeries, QuenchProtocol, loschmidt_series
from qwzmem.topology import loop_around

GRID = KGrid(100)


def synthetic_series(indices, dt=1.0):
    idx = np.asarray(indices, dtype=int)
    zeros = np.zeros(len(idx))
    return VorticitySeries(
        probe=(0, 0),
        momentum=MomentumPoint(0.0, 0.0),
        radius=DEFAULT_PROBE_RADIUS,
        times=dt * np.arange(len(idx)),
        indices=idx,
        raw_windings=np.zeros(len(idx), dtype=int),
        orientation=zeros,
        circulation=zeros,
        mean_abs=zeros,
    )


# ----------------------------------------------------------------------
# probe resolution
# ----------------------------------------------------------------------

def test_probe_node_names_and_tuples():
    assert probe_node(GRID, PROBE_PI_PI) == (50, 50)
    assert probe_node(GRID, PROBE_ZERO_ZERO) == (0, 0)
    assert probe_node(GRID, (3, 7)) == (3, 7)
    assert probe_node(GRID, (-1, 105)) == (99, 5)
    with pytest.raises(ConfigError):
        probe_node(GRID, "corner")


def test_probe_momentum():
    k = probe_momentum(GRID, PROBE_PI_PI)
    assert np.isclose(k.kx, np.pi) and np.isclose(k.ky, np.pi)
    k0 = probe_momentum(GRID, PROBE_ZERO_ZERO)
    assert k0.kx == 0.0 and k0.ky == 0.0


# ----------------------------------------------------------------------
# flip extraction and period arithmetic on synthetic data
# ----------------------------------------------------------------------

def test_flip_at_plateau_midpoint():
    series = synthetic_series([1, 1, -1, -1])
    assert np.allclose(flip_times(series), [1.5])


def test_constant_index_never_flips():
    assert len(flip_times(synthetic_series([1] * 8))) == 0
    assert len(flip_times(synthetic_series([0] * 8))) == 0


def test_single_zero_sample_is_debounced():
    series = synthetic_series([1, 1, 0, -1, -1])
    assert np.allclose(flip_times(series), [2.0])


def test_zero_gap_between_same_signs_is_not_a_flip():
    series = synthetic_series([1, 1, 0, 1, 1])
    assert len(flip_times(series)) == 0


def test_long_zero_run_still_brackets_one_flip():
    series = synthetic_series([1, 0, 0, -1])
    assert np.allclose(flip_times(series), [1.5])


def test_leading_zeros_do_not_count_as_flips():
    series = synthetic_series([0, 0, 0, 1, 1, -1, -1])
    assert np.allclose(flip_times(series), [4.5])


def test_estimate_period_from_uniform_flips():
    est = estimate_period(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), dt=0.01)
    assert np.isclose(est.period, 2.0)
    assert np.isclose(est.uncertainty, 0.005)
    assert est.n_flips == 5
    assert est.n_cycles_used == 2


def test_estimate_period_needs_three_flips():
    with pytest.raises(InsufficientCycles):
        estimate_period(np.array([1.0, 2.0]), dt=0.01)


def test_theoretical_period_values():
    assert np.isclose(theoretical_period(-1.0, MomentumPoint(np.pi, np.pi)), np.pi)
    assert np.isclose(theoretical_period(-1.0, MomentumPoint(0.0, 0.0)), np.pi / 3)
    assert np.isclose(theoretical_period(1.0, MomentumPoint(np.pi, np.pi)), np.pi / 3)
    with pytest.raises(GapClosed):
        theoretical_period(-2.0, MomentumPoint(np.pi, np.pi))


def test_default_t_max_and_cap():
    assert np.isclose(default_t_max(-1.0, MomentumPoint(np.pi, np.pi)), 10 * np.pi)
    assert default_t_max(-2.0, MomentumPoint(np.pi, np.pi)) == 1000.0
    assert default_t_max(-2.0, MomentumPoint(np.pi, np.pi), cap=50.0) == 50.0


# ----------------------------------------------------------------------
# pre-quench gauging of the probe loop
# ----------------------------------------------------------------------

def test_prequench_field_picks_regular_gauge():
    grid = KGrid(20)
    assert prequench_field(3.0, grid, PROBE_PI_PI, 0.4).gauge == GAUGE_B
    assert prequench_field(-3.0, grid, PROBE_PI_PI, 0.4).gauge == GAUGE_A
    assert prequench_field(-3.0, grid, PROBE_ZERO_ZERO, 0.4).gauge == GAUGE_A


def test_vorticity_series_rejects_excluded_loop_node():
    grid = KGrid(40)
    field = ground_state_field(3.0, grid, GAUGE_B)
    loop = loop_around(grid, probe_node(grid, PROBE_PI_PI), 0.3)
    i, j = loop.samples[0]
    field.excluded[i, j] = True
    protocol = QuenchProtocol(3.0, -1.0, t_max=1.0)
    with pytest.raises(UndefinedPhaseOnLoop):
        vorticity_series(protocol, grid, PROBE_PI_PI, radius=0.3, field=field)


def test_vorticity_series_rejects_grid_mismatch():
    field = ground_state_field(3.0, KGrid(20), GAUGE_B)
    protocol = QuenchProtocol(3.0, -1.0, t_max=1.0)
    with pytest.raises(ConfigError):
        vorticity_series(protocol, GRID, PROBE_PI_PI, field=field)


# ----------------------------------------------------------------------
# the oscillating index on the real model
# ----------------------------------------------------------------------

def test_no_quench_means_no_oscillation():
    protocol = QuenchProtocol(3.0, 3.0, dt=0.01, t_max=5.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    assert np.all(series.indices == 0)
    assert len(flip_times(series)) == 0


def test_oscillation_period_matches_rabi_law():
    protocol = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    assert series.probe == (50, 50)
    assert series.radius == DEFAULT_PROBE_RADIUS
    assert np.isclose(series.dt, 0.01)
    flips = flip_times(series)
    assert len(flips) == 6
    est = estimate_period(flips, series.dt)
    want = theoretical_period(-1.0, series.momentum)
    assert abs(est.period - want) / want < 0.02
    # the flips are uniformly spaced to within the sampling resolution
    assert np.ptp(np.diff(flips)) <= 2.0 * series.dt + 1e-12


def test_index_alternates_and_starts_positive():
    protocol = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    nonzero = series.indices[series.indices != 0]
    assert nonzero[0] == 1
    # collapse plateaus and check strict sign alternation
    plateaus = [int(nonzero[0])]
    for v in nonzero[1:]:
        if v != plateaus[-1]:
            plateaus.append(int(v))
    assert all(a == -b for a, b in zip(plateaus, plateaus[1:]))
    assert len(plateaus) == len(flip_times(series)) + 1


def test_weak_loop_circulation_never_reaches_a_full_turn():
    # on a small probe loop the evolved-field circulation stays a small
    # nonpositive quantity, so the rounded winding never leaves zero even
    # while the orientation index keeps flipping
    protocol = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    assert np.all(series.raw_windings == 0)
    assert np.all(series.circulation <= 1e-9)
    assert set(np.unique(series.indices)) == {-1, 0, 1}


def test_faster_oscillation_at_larger_gap():
    protocol = QuenchProtocol(3.0, 1.0, dt=0.01, t_max=5.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    est = estimate_period(flip_times(series), series.dt)
    want = np.pi / 3.0
    assert abs(est.period - want) / want < 0.02


def test_zero_zero_probe_reads_the_other_node_gap():
    protocol = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=6.0)
    series = vorticity_series(protocol, GRID, PROBE_ZERO_ZERO)
    est = estimate_period(flip_times(series), series.dt)
    want = np.pi / 3.0
    assert abs(est.period - want) / want < 0.02


def test_delay_shifts_every_flip_rigidly():
    base = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0)
    delayed = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0, delay=0.7)
    flips0 = flip_times(vorticity_series(base, GRID, PROBE_PI_PI))
    flips1 = flip_times(vorticity_series(delayed, GRID, PROBE_PI_PI))
    n = min(len(flips0), len(flips1))
    assert n >= 3
    assert np.allclose(flips1[:n], flips0[:n] + 0.7, atol=1e-9)


def test_near_critical_quench_freezes_the_index():
    protocol = QuenchProtocol(3.0, -2.0 - 1e-11)  # default t_max = 10
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    assert len(flip_times(series)) == 0


# ----------------------------------------------------------------------
# period scan
# ----------------------------------------------------------------------

def test_scan_tracks_theory_and_orders_periods():
    rows = scan_period_vs_mass(3.0, (-1.5, -1.0, -0.5), GRID, PROBE_PI_PI)
    assert [r.status for r in rows] == [STATUS_OK] * 3
    for row in rows:
        assert abs(row.ratio - 1.0) < 0.02
        assert row.n_flips >= 3
    periods = [r.period for r in rows]
    assert periods[0] > periods[1] > periods[2]


def test_scan_reports_gap_closed_and_continues():
    rows = scan_period_vs_mass(3.0, (-2.0, -1.0), GRID, PROBE_PI_PI)
    assert rows[0].status == STATUS_GAP_CLOSED
    assert np.isnan(rows[0].period) and np.isnan(rows[0].ratio)
    assert rows[1].status == STATUS_OK


def test_scan_reports_insufficient_cycles_and_continues():
    rows = scan_period_vs_mass(
        3.0, (-1.0, 1.0), GRID, PROBE_PI_PI, t_max_cap=2.0
    )
    assert rows[0].status == STATUS_INSUFFICIENT
    assert rows[0].n_flips < 3
    assert np.isnan(rows[0].period)
    assert rows[1].status == STATUS_OK  # period pi/3 fits 2.0 time units


# ----------------------------------------------------------------------
# coincidence with the Loschmidt amplitude
# ----------------------------------------------------------------------

def test_sign_change_interpolation():
    times = np.arange(0.0, 7.0, 0.01)
    crossings = sign_change_times(times, np.cos(times))
    assert np.allclose(crossings, [np.pi / 2, 3 * np.pi / 2], atol=1e-4)
    assert np.allclose(sign_change_times([0.0, 1.0, 2.0], [1.0, 0.0, -1.0]), [1.0])
    assert np.allclose(sign_change_times([0.0, 1.0], [1.0, 0.0]), [1.0])


def test_flips_coincide_with_loschmidt_sign_changes():
    protocol = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    field = prequench_field(3.0, GRID, PROBE_PI_PI)
    loschmidt = loschmidt_series(field, protocol, series.probe)
    report = coincidence_test(loschmidt, series)
    assert len(report.flips) == len(report.matched) == 6
    assert report.max_offset <= 2.0 * protocol.dt
    assert np.isclose(report.window, 0.05)


def test_coincidence_with_no_flips_is_empty():
    protocol = QuenchProtocol(3.0, 3.0, dt=0.01, t_max=5.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    field = prequench_field(3.0, GRID, PROBE_PI_PI)
    loschmidt = loschmidt_series(field, protocol, series.probe)
    report = coincidence_test(loschmidt, series)
    assert len(report.flips) == 0
    assert report.max_offset == 0.0


def test_unmatched_flip_raises():
    series = synthetic_series([1, 1, 1, -1, -1, -1], dt=0.01)
    flat = LoschmidtSeries(
        probe=(0, 0), times=series.times, values=np.ones(len(series.times))
    )
    with pytest.raises(UnmatchedFlip):
        coincidence_test(flat, series)


def test_distant_sign_change_raises():
    series = synthetic_series([1] * 50 + [-1] * 50, dt=0.01)
    values = np.ones(100, dtype=complex)
    values[-2:] = -1.0  # lone crossing far from the flip at t = 0.495
    distant = LoschmidtSeries(probe=(0, 0), times=series.times, values=values)
    with pytest.raises(UnmatchedFlip):
        coincidence_test(distant, series)


def test_coincidence_requires_matching_clocks():
    series = synthetic_series([1, 1, -1, -1], dt=0.01)
    other = LoschmidtSeries(
        probe=(0, 0), times=np.arange(3) * 0.01, values=np.ones(3)
    )
    with pytest.raises(ConfigError):
        coincidence_test(other, series)


# ----------------------------------------------------------------------
# decoding the post-quench mass
# ----------------------------------------------------------------------

def test_decode_with_hint():
    est = PeriodEstimate(np.pi, 0.01, 5, 2)
    above = decode_quench_mass(est, PROBE_PI_PI, hint="above")
    assert np.isclose(above.m_quench, -1.0)
    assert np.allclose(above.candidates, (-1.0, -3.0))
    assert np.isclose(above.uncertainty, 0.01 / np.pi)
    below = decode_quench_mass(est, PROBE_PI_PI, hint="below")
    assert np.isclose(below.m_quench, -3.0)
    zz = decode_quench_mass(
        PeriodEstimate(np.pi / 3, 0.01, 5, 2), PROBE_ZERO_ZERO, hint="below"
    )
    assert np.isclose(zz.m_quench, -1.0)


def test_decode_without_hint_uses_unique_window_candidate():
    got = decode_quench_mass(PeriodEstimate(np.pi, 0.01, 5, 2), PROBE_PI_PI)
    assert np.isclose(got.m_quench, -1.0)
    got = decode_quench_mass(PeriodEstimate(np.pi / 3, 0.01, 5, 2), PROBE_ZERO_ZERO)
    assert np.isclose(got.m_quench, -1.0)


def test_decode_ambiguous_when_no_candidate_in_window():
    with pytest.raises(AmbiguousBranch):
        decode_quench_mass(PeriodEstimate(0.5, 0.01, 5, 2), PROBE_PI_PI)


def test_decode_rejects_bad_inputs():
    est = PeriodEstimate(np.pi, 0.01, 5, 2)
    with pytest.raises(ConfigError):
        decode_quench_mass(est, PROBE_PI_PI, hint="sideways")
    with pytest.raises(ConfigError):
        decode_quench_mass(est, "corner")
    with pytest.raises(ConfigError):
        decode_quench_mass(PeriodEstimate(0.0, 0.01, 5, 2), PROBE_PI_PI)


def test_decode_from_series():
    protocol = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=10.0)
    series = vorticity_series(protocol, GRID, PROBE_PI_PI)
    got = decode_quench_mass(series, PROBE_PI_PI, hint="above")
    assert abs(got.m_quench - (-1.0)) < 0.02
    short = QuenchProtocol(3.0, -1.0, dt=0.01, t_max=2.0)
    with pytest.raises(InsufficientCycles):
        decode_quench_mass(
            vorticity_series(short, GRID, PROBE_PI_PI), PROBE_PI_PI
        )


def test_joint_decode_intersects_probes():
    got = decode_joint(
        PeriodEstimate(np.pi, 0.001, 5, 2),
        PeriodEstimate(np.pi / 3, 0.001, 5, 2),
    )
    assert np.isclose(got.m_quench, -1.0)
    assert got.probe == "joint"


def test_joint_decode_degenerate_uncertainty():
    with pytest.raises(AmbiguousBranch):
        decode_joint(
            PeriodEstimate(np.pi, 10.0, 5, 2),
            PeriodEstimate(np.pi / 3, 10.0, 5, 2),
        )


def test_joint_decode_on_measured_series():
    m_quench = 0.7
    estimates = {}
    for probe in (PROBE_PI_PI, PROBE_ZERO_ZERO):
        k = probe_momentum(GRID, probe)
        t_max = default_t_max(m_quench, k)
        protocol = QuenchProtocol(3.0, m_quench, dt=0.01, t_max=t_max)
        series = vorticity_series(protocol, GRID, probe)
        estimates[probe] = estimate_period(flip_times(series), series.dt)
    got = decode_joint(estimates[PROBE_PI_PI], estimates[PROBE_ZERO_ZERO])
    assert abs(got.m_quench - m_quench) < 0.02
