"""qwzmem: gauge-patched Chern invariants and vortex memory readout
for a two-band square-lattice model under sudden mass quenches."""

__version__ = "0.1.0"

from .errors import (
    AmbiguousBranch,
    ConfigError,
    CriticalMass,
    GapClosed,
    GaugeSingularity,
    InsufficientCycles,
    QwzmemError,
    SingularField,
    SingularPlaquette,
    UndefinedPhaseOnLoop,
    UnmatchedFlip,
)
from .model import (
    CRITICAL_MASSES,
    GAUGE_A,
    GAUGE_B,
    BlochVector,
    KGrid,
    MassParameter,
    MomentumPoint,
    Spinor,
    SpinorField,
    band_energies,
    bloch_hamiltonian,
    gap_minimum,
    ground_state_field,
    ground_state_field_global,
    ground_state_gauge_a,
    ground_state_gauge_b,
    r_vector,
)
from .topology import (
    ConnectionField,
    PatchDecomposition,
    TransitionPhase,
    VortexMeasure,
    WindingLoop,
    berry_connection,
    chern_fhs,
    chern_patchwise,
    gauge_transition_phase,
    hall_conductance,
    loop_around,
    loop_circulation,
    patch_decomposition,
    vortex_measure,
    vorticity_z2,
    winding_number,
)
from .quench import (
    LoschmidtSeries,
    QuenchProtocol,
    evolve_field,
    evolve_spinor,
    loschmidt_pointwise,
    loschmidt_series,
    time_dependent_connection,
)
from .memory import (
    CoincidenceReport,
    DecodedMass,
    PeriodEstimate,
    PeriodScanRow,
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
    theoretical_period,
    vorticity_series,
)

__all__ = [name for name in dir() if not name.startswith("_")]
