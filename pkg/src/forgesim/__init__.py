"""Classical simulation of entanglement-forged wavefunctions.

A molecule's active space is split into two spin halves that share one
parameterized circuit; expectation values of the full 2m-qubit state are
reconstructed from m-qubit tomography records. On top of the forged ground
state sit a projected excited-state solver, dipole spectra, population
analysis, a synthetic noise model, and an error-mitigation stack, all
checked against exact diagonalization in the same package.
"""

__version__ = "0.1.0"

from .errors import (
    ConditioningError,
    ConfigError,
    CoverageError,
    DataError,
    ForgesimError,
    MitigationError,
    ParseError,
)
from .fci import FCIResult, fci_solve
from .forging import (
    EFAnsatz,
    GroundConfig,
    MeasurementSet,
    OptimizeResult,
    build_ef_circuit,
    default_basis_states,
    default_schedule,
    ef_expectation,
    ef_matrix_element,
    hamiltonian_for_ansatz,
    hf_pair_energy,
    measurement_set_exact,
    measurement_set_sampled,
    optimal_lambda,
    optimize_ground_state,
    schmidt_matrix,
)
from .integrals import (
    AuxiliaryMatrices,
    CholeskyFactors,
    MolecularIntegrals,
    cholesky_eri,
    freeze_core,
    load_aux,
    parse_fcidump,
    parse_fcidump_text,
    rotate_homo_lumo,
    save_aux,
    write_fcidump,
)
from .mitigation import (
    MitigationFlags,
    ReadoutCalibration,
    calibrate_readout,
    clifford_correct,
    measurement_set_mitigated,
    mitigate_readout,
    postselect,
    purify,
    zero_imaginary_paulis,
)
from .observables import (
    RDM,
    AtomicCharges,
    SpectrumPeaks,
    atomic_charges,
    broaden,
    compute_rdm,
    dsf_peaks,
)
from .operators import (
    TensorFactorOp,
    build_excitations,
    build_hamiltonian_tensor,
    build_number_tensor,
    build_one_body_tensor,
    build_s2_tensor,
    jw_map,
    op_product,
)
from .paulis import PauliSum
from .qse import (
    QSEMatrices,
    QSEResult,
    assemble_qse_matrices,
    estimate_with_uncertainty,
    qse_full_solve,
    solve_qse,
    spin_project,
)
from .simulator import (
    BlochVector,
    Circuit,
    NoiseModel,
    State,
    all_bases,
    assemble_bloch,
    exact_bloch,
    measure_counts_sweep,
    sample_counts,
    tomography,
)
