"""Adiabatic quantum computation with Rydberg-dressed neutral atoms."""

__version__ = "0.1.0"

from .analysis import (FidelityReport, GapScan, adiabatic_time, fidelity_report,  # noqa: E402
                       gap_scaling_fit, scan_gap, trials_for_confidence)
from .dressing import (DressedPairResult, DressingParams, TailModel, diagonalize_pair,  # noqa: E402
                       j_at_distance, j_closed_form, scattering_and_merit)
from .evolve import (IntegratorConfig, NoiseModel, QuantumState, evolve_closed,  # noqa: E402
                     evolve_open, evolve_trajectories, readout, run_anneal)
from .hamiltonian import AnnealSpec, Schedule, SparseOperator, build_h_b, build_h_p, h_of_t  # noqa: E402
from .ising import (IsingProblem, QuboProblem, SpinConfiguration, benchmark_chain,  # noqa: E402
                    brute_force_ground, qubo_to_ising, sign_mask_for_couplings)

__all__ = [
    "AnnealSpec", "DressedPairResult", "DressingParams", "FidelityReport", "GapScan",
    "IntegratorConfig", "IsingProblem", "NoiseModel", "QuantumState", "QuboProblem", "Schedule",
    "SparseOperator", "SpinConfiguration", "TailModel", "adiabatic_time", "benchmark_chain",
    "brute_force_ground", "build_h_b", "build_h_p", "diagonalize_pair", "evolve_closed",
    "evolve_open", "evolve_trajectories", "fidelity_report", "gap_scaling_fit", "h_of_t",
    "j_at_distance", "j_closed_form", "qubo_to_ising", "readout", "run_anneal", "scan_gap",
    "scattering_and_merit", "sign_mask_for_couplings", "trials_for_confidence",
]
