"""Stochastic block models with minority communities: closed-form phase
thresholds, graph sampling, Bethe Hessian and belief-propagation detection,
order selection, and phase-diagram sweeps."""

__version__ = "0.1.0"

from .errors import (DimensionMismatch, GraphFormatError, InfeasibleParameters,
                     MinoritySBMError, SolverError)
from .theory import (MinorityModel, Phase, Scenario, SpectrumReport, classify_phase,
                     closed_form_spectrum, consistent_degree_params, edge_probabilities,
                     feasible_delta_range, params_from_degree, snr,
                     snr_from_probabilities)
from .graphgen import (Partition, SparseGraph, read_edgelist, sample_consistent_degree,
                       sample_direct, sample_sbm, sample_via_background, write_edgelist)
from .metrics import ami, confusion_matrix, mutual_information
from .mdl import description_length, mdl_select
from .spectral import bethe_hessian, detect_bh, lowest_eigenpairs, negative_count
from .bp import detect_bp, em_fit, mfe_select
from .sweep import SweepSpec, preset, run_cell, run_grid, theory_overlays

__all__ = [
    "MinoritySBMError", "InfeasibleParameters", "SolverError", "GraphFormatError",
    "DimensionMismatch",
    "MinorityModel", "Scenario", "Phase", "SpectrumReport", "closed_form_spectrum",
    "classify_phase", "snr", "snr_from_probabilities", "edge_probabilities", "params_from_degree",
    "consistent_degree_params", "feasible_delta_range",
    "Partition", "SparseGraph", "sample_sbm", "sample_direct", "sample_consistent_degree",
    "sample_via_background", "read_edgelist", "write_edgelist",
    "ami", "mutual_information", "confusion_matrix",
    "description_length", "mdl_select",
    "bethe_hessian", "lowest_eigenpairs", "negative_count", "detect_bh",
    "em_fit", "mfe_select", "detect_bp",
    "SweepSpec", "preset", "run_cell", "run_grid", "theory_overlays",
]
