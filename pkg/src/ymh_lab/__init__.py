"""Yang-Mills-Higgs fields on cylinders with a Hamiltonian action on the target.

The top level re-exports the objects most scripts need; everything else lives in
the submodules.
"""
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .gauge import GaugeTransform, apply_gauge, balanced_temporal_gauge, holonomy, random_gauge
from .geodesic_flows import hamiltonian_gradient_line, neumann_integrate, twisted_geodesic_integrate
from .lattice_fields import ConnectionField, CylinderGrid, SectionField
from .lie_action import ActionSpec, AlgebraElement, GroupElement, circle_on_sphere, classify_element, so3_on_sphere
from .metrics_family import collar_profile, family
from .neck_analysis import classify_neck, diagnostics, energy_identity_check, reparameterized_limit, sequence_report
from .runner import RunReport, emit, run_experiment
from .spectral import assemble, classify_degeneration, poincare_check, spectrum
from .ymh_core import SolverOptions, WeightProfile, el_residual, gradient_flow_solve, ymh_energy

__version__ = "0.1.0"

__all__ = [
    "ActionSpec", "AlgebraElement", "ConfigError", "ConnectionField", "CylinderGrid", "ExperimentConfig",
    "GaugeTransform", "GroupElement", "RunReport", "SectionField", "SolverOptions", "WeightProfile",
    "apply_gauge", "assemble", "balanced_temporal_gauge", "circle_on_sphere", "classify_degeneration",
    "classify_element", "classify_neck", "collar_profile", "diagnostics", "el_residual", "emit",
    "energy_identity_check", "family", "gradient_flow_solve", "hamiltonian_gradient_line", "holonomy",
    "load_config", "neumann_integrate", "parse_config", "poincare_check", "random_gauge",
    "reparameterized_limit", "run_experiment", "sequence_report", "so3_on_sphere", "spectrum",
    "twisted_geodesic_integrate", "ymh_energy",
]
