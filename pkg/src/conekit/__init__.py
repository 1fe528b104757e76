"""conekit: phase-separation dynamics and exact tip asymptotics on conic surfaces.

The package pairs two views of the same geometry:

* an exact symbolic layer (``indicial``) that computes tip exponents,
  admissible weight windows, and branch spaces with rational/surd arithmetic;
* a numerical layer (``geometry``/``operators``/``dynamics``/``analysis``)
  with a mass-conserving, energy-decreasing solver for the fourth-order
  phase-separation flow and measurement tools that recover the symbolic
  predictions from the computed fields.
"""

__version__ = "0.1.0"

from .geometry import (BoundarySpectrum, RadialMesh, SurfaceProfile,
                       boundary_spectrum, build_mesh, build_profile)
from .fields import CutoffFunction, Field, constant_field, field_from_modes, integrate
from .operators import ModeEigensystem, ModeOperators, SolverError
from .spaces import (h01_dual_norm, h1_seminorm, l2_norm, lp_norm, mean,
                     mellin_norm, mellin_refinement_study, poincare_constant)
from .indicial import (AsymptoticSpace, GammaWindow, IndicialRoot, Surd,
                       asymptotic_space, bilaplacian_indicial_roots,
                       ch_gamma_window, interpolation_exclusions,
                       laplacian_gamma_window, laplacian_indicial_roots,
                       minimal_domain_check)
from .dynamics import (DiagnosticsRecord, SemiflowResult, SemiflowState,
                       StabilityError, StepperConfig, detect_equilibrium,
                       energy, energy_gradient, gradient_residual, run_semiflow,
                       step_imex)
from .analysis import (AbsorbingReport, LinearizationSpectrum, LojasiewiczProbe,
                       TipFit, absorbing_set_experiment, fit_tip_asymptotics,
                       linearization_spectrum, lojasiewicz_probe,
                       smooth_random_field, tip_probe)

__all__ = [name for name in dir() if not name.startswith("_")]
