"""Structured-grid simulator for an incompressible flow coupled to a 3x3 order
tensor, with a diagnostics engine for the dissipation identity, constraint
preservation, and mixed-norm regularity criteria."""

from .config import (DiagnosticsConfig, ICConfig, RunConfig, TimeConfig,
                     load_config, parse_config, serialize_config)
from .constitutive import (antisym_stress_sigma, bulk_F, elastic_stress_tau,
                           molecular_field_H, potential_f, stretching_S)
from .diagnostics import (CriterionReport, DiagnosticsEngine, DiagnosticsRecord,
                          MixedNormAccumulator, accumulate_mixed,
                          bochner_conjugate, constraint_drifts, criterion_report,
                          derived_gamma, energy_ledger, energy_residual, lp_norm,
                          serrin_conjugate, sup_q_bound)
from .errors import (CFLViolation, ConfigError, FieldCorruptionError,
                     NonFiniteStateError, QtsError, SolverDivergedError)
from .fields import (FaceBC, GridSpec, ModelParams, Potential, ScalarField,
                     Stretching, TensorField, VariantConfig, VectorField,
                     antisym_part, double_dot, frobenius_sq, sym_part, trace)
from .operators import (BCKind, FieldRole, advect, divergence, gradient,
                        laplacian, role_bcs, set_num_threads, solve_helmholtz,
                        solve_poisson, solve_projection_poisson,
                        tensor_divergence, vector_gradient)
from .presets import initial_state
from .snapshot import read_snapshot, write_snapshot
from .solver import SimState, StepControl, compute_dt, run, step
from .verification import (ManufacturedCase, build_forcing, convergence_study,
                           periodic_case, sample_state, walled_case)

__version__ = "0.1.0"
