"""Hermite-Fourier spectral simulator and verification lab for the magnetized kinetic Fokker-Planck equation.

The unknown is expanded in orthonormal Hermite functions of velocity and
Fourier modes of the periodic position variable. Operators are sparse
Galerkin matrices; time stepping, entropy functionals, decay fits and the
enlargement machinery work on those matrices.
"""

from .field import (BandError, FieldState, Frame, FrameError, GridConfig, MagneticField, Moments,
                    QuadratureError, Weight, convert_frame, maxwellian, moments, norm_lp_m, norm_w1p_m,
                    project_function, random_state, shifted_maxwellian, single_mode)
from .operators import (LinearOperatorRep, SplitBundle, Symmetry, a_ledger, a_mp_limit, assemble_collision,
                        assemble_generator, assemble_magnetic, assemble_splitting, assemble_transport,
                        commutator_checks, nonpositivity_check, psi_lyapunov, search_splitting)
from .evolution import (IntegratorConfig, Scheme, StabilityError, TrajectoryRecord, convergence_order, convolve,
                        duhamel_residual, evolve, semigroup, smoothing_probe, spectral_projection_pi0,
                        t_n_direct, t_n_inductive)
from .hypoco import (DecayFit, EntropyConstants, choose_constants, entropy_f_eps, entropy_h1, fit_decay,
                     lp_m_dissipativity_probe, macro_residual, stepwise_entropy_dissipation)

__version__ = "0.1.0"
