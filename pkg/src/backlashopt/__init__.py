"""Numerical toolkit for time-optimal control of systems with backlash.

Second-order dynamics with one unilaterally constrained coordinate and
inelastic impacts are approximated by a one-sided penalty force of stiffness
gamma.  The package integrates both the penalized and the limit dynamics,
certifies convergence of penalty trajectories as gamma grows, solves
desk-scale time-optimal problems by switching-time search, and verifies the
first-order optimality conditions (Hamiltonian maximization, adjoint
equations, transversality) in both approximating and limit form.
"""

from .model import (
    CanonicalModel, SystemState, eval_f, eval_g,
    builtin_example1, builtin_example2, check_growth_bound, sample_cloud,
)
from .controls import BangBangControl, ConstantControl, SampledControl, as_control
from .integrator import (
    IntegratorConfig, Trajectory, IntegrationError, StiffnessError,
    integrate_penalty, integrate_limit, step_penalty,
    boundary_layer_closed_form, integrate_layer_ode, resample,
)

__version__ = "0.1.0"
