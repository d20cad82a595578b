"""Batch sample-wise stochastic maximum principle solvers for stochastic optimal control."""

from .bsde import AdjointBatch, GradientEstimate, backward_sample, batch_gradient, batch_hbar, classical_oracle
from .core import ControlPath, ProblemSpec, TimeGrid, hamiltonian, hamiltonian_grad_u, relative_error
from .optim import ContractionConfig, ProjectionConfig, RobbinsMonro, ConstantLR, run_contraction, run_projection
from .sde import sample_noise, simulate, simulate_euler, simulate_order2

__version__ = "0.1.0"
