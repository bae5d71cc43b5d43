"""Cause-effect model adaptation toolkit.

Simulates how causal, anticausal and joint models of a two-variable system
adapt to interventions, for categorical and linear-Gaussian families.
Provides the samplers, parameter-space distance geometry, the two stochastic
optimizers, and an experiment harness with a CLI.
"""

__version__ = "0.1.0"

from . import categorical, gaussian, harness, optim, sampling  # noqa: F401
