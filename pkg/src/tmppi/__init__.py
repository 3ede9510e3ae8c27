"""Sampling-based MPC with a learned transformer warm start.

The package is organised as:

- ``tmppi.rng``          deterministic counter-based randomness
- ``tmppi.mppi``         the sampling-based solver (one solve per control step)
- ``tmppi.sgolay``       Savitzky-Golay smoothing used by the solver
- ``tmppi.envs``         the two benchmark worlds (planar navigation, racing)
- ``tmppi.transformer``  from-scratch seq2seq model, autodiff and training
- ``tmppi.dataset``      episode logs, windowing, quantile normalisation, binary container
- ``tmppi.harness``      closed-loop episodes, data collection and metric sweeps
- ``tmppi.cli``          the ``tmppi`` command line front end
"""

__version__ = "0.1.0"
