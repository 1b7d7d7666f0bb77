"""Numerical constraint-qualification analysis for inequality systems.

Modules
-------
expr     expression language, evaluation and forward-mode gradients
problem  problem documents, truncation, active sets and linearized cones
numlin   numerical rank, null spaces, dual vectors, signed least squares
cq       constant-rank checks (CRC, RCRCQ+) and functional dependence
tangent  corrector, tangency certificates, (H1), tangent oracle, Abadie
kkt      Lagrange multipliers under the normal-cone sign pattern
cli      the ``cqa`` command
"""

__version__ = "0.1.0"
