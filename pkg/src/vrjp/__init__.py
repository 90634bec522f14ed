"""Vertex-reinforced jump processes, their random environments, and the
interlacement limit of wired finite-volume approximations.

Submodules: graph (weighted graphs, exhaustions, wiring), environment
(random environment fields and samplers), mjp (quenched jump processes and
hitting algebra), reinforced (direct VRJP simulation), reduction
(observation maps onto K union {delta}), interlacement (windowed point
process sampling), experiments (rate tables and convergence experiments),
io/cli (configuration and command line).
"""

__version__ = "0.1.0"
