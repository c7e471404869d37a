"""discvar: discrete variational integrators and optimal control on Lie groups."""

from . import cli, errors, lgoc, lie, mech, solvers, systems, tboc  # noqa: F401

__version__ = "0.1.0"
