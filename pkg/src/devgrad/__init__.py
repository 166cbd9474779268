"""Deviatoric symmetric gradient toolkit: exact operators, wave cone, kernel projections, rigidity and grid studies.

Submodules are imported on demand so that the command-line entry point can
set thread limits before numpy loads.
"""

__version__ = "0.1.0"
