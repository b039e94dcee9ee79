"""RL-driven eddy-viscosity control on a desk-scale pseudo-spectral LES.

Subpackages are imported lazily by the CLI entry points; importing
``relexi`` itself stays cheap so per-episode worker processes start fast.
"""

__version__ = "0.1.0"
