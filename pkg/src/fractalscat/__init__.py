"""Acoustic scattering by self-similar fractal scatterers.

Solves sound-soft time-harmonic scattering problems where the scatterer is
the attractor of an iterated function system, via a Galerkin discretization
of the single-layer operator in the attractor's natural fractal measure.
"""

__version__ = "1.0.0"

from .galerkin import DensitySolution, GalerkinSystem, WaveParams, assemble, solve
from .ifs import IFSAttractor, Similarity, build_attractor, library_attractor
from .mesh import Mesh, ScattererUnion, build_mesh, uniform_mesh
from .postfield import FieldGrid, far_field, near_field, total_field

__all__ = [
    "DensitySolution",
    "FieldGrid",
    "GalerkinSystem",
    "IFSAttractor",
    "Mesh",
    "ScattererUnion",
    "Similarity",
    "WaveParams",
    "assemble",
    "build_attractor",
    "build_mesh",
    "far_field",
    "library_attractor",
    "near_field",
    "solve",
    "total_field",
    "uniform_mesh",
]
