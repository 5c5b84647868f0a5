"""spinwire: state transfer through disordered Heisenberg quantum-dot chains."""

from .model import AFM, FM, ChainSpec, SectorBasis, SymmetryError

__all__ = ["AFM", "FM", "ChainSpec", "SectorBasis", "SymmetryError"]

__version__ = "0.1.0"
