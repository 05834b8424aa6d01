"""wspectra: phase-plane quantization and spectral-asymptotics verification.

Quantizes symbols on the phase plane into finite Hermitian matrices, computes
their spectra, and checks the slow-decay eigenvalue laws for sector, polygon
and disk indicator symbols together with the Birman-Schwinger / Prufer
eigenvalue-counting chain behind them.
"""

__version__ = "0.1.0"

from . import lattice, quantize, schrodinger, spectra, symbols

__all__ = ["symbols", "quantize", "spectra", "lattice", "schrodinger", "__version__"]
