"""Integer-lattice minimisation of polynomials with a positive definite leading form."""

from .poly import Polynomial, parse, format_poly

__version__ = "0.1.0"

__all__ = ["Polynomial", "parse", "format_poly", "__version__"]
