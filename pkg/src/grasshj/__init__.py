"""Hamilton-Jacobi solution of classical mechanics with Grassmann variables."""
from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
