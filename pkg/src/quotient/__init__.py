"""Two-party secure training of ternary fixed-point neural networks.

``fxp`` and ``nn`` hold the plaintext fixed-point engine; ``shares``, ``ot``,
``gc``, ``proto`` and ``secure`` build the two-party protocols on top of it;
``net`` carries the messages and ``cli`` wires everything to the command line.
"""
from .fxp import PrecisionConfig

__version__ = "0.1.0"

__all__ = ["PrecisionConfig", "__version__"]
