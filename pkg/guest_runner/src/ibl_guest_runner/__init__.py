"""Guest runner: executes generated tabular scoring code in a subprocess
behind a newline-delimited JSON protocol."""

from .sandbox import ALLOWED_IMPORTS, MAX_OUTPUT_BYTES, load_program, run_predict
from .server import PROTOCOL_VERSION, handle_request, serve

__version__ = "0.1.0"
__all__ = [
    "ALLOWED_IMPORTS",
    "MAX_OUTPUT_BYTES",
    "PROTOCOL_VERSION",
    "handle_request",
    "load_program",
    "run_predict",
    "serve",
    "__version__",
]
