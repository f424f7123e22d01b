"""Make the src layout importable when the package is not installed."""

import sys
from pathlib import Path

try:
    import icmpstamp  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))
