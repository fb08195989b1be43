"""Shipped experiment configurations, one per reproduced figure plus test cases."""

from importlib import resources
from pathlib import Path

NAMES = ("fig2a", "fig2b", "fig3a", "fig3b", "fig4", "classical", "oracle_linear",
         "oracle_sqrt", "static")


def path(name: str) -> Path:
    if name not in NAMES:
        raise KeyError(f"unknown recipe {name!r}; available: {', '.join(NAMES)}")
    return Path(str(resources.files(__name__).joinpath(f"{name}.ini")))
