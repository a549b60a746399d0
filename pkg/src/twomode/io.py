"""CSV/JSON emission helpers and the run manifest.

All numeric CSV fields are written with repr(), i.e. the shortest decimal
that round-trips to the same float, so re-running a subcommand with the
manifest's inputs reproduces byte-identical files.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .states import FockState


def fmt(value) -> str:
    """Round-trip decimal form of a scalar."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: str | Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path: str | Path, expected_header: list[str] | None = None) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if expected_header is not None and header != expected_header:
            raise ValueError(
                f"{path}: header {header} does not match expected {expected_header}"
            )
        return np.loadtxt(fh, delimiter=",", ndmin=2)


def state_to_json(state: FockState) -> dict:
    flat = state.amplitudes.ravel()
    return {
        "num_modes": state.num_modes,
        "cutoffs": list(state.cutoffs),
        "amplitudes": [[float(c.real), float(c.imag)] for c in flat],
    }


def state_from_json(doc: dict) -> FockState:
    shape = tuple(c + 1 for c in doc["cutoffs"])
    flat = np.array([complex(re, im) for re, im in doc["amplitudes"]])
    return FockState(flat.reshape(shape))


@dataclass
class RunManifest:
    """Reproduction record paired with every output file of a run."""

    subcommand: str
    config: dict
    seed: int | None
    inputs: list[str]
    outputs: list[str]
    version: str
    duration_s: float = 0.0

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


class ManifestTimer:
    """Context manager collecting wall-clock duration for the manifest."""

    def __init__(self, subcommand: str, config: dict, seed: int | None = None):
        self.manifest = RunManifest(
            subcommand=subcommand,
            config=config,
            seed=seed,
            inputs=[],
            outputs=[],
            version=_version(),
        )
        self._t0 = None

    def __enter__(self):
        self._t0 = time.monotonic()
        return self.manifest

    def __exit__(self, exc_type, exc, tb):
        self.manifest.duration_s = time.monotonic() - self._t0
        if exc_type is None and self.manifest.outputs:
            anchor = Path(self.manifest.outputs[0])
            self.manifest.write(anchor.with_suffix(anchor.suffix + ".manifest.json"))
        return False


def _version() -> str:
    from . import __version__

    return __version__
