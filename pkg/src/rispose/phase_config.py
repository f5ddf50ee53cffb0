"""RIS phase profiles for near-field focusing and far-field reflection."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ff_decomposition
from .geometry import C, Pose, RisLattice, TerminalGeometry, element_positions


class PhaseMode(enum.Enum):
    NF = "nf"
    FF = "ff"
    EXTERNAL = "external"


@dataclass(frozen=True)
class PhaseConfig:
    """Unwrapped per-element phases in radians, row-major in ``(n, m)``."""

    phases: np.ndarray
    mode: PhaseMode

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float).ravel()
        if not np.all(np.isfinite(ph)):
            raise ValueError("phase profile contains non-finite values")
        object.__setattr__(self, "phases", ph)

    def check_lattice(self, lattice: RisLattice) -> "PhaseConfig":
        if self.phases.size != lattice.size:
            raise ValueError(f"phase profile has {self.phases.size} entries, "
                             f"lattice has {lattice.size} elements")
        return self


def configure_nf(pose: Pose, lattice: RisLattice, terminal: TerminalGeometry,
                 f0: float) -> PhaseConfig:
    """Focus on the Tx and Rx phase centers."""
    xnm = element_positions(pose, lattice)
    path = (np.linalg.norm(xnm - terminal.tx_phase_center, axis=1)
            + np.linalg.norm(terminal.rx_phase_center - xnm, axis=1))
    return PhaseConfig(2 * np.pi * f0 * path / C, PhaseMode.NF)


def configure_ff(pose: Pose, lattice: RisLattice, terminal: TerminalGeometry,
                 f0: float) -> PhaseConfig:
    """Compensate the planar-wavefront excess delays at the carrier."""
    ds = ff_decomposition(pose, lattice, terminal)
    return PhaseConfig(2 * np.pi * f0 * (ds.dtau_in_nm + ds.dtau_out_nm), PhaseMode.FF)


def load_phase_file(path, lattice: RisLattice | None = None) -> PhaseConfig:
    """Read one radian value per line (blank lines and ``#`` comments skipped)."""
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a number: {text!r}") from None
    cfg = PhaseConfig(np.array(values), PhaseMode.EXTERNAL)
    return cfg.check_lattice(lattice) if lattice is not None else cfg


def save_phase_file(config: PhaseConfig, path) -> None:
    Path(path).write_text("".join(f"{v:.17g}\n" for v in config.phases))
