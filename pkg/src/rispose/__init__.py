"""Cramer-Rao bounds on the position and orientation of an RIS-equipped target."""
from .channel import ModelVariant, SignalSpec
from .fim import assemble_fim, oeb, peb
from .geometry import EulerAngles, Pose, RisLattice, TerminalGeometry
from .scenario import Conditioning, Scenario, load_scenario, paper_scenario

__version__ = "0.1.0"

__all__ = [
    "Conditioning",
    "EulerAngles",
    "ModelVariant",
    "Pose",
    "RisLattice",
    "Scenario",
    "SignalSpec",
    "TerminalGeometry",
    "assemble_fim",
    "load_scenario",
    "oeb",
    "paper_scenario",
    "peb",
]
