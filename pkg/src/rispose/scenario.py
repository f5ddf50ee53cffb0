"""Experiment description and its TOML configuration format.

A scenario file has the sections ``signal``, ``terminal``, ``pose``,
``lattice``, ``variant``, ``quadrature`` and the scalar keys
``phase_mode`` and ``conditioning``. An optional ``sweep`` section lists
``bandwidths`` and ``sides`` for the sweep commands. Numbers may be written
as TOML numbers or as strings with an SI prefix (``"78.5G"``, ``"10 cm"``).
See ``rispose/scenarios/paper_fig2a.toml`` for a complete example.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import (
    Band,
    ModelVariant,
    SignalSpec,
    Wavefront,
    dbm_to_watts,
    default_gamma_elem,
    wavelength,
)
from .fim import QuadratureSpec
from .geometry import EulerAngles, Pose, RisLattice, TerminalGeometry
from .phase_config import PhaseConfig, PhaseMode, configure_ff, configure_nf, load_phase_file

BUNDLED = ("paper_fig2a", "paper_fig2b", "paper_fig3")


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file (exit code 2 in the CLI)."""


class Conditioning(enum.Enum):
    FULL = "full"
    KNOWN_ORIENTATION = "known-orientation"
    KNOWN_POSITION = "known-position"


@dataclass(frozen=True)
class Scenario:
    signal: SignalSpec
    terminal: TerminalGeometry
    pose: Pose
    lattice: RisLattice
    variant: ModelVariant = field(default_factory=ModelVariant)
    phase_mode: PhaseMode = PhaseMode.NF
    phase_file: Optional[Path] = None
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    conditioning: Conditioning = Conditioning.FULL
    bandwidths: tuple = ()
    sides: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.phase_mode is PhaseMode.EXTERNAL:
            if self.phase_file is None or not Path(self.phase_file).is_file():
                raise ScenarioError(f"phase file not found: {self.phase_file}")

    def phases(self) -> PhaseConfig:
        """Phase profile configured at the true pose (or read from file)."""
        if self.phase_mode is PhaseMode.NF:
            return configure_nf(self.pose, self.lattice, self.terminal, self.signal.f0)
        if self.phase_mode is PhaseMode.FF:
            return configure_ff(self.pose, self.lattice, self.terminal, self.signal.f0)
        return load_phase_file(self.phase_file, self.lattice)

    def with_bandwidth(self, bandwidth: float) -> "Scenario":
        return replace(self, signal=self.signal.with_bandwidth(bandwidth))

    def with_side(self, side: float) -> "Scenario":
        n = side_to_count(side, self.lattice.spacing)
        return replace(self, lattice=replace(self.lattice, n_count=n, m_count=n))

    def with_noise_psd(self, noise_psd: float) -> "Scenario":
        s = self.signal
        return replace(self, signal=SignalSpec(s.f0, s.bandwidth, s.tx_power, noise_psd,
                                               s.integration_time))


def side_to_count(side: float, spacing: float) -> int:
    """Even element count along one side: ``2 floor(S / (2 d))``."""
    n = 2 * int(math.floor(side / (2 * spacing) + 1e-9))
    if n < 2:
        raise ScenarioError(f"RIS side {side} m is smaller than two elements ({2 * spacing} m)")
    return n


def planar_array(count_a: int, count_b: int, spacing: float, plane: str = "yz",
                 center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Antenna grid with indices ``-K/2 .. K/2-1`` along the two in-plane axes."""
    axes = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}[plane]
    ia = np.arange(count_a) - count_a // 2
    ib = np.arange(count_b) - count_b // 2
    aa, bb = np.meshgrid(ia, ib, indexing="ij")
    pos = np.zeros((count_a * count_b, 3))
    pos[:, axes[0]] = aa.ravel() * spacing
    pos[:, axes[1]] = bb.ravel() * spacing
    return pos + np.asarray(center, dtype=float)


def paper_scenario(side: float = 0.10, bandwidth: float = 1e9, rx_count: int = 20,
                   ris_count: Optional[int] = None,
                   variant: ModelVariant = ModelVariant(),
                   integration_time: float = 1e-3) -> Scenario:
    """Monostatic 78.5 GHz terminal with an RIS at ``[5, 0, -5.5]`` m.

    ``rx_count`` sets the side of the square Rx grid; ``ris_count`` overrides
    the element count derived from ``side`` (used for reduced test instances).
    """
    f0 = 78.5e9
    lam = wavelength(f0)
    d = lam / 2
    n = ris_count if ris_count is not None else side_to_count(side, d)
    terminal = TerminalGeometry.all_pairs(np.zeros((1, 3)),
                                          planar_array(rx_count, rx_count, lam / 2, "yz"))
    return Scenario(
        signal=SignalSpec(f0, bandwidth, dbm_to_watts(23.0), dbm_to_watts(-173.0),
                          integration_time),
        terminal=terminal,
        pose=Pose(np.array([5.0, 0.0, -5.5]), EulerAngles(0.0, 0.0, 0.0)),
        lattice=RisLattice(n, n, d, default_gamma_elem(d, f0)),
        variant=variant,
    )


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_SI = {"p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "c": 1e-2,
       "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Zµ/]*)\s*$")
_UNITS = ("dBm/Hz", "dBm", "rad", "Hz", "m", "s", "W")


def parse_number(value, key: str = "") -> float:
    """Float from a TOML number or an SI-suffixed string like ``"78.5 GHz"``."""
    if isinstance(value, bool):
        raise ScenarioError(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _NUMBER.match(value)
        if match:
            number, suffix = float(match.group(1)), match.group(2)
            if suffix == "":
                return number
            for unit in _UNITS:
                if suffix.endswith(unit):
                    prefix = suffix[: -len(unit)]
                    if prefix == "":
                        return number
                    if prefix in _SI:
                        return number * _SI[prefix]
            if suffix in _SI:
                return number * _SI[suffix]
    raise ScenarioError(f"{key}: cannot interpret {value!r} as a number")


class _Reader:
    """Pulls typed values out of the parsed TOML and tracks source lines."""

    def __init__(self, data: dict, text: str, source: str):
        self.data = data
        self.lines = text.splitlines()
        self.source = source

    def line_of(self, path: str) -> Optional[int]:
        section, _, key = path.rpartition(".")
        in_section = section == ""
        for i, line in enumerate(self.lines, start=1):
            stripped = line.strip()
            if stripped.startswith("["):
                in_section = stripped.strip("[] ") == section
                continue
            if in_section and re.match(rf"^{re.escape(key)}\s*=", stripped):
                return i
        return None

    def fail(self, path: str, message: str):
        line = self.line_of(path)
        where = f"{self.source}:{line}" if line else self.source
        raise ScenarioError(f"{where}: {path}: {message}")

    def get(self, path: str, default=None):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def number(self, path: str, default=None) -> Optional[float]:
        raw = self.get(path)
        if raw is None:
            return default
        try:
            return parse_number(raw, path)
        except ScenarioError as exc:
            self.fail(path, str(exc).split(": ", 1)[-1])

    def vector(self, path: str, default=None) -> Optional[np.ndarray]:
        raw = self.get(path)
        if raw is None:
            return None if default is None else np.asarray(default, dtype=float)
        try:
            arr = np.array([[parse_number(v, path) for v in row] if isinstance(row, list)
                            else parse_number(row, path) for row in raw], dtype=float)
        except (ScenarioError, TypeError, ValueError):
            self.fail(path, f"expected a numeric vector, got {raw!r}")
        return arr

    def integer(self, path: str, default=None) -> Optional[int]:
        value = self.number(path, default)
        if value is None:
            return None
        if value != int(value):
            self.fail(path, f"expected an integer, got {value}")
        return int(value)

    def choice(self, path: str, options: dict, default):
        raw = self.get(path)
        if raw is None:
            return default
        key = str(raw).lower().replace("_", "-")
        if key not in options:
            self.fail(path, f"expected one of {sorted(options)}, got {raw!r}")
        return options[key]


_WAVEFRONTS = {"near-field": Wavefront.NEAR_FIELD, "nf": Wavefront.NEAR_FIELD,
               "far-field": Wavefront.FAR_FIELD, "ff": Wavefront.FAR_FIELD}
_BANDS = {"wideband": Band.WIDEBAND, "wb": Band.WIDEBAND,
          "narrowband": Band.NARROWBAND, "nb": Band.NARROWBAND}
_PHASES = {"nf": PhaseMode.NF, "ff": PhaseMode.FF, "external": PhaseMode.EXTERNAL}
_CONDITIONING = {c.value: c for c in Conditioning}


def _read_signal(r: _Reader) -> SignalSpec:
    f0 = r.number("signal.f0")
    if f0 is None:
        r.fail("signal.f0", "missing required key")
    bandwidth = r.number("signal.bandwidth")
    if bandwidth is None:
        sweep = r.get("sweep.bandwidths")
        if sweep:
            bandwidth = r.vector("sweep.bandwidths")[0]
        else:
            r.fail("signal.bandwidth", "missing required key")
    if r.get("signal.tx_power") is not None:
        power = r.number("signal.tx_power")
    else:
        power = dbm_to_watts(r.number("signal.tx_power_dbm", 23.0))
    if r.get("signal.noise_psd") is not None:
        n0 = r.number("signal.noise_psd")
    else:
        n0 = dbm_to_watts(r.number("signal.noise_psd_dbm_hz", -173.0))
    t = r.number("signal.integration_time", 1e-3)
    checks = [("signal.f0", f0 > 0, "must be positive"),
              ("signal.bandwidth", 0 < bandwidth < 2 * f0, "must lie in (0, 2 f0)"),
              ("signal.tx_power", power > 0, "must be positive"),
              ("signal.noise_psd", n0 > 0, "must be positive"),
              ("signal.integration_time", t > 0, "must be positive")]
    for path, ok, msg in checks:
        if not ok:
            r.fail(path, msg)
    return SignalSpec(f0, bandwidth, power, n0, t)


def _read_antennas(r: _Reader, prefix: str, f0: float) -> np.ndarray:
    explicit = r.vector(f"terminal.{prefix}_positions")
    if explicit is not None:
        explicit = np.atleast_2d(explicit)
        if explicit.shape[1] != 3:
            r.fail(f"terminal.{prefix}_positions", "each position needs 3 coordinates")
        return explicit
    grid = r.get(f"terminal.{prefix}_array")
    if grid is None:
        return np.zeros((1, 3))
    base = f"terminal.{prefix}_array"
    counts = r.vector(f"{base}.count", [1, 1]).astype(int)
    spacing = r.number(f"{base}.spacing", wavelength(f0) / 2)
    plane = str(r.get(f"{base}.plane", "yz"))
    if plane not in ("xy", "yz", "xz"):
        r.fail(f"{base}.plane", f"expected xy, yz or xz, got {plane!r}")
    if np.any(counts < 1) or counts.size != 2:
        r.fail(f"{base}.count", "expected two positive integers")
    if not spacing > 0:
        r.fail(f"{base}.spacing", "must be positive")
    center = r.vector(f"{base}.center", [0.0, 0.0, 0.0])
    return planar_array(int(counts[0]), int(counts[1]), spacing, plane, center)


def _read_terminal(r: _Reader, f0: float) -> TerminalGeometry:
    tx = _read_antennas(r, "tx", f0)
    rx = _read_antennas(r, "rx", f0)
    chans = r.get("terminal.channels", "all_pairs")
    if chans == "all_pairs":
        return TerminalGeometry.all_pairs(tx, rx)
    try:
        return TerminalGeometry(tx, rx, tuple(tuple(c) for c in chans))
    except (ValueError, TypeError) as exc:
        r.fail("terminal.channels", str(exc))


def _read_lattice(r: _Reader, f0: float) -> RisLattice:
    spacing = r.number("lattice.spacing", wavelength(f0) / 2)
    if not spacing > 0:
        r.fail("lattice.spacing", "must be positive")
    side = r.number("lattice.side")
    n = r.integer("lattice.n_count")
    m = r.integer("lattice.m_count")
    if n is None and m is None:
        if side is None:
            sides = r.get("sweep.sides")
            if not sides:
                r.fail("lattice.side", "give lattice.side or lattice.n_count/m_count")
            side = r.vector("sweep.sides")[0]
        try:
            n = m = side_to_count(side, spacing)
        except ScenarioError as exc:
            r.fail("lattice.side", str(exc))
    n = m if n is None else n
    m = n if m is None else m
    for key, value in (("lattice.n_count", n), ("lattice.m_count", m)):
        if value < 1 or value % 2:
            r.fail(key, f"must be a positive even integer, got {value}")
    gamma = r.number("lattice.gamma_elem", default_gamma_elem(spacing, f0))
    if not gamma > 0:
        r.fail("lattice.gamma_elem", "must be positive")
    return RisLattice(n, m, spacing, gamma)


def parse_scenario(text: str, source: str = "<scenario>", base_dir: Path | None = None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: parse error: {exc}") from None
    r = _Reader(data, text, source)
    signal = _read_signal(r)
    terminal = _read_terminal(r, signal.f0)
    position = r.vector("pose.position")
    if position is None or position.shape != (3,):
        r.fail("pose.position", "expected a 3-vector")
    orient = r.vector("pose.orientation", [0.0, 0.0, 0.0])
    if orient.shape != (3,) or not np.all(np.isfinite(orient)):
        r.fail("pose.orientation", "expected three finite Euler angles")
    pose = Pose(position, EulerAngles.from_array(orient))
    for label, centre in (("Tx", terminal.tx_phase_center), ("Rx", terminal.rx_phase_center)):
        if np.allclose(pose.position, centre):
            r.fail("pose.position", f"coincides with the {label} phase center")
    lattice = _read_lattice(r, signal.f0)
    variant = ModelVariant(r.choice("variant.wavefront", _WAVEFRONTS, Wavefront.NEAR_FIELD),
                           r.choice("variant.band", _BANDS, Band.WIDEBAND))
    phase_raw = r.get("phase_mode", "nf")
    phase_file = None
    if isinstance(phase_raw, dict):
        if "external" not in phase_raw:
            r.fail("phase_mode", "table form must be {external = \"<file>\"}")
        phase_mode = PhaseMode.EXTERNAL
        phase_file = Path(phase_raw["external"])
        if base_dir is not None and not phase_file.is_absolute():
            phase_file = base_dir / phase_file
        if not phase_file.is_file():
            r.fail("phase_mode", f"phase file not found: {phase_file}")
    else:
        phase_mode = r.choice("phase_mode", _PHASES, PhaseMode.NF)
        if phase_mode is PhaseMode.EXTERNAL:
            r.fail("phase_mode", "external mode needs {external = \"<file>\"}")
    nodes = r.integer("quadrature.nodes", 129)
    tol = r.number("quadrature.refinement", 1e-8)
    rule = str(r.get("quadrature.rule", "gauss_legendre")).lower().replace("-", "_")
    if rule != "gauss_legendre":
        r.fail("quadrature.rule", f"only gauss_legendre is supported, got {rule!r}")
    if nodes < 2:
        r.fail("quadrature.nodes", "must be at least 2")
    if not tol > 0:
        r.fail("quadrature.refinement", "must be positive")
    conditioning = r.choice("conditioning", _CONDITIONING, Conditioning.FULL)
    bandwidths = tuple(r.vector("sweep.bandwidths", [])) if r.get("sweep.bandwidths") else ()
    for b in bandwidths:
        if not 0 < b < 2 * signal.f0:
            r.fail("sweep.bandwidths", f"value {b} outside (0, 2 f0)")
    sides = tuple(r.vector("sweep.sides", [])) if r.get("sweep.sides") else ()
    for s in sides:
        if s < 2 * lattice.spacing:
            r.fail("sweep.sides", f"side {s} m is smaller than two elements")
    if phase_file is not None:
        try:
            load_phase_file(phase_file, lattice)
        except ValueError as exc:
            r.fail("phase_mode", str(exc))
    return Scenario(signal, terminal, pose, lattice, variant, phase_mode, phase_file,
                    QuadratureSpec(rule, nodes, tol), conditioning, bandwidths, sides,
                    name=Path(source).stem)


def load_scenario(path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (``paper_fig2a``...)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("rispose.scenarios").joinpath(f"{path}.toml").read_text()
        return parse_scenario(text, f"{path}.toml")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from None
    return parse_scenario(text, str(p), p.parent)
