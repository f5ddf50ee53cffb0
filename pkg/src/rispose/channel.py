"""Delays, radar-equation path loss, transmit spectrum and the noiseless
frequency-domain model vector ``a(f, theta | Phi)``.

Base-band frequencies ``f`` are offsets from the carrier and live in
``[-B/2, B/2]``. Every function that takes ``f`` accepts a scalar or a 1-D
array; array input adds a leading frequency axis to the result.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    C,
    GeometryError,
    Pose,
    RisLattice,
    SphericalDirection,
    TerminalGeometry,
    cartesian_to_spherical,
    direction_to_local,
    element_positions,
    unit_vector,
)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def wavelength(f0: float) -> float:
    return C / f0


def default_gamma_elem(spacing: float, f0: float) -> float:
    """Flat-plate RCS ``4 pi d^4 / lambda0^2`` of a ``d x d`` element."""
    return 4.0 * np.pi * spacing**4 / wavelength(f0) ** 2


@dataclass(frozen=True)
class SignalSpec:
    """Carrier, bandwidth, power (W), noise PSD (W/Hz) and integration time (s)."""

    f0: float
    bandwidth: float
    tx_power: float
    noise_psd: float
    integration_time: float = 1e-3

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not 0 < self.bandwidth < 2 * self.f0:
            raise ValueError(f"bandwidth must lie in (0, 2 f0), got {self.bandwidth}")
        for name in ("tx_power", "noise_psd", "integration_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def energy(self) -> float:
        return self.tx_power * self.integration_time

    def with_bandwidth(self, bandwidth: float) -> "SignalSpec":
        return SignalSpec(self.f0, bandwidth, self.tx_power, self.noise_psd,
                          self.integration_time)


class Wavefront(enum.Enum):
    NEAR_FIELD = "near_field"
    FAR_FIELD = "far_field"


class Band(enum.Enum):
    WIDEBAND = "wideband"
    NARROWBAND = "narrowband"


@dataclass(frozen=True)
class ModelVariant:
    wavefront: Wavefront = Wavefront.NEAR_FIELD
    band: Band = Band.WIDEBAND

    @property
    def tag(self) -> str:
        w = "nf" if self.wavefront is Wavefront.NEAR_FIELD else "ff"
        b = "wb" if self.band is Band.WIDEBAND else "nb"
        return f"{w}-{b}"

    @classmethod
    def from_tag(cls, tag: str) -> "ModelVariant":
        w, _, b = tag.strip().lower().partition("-")
        if w not in ("nf", "ff") or b not in ("wb", "nb"):
            raise ValueError(f"unknown model variant {tag!r}; expected nf-wb, nf-nb, ff-wb or ff-nb")
        return cls(Wavefront.NEAR_FIELD if w == "nf" else Wavefront.FAR_FIELD,
                   Band.WIDEBAND if b == "wb" else Band.NARROWBAND)

    @classmethod
    def all(cls) -> list["ModelVariant"]:
        return [cls(w, b) for w in Wavefront for b in Band]


@dataclass
class DelaySet:
    """Exact and far-field-decomposed delays, in seconds.

    Exact fields are ``(L, N*M)``; terminal excess delays are length ``L``;
    RIS excess delays are length ``N*M``. Fields not produced by the
    constructing function are ``None``.
    """

    tau_in: Optional[np.ndarray] = None
    tau_out: Optional[np.ndarray] = None
    tau_in_0: Optional[float] = None
    tau_out_0: Optional[float] = None
    dtau_in_l: Optional[np.ndarray] = None
    dtau_out_l: Optional[np.ndarray] = None
    dtau_in_nm: Optional[np.ndarray] = None
    dtau_out_nm: Optional[np.ndarray] = None
    xi_in: Optional[SphericalDirection] = None
    xi_out: Optional[SphericalDirection] = None
    zeta_t: Optional[SphericalDirection] = None
    zeta_r: Optional[SphericalDirection] = None

    def recomposed_in(self) -> np.ndarray:
        return self.tau_in_0 + self.dtau_in_l[:, None] + self.dtau_in_nm[None, :]

    def recomposed_out(self) -> np.ndarray:
        return self.tau_out_0 + self.dtau_out_l[:, None] + self.dtau_out_nm[None, :]


@dataclass(frozen=True)
class Reflectivity:
    rho: complex
    residual_phase: float = 0.0


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    if np.any(d == 0):
        raise GeometryError("an RIS element coincides with an antenna")
    return d


def exact_delays(pose: Pose, lattice: RisLattice, terminal: TerminalGeometry) -> DelaySet:
    xnm = element_positions(pose, lattice)
    tau_in = _distances(terminal.channel_tx(), xnm) / C
    tau_out = _distances(terminal.channel_rx(), xnm) / C
    return DelaySet(tau_in=tau_in, tau_out=tau_out)


def planar_excess_delays(lattice: RisLattice, direction: SphericalDirection) -> np.ndarray:
    """``(d/c)(n sin(phi) cos(theta) + m sin(phi) sin(theta))`` for every element."""
    n, m = lattice.indices()
    sp = np.sin(direction.phi)
    return lattice.spacing / C * (n * sp * np.cos(direction.theta)
                                  + m * sp * np.sin(direction.theta))


def ff_decomposition(pose: Pose, lattice: RisLattice, terminal: TerminalGeometry) -> DelaySet:
    """Macroscopic plus excess delays under the planar-wavefront approximation.

    All directions point from the terminal toward the RIS: ``zeta_t`` and
    ``zeta_r`` in the global frame, ``xi_in`` and ``xi_out`` in the RIS frame.
    With that orientation the first-order expansion of ``|x_nm - x_T,l|`` is
    exactly ``tau_0 + dtau_l + dtau_nm`` with the signs used below.
    """
    x = pose.position
    xt, xr = terminal.tx_phase_center, terminal.rx_phase_center
    v_in, v_out = x - xt, x - xr
    r_in, r_out = np.linalg.norm(v_in), np.linalg.norm(v_out)
    if r_in == 0 or r_out == 0:
        raise GeometryError("RIS position coincides with a terminal phase center")
    zeta_t, zeta_r = cartesian_to_spherical(v_in), cartesian_to_spherical(v_out)
    xi_in = direction_to_local(pose.orientation, v_in)
    xi_out = direction_to_local(pose.orientation, v_out)
    return DelaySet(
        tau_in_0=r_in / C,
        tau_out_0=r_out / C,
        dtau_in_l=-(terminal.channel_tx() - xt) @ unit_vector(zeta_t) / C,
        dtau_out_l=-(terminal.channel_rx() - xr) @ unit_vector(zeta_r) / C,
        dtau_in_nm=planar_excess_delays(lattice, xi_in),
        dtau_out_nm=planar_excess_delays(lattice, xi_out),
        xi_in=xi_in,
        xi_out=xi_out,
        zeta_t=zeta_t,
        zeta_r=zeta_r,
    )


def path_loss(pose: Pose, terminal: TerminalGeometry, lattice: RisLattice,
              signal: SignalSpec, residual_phase: float = 0.0) -> Reflectivity:
    """Radar-equation amplitude; depends on the phase-center ranges only."""
    r_in = np.linalg.norm(pose.position - terminal.tx_phase_center)
    r_out = np.linalg.norm(terminal.rx_phase_center - pose.position)
    if r_in == 0 or r_out == 0:
        raise GeometryError("RIS position coincides with a terminal phase center")
    amp = np.sqrt(C**2 * lattice.gamma_elem
                  / ((4 * np.pi) ** 3 * signal.f0**2 * r_in**2 * r_out**2))
    return Reflectivity(complex(amp * np.exp(1j * residual_phase)), residual_phase)


def path_loss_log_gradient(pose: Pose, terminal: TerminalGeometry) -> np.ndarray:
    """``d log|rho| / dx`` (3-vector); the orientation gradient is zero."""
    v_in = pose.position - terminal.tx_phase_center
    v_out = pose.position - terminal.rx_phase_center
    return -v_in / (v_in @ v_in) - v_out / (v_out @ v_out)


def spectrum(signal: SignalSpec, f):
    """Flat base-band spectrum with ``|G|^2 = E/B`` in band, zero outside."""
    f = np.asarray(f, dtype=float)
    level = np.sqrt(signal.energy / signal.bandwidth)
    g = np.where(np.abs(f) <= signal.bandwidth / 2, level, 0.0).astype(complex)
    return g[()] if g.ndim == 0 else g


def reflection_coefficient(f, phases, delay_set: DelaySet, reflectivity: Reflectivity,
                           f0: float):
    """RIS reflection coefficient ``beta(f | Phi)`` including path loss."""
    phases = np.asarray(getattr(phases, "phases", phases), dtype=float)
    excess = delay_set.dtau_in_nm + delay_set.dtau_out_nm
    f = np.asarray(f, dtype=float)
    ph = phases[None, :] - 2 * np.pi * (f0 + f.reshape(-1, 1)) * excess[None, :]
    beta = reflectivity.rho * np.exp(1j * ph).sum(axis=1)
    return beta[0] if f.ndim == 0 else beta


def model_vector(f, theta: Pose, phases, scenario, variant: ModelVariant) -> np.ndarray:
    """Noiseless observation ``a(f, theta | Phi)`` across the ``L`` channels.

    ``scenario`` supplies ``signal``, ``terminal`` and ``lattice``; ``theta``
    may differ from ``scenario.pose`` (the phase profile stays fixed).
    Out-of-band frequencies give zeros.
    """
    phases = np.asarray(getattr(phases, "phases", phases), dtype=float)
    signal, terminal, lattice = scenario.signal, scenario.terminal, scenario.lattice
    f = np.asarray(f, dtype=float)
    fk = f.reshape(-1)
    f0 = signal.f0
    g = np.atleast_1d(spectrum(signal, fk))
    rho = path_loss(theta, terminal, lattice, signal).rho
    weights = np.exp(1j * phases)

    if variant.wavefront is Wavefront.NEAR_FIELD:
        ds = exact_delays(theta, lattice, terminal)
        total = ds.tau_in + ds.tau_out
        if variant.band is Band.WIDEBAND:
            out = np.empty((fk.size, terminal.n_channels), dtype=complex)
            for k, fv in enumerate(fk):
                out[k] = np.exp(-2j * np.pi * (f0 + fv) * total) @ weights
            out *= rho * g[:, None]
        else:
            ff = ff_decomposition(theta, lattice, terminal)
            t0 = ff.tau_in_0 + ff.tau_out_0
            centre = np.exp(-2j * np.pi * f0 * total) @ weights
            out = (rho * g * np.exp(-2j * np.pi * fk * t0))[:, None] * centre[None, :]
    else:
        ds = ff_decomposition(theta, lattice, terminal)
        t0 = ds.tau_in_0 + ds.tau_out_0
        tl = ds.dtau_in_l + ds.dtau_out_l
        refl = Reflectivity(rho)
        if variant.band is Band.WIDEBAND:
            beta = np.atleast_1d(reflection_coefficient(fk, phases, ds, refl, f0))
            out = (g * beta)[:, None] * np.exp(
                -2j * np.pi * (f0 + fk[:, None]) * (t0 + tl[None, :]))
        else:
            beta0 = reflection_coefficient(0.0, phases, ds, refl, f0)
            out = (g * beta0 * np.exp(-2j * np.pi * (f0 + fk) * t0))[:, None] \
                * np.exp(-2j * np.pi * f0 * tl)[None, :]
    return out[0] if f.ndim == 0 else out
