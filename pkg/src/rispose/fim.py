"""Fisher information for the RIS pose, and the position/orientation error
bounds derived from it.

Parameter ordering is fixed to ``(x, y, z, psi_x, psi_y, psi_z)``.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev, legendre

from . import _kernels
from .channel import (
    Band,
    ModelVariant,
    Wavefront,
    ff_decomposition,
    model_vector,
    path_loss,
    path_loss_log_gradient,
    spectrum,
)
from .geometry import (
    C,
    GeometryError,
    Pose,
    RisLattice,
    TerminalGeometry,
    element_positions,
    rotation_jacobian,
)

PARAMETER_NAMES = ("x", "y", "z", "psi_x", "psi_y", "psi_z")
MAX_NODES = 2**14
MAX_CONDITION = 1e14
FD_STEPS = (1e-5, 1e-6)
FD_TOLERANCE = 1e-5


class NumericalError(RuntimeError):
    """Base class for numerical failures (exit code 3 in the CLI)."""


class SingularFimError(NumericalError):
    def __init__(self, message, null_direction=None, condition=np.inf):
        super().__init__(message)
        self.null_direction = null_direction
        self.condition = condition


class QuadratureError(NumericalError):
    def __init__(self, message, previous=None, last=None):
        super().__init__(message)
        self.previous = previous
        self.last = last


class FiniteDifferenceError(NumericalError):
    pass


class JacobianMethod(enum.Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "gauss_legendre"
    nodes: int = 129
    refinement: float = 1e-8

    def __post_init__(self):
        if self.rule != "gauss_legendre":
            raise ValueError(f"unsupported quadrature rule {self.rule!r}")
        if self.nodes < 2:
            raise ValueError(f"quadrature needs at least 2 nodes, got {self.nodes}")
        if not self.refinement > 0:
            raise ValueError("quadrature refinement tolerance must be positive")


@dataclass(frozen=True)
class ModelJacobian:
    """``d a / d theta`` at one base-band frequency, shape ``(L, 6)``."""

    f: float
    d_a_d_theta: np.ndarray


@dataclass
class Fim:
    matrix: np.ndarray
    nodes: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (6, 6):
            raise ValueError(f"FIM must be 6x6, got {self.matrix.shape}")

    @property
    def xx(self):
        return self.matrix[:3, :3]

    @property
    def xg(self):
        return self.matrix[:3, 3:]

    @property
    def gx(self):
        return self.matrix[3:, :3]

    @property
    def gg(self):
        return self.matrix[3:, 3:]

    def condition_number(self) -> float:
        return scaled_condition(self.matrix)

    def scaled(self, factor: float) -> "Fim":
        return Fim(self.matrix * factor, self.nodes, list(self.history))


def effective_bandwidth(f0: float, bandwidth: float) -> float:
    """RMS bandwidth of a flat spectrum centered at ``f0``."""
    if f0 <= 0 or bandwidth < 0:
        raise ValueError("f0 must be positive and bandwidth non-negative")
    return math.sqrt(f0**2 + bandwidth**2 / 12.0)


# --------------------------------------------------------------------------
# delay gradients
# --------------------------------------------------------------------------

def element_rotation_jacobian(pose: Pose, lattice: RisLattice) -> np.ndarray:
    """``(N*M, 3, 3)`` array; ``[:, :, k]`` is ``dQ/dpsi_k @ p_nm``."""
    p = lattice.local_positions()
    return np.stack([p @ dq.T for dq in rotation_jacobian(pose.orientation)], axis=-1)


def delay_gradients(pose: Pose, lattice: RisLattice, terminal: TerminalGeometry) -> dict:
    """Gradients of incoming and outgoing delays for every channel and element.

    Returns a dict with ``(L, N*M, 3)`` arrays ``in_x``, ``in_gamma``,
    ``out_x`` and ``out_gamma``.
    """
    xnm = element_positions(pose, lattice)
    dxg = element_rotation_jacobian(pose, lattice)
    out = {}
    for key, antennas in (("in", terminal.channel_tx()), ("out", terminal.channel_rx())):
        diff = xnm[None, :, :] - antennas[:, None, :]
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        if np.any(dist == 0):
            raise GeometryError("an RIS element coincides with an antenna")
        unit = diff / dist / C
        out[f"{key}_x"] = unit
        out[f"{key}_gamma"] = np.einsum("lei,eik->lek", unit, dxg)
    return out


# --------------------------------------------------------------------------
# model Jacobians
# --------------------------------------------------------------------------

def _phase_array(phases):
    return np.asarray(getattr(phases, "phases", phases), dtype=float)


class _NearField:
    """Per-scenario precomputation shared by all frequency nodes."""

    def __init__(self, theta: Pose, phases, scenario):
        lattice, terminal, signal = scenario.lattice, scenario.terminal, scenario.signal
        self.signal = signal
        self.xnm = np.ascontiguousarray(element_positions(theta, lattice))
        self.dxg = np.ascontiguousarray(element_rotation_jacobian(theta, lattice))
        w = np.exp(1j * _phase_array(phases))
        self.w_re, self.w_im = np.ascontiguousarray(w.real), np.ascontiguousarray(w.imag)
        self.tx = np.ascontiguousarray(terminal.channel_tx())
        self.rx = np.ascontiguousarray(terminal.channel_rx())
        self.rho = path_loss(theta, terminal, lattice, signal).rho
        self.dlogrho = np.concatenate([path_loss_log_gradient(theta, terminal), np.zeros(3)])
        ff = ff_decomposition(theta, lattice, terminal)
        self.t0 = ff.tau_in_0 + ff.tau_out_0
        # gradient of the macroscopic two-way delay (x only)
        self.dt0 = np.concatenate([
            ((theta.position - terminal.tx_phase_center) / (ff.tau_in_0 * C)
             + (theta.position - terminal.rx_phase_center) / (ff.tau_out_0 * C)) / C,
            np.zeros(3),
        ])

    def direct_sums(self, freqs):
        return _kernels.nf_sums(self.xnm, self.dxg, self.w_re, self.w_im, self.tx, self.rx,
                                self.signal.f0, np.asarray(freqs, dtype=float), C)

    def _delay_span(self):
        span = 0.0
        for lo in range(0, len(self.tx), 64):
            sl = slice(lo, lo + 64)
            t = (np.linalg.norm(self.xnm[None] - self.tx[sl, None], axis=-1)
                 + np.linalg.norm(self.xnm[None] - self.rx[sl, None], axis=-1)) / C
            span = max(span, float(np.max(t.max(axis=1) - t.min(axis=1))))
        return span

    def chebyshev(self, workers: int = 1):
        """Per-channel reference delays and Chebyshev coefficients in ``2f/B``."""
        bw = self.signal.bandwidth
        alpha = math.pi * bw * self._delay_span() / 2
        order = int(math.ceil(alpha + 12 * alpha ** (1 / 3) + 20))
        chunks = np.array_split(np.arange(len(self.tx)), max(1, min(workers, len(self.tx))))

        def run(idx):
            return _kernels.nf_chebyshev_sums(self.xnm, self.dxg, self.w_re, self.w_im,
                                              self.tx[idx], self.rx[idx], self.signal.f0,
                                              bw, C, order)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(run, chunks))
        else:
            parts = [run(idx) for idx in chunks]
        tc = np.concatenate([p[0] for p in parts])
        coef = np.concatenate([p[1] for p in parts])
        return tc, coef

    def wideband_jacobians(self, freqs, sums):
        """``(K, L, 6)`` analytic Jacobians from ``(s0, s1)`` sums at ``freqs``."""
        s0, s1 = sums
        freqs = np.asarray(freqs, dtype=float)
        g = np.atleast_1d(spectrum(self.signal, freqs))
        k = -2j * np.pi * (self.signal.f0 + freqs)
        jac = k[:, None, None] * s1 + s0[:, :, None] * self.dlogrho[None, None, :]
        return self.rho * g[:, None, None] * jac

    def narrowband_jacobians(self, freqs):
        s0, s1 = self.direct_sums([0.0])
        s0, s1 = s0[0], s1[0]
        freqs = np.asarray(freqs, dtype=float)
        g = np.atleast_1d(spectrum(self.signal, freqs))
        env = self.rho * g * np.exp(-2j * np.pi * freqs * self.t0)
        inner = (-2j * np.pi * self.signal.f0 * s1
                 + s0[:, None] * self.dlogrho[None, :])[None, :, :] \
            + (-2j * np.pi * freqs)[:, None, None] * s0[None, :, None] * self.dt0[None, None, :]
        return env[:, None, None] * inner


def _chebyshev_values(tc, coef, freqs, bandwidth):
    x = 2.0 * np.asarray(freqs, dtype=float) / bandwidth
    # coef (L, order+1, 7) -> values (K, L, 7)
    vals = np.moveaxis(chebyshev.chebval(x, np.moveaxis(coef, 1, 0)), -1, 0)
    vals *= np.exp(-1j * np.pi * bandwidth * np.outer(x, tc))[:, :, None]
    return vals[..., 0], vals[..., 1:]


def fd_steps_for(theta_index: int, position_step: float, angle_step: float) -> float:
    return position_step if theta_index < 3 else angle_step


def central_difference(func, theta: Pose, steps):
    """Central differences of ``func(Pose)`` along each of the six parameters.

    ``steps`` is a length-6 sequence. Returns an array whose last axis
    enumerates the parameters.
    """
    base = theta.as_vector()
    cols = []
    for i in range(6):
        e = np.zeros(6)
        e[i] = steps[i]
        plus = func(Pose.from_vector(base + e))
        minus = func(Pose.from_vector(base - e))
        cols.append((plus - minus) / (2 * steps[i]))
    return np.stack(cols, axis=-1)


def column_relative_error(a, b, floor=1e-12):
    """Worst per-parameter relative difference between two Jacobian stacks."""
    a = np.asarray(a).reshape(-1, 6)
    b = np.asarray(b).reshape(-1, 6)
    ref = np.linalg.norm(b, axis=0)
    scale = np.maximum(ref, floor * ref.max()) if ref.max() > 0 else np.ones(6)
    return np.linalg.norm(a - b, axis=0) / scale


def richardson_jacobians(freqs, theta, phases, scenario, variant,
                         position_step=FD_STEPS[0], angle_step=FD_STEPS[1],
                         tolerance=FD_TOLERANCE):
    """Richardson-extrapolated central differences of the model vector.

    Uses steps ``h``, ``h/2`` and ``h/4``; the extrapolations from
    ``(h, h/2)`` and ``(h/2, h/4)`` must agree to ``tolerance`` per column.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    steps = np.array([fd_steps_for(i, position_step, angle_step) for i in range(6)])

    def func(pose):
        return model_vector(freqs, pose, phases, scenario, variant)

    d1, d2, d4 = (central_difference(func, theta, steps / s) for s in (1, 2, 4))
    r12 = (4 * d2 - d1) / 3
    r24 = (4 * d4 - d2) / 3
    if tolerance is not None and np.any(np.abs(r24) > 0):
        err = column_relative_error(r12, r24)
        if np.max(err) >= tolerance:
            worst = int(np.argmax(err))
            raise FiniteDifferenceError(
                f"Richardson check failed for {PARAMETER_NAMES[worst]}: "
                f"relative disagreement {err[worst]:.3g} >= {tolerance:g}")
    return r24


def model_jacobian(f, theta: Pose, phases, scenario, variant: ModelVariant,
                   method: JacobianMethod = JacobianMethod.ANALYTIC) -> ModelJacobian:
    """Jacobian of the model vector at a single base-band frequency."""
    f = float(f)
    if abs(f) > scenario.signal.bandwidth / 2:
        return ModelJacobian(f, np.zeros((scenario.terminal.n_channels, 6), dtype=complex))
    if method is JacobianMethod.FINITE_DIFFERENCE:
        return ModelJacobian(f, richardson_jacobians([f], theta, phases, scenario, variant)[0])
    if variant.wavefront is not Wavefront.NEAR_FIELD:
        raise NotImplementedError(
            "analytic Jacobians exist only for the near-field model; "
            "use JacobianMethod.FINITE_DIFFERENCE")
    nf = _NearField(theta, phases, scenario)
    if variant.band is Band.WIDEBAND:
        jac = nf.wideband_jacobians([f], nf.direct_sums([f]))
    else:
        jac = nf.narrowband_jacobians([f])
    return ModelJacobian(f, jac[0])


# --------------------------------------------------------------------------
# FIM assembly
# --------------------------------------------------------------------------

def gauss_legendre(nodes: int, bandwidth: float):
    x, w = legendre.leggauss(nodes)
    return x * bandwidth / 2, w * bandwidth / 2


def fim_from_jacobians(jacobians, weights, noise_psd) -> np.ndarray:
    """``(2/N0) Re sum_k w_k J_k^H J_k`` accumulated in node order."""
    total = np.zeros((6, 6))
    for jk, wk in zip(jacobians, weights):
        total += wk * np.real(jk.conj().T @ jk)
    total *= 2.0 / noise_psd
    return 0.5 * (total + total.T)


def _relative_change(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny)


def assemble_fim(scenario, variant: ModelVariant, quadrature: QuadratureSpec | None = None,
                 phases=None, workers: int = 1) -> Fim:
    """Integrate the FIM over ``[-B/2, B/2]`` with Gauss-Legendre node doubling.

    ``phases`` defaults to the scenario's configured profile. Near-field
    Jacobians are analytic; far-field Jacobians use Richardson-checked
    finite differences.
    """
    quadrature = quadrature or scenario.quadrature
    phases = scenario.phases() if phases is None else phases
    theta, signal = scenario.pose, scenario.signal
    bw = signal.bandwidth

    if variant.wavefront is Wavefront.NEAR_FIELD:
        nf = _NearField(theta, phases, scenario)
        if variant.band is Band.WIDEBAND:
            tc, coef = nf.chebyshev(workers)

            def jacobians(freqs):
                return nf.wideband_jacobians(freqs, _chebyshev_values(tc, coef, freqs, bw))
        else:
            def jacobians(freqs):
                return nf.narrowband_jacobians(freqs)
    else:
        def jacobians(freqs):
            chunks = np.array_split(np.asarray(freqs), max(1, min(workers, len(freqs))))
            if workers > 1:
                with ThreadPoolExecutor(workers) as pool:
                    parts = list(pool.map(
                        lambda fs: richardson_jacobians(fs, theta, phases, scenario, variant),
                        chunks))
            else:
                parts = [richardson_jacobians(fs, theta, phases, scenario, variant)
                         for fs in chunks]
            return np.concatenate(parts, axis=0)

    nodes = quadrature.nodes
    history = []
    previous = None
    while True:
        f, w = gauss_legendre(nodes, bw)
        current = fim_from_jacobians(jacobians(f), w, signal.noise_psd)
        history.append((nodes, current))
        if previous is not None and _relative_change(current, previous) < quadrature.refinement:
            return Fim(current, nodes, history)
        if 2 * nodes - 1 > MAX_NODES:
            raise QuadratureError(
                f"FIM quadrature did not converge to {quadrature.refinement:g} "
                f"within {MAX_NODES} nodes", previous, current)
        previous = current
        nodes = 2 * nodes - 1


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

def scaled_condition(matrix) -> float:
    """Condition number of the unit-diagonal (Jacobi-scaled) matrix."""
    m = np.asarray(matrix, dtype=float)
    d = np.sqrt(np.abs(np.diag(m)))
    if np.any(d == 0):
        return np.inf
    ev = np.linalg.eigvalsh(m / np.outer(d, d))
    return np.inf if ev[0] <= 0 else float(ev[-1] / ev[0])


def _describe(direction, names):
    return " + ".join(f"{c:.3g}*{n}" for c, n in zip(direction, names) if abs(c) > 1e-3)


def covariance_block(matrix, indices, names=PARAMETER_NAMES,
                     max_condition=MAX_CONDITION) -> np.ndarray:
    """CRB block ``[F^-1][indices, indices]`` of a symmetric information matrix.

    The inverse is taken through a Jacobi-scaled eigendecomposition. Eigen-
    directions below ``1/max_condition`` of the largest eigenvalue are treated
    as unidentifiable; if none of them touches the requested parameters, the
    bound follows from the generalized inverse (it does not depend on which
    one). Otherwise SingularFimError names the offending combination.
    """
    m = np.asarray(matrix, dtype=float)
    m = 0.5 * (m + m.T)
    idx = np.atleast_1d(indices)
    # power-of-two normalization is exact, so bounds scale exactly with N0
    peak = np.abs(np.diag(m)).max()
    unit = 2.0 ** np.frexp(peak)[1] if peak > 0 and np.isfinite(peak) else 1.0
    m = m / unit
    d = np.sqrt(np.abs(np.diag(m)))
    if np.any(d[idx] == 0):
        k = int(idx[np.argmin(d[idx])])
        direction = np.zeros(len(d))
        direction[k] = 1.0
        raise SingularFimError(f"no information on {names[k]}", direction, np.inf)
    d = np.where(d == 0, 1.0, d)
    ev, vec = np.linalg.eigh(m / np.outer(d, d))
    cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
    keep = ev > ev[-1] / max_condition
    if not np.all(keep):
        null = vec[:, ~keep] / d[:, None]
        null /= np.linalg.norm(null, axis=0)
        touched = np.linalg.norm(null[idx], axis=0)
        if np.any(touched > 1e-6):
            direction = null[:, int(np.argmax(touched))]
            raise SingularFimError(
                f"FIM is singular (scaled condition {cond:.3g}); unidentifiable "
                f"direction: {_describe(direction, names)}", direction, cond)
    inv_scaled = (vec[:, keep] / ev[keep]) @ vec[:, keep].T
    inv = inv_scaled / np.outer(d, d)
    return inv[np.ix_(idx, idx)] / unit


def inverse(matrix, names=PARAMETER_NAMES, max_condition=MAX_CONDITION) -> np.ndarray:
    """Full inverse; raises SingularFimError above ``max_condition``."""
    m = np.asarray(matrix, dtype=float)
    return covariance_block(m, np.arange(m.shape[0]), names, max_condition)


def _matrix(fim):
    return fim.matrix if isinstance(fim, Fim) else np.asarray(fim, dtype=float)


def peb(fim, known_orientation: bool = False) -> float:
    """Position error bound in meters."""
    m = _matrix(fim)
    if known_orientation:
        cov = covariance_block(m[:3, :3], [0, 1, 2], PARAMETER_NAMES[:3])
    else:
        cov = covariance_block(m, [0, 1, 2])
    return math.sqrt(np.trace(cov) / 3.0)


_AXES = {"x": 0, "y": 1, "z": 2}


def oeb(fim, axis: str = "y", known_position: bool = False) -> float:
    """Orientation error bound (radians) on roll, pitch or yaw."""
    m = _matrix(fim)
    k = _AXES[axis]
    if known_position:
        return math.sqrt(covariance_block(m[3:, 3:], [k], PARAMETER_NAMES[3:])[0, 0])
    return math.sqrt(covariance_block(m, [3 + k])[0, 0])
