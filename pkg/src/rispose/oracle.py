"""Brute-force cross-checks for the FIM pipeline.

These routines share only the forward model (``channel.model_vector``) with
the main path: gradients come from a step-size ladder of central
differences, and integration uses the uniform trapezoid rule.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import ModelVariant, model_vector
from .fim import (
    PARAMETER_NAMES,
    Fim,
    JacobianMethod,
    assemble_fim,
    central_difference,
    fim_from_jacobians,
    model_jacobian,
)
from .geometry import Pose, TerminalGeometry

POSITION_STEPS = (1e-4, 1e-5, 1e-6)
ANGLE_STEPS = (1e-5, 1e-6, 1e-7)


@dataclass(frozen=True)
class OracleReport:
    max_relative_error: float
    location: str
    converged: bool
    label: str = ""

    def format(self) -> str:
        return (f"[oracle] {self.label}\n"
                f"  max_relative_error = {self.max_relative_error:.3e}\n"
                f"  location           = {self.location}\n"
                f"  converged          = {str(self.converged).lower()}")


def fd_model_jacobian(f, theta: Pose, phases=None, scenario=None, variant=None, model=None,
                      position_steps=POSITION_STEPS, angle_steps=ANGLE_STEPS,
                      tolerance=1e-5):
    """Step-ladder central differences of the model vector.

    For every parameter, each step ``h`` of the ladder gives a Richardson
    estimate from ``(h, h/2)``; the estimate that agrees best with its
    neighbor on the ladder is returned. ``model(freqs, pose)`` replaces the
    physical model when given (used for synthetic checks). The report is
    flagged not converged when the chosen disagreement exceeds
    ``tolerance`` or the disagreements down the ladder are not V-shaped.

    Returns ``(jacobians, report)``; ``jacobians`` has shape ``(K, L, 6)``
    for array ``f`` and ``(L, 6)`` for scalar ``f``.
    """
    scalar = np.ndim(f) == 0
    freqs = np.atleast_1d(np.asarray(f, dtype=float))
    if model is None:
        def model(fs, pose):
            return model_vector(fs, pose, phases, scenario, variant)

    def func(pose):
        return model(freqs, pose)

    ladders = [position_steps if i < 3 else angle_steps for i in range(6)]
    n_steps = len(position_steps)
    estimates = []
    for s in range(n_steps):
        h = np.array([ladders[i][s] for i in range(6)])
        d1 = central_difference(func, theta, h)
        d2 = central_difference(func, theta, h / 2)
        estimates.append((4 * d2 - d1) / 3)

    result = np.empty_like(estimates[0])
    worst_err, worst_loc, converged = 0.0, "none", True
    for i in range(6):
        disagreement = []
        for s in range(n_steps - 1):
            a, b = estimates[s][..., i], estimates[s + 1][..., i]
            scale = np.linalg.norm(b)
            disagreement.append(np.linalg.norm(a - b) / scale if scale > 0 else 0.0)
        best = int(np.argmin(disagreement))
        result[..., i] = estimates[best + 1][..., i]
        # expected shape: truncation error falls, then roundoff takes over
        rises = np.diff(disagreement) > 0
        if np.any(rises[:-1] & ~rises[1:]) or disagreement[best] > tolerance:
            converged = False
        if disagreement[best] > worst_err:
            worst_err = disagreement[best]
            worst_loc = f"column {PARAMETER_NAMES[i]}, step {ladders[i][best + 1]:g}"
    report = OracleReport(float(worst_err), worst_loc, converged, "fd_model_jacobian")
    return (result[0] if scalar else result), report


def _column_norm(a):
    return np.linalg.norm(np.asarray(a).reshape(-1, 6), axis=0)


def max_column_error(candidate, reference):
    """Worst per-parameter relative Frobenius error and the offending column."""
    ref = _column_norm(reference)
    err = _column_norm(np.asarray(candidate) - np.asarray(reference))
    rel = np.where(ref > 0, err / np.where(ref > 0, ref, 1.0), err)
    k = int(np.argmax(rel))
    return float(rel[k]), PARAMETER_NAMES[k]


def check_jacobian(f, scenario, variant: ModelVariant, theta=None, phases=None) -> OracleReport:
    """Analytic near-field Jacobian against the step-ladder oracle."""
    theta = scenario.pose if theta is None else theta
    phases = scenario.phases() if phases is None else phases
    analytic = model_jacobian(f, theta, phases, scenario, variant, JacobianMethod.ANALYTIC)
    fd, fd_report = fd_model_jacobian(f, theta, phases, scenario, variant)
    err, col = max_column_error(analytic.d_a_d_theta, fd)
    return OracleReport(err, f"f={f:.6g} Hz, column {col}", fd_report.converged,
                        f"analytic vs finite-difference Jacobian ({variant.tag})")


def trapezoid_fim(scenario, variant: ModelVariant, points: int, phases=None) -> Fim:
    """Uniform trapezoid rule on ``[-B/2, B/2]`` with ladder-FD Jacobians."""
    if points < 16:
        raise ValueError(f"trapezoid oracle needs at least 16 points, got {points}")
    phases = scenario.phases() if phases is None else phases
    bw = scenario.signal.bandwidth
    f = np.linspace(-bw / 2, bw / 2, points)
    w = np.full(points, bw / (points - 1))
    w[0] = w[-1] = bw / (points - 1) / 2
    jac, _ = fd_model_jacobian(f, scenario.pose, phases, scenario, variant)
    return Fim(fim_from_jacobians(jac, w, scenario.signal.noise_psd), points)


def relative_frobenius(a, b) -> float:
    a = a.matrix if isinstance(a, Fim) else np.asarray(a)
    b = b.matrix if isinstance(b, Fim) else np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def check_fim(scenario, variant: ModelVariant, points: int = 2**12) -> OracleReport:
    """Gauss-Legendre FIM against the trapezoid oracle."""
    phases = scenario.phases()
    gl = assemble_fim(scenario, variant, phases=phases)
    tr = trapezoid_fim(scenario, variant, points, phases)
    diff = np.abs(gl.matrix - tr.matrix)
    i, j = np.unravel_index(np.argmax(diff), diff.shape)
    return OracleReport(relative_frobenius(gl, tr),
                        f"largest entry difference at ({PARAMETER_NAMES[i]}, {PARAMETER_NAMES[j]})",
                        True, f"Gauss-Legendre vs trapezoid FIM ({variant.tag}, {points} points)")


def reduced_scenario(scenario, ris_count: int = 8, rx_count: int = 4):
    """Congruent small instance: same pose, carrier and terminal placement,
    ``ris_count x ris_count`` RIS and the ``rx_count**2`` Rx antennas closest
    to the Rx phase center."""
    lattice = replace(scenario.lattice, n_count=ris_count, m_count=ris_count)
    term = scenario.terminal
    keep_rx = min(len(term.rx_positions), rx_count**2)
    dist = np.linalg.norm(term.rx_positions - term.rx_phase_center, axis=1)
    rx = term.rx_positions[np.sort(np.argsort(dist, kind="stable")[:keep_rx])]
    tx = term.tx_positions[: min(len(term.tx_positions), 4)]
    return replace(scenario, lattice=lattice, terminal=TerminalGeometry.all_pairs(tx, rx))


def certify(scenario, variants=None, points: int = 2**10, frequencies=3) -> list[OracleReport]:
    """Oracle reports for the reduced version of ``scenario``."""
    small = reduced_scenario(scenario)
    variants = variants or ModelVariant.all()
    reports = []
    bw = small.signal.bandwidth
    for variant in variants:
        if variant.wavefront.value == "near_field":
            for f in np.linspace(-0.4, 0.4, frequencies) * bw:
                reports.append(check_jacobian(float(f), small, variant))
        reports.append(check_fim(small, variant, points))
    return reports
