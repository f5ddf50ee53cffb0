import numpy as np
import pytest

from rispose.channel import ModelVariant
from rispose.geometry import Pose
from rispose.oracle import (
    OracleReport,
    certify,
    check_jacobian,
    fd_model_jacobian,
    max_column_error,
    reduced_scenario,
    relative_frobenius,
    trapezoid_fim,
)

NF_NB = ModelVariant.from_tag("nf-nb")
FF_NB = ModelVariant.from_tag("ff-nb")


def test_fd_recovers_linear_model(rng):
    # a(f, theta) = M theta with complex M, exactly linear so every step agrees
    m = rng.normal(size=(5, 6)) + 1j * rng.normal(size=(5, 6))

    def model(freqs, pose):
        return np.stack([m @ pose.as_vector() for _ in freqs])

    jac, report = fd_model_jacobian(0.0, Pose(np.zeros(3)), model=model)
    assert np.abs(jac - m).max() < 1e-9 * np.abs(m).max()
    assert max_column_error(jac, m)[0] < 1e-9


def test_fd_recovers_quadratic_model(rng):
    m = rng.normal(size=(3, 6))

    def model(freqs, pose):
        v = pose.as_vector()
        return np.stack([m @ (v**2) + np.sin(v).sum() for _ in freqs])

    theta = Pose.from_vector(np.array([0.3, -0.2, 0.1, 0.05, 0.4, -0.3]))
    v = theta.as_vector()
    exact = 2 * m * v[None, :] + np.cos(v)[None, :]
    jac, report = fd_model_jacobian(np.array([0.0, 1.0]), theta, model=model)
    assert jac.shape == (2, 3, 6)
    assert max_column_error(jac[1], exact)[0] < 1e-9
    assert report.max_relative_error < 1e-5


def test_check_jacobian_converges_on_small(small):
    report = check_jacobian(small.signal.bandwidth / 4, small, NF_NB)
    assert report.max_relative_error < 1e-6
    assert report.converged
    text = report.format()
    assert text.startswith("[oracle]") and "converged          = true" in text


def test_trapezoid_needs_enough_points(small):
    with pytest.raises(ValueError, match="16"):
        trapezoid_fim(small, NF_NB, 8)


@pytest.mark.parametrize("variant", [NF_NB, FF_NB])
def test_trapezoid_halving_converges(small, variant):
    coarse = trapezoid_fim(small, variant, 2**11)
    fine = trapezoid_fim(small, variant, 2**12)
    assert relative_frobenius(coarse, fine) < 1e-6


def test_trapezoid_scales_with_noise(small):
    a = trapezoid_fim(small, NF_NB, 64)
    b = trapezoid_fim(small.with_noise_psd(2 * small.signal.noise_psd), NF_NB, 64)
    np.testing.assert_allclose(b.matrix, a.matrix / 2, rtol=1e-14,
                               atol=1e-14 * np.abs(a.matrix).max())


def test_reduced_scenario_shape(paper):
    red = reduced_scenario(paper)
    assert red.lattice.size == 64
    assert len(red.terminal.rx_positions) == 16
    assert red.terminal.n_channels == 16
    np.testing.assert_array_equal(red.pose.position, paper.pose.position)
    assert red.lattice.spacing == paper.lattice.spacing
    # kept antennas stay near the full array's phase center
    spread = np.linalg.norm(red.terminal.rx_positions - paper.terminal.rx_phase_center, axis=1)
    assert spread.max() < 3 * paper.lattice.spacing * np.sqrt(2)


def test_certify_reports(paper):
    reports = certify(paper, [NF_NB], points=64, frequencies=2)
    assert len(reports) == 3
    assert all(isinstance(r, OracleReport) for r in reports)
    assert all(r.max_relative_error < 1e-4 for r in reports)
