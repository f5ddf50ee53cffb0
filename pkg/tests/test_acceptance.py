"""Acceptance criteria at their stated tolerances.

Every test prints one PASS/FAIL line (also collected in the terminal
summary under "acceptance criteria").
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record
from rispose import cli, oracle
from rispose.channel import ModelVariant
from rispose.fim import SingularFimError, assemble_fim, model_jacobian, oeb, peb
from rispose.geometry import EulerAngles, Pose
from rispose.scenario import Conditioning, load_scenario, paper_scenario

FULL = Conditioning.FULL
KNOWN_O = Conditioning.KNOWN_ORIENTATION
KNOWN_P = Conditioning.KNOWN_POSITION
VARIANTS = {tag: ModelVariant.from_tag(tag) for tag in ("nf-wb", "nf-nb", "ff-wb", "ff-nb")}


@pytest.fixture(scope="module")
def certified():
    """Oracle certification of the reduced congruent instance of each bundled scenario."""
    lines = []
    for name in ("paper_fig2a", "paper_fig3"):
        for rep in oracle.certify(load_scenario(name)):
            limit = cli.FIM_TOLERANCE if "FIM" in rep.label else cli.JACOBIAN_TOLERANCE
            assert rep.max_relative_error < limit, rep.format()
            lines.append(rep)
    return lines


# --------------------------------------------------------------------------
# desk-scale criteria
# --------------------------------------------------------------------------

def test_c1_gradient_correctness(small):
    rng = np.random.default_rng(1)
    bw = small.signal.bandwidth
    t0 = time.perf_counter()
    worst, converged = 0.0, True
    for _ in range(10):
        pose = Pose(small.pose.position + rng.uniform(-1, 1, 3),
                    EulerAngles(*rng.uniform(-0.3, 0.3, 3)))
        sc = replace(small, pose=pose)
        ph = sc.phases()
        freqs = rng.uniform(-bw / 2, bw / 2, 20)
        fd, report = oracle.fd_model_jacobian(freqs, pose, ph, sc, VARIANTS["nf-wb"])
        converged &= report.converged
        for k, f in enumerate(freqs):
            an = model_jacobian(f, pose, ph, sc, VARIANTS["nf-wb"]).d_a_d_theta
            worst = max(worst, oracle.max_column_error(an, fd[k])[0])
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 60
    record("1 gradient correctness", ok,
           f"max rel err {worst:.2e} (< 1e-6), {elapsed:.1f} s (< 60 s), "
           f"ladder converged={converged}")
    assert ok


@pytest.mark.parametrize("tag", list(VARIANTS))
def test_c2_fim_oracle_equivalence(small, tag):
    err = oracle.check_fim(small, VARIANTS[tag]).max_relative_error
    ok = err < 1e-4
    record(f"2 GL vs trapezoid FIM ({tag})", ok, f"rel Frobenius {err:.2e} (< 1e-4)")
    assert ok


BOUNDS = (
    peb,
    lambda m: peb(m, known_orientation=True),
    lambda m: oeb(m, "y"),
    lambda m: oeb(m, "y", known_position=True),
)


def test_c3_exact_scalings():
    rng = np.random.default_rng(3)
    worst_fim = worst_bound = 0.0
    min_ratio, checked = np.inf, 0
    tags = list(VARIANTS)
    for i in range(20):
        sc = paper_scenario(bandwidth=rng.uniform(0.5e9, 10e9), rx_count=4, ris_count=8)
        sc = replace(sc, pose=Pose(sc.pose.position + rng.uniform(-1, 1, 3),
                                   EulerAngles(*rng.uniform(-0.3, 0.3, 3))))
        variant = VARIANTS[tags[i % 4]]
        n0 = sc.signal.noise_psd * rng.uniform(0.5, 4.0)
        a = assemble_fim(sc.with_noise_psd(n0), variant).matrix
        b = assemble_fim(sc.with_noise_psd(2 * n0), variant).matrix
        scale = np.abs(a).max()
        worst_fim = max(worst_fim, np.abs(b - a / 2).max() / scale)
        for bound in BOUNDS:
            try:
                ratio = bound(b) / bound(a)
            except SingularFimError:
                # undefined for this draw (e.g. rotation about the bisector)
                continue
            checked += 1
            worst_bound = max(worst_bound, abs(ratio - np.sqrt(2)) / np.sqrt(2))
        ev = np.linalg.eigvalsh(a)
        min_ratio = min(min_ratio, ev[0] / ev[-1])
    ok = worst_fim < 1e-14 and worst_bound < 1e-12 and min_ratio >= -1e-10
    record("3 exact scalings", ok,
           f"FIM 1/N0 {worst_fim:.1e} (< 1e-14), {checked} bounds sqrt(N0) {worst_bound:.1e} "
           f"(< 1e-12), "
           f"min eig/max eig {min_ratio:.1e} (>= -1e-10)")
    assert ok


def test_c4_effective_bandwidth():
    ratio = 78.5e9**2 / (10e9**2 / 12)
    ok = 500 <= ratio <= 1000
    record("4 effective bandwidth", ok, f"f0^2/(B^2/12) = {ratio:.2f} (in [500, 1000])")
    assert ok


# --------------------------------------------------------------------------
# full-scale reproduction
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fig2a_runs(tmp_path_factory, certified):
    """Two identical CLI sweeps on the bundled 10 cm scenario."""
    out = tmp_path_factory.mktemp("fig2a")
    paths, times = [], []
    for k in range(2):
        path = out / f"run{k}.csv"
        t0 = time.perf_counter()
        assert cli.main(["sweep-bandwidth", "--scenario", "paper_fig2a", "--variants", "all",
                         "--workers", "4", "--out", str(path)]) == cli.EXIT_OK
        times.append(time.perf_counter() - t0)
        paths.append(path)
    return paths, times


@pytest.fixture(scope="module")
def fig2a(fig2a_runs):
    rows = cli.read_csv(fig2a_runs[0][0])

    def curve(tag, conditioning):
        v = VARIANTS[tag]
        sel = [r for r in rows if r["wavefront"] == v.wavefront.value
               and r["band"] == v.band.value and r["conditioning"] == conditioning.value]
        return (np.array([r["sweep_value"] for r in sel]), np.array([r["peb_m"] for r in sel]))

    return curve


def _spread(values):
    return (values.max() - values.min()) / values.min()


def test_c5_grid(fig2a, fig2a_runs):
    b, _ = fig2a("nf-wb", FULL)
    ok = len(b) >= 10 and b.min() == 1e9 and b.max() == 10e9
    record("5 bandwidth grid, 10 cm", ok, f"{len(b)} points in [1, 10] GHz, "
           f"sweep {fig2a_runs[1][0]:.0f} s (<= 30 min)")
    assert ok and fig2a_runs[1][0] < 1800


def test_c5i_ff_narrowband_invariant_known_orientation(fig2a):
    spread = _spread(fig2a("ff-nb", KNOWN_O)[1])
    ok = spread < 1e-3
    record("5(i) FF-NB PEB spread, known orient.", ok, f"{100 * spread:.4f} % (< 0.1 %)")
    assert ok


def test_c5i_ff_narrowband_invariant_full_pose(fig2a):
    # the full-pose bound drifts because one near-rotational eigendirection
    # carries information proportional to B^2; the analysis is in the ledger
    spread = _spread(fig2a("ff-nb", FULL)[1])
    ok = spread < 1e-3
    record("5(i) FF-NB PEB spread, full pose", ok, f"{100 * spread:.4f} % (< 0.1 %)")
    assert ok


def test_c5ii_wideband_monotone(fig2a):
    diffs = {tag: np.diff(fig2a(tag, FULL)[1]) for tag in ("nf-wb", "ff-wb")}
    ok = all(np.all(d >= 0) for d in diffs.values())
    record("5(ii) WB full-pose PEB monotone", ok,
           ", ".join(f"{t} min step {d.min():.2e}" for t, d in diffs.items()))
    assert ok


def test_c5iii_nf_below_ff(fig2a):
    gaps = {band: fig2a(f"ff-{band}", KNOWN_O)[1] - fig2a(f"nf-{band}", KNOWN_O)[1]
            for band in ("wb", "nb")}
    ok = all(np.all(g >= 0) for g in gaps.values())
    record("5(iii) NF <= FF, known orient.", ok,
           ", ".join(f"{b} min gap {g.min():.2e} m" for b, g in gaps.items()))
    assert ok


def _crossings(wide, narrow):
    sign = np.sign(wide - narrow)
    return int(np.count_nonzero(np.diff(sign) != 0)), sign[0] < 0, sign[-1] > 0


def test_c5iv_single_crossing(fig2a):
    detail, ok = [], True
    for wave in ("nf", "ff"):
        count, below, above = _crossings(fig2a(f"{wave}-wb", KNOWN_O)[1],
                                         fig2a(f"{wave}-nb", KNOWN_O)[1])
        ok &= count == 1 and below and above
        detail.append(f"{wave}: {count} crossing(s), WB<NB at 1 GHz {below}, WB>NB at 10 GHz {above}")
    record("5(iv) WB/NB single crossing", ok, "; ".join(detail))
    assert ok


def _known_orientation_peb(scenario, tag):
    return peb(assemble_fim(scenario, VARIANTS[tag]), known_orientation=True)


def test_c6_gap_grows_with_ris(certified):
    gaps = {}
    for name in ("paper_fig2a", "paper_fig2b"):
        sc = load_scenario(name).with_bandwidth(1e9)
        gaps[name] = _known_orientation_peb(sc, "ff-wb") - _known_orientation_peb(sc, "nf-wb")
    ok = gaps["paper_fig2b"] > gaps["paper_fig2a"]
    record("6 NF/FF gap 20 cm > 10 cm", ok,
           f"gap 10 cm {gaps['paper_fig2a']:.3e} m, 20 cm {gaps['paper_fig2b']:.3e} m")
    assert ok


@pytest.fixture(scope="module")
def fig3(certified):
    sc = load_scenario("paper_fig3")
    return sc, cli.sweep_ris_size(sc, sc.sides, sc.bandwidths, [VARIANTS["nf-wb"]],
                                  [FULL, KNOWN_P])


def _oeb_y(result, conditioning, bw, side):
    return result.select(conditioning=conditioning, bandwidth=bw, side=side)[0].oeb_y_rad


def test_c7i_four_gigahertz_best_at_10cm(fig3):
    sc, res = fig3
    v = {b: _oeb_y(res, KNOWN_P, b, 0.10) for b in sc.bandwidths}
    ok = v[4e9] < v[1e9] and v[4e9] < v[8e9]
    record("7(i) 10 cm: B = 4 GHz best", ok,
           ", ".join(f"{b / 1e9:g} GHz {x:.3e}" for b, x in v.items()))
    assert ok


def test_c7ii_large_ris_worsens_with_bandwidth(fig3):
    sc, res = fig3
    ok, detail = True, []
    for s in (s for s in sc.sides if s >= 0.25 - 1e-9):
        v = np.array([_oeb_y(res, KNOWN_P, b, s) for b in sc.bandwidths])
        ok &= bool(np.all(np.diff(v) > 0))
        detail.append(f"{100 * s:.0f} cm " + "<".join(f"{x:.2e}" for x in v))
    record("7(ii) side >= 25 cm monotone in B", ok, "; ".join(detail))
    assert ok


def test_c7iii_full_pose_worsens_except_smallest(fig3):
    sc, res = fig3
    bad = []
    for s in sc.sides[1:]:
        v = np.array([_oeb_y(res, FULL, b, s) for b in sc.bandwidths])
        if not np.all(np.diff(v) > 0):
            bad.append(f"{100 * s:.0f} cm")
    ok = not bad
    record("7(iii) full-pose OEB_y worsens with B", ok,
           f"{len(sc.sides) - 1} sides above the smallest checked"
           + (f"; violations at {', '.join(bad)}" if bad else ""))
    assert ok


def test_c8_narrowband_limit(paper, certified):
    sc = paper.with_bandwidth(10e6)
    errs = {}
    for wave in ("nf", "ff"):
        wb = assemble_fim(sc, VARIANTS[f"{wave}-wb"])
        nb = assemble_fim(sc, VARIANTS[f"{wave}-nb"])
        errs[wave] = oracle.relative_frobenius(wb, nb)
    ok = all(e < 1e-3 for e in errs.values())
    record("8 10 MHz WB vs NB", ok,
           ", ".join(f"{w} {e:.2e}" for w, e in errs.items()) + " (< 1e-3)")
    assert ok


def test_c9_determinism(fig2a_runs):
    (a, b), _ = fig2a_runs
    same = a.read_bytes() == b.read_bytes()
    record("9 byte-identical CLI sweeps", same,
           f"{len(a.read_text().splitlines())} lines, --workers 4")
    assert same
