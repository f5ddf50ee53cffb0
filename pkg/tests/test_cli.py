import io
import math

import numpy as np
import pytest

from rispose import cli
from rispose.channel import ModelVariant
from rispose.cli import (
    CSV_HEADER,
    EXIT_INVALID,
    EXIT_NUMERICAL,
    EXIT_OK,
    SweepResult,
    csv_text,
    emit_csv,
    emit_plot_script,
    main,
    read_csv,
    run_single,
    sweep_bandwidth,
    sweep_ris_size,
)
from rispose.fim import Fim
from rispose.scenario import Conditioning, ScenarioError

NF_WB = ModelVariant.from_tag("nf-wb")
FF_NB = ModelVariant.from_tag("ff-nb")


def identity_hook(k=4.0):
    return lambda scenario, variant: Fim(k * np.eye(6))


def test_run_single_with_fim_hook(small):
    res = run_single(small, [NF_WB], list(Conditioning), fim=identity_hook())
    assert len(res.rows) == 3
    full, known_o, known_p = res.rows
    assert full.peb_m == pytest.approx(0.5) and full.oeb_y_rad == pytest.approx(0.5)
    assert known_o.peb_m == pytest.approx(0.5) and math.isnan(known_o.oeb_x_rad)
    assert known_p.oeb_z_rad == pytest.approx(0.5) and math.isnan(known_p.peb_m)


def test_run_single_paper_rows(paper):
    res = run_single(paper, [NF_WB, FF_NB], [Conditioning.FULL, Conditioning.KNOWN_ORIENTATION])
    for v in (NF_WB, FF_NB):
        full = res.select(v, Conditioning.FULL)[0]
        known = res.select(v, Conditioning.KNOWN_ORIENTATION)[0]
        assert np.isfinite(full.peb_m) and np.isfinite(known.peb_m)
        assert known.peb_m <= full.peb_m


def test_run_single_strict_raises_on_singular(small):
    def hook(scenario, variant):
        m = np.eye(6)
        m[0, 0] = 0.0
        return Fim(m)

    with pytest.raises(Exception, match="x"):
        run_single(small, [NF_WB], fim=hook)
    res = run_single(small, [NF_WB], fim=hook, strict=False)
    assert math.isnan(res.rows[0].peb_m) and res.rows[0].error


def test_sweep_bandwidth_rows(small):
    bws = np.arange(1, 11) * 1e8
    res = sweep_bandwidth(small, bws, [NF_WB], fim=identity_hook())
    assert len(res.select(NF_WB, Conditioning.FULL)) == 10
    assert len(res.rows) == 20
    np.testing.assert_array_equal(res.column("sweep_value", conditioning="full"), bws)
    with pytest.raises(ScenarioError):
        sweep_bandwidth(small, [0.0], [NF_WB], fim=identity_hook())


def test_sweep_ris_size_order(small):
    res = sweep_ris_size(small, [0.01, 0.02], [1e9, 2e9], fim=identity_hook())
    keys = [(r.bandwidth, r.side, r.conditioning.value) for r in res.rows]
    assert keys == [(b, s, c) for b in (1e9, 2e9) for s in (0.01, 0.02)
                    for c in ("full", "known-position")]


def test_csv_shapes_and_round_trip(tmp_path, small):
    assert csv_text(SweepResult("bandwidth")) == ",".join(CSV_HEADER) + "\n"
    res = sweep_bandwidth(small, [1e9, 2e9, 3e9], [NF_WB], [Conditioning.FULL],
                          fim=lambda s, v: Fim(np.diag([1, 2, 3, 4, 5, 6.0]) * s.signal.bandwidth))
    text = csv_text(res)
    assert len(text.splitlines()) == 4
    path = tmp_path / "out.csv"
    emit_csv(res, path)
    back = read_csv(path)
    for rec, row in zip(back, res.rows):
        assert rec["wavefront"] == "near_field" or rec["wavefront"] == row.variant.wavefront.value
        for key in ("peb_m", "oeb_x_rad", "oeb_y_rad", "oeb_z_rad", "fim_cond"):
            assert rec[key] == pytest.approx(getattr(row, key), rel=1e-12)


def test_nan_written_as_empty(small):
    res = run_single(small, [NF_WB], [Conditioning.KNOWN_POSITION], fim=identity_hook())
    line = csv_text(res).splitlines()[1].split(",")
    assert line[4] == "" and line[6] != ""


def test_row_replay_matches_single(small):
    hook = lambda s, v: Fim(np.diag([1, 2, 3, 4, 5, 6.0]) * s.signal.bandwidth)
    res = sweep_bandwidth(small, [2e9, 3e9], [NF_WB], [Conditioning.FULL], fim=hook)
    again = run_single(small.with_bandwidth(3e9), [NF_WB], [Conditioning.FULL], fim=hook)
    assert res.rows[1].csv_fields() == again.rows[0].csv_fields()


def test_plot_script(tmp_path, small):
    res = sweep_bandwidth(small, [1e9, 2e9], [NF_WB], fim=identity_hook())
    script = tmp_path / "plot.gp"
    emit_plot_script(res, script, str(tmp_path / "out.csv"))
    text = script.read_text()
    assert "out.csv" in text and "plot" in text


def test_main_single_bundled_exit_codes(tmp_path):
    out = io.StringIO()
    code = main(["single", "--variants", "nf-wb", "--conditioning", "known-orientation"],
                out_stream=out)
    assert code == EXIT_OK
    lines = out.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 2
    # far-field known-position orientation bounds are unidentifiable
    path = tmp_path / "ff.csv"
    code = main(["single", "--variants", "ff-nb", "--conditioning", "known-position",
                 "--out", str(path)])
    assert code == EXIT_NUMERICAL
    assert len(path.read_text().splitlines()) == 2


def test_main_invalid_inputs(tmp_path):
    assert main(["single", "--scenario", str(tmp_path / "missing.toml")]) == EXIT_INVALID
    bad = tmp_path / "odd.toml"
    bad.write_text('[signal]\nf0 = "78.5 GHz"\nbandwidth = "1G"\n'
                   '[terminal]\ntx_positions = [[0.0, 0.0, 0.0]]\n'
                   '[pose]\nposition = [1.0, 0.0, -1.0]\n'
                   '[lattice]\nn_count = 3\n')
    assert main(["single", "--scenario", str(bad)]) == EXIT_INVALID
    assert main(["single", "--variants", "xx-yy"]) == EXIT_INVALID
    assert main(["single", "--workers", "0"]) == EXIT_INVALID


def test_main_validate(capsys):
    out = io.StringIO()
    code = main(["validate", "--variants", "nf-nb"], out_stream=out)
    text = out.getvalue()
    assert code == EXIT_OK
    assert text.count("[oracle]") >= 2 and "FAIL" not in text


def test_ris_size_split_outputs(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "_default_fim", lambda s, v: Fim(np.eye(6) * s.lattice.n_count))
    out = tmp_path / "fig3.csv"
    plot = tmp_path / "fig3.gp"
    assert main(["sweep-ris-size", "--out", str(out), "--plot", str(plot)]) == EXIT_OK
    parts = sorted(p.name for p in tmp_path.glob("fig3_B*.csv"))
    assert parts == ["fig3_B1GHz.csv", "fig3_B4GHz.csv", "fig3_B8GHz.csv"]
    assert "fig3_B4GHz.csv" in plot.read_text()
