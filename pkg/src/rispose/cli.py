"""Command-line driver: single runs, bandwidth and RIS-size sweeps, CSV and
gnuplot output, and the oracle validation suite.

Exit codes: 0 success, 2 invalid input or failed validation, 3 numerical
failure (singular FIM or quadrature that does not converge).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import oracle
from .channel import ModelVariant
from .fim import (
    NumericalError,
    SingularFimError,
    assemble_fim,
    oeb,
    peb,
    scaled_condition,
)
from .geometry import GeometryError
from .scenario import Conditioning, Scenario, ScenarioError, load_scenario

log = logging.getLogger("rispose")

CSV_HEADER = ("sweep_value", "wavefront", "band", "conditioning", "peb_m",
              "oeb_x_rad", "oeb_y_rad", "oeb_z_rad", "fim_cond")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

# oracle thresholds used by `validate`
JACOBIAN_TOLERANCE = 1e-6
FIM_TOLERANCE = 1e-4

NAN = float("nan")


@dataclass(frozen=True)
class SweepRow:
    """Bounds for one (sweep point, model variant, conditioning).

    Bounds that do not apply to the conditioning, or could not be computed,
    are NaN; ``error`` holds the reason for the latter.
    """

    sweep_value: float
    variant: ModelVariant
    conditioning: Conditioning
    peb_m: float = NAN
    oeb_x_rad: float = NAN
    oeb_y_rad: float = NAN
    oeb_z_rad: float = NAN
    fim_cond: float = NAN
    bandwidth: float = NAN
    side: float = NAN
    error: str = ""

    def csv_fields(self) -> list[str]:
        return [_fmt(self.sweep_value), self.variant.wavefront.value, self.variant.band.value,
                self.conditioning.value, _fmt(self.peb_m), _fmt(self.oeb_x_rad),
                _fmt(self.oeb_y_rad), _fmt(self.oeb_z_rad), _fmt(self.fim_cond)]

    def primary(self) -> float:
        """The headline bound for this conditioning."""
        if self.conditioning is Conditioning.KNOWN_POSITION:
            return self.oeb_y_rad
        return self.peb_m


@dataclass
class SweepResult:
    kind: str
    rows: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def select(self, variant=None, conditioning=None, bandwidth=None, side=None) -> list:
        if isinstance(variant, str):
            variant = ModelVariant.from_tag(variant)
        if isinstance(conditioning, str):
            conditioning = Conditioning(conditioning)
        out = []
        for row in self.rows:
            if variant is not None and row.variant != variant:
                continue
            if conditioning is not None and row.conditioning is not conditioning:
                continue
            if bandwidth is not None and not math.isclose(row.bandwidth, bandwidth):
                continue
            if side is not None and not math.isclose(row.side, side):
                continue
            out.append(row)
        return out

    def column(self, name: str, **where) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.select(**where)])

    @property
    def errors(self) -> list:
        return [r for r in self.rows if r.error]


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

FimHook = Callable[[Scenario, ModelVariant], object]


def _default_fim(scenario, variant):
    return assemble_fim(scenario, variant)


def _bound(errors: list, func, *args, **kwargs) -> float:
    try:
        return func(*args, **kwargs)
    except SingularFimError as exc:
        errors.append(exc)
        return NAN


def bound_row(matrix, variant, conditioning, sweep_value, bandwidth=NAN, side=NAN):
    """Evaluate the bounds of one conditioning on a 6x6 FIM.

    Returns ``(row, exceptions)``; singular blocks give NaN entries.
    """
    m = np.asarray(getattr(matrix, "matrix", matrix), dtype=float)
    errs: list = []
    values = {}
    if conditioning is Conditioning.FULL:
        values["peb_m"] = _bound(errs, peb, m)
        for axis in "xyz":
            values[f"oeb_{axis}_rad"] = _bound(errs, oeb, m, axis)
        values["fim_cond"] = scaled_condition(m)
    elif conditioning is Conditioning.KNOWN_ORIENTATION:
        values["peb_m"] = _bound(errs, peb, m, known_orientation=True)
        values["fim_cond"] = scaled_condition(m[:3, :3])
    else:
        for axis in "xyz":
            values[f"oeb_{axis}_rad"] = _bound(errs, oeb, m, axis, known_position=True)
        values["fim_cond"] = scaled_condition(m[3:, 3:])
    msg = "; ".join(dict.fromkeys(str(e) for e in errs))
    row = SweepRow(sweep_value, variant, conditioning, bandwidth=bandwidth, side=side,
                   error=msg, **values)
    return row, errs


def _evaluate(scenario, variant, conditionings, sweep_value, side, fim_hook):
    """Rows for one FIM; numerical failures are recorded rather than raised."""
    bw = scenario.signal.bandwidth
    try:
        matrix = fim_hook(scenario, variant)
    except (NumericalError, GeometryError) as exc:
        log.warning("%s at sweep value %g: %s", variant.tag, sweep_value, exc)
        return [(SweepRow(sweep_value, variant, c, bandwidth=bw, side=side, error=str(exc)),
                 [exc]) for c in conditionings]
    return [bound_row(matrix, variant, c, sweep_value, bw, side) for c in conditionings]


def _side_of(scenario) -> float:
    return scenario.lattice.n_count * scenario.lattice.spacing


def run_single(scenario: Scenario, variants: Optional[Sequence[ModelVariant]] = None,
               conditionings: Optional[Sequence[Conditioning]] = None,
               fim: Optional[FimHook] = None, certify: bool = False,
               strict: bool = True) -> SweepResult:
    """Bounds at the scenario's own settings.

    Defaults to the scenario's variant and conditioning. With ``strict``, a
    row whose headline bound (PEB, or OEB_y under known position) cannot be
    computed raises the underlying error (SingularFimError carries the
    null direction); other singular entries are left NaN.
    """
    variants = list(variants or [scenario.variant])
    conditionings = list(conditionings or [scenario.conditioning])
    result = SweepResult("single")
    if certify:
        result.reports = oracle.certify(scenario, variants)
    hook = fim or _default_fim
    for v in variants:
        for row, errs in _evaluate(scenario, v, conditionings, scenario.signal.bandwidth,
                                   _side_of(scenario), hook):
            if strict and errs and math.isnan(row.primary()):
                raise errs[0]
            result.rows.append(row)
    return result


def _run_tasks(tasks, conditionings, fim_hook, workers):
    def work(task):
        scenario, variant, value, side = task
        return _evaluate(scenario, variant, conditionings, value, side, fim_hook)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(work, tasks))
    else:
        done = [work(t) for t in tasks]
    return [row for chunk in done for row, _ in chunk]


def _check_bandwidths(scenario, b_values):
    for b in b_values:
        if not 0 < b < 2 * scenario.signal.f0:
            raise ScenarioError(f"bandwidth {b} Hz outside (0, 2 f0)")


def sweep_bandwidth(scenario: Scenario, b_values, variants=None, conditionings=None,
                    fim: Optional[FimHook] = None, workers: int = 1) -> SweepResult:
    """Rows ordered by bandwidth, then variant, then conditioning."""
    b_values = [float(b) for b in b_values]
    _check_bandwidths(scenario, b_values)
    variants = list(variants or ModelVariant.all())
    conditionings = list(conditionings or (Conditioning.FULL, Conditioning.KNOWN_ORIENTATION))
    side = _side_of(scenario)
    tasks = [(scenario.with_bandwidth(b), v, b, side) for b in b_values for v in variants]
    rows = _run_tasks(tasks, conditionings, fim or _default_fim, workers)
    return SweepResult("bandwidth", rows)


def sweep_ris_size(scenario: Scenario, side_values, b_values, variants=None,
                   conditionings=None, fim: Optional[FimHook] = None,
                   workers: int = 1) -> SweepResult:
    """Rows ordered by bandwidth, then side, then variant, then conditioning.

    ``sweep_value`` is the requested side in meters; the lattice has
    ``2 floor(side / 2d)`` elements per side.
    """
    b_values = [float(b) for b in b_values]
    _check_bandwidths(scenario, b_values)
    d = scenario.lattice.spacing
    for s in side_values:
        if s < 2 * d:
            raise ScenarioError(f"RIS side {s} m is smaller than two elements ({2 * d} m)")
    variants = list(variants or [scenario.variant])
    conditionings = list(conditionings or (Conditioning.FULL, Conditioning.KNOWN_POSITION))
    tasks = [(scenario.with_bandwidth(b).with_side(s), v, float(s), float(s))
             for b in b_values for s in side_values for v in variants]
    rows = _run_tasks(tasks, conditionings, fim or _default_fim, workers)
    return SweepResult("ris-size", rows)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def csv_text(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in result.rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def emit_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(result))


def read_csv(path) -> list[dict]:
    """Parse an emitted CSV; empty numeric fields come back as NaN."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for key, text in rec.items():
                if key in ("wavefront", "band", "conditioning"):
                    row[key] = text
                else:
                    row[key] = float(text) if text != "" else NAN
            out.append(row)
    return out


_SERIES = {
    "bandwidth": ("peb_m", 5, "Bandwidth B [GHz]", "PEB [m]", 1e-9),
    "single": ("peb_m", 5, "Bandwidth B [GHz]", "PEB [m]", 1e-9),
    "ris-size": ("oeb_y_rad", 8, "RIS side [cm]", "OEB psi_y [rad]", 100.0),
}


def emit_plot_script(result: SweepResult, path, csv_path=None) -> None:
    """Write a gnuplot script plotting every (variant, conditioning) series.

    ``csv_path`` is a single CSV or a mapping ``{bandwidth: csv}`` for
    RIS-size sweeps split by bandwidth; paths are written relative to the
    script's directory.
    """
    path = Path(path)
    if csv_path is None:
        csv_path = path.with_suffix(".csv")
    sources = csv_path if isinstance(csv_path, dict) else {None: csv_path}
    quantity, col, xlabel, ylabel, xscale = _SERIES[result.kind]
    series = list(dict.fromkeys((r.variant, r.conditioning) for r in result.rows))
    lines = [
        "# gnuplot script",
        'set datafile separator ","',
        "set key outside right",
        "set logscale y",
        "set grid",
        f'set xlabel "{xlabel}"',
        f'set ylabel "{ylabel}"',
        "set terminal pngcairo size 900,600",
        f'set output "{path.stem}.png"',
    ]
    plots = []
    for bw, src in sources.items():
        rel = os.path.relpath(Path(src), path.parent if str(path.parent) else ".")
        for variant, cond in series:
            label = f"{variant.tag} {cond.value}"
            if bw is not None:
                label += f" B={bw / 1e9:g} GHz"
            sel = (f'strcol(2) eq "{variant.wavefront.value}" && '
                   f'strcol(3) eq "{variant.band.value}" && '
                   f'strcol(4) eq "{cond.value}"')
            plots.append(f'"{rel}" every ::1 using ($1*{xscale:g}):({sel} ? column({col}) : 1/0) '
                         f'with linespoints title "{label}"')
    if plots:
        lines.append("plot " + ", \\\n     ".join(plots))
    else:
        lines.append(f"# no {quantity} series to plot")
    path.write_text("\n".join(lines) + "\n")


def split_by_bandwidth(result: SweepResult) -> dict:
    groups: dict = {}
    for row in result.rows:
        groups.setdefault(row.bandwidth, SweepResult(result.kind)).rows.append(row)
    return groups


def bandwidth_path(out: Path, bandwidth: float) -> Path:
    return out.with_name(f"{out.stem}_B{bandwidth / 1e9:g}GHz{out.suffix}")


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

_DEFAULT_SCENARIO = {"single": "paper_fig2a", "sweep-bandwidth": "paper_fig2a",
                     "sweep-ris-size": "paper_fig3", "validate": "paper_fig2a"}


def _variants(text: Optional[str]):
    if text is None:
        return None
    if text == "all":
        return ModelVariant.all()
    return [ModelVariant.from_tag(t.strip()) for t in text.split(",")]


def _conditionings(text: Optional[str]):
    if text is None:
        return None
    if text == "all":
        return list(Conditioning)
    return [Conditioning(text)]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file or bundled name "
                        "(paper_fig2a, paper_fig2b, paper_fig3)")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--plot", help="also write a gnuplot script here")
    common.add_argument("--variants", help="all, or comma-separated nf-wb,nf-nb,ff-wb,ff-nb")
    common.add_argument("--conditioning",
                        choices=["full", "known-orientation", "known-position", "all"])
    common.add_argument("--quadrature-nodes", type=int, help="initial Gauss-Legendre nodes")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rispose",
                                     description="Pose error bounds for an RIS-equipped target")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("single", parents=[common], help="bounds at the scenario settings")
    sub.add_parser("sweep-bandwidth", parents=[common], help="bounds versus bandwidth")
    sub.add_parser("sweep-ris-size", parents=[common], help="bounds versus RIS side")
    sub.add_parser("validate", parents=[common], help="run the oracle suite")
    return parser


def _write(result: SweepResult, args, out_stream) -> None:
    if args.command == "sweep-ris-size" and args.out:
        groups = split_by_bandwidth(result)
        out = Path(args.out)
        if len(groups) > 1:
            paths = {}
            for bw, part in groups.items():
                paths[bw] = bandwidth_path(out, bw)
                emit_csv(part, paths[bw])
        else:
            emit_csv(result, out)
            paths = out
        if args.plot:
            emit_plot_script(result, args.plot, paths)
        return
    if args.out:
        emit_csv(result, args.out)
    else:
        out_stream.write(csv_text(result))
    if args.plot:
        emit_plot_script(result, args.plot, args.out or "results.csv")


def _validate(scenario, variants, out_stream) -> int:
    reports = oracle.certify(scenario, variants)
    failed = False
    for rep in reports:
        limit = FIM_TOLERANCE if "FIM" in rep.label else JACOBIAN_TOLERANCE
        ok = rep.converged and rep.max_relative_error < limit
        failed |= not ok
        out_stream.write(rep.format() + f"\n  status             = {'pass' if ok else 'FAIL'}\n")
    return EXIT_INVALID if failed else EXIT_OK


def main(argv=None, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        scenario = load_scenario(args.scenario or _DEFAULT_SCENARIO[args.command])
        if args.quadrature_nodes is not None:
            if args.quadrature_nodes < 2:
                raise ScenarioError("--quadrature-nodes must be at least 2")
            scenario = replace(scenario, quadrature=replace(scenario.quadrature,
                                                            nodes=args.quadrature_nodes))
        if args.workers < 1:
            raise ScenarioError("--workers must be at least 1")
        variants = _variants(args.variants)
        conditionings = _conditionings(args.conditioning)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        return _validate(scenario, variants, out_stream)

    try:
        if args.verbose:
            for rep in oracle.certify(scenario, variants or [scenario.variant]):
                print(rep.format(), file=sys.stderr)
        if args.command == "single":
            result = run_single(scenario, variants, conditionings, strict=False)
        elif args.command == "sweep-bandwidth":
            b_values = scenario.bandwidths or [scenario.signal.bandwidth]
            result = sweep_bandwidth(scenario, b_values, variants, conditionings,
                                     workers=args.workers)
        else:
            b_values = scenario.bandwidths or [scenario.signal.bandwidth]
            sides = scenario.sides or [_side_of(scenario)]
            result = sweep_ris_size(scenario, sides, b_values, variants, conditionings,
                                    workers=args.workers)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for row in result.errors:
        level = logging.WARNING if math.isnan(row.primary()) else logging.INFO
        log.log(level, "row %s %s %s: %s", _fmt(row.sweep_value), row.variant.tag,
                row.conditioning.value, row.error)
    try:
        _write(result, args, out_stream)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "single":
        failed = [r for r in result.rows if r.error and math.isnan(r.primary())]
        for row in failed:
            print(f"numerical failure ({row.variant.tag}, {row.conditioning.value}): "
                  f"{row.error}", file=sys.stderr)
        if failed:
            return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
