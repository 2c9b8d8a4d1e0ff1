"""Command-line entry point: ``rcsslab analyze | kalman-sim | kalman-run | wmv | generate``.

Exit codes: 0 ok, 1 usage error, 2 parse error, 3 I/O error, 4 internal error.
Data goes to stdout or ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from ._io import open_text, read_text, write_text
from .analytics import build_report, render_report
from .events import detect_events
from .kalman import (
    FilterConfig,
    NoObservations,
    filter_samples,
    read_series_csv,
    rmse,
    run_filter,
    simulate,
    steady_state_gain,
    write_series_csv,
)
from .model import LogSyntaxError, PlayerId, Region
from .rcg import BadHeader, dumps_rcg, parse_rcg, parse_rcg_text
from .rcl import MissingTeamInfo, UnknownTeam, parse_rcl
from .synth import UnrealizableScript, dump_script, generate_match, load_script, random_script
from .wmv import (
    FillPolicy,
    HorizonUncovered,
    MissingOwnerHeader,
    TruthRequired,
    diff_vs_truth,
    emit_rcg,
    fill_missing,
    mean_position_error,
    output_name,
    parse_wm_dump,
    write_diff_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3, 4

log = logging.getLogger("rcsslab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this table reserves 2 for parse errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _err(msg: str) -> None:
    print(f"rcsslab: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ analyze

def _analyze_one(rcg_path: str, rcl_path: str | None, regions: list, player: PlayerId | None,
                 fmt: str, strict: bool) -> tuple[str, list[str]]:
    """Returns (document, warnings). Runs in worker processes when --jobs > 1."""
    warnings = []
    with open_text(rcg_path) as f:
        match = parse_rcg(f, strict=strict)
    if match.skipped:
        warnings.append(f"{rcg_path}: skipped {match.skipped} malformed rcg line(s)")
    warnings.extend(f"{rcg_path}: {w}" for w in match.warnings)
    cmds = None
    rcl_skipped = None
    if rcl_path is not None:
        with open_text(rcl_path) as f:
            cmds = parse_rcl(f, strict=strict)
        rcl_skipped = cmds.skipped_lines
        if cmds.skipped_lines:
            warnings.append(f"{rcl_path}: skipped {cmds.skipped_lines} unrecognized rcl line(s)")
    events = detect_events(match, cmds)
    report = build_report(match, events, regions, player, source=Path(rcg_path).name, rcl_skipped=rcl_skipped)
    return render_report(report, fmt), warnings


def _region(vals: Sequence[float]) -> Region:
    if not all(math.isfinite(v) for v in vals):
        raise UsageError("--region needs four finite numbers")
    return Region.from_corners(*vals)


def cmd_analyze(a) -> int:
    rcls = a.rcl or []
    if rcls and len(rcls) != len(a.rcg):
        raise UsageError("give --rcl once per rcg file, in the same order")
    try:
        player = PlayerId.parse(a.player) if a.player else None
    except ValueError as exc:
        raise UsageError(f"--player: {exc}") from None
    regions = [_region(r) for r in (a.region or [])]
    jobs = [(p, rcls[i] if rcls else None) for i, p in enumerate(a.rcg)]
    multi = len(jobs) > 1
    if multi and a.out and not Path(a.out).is_dir():
        raise UsageError("with several rcg files, --out must be an existing directory")
    args = [(r, c, regions, player, a.format, a.strict) for r, c in jobs]
    if a.jobs > 1 and multi:
        with ProcessPoolExecutor(max_workers=a.jobs) as ex:
            results = list(ex.map(_analyze_star, args))
    else:
        results = [_analyze_one(*x) for x in args]
    for (rcg_path, _), (doc, warnings) in zip(jobs, results):
        for w in warnings:
            _err(f"warning: {w}")
        if a.out:
            target = Path(a.out)
            if multi:
                stem = Path(rcg_path).name.split(".")[0]
                target = target / f"{stem}.{'json' if a.format == 'json' else 'txt'}"
            write_text(target, doc)
        elif multi and a.format == "json":
            sys.stdout.write(json.dumps(json.loads(doc), separators=(",", ":")) + "\n")
        else:
            sys.stdout.write(doc)
    return EXIT_OK


def _analyze_star(args):
    return _analyze_one(*args)


# ------------------------------------------------------------------ kalman

def _filter_config(a) -> FilterConfig:
    try:
        return FilterConfig(sigma_a=a.sigma_a, sigma_z=a.noise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_kalman_sim(a) -> int:
    if a.cycles < 1:
        raise UsageError("--cycles must be at least 1")
    if not 0.0 <= a.dropout < 1.0:
        raise UsageError("--dropout must lie in [0, 1)")
    if a.segment_len < 1 or a.accel_mag < 0:
        raise UsageError("--segment-len must be >= 1 and --accel-mag >= 0")
    c = _filter_config(a)
    samples = simulate(c, cycles=a.cycles, seed=a.seed, segment_len=a.segment_len,
                       accel_mag=a.accel_mag, dropout=a.dropout)
    try:
        filled, gamma = filter_samples(samples, c)
    except NoObservations:
        raise UsageError("every observation was dropped; lower --dropout") from None
    if a.out:
        with open_text(a.out, "w") as f:
            write_series_csv(filled, gamma, f)
    obs_pairs = [(s.observed, s.truth) for s in filled if s.observed is not None]
    r_obs = rmse([o for o, _ in obs_pairs], [t for _, t in obs_pairs])
    r_est = rmse([s.estimated for s in filled], [s.truth for s in filled])
    print(f"cycles            {a.cycles}")
    print(f"observations      {len(obs_pairs)}")
    print(f"rmse_observed     {r_obs:.6f}")
    print(f"rmse_estimated    {r_est:.6f}")
    print(f"gamma_final       {gamma[-1]:.10f}")
    print(f"gamma_steady      {steady_state_gain(c):.10f}")
    return EXIT_OK


def cmd_kalman_run(a) -> int:
    c = _filter_config(a)
    with open_text(a.input) as f:
        try:
            samples, _ = read_series_csv(f)
        except (ValueError, KeyError) as exc:
            raise _ParseFailure(f"{a.input}: {exc}") from None
    if not samples:
        raise _ParseFailure(f"{a.input}: no rows")
    try:
        filled, gamma = filter_samples(samples, c)
    except NoObservations:
        raise _ParseFailure(f"{a.input}: series has no observations") from None
    out = open_text(a.out, "w") if a.out else sys.stdout
    try:
        write_series_csv(filled, gamma, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ------------------------------------------------------------------ wmv

class _ParseFailure(Exception):
    pass


_TRUTH = None  # per-process truth record for convert workers


def _load_truth(path: str | None, strict: bool) -> None:
    global _TRUTH
    _TRUTH = None
    if path:
        with open_text(path) as f:
            _TRUTH = parse_rcg(f, strict=strict)


def _convert_one(dump: str, fill: str, out_dir: str, strict: bool) -> str:
    with open_text(dump) as f:
        wm = parse_wm_dump(f, strict=strict)
    dense = fill_missing(wm, _TRUTH, FillPolicy(fill))
    target = Path(out_dir) / output_name(wm.owner)
    write_text(target, dumps_rcg(emit_rcg(dense, _TRUTH), 5))
    return str(target)


def _convert_star(args):
    return _convert_one(*args)


def cmd_wmv_convert(a) -> int:
    if a.fill == "real" and not a.truth:
        raise UsageError("--fill real needs --truth")
    out = Path(a.out)
    if out.exists() and not out.is_dir():
        raise UsageError("--out must be a directory")
    out.mkdir(parents=True, exist_ok=True)
    owners = {}
    for d in a.dumps:
        with open_text(d) as f:
            first = next((ln for ln in f if ln.strip()), "")
        owner = parse_wm_dump([first]).owner
        if owner in owners:
            raise UsageError(f"{d} and {owners[owner]} both belong to {owner.label}")
        owners[owner] = d
    args = [(d, a.fill, str(out), a.strict) for d in a.dumps]
    if a.jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=a.jobs, initializer=_load_truth,
                                 initargs=(a.truth, a.strict)) as ex:
            written = list(ex.map(_convert_star, args))
    else:
        _load_truth(a.truth, a.strict)
        written = [_convert_one(*x) for x in args]
    for w in written:
        print(w)
    return EXIT_OK


def cmd_wmv_diff(a) -> int:
    with open_text(a.truth) as f:
        truth = parse_rcg(f, strict=a.strict)
    with open_text(a.dump) as f:
        wm = parse_wm_dump(f, strict=a.strict)
    rows = diff_vs_truth(wm, truth)
    if a.out:
        with open_text(a.out, "w") as f:
            write_diff_csv(rows, f)
        print(f"rows {len(rows)} mean_err_pos {mean_position_error(rows):.6f}")
    else:
        write_diff_csv(rows, sys.stdout)
    return EXIT_OK


# ------------------------------------------------------------------ generate

def cmd_generate(a) -> int:
    if (a.script is None) == (not a.random):
        raise UsageError("give either a script path or --random")
    if a.cycles is not None and a.cycles < 1:
        raise UsageError("--cycles must be at least 1")
    if a.random:
        cycles = a.cycles or 6000
        script = random_script(a.seed, cycles)
    else:
        try:
            script, script_cycles = load_script(read_text(a.script))
        except (ValueError, KeyError, TypeError) as exc:
            raise _ParseFailure(f"{a.script}: bad script: {exc}") from None
        cycles = a.cycles or script_cycles or 6000
    try:
        g = generate_match(script, seed=a.seed, cycles=cycles, with_rcl=not a.no_rcl)
    except UnrealizableScript as exc:
        _err(f"unrealizable script at event index {exc.index}: {exc.reason}")
        return EXIT_USAGE
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / f"{a.name}.rcg", out / f"{a.name}.labels.json"]
    write_text(written[0], g.rcg)
    write_text(written[1], g.labels_json())
    if g.rcl is not None:
        written.insert(1, out / f"{a.name}.rcl")
        write_text(written[1], g.rcl)
    if a.random and a.save_script:
        write_text(out / f"{a.name}.script.json", dump_script(script, cycles))
    for w in written:
        print(w)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rcsslab", description="RoboCup 2D log toolkit.")
    p.add_argument("--version", action="version", version=f"rcsslab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging and tracebacks")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    an = sub.add_parser("analyze", help="events, possession and player statistics for rcg logs")
    an.add_argument("rcg", nargs="+", help="rcg file(s), optionally .gz")
    an.add_argument("--rcl", action="append", help="matching rcl file (repeat once per rcg)")
    an.add_argument("--region", nargs=4, type=float, action="append", metavar=("X1", "Y1", "X2", "Y2"),
                    help="extra region for possession and event counts (repeatable)")
    an.add_argument("--player", help="restrict the player section to one player, e.g. l7")
    an.add_argument("--format", choices=("text", "json"), default="text")
    an.add_argument("--strict", action="store_true", help="fail on the first malformed line")
    an.add_argument("--out", help="output file (directory for several inputs)")
    an.add_argument("--jobs", type=int, default=1, help="worker processes for several inputs (default 1)")
    an.set_defaults(func=cmd_analyze)

    for name, func, helptext in (("kalman-sim", cmd_kalman_sim, "simulate a noisy track and filter it"),
                                 ("kalman-run", cmd_kalman_run, "filter an observation series CSV")):
        k = sub.add_parser(name, help=helptext)
        k.add_argument("--noise", type=float, default=FilterConfig.sigma_z,
                       help=f"measurement std sigma_z in m (default {FilterConfig.sigma_z})")
        k.add_argument("--sigma-a", type=float, default=FilterConfig.sigma_a,
                       help=f"process acceleration std (default {FilterConfig.sigma_a})")
        k.add_argument("--out", help="CSV output path")
        k.set_defaults(func=func)
        if name == "kalman-sim":
            k.add_argument("--cycles", type=int, default=1000)
            k.add_argument("--dropout", type=float, default=0.0, help="probability of a missing observation")
            k.add_argument("--seed", type=int, default=0)
            k.add_argument("--segment-len", type=int, default=50, help="cycles per constant-acceleration segment")
            k.add_argument("--accel-mag", type=float, default=0.01, help="max |acceleration| per axis")
        else:
            k.add_argument("input", help="CSV with time, obs_x, obs_y columns (truth columns optional)")

    w = sub.add_parser("wmv", help="world-model dumps to rcg, or belief error tables")
    wsub = w.add_subparsers(dest="wmv_command", parser_class=_Parser, metavar="ACTION")
    wsub.required = True
    wc = wsub.add_parser("convert", help="one rcg per dump, named wm_<side><unum>.rcg")
    wc.add_argument("dumps", nargs="+")
    wc.add_argument("--truth", help="server rcg for meta lines and fill=real")
    wc.add_argument("--fill", choices=[f.value for f in FillPolicy], default="real")
    wc.add_argument("--out", required=True, help="output directory")
    wc.add_argument("--jobs", type=int, default=1)
    wc.add_argument("--strict", action="store_true")
    wc.set_defaults(func=cmd_wmv_convert)
    wd = wsub.add_parser("diff", help="belief vs truth error CSV")
    wd.add_argument("dump")
    wd.add_argument("--truth", required=True)
    wd.add_argument("--out", help="CSV path (stdout if absent)")
    wd.add_argument("--strict", action="store_true")
    wd.set_defaults(func=cmd_wmv_diff)

    g = sub.add_parser("generate", help="labeled synthetic match (rcg, rcl, labels JSON)")
    g.add_argument("script", nargs="?", help="script JSON ({events: [...], cycles: N})")
    g.add_argument("--random", action="store_true", help="sample a random script instead")
    g.add_argument("--cycles", type=int, help="match length (default: script's, else 6000)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--name", default="synthetic", help="file stem (default 'synthetic')")
    g.add_argument("--no-rcl", action="store_true", help="omit the rcl command log")
    g.add_argument("--save-script", action="store_true", help="with --random, also write the script JSON")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.ERROR,
                        format="rcsslab: %(levelname)s: %(message)s")
    if getattr(a, "jobs", 1) < 1:
        _err("--jobs must be at least 1")
        return EXIT_USAGE
    try:
        return a.func(a)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (LogSyntaxError, BadHeader, MissingOwnerHeader, UnknownTeam, MissingTeamInfo,
            _ParseFailure, UnicodeDecodeError) as exc:
        _err(f"parse error: {exc}")
        return EXIT_PARSE
    except (TruthRequired, HorizonUncovered) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    except Exception as exc:  # invariant violation or bug
        _err(f"internal error: {type(exc).__name__}: {exc}")
        if a.verbose:
            traceback.print_exc()
        return EXIT_INTERNAL


def _entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    _entry()
