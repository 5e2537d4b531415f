"""Command-line batch runs: ingest, synth, analyze, fit, stats, report.

Each command reads the previous stage's directory under ``--out`` (or the
``inputs`` given on the command line / in the config), writes into its own
subdirectory and lists every file it wrote, with sha256, in
``manifest_<command>.json``. Outputs are byte-identical for identical
config, seed and inputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 fit did not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from datetime import date, time
from pathlib import Path

import numpy as np

from . import io, svg
from .config import RunConfig
from .exceptions import (
    AggImpactError,
    ConvergenceError,
    DataError,
    InsufficientDataError,
    UsageError,
)
from .fit import MasterCurveRegressor, eval_F
from .stats import (
    PANEL_EXPONENTS,
    default_hurst_grid,
    eta,
    exponent_panel,
    hurst,
    sign_autocorrelation,
    tape_series,
)
from .synth import SynthConfig, gen_tape
from .tape import (
    IngestReport,
    build_tapes,
    normalize_daily,
    parse_transactions,
    read_tape_csv,
    write_tape_csv,
)
from .windows import ccdf, change_prob_curve, impact_curve, window_stats_many

log = logging.getLogger("aggimpact")

FIT_KINDS = ("impact", "sign_impact")
HURST_SERIES = {"H_q": "signed_volume", "H_r": "return", "H_eps": "order_sign",
                "H_pm": "return_sign"}


def subseed(root: int, *keys: str) -> int:
    """Deterministic 32-bit seed for a named task under the root seed."""
    words = [int(root) & 0xFFFFFFFF] + [zlib.crc32(k.encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------- tape files


def tape_filename(instrument: str, day: date) -> str:
    return f"{instrument}_{day.isoformat()}.csv"


def _split_tape_name(path: Path) -> tuple[str, date] | None:
    inst, _, day = path.stem.rpartition("_")
    try:
        return inst, date.fromisoformat(day)
    except ValueError:
        return None


def _expand(paths, pattern: str = "*.csv") -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        out.extend(sorted(p.glob(pattern)) if p.is_dir() else [p])
    return out


def load_tapes(cfg: RunConfig, default_dir: Path) -> dict[str, list]:
    """Tapes grouped per instrument, normalised per instrument over the run."""
    files = _expand(cfg.inputs or [default_dir])
    groups: dict[str, list] = defaultdict(list)
    for f in files:
        key = _split_tape_name(f)
        if key is None:
            log.warning("skipping %s: not named <instrument>_<YYYY-MM-DD>.csv", f)
            continue
        inst, day = key
        if cfg.instruments and inst not in cfg.instruments:
            continue
        if not cfg.in_range(day):
            continue
        groups[inst].append(read_tape_csv(f, inst, day))
    if not groups:
        raise DataError(f"no tapes found under {', '.join(str(p) for p in cfg.inputs or [default_dir])}")
    return {inst: normalize_daily(sorted(ts, key=lambda t: t.date), cfg.normalization_period)
            for inst, ts in sorted(groups.items())}


# ---------------------------------------------------------------- ingest


def cmd_ingest(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    if not cfg.inputs:
        raise UsageError("ingest needs raw transaction files (positional or 'inputs')")
    cfg.check_inputs()
    tape_dir = out / "tapes"
    tape_dir.mkdir(parents=True, exist_ok=True)

    by_inst: dict[str, list] = defaultdict(list)
    errors = []
    for f in _expand(cfg.inputs):
        inst = f.stem.split("_")[0]
        if cfg.instruments and inst not in cfg.instruments:
            continue
        try:
            by_inst[inst].extend(parse_transactions(f))
        except (OSError, DataError) as exc:
            errors.append(f"{f}: {exc}")
            log.error("skipping %s: %s", f, exc)

    total = IngestReport()
    per_inst = {}
    written = []
    for inst, records in sorted(by_inst.items()):
        records.sort(key=lambda r: r.ts_ms)  # stable: keeps file order within a timestamp
        tapes, report = build_tapes(records, inst, cfg.calendar, cfg.merge_policy,
                                    cfg.use_vendor_side)
        for tape in tapes:
            if not cfg.in_range(tape.date):
                continue
            path = tape_dir / tape_filename(inst, tape.date)
            write_tape_csv(tape, path)
            written.append(path)
        per_inst[inst] = report.as_dict()
        total.update(report)

    summary = {"total": total.as_dict(), "instruments": per_inst, "file_errors": errors}
    report_path = out / "ingest_report.json"
    io.write_json(summary, report_path)
    io.write_manifest(out, "ingest", written + [report_path])
    if not written:
        raise DataError("no trading days retained")
    return summary


# ---------------------------------------------------------------- synth


def _synth_values(cfg: RunConfig, index: int, n_inst: int) -> dict[str, str]:
    values = {}
    for key, raw in cfg.synth.items():
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) == 1:
            values[key] = parts[0]
        elif len(parts) == n_inst:
            values[key] = parts[index]
        else:
            raise UsageError(f"synth.{key} lists {len(parts)} values for {n_inst} instruments")
    return values


def cmd_synth(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    instruments = cfg.instruments or ["SYN"]
    tape_dir = out / "tapes"
    tape_dir.mkdir(parents=True, exist_ok=True)
    configs = []
    for i, inst in enumerate(instruments):
        values = _synth_values(cfg, i, len(instruments))
        values.update(instrument=inst, seed=str(subseed(cfg.seed, "synth", inst)))
        values.setdefault("session_open", cfg.session_open.isoformat("minutes"))
        values.setdefault("session_close", cfg.session_close.isoformat("minutes"))
        values.setdefault("tz", cfg.tz)
        values.setdefault("trim_minutes", repr(cfg.trim_minutes))
        try:
            configs.append(SynthConfig.from_mapping(values))
        except ValueError as exc:
            raise UsageError(f"synth config for {inst}: {exc}") from None

    written = []
    for sc, tapes in zip(configs, _map(gen_tape, configs, jobs)):
        for tape in tapes:
            path = tape_dir / tape_filename(sc.instrument, tape.date)
            write_tape_csv(tape, path)
            written.append(path)
        cfg_path = tape_dir / f"{sc.instrument}_synth.cfg"
        cfg_path.write_text(sc.to_text(), encoding="utf-8")
        written.append(cfg_path)
    io.write_manifest(out, "synth", written, {"seed": cfg.seed})
    return {"instruments": instruments, "files": len(written)}


# ---------------------------------------------------------------- analyze


def _analyze_instrument(args):
    inst, tapes, cfg = args
    curves = []
    for N in cfg.N_grid:
        stats = window_stats_many(tapes, N, cfg.stride)
        try:
            group = [(kind, impact_curve(stats, imb, cfg.bins, cfg.min_occupancy))
                     for kind, imb in io.IMPACT_KINDS.items()]
            group.append(("change_prob", change_prob_curve(stats, cfg.bins, cfg.min_occupancy)))
        except InsufficientDataError as exc:
            log.warning("%s: skipping N=%d: %s", inst, N, exc)
            continue
        scale = group[0][1].imbalance_std
        if scale > 0:
            pos, neg = ccdf(stats, scale, "volume", cfg.ccdf_points)
            group += [("ccdf_positive", pos), ("ccdf_negative", neg)]
        curves.extend((kind, N, c) for kind, c in group)
    return inst, curves


def cmd_analyze(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    tapes = load_tapes(cfg, out / "tapes")
    curve_dir = out / "curves"
    curve_dir.mkdir(parents=True, exist_ok=True)
    written = []
    summary = {}
    results = _map(_analyze_instrument, [(i, t, cfg) for i, t in tapes.items()], jobs)
    for inst, curves in results:
        for kind, N, c in curves:
            path = curve_dir / io.curve_filename(inst, kind, N)
            io.write_curve_csv(c, path)
            written.append(path)
        if "json" in cfg.emit:
            path = curve_dir / f"{inst}_curves.json"
            io.write_json([{"curve": kind, **io.curve_to_dict(c)} for kind, _, c in curves], path)
            written.append(path)
        if "svg" in cfg.emit:
            for kind, ylabel in (("impact", "mean return"), ("change_prob", "change fraction")):
                series = [(f"N={N}", c.center, c.mean if kind == "impact" else c.prob)
                          for k, N, c in curves if k == kind]
                if series:
                    path = curve_dir / f"{inst}_{kind}.svg"
                    svg.line_chart(series, path, f"{inst} {kind}",
                                   "volume imbalance" if kind == "impact" else "mean sign", ylabel)
                    written.append(path)
        summary[inst] = sorted({N for _, N, _ in curves})
    io.write_manifest(out, "analyze", written)
    return {"N_analyzed": summary}


# ---------------------------------------------------------------- fit


def load_curves(cfg: RunConfig, default_dir: Path, kind: str) -> dict[str, list]:
    files = _expand(cfg.inputs or [default_dir], f"*_{kind}_*.csv")
    groups: dict[str, list] = defaultdict(list)
    for f in files:
        inst, sep, N = f.stem.rpartition(f"_{kind}_")
        if not sep or not N.isdigit():
            continue
        if cfg.instruments and inst not in cfg.instruments:
            continue
        curve = io.read_curve_csv(f)
        # "*_impact_*" also matches sign_impact and trade_impact files
        if getattr(curve, "kind", None) != io.IMPACT_KINDS[kind]:
            continue
        groups[inst].append(curve)
    return {k: sorted(v, key=lambda c: c.N) for k, v in sorted(groups.items())}


def _fit_instrument(args):
    inst, kind, curves, seed = args
    model = MasterCurveRegressor(random_state=seed).fit(curves)
    return inst, kind, curves, model


def cmd_fit(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    tasks = []
    for kind in FIT_KINDS:
        for inst, curves in load_curves(cfg, out / "curves", kind).items():
            tasks.append((inst, kind, curves, subseed(cfg.seed, "fit", inst, kind)))
    if not tasks:
        raise DataError(f"missing input artifact: no *_impact_*.csv curves under "
                        f"{', '.join(str(p) for p in cfg.inputs or [out / 'curves'])}")
    fit_dir = out / "fit"
    fit_dir.mkdir(parents=True, exist_ok=True)
    written, failed, summary = [], [], {}
    for inst, kind, curves, model in _map(_fit_instrument, tasks, jobs):
        res = model.fit_result_
        stem = fit_dir / f"{inst}_{kind}"
        payload = {"instrument": inst, "kind": kind, **res.to_dict(),
                   "collapse_deviation": model.collapse_deviation(curves)}
        io.write_json(payload, f"{stem}_fit.json")
        written.append(Path(f"{stem}_fit.json"))
        rescaled = model.rescale(curves)
        if "csv" in cfg.emit:
            path = Path(f"{stem}_rescaled.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("N,x,y,stderr,F\n")
                for N, (x, y, se) in rescaled.items():
                    F = eval_F(x, res.alpha, res.beta)
                    for row in zip(x, y, se, F):
                        fh.write(f"{N}," + ",".join(io.format_number(v) for v in row) + "\n")
            written.append(path)
            path = Path(f"{stem}_powerlaws.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("N,Q_N,R_N,Q_fit,R_fit\n")
                for N, (q, r) in sorted(res.scales.items()):
                    vals = (q, r, res.q_law(N), res.r_law(N))
                    fh.write(f"{N}," + ",".join(io.format_number(v) for v in vals) + "\n")
            written.append(path)
        if "svg" in cfg.emit:
            series = [(f"N={N}", x, y) for N, (x, y, _) in rescaled.items()]
            if series:
                lo = min(float(np.min(s[1])) for s in series)
                hi = max(float(np.max(s[1])) for s in series)
                grid = np.linspace(lo, hi, 200)
                series.append(("F", grid, eval_F(grid, res.alpha, res.beta)))
            svg.line_chart(series, f"{stem}_collapse.svg", f"{inst} {kind} collapse",
                           "Q / Q_N", "R / R_N")
            Ns = np.array(sorted(res.scales), dtype=np.float64)
            svg.line_chart(
                [("Q_N", Ns, [res.scales[int(n)][0] for n in Ns]), ("Q fit", Ns, res.q_law(Ns)),
                 ("R_N", Ns, [res.scales[int(n)][1] for n in Ns]), ("R fit", Ns, res.r_law(Ns))],
                f"{stem}_scales.svg", f"{inst} {kind} scales", "N", "scale",
                logx=True, logy=True)
            written += [Path(f"{stem}_collapse.svg"), Path(f"{stem}_scales.svg")]
        summary[f"{inst}/{kind}"] = {"xi": res.xi, "psi": res.psi, "alpha": res.alpha,
                                     "beta": res.beta, "converged": res.converged}
        if not res.converged:
            failed.append(f"{inst}/{kind}")
    io.write_manifest(out, "fit", written, {"seed": cfg.seed})
    if failed:
        raise ConvergenceError(f"master fit did not converge for {', '.join(failed)}")
    return summary


# ---------------------------------------------------------------- stats


def _stats_instrument(args):
    inst, tapes, max_lag = args
    result: dict = {"instrument": inst, "days": len(tapes), "trades": sum(len(t) for t in tapes)}
    skipped = {}
    for name, kind in HURST_SERIES.items():
        try:
            series = tape_series(tapes, kind)
            grid = default_hurst_grid(max((len(s) for s in series), default=0))
            result[name] = hurst(series, grid, kind=kind).as_dict()
        except (DataError, ValueError) as exc:
            result[name] = None
            skipped[name] = str(exc)
    try:
        e = eta([t.mid for t in tapes])
        result["eta"] = {"eta": e.eta, "N_c": e.N_c, "N_a": e.N_a}
    except DataError as exc:
        result["eta"] = None
        skipped["eta"] = str(exc)
    signs = np.concatenate([t.sign for t in tapes])
    lag = min(max_lag, len(signs) // 10)
    if lag >= 2:
        acf = sign_autocorrelation(signs, lag)
        result["sign_acf"] = {"gamma": acf.gamma, "amplitude": acf.amplitude,
                              "max_lag": lag, "skipped": acf.skipped,
                              "acf": acf.acf[: min(lag, 100) + 1]}
        result["_acf_full"] = (acf.lags, acf.acf)
    else:
        result["sign_acf"] = None
        skipped["sign_acf"] = "too few trades"
    result["skipped"] = skipped
    return result


def cmd_stats(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    tapes = load_tapes(cfg, out / "tapes")
    stats_dir = out / "stats"
    stats_dir.mkdir(parents=True, exist_ok=True)
    written, summary = [], {}
    results = _map(_stats_instrument, [(i, t, cfg.max_lag) for i, t in tapes.items()], jobs)
    for res in results:
        inst = res["instrument"]
        acf_full = res.pop("_acf_full", None)
        path = stats_dir / f"{inst}_stats.json"
        io.write_json(res, path)
        written.append(path)
        if "svg" in cfg.emit:
            series = [(name, res[name]["N_grid"], res[name]["mean_square"])
                      for name in HURST_SERIES if res.get(name)]
            path = stats_dir / f"{inst}_hurst.svg"
            svg.line_chart(series, path, f"{inst} mean square of N-sums", "N",
                           "mean square", logx=True, logy=True)
            written.append(path)
            if acf_full is not None:
                path = stats_dir / f"{inst}_sign_acf.svg"
                svg.line_chart([("C(k)", acf_full[0][1:], acf_full[1][1:])], path,
                               f"{inst} sign autocorrelation", "lag", "C(k)",
                               logx=True, logy=True)
                written.append(path)
        summary[inst] = {k: (res[k] or {}).get("H") for k in HURST_SERIES}
    io.write_manifest(out, "stats", written)
    return summary


# ---------------------------------------------------------------- report


def cmd_report(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    fit_dir, stats_dir = out / "fit", out / "stats"
    fits = {p.name[: -len("_impact_fit.json")]: p for p in sorted(fit_dir.glob("*_impact_fit.json"))
            if not p.name.endswith("_sign_impact_fit.json")}
    stats = {p.name[: -len("_stats.json")]: p for p in sorted(stats_dir.glob("*_stats.json"))}
    if not fits:
        raise DataError(f"missing input artifact: {fit_dir}/<instrument>_impact_fit.json")
    if not stats:
        raise DataError(f"missing input artifact: {stats_dir}/<instrument>_stats.json")
    instruments = sorted(set(fits) | set(stats))
    if cfg.instruments:
        instruments = [i for i in instruments if i in cfg.instruments]
    for inst in instruments:
        if inst not in fits:
            raise DataError(f"missing input artifact: {fit_dir / (inst + '_impact_fit.json')}")
        if inst not in stats:
            raise DataError(f"missing input artifact: {stats_dir / (inst + '_stats.json')}")

    records, collapse = {}, []
    for inst in instruments:
        f = io.read_json(fits[inst])
        s = io.read_json(stats[inst])
        rec = {"xi": f["xi"], "psi": f["psi"]}
        collapse.append((inst, "impact", f.get("collapse_deviation")))
        sign_path = fit_dir / f"{inst}_sign_impact_fit.json"
        if sign_path.exists():
            g = io.read_json(sign_path)
            rec.update(xi_eps=g["xi"], psi_eps=g["psi"])
            collapse.append((inst, "sign_impact", g.get("collapse_deviation")))
        for name in HURST_SERIES:
            rec[name] = (s.get(name) or {}).get("H")
        records[inst] = rec
    panel = exponent_panel(records, PANEL_EXPONENTS)

    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = report_dir / "panel.json"
    io.write_json({**panel.as_dict(),
                   "collapse_deviation": [{"instrument": i, "kind": k, "value": v}
                                          for i, k, v in collapse]}, path)
    written.append(path)
    if "csv" in cfg.emit:
        path = report_dir / "summary.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("exponent,mean,std,n\n")
            for j, name in enumerate(panel.names):
                n = int(np.isfinite(panel.values[:, j]).sum())
                std = io.format_number(panel.std[j]) if n > 1 else ""
                fh.write(f"{name},{io.format_number(panel.mean[j])},{std},{n}\n")
        written.append(path)
        if panel.corr is not None:
            path = report_dir / "correlation.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("exponent," + ",".join(panel.names) + "\n")
                for i, name in enumerate(panel.names):
                    cells = [io.format_number(panel.corr[i, j]) if panel.mask[i, j] else ""
                             for j in range(len(panel.names))]
                    fh.write(name + "," + ",".join(cells) + "\n")
            written.append(path)
        path = report_dir / "collapse.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("instrument,kind,collapse_deviation\n")
            for inst, kind, v in collapse:
                fh.write(f"{inst},{kind},{io.format_number(v if v is not None else float('nan'))}\n")
        written.append(path)
    if "svg" in cfg.emit:
        idx = np.arange(len(panel.names), dtype=np.float64)
        series = [(inst, idx, panel.values[i]) for i, inst in enumerate(panel.instruments)]
        series.append(("mean", idx, panel.mean))
        path = report_dir / "exponents.svg"
        svg.line_chart(series, path, "exponents: " + " ".join(panel.names), "exponent index",
                       "value")
        written.append(path)
    io.write_manifest(out, "report", written)
    return {"instruments": instruments,
            "mean": dict(zip(panel.names, [float(m) for m in panel.mean]))}


# ---------------------------------------------------------------- entry point


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "fit": cmd_fit,
    "stats": cmd_stats,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    parser = _Parser(prog="aggimpact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__[4:])
        if name in ("ingest", "analyze", "fit", "stats"):
            p.add_argument("inputs", nargs="*", type=Path, help="input files or directories")
        if name == "ingest":
            p.add_argument("--open", type=time.fromisoformat, help="session open, HH:MM")
            p.add_argument("--close", type=time.fromisoformat, help="session close, HH:MM")
            p.add_argument("--trim-minutes", type=float)
            p.add_argument("--merge-policy", choices=("timestamp_sign", "trade_id"))
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "inputs", None):
        cfg.inputs = list(args.inputs)
    for flag, attr in (("open", "session_open"), ("close", "session_close"),
                       ("trim_minutes", "trim_minutes"), ("merge_policy", "merge_policy")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("aggimpact: error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        cfg = _run_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, args.out, args.jobs)
    except UsageError as exc:
        print(f"aggimpact: error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"aggimpact: fit error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"aggimpact: data error: {exc}", file=sys.stderr)
        return 2
    except AggImpactError as exc:
        print(f"aggimpact: error: {exc}", file=sys.stderr)
        return 2
    log.info("%s done: %s", args.command, result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
