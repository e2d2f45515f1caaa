"""Command-line experiment driver.

Usage::

    ngamd <subcommand> --config PATH [--set key=value]... [--seed S] [--out DIR]
    ngamd reproduce fig1|fig2|fig3|fig4 [--set key=value]... [--out DIR]

The output directory resolves as ``--out`` > ``$NGAMD_OUT_DIR`` > ``output.directory``.
Failures exit nonzero with a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Dict, List, Optional

from . import __version__
from .config import ExperimentConfig, apply_overrides, preset, read_raw
from .detectors import ASD, GLRT1S, NGAMD
from .errors import ConfigError
from .io import emit_curve, jsonable, write_table
from .montecarlo import cfar_study, simulate_statistics, sweep_snr, theory_curve, wilson_interval
from .specfun import RngStream, TextureParams
from .theory import DetectorDims, invert_threshold, pfa

OUT_ENV = "NGAMD_OUT_DIR"
EXT = {"csv": "csv", "jsonl": "jsonl"}
THRESHOLD_TABLE_PFAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
_COLUMN_NAME = {NGAMD: "pd_ngamd", GLRT1S: "pd_1sglrt", ASD: "pd_asd"}


def _header(cfg: ExperimentConfig, command: str, **extra) -> Dict:
    h = {"tool": f"ngamd {__version__}", "command": command, "config_hash": cfg.digest(), "config": cfg.to_dict()}
    h.update(extra)
    return h


def _outputs(cfg: ExperimentConfig, out_dir: str, stem: str) -> List[tuple]:
    return [(os.path.join(out_dir, f"{stem}.{EXT[f]}"), f) for f in cfg.output.formats]


def _write(cfg, out_dir, stem, columns, rows, header) -> List[str]:
    paths = []
    for path, fmt in _outputs(cfg, out_dir, stem):
        write_table(path, columns, rows, {**header, "columns": list(columns)}, fmt)
        paths.append(path)
    return paths


def _dims(cfg: ExperimentConfig) -> DetectorDims:
    s = cfg.scenario
    return DetectorDims(s.N, s.r, s.K)


def cmd_threshold(cfg, out_dir):
    d = _dims(cfg)
    targets = sorted(set(THRESHOLD_TABLE_PFAS) | {cfg.run.pfa_target}, reverse=True)
    rows = []
    for p in targets:
        lam = invert_threshold(p, d)
        rows.append((p, lam, pfa(lam, d)))
    return _write(cfg, out_dir, "threshold", ("pfa_target", "lambda0", "pfa_at_lambda0"), rows,
                  _header(cfg, "threshold"))


def cmd_pfa(cfg, out_dir):
    s = cfg.scenario.build()
    d = _dims(cfg)
    p = cfg.run.pfa_target
    lam = invert_threshold(p, d)
    trials = max(cfg.run.trials, int(round(100 / p)))
    stats = simulate_statistics(s, "H0", (NGAMD,), trials, RngStream(cfg.run.seed), (2,), workers=cfg.run.workers)[NGAMD]
    k = int((stats > lam).sum())
    lo, hi = wilson_interval(k, trials)
    rows = [(NGAMD, p, lam, pfa(lam, d), k / trials, lo, hi, trials)]
    cols = ("detector", "pfa_target", "threshold", "pfa_analytic", "pfa_mc", "ci_low", "ci_high", "trials")
    return _write(cfg, out_dir, "pfa", cols, rows, _header(cfg, "pfa", kappa0=s.kappa0))


def cmd_pd_theory(cfg, out_dir):
    curve = theory_curve(cfg.scenario.build(), cfg.run.snr_db, cfg.run.pfa_target)
    paths = []
    for path, fmt in _outputs(cfg, out_dir, "pd_theory"):
        emit_curve(curve, path, fmt, _header(cfg, "pd-theory"))
        paths.append(path)
    return paths


def _sweep(cfg, template, detectors, mode):
    r = cfg.run
    return sweep_snr(template, detectors, r.snr_db, r.pfa_target, r.trials, RngStream(r.seed),
                     threshold_mode=mode, calibration_trials=r.calibration_trials, workers=r.workers)


def cmd_pd_mc(cfg, out_dir):
    curve = _sweep(cfg, cfg.scenario.build(), (NGAMD,), cfg.run.threshold_mode)[NGAMD]
    paths = []
    for path, fmt in _outputs(cfg, out_dir, "pd_mc"):
        emit_curve(curve, path, fmt, _header(cfg, "pd-mc"))
        paths.append(path)
    return paths


def cmd_compare(cfg, out_dir):
    template = cfg.scenario.build()
    dets = tuple(cfg.run.detectors)
    curves = _sweep(cfg, template, dets, cfg.run.threshold_mode)
    theory = theory_curve(template, cfg.run.snr_db, cfg.run.pfa_target)
    cols = ("snr_db", "pd_theory") + tuple(_COLUMN_NAME[d] for d in dets)
    rows = [
        (snr, theory.points[i].probability) + tuple(curves[d].points[i].probability for d in dets)
        for i, snr in enumerate(cfg.run.snr_db)
    ]
    meta = {d: curves[d].metadata for d in dets}
    return _write(cfg, out_dir, "compare", cols, rows, _header(cfg, "compare", curves=meta))


def cmd_cfar_study(cfg, out_dir):
    template = cfg.scenario.build()
    lam = invert_threshold(cfg.run.pfa_target, _dims(cfg))
    table = cfar_study(
        template, lam, [TextureParams(a, b) for a, b in cfg.run.textures], cfg.run.powers,
        cfg.run.trials, RngStream(cfg.run.seed), cfg.run.pfa_target,
        cfg.run.calibration_trials, workers=cfg.run.workers,
    )
    cols = ("detector", "alpha", "beta", "kappa0", "threshold", "pfa_hat", "ci_low", "ci_high", "trials")
    rows = [(r.detector, r.alpha, r.beta, r.kappa0, r.threshold, r.p_hat, r.ci_low, r.ci_high, r.trials)
            for r in table.rows]
    return _write(cfg, out_dir, "cfar_study", cols, rows,
                  _header(cfg, "cfar-study", lambda0=lam, asd_control_invariant=table.control_invariant()))


def cmd_reproduce(cfg, out_dir, figure):
    paths = []
    base = cfg.scenario.build()
    extra = {"figure": figure}
    if base.target.kind == "fluctuating":
        extra["Rx"] = jsonable(base.target.Rx)
    for i, (a, b) in enumerate(cfg.run.textures):
        template = base.with_texture(TextureParams(a, b))
        stem = f"{figure}{'abcdefghij'[i]}"
        hdr = _header(cfg, f"reproduce {figure}", alpha=a, beta=b, **extra)
        if figure in ("fig1", "fig2"):
            theory = theory_curve(template, cfg.run.snr_db, cfg.run.pfa_target)
            mc = _sweep(cfg, template, (NGAMD,), cfg.run.threshold_mode)[NGAMD]
            cols = ("snr_db", "pd_theory", "pd_mc", "ci_low", "ci_high")
            rows = [(t.snr_db, t.probability, m.probability, m.ci_low, m.ci_high)
                    for t, m in zip(theory.points, mc.points)]
            hdr["mc"] = mc.metadata
            hdr["theory"] = theory.metadata
        else:
            dets = (NGAMD, GLRT1S, ASD)
            curves = _sweep(cfg, template, dets, "mc")
            cols = ("snr_db",) + tuple(_COLUMN_NAME[d] for d in dets)
            rows = [(snr,) + tuple(curves[d].points[j].probability for d in dets)
                    for j, snr in enumerate(cfg.run.snr_db)]
            hdr["curves"] = {d: curves[d].metadata for d in dets}
        paths += _write(cfg, out_dir, stem, cols, rows, hdr)
    return paths


COMMANDS = {
    "threshold": cmd_threshold,
    "pfa": cmd_pfa,
    "pd-theory": cmd_pd_theory,
    "pd-mc": cmd_pd_mc,
    "compare": cmd_compare,
    "cfar-study": cmd_cfar_study,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry by dotted path (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set run.seed=S")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="ngamd", description="nG-AMD detection experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    rp = sub.add_parser("reproduce", parents=[common])
    rp.add_argument("figure", choices=("fig1", "fig2", "fig3", "fig4"))
    return p


def _deep_merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _error(kind: str, exc: BaseException, key=None) -> None:
    rec = {"error": kind, "message": str(exc)}
    if key:
        rec["key"] = key
    print(json.dumps(rec), file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            raw = preset(args.figure)
            if args.config:
                raw = _deep_merge(raw, read_raw(args.config))
        else:
            if not args.config:
                raise ConfigError("--config is required for this subcommand", "config")
            raw = read_raw(args.config)
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"run.seed={args.seed}")
        cfg = ExperimentConfig.from_dict(apply_overrides(raw, overrides))
        out_dir = args.out or os.environ.get(OUT_ENV) or cfg.output.directory
        if args.command == "reproduce":
            paths = cmd_reproduce(cfg, out_dir, args.figure)
        else:
            paths = COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        _error("config", exc, exc.key)
        return 2
    except OSError as exc:
        _error("io", exc)
        return 1
    except (ValueError, ArithmeticError) as exc:
        _error(type(exc).__name__, exc)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
