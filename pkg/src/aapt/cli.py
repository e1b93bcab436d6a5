"""Command-line entry point (``aapt``)."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import channel as ch
from . import experiments as ex
from . import statesim as ss
from . import tomography as tm
from .errors import AaptError, NumericalError

log = logging.getLogger("aapt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
VALIDATE_TOL = 1e-8


def _metadata():
    return {"version": __version__, "created": _dt.datetime.now(_dt.timezone.utc).isoformat()}


def _json(obj):
    return json.dumps(obj, indent=2) + "\n"


def _write_all(out_dir, files):
    # everything is rendered before the first write, so a failure leaves nothing behind
    out_dir = Path(out_dir)
    for name, text in files.items():
        ex.atomic_write(out_dir / name, text)
        log.info("wrote %s", out_dir / name)


def load_config(args):
    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ex.ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ex.ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        cfg = ex.ExperimentConfig.from_dict(obj)
    else:
        cfg = ex.ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=args.mode)
    return cfg


def _format_matrix(M, digits=6):
    with np.printoptions(precision=digits, suppress=True, linewidth=120):
        return str(np.asarray(M))


def cmd_channel_show(args):
    if args.config:
        cfg = load_config(args)
        chan = cfg.channel.build(cfg.dA)
    else:
        chan = ch.phase_damping(args.lam)
    X = ch.kraus_to_process(chan)
    lines = [f"Kraus operators ({len(chan)}):"]
    for k, A in enumerate(chan.operators, 1):
        lines += [f"A_{k} =", _format_matrix(A)]
    lines += ["Process matrix X =", _format_matrix(X.X)]
    lines += ["Tr_A(X) =", _format_matrix(X.trace_map), f"class: {ch.is_trace_preserving(X).value}"]
    print("\n".join(lines))
    if args.out:
        _write_all(args.out, {
            "kraus.json": _json(ch.channel_to_json(chan)),
            "process.json": _json(ch.channel_to_json(X)),
        })
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args)
    N = args.n if args.n is not None else cfg.n_values[0]
    setup = ex.prepare(cfg)
    res = ex.run_trial(cfg, N, args.trial)
    seed = ss.derive_seed(cfg.base_seed, ex.TRIAL_STREAM, args.trial)
    record = ss.sample_counts(setup.sigma_out, setup.suite, N, seed)
    report = tm.report_to_json(res.Xhat, res.diagnostics, res.mse)
    report["N"] = N
    report["trial"] = args.trial
    print(f"N={N} trial={args.trial} mse={res.mse:.17g}")
    if args.out:
        report["metadata"] = _metadata()
        _write_all(args.out, {
            "report.json": _json(report),
            "record.json": _json(record.to_json()),
            "suite.json": _json(setup.suite.to_json()),
        })
    else:
        print(_json(report), end="")
    return EXIT_OK


def _print_rows(result):
    print(f"# {result.label or 'sweep'}")
    print("N,mean_mse,std_err,bound")
    for r in result.rows:
        print(f"{r.N},{r.mean_mse:.17g},{r.std_err:.17g},{r.bound:.17g}")


def cmd_sweep(args):
    cfg = load_config(args)
    result = ex.mse_sweep(cfg, jobs=args.jobs)
    _print_rows(result)
    if len(result.rows) >= 3:
        fit = ex.fit_loglog_slope(result)
        print(f"# log-log slope {fit.slope:.6f} (r2 {fit.r2:.6f})")
    if args.out:
        files = ex.sweep_file_contents(result)
        doc = json.loads(files["sweep.json"])
        doc["metadata"] = _metadata()
        files["sweep.json"] = _json(doc)
        _write_all(args.out, files)
    return EXIT_OK


def cmd_compare(args):
    cfg = load_config(args)
    cmp = ex.compare_input_states(cfg, jobs=args.jobs)
    _print_rows(cmp.optimal)
    _print_rows(cmp.random)
    if args.out:
        files = {}
        files.update(ex.sweep_file_contents(cmp.optimal, "optimal_"))
        files.update(ex.sweep_file_contents(cmp.random, "random_"))
        lines = ["N,optimal_mean_mse,random_mean_mse"]
        for a, b in zip(cmp.optimal.rows, cmp.random.rows):
            lines.append(f"{a.N},{a.mean_mse:.17g},{b.mean_mse:.17g}")
        files["comparison.csv"] = "\n".join(lines) + "\n"
        files["comparison.json"] = _json({**cmp.to_json(), "metadata": _metadata()})
        _write_all(args.out, files)
    return EXIT_OK


def validate(base_seed=0, n_channels=10):
    """Noiseless end-to-end reconstruction of random channels; returns the worst error."""
    suite = ss.cube_measurements(2)
    bell = ss.maximally_entangled_state(2)
    schmidt = ss.operator_schmidt(bell, 2, 2)
    worst = 0.0
    for k in range(n_channels):
        tp = k % 2 == 0
        seed = ss.derive_seed(base_seed, k)
        chan = ch.random_channel(2, 1 + k % 4, tp, seed)
        X = ch.kraus_to_process(chan)
        record = ss.exact_record(ss.evolve_input(chan, bell, 2, 2), suite)
        Xhat, _ = tm.aapt_reconstruct(record, schmidt, suite, tm.TP if tp else tm.NON_TP)
        err = ch.process_distance(Xhat, X)
        log.info("channel %d (%s, rank %d): error %.3e", k, "TP" if tp else "non-TP", 1 + k % 4, err)
        worst = max(worst, err)
    return worst


def cmd_validate(args):
    worst = validate(args.seed or 0)
    print(f"max residual {worst:.3e}")
    return EXIT_OK if worst < VALIDATE_TOL else EXIT_NUMERICAL


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--mode", choices=["tp", "nontp"], help="override the reconstruction mode")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")

    p = argparse.ArgumentParser(prog="aapt", description=__doc__)
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("channel-show", parents=[common], help="print Kraus and process matrices")
    s.add_argument("--lambda", dest="lam", type=float, default=2 / 3)
    s.set_defaults(func=cmd_channel_show)

    s = sub.add_parser("simulate", parents=[common], help="one sampled reconstruction")
    s.add_argument("--n", type=int, help="copy number (default: first N of the config)")
    s.add_argument("--trial", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="MSE versus N")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare-inputs", parents=[common], help="maximally entangled vs random input")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("validate", parents=[common], help="noiseless self-check on random channels")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(_json(ex.ExperimentConfig().to_dict()), end="")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
