"""Command-line entry point: ``qflow run | verify | sweep | report``.

Exit codes
  0  success (run completed and every applicable audit passed)
  1  at least one audit or verification check failed
  2  bad configuration, bad arguments, or missing input directory
  3  step failure during a run; partial outputs are still written
"""
import argparse
import csv
import json
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as qcfg
from . import io as qio
from .body import Backend
from .diagnostics import FAIL, NOT_APPLICABLE, AuditReport, discretization_allowance, run_audits
from .errors import ConfigError, QflowError
from .flow import run
from .verify import SUITES, new_seed, run_suite

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_STEP = 0, 1, 2, 3
MAX_BODY_SNAPSHOTS = 21


def _err(msg):
    print(f"qflow: {msg}", file=sys.stderr)


class _Progress:
    def __init__(self, label, every=5.0, stream=sys.stderr):
        self.label, self.every, self.stream = label, every, stream
        self.t0 = self.last = time.perf_counter()

    def __call__(self, state, rec):
        now = time.perf_counter()
        if now - self.last >= self.every:
            self.last = now
            print(f"  [{self.label}] t={state.t:.4g} steps={state.step_count} dt={state.dt:.2e} "
                  f"hausdorff={rec.hausdorff_ball:.2e} ({now - self.t0:.0f}s)", file=self.stream, flush=True)


def _coarse_N(spec):
    N = spec.N // 2
    backend = Backend(spec.shape["backend"])
    if N < 16 or (backend is Backend.CIRCLE and N % 2):
        return None
    return N


def audit_payload(records, law, meta):
    reports = audit_records(records, law, meta)
    extra = {"audit_parameters": {k: meta[k] for k in ("eps_disc", "roundness_tol", "drift_budget")}}
    return reports, qio.audits_to_json(reports, extra)


def audit_records(records, law, meta):
    if len(records) < 2:
        reports = {"monotone": AuditReport("monotone", NOT_APPLICABLE, note="fewer than 2 records")}
        rest = run_audits(records * 2, law, meta["roundness_tol"], meta["eps_disc"], meta["drift_budget"])
        for name in ("pinching", "envelopes", "ros_sequence"):
            reports[name] = rest[name]
        reports["decay"] = AuditReport("decay", NOT_APPLICABLE, note="fewer than 2 records")
        reports["balance"] = AuditReport("balance", NOT_APPLICABLE, note="fewer than 3 records")
        return reports
    return run_audits(records, law, meta["roundness_tol"], meta["eps_disc"], meta["drift_budget"])


def _thin(states, count=MAX_BODY_SNAPSHOTS):
    idx = np.unique(np.linspace(0, len(states) - 1, min(count, len(states))).astype(int))
    return [states[i] for i in idx]


def _swap_in(tmp, target):
    """Replace ``target`` by the finished directory ``tmp`` with renames only."""
    target = Path(target)
    old = None
    if target.exists():
        old = target.with_name(f".{target.name}.old-{os.getpid()}")
        os.replace(target, old)
    os.replace(tmp, target)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


def execute(spec, out_dir=None, quiet=False):
    """Run one validated RunSpec and write its artifacts; returns (exit code, summary dict)."""
    target = Path(out_dir or spec.directory)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(f".{target.name}.tmp-{os.getpid()}")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    t0 = time.perf_counter()
    try:
        body = spec.make_body()
        traj = run(body, spec.flow, progress=None if quiet else _Progress(f"N={spec.N}"))

        eps_disc, coarse_info = {}, None
        Nc = _coarse_N(spec) if spec.refinement and traj.failure is None else None
        if Nc is not None:
            try:
                coarse = run(spec.make_body(Nc), spec.flow, progress=None if quiet else _Progress(f"N={Nc}"))
            except QflowError as exc:
                # the half-resolution body may not even be representable; audit without an allowance
                coarse_info = {"N": Nc, "error": str(exc)}
            else:
                eps_disc = discretization_allowance(traj.records, coarse.records)
                coarse_info = {"N": Nc, "stop_reason": coarse.stop_reason, "final_t": coarse.states[-1].t,
                               "records": len(coarse.records)}

        meta = {"eps_disc": eps_disc, "roundness_tol": spec.roundness_tol, "drift_budget": spec.drift_budget}
        reports, audits_json = audit_payload(traj.records, spec.law, meta)
        final = traj.states[-1]
        run_info = {
            "config": spec.as_dict(), "source": spec.source, "stop_reason": traj.stop_reason,
            "failure": None if traj.failure is None else str(traj.failure),
            "failure_cause": None if traj.failure is None else type(traj.failure.cause).__name__,
            "steps": final.step_count, "final_t": final.t, "records": len(traj.records),
            "refinement": coarse_info, **meta,
        }
        formats = set(spec.formats)
        if "csv" in formats:
            qio.write_series(tmp / "series.csv", traj.records)
        if "json" in formats:
            (tmp / "audits.json").write_text(audits_json)
        (tmp / "run.json").write_text(json.dumps(qio._jsonable(run_info), indent=2, sort_keys=True) + "\n")
        if "bodies" in formats:
            qio.write_body(tmp / "initial.body", traj.states[0].body)
            qio.write_body(tmp / "final.body", final.body)
            qio.write_snapshots(tmp / "snapshots.txt", _thin(traj.states))
        if "svg" in formats:
            name = "snapshots.svg" if final.body.backend is Backend.CIRCLE else "meridian.svg"
            (tmp / name).write_text(qio.snapshots_svg(_thin(traj.states, 8)))
        _swap_in(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

    verdicts = {name: rep.verdict for name, rep in sorted(reports.items())}
    if traj.failure is not None:
        code = EXIT_STEP
    elif any(v == FAIL for v in verdicts.values()):
        code = EXIT_AUDIT
    else:
        code = EXIT_OK
    rec = traj.records[-1]
    decay = reports["decay"].details.get("rate", {}) if reports["decay"].verdict != NOT_APPLICABLE else {}
    summary = {
        "exit": code, "stop_reason": traj.stop_reason, "t": rec.t, "steps": rec.step,
        "volume_drift": rec.volume_drift, "hausdorff_ball": rec.hausdorff_ball, "R_minus": rec.R_minus,
        "R_plus": rec.R_plus, "l2_deviation": rec.l2_deviation, "iso_ratio": rec.iso_ratio,
        "decay_slope": decay.get("slope"), "decay_r_squared": decay.get("r_squared"),
        **{f"eps_disc_{k}": v for k, v in eps_disc.items()},
        **{f"audit_{k}": v for k, v in verdicts.items()},
        "seconds": round(time.perf_counter() - t0, 2),
    }
    if not quiet:
        _print_summary(target, traj, verdicts, summary)
    return code, summary


def _print_summary(target, traj, verdicts, summary):
    print(f"output: {target}")
    print(f"stop: {traj.stop_reason} at t={summary['t']:.6g} after {summary['steps']} steps "
          f"({summary['seconds']:.1f}s)")
    if traj.failure is not None:
        print(f"step failure: {traj.failure}")
    print(f"final: hausdorff_ball={summary['hausdorff_ball']:.3e} R_minus={summary['R_minus']:.8f} "
          f"R_plus={summary['R_plus']:.8f} volume_drift={summary['volume_drift']:.2e}")
    for name, v in verdicts.items():
        print(f"audit {name}: {v}")


def cmd_run(args):
    try:
        spec = qcfg.build(qcfg.load(args.config))
    except ConfigError as exc:
        _err(f"{args.config}: {exc}")
        return EXIT_CONFIG
    out = Path(args.out) if args.out else None
    try:
        return execute(spec, out, quiet=args.quiet)[0]
    except QflowError as exc:
        _err(f"{args.config}: initial body rejected: {exc}")
        return EXIT_CONFIG


def cmd_verify(args):
    seed = new_seed() if args.seed is None else args.seed
    print(f"seed: {seed}")
    if args.inject_sign_error:
        print("negative control: speed gradient sign flipped")
    ok = run_suite(args.suite, seed, inject_sign_error=args.inject_sign_error)
    return EXIT_OK if ok else EXIT_AUDIT


def _cell_name(params):
    return "_".join(f"{key.split('.')[-1]}={val}" for key, val in params.items()) or "cell"


def _run_cell(job):
    params, raw, directory = job
    try:
        spec = qcfg.build(raw)
    except ConfigError as exc:
        return params, {"exit": EXIT_CONFIG, "error": str(exc)}
    try:
        code, summary = execute(spec, directory, quiet=True)
    except QflowError as exc:
        # only failures before the first step get here (unusable initial body)
        return params, {"exit": EXIT_CONFIG, "error": str(exc)}
    return params, summary


def cmd_sweep(args):
    try:
        raw = qcfg.load(args.config)
        cells = list(raw.cells())
        specs = [qcfg.build(cell) for _, cell in cells]
    except ConfigError as exc:
        _err(f"{args.config}: {exc}")
        return EXIT_CONFIG
    if args.out:
        base = Path(args.out)
    elif raw.get("output", "directory"):
        base = Path(raw.get("output", "directory"))
    else:
        base = qcfg.default_output_root() / Path(args.config).stem
    base.mkdir(parents=True, exist_ok=True)
    jobs = [(params, cell, base / _cell_name(params)) for (params, cell), _ in zip(cells, specs)]
    print(f"sweep: {len(jobs)} cells -> {base} (jobs={args.jobs})")
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    keys = []
    for params, summary in results:
        for key in list(params) + list(summary):
            if key not in keys:
                keys.append(key)
    tmp = base / f".sweep_summary.csv.tmp-{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["cell"] + keys, lineterminator="\n")
        w.writeheader()
        for params, summary in results:
            w.writerow({"cell": _cell_name(params), **params, **summary})
    os.replace(tmp, base / "sweep_summary.csv")
    worst = EXIT_OK
    for params, summary in results:
        print(f"  {_cell_name(params)}: exit {summary['exit']}"
              + (f" ({summary['error']})" if "error" in summary else ""))
        worst = max(worst, summary["exit"])
    return worst


def cmd_report(args):
    d = Path(args.directory)
    if not d.is_dir():
        _err(f"no such results directory: {d}")
        return EXIT_CONFIG
    try:
        info = json.loads((d / "run.json").read_text())
        records = qio.read_series(d / "series.csv")
    except (OSError, ValueError, KeyError) as exc:
        _err(f"{d}: cannot read stored run ({exc})")
        return EXIT_CONFIG
    if not records:
        _err(f"{d}: series.csv has no rows")
        return EXIT_CONFIG
    from .algebra import SpeedLaw
    law = SpeedLaw(**info["config"]["law"])
    meta = {k: info[k] for k in ("eps_disc", "roundness_tol", "drift_budget")}
    reports, audits_json = audit_payload(records, law, meta)
    lines = [f"results: {d}", f"records: {len(records)} (t = {records[0].t:.6g} .. {records[-1].t:.6g})",
             f"stop: {info.get('stop_reason')}"]
    last = records[-1]
    lines.append(f"final: hausdorff_ball={last.hausdorff_ball:.3e} R_minus={last.R_minus:.8f} "
                 f"R_plus={last.R_plus:.8f} volume_drift={last.volume_drift:.2e} l2={last.l2_deviation:.3e}")
    for name, rep in sorted(reports.items()):
        lines.append(f"audit {name}: {rep.verdict}" + (f" ({rep.note})" if rep.note else ""))
    for name, text in (("audits.json", audits_json), ("summary.txt", "\n".join(lines) + "\n")):
        tmp = d / f".{name}.tmp-{os.getpid()}"
        tmp.write_text(text)
        os.replace(tmp, d / name)
    print("\n".join(lines))
    return EXIT_AUDIT if any(r.verdict == FAIL for r in reports.values()) else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="qflow", description=__doc__.splitlines()[0],
                                epilog=f"default output root: ${qcfg.OUTPUT_ROOT_ENV} (else ./runs)",
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration and audit it")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides [output] directory)")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="randomised identity and inequality suites")
    v.add_argument("suite", choices=SUITES + ("all",))
    v.add_argument("--seed", type=int)
    v.add_argument("--inject-sign-error", action="store_true",
                   help="negative control: flip the sign of the speed gradient; the suite must fail")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="Cartesian product over list-valued config fields")
    s.add_argument("config")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="recompute audits from a stored results directory")
    rep.add_argument("directory")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) < 1:
        _err("--jobs must be >= 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
