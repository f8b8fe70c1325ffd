"""Batch command line: offline simulation, training, decoding, reporting,
and launching the session service.

All outputs are deterministic for a given seed and config, and report
files are written atomically (temp file, then rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import SessionConfig, load_config
from .dsp import FilterBankSpec, preprocess
from .engine import (
    read_trial_log,
    run_fixed_task,
    run_random_task,
    train_decoder,
    write_trial_log,
)
from .metrics import build_metrics
from .stimulus import save_bank
from .synth import make_cohort, read_session, subject_from_params
from .trca import correlate, load_model, save_model
from .velocity import VelocityWeight, decode_velocity, initial_velocity_weight


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _apply_overrides(config: SessionConfig, pairs: list[str]) -> SessionConfig:
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set wants key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        if key not in SessionConfig.__dataclass_fields__:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(config, key)
        if isinstance(current, int):
            updates[key] = int(raw)
        elif isinstance(current, float):
            updates[key] = float(raw)
        else:
            updates[key] = raw
    return config.with_overrides(**updates)


def _load_setup(args) -> tuple[SessionConfig, FilterBankSpec]:
    config, fb_dict = load_config(args.config)
    config = _apply_overrides(config, args.set or [])
    return config, FilterBankSpec.from_dict(fb_dict)


def _subject_params(args) -> dict:
    if getattr(args, "cohort_seed", None) is not None:
        return {"cohort_seed": args.cohort_seed,
                "cohort_index": getattr(args, "cohort_index", 0)}
    return {"seed": getattr(args, "subject_seed", 0)}


def _cmd_simulate(args) -> int:
    config, spec = _load_setup(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = ["fixed", "random"] if args.task == "both" else [args.task]
    summary = []
    for i, subject in enumerate(make_cohort(args.subjects, args.seed)):
        bundle, _ = train_decoder(subject, config, spec)
        for task in tasks:
            if task == "fixed":
                records = run_fixed_task(subject, bundle, config)
            else:
                records = run_random_task(subject, bundle, config)
            stem = f"subject{i:02d}_{task}"
            write_trial_log(out / f"{stem}.jsonl", records)
            report = build_metrics(records, config)
            _write_text(out / f"{stem}_metrics.json", report.to_json())
            summary.append({
                "subject": i,
                "task": task,
                "n_trials": report.n_trials,
                "n_hits": report.n_hits,
                "success_rate": report.success_rate,
                "fitts_itr_bps_mean": report.fitts_itr_bps["mean"],
            })
            itr = report.fitts_itr_bps["mean"]
            itr_str = "n/a" if itr is None else f"{itr:.3f}"
            print(f"subject {i} {task}: {report.n_hits}/{report.n_trials} hits, "
                  f"ITR {itr_str} bps")
    _write_text(out / "summary.json",
                json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_train(args) -> int:
    config, spec = _load_setup(args)
    subject = subject_from_params(_subject_params(args))
    bundle, data = train_decoder(subject, config, spec)
    save_model(args.out, bundle.trca, spec,
               velocity_weight=bundle.velocity_weight.matrix,
               velocity_kind=bundle.velocity_weight.kind)
    if args.wn_bank:
        save_bank(args.wn_bank, bundle.wn_bank)
    d_mat, i_mat = data.matrices()
    residual = float(np.linalg.norm(d_mat @ bundle.velocity_weight.matrix - i_mat))
    print(f"model written to {args.out} "
          f"({bundle.trca.n_subbands} sub-bands, {bundle.trca.n_regions} regions, "
          f"regression residual {residual:.1f})")
    return 0


def _cmd_decode(args) -> int:
    config, _ = _load_setup(args)
    model, spec, vw_matrix, kind = load_model(args.model)
    epochs, labels, _ = read_session(args.session)
    if vw_matrix is not None:
        weight = VelocityWeight(matrix=vw_matrix, kind=kind or "corrected")
    else:
        weight = initial_velocity_weight(config)
    traces = []
    for epoch in epochs:
        processed = preprocess(epoch, spec, processing_rate_hz=config.sample_rate_hz)
        rho = correlate(model, processed, spec)
        v = decode_velocity(rho, weight, max_speed_px=config.screen_width_px / 2.0)
        traces.append({"rho": [float(r) for r in rho],
                       "velocity": [float(v[0]), float(v[1])]})
    doc = {"n_epochs": len(traces), "labels": labels, "traces": traces}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
        print(f"decoded {len(traces)} epochs -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    config, _ = _load_setup(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_records = []
    rows = []
    for log_path in args.log:
        records = read_trial_log(log_path)
        if not records:
            raise ValueError(f"{log_path} holds no trials")
        all_records.extend(records)
        report = build_metrics(records, config)
        rows.append((Path(log_path).name, report))
    combined = build_metrics(all_records, config)
    _write_text(out / "report.json", combined.to_json())
    _write_text(out / "report.csv", combined.to_csv())

    lines = ["file,task,n_trials,n_hits,success_rate,itr_mean,itr_sd,"
             "time_mean_s,angular_mean_deg,vector_mean"]
    for name, report in rows:
        cells = [
            name, report.task, report.n_trials, report.n_hits,
            report.success_rate,
            report.fitts_itr_bps["mean"], report.fitts_itr_bps["sd"],
            report.time_to_target_s["overall"]["mean"],
            report.angular_error_deg["mean"], report.vector_error["mean"],
        ]
        lines.append(",".join("" if c is None else str(c) for c in cells))
    _write_text(out / "subjects.csv", "\n".join(lines) + "\n")
    print(f"report over {len(all_records)} trials from {len(rows)} logs -> {out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port
    if port is None:
        port = int(os.environ.get("NEUROTRACK_PORT", "8000"))
    uvicorn.run(create_app(), host=args.host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="session config JSON (defaults to the packaged one)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a session config field (repeatable)")

    parser = argparse.ArgumentParser(
        prog="neurotrack",
        description="Continuous visual-BCI decoding engine and closed-loop simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="train and run tracking tasks over a synthetic cohort")
    p.add_argument("--subjects", type=int, default=1)
    p.add_argument("--task", choices=["fixed", "random", "both"], default="fixed")
    p.add_argument("--seed", type=int, default=0, help="cohort seed")
    p.add_argument("--out", default="neurotrack_out", help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", parents=[common],
                       help="train a decoder on one synthetic subject and save it")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--wn-bank", help="also export the stimulation codes as JSON")
    p.add_argument("--subject-seed", type=int, default=0)
    p.add_argument("--cohort-seed", type=int)
    p.add_argument("--cohort-index", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("decode", parents=[common],
                       help="score a recorded session file with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--out", help="trace JSON (stdout when omitted)")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("report", parents=[common],
                       help="aggregate trial logs into metrics JSON/CSV")
    p.add_argument("--log", action="append", required=True,
                   help="trial log (JSONL); repeatable")
    p.add_argument("--out", default="neurotrack_report", help="output directory")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", parents=[common], help="start the session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   help="default 8000, or the NEUROTRACK_PORT environment variable")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
