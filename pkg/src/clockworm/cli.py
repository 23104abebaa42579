"""Command-line entry points: sweep, oracle-check, plot-data, fit, resume."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from clockworm.harness import (
    FIGURES,
    RunManifest,
    config_from_dict,
    emit_plot_data,
    load_config,
    read_observables,
    run_sweep,
)
from clockworm.observables import fit_scaling, sharpening_time

_REGIME_MODEL = {"ordered": "exp_t", "qlro": "linear_t_over_L", "disordered": "exp_L"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", required=True, help="TOML (or JSON) experiment config")
    p.add_argument("-o", "--output-dir", default=None, help="override the config output_dir")
    p.add_argument("--workers", type=int, default=None, help="override worker count")


def _load(args, force_mode=None):
    overrides = {"output_dir": args.output_dir, "workers": args.workers}
    if force_mode:
        overrides["mode"] = force_mode
    return load_config(args.config, overrides)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    manifest = run_sweep(cfg, resume=args.resume)
    print(f"wrote {manifest.outputs}")
    if cfg.mode == "oracle_check":
        summary = json.loads(Path(manifest.outputs[1]).read_text())
        ok = summary.get("oracle_check_passed", False)
        print(f"oracle check {'PASSED' if ok else 'FAILED'}")
        return 0 if ok else 1
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _load(args, force_mode="oracle_check")
    manifest = run_sweep(cfg)
    summary = json.loads(Path(manifest.outputs[1]).read_text())
    ok = summary.get("oracle_check_passed", False)
    for point in summary["points"]:
        print(f"T={point['T']} L={point['L']} t={point['t']}: "
              f"{'ok' if point.get('all_within_tolerance') else 'DEVIATES'}")
    print(f"oracle check {'PASSED' if ok else 'FAILED'}")
    return 0 if ok else 1


def cmd_resume(args) -> int:
    manifest = RunManifest.load(Path(args.manifest))
    raw = manifest.config
    cfg = config_from_dict(
        {
            "mode": raw["mode"],
            "seed": raw["seed"],
            "output_dir": str(Path(args.manifest).parent),
            "channel": {"n": raw["n"], "kind": raw["channel_kind"],
                        **({"beta": raw["couplings"]} if raw["couplings"] else {})},
            "grid": {"temperatures": raw["temperatures"], "sizes": raw["sizes"],
                     "realizations": raw["realizations"]},
            "schedule": {**raw["schedule"], "chain_replicas": raw["chain_replicas"]},
            "local": {"separation": raw["separation"]},
            "scaling": {"regime": raw["scaling_regime"], "ti_nodes": raw["ti_nodes"]},
        },
        {"workers": args.workers},
    )
    out = run_sweep(cfg, resume=True)
    print(f"wrote {out.outputs}")
    return 0


def cmd_plot_data(args) -> int:
    manifest = RunManifest.load(Path(args.manifest))
    outdir = args.output_dir or str(Path(args.manifest).parent / "plots")
    paths = emit_plot_data(manifest, args.figure, outdir)
    print("wrote " + " ".join(str(p) for p in paths))
    return 0


def cmd_fit(args) -> int:
    if args.manifest:
        manifest = RunManifest.load(Path(args.manifest))
        csvs = [p for p in manifest.outputs if p.endswith("observables.csv")]
        if not csvs:
            print("manifest has no observables.csv", file=sys.stderr)
            return 1
        csv_path = csvs[0]
    else:
        csv_path = args.csv
    rows = read_observables(csv_path)

    if args.tsharp:
        curves: dict[tuple, list] = {}
        for r in rows:
            if r["observable"] == "order_parameter":
                curves.setdefault((r["L"], r["T"]), []).append((r["t"], r["value"]))
        report = []
        for (width, temperature), curve in sorted(curves.items()):
            ts = sharpening_time(curve, threshold=args.threshold)
            report.append({"L": width, "T": temperature, "t_sharp": ts.value,
                           "censored": ts.censored, "warning": ts.warning})
        print(json.dumps(report, indent=1))
        return 0

    name = "sector_deviation" if args.regime == "disordered" else "lnratio"
    data = [(r["L"], r["t"], r["value"]) for r in rows if r["observable"] == name]
    if len(data) < 4:
        print(f"need at least 4 {name} rows, found {len(data)}", file=sys.stderr)
        return 1
    fit = fit_scaling(data, _REGIME_MODEL[args.regime])
    report = {"model": fit.model, "intercept": fit.intercept, "slope": fit.slope,
              "r_squared": fit.r_squared}
    if args.regime == "qlro":
        alt = fit_scaling(data, "exp_t")
        report["exp_t_r_squared"] = alt.r_squared
        report["beats_exp_t"] = float((fit.residuals**2).sum()) < float((alt.residuals**2).sum())
    print(json.dumps(report, indent=1))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="clockworm",
                                     description="Worm-algorithm clock-model sweeps on the torus")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run the configured grid")
    _add_common(p)
    p.add_argument("--resume", action="store_true", help="skip completed tasks")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="run the config in oracle_check mode")
    _add_common(p)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("resume", help="resume a sweep from its manifest")
    p.add_argument("-m", "--manifest", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("plot-data", help="emit plot-ready data files")
    p.add_argument("-m", "--manifest", required=True)
    p.add_argument("--figure", choices=FIGURES, required=True)
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("fit", help="scaling fits / sharpening times from sweep output")
    p.add_argument("-m", "--manifest", default=None)
    p.add_argument("--csv", default=None, help="observables.csv (alternative to -m)")
    p.add_argument("--regime", choices=("ordered", "disordered", "qlro"), default="qlro")
    p.add_argument("--tsharp", action="store_true", help="report threshold-crossing times instead")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_fit)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
