"""Experiment orchestration: grids over (N, T, L, t), disorder replicas, persistence.

A sweep is decomposed into tasks, one per (temperature, size, realization).
Every task derives its random streams from the master seed and its own index
tuple, is computed independently (possibly in a process pool), and lands in
its own JSON file; the manifest records config hash and completion so an
interrupted sweep resumes without recomputing, and the final CSV is
assembled from task files in task order, making outputs bit-identical across
reruns and worker counts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from clockworm.born import record_frustration, sample_disorder, twist_disorder
from clockworm.channel import ClockChannel, channel_from_couplings, channel_from_temperature
from clockworm.lattice import TorusLattice, build_lattice
from clockworm.metropolis import sector_log_ratio, two_replica_correlator
from clockworm.observables import (
    DisorderedObservable,
    charge_variance,
    coherent_information,
    entropy_nats,
    local_sharpening,
    order_parameter,
    winding_phase_square,
)
from clockworm.oracle import default_pair, exact_spin_correlator, sector_table
from clockworm.seeding import KernelRng, stream
from clockworm.worm import ChainSchedule, run_chain, sector_probabilities

MODES = ("sharpening", "coherent_info", "local", "scaling", "oracle_check")
SCALING_REGIMES = ("ordered", "disordered", "qlro")
WORKERS_ENV = "CLOCKWORM_WORKERS"

# stream-key prefixes (part of the reproducibility contract)
KEY_RECORD = 0
KEY_WORM = 1
KEY_LOCAL = 2
KEY_TI = 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    n: int
    temperatures: list[float]
    sizes: list[tuple[int, int]]  # (L, t)
    realizations: int
    schedule: ChainSchedule
    seed: int
    output_dir: str
    channel_kind: str = "temperature"
    couplings: Optional[list[float]] = None
    workers: int = 0
    chain_replicas: int = 1
    separation: str | int = "half"
    scaling_regime: str = "qlro"
    ti_nodes: int = 8

    def validate(self) -> None:
        def bad(path, msg):
            raise ConfigError(f"{path}: {msg}")

        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.n < 2:
            bad("channel.n", "symmetry order must be >= 2")
        if self.channel_kind not in ("temperature", "couplings"):
            bad("channel.kind", "must be 'temperature' or 'couplings'")
        if self.channel_kind == "couplings":
            if self.couplings is None or len(self.couplings) != self.n // 2 + 1:
                bad("channel.beta", f"needs {self.n // 2 + 1} couplings")
        if not self.temperatures:
            bad("grid.temperatures", "must be non-empty")
        if any(t <= 0 for t in self.temperatures):
            bad("grid.temperatures", "temperatures must be positive")
        if not self.sizes:
            bad("grid.sizes", "must be non-empty")
        if any(l < 2 or t < 2 for l, t in self.sizes):
            bad("grid.sizes", "every L and t must be >= 2")
        if self.realizations <= 0:
            bad("grid.realizations", "must be positive")
        if self.seed is None:
            bad("seed", "a master seed is required; there is no entropy-from-time default")
        if self.chain_replicas <= 0:
            bad("schedule.chain_replicas", "must be positive")
        if self.scaling_regime not in SCALING_REGIMES:
            bad("scaling.regime", f"must be one of {SCALING_REGIMES}")

    def channel_at(self, temperature: float) -> ClockChannel:
        if self.channel_kind == "temperature":
            return channel_from_temperature(self.n, temperature)
        return channel_from_couplings(self.n, self.couplings)

    def pair_for(self, lattice: TorusLattice) -> tuple[int, int]:
        if self.separation == "half":
            return default_pair(lattice)
        sep = int(self.separation) % lattice.width
        return 0, lattice.plaquette_index(sep, 0)

    def physics_dict(self) -> dict:
        """Fields that affect the numbers (output paths and worker count excluded)."""
        return {
            "mode": self.mode,
            "n": self.n,
            "channel_kind": self.channel_kind,
            "couplings": self.couplings,
            "temperatures": list(self.temperatures),
            "sizes": [list(s) for s in self.sizes],
            "realizations": self.realizations,
            "schedule": dataclasses.asdict(self.schedule),
            "seed": self.seed,
            "chain_replicas": self.chain_replicas,
            "separation": self.separation,
            "scaling_regime": self.scaling_regime,
            "ti_nodes": self.ti_nodes,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a TOML (canonical) or JSON config file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        raw = json.loads(text)
    else:
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        raw = tomllib.loads(text)
    return config_from_dict(raw, overrides or {})


def config_from_dict(raw: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    overrides = overrides or {}
    channel = raw.get("channel", {})
    grid = raw.get("grid", {})
    sched = raw.get("schedule", {})
    scaling = raw.get("scaling", {})
    local = raw.get("local", {})

    def need(section: dict, key: str, path: str):
        if key not in section:
            raise ConfigError(f"{path}: missing required field")
        return section[key]

    sizes_raw = need(grid, "sizes", "grid.sizes")
    sizes = [(int(s[0]), int(s[1])) if isinstance(s, (list, tuple)) else (int(s), int(s))
             for s in sizes_raw]
    cfg = ExperimentConfig(
        mode=raw.get("mode", "sharpening"),
        n=int(need(channel, "n", "channel.n")),
        channel_kind=channel.get("kind", "temperature"),
        couplings=list(channel["beta"]) if "beta" in channel else None,
        temperatures=[float(t) for t in need(grid, "temperatures", "grid.temperatures")],
        sizes=sizes,
        realizations=int(need(grid, "realizations", "grid.realizations")),
        schedule=ChainSchedule(
            burn_in=int(sched.get("burn_in", 64)),
            measurements=int(sched.get("measurements", 128)),
            thin=int(sched.get("thin", 1)),
        ),
        seed=raw["seed"] if "seed" in raw else None,
        output_dir=raw.get("output_dir", "clockworm-run"),
        workers=int(raw.get("workers", 0)),
        chain_replicas=int(sched.get("chain_replicas", 1)),
        separation=local.get("separation", "half"),
        scaling_regime=scaling.get("regime", "qlro"),
        ti_nodes=int(scaling.get("ti_nodes", 8)),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


# --- task execution -----------------------------------------------------------------------


def _task_id(ti: int, si: int, r: int) -> str:
    return f"t{ti}_s{si}_r{r}"


def run_task(cfg: ExperimentConfig, ti: int, si: int, r: int) -> dict:
    """Compute one (temperature, size, realization) task; pure given the config."""
    temperature = cfg.temperatures[ti]
    width, height = cfg.sizes[si]
    lattice = build_lattice(width, height)
    channel = cfg.channel_at(temperature)
    record = sample_disorder(
        lattice, channel, stream(cfg.seed, KEY_RECORD, ti, si, r),
        master_seed=cfg.seed, index=r,
    )
    out = {
        "task": [ti, si, r],
        "T": temperature,
        "L": width,
        "t": height,
        "hidden_temporal": record.provenance.hidden_temporal,
    }

    if cfg.mode in ("sharpening", "coherent_info", "oracle_check", "scaling") and not (
        cfg.mode == "scaling" and cfg.scaling_regime == "ordered"
    ):
        hist = None
        diags = []
        replica_phases = []
        omega = np.exp(2j * np.pi * np.arange(cfg.n) / cfg.n)
        for rep in range(cfg.chain_replicas):
            h, d = run_chain(lattice, channel, record, cfg.schedule,
                             KernelRng.from_key(cfg.seed, KEY_WORM, ti, si, r, rep))
            hist = h if hist is None else hist.merged_with(h)
            diags.append(d)
            probs_rep = h.counts / max(h.total, 1)
            replica_phases.append(complex((omega * probs_rep).sum()))
        est = sector_probabilities(hist, diags[0])
        out["probabilities"] = est.probabilities.tolist()
        out["errors"] = est.errors.tolist()
        # Miller-Madow counterterm for the plug-in entropy: the harness emits
        # both the plain and the debiased coherent information
        occupied = int((est.probabilities > 0).sum())
        out["entropy_mm_correction"] = (occupied - 1) / (2.0 * max(est.effective_samples, 1.0))
        if cfg.chain_replicas >= 2:
            # cross-replica product: unbiased for |sum_Q omega^Q P(Q)|^2,
            # where squaring one noisy chain mean would inflate it by its
            # variance (worst at high temperature, where it grows with L)
            pairs = [
                (replica_phases[i] * np.conj(replica_phases[j])).real
                for i in range(len(replica_phases))
                for j in range(i + 1, len(replica_phases))
            ]
            out["op_cross"] = float(np.mean(pairs))
        out["acceptance_rate"] = float(np.mean([d.acceptance_rate for d in diags]))
        out["closed_fraction"] = float(np.mean([d.closed_fraction for d in diags]))
        out["tau_int"] = float(max(d.tau_int for d in diags))
        out["decoder_hit"] = bool(int(np.argmax(est.probabilities)) == record.provenance.hidden_temporal)

    if cfg.mode == "local":
        pair = cfg.pair_for(lattice)
        value = two_replica_correlator(
            lattice, channel, record.s.astype(float), pair, cfg.schedule,
            stream(cfg.seed, KEY_LOCAL, ti, si, r),
        )
        out["pair"] = list(pair)
        out["correlator"] = value

    if cfg.mode == "scaling":
        q_star = record_frustration(record, lattice)
        out["q_star"] = q_star
        if cfg.scaling_regime == "ordered":
            base = twist_disorder(record, lattice, q_star)
            val, err = sector_log_ratio(
                lattice, channel, base.s.astype(float), 1, cfg.schedule,
                stream(cfg.seed, KEY_TI, ti, si, r), nodes=cfg.ti_nodes,
            )
            # val = ln Z[dominant+1] - ln Z[dominant]; report the suppression magnitude
            out["lnratio"] = -val
            out["lnratio_err"] = err
        elif cfg.scaling_regime == "qlro":
            probs = np.asarray(out["probabilities"])
            errs = np.asarray(out["errors"])
            q1 = (q_star + 1) % cfg.n
            if probs[q_star] > 0 and probs[q1] > 0:
                out["lnratio"] = float(math.log(probs[q_star] / probs[q1]))
                out["lnratio_err"] = float(math.hypot(
                    errs[q_star] / probs[q_star], errs[q1] / probs[q1]))
            else:
                out["lnratio"] = None
        else:  # disordered
            probs = np.asarray(out["probabilities"])
            out["sector_deviation"] = float(np.abs(probs - 1.0 / cfg.n).max())

    if cfg.mode == "oracle_check":
        table = sector_table(lattice, channel, record)
        exact = table.probabilities
        probs = np.asarray(out["probabilities"])
        errs = np.asarray(out["errors"])
        tol = np.maximum(0.01, 3.0 * errs)
        out["oracle_probabilities"] = exact.tolist()
        out["max_deviation"] = float(np.abs(probs - exact).max())
        out["within_tolerance"] = bool((np.abs(probs - exact) <= tol).all())
        out["oracle_order_parameter"] = winding_phase_square(exact)
        out["oracle_entropy"] = entropy_nats(exact)
        pair = cfg.pair_for(lattice)
        corr_mc = two_replica_correlator(
            lattice, channel, record.s.astype(float), pair, cfg.schedule,
            stream(cfg.seed, KEY_LOCAL, ti, si, r),
        )
        corr_exact = abs(exact_spin_correlator(lattice, channel, record.s.astype(float), pair)) ** 2
        out["correlator"] = corr_mc
        out["oracle_correlator"] = corr_exact
    return out


def _pool_task(args):
    cfg_dict, ti, si, r = args
    cfg = _config_from_physics(cfg_dict)
    return run_task(cfg, ti, si, r)


def _config_from_physics(d: dict) -> ExperimentConfig:
    sched = d["schedule"]
    return ExperimentConfig(
        mode=d["mode"], n=d["n"], channel_kind=d["channel_kind"], couplings=d["couplings"],
        temperatures=d["temperatures"], sizes=[tuple(s) for s in d["sizes"]],
        realizations=d["realizations"],
        schedule=ChainSchedule(sched["burn_in"], sched["measurements"], sched["thin"]),
        seed=d["seed"], output_dir="", chain_replicas=d["chain_replicas"],
        separation=d["separation"], scaling_regime=d["scaling_regime"], ti_nodes=d["ti_nodes"],
    )


# --- sweep driver -------------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    tasks: dict[str, str] = field(default_factory=dict)  # task id -> status
    outputs: list[str] = field(default_factory=list)

    def save(self, path: Path) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(
            {"config_hash": self.config_hash, "config": self.config,
             "tasks": self.tasks, "outputs": self.outputs}, indent=1, sort_keys=True))
        os.replace(tmp, path)

    @staticmethod
    def load(path: Path) -> "RunManifest":
        raw = json.loads(Path(path).read_text())
        return RunManifest(config_hash=raw["config_hash"], config=raw["config"],
                           tasks=raw.get("tasks", {}), outputs=raw.get("outputs", []))


def _worker_count(cfg: ExperimentConfig) -> int:
    if cfg.workers > 0:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV)
    return max(int(env), 1) if env else 1


def run_sweep(cfg: ExperimentConfig, resume: bool = False, log=print) -> RunManifest:
    """Execute every task of the grid, reduce observables, write outputs.

    With resume=True, tasks whose result files already exist (under the same
    config hash) are not recomputed.  Raises RuntimeError if any task fails.
    """
    cfg.validate()
    outdir = Path(cfg.output_dir)
    taskdir = outdir / "tasks"
    taskdir.mkdir(parents=True, exist_ok=True)
    manifest_path = outdir / "manifest.json"
    chash = cfg.config_hash()

    if resume and manifest_path.exists():
        old = RunManifest.load(manifest_path)
        if old.config_hash != chash:
            raise ConfigError(
                f"resume: manifest config hash {old.config_hash} does not match {chash}")

    tasks = [(ti, si, r)
             for ti in range(len(cfg.temperatures))
             for si in range(len(cfg.sizes))
             for r in range(cfg.realizations)]
    manifest = RunManifest(config_hash=chash, config=cfg.physics_dict())
    manifest.tasks = {_task_id(*t): "pending" for t in tasks}

    todo = []
    for t in tasks:
        f = taskdir / (_task_id(*t) + ".json")
        if resume and f.exists():
            manifest.tasks[_task_id(*t)] = "done"
        else:
            todo.append(t)
    manifest.save(manifest_path)

    failures = []
    n_workers = _worker_count(cfg)
    if todo:
        log(f"running {len(todo)}/{len(tasks)} tasks on {n_workers} worker(s)")
    if n_workers == 1:
        for t in todo:
            try:
                result = run_task(cfg, *t)
                _write_task(taskdir, t, result)
                manifest.tasks[_task_id(*t)] = "done"
            except Exception as exc:  # noqa: BLE001 - reported via manifest and raised below
                manifest.tasks[_task_id(*t)] = f"failed: {exc}"
                failures.append((t, exc))
    else:
        phys = cfg.physics_dict()
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {pool.submit(_pool_task, (phys, *t)): t for t in todo}
            for future, t in futures.items():
                try:
                    result = future.result()
                    _write_task(taskdir, t, result)
                    manifest.tasks[_task_id(*t)] = "done"
                except Exception as exc:  # noqa: BLE001
                    manifest.tasks[_task_id(*t)] = f"failed: {exc}"
                    failures.append((t, exc))
    manifest.save(manifest_path)
    if failures:
        raise RuntimeError(f"{len(failures)} task(s) failed; first: {failures[0]}")

    csv_path, summary_path = _reduce_outputs(cfg, taskdir, outdir, tasks)
    manifest.outputs = [str(csv_path), str(summary_path)]
    manifest.save(manifest_path)
    return manifest


def _write_task(taskdir: Path, t: tuple, result: dict) -> None:
    path = taskdir / (_task_id(*t) + ".json")
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(result, sort_keys=True))
    os.replace(tmp, path)


def _load_task(taskdir: Path, t: tuple) -> dict:
    return json.loads((taskdir / (_task_id(*t) + ".json")).read_text())


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _reduce_outputs(cfg: ExperimentConfig, taskdir: Path, outdir: Path, tasks) -> tuple[Path, Path]:
    rows: list[tuple] = []
    summary: dict = {"config_hash": cfg.config_hash(), "points": []}

    for ti, temperature in enumerate(cfg.temperatures):
        for si, (width, height) in enumerate(cfg.sizes):
            results = [_load_task(taskdir, (ti, si, r)) for r in range(cfg.realizations)]
            point: dict = {"T": temperature, "L": width, "t": height}

            def add_row(name: str, obs: DisorderedObservable):
                rows.append((cfg.n, width, height, temperature, name,
                             obs.estimate, obs.stderr, obs.n_realizations, cfg.seed))

            if cfg.mode in ("sharpening", "coherent_info"):
                probs = [np.asarray(res["probabilities"]) for res in results]
                ops = DisorderedObservable.from_values([winding_phase_square(p) for p in probs])
                cis = DisorderedObservable.from_values([entropy_nats(p) for p in probs])
                add_row("order_parameter", ops)
                add_row("charge_variance", charge_variance(ops))
                if all("op_cross" in res for res in results):
                    add_row("order_parameter_cross", DisorderedObservable.from_values(
                        [res["op_cross"] for res in results]))
                add_row("coherent_information", cis)
                norm = DisorderedObservable(cis.estimate / math.log(cfg.n), cis.stderr / math.log(cfg.n),
                                            cis.n_realizations, cis.values / math.log(cfg.n))
                add_row("coherent_information_normalized", norm)
                debiased = DisorderedObservable.from_values(
                    [entropy_nats(p) + res["entropy_mm_correction"]
                     for p, res in zip(probs, results)])
                add_row("coherent_information_debiased", debiased)
                point["decoder_accuracy"] = float(np.mean([res["decoder_hit"] for res in results]))
            elif cfg.mode == "local":
                obs = local_sharpening([res["correlator"] for res in results])
                add_row("local_sharpening", obs)
            elif cfg.mode == "scaling":
                if cfg.scaling_regime == "disordered":
                    obs = DisorderedObservable.from_values(
                        [res["sector_deviation"] for res in results])
                    add_row("sector_deviation", obs)
                else:
                    vals = [res["lnratio"] for res in results if res.get("lnratio") is not None]
                    if vals:
                        obs = DisorderedObservable.from_values(vals)
                        add_row("lnratio", obs)
                        point["n_usable"] = len(vals)
            elif cfg.mode == "oracle_check":
                ok = all(res["within_tolerance"] for res in results)
                point["all_within_tolerance"] = ok
                obs = DisorderedObservable.from_values([res["max_deviation"] for res in results])
                add_row("worm_oracle_max_deviation", obs)
                mc = DisorderedObservable.from_values([res["correlator"] for res in results])
                ex = DisorderedObservable.from_values([res["oracle_correlator"] for res in results])
                add_row("local_sharpening", mc)
                add_row("oracle_local_sharpening", ex)

            for key in ("acceptance_rate", "closed_fraction", "tau_int"):
                if results and key in results[0]:
                    point[key] = float(np.mean([res[key] for res in results]))
            summary["points"].append(point)

    csv_path = outdir / "observables.csv"
    with open(csv_path, "w") as fh:
        fh.write("N,L,t,T,observable,value,stderr,n_realizations,seed\n")
        for row in rows:
            n, width, height, temperature, name, value, err, nreal, seed = row
            fh.write(f"{n},{width},{height},{_fmt(temperature)},{name},"
                     f"{_fmt(value)},{_fmt(err)},{nreal},{seed}\n")
    if cfg.mode == "oracle_check":
        summary["oracle_check_passed"] = all(
            p.get("all_within_tolerance", False) for p in summary["points"])
    summary_path = outdir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    return csv_path, summary_path


# --- plot-ready emission --------------------------------------------------------------------

FIGURES = ("fig5_style", "fig6_style", "scaling")
_FIGURE_OBSERVABLE = {
    "fig5_style": "order_parameter",
    "fig6_style": "coherent_information_normalized",
    "scaling": None,
}


def read_observables(csv_path: str | Path) -> list[dict]:
    out = []
    lines = Path(csv_path).read_text().strip().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        parts = line.split(",")
        rec = dict(zip(header, parts))
        for key in ("value", "stderr", "T"):
            rec[key] = float(rec[key])
        for key in ("N", "L", "t", "n_realizations"):
            rec[key] = int(rec[key])
        out.append(rec)
    return out


def emit_plot_data(manifest: RunManifest, figure: str, outdir: str | Path) -> list[Path]:
    """Long-format CSV plus a gnuplot block file for one figure style."""
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {FIGURES}")
    csvs = [p for p in manifest.outputs if p.endswith("observables.csv")]
    if not csvs:
        raise ValueError("manifest has no observables.csv output; run the sweep first")
    pending = [tid for tid, status in manifest.tasks.items() if status != "done"]
    if pending:
        raise ValueError(f"manifest incomplete; missing tasks: {pending[:8]}{'...' if len(pending) > 8 else ''}")
    rows = read_observables(csvs[0])
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if figure == "scaling":
        keep = [r for r in rows if r["observable"] in ("lnratio", "sector_deviation")]
        csv_path = outdir / "scaling.csv"
        with open(csv_path, "w") as fh:
            fh.write("L,t,observable,value,stderr\n")
            for r in keep:
                fh.write(f"{r['L']},{r['t']},{r['observable']},{_fmt(r['value'])},{_fmt(r['stderr'])}\n")
        return [csv_path]

    name = _FIGURE_OBSERVABLE[figure]
    keep = sorted((r for r in rows if r["observable"] == name),
                  key=lambda r: (r["L"], r["t"], r["T"]))
    csv_path = outdir / f"{figure}.csv"
    gp_path = outdir / f"{figure}.dat"
    with open(csv_path, "w") as fh:
        fh.write("series_L,series_t,T,value,stderr\n")
        for r in keep:
            fh.write(f"{r['L']},{r['t']},{_fmt(r['T'])},{_fmt(r['value'])},{_fmt(r['stderr'])}\n")
    with open(gp_path, "w") as fh:
        sizes = sorted({(r["L"], r["t"]) for r in keep})
        for width, height in sizes:
            fh.write(f"# L={width} t={height} observable={name}\n")
            for r in keep:
                if (r["L"], r["t"]) == (width, height):
                    fh.write(f"{_fmt(r['T'])} {_fmt(r['value'])} {_fmt(r['stderr'])}\n")
            fh.write("\n\n")
    return [csv_path, gp_path]
