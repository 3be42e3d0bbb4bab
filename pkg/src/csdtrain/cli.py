"""Command-line entry point: ``csdtrain <subcommand> ...``.

Every artifact carries a ``manifest`` (or a ``.manifest.json`` sidecar for
CSV outputs) holding the full effective configuration.  Passing that file
back with ``--replay`` reproduces the artifact byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, fixtures
from .calibration import Target, calibrate, save_calibration
from .errors import ValidationError
from .minitrain.verify import (
    VerifyConfig,
    equivalence_run,
    parity_run,
    random_equivalence_case,
)
from .partitioner import DatasetSpec, PartitionPlan, balance_epoch, validate_plan
from .profiles import (
    ClusterSpec,
    NetworkDescriptor,
    build_cluster,
    fit_curve,
    group_records,
    load_benchmark,
)
from .simengine import (
    REPORT_CSV_HEADER,
    EnergyModelParams,
    Pipeline,
    SyncModel,
    default_dataset,
    simulate_epoch,
    speedup_curve,
)
from .tuner import TuneConfig, TuneResult, tune_cluster

EX_OK = 0
EX_FAILED = 1
EX_VALIDATION = 2
EX_USAGE = 64
EX_NOINPUT = 66
EX_CANTCREAT = 73

SUBCOMMANDS = ("bench-import", "tune", "partition", "simulate", "sweep", "calibrate", "verify-train", "report")

SWEEP_CSV_HEADER = REPORT_CSV_HEADER + ("csd_img_per_sec",)


class CliError(Exception):
    def __init__(self, status: int, code: str, message: str, location: str | None = None):
        super().__init__(message)
        self.status, self.code, self.message, self.location = status, code, message, location


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EX_USAGE, "usage", message)


# ---------------------------------------------------------------- settings


def default_settings(cluster: ClusterSpec) -> dict:
    verify = VerifyConfig().to_json()
    verify.pop("seed")
    return {
        "seed": 0,
        "tuner": TuneConfig().to_json(),
        "sync": SyncModel.from_cluster(cluster).to_json(),
        "energy": EnergyModelParams.from_cluster(cluster).to_json(),
        "dataset": {"public_total": 72000, "private_total": 12000},
        "calibration": {
            "sweeps": 30,
            "residual_ceiling": 0.05,
            "sync_free": ["sync.per_param_overhead"],
            "energy_free": [
                "energy.chassis_overhead_watts",
                "energy.csd_active_watts",
                "energy.host_active_watts",
            ],
        },
        "verify": verify,
    }


def override_keys(settings: dict) -> list[str]:
    keys = []
    for section, value in settings.items():
        if isinstance(value, dict):
            keys += [f"{section}.{k}" for k in value]
        else:
            keys.append(section)
    return sorted(keys)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if "," in text:
            return [_parse_value(t) for t in text.split(",")]
        return text


def apply_overrides(settings: dict, overrides: list[str]) -> dict:
    known = set(override_keys(settings))
    out = copy.deepcopy(settings)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise ValidationError(f"override {item!r} is not of the form key=value", key)
        if key not in known:
            raise ValidationError(f"unknown override key {key!r}", key)
        value = _parse_value(raw)
        if "." in key:
            section, name = key.split(".", 1)
            out[section][name] = value
        else:
            out[key] = value
    return out


def tune_config(settings: dict) -> TuneConfig:
    t = dict(settings["tuner"])
    if t.get("candidate_batches") is not None:
        c = t["candidate_batches"]
        t["candidate_batches"] = tuple(c if isinstance(c, list) else [c])
    try:
        return TuneConfig(**t)
    except TypeError as exc:
        raise ValidationError(f"bad tuner settings: {exc}") from None


def sync_model(settings: dict) -> SyncModel:
    try:
        return SyncModel(**settings["sync"])
    except TypeError as exc:
        raise ValidationError(f"bad sync settings: {exc}") from None


def energy_params(settings: dict) -> EnergyModelParams:
    try:
        return EnergyModelParams(**settings["energy"])
    except TypeError as exc:
        raise ValidationError(f"bad energy settings: {exc}") from None


def verify_config(settings: dict) -> VerifyConfig:
    try:
        return VerifyConfig.from_json({**settings["verify"], "seed": int(settings["seed"])})
    except TypeError as exc:
        raise ValidationError(f"bad verify settings: {exc}") from None


# ---------------------------------------------------------------- io helpers


def _require_input(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(EX_NOINPUT, "no_input", f"input file not found: {path}", str(path))
    return p


def _read_json(path) -> dict:
    p = _require_input(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})", f"{path}:{exc.lineno}") from None


def _write_text(path, text: str) -> None:
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EX_CANTCREAT, "cant_create", f"cannot write {path}: {exc.strerror}", str(path)) from None


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(args, payload: dict) -> None:
    text = _dumps(payload)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_cluster(args) -> ClusterSpec:
    if args.cluster:
        obj = _read_json(args.cluster)
    else:
        with fixtures.data_path("cluster.json").open(encoding="utf-8") as fh:
            obj = json.load(fh)
    bench = getattr(args, "bench", None)
    if bench:
        return build_cluster(load_benchmark(_require_input(bench)), obj)
    return ClusterSpec.from_json(obj)


def _load_network(ref: str) -> NetworkDescriptor:
    if ref in fixtures.NETWORKS:
        return fixtures.network(ref)
    return NetworkDescriptor.from_json(_read_json(ref))


def _manifest(args, settings: dict, inputs: dict, options: dict) -> dict:
    digests = {k: _file_digest(v) for k, v in sorted(inputs.items()) if v is not None}
    return {
        "tool": "csdtrain",
        "version": __version__,
        "command": args.command,
        "inputs": {k: v for k, v in sorted(inputs.items()) if v is not None},
        "input_sha256": digests,
        "options": options,
        "effective_config": settings,
    }


def _resolve(args, cluster: ClusterSpec) -> dict:
    """Effective settings: defaults, then calibration file, then overrides (or a replayed manifest)."""
    if getattr(args, "replay_manifest", None) is not None:
        settings = default_settings(cluster)
        replayed = args.replay_manifest["effective_config"]
        unknown = set(override_keys(replayed)) - set(override_keys(settings))
        if unknown:
            raise ValidationError(f"manifest has unknown keys {sorted(unknown)}")
        return replayed
    settings = default_settings(cluster)
    if getattr(args, "calibration", None):
        cal = _read_json(args.calibration)
        try:
            settings["sync"] = SyncModel(**cal["sync"]).to_json()
            settings["energy"] = EnergyModelParams(**cal["energy"]).to_json()
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed calibration file: {exc}", args.calibration) from None
    if args.seed is not None:
        settings["seed"] = args.seed
    return apply_overrides(settings, args.set or [])


# ---------------------------------------------------------------- subcommands


def cmd_bench_import(args) -> int:
    if not args.bench:
        raise CliError(EX_USAGE, "usage", "bench-import needs --bench")
    records = load_benchmark(_require_input(args.bench), args.format)
    curves = {}
    for node, nets in sorted(group_records(records).items()):
        curves[node] = {}
        for net, samples in sorted(nets.items()):
            c = fit_curve(samples)
            curves[node][net] = {
                "samples": [[b, t] for b, t in c.samples],
                "fitted": list(c.fitted),
                "saturation_throughput": c.saturation_throughput,
                "saturation_batch": c.saturation_batch,
            }
    payload = {
        "records": len(records),
        "curves": curves,
        "manifest": _manifest(args, {}, {"bench": args.bench, "cluster": args.cluster}, {"format": args.format}),
    }
    if args.cluster:
        cluster = build_cluster(records, _read_json(args.cluster))
        payload["cluster"] = cluster.to_json()
    _emit(args, payload)
    return EX_OK


def cmd_tune(args) -> int:
    cluster = _load_cluster(args)
    settings = _resolve(args, cluster)
    net = _load_network(args.network)
    n_csds = args.n_csds if args.n_csds is not None else len(cluster.csds)
    result = tune_cluster(cluster.with_csds(n_csds), net, tune_config(settings))
    payload = result.to_json()
    payload["network"] = net.name
    payload["manifest"] = _manifest(
        args, settings,
        {"cluster": args.cluster, "bench": args.bench},
        {"network": args.network, "n_csds": n_csds},
    )
    _emit(args, payload)
    return EX_OK


def _dataset_for(args, settings: dict, cluster: ClusterSpec, node_ids) -> DatasetSpec:
    if args.dataset:
        return DatasetSpec.from_json(_read_json(args.dataset))
    d = settings["dataset"]
    data = default_dataset(cluster, int(d["public_total"]), int(d["private_total"]))
    return DatasetSpec(data.public_total, {k: v for k, v in data.private_per_node.items() if k in node_ids})


def cmd_partition(args) -> int:
    cluster = _load_cluster(args)
    settings = _resolve(args, cluster)
    if not args.tune:
        raise CliError(EX_USAGE, "usage", "partition needs --tune")
    tune = TuneResult.from_json(_read_json(args.tune))
    data = _dataset_for(args, settings, cluster, set(tune.per_node))
    plan = balance_epoch(tune, data)
    problems = validate_plan(plan, tune, data)
    if problems:
        raise ValidationError("generated plan violates invariants: " + "; ".join(problems))
    payload = plan.to_json()
    payload["dataset"] = data.to_json()
    payload["manifest"] = _manifest(
        args, settings, {"cluster": args.cluster, "tune": args.tune, "dataset": args.dataset}, {}
    )
    if args.samples_csv:
        _write_text(args.samples_csv, plan.manifest_csv())
    _emit(args, payload)
    return EX_OK


def cmd_simulate(args) -> int:
    cluster = _load_cluster(args)
    settings = _resolve(args, cluster)
    net = _load_network(args.network)
    sync, energy = sync_model(settings), energy_params(settings)
    if args.tune or args.plan:
        if not (args.tune and args.plan):
            raise CliError(EX_USAGE, "usage", "--tune and --plan must be given together")
        tune = TuneResult.from_json(_read_json(args.tune))
        plan = PartitionPlan.from_json(_read_json(args.plan))
        report = simulate_epoch(cluster, net, tune, plan, sync, energy)
        options = {"network": args.network}
    else:
        n_csds = args.n_csds if args.n_csds is not None else len(cluster.csds)
        pipe = Pipeline(cluster, tune_config(settings), _dataset_for(args, settings, cluster, {n.node_id for n in cluster.nodes}))
        report = pipe.run(net, n_csds, sync, energy)
        options = {"network": args.network, "n_csds": n_csds}
    payload = report.to_json()
    payload["manifest"] = _manifest(
        args, settings,
        {"cluster": args.cluster, "bench": args.bench, "tune": args.tune, "plan": args.plan,
         "calibration": args.calibration, "dataset": args.dataset},
        options,
    )
    _emit(args, payload)
    return EX_OK


def _parse_counts(text: str) -> list[int]:
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(t) for t in text.split("-"))
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"bad node count list {text!r}") from None


def sweep_rows(reports) -> list[list]:
    rows = []
    for r in reports:
        csd_speeds = [v for k, v in sorted(r.per_node_effective_speed.items()) if k != "host"]
        per_csd = repr(csd_speeds[0]) if r.n_csds and csd_speeds else ""
        rows.append(r.csv_row() + [per_csd])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cluster = _load_cluster(args)
    settings = _resolve(args, cluster)
    counts = _parse_counts(args.n_csds)
    networks = args.network or ["mobilenetv2"]
    sync, energy = sync_model(settings), energy_params(settings)
    pipe = Pipeline(cluster, tune_config(settings), _dataset_for(args, settings, cluster, {n.node_id for n in cluster.nodes}))
    reports = []
    for ref in networks:
        net = _load_network(ref)
        reports += [r for _, r in speedup_curve(cluster, net, counts, sync, energy, pipeline=pipe)]
    reports.sort(key=lambda r: (r.network, r.n_csds))
    text = _csv_text(SWEEP_CSV_HEADER, sweep_rows(reports))
    manifest = _manifest(
        args, settings,
        {"cluster": args.cluster, "bench": args.bench, "calibration": args.calibration, "dataset": args.dataset},
        {"network": networks, "n_csds": counts},
    )
    if args.out:
        _write_text(args.out, text)
        _write_text(str(args.out) + ".manifest.json", _dumps(manifest))
        if args.json:
            _write_text(args.json, _dumps({"reports": [r.to_json() for r in reports], "manifest": manifest}))
    else:
        sys.stdout.write(text)
    if args.figures:
        from .plotting import render_figures

        rows = list(csv.DictReader(io.StringIO(text)))
        render_figures(rows, args.figures)
    return EX_OK


def cmd_calibrate(args) -> int:
    cluster = _load_cluster(args)
    settings = _resolve(args, cluster)
    spec = _read_json(args.targets) if args.targets else fixtures.energy_targets()
    cal = settings["calibration"]
    try:
        net_name = spec["network"]
        speed_targets = [Target(net_name, int(n), "speedup", float(v)) for n, v in spec.get("speedup", {}).items()]
        energy_targets = [
            Target(net_name, int(n), "j_per_img", float(v)) for n, v in spec.get("energy_per_image", {}).items()
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed targets file: {exc}") from None
    networks = {net_name: _load_network(net_name)}
    pipe = Pipeline(cluster, tune_config(settings), _dataset_for(args, settings, cluster, {n.node_id for n in cluster.nodes}))
    seed = int(settings["seed"])
    common = dict(seed=seed, sweeps=int(cal["sweeps"]), ceiling=float(cal["residual_ceiling"]))
    sync_fit = calibrate(pipe, networks, speed_targets, list(cal["sync_free"]), sync_model(settings), energy_params(settings), **common)
    energy_fit = calibrate(pipe, networks, energy_targets, list(cal["energy_free"]), sync_fit.sync, sync_fit.energy, **common)
    manifest = _manifest(args, settings, {"cluster": args.cluster, "bench": args.bench, "targets": args.targets, "dataset": args.dataset}, {})
    if args.out:
        try:
            save_calibration(args.out, sync_fit, energy_fit, {"manifest": manifest})
        except OSError as exc:
            raise CliError(EX_CANTCREAT, "cant_create", f"cannot write {args.out}: {exc.strerror}", str(args.out)) from None
    lines = ["metric,n_csds,observed,predicted,relative_residual"]
    for r in sync_fit.residuals + energy_fit.residuals:
        lines.append(f"{r['metric']},{r['n_csds']},{r['observed']},{r['predicted']:.6g},{r['relative_residual']:+.4f}")
    sys.stdout.write("\n".join(lines) + "\n")
    flagged = sync_fit.flagged or energy_fit.flagged
    if flagged:
        sys.stderr.write(json.dumps({"code": "residual_ceiling", "message": "calibration residual above ceiling"}) + "\n")
    return EX_OK


def cmd_verify_train(args) -> int:
    settings = _resolve(args, fixtures.cluster())
    cfg = verify_config(settings)
    outdir = Path(args.out or "verify-train")
    parity = parity_run(cfg)
    trace = parity.pop("trace")

    rng = np.random.default_rng([cfg.seed, 2])
    worst = 0.0
    for _ in range(args.equivalence_cases):
        X, y, dims, shards, batches, sched, steps, seed, act = random_equivalence_case(rng, args.equivalence_steps)
        dist, _, _ = equivalence_run(X, y, dims, shards, batches, sched, steps, seed, act)
        worst = max(worst, dist)

    run_manifest = _manifest(args, settings, {}, {
        "equivalence_cases": args.equivalence_cases,
        "equivalence_steps": args.equivalence_steps,
    })
    run_manifest["tolerances"] = {"equivalence_rel": 1e-6, "loss_rel": cfg.loss_tolerance}
    summary = {
        "parity": parity,
        "equivalence": {
            "cases": args.equivalence_cases,
            "steps": args.equivalence_steps,
            "max_relative_param_distance": worst,
            "passed": worst <= 1e-6,
        },
        "manifest": run_manifest,
    }
    _write_text(outdir / "trace.csv", trace.trace_csv())
    _write_text(outdir / "manifest.json", _dumps(run_manifest))
    _write_text(outdir / "summary.json", _dumps(summary))
    ok = parity["passed"] and summary["equivalence"]["passed"]
    sys.stdout.write(
        f"loss rel diff {parity['loss_rel_diff']:.3g}, accuracy equal {parity['accuracy_equal']}, "
        f"uniform-averaging loss delta {parity['uniform_loss_rel_diff']:.3g}, "
        f"equivalence max distance {worst:.3g} -> {'PASS' if ok else 'FAIL'}\n"
    )
    return EX_OK if ok else EX_FAILED


def read_sweep_csv(path) -> list[dict]:
    p = _require_input(path)
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = set(REPORT_CSV_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}", str(path))
        return list(reader)


def convergence_count(rows: list[dict], tol: float = 0.01) -> int | None:
    """Smallest CSD count after which the per-CSD speed changes by < ``tol`` per added node."""
    pts = [(int(r["n_csds"]), float(r["csd_img_per_sec"])) for r in rows if r.get("csd_img_per_sec")]
    pts.sort()
    if len(pts) < 2:
        return None
    ok_from = None
    for (n0, s0), (n1, s1) in zip(pts, pts[1:]):
        per_node = abs(s1 - s0) / s0 / max(n1 - n0, 1)
        if per_node < tol:
            ok_from = n0 if ok_from is None else ok_from
        else:
            ok_from = None
    return ok_from


def summarize(rows: list[dict]) -> str:
    by_net: dict[str, list[dict]] = {}
    for r in rows:
        by_net.setdefault(r["network"], []).append(r)
    lines = []
    for net, rs in sorted(by_net.items()):
        speed = max(float(r["speedup"]) for r in rs)
        saving = max(float(r["saving_pct"]) for r in rs)
        conv = convergence_count(rs)
        conv_txt = f"N={conv}" if conv is not None else "n/a"
        lines.append(f"{net}: max speedup {speed:.1f}x, max saving {saving:.0f}%, per-node speed converges from {conv_txt}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    rows = []
    header = None
    for path in args.inputs:
        part = read_sweep_csv(path)
        cols = tuple(part[0].keys()) if part else tuple(REPORT_CSV_HEADER)
        header = header or cols
        if cols != header:
            raise ValidationError(f"{path}: column layout differs from {args.inputs[0]}", str(path))
        rows += part
    header = header or tuple(REPORT_CSV_HEADER)
    rows.sort(key=lambda r: (r["network"], int(r["n_csds"])))
    text = _csv_text(header, [[r[c] for c in header] for r in rows])
    summary = summarize(rows) if rows else "no rows\n"
    if args.out:
        _write_text(args.out, text)
        _write_text(str(args.out) + ".summary.txt", summary)
    else:
        sys.stdout.write(text)
    sys.stdout.write(summary) if args.out else sys.stderr.write(summary)
    if args.figures and rows:
        from .plotting import render_figures

        render_figures(rows, args.figures)
    return EX_OK


# ---------------------------------------------------------------- parser


def _override_help() -> str:
    keys = override_keys(default_settings(fixtures.cluster()))
    return "override a setting, KEY=VALUE (repeatable). Known keys: " + ", ".join(keys)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csdtrain", description="Batch tuning, partitioning and simulation for host + CSD training clusters.")
    parser.add_argument("--version", action="version", version=f"csdtrain {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, cluster=True, out=True):
        if cluster:
            p.add_argument("--cluster", help="cluster spec JSON (default: shipped 24-CSD server)")
            p.add_argument("--bench", help="benchmark CSV/JSON whose curves are merged into the cluster")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help=_override_help())
        p.add_argument("--seed", type=int, help="top-level seed (default 0)")
        p.add_argument("--replay", help="re-run with the manifest embedded in a previous artifact")
        if out:
            p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("bench-import", help="validate benchmark records and fit throughput curves")
    p.add_argument("--bench", help="benchmark CSV or JSON (required unless --replay supplies it)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--cluster", help="cluster template to attach the curves to")
    p.add_argument("--out")
    p.add_argument("--replay")
    p.set_defaults(func=cmd_bench_import, set=None, seed=None)

    p = sub.add_parser("tune", help="choose per-node batch sizes")
    common(p)
    p.add_argument("--network", default="mobilenetv2", help="shipped network name or descriptor JSON")
    p.add_argument("--n-csds", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("partition", help="assign dataset samples so every node runs the same steps")
    common(p)
    p.add_argument("--tune", help="tune output JSON (required unless --replay supplies it)")
    p.add_argument("--dataset", help="dataset spec JSON (default: dataset.* settings split over CSDs)")
    p.add_argument("--samples-csv", help="also write node_id,source,sample_id rows here")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("simulate", help="simulate one epoch")
    common(p)
    p.add_argument("--network", default="mobilenetv2")
    p.add_argument("--tune")
    p.add_argument("--plan")
    p.add_argument("--n-csds", type=int, help="tune and partition internally for this many CSDs")
    p.add_argument("--calibration", help="calibration JSON to take sync/energy parameters from")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate a range of CSD counts")
    common(p)
    p.add_argument("--network", action="append", help="repeatable; default mobilenetv2")
    p.add_argument("--n-csds", default="0-24", help="comma list or lo-hi range")
    p.add_argument("--calibration")
    p.add_argument("--dataset")
    p.add_argument("--json", help="also write full reports as JSON")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit sync and power constants to target metrics")
    common(p)
    p.add_argument("--targets", help="targets JSON (default: shipped energy table)")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify-train", help="desk-scale distributed SGD equivalence checks")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help=_override_help())
    p.add_argument("--seed", type=int)
    p.add_argument("--replay")
    p.add_argument("--out", help="output directory (default: ./verify-train)")
    p.add_argument("--equivalence-cases", type=int, default=10)
    p.add_argument("--equivalence-steps", type=int, default=100)
    p.set_defaults(func=cmd_verify_train)

    p = sub.add_parser("report", help="merge sweep CSVs, summarise, and plot")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--figures")
    p.set_defaults(func=cmd_report, set=None, seed=None, replay=None)
    return parser


def _apply_replay(args) -> None:
    """Fill inputs and options from a previous artifact's manifest."""
    obj = _read_json(args.replay)
    manifest = obj.get("manifest", obj)
    if "effective_config" not in manifest:
        raise ValidationError(f"{args.replay}: no manifest found")
    if manifest.get("command") != args.command:
        raise ValidationError(f"{args.replay}: manifest is for {manifest.get('command')!r}, not {args.command!r}")
    for key, value in manifest.get("inputs", {}).items():
        setattr(args, key, value)
    for key, value in manifest.get("options", {}).items():
        if key == "n_csds" and isinstance(value, list):
            value = ",".join(str(v) for v in value)
        setattr(args, key.replace("-", "_"), value)
    args.replay_manifest = manifest


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
            raise CliError(EX_USAGE, "unknown_subcommand", f"unknown subcommand {argv[0]!r}", argv[0])
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        if not args.command:
            parser.print_help()
            return EX_USAGE
        args.replay_manifest = None
        if getattr(args, "replay", None):
            _apply_replay(args)
        for attr in ("cluster", "bench", "calibration", "dataset", "targets", "tune", "plan"):
            value = getattr(args, attr, None)
            if value:
                _require_input(value)
        return args.func(args)
    except CliError as exc:
        _report_error(exc.code, exc.message, exc.location)
        return exc.status
    except ValidationError as exc:
        _report_error(exc.code, exc.message, exc.location)
        return EX_VALIDATION


def _report_error(code: str, message: str, location: str | None) -> None:
    err = {"code": code, "message": message}
    if location is not None:
        err["location"] = location
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")


def main() -> None:
    sys.exit(run())
