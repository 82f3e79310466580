"""Command-line front end.

Every command writes into its own ``--out`` directory and leaves a
``manifest.json`` there describing the resolved configuration and input
digests; ``coreplace rerun <manifest>`` replays it.

Exit codes: 0 ok, 1 usage, 2 validation, 3 internal.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .mesh import (
    Mesh,
    PlacementError,
    communication_cost,
    directional_loads,
    hop_histogram,
    load_placement,
    save_placement,
    write_heatmap,
)
from .placement import ENGINES, EngineConfig, place, zigzag_coords
from .rl import RLConfig, save_checkpoint, train
from .sim import PIPELINES, SimConfig, export, simulate
from .taskgraph import (
    MODES,
    HardwareProfile,
    ModelSpecError,
    TaskGraph,
    build_taskgraph,
    load_model_spec,
    load_taskgraph,
    partition_model,
    save_taskgraph,
)
from .mesh import cost_from_coords

log = logging.getLogger("coreplace")

HW_ENV = "COREPLACE_HW"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_manifest(out: Path, command: str, argv: list[str], config: dict, inputs: list[Path], outputs: list[str]):
    manifest = {
        "tool": "coreplace",
        "version": __version__,
        "command": command,
        "argv": argv,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(out / "manifest.json", manifest)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return p


def _hardware(args) -> HardwareProfile:
    base: dict = {}
    hw_path = args.hw or os.environ.get(HW_ENV)
    if hw_path:
        base = json.loads(_require_file(hw_path).read_text())
    overrides = {
        "macs_per_core": args.macs,
        "sram_bytes_per_core": args.sram,
        "link_bandwidth": args.link_bw,
        "offchip_bandwidth": args.offchip_bw,
        "activation_reserve": args.reserve,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return HardwareProfile.from_dict(base)


def _model_path(arg: str) -> Path:
    p = Path(arg)
    if p.is_file():
        return p
    bundled = Path(__file__).parent / "models" / f"{arg}.json"
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"model spec not found: {arg}")


def _mesh_for(graph: TaskGraph, text: str) -> Mesh:
    mesh = Mesh.parse(text)
    if graph.n > mesh.n_cores:
        raise PlacementError(
            f"{graph.n} logical cores exceed the {mesh.n_cores} physical cores of a {mesh} mesh (need |A| <= |N|)"
        )
    return mesh


def _placement_metrics(graph: TaskGraph, placement, mesh: Mesh) -> dict:
    cost = communication_cost(graph, placement)
    zig = cost_from_coords(graph, zigzag_coords(graph.n, mesh))
    hh = hop_histogram(graph, placement)
    loads = directional_loads(graph, placement, mesh)
    return {
        "communication_cost": cost,
        "zigzag_cost": zig,
        "reduction_vs_zigzag_pct": 100.0 * (zig - cost) / zig if zig else 0.0,
        "hop_histogram": {str(k): v for k, v in hh["histogram"].items()},
        "mean_hops": hh["mean_hops"],
        "mean_hops_bytes": hh["mean_hops_bytes"],
        "max_forwarded_bytes": int(loads.per_core().max()),
        "n_nodes": graph.n,
        "mesh": [mesh.width, mesh.height],
        "mode": graph.mode,
    }


# --------------------------------------------------------------------------- commands


def cmd_partition(args, argv) -> None:
    model = _model_path(args.model)
    hw = _hardware(args)
    layers = load_model_spec(model)
    slices = partition_model(layers, hw, args.cores, args.mode)
    graph = build_taskgraph(slices, layers, args.mode, hw)
    out = _out_dir(args.out)
    save_taskgraph(graph, out / "taskgraph.json")
    config = {"cores": args.cores, "mode": args.mode, "hardware": hw.to_dict(), "model": str(model)}
    _write_manifest(out, "partition", argv, config, [model], ["taskgraph.json"])
    log.info("partitioned %d layers into %d slices -> %s", len(layers), len(slices), out / "taskgraph.json")


def cmd_place(args, argv) -> None:
    tg = _require_file(args.taskgraph)
    graph = load_taskgraph(tg)
    mesh = _mesh_for(graph, args.mesh)
    cfg = EngineConfig(engine=args.engine, seed=args.seed, iterations=args.iters)
    placement, trace = place(graph, mesh, cfg)
    out = _out_dir(args.out)
    save_placement(placement, out / "placement.json")
    metrics = _placement_metrics(graph, placement, mesh)
    metrics["engine"] = args.engine
    _write_json(out / "metrics.json", metrics)
    write_heatmap(directional_loads(graph, placement, mesh).per_core(), out / "heatmap.csv")
    outputs = ["placement.json", "metrics.json", "heatmap.csv"]
    if trace is not None:
        (out / "trace.csv").write_text("iteration,best_cost\n" + "".join(f"{i},{c}\n" for i, c in enumerate(trace)))
        outputs.append("trace.csv")
    config = {"engine": asdict(cfg), "mesh": str(mesh)}
    _write_manifest(out, "place", argv, config, [tg], outputs)


def cmd_train(args, argv) -> None:
    tg = _require_file(args.taskgraph)
    graph = load_taskgraph(tg)
    mesh = _mesh_for(graph, args.mesh)
    cfg = RLConfig(
        embed_dim=args.embed,
        hidden=args.hidden,
        clip_eps=args.clip_eps,
        batch_size=args.batch,
        lr=args.lr,
        ppo_epochs=args.ppo_epochs,
        grad_clip=args.grad_clip,
        episodes=args.episodes,
        sigma_min=args.sigma_min,
        optimizer=args.optimizer,
        actor=args.actor,
        normalize_advantage=args.normalize_advantage,
        pretrain_encoder=args.pretrain_encoder,
        seed=args.seed,
    )
    result = train(graph, mesh, cfg)
    out = _out_dir(args.out)
    save_placement(result.placement, out / "placement.json")
    save_checkpoint(result, out / "checkpoint.json")
    (out / "reward_curve.csv").write_text(result.curve_csv())
    metrics = _placement_metrics(graph, result.placement, mesh)
    metrics["engine"] = "rl"
    _write_json(out / "metrics.json", metrics)
    write_heatmap(directional_loads(graph, result.placement, mesh).per_core(), out / "heatmap.csv")
    config = {"rl": asdict(cfg), "mesh": str(mesh), "encoder_mode": result.encoder_mode}
    _write_manifest(
        out, "train", argv, config, [tg],
        ["placement.json", "checkpoint.json", "reward_curve.csv", "metrics.json", "heatmap.csv"],
    )
    log.info("best cost %d (zigzag %d)", result.best_cost, result.baseline_cost)


def cmd_simulate(args, argv) -> None:
    tg = _require_file(args.taskgraph)
    pl = _require_file(args.placement)
    graph = load_taskgraph(tg)
    placement = load_placement(pl)
    if set(placement.assign) != set(range(graph.n)):
        raise ModelSpecError(
            f"{pl}: placement covers {len(placement)} nodes but the task graph has {graph.n}"
        )
    mode = args.mode or graph.mode
    bw = args.bandwidth
    if bw is None:
        bw = (graph.hardware or {}).get("link_bandwidth", HardwareProfile().link_bandwidth)
    cfg = SimConfig(
        link_bandwidth=bw,
        pipeline=args.pipeline,
        mode=mode,
        batch_size=args.batch,
        tile_fraction=args.tile_fraction,
        chunk_bytes=args.chunk_bytes,
        clock_mhz=args.clock_mhz,
    )
    result = simulate(graph, placement, placement.mesh, cfg)
    out = _out_dir(args.out)
    export(result, out, args.bucket)
    _write_manifest(
        out, "simulate", argv, {"sim": asdict(cfg), "placement_path": str(pl.resolve())}, [tg, pl], ["sim_result.json", "waveform.csv", "heatmap.csv"]
    )


REPORT_COLUMNS = [
    "run",
    "engine",
    "mode",
    "communication_cost",
    "reduction_vs_zigzag_pct",
    "mean_hops",
    "mean_hops_bytes",
    "max_forwarded_bytes",
    "makespan",
    "throughput_per_kcycle",
    "pipeline",
]


def collect_report(runs_dir: Path) -> list[dict]:
    """Read-only scan of run directories.

    A simulation joins the placement run whose placement file it read (by
    resolved path), falling back to every run with an identical placement digest.
    """
    manifests = sorted(runs_dir.rglob("manifest.json"))
    placements: dict[str, dict] = {}  # run dir -> metrics
    sims: list[tuple[dict, dict]] = []
    for mpath in manifests:
        man = json.loads(mpath.read_text())
        run = mpath.parent
        if man.get("command") in ("place", "train"):
            metrics = json.loads((run / "metrics.json").read_text())
            placements[str(run.resolve())] = {
                "run": run.relative_to(runs_dir).as_posix(),
                "_digest": _sha256(run / "placement.json"),
                **metrics,
            }
        elif man.get("command") == "simulate":
            sims.append((man, json.loads((run / "sim_result.json").read_text())))
    rows = []
    matched: set[str] = set()
    for man, res in sims:
        src = man.get("config", {}).get("placement_path")
        if src is not None and str(Path(src).parent) in placements:
            bases = [placements[str(Path(src).parent)]]
        else:
            digests = set(man["inputs"].values())
            bases = [b for b in placements.values() if b["_digest"] in digests]
        for base in bases:
            matched.add(base["run"])
            rows.append({**base, "makespan": res["makespan"], "throughput_per_kcycle": res["throughput_per_kcycle"],
                         "pipeline": res.get("config", {}).get("pipeline", "")})
    for base in placements.values():
        if base["run"] not in matched:
            rows.append(dict(base))
    rows.sort(key=lambda r: (r.get("mode", ""), r["run"], r.get("pipeline", "")))
    return rows


def report_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in REPORT_COLUMNS})
    return buf.getvalue()


def cmd_report(args, argv) -> None:
    runs = Path(args.runs)
    if not runs.is_dir():
        raise FileNotFoundError(f"runs directory not found: {runs}")
    text = report_csv(collect_report(runs))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_rerun(args, argv) -> None:
    man = json.loads(_require_file(args.manifest).read_text())
    old = list(man["argv"])
    if "--out" in old:
        old[old.index("--out") + 1] = args.out
    else:
        old += ["--out", args.out]
    code = main(old)
    if code:
        raise RuntimeError(f"rerun exited with {code}")


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coreplace", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("partition", help="partition a model spec into a task graph")
    s.add_argument("model", help="model spec JSON or bundled model name (e.g. spike_resnet18)")
    s.add_argument("--cores", type=int, required=True)
    s.add_argument("--mode", choices=MODES, default="inference")
    s.add_argument("--hw", help=f"hardware profile JSON (default: ${HW_ENV})")
    s.add_argument("--macs", type=int)
    s.add_argument("--sram", type=int)
    s.add_argument("--link-bw", type=int)
    s.add_argument("--offchip-bw", type=int)
    s.add_argument("--reserve", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("place", help="run a baseline placement engine")
    s.add_argument("taskgraph")
    s.add_argument("--mesh", required=True, help="WxH, e.g. 4x8")
    s.add_argument("--engine", choices=ENGINES, default="zigzag")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_place)

    d = RLConfig()
    s = sub.add_parser("train", help="train the PPO placement policy")
    s.add_argument("taskgraph")
    s.add_argument("--mesh", required=True)
    s.add_argument("--episodes", type=int, default=d.episodes)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--batch", type=int, default=d.batch_size)
    s.add_argument("--lr", type=float, default=d.lr)
    s.add_argument("--clip-eps", type=float, default=d.clip_eps)
    s.add_argument("--ppo-epochs", type=int, default=d.ppo_epochs)
    s.add_argument("--grad-clip", type=float, default=d.grad_clip)
    s.add_argument("--sigma-min", type=float, default=d.sigma_min)
    s.add_argument("--embed", type=int, default=d.embed_dim)
    s.add_argument("--hidden", type=int, default=d.hidden)
    s.add_argument("--optimizer", choices=("sgd", "adam"), default=d.optimizer)
    s.add_argument("--actor", choices=("graph", "node"), default=d.actor)
    s.add_argument("--normalize-advantage", action="store_true")
    s.add_argument("--pretrain-encoder", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="simulate a placement on the NoC")
    s.add_argument("taskgraph")
    s.add_argument("placement")
    s.add_argument("--pipeline", choices=PIPELINES, default="layerwise")
    s.add_argument("--mode", choices=MODES, help="default: the task graph's mode")
    s.add_argument("--batch", type=int, default=8)
    s.add_argument("--bandwidth", type=int, help="link bytes/cycle (default: from the task graph's hardware)")
    s.add_argument("--tile-fraction", type=float, default=1 / 16)
    s.add_argument("--chunk-bytes", type=int, default=64)
    s.add_argument("--clock-mhz", type=float)
    s.add_argument("--bucket", type=int, help="waveform bucket width in cycles")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("report", help="aggregate run directories into a comparison CSV")
    s.add_argument("runs")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rerun)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (ModelSpecError, PlacementError, FileNotFoundError, ValueError, json.JSONDecodeError, KeyError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _fail(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
