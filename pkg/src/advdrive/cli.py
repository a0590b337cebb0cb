"""Command-line entry point.

One binary, subcommands for the whole pipeline:

    advdrive make-assets   dataset + built-in maps + seed scenarios
    advdrive train         train a zoo model, write an ADVW weight file
    advdrive run           one closed-loop episode (SIL or HIL)
    advdrive attack-eval   clean-vs-attacked accuracy table
    advdrive patch-opt     optimize a physical patch texture with EOT
    advdrive evolve        adversarial scenario evolution
    advdrive replay        verify a recorded episode
    advdrive aggregate     group records into a comparison table
    advdrive serve         interactive session server (console protocol)
    advdrive executor      reference HIL executor (lock-step TCP)

Config precedence: flags > environment (ADVDRIVE_<FLAG>) > --config JSON file
> built-in defaults. The effective config (and its digest) is echoed into
every artifact header; created_at is the only wall-clock field.

Exit codes: 0 success, 1 evaluation failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
ENV_PREFIX = "ADVDRIVE_"


class CliError(Exception):
    """Bad arguments or configuration (exit 2)."""


class EvalFailure(Exception):
    """The evaluation itself failed (exit 1)."""


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def resolve_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > env > config file > defaults (flags parse with default=None)."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None) or os.environ.get(
        ENV_PREFIX + "CONFIG"
    )
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as f:
                file_cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CliError(f"cannot read config file {config_path}: {e}") from e
        for key, value in file_cfg.items():
            if key in merged:
                merged[key] = value
    for key in defaults:
        env_val = os.environ.get(ENV_PREFIX + key.upper())
        if env_val is not None:
            current = defaults[key]
            if isinstance(current, bool):
                merged[key] = env_val.lower() in ("1", "true", "yes")
            elif isinstance(current, int) and not isinstance(current, bool):
                merged[key] = int(env_val)
            elif isinstance(current, float):
                merged[key] = float(env_val)
            else:
                merged[key] = env_val
    for key in defaults:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    return merged


def config_header(cfg: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "config_digest": hashlib.sha256(_canon(cfg).encode()).hexdigest(),
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# --- subcommands -----------------------------------------------------------------

def cmd_make_assets(args) -> int:
    from .dataset import dump_dataset, synthesize_dataset
    from .maps import write_builtin_maps
    from .scenario import BUILTIN_SCENARIOS, save_scenario

    cfg = resolve_config(args, {"seed": 7, "out": "assets", "n_frames": 400})
    out = Path(cfg["out"])
    written = write_builtin_maps(out / "maps")
    scen_dir = out / "scenarios"
    scen_dir.mkdir(parents=True, exist_ok=True)
    for name, builder in sorted(BUILTIN_SCENARIOS.items()):
        save_scenario(builder(), scen_dir / f"{name}.scenario.json")
    for task, sub in (("obstacle_classifier", "classifier"),
                      ("lane_regressor", "regressor")):
        ds = synthesize_dataset(cfg["n_frames"], cfg["seed"], task)
        dump_dataset(ds, out / "dataset" / sub)
    _write_json(out / "assets.json", {
        **config_header(cfg),
        "maps": [p.name for p in written],
        "scenarios": sorted(BUILTIN_SCENARIOS),
        "dataset_frames_per_task": cfg["n_frames"],
    })
    print(f"assets written to {out}")
    return 0


def cmd_train(args) -> int:
    from .dataset import stack_dataset, synthesize_dataset
    from .weights import save_weights
    from .zoo import TrainingDivergedError, build_model, train

    cfg = resolve_config(args, {
        "task": "obstacle_classifier", "n": 2000, "epochs": 12, "lr": 0.07,
        "batch_size": 16, "seed": 11, "data_seed": 7, "model_seed": 3,
        "out": "model.advw",
    })
    ds = synthesize_dataset(cfg["n"], cfg["data_seed"], cfg["task"])
    frames, labels = stack_dataset(ds)
    model = build_model(cfg["task"], seed=cfg["model_seed"])
    try:
        report = train(model, frames, labels, epochs=cfg["epochs"], lr=cfg["lr"],
                       seed=cfg["seed"], batch_size=cfg["batch_size"])
    except TrainingDivergedError as e:
        raise EvalFailure(f"training diverged: {e}") from e
    save_weights(model, cfg["out"])
    _write_json(Path(cfg["out"] + ".train.json"), {
        **config_header(cfg),
        "final_loss": report.final_loss,
        "final_metric": report.final_metric,
        "loss_curve": report.loss_curve,
    })
    metric_name = "accuracy" if cfg["task"] == "obstacle_classifier" else "mse"
    print(f"trained {cfg['task']}: {metric_name}={report.final_metric:.4f} "
          f"-> {cfg['out']}")
    return 0


def cmd_run(args) -> int:
    from .executor import ExecutorError
    from .harness import RunSpec, run_episode

    cfg = resolve_config(args, {
        "scenario": "cutin_benign", "stack": "route_follower", "executor": "sil",
        "seed": -1, "attack": "", "label": "", "out": "run.jsonl",
        "hil_timeout": 2.0,
    })
    attack = None
    if cfg["attack"] == "none":
        attack = "none"
    elif cfg["attack"]:
        from .attacks import AttackConfig

        with open(cfg["attack"], encoding="utf-8") as f:
            attack = AttackConfig.from_dict(json.load(f))
    header = config_header(cfg)
    spec = RunSpec(
        scenario=cfg["scenario"], stack=cfg["stack"], executor=cfg["executor"],
        seed=None if cfg["seed"] < 0 else cfg["seed"], attack=attack,
        label=cfg["label"] or None, out=cfg["out"],
        hil_timeout=cfg["hil_timeout"], config_digest=header["config_digest"],
    )
    try:
        record, metrics = run_episode(spec)
    except ExecutorError as e:
        raise EvalFailure(f"executor failed before the loop started: {e}") from e
    _write_json(Path(cfg["out"] + ".metrics.json"), {
        **header,
        "metrics": metrics.to_dict(),
        "termination": record.summary["termination"],
        "record_digest": record.digest(),
        "ticks": len(record.rows),
    })
    print(f"{record.summary['termination']} after {len(record.rows)} ticks; "
          f"metrics -> {cfg['out']}.metrics.json")
    if record.summary["termination"] == "truncated":
        raise EvalFailure(record.summary.get("truncation_error", "truncated"))
    return 0


def cmd_attack_eval(args) -> int:
    from .attacks import AttackConfig, attack_success_rate, run_attack
    from .dataset import stack_dataset, synthesize_dataset
    from .weights import load_weights
    from .zoo import evaluate

    cfg = resolve_config(args, {
        "weights": "model.advw", "n": 100, "methods": "fgsm,bim,pgd,mi_fgsm,random",
        "epsilon": 0.1, "alpha": 0.01, "steps": 20, "seed": 99,
        "out": "attack_eval",
    })
    model = load_weights(cfg["weights"])
    if model.task != "obstacle_classifier":
        raise CliError("attack-eval needs an obstacle classifier")
    ds = synthesize_dataset(cfg["n"], cfg["seed"], "obstacle_classifier")
    frames, labels = stack_dataset(ds)
    labels = labels.astype(int)
    clean_acc = evaluate(model, frames, labels)
    results = {"clean_accuracy": clean_acc, "methods": {}}
    for method in [m.strip() for m in cfg["methods"].split(",") if m.strip()]:
        acfg = AttackConfig(method=method, epsilon=cfg["epsilon"],
                            alpha=cfg["alpha"], steps=cfg["steps"],
                            mu=1.0 if method == "mi_fgsm" else 0.0,
                            random_start=method == "pgd", seed=cfg["seed"])
        adv = np.stack([
            run_attack(model, frames[i], int(labels[i]), acfg)
            for i in range(len(frames))
        ])
        adv_acc = evaluate(model, adv, labels)
        asr = attack_success_rate(
            model, [(frames[i], adv[i], int(labels[i])) for i in range(len(frames))]
        )
        results["methods"][method] = {"adv_accuracy": adv_acc,
                                      "attack_success_rate": asr}
        print(f"{method:10s} adv_acc={adv_acc:.3f} asr={asr:.3f}")
    print(f"{'clean':10s} acc={clean_acc:.3f}")
    out = Path(cfg["out"])
    _write_json(out / "attack_eval.json", {**config_header(cfg), **results})
    return 0


def cmd_patch_opt(args) -> int:
    from .harness import build_stack
    from .patch import (
        EotConfig,
        PatchSpec,
        noise_texture,
        optimize_patch,
        save_patch_texture,
    )
    from .nn import CLASS_NAMES
    from .scenario import get_scenario

    cfg = resolve_config(args, {
        "scenario": "cutin_benign", "weights": "model.advw", "agent": 0,
        "texture_size": 16, "steps": 40, "lr": 1.0, "eot_samples": 8,
        "seed": 0, "out": "patch_out",
    })
    scenario = get_scenario(cfg["scenario"])
    stack, _sid = build_stack(cfg["weights"], scenario.route)
    world = scenario.build_world()
    if not (0 <= cfg["agent"] < len(world.agents)):
        raise CliError(f"scenario has no agent {cfg['agent']}")
    st = world.agents[cfg["agent"]].state
    rect = (0.0, 0.0, 0.8 * st.length, 0.8 * st.width)
    init = PatchSpec(texture=noise_texture(cfg["texture_size"],
                                           cfg["texture_size"], cfg["seed"]),
                     agent_index=cfg["agent"], rect=rect)
    label = CLASS_NAMES.index(st.class_id)
    result = optimize_patch(stack.model, world, init, label,
                            EotConfig(n_samples=cfg["eot_samples"],
                                      seed=cfg["seed"]),
                            steps=cfg["steps"], lr=cfg["lr"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_patch_texture(result.patch, out / "patch.ppm")
    with open(out / "loss_curve.jsonl", "w", encoding="utf-8") as f:
        for i, value in enumerate(result.loss_curve):
            f.write(json.dumps({"step": i, "mean_eot_loss": value}) + "\n")
    _write_json(out / "patch_opt.json", {
        **config_header(cfg),
        "rect": list(rect),
        "label": label,
        "loss_init": result.loss_curve[0],
        "loss_final": result.loss_curve[-1],
    })
    print(f"patch optimized: mean EOT loss {result.loss_curve[0]:.4f} -> "
          f"{result.loss_curve[-1]:.4f}; texture -> {out / 'patch.ppm'}")
    return 0


def cmd_evolve(args) -> int:
    from .evolve import (
        DEFAULT_PROPOSER_TIMEOUT,
        PROPOSER_TIMEOUT_ENV,
        PROPOSER_URL_ENV,
        EvolutionConfig,
        evolve,
        write_lineage,
    )
    from .harness import build_stack
    from .scenario import get_scenario, save_scenario

    cfg = resolve_config(args, {
        "scenario": "cutin_benign", "stack": "route_follower",
        "iterations": 200, "seed": 0, "n_background": 1, "out": "evolved",
        "proposer_url": "", "proposer_timeout": 0.0,
    })
    proposer_url = cfg["proposer_url"] or os.environ.get(PROPOSER_URL_ENV) or None
    timeout = cfg["proposer_timeout"] or float(
        os.environ.get(PROPOSER_TIMEOUT_ENV, DEFAULT_PROPOSER_TIMEOUT)
    )
    scenario = get_scenario(cfg["scenario"])
    stack, _sid = build_stack(cfg["stack"], scenario.route)
    ecfg = EvolutionConfig(iterations=cfg["iterations"], seed=cfg["seed"],
                           n_background=cfg["n_background"])
    best, lineage = evolve(scenario, stack, ecfg, proposer_url=proposer_url)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(best, out / "evolved.scenario.json")
    write_lineage(lineage, out / "lineage.jsonl")
    accepted = [e for e in lineage if e["accepted"]]
    _write_json(out / "evolve.json", {
        **config_header(cfg),
        "evolution": ecfg.to_dict(),
        "baseline_objective": lineage[0]["objective"],
        "best_objective": accepted[-1]["objective"],
        "baseline_risk": lineage[0]["risk"],
        "best_risk": accepted[-1]["risk"],
        "candidates": len(lineage),
        "accepted": len(accepted),
    })
    print(f"evolved J {lineage[0]['objective']:.4f} -> "
          f"{accepted[-1]['objective']:.4f} over {cfg['iterations']} iterations "
          f"({len(accepted) - 1} accepted)")
    return 0


def cmd_replay(args) -> int:
    from .harness import replay
    from .record import EpisodeRecord

    cfg = resolve_config(args, {"record": "run.jsonl", "frames": ""})
    record = EpisodeRecord.load(cfg["record"])
    report = replay(record, frames_dir=cfg["frames"] or None)
    print(json.dumps({**config_header(cfg), "replay": report.to_dict()},
                     indent=2, sort_keys=True))
    if not report.match:
        raise EvalFailure(
            f"divergence at tick {report.first_divergence_tick}"
        )
    return 0


def cmd_aggregate(args) -> int:
    from .harness import aggregate, format_table
    from .record import EpisodeRecord

    cfg = resolve_config(args, {"out": ""})
    paths = args.records
    if not paths:
        raise CliError("aggregate needs at least one record file")
    records = [EpisodeRecord.load(p) for p in paths]
    agg = aggregate(records)
    print(format_table(agg))
    if cfg["out"]:
        _write_json(Path(cfg["out"]), {**config_header(cfg), **agg})
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .serve import create_app

    cfg = resolve_config(args, {
        "port": 8700, "host": "127.0.0.1", "scenario": "cutin_benign",
        "stack": "route_follower", "out": "runs", "static": "", "tick_hz": 20.0,
    })
    app = create_app(default_scenario=cfg["scenario"],
                     default_stack=cfg["stack"], out_dir=cfg["out"],
                     static_dir=cfg["static"] or None,
                     default_tick_hz=cfg["tick_hz"])
    print(f"serving sessions on ws://{cfg['host']}:{cfg['port']}/ws")
    try:
        uvicorn.run(app, host=cfg["host"], port=cfg["port"], log_level="warning")
    except OSError as e:
        raise CliError(f"cannot bind {cfg['host']}:{cfg['port']}: {e}") from e
    return 0


def cmd_executor(args) -> int:
    from .executor import ReferenceExecutor

    cfg = resolve_config(args, {"port": 8800, "host": "127.0.0.1"})
    server = ReferenceExecutor(host=cfg["host"], port=cfg["port"])
    port = server.start()
    print(f"reference executor listening on {cfg['host']}:{port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.stop()
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advdrive",
                                description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON config file (same keys as flags)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("make-assets", help="write dataset, maps and scenarios")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--n-frames", dest="n_frames", type=int)
    sp.set_defaults(func=cmd_make_assets)

    sp = sub.add_parser("train", help="train a zoo model")
    sp.add_argument("--task", choices=["obstacle_classifier", "lane_regressor"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--data-seed", dest="data_seed", type=int)
    sp.add_argument("--model-seed", dest="model_seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="run one closed-loop episode")
    sp.add_argument("--scenario")
    sp.add_argument("--stack")
    sp.add_argument("--executor", help="sil or hil:HOST:PORT")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--attack", help="'none' or an AttackConfig JSON file")
    sp.add_argument("--label")
    sp.add_argument("--out")
    sp.add_argument("--hil-timeout", dest="hil_timeout", type=float)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("attack-eval", help="clean vs attacked accuracy")
    sp.add_argument("--weights")
    sp.add_argument("--n", type=int)
    sp.add_argument("--methods")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_attack_eval)

    sp = sub.add_parser("patch-opt", help="optimize a physical patch with EOT")
    sp.add_argument("--scenario")
    sp.add_argument("--weights")
    sp.add_argument("--agent", type=int)
    sp.add_argument("--texture-size", dest="texture_size", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--eot-samples", dest="eot_samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_patch_opt)

    sp = sub.add_parser("evolve", help="adversarial scenario evolution")
    sp.add_argument("--scenario")
    sp.add_argument("--stack")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n-background", dest="n_background", type=int)
    sp.add_argument("--out")
    sp.add_argument("--proposer-url", dest="proposer_url")
    sp.add_argument("--proposer-timeout", dest="proposer_timeout", type=float)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("replay", help="verify a recorded episode")
    sp.add_argument("--record")
    sp.add_argument("--frames", help="directory for per-tick PPM frames")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("aggregate", help="comparison table over records")
    sp.add_argument("records", nargs="*")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_aggregate)

    sp = sub.add_parser("serve", help="interactive session server")
    sp.add_argument("--port", type=int)
    sp.add_argument("--host")
    sp.add_argument("--scenario")
    sp.add_argument("--stack")
    sp.add_argument("--out")
    sp.add_argument("--static", help="directory with the built console")
    sp.add_argument("--tick-hz", dest="tick_hz", type=float)
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("executor", help="reference HIL executor")
    sp.add_argument("--port", type=int)
    sp.add_argument("--host")
    sp.set_defaults(func=cmd_executor)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except EvalFailure as e:
        print(f"evaluation failure: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
