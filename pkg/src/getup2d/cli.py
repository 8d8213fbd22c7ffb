"""Command-line entry point.

    getup2d gen-postures --kind supine --count 1000 --out runs/p
    getup2d train --stage 1 --task getup --out runs/g1
    getup2d slowdown runs/g1/candidates/cand_0.jsonl ref.jsonl --seconds 8
    getup2d train --stage 2 --reference ref.jsonl --postures p.jsonl --out runs/g2
    getup2d eval --checkpoint runs/g2/checkpoint_latest.bin --postures p.jsonl
    getup2d replay ref.jsonl
    getup2d bench

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
GETUP2D_SEED and GETUP2D_WORKERS override the respective config values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .config import ConfigError


def _add_common(p):
    p.add_argument("--config", help="JSON config file overlaying the defaults")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--workers", type=int, help="worker thread count")
    p.add_argument("--out", help="output directory")
    p.add_argument("--task", choices=("getup", "rollover"))


def _add_ablations(p):
    p.add_argument("--no-stage2", action="store_true")
    p.add_argument("--coarse-collision", action="store_true")
    p.add_argument("--no-posture-rand", action="store_true")
    p.add_argument("--hard-symmetry", action="store_true")
    p.add_argument("--single-stage", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="getup2d", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-postures", help="drop-and-settle posture dataset")
    _add_common(p)
    p.add_argument("--kind", choices=("supine", "prone", "both"), default="both")
    p.add_argument("--count", type=int, help="postures per kind")

    p = sub.add_parser("train", help="run one training stage")
    _add_common(p)
    _add_ablations(p)
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--reference", help="stage II reference trajectory file")
    p.add_argument("--postures", help="posture dataset file (stage II)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--max-iterations", type=int, help="cap iterations (smoke runs)")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("slowdown", help="time-stretch a trajectory")
    p.add_argument("traj_in")
    p.add_argument("traj_out")
    p.add_argument("--seconds", type=float, required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a posture split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--postures", required=True)
    p.add_argument("--split", choices=("heldout", "train"), default="heldout")
    p.add_argument("--reference", help="reference trajectory (stage II checkpoints)")
    p.add_argument("--stage", type=int, choices=(1, 2), default=2)
    p.add_argument("--latent", choices=("adapt", "privileged"), default="adapt")
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("replay", help="dump a trajectory frame by frame")
    p.add_argument("traj")
    p.add_argument("--out", help="write the dump here instead of stdout")

    p = sub.add_parser("bench", help="numba vs pure-numpy kernel benchmark")
    p.add_argument("--seconds", type=float, default=2.0,
                   help="simulated seconds per measurement")
    return ap


def _config_from_args(args) -> dict:
    overrides = {}
    env_seed = os.environ.get("GETUP2D_SEED")
    env_workers = os.environ.get("GETUP2D_WORKERS")
    if env_seed is not None:
        overrides["seed"] = int(env_seed)
    if env_workers is not None:
        overrides["workers"] = int(env_workers)
    for key in ("seed", "workers", "out", "task"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    ab = {}
    for key in ("no_stage2", "coarse_collision", "no_posture_rand",
                "hard_symmetry", "single_stage"):
        if getattr(args, key, False):
            ab[key] = True
    if ab:
        overrides["ablations"] = ab
    cfg = cfgmod.load_config(getattr(args, "config", None), overrides)
    return cfgmod.apply_ablations(cfg)


def _load_robot(cfg):
    from .model import default_robot, load_robot

    return default_robot() if cfg["robot"] == "default" else load_robot(cfg["robot"])


def cmd_gen_postures(args) -> int:
    from .postures import generate_postures, save_posture_set, split

    cfg = _config_from_args(args)
    robot = _load_robot(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    n = args.count or cfg["postures"]["count_per_kind"]
    kinds = ("supine", "prone") if args.kind == "both" else (args.kind,)
    summary = {}
    for kind in kinds:
        pset = generate_postures(robot, None, kind, n, seed=cfg["postures"]["seed"],
                                 cfg=cfgmod.sim_config(cfg), workers=cfg["workers"])
        pset = split(pset, cfg["postures"]["train_fraction"],
                     seed=cfg["postures"]["seed"])
        path = os.path.join(out, f"postures_{kind}.jsonl")
        save_posture_set(pset, path)
        summary[kind] = {
            "path": path,
            "count": len(pset),
            "settle_rate": float(np.mean([r.settled for r in pset.settle_reports])),
            "max_penetration": float(max(r.max_penetration
                                         for r in pset.settle_reports)),
            "train": pset.split_tags.count("train"),
            "heldout": pset.split_tags.count("heldout"),
        }
        print(f"{kind}: {len(pset)} postures -> {path} "
              f"(settle rate {summary[kind]['settle_rate']:.0%})")
    with open(os.path.join(out, "postures_summary.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return 0


def cmd_train(args) -> int:
    from .pipeline import (DiscoveryFailed, RunManifest, Trainer, file_sha256,
                           train_stage1, train_stage2)
    from .postures import load_posture_set
    from .ppo import DivergedTraining
    from .trajectory import load_trajectory

    cfg = _config_from_args(args)
    robot = _load_robot(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    sim_cfg = cfgmod.sim_config(cfg)
    ppo_cfg = cfgmod.ppo_config(cfg)
    manifest = RunManifest(config=cfg, seed=cfg["seed"])
    manifest.lineage["stage"] = args.stage
    manifest.lineage["ablations"] = {k: v for k, v in cfg["ablations"].items() if v}

    try:
        if args.stage == 1:
            scfg = cfgmod.stage_config(cfg, "I")
            if args.resume:
                trainer = Trainer(robot, scfg, ppo_cfg, sim_cfg, out,
                                  cfg["seed"], cfg["workers"])
                trainer.load_checkpoint(args.resume)
                trainer.train(max_iterations=args.max_iterations,
                              progress=not args.quiet)
                from .pipeline import extract_candidates

                candidates = extract_candidates(robot, trainer, scfg.n_candidates)
                os.makedirs(os.path.join(out, "candidates"), exist_ok=True)
                from .trajectory import save_trajectory

                for k, (traj, m_, e_) in enumerate(candidates):
                    save_trajectory(traj, os.path.join(out, "candidates",
                                                       f"cand_{k}.jsonl"))
            else:
                trainer, candidates = train_stage1(
                    robot, scfg, out, ppo_cfg, sim_cfg, cfg["seed"],
                    cfg["workers"], max_iterations=args.max_iterations,
                    progress=not args.quiet)
            manifest.metrics["candidates"] = [
                {"task_metric": m_, "energy": e_} for _, m_, e_ in candidates]
        else:
            if not args.reference:
                print("error: --stage 2 requires --reference", file=sys.stderr)
                return 2
            if not args.postures and cfg["stage2"]["posture_source"] == "dataset":
                print("error: --stage 2 requires --postures", file=sys.stderr)
                return 2
            reference = load_trajectory(args.reference)
            pset = load_posture_set(args.postures) if args.postures else None
            scfg = cfgmod.stage_config(cfg, "II")
            trainer = Trainer(robot, scfg, ppo_cfg, sim_cfg, out, cfg["seed"],
                              cfg["workers"], posture_set=pset, reference=reference)
            if args.resume:
                trainer.load_checkpoint(args.resume)
            trainer.train(max_iterations=args.max_iterations,
                          progress=not args.quiet)
            manifest.lineage["reference"] = {
                "path": args.reference, "sha256": file_sha256(args.reference)}
            if args.postures:
                manifest.lineage["postures"] = {
                    "path": args.postures, "sha256": file_sha256(args.postures)}
                train_ids = {i for i, _ in pset.subset("train")}
                used = trainer.used_posture_ids
                manifest.metrics["posture_audit"] = {
                    "train_only": bool(used <= train_ids),
                    "n_unique_used": len(used),
                }
    except DiscoveryFailed as exc:
        print(f"discovery failed: {exc} (curves: {exc.log_path})", file=sys.stderr)
        manifest.metrics["failure"] = str(exc)
        manifest.save(os.path.join(out, "manifest.json"))
        return 1
    except DivergedTraining as exc:
        print(f"training diverged: {exc}; last good checkpoint: "
              f"{exc.last_good_checkpoint}", file=sys.stderr)
        manifest.metrics["failure"] = str(exc)
        manifest.metrics["last_good_checkpoint"] = exc.last_good_checkpoint
        manifest.save(os.path.join(out, "manifest.json"))
        return 1

    ckpt = trainer.checkpoint_path()
    manifest.add_artifact("checkpoint", ckpt)
    manifest.add_artifact("train_log", os.path.join(out, "train_log.jsonl"))
    manifest.save(os.path.join(out, "manifest.json"))
    print(f"stage {args.stage} done: {ckpt}")
    return 0


def cmd_slowdown(args) -> int:
    from .trajectory import load_trajectory, save_trajectory, slowdown

    traj = load_trajectory(args.traj_in)
    if args.seconds < traj.duration:
        print(f"error: target {args.seconds} s is shorter than the source "
              f"({traj.duration} s)", file=sys.stderr)
        return 2
    out = slowdown(traj, args.seconds)
    save_trajectory(out, args.traj_out)
    print(f"{traj.n_frames} frames ({traj.duration} s) -> "
          f"{out.n_frames} frames ({out.duration} s)")
    return 0


def cmd_eval(args) -> int:
    from .envs import EnvConfig, NoiseConfig
    from .metrics import evaluate
    from .pipeline import load_actor_critic
    from .postures import load_posture_set
    from .trajectory import load_trajectory

    cfg = _config_from_args(args)
    if not os.path.exists(args.checkpoint):
        print(f"error: checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 2
    robot = _load_robot(cfg)
    ac, meta = load_actor_critic(args.checkpoint)
    pset = load_posture_set(args.postures)
    reference = load_trajectory(args.reference) if args.reference else None
    stage = "II" if args.stage == 2 else "I"
    if stage == "II" and reference is None:
        print("error: stage 2 evaluation needs --reference", file=sys.stderr)
        return 2
    ecfg = cfgmod.eval_config(cfg)
    if args.episodes:
        ecfg.episodes = args.episodes
    scfg = cfgmod.stage_config(cfg, stage)
    env_cfg = EnvConfig(
        task=cfg["task"], stage=stage, fidelity="full",
        posture_source="canonical", terrains=tuple(scfg.terrains),
        randomize_dynamics=scfg.randomize_dynamics,
        noise=NoiseConfig(enabled=scfg.obs_noise),
        symmetry_mode=scfg.symmetry_mode,
        episode_seconds=scfg.episode_seconds,
    )
    from .pipeline import reward_config_for

    report = evaluate(ac, robot, pset, env_cfg, ecfg,
                      sim_cfg=cfgmod.sim_config(cfg),
                      reward_cfg=reward_config_for(scfg, 1.0),
                      reference=reference, latent=args.latent,
                      workers=cfg["workers"], split_tag=args.split)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "eval_report.json"), "w") as f:
        f.write(report.to_json())
    table = report.to_table()
    with open(os.path.join(out, "eval_report.txt"), "w") as f:
        f.write(table + "\n")
    print(table)
    return 0


def cmd_replay(args) -> int:
    from .trajectory import load_trajectory

    traj = load_trajectory(args.traj)
    lines = [f"# {traj.n_frames} frames at 50 Hz ({traj.duration:.2f} s); "
             f"provenance: {json.dumps(traj.provenance)}"]
    for i in range(traj.n_frames):
        lines.append(
            f"t={i / 50.0:7.3f} h_head={traj.h_head[i]:6.3f} "
            f"base=({traj.base_pos[i, 0]:+.3f},{traj.base_pos[i, 1]:.3f}) "
            f"pitch={traj.base_pitch[i]:+.3f} "
            f"q=[{' '.join(f'{v:+.2f}' for v in traj.q[i])}] "
            f"F=({traj.f_feet[i, 0]:6.1f},{traj.f_feet[i, 1]:6.1f})"
        )
    # head-height profile, 60 columns wide
    lines.append("")
    lines.append("head height profile:")
    h = traj.h_head
    hmax = max(float(h.max()), 1e-6)
    width = 60
    idx = np.linspace(0, traj.n_frames - 1, width).astype(int)
    for level in range(10, 0, -1):
        thresh = hmax * level / 10
        row = "".join("#" if h[i] >= thresh else " " for i in idx)
        lines.append(f"{thresh:5.2f} |{row}")
    lines.append("      +" + "-" * width)
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    run_benchmark(seconds=args.seconds)
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        handler = {
            "gen-postures": cmd_gen_postures,
            "train": cmd_train,
            "slowdown": cmd_slowdown,
            "eval": cmd_eval,
            "replay": cmd_replay,
            "bench": cmd_bench,
        }[args.command]
        return handler(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
