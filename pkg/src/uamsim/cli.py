"""Command-line entry point: world generation, training, evaluation,
rendering, reward plotting, and the environment server.

Exit codes: 0 success, 2 usage/config/parse errors, 3 numerical divergence.
"""

import argparse
import os
import sys

from . import __version__
from .config import load_env_config, load_run_config
from .env import EnvConfig, obs_dim
from .errors import GenerationFailed, NumericalDivergence, ProtocolError
from .server import ServeConfig, serve
from .train import evaluate_policy, load_checkpoint, train
from .trajectory import read_trajectory, write_trajectory
from .viz import render_reward_curve, render_topdown, export_scene
from .world import GenConfig, generate_world, load_world, save_world, validate_world


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uamsim",
                                description="Urban aerial mobility RL simulator")
    p.add_argument("--version", action="version", version=f"uamsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-world", help="write a procedural world JSON")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--buildings", type=int, default=10)
    g.add_argument("--out", required=True)
    g.add_argument("--extent", type=float, default=100.0,
                   help="horizontal bounds size (x and y), meters")
    g.add_argument("--extent-z", type=float, default=60.0)
    g.add_argument("--height-min", type=float, default=10.0)
    g.add_argument("--height-max", type=float, default=40.0)
    g.add_argument("--footprint-min", type=float, default=4.0)
    g.add_argument("--footprint-max", type=float, default=12.0)
    g.add_argument("--spawn-radius", type=float, default=2.0)
    g.add_argument("--goal-radius", type=float, default=5.0)
    g.set_defaults(func=_cmd_generate_world)

    t = sub.add_parser("train", help="train a policy from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="roll evaluation episodes from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--world", required=True)
    e.add_argument("--episodes", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--deterministic", action="store_true",
                   help="use the policy mean instead of sampling")
    e.add_argument("--out-dir", default=".",
                   help="where per-episode trajectory CSVs are written")
    e.add_argument("--config", default=None,
                   help="optional config file supplying the [env] section")
    e.set_defaults(func=_cmd_evaluate)

    r = sub.add_parser("render", help="render a trajectory over a world as SVG")
    r.add_argument("--trajectory", required=True)
    r.add_argument("--world", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--snapshots", type=int, default=8,
                   help="number of time-fraction markers (N -> fractions k/N)")
    r.add_argument("--obj", default=None,
                   help="optionally also export a 3D OBJ scene to this path")
    r.set_defaults(func=_cmd_render)

    m = sub.add_parser("plot-rewards", help="render the metrics reward curve as SVG")
    m.add_argument("--metrics", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--window", type=int, default=10)
    m.set_defaults(func=_cmd_plot_rewards)

    s = sub.add_parser("serve", help="host an environment batch over TCP")
    s.add_argument("--port", type=int, default=9000)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--world", required=True)
    s.add_argument("--n-envs", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", default=None,
                   help="optional config file supplying the [env] section")
    s.set_defaults(func=_cmd_serve)
    return p


def _cmd_generate_world(args) -> int:
    gen = GenConfig(n_buildings=args.buildings, extent_x=args.extent,
                    extent_y=args.extent, extent_z=args.extent_z,
                    height_min=args.height_min, height_max=args.height_max,
                    footprint_min=args.footprint_min, footprint_max=args.footprint_max,
                    spawn_radius=args.spawn_radius, goal_radius=args.goal_radius)
    world = generate_world(gen, args.seed)
    validate_world(world)
    save_world(world, args.out)
    print(f"wrote {args.out} ({len(world.buildings)} buildings, seed {args.seed})")
    return 0


def _resolve_world(run_cfg):
    if run_cfg.world_file:
        return load_world(run_cfg.world_file)
    return generate_world(run_cfg.gen, run_cfg.run.seed)


def _cmd_train(args) -> int:
    run_cfg = load_run_config(args.config)
    world = _resolve_world(run_cfg)
    out_dir = run_cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    save_world(world, os.path.join(out_dir, "world.json"))
    log = None if args.quiet else print
    artifacts = train(world, run_cfg.env, run_cfg.ppo, run_cfg.run.seed,
                      out_dir, checkpoint_every=run_cfg.run.checkpoint_every,
                      n_workers=run_cfg.run.n_workers, log=log)
    write_trajectory(artifacts.eval_trajectory,
                     os.path.join(out_dir, "eval_trajectory.csv"))
    print(f"trained {artifacts.metrics[-1].env_steps if artifacts.metrics else 0} "
          f"env steps; artifacts in {out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    params, hyper, _, _ = load_checkpoint(args.checkpoint)
    env_cfg = load_env_config(args.config) if args.config else EnvConfig()
    if obs_dim(env_cfg) != params.obs_dim:
        print(f"error: checkpoint obs_dim {params.obs_dim} does not match the "
              f"environment's {obs_dim(env_cfg)}", file=sys.stderr)
        return 2
    world = load_world(args.world)
    summary, trajectories = evaluate_policy(
        params, world, env_cfg, args.episodes, args.seed,
        deterministic=args.deterministic, explore_eps=hyper.explore_eps)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, records in enumerate(trajectories):
        write_trajectory(records, os.path.join(args.out_dir, f"trajectory_{i:03d}.csv"))
    if args.episodes:
        print(f"episodes={summary['episodes']} goal_rate={summary['goal_rate']:.3f} "
              f"collision_rate={summary['collision_rate']:.3f} "
              f"timeout_rate={summary['timeout_rate']:.3f} "
              f"mean_reward={summary['mean_reward']:.3f}")
    else:
        print("episodes=0")
    return 0


def _cmd_render(args) -> int:
    world = load_world(args.world)
    records = read_trajectory(args.trajectory)
    fractions = [i / args.snapshots for i in range(args.snapshots + 1)]
    svg = render_topdown(world, records, snapshot_fractions=fractions)
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"wrote {args.out}")
    if args.obj:
        export_scene(world, records, args.obj)
        print(f"wrote {args.obj}")
    return 0


def _cmd_plot_rewards(args) -> int:
    svg = render_reward_curve(args.metrics, window=args.window)
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    world = load_world(args.world)
    env_cfg = load_env_config(args.config) if args.config else EnvConfig()
    cfg = ServeConfig(world=world, env_cfg=env_cfg, host=args.host,
                      port=args.port, n_envs=args.n_envs, master_seed=args.seed)
    serve(cfg, ready=lambda port: print(f"listening on {args.host}:{port}", flush=True))
    print("session ended")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalDivergence as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, GenerationFailed, ProtocolError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
