"""Operator entry point.

Subcommands: run (one episode), bench (scenario x variant matrix), annotate
(one marked camera frame), gen-weights (seeded random generator weights),
replay (re-score a saved episode log), validate (scenario schema check).

Exit codes: 0 success, 1 usage error, 2 validation or parse error,
3 backend unavailable.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from ._draw import save_png
from .evaluation import (
    NON_REMOTE_VARIANTS,
    UnknownVariant,
    emit_report,
    format_report_csv,
    format_report_table,
    run_benchmark,
    score_episode_frames,
)
from .pipeline import EpisodeConfig, EpisodeLog, make_backend, run_episode
from .selection import (
    BackendUnavailable,
    FixtureExhausted,
    NothingVisible,
    RemoteConfig,
    annotate_image,
    build_marker_set,
    sort_and_number,
)
from .trajgen import GeneratorConfig, random_weights, save_weights
from .world import (
    BUNDLED_SCENARIOS,
    ParseError,
    TraversabilityView,
    ValidationError,
    bundled_scenario_path,
    load_scenario,
    render_camera_image,
    simulate_lidar,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_BACKEND = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def resolve_scenario(token: str) -> Path:
    if token in BUNDLED_SCENARIOS:
        return bundled_scenario_path(token)
    return Path(token)


def _add_common_run_flags(p):
    p.add_argument("--scenario", required=True,
                   help="bundled name (%s) or a scenario file path" % ", ".join(BUNDLED_SCENARIOS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=8, help="candidates per generation round")
    p.add_argument("--generator", choices=["sampler", "latent"], default="sampler")
    p.add_argument("--weights", default=None, help="generator weights file (latent backend)")


def build_parser() -> _Parser:
    parser = _Parser(prog="marknav", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one closed-loop episode")
    _add_common_run_flags(run_p)
    run_p.add_argument("--backend", choices=["oracle", "replay", "remote"], default="oracle")
    run_p.add_argument("--fixture", default=None, help="replay fixture file")
    run_p.add_argument("--endpoint", default=None, help="remote chat-completion URL")
    run_p.add_argument("--model", default="gpt-4o", help="remote model name")
    run_p.add_argument("--d-t", type=float, default=1.0, dest="d_t",
                       help="Hausdorff dedup threshold in meters")
    run_p.add_argument("--max-steps", type=int, default=3000)
    run_p.add_argument("--out", default="episode_out", help="directory for the log and frames")

    bench_p = sub.add_parser("bench", help="run the benchmark matrix")
    bench_p.add_argument("--scenarios", default=",".join(BUNDLED_SCENARIOS))
    bench_p.add_argument("--variants", default=",".join(NON_REMOTE_VARIANTS))
    bench_p.add_argument("--episodes", type=int, default=5)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--max-steps", type=int, default=600)
    bench_p.add_argument("--endpoint", default=None)
    bench_p.add_argument("--model", default="gpt-4o")
    bench_p.add_argument("--format", choices=["table", "delimited"], default="table")
    bench_p.add_argument("--out", default=None, help="directory for report.txt and report.csv")

    ann_p = sub.add_parser("annotate", help="write one annotated camera frame")
    _add_common_run_flags(ann_p)
    ann_p.add_argument("--d-t", type=float, default=1.0, dest="d_t")
    ann_p.add_argument("--pose", default=None,
                       help="x,y,heading override (defaults to the scenario start)")
    ann_p.add_argument("--out", default="annotated.png")

    gw_p = sub.add_parser("gen-weights", help="emit seeded random generator weights")
    gw_p.add_argument("--seed", type=int, default=0)
    gw_p.add_argument("--k", type=int, default=8)
    gw_p.add_argument("--m", type=int, default=16)
    gw_p.add_argument("--out", default="weights.json")

    rp_p = sub.add_parser("replay", help="re-score a saved episode log")
    rp_p.add_argument("--log", required=True)
    rp_p.add_argument("--scenario", required=True)

    val_p = sub.add_parser("validate", help="validate a scenario file")
    val_p.add_argument("--scenario", required=True)

    return parser


def _generator_config(args) -> GeneratorConfig:
    backend = "geometric-sampler" if args.generator == "sampler" else "latent-decoder"
    return GeneratorConfig(backend=backend, K=args.k, seed=args.seed)


def _load_weights_if_any(args):
    if getattr(args, "weights", None) is None:
        return None
    from .trajgen import load_weights
    return load_weights(args.weights)


def cmd_run(args) -> int:
    scenario = load_scenario(resolve_scenario(args.scenario))
    remote = RemoteConfig(endpoint=args.endpoint, model=args.model) if args.endpoint else None
    if args.backend == "remote" and remote is None:
        raise UsageError("--backend remote needs --endpoint")
    if args.backend == "replay" and args.fixture is None:
        raise UsageError("--backend replay needs --fixture")
    backend = make_backend(args.backend, fixture_path=args.fixture, remote_config=remote)
    out_dir = Path(args.out)
    cfg = EpisodeConfig(
        backend=args.backend, generator=_generator_config(args), d_t=args.d_t,
        max_steps=args.max_steps, save_frames=True, out_dir=str(out_dir),
    )
    log = run_episode(scenario, cfg, backend=backend, weights=_load_weights_if_any(args))
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "episode.jsonl"
    log.save(log_path)
    print(f"outcome={log.outcome} steps={len(log.executed_path) - 1} "
          f"frames={len(log.frames)} log={log_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    names = [t for t in args.scenarios.split(",") if t]
    variants = [t for t in args.variants.split(",") if t]
    scenarios = [load_scenario(resolve_scenario(n)) for n in names]
    remote = RemoteConfig(endpoint=args.endpoint, model=args.model) if args.endpoint else None
    base = EpisodeConfig(max_steps=args.max_steps)
    report = run_benchmark(scenarios, variants, episodes_per_cell=args.episodes,
                           seed=args.seed, base_config=base, remote_config=remote)
    text = format_report_table(report) if args.format == "table" else format_report_csv(report)
    sys.stdout.write(text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        emit_report(report, out_dir / "report.txt", "table")
        emit_report(report, out_dir / "report.csv", "delimited")
    return EXIT_OK


def cmd_annotate(args) -> int:
    scenario = load_scenario(resolve_scenario(args.scenario))
    from .geometry import Pose2D, world_to_robot
    from .selection import CandidatePool, dedup_representatives, update_pool
    from .trajgen import generate_candidates
    from .world import RobotState

    pose = scenario.start
    if args.pose:
        parts = [float(v) for v in args.pose.split(",")]
        if len(parts) != 3:
            raise UsageError("--pose needs x,y,heading")
        pose = Pose2D(*parts)
    view = TraversabilityView.from_grid(scenario.grid)
    state = RobotState(pose=pose)
    scan = simulate_lidar(scenario.grid, pose)
    batch = generate_candidates(scan, state, view, _generator_config(args),
                                _load_weights_if_any(args))
    pool = update_pool(CandidatePool(), batch, pose)
    cands = dedup_representatives(pool, args.d_t)
    goal_robot = world_to_robot(scenario.goal, pose)[0]
    numbered = sort_and_number(cands, goal_robot)
    markers = build_marker_set(numbered, scenario.camera)
    image = render_camera_image(scenario.grid, pose, scenario.camera)
    annotated = annotate_image(image, markers, scenario.camera)
    save_png(annotated, args.out)
    print(f"wrote {args.out} with {len(markers.items)} markers")
    return EXIT_OK


def cmd_gen_weights(args) -> int:
    weights = random_weights(args.seed, K=args.k, M=args.m)
    save_weights(weights, args.out)
    print(f"wrote {args.out} (D={weights.D} L={weights.L} K={weights.K} M={weights.M})")
    return EXIT_OK


def cmd_replay(args) -> int:
    scenario = load_scenario(resolve_scenario(args.scenario))
    log = EpisodeLog.from_jsonl(args.log)
    scores = score_episode_frames(log, scenario)
    if not scores:
        print("log has no frames to score")
        return EXIT_OK
    frac = float(np.mean([s.traversability_fraction for s in scores]))
    strict = float(np.mean([s.traversability_strict for s in scores]))
    frechet = float(np.mean([s.frechet_to_reference for s in scores]))
    print(f"frames={len(scores)} traversability={frac * 100:.2f}% "
          f"strict={strict * 100:.2f}% frechet={frechet:.3f}m outcome={log.outcome}")
    return EXIT_OK


def cmd_validate(args) -> int:
    load_scenario(resolve_scenario(args.scenario))
    print(f"{args.scenario}: OK")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "annotate": cmd_annotate,
    "gen-weights": cmd_gen_weights,
    "replay": cmd_replay,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, UnknownVariant, NothingVisible,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BackendUnavailable, FixtureExhausted) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
