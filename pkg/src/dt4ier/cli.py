"""Command-line entry point: ``dt4ier {gen-data,train,eval,sweep-rtg,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ModelConfig, WorldConfig
from .trajectory import ingest_log

logger = logging.getLogger("dt4ier")

LOSS_LOG = "loss_log.csv"


def _features_for(data: Path, manifest: str | None, required: bool):
    from .world import features_from_manifest, load_manifest, manifest_path_for

    path = Path(manifest) if manifest else manifest_path_for(data)
    if not path.exists():
        if required:
            raise SystemExit(f"user features needed but no manifest at {path}; "
                             "pass --manifest or set disable_balancer")
        return None, None
    m = load_manifest(path)
    return m, features_from_manifest(m)


def _trajectories(data: Path, config: ModelConfig):
    trajs = ingest_log(data, T=config.T, H=config.H, N=config.N)
    if not trajs:
        raise SystemExit(f"no trajectories in {data}")
    return trajs


def cmd_gen_data(args) -> int:
    from .world import SyntheticWorld

    config = WorldConfig.load(args.config) if args.config else WorldConfig().with_env_seed()
    manifest = SyntheticWorld(config).write(args.out)
    print(f"wrote {args.out} and {manifest}")
    return 0


def cmd_train(args) -> int:
    from .training import train

    config = ModelConfig.load(args.config) if args.config else ModelConfig().with_env_seed()
    if args.steps is not None:
        config = config.replace(max_steps=args.steps)
    data = Path(args.data)
    _, features = _features_for(data, args.manifest, required=not config.disable_balancer)
    trajs = _trajectories(data, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = train(config, trajs, features, out_dir=out, log_path=out / LOSS_LOG)
    last = ckpt.history[-1]
    print(f"trained {ckpt.step} steps on {len(trajs)} trajectories; final total={last['total']:.4f}; "
          f"checkpoint in {out}")
    return 0


def _load_eval_inputs(args):
    from .training import Checkpoint

    ckpt = Checkpoint.load(args.ckpt)
    model = ckpt.build_model()
    data = Path(args.data)
    manifest, features = _features_for(data, args.manifest, required=model.balancer is not None)
    world = None
    if args.mode == "free" and manifest is not None:
        from .world import world_from_manifest
        world = world_from_manifest(manifest)
    return model, _trajectories(data, model.config), features, world


def _rho(text: str):
    parts = [float(x) for x in text.split(",")]
    if len(parts) not in (1, 2):
        raise argparse.ArgumentTypeError("rho is one value or 'rho_s,rho_l'")
    return parts[0] if len(parts) == 1 else tuple(parts)


def cmd_eval(args) -> int:
    from .evaluation import evaluate, format_report, save_report

    model, trajs, features, world = _load_eval_inputs(args)
    report = evaluate(model, trajs, args.rho, features, k=args.k, mode=args.mode, world=world, seed=args.seed)
    save_report(report, args.out)
    print(format_report(report))
    return 0


def cmd_sweep(args) -> int:
    from .evaluation import rtg_sweep

    model, trajs, features, world = _load_eval_inputs(args)
    rhos = [float(x) for x in args.rhos.split(",")]
    out = Path(args.out)
    json_path = Path(args.json) if args.json else out.with_suffix(".json")
    rows = rtg_sweep(model, trajs, rhos, features, csv_path=out, json_path=json_path,
                     k=args.k, mode=args.mode, world=world, seed=args.seed)
    print(f"{'rho':>5}  " + "  ".join(f"{c:>8}" for c in rows[0] if c != "rho"))
    for r in rows:
        print(f"{r['rho']:>5.2f}  " + "  ".join(f"{v:>8.4f}" for c, v in r.items() if c != "rho"))
    return 0


def cmd_report(args) -> int:
    from .evaluation import format_report, load_report

    print(format_report(load_report(args.input)))
    return 0


def _eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ckpt", required=True, help="checkpoint directory or checkpoint.pt")
    p.add_argument("--data", required=True, help="session log (JSONL)")
    p.add_argument("--manifest", help="world manifest with user features (default: next to the log)")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--mode", choices=("teacher", "free"), default="teacher")
    p.add_argument("--seed", type=int, default=0, help="seed for world responses in free mode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dt4ier", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic session log and its manifest")
    p.add_argument("--config", help="WorldConfig JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a session log")
    p.add_argument("--config", help="ModelConfig JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest")
    p.add_argument("--steps", type=int, help="override max_steps")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="prompted evaluation; writes a metrics report")
    _eval_args(p)
    p.add_argument("--rho", type=_rho, default=1.0, help="prompt proportion, or 'rho_s,rho_l'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-rtg", help="evaluate over several prompt proportions")
    _eval_args(p)
    p.add_argument("--rhos", default="0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--json", help="plot-ready JSON path (default: CSV path with .json)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print a saved metrics report")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
