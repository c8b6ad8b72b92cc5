"""Command-line entry point: ``unfoldsep <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import GenConfig, gen_dataset, load_dataset, save_dataset
from .errors import ConfigError, SeparationError
from .evaluation import misi_sweep, oracle_experiment, score_directories
from .model import MaskerNet, NetConfig, load_checkpoint, save_checkpoint, separate
from .train import TrainConfig, parse_stage, stage_names, train_stage, write_curve
from .wavio import read_wav, write_wav

log = logging.getLogger("unfoldsep")


def _previous_stage(stage: str):
    kind, k = parse_stage(stage)
    if kind == "chimera":
        return None
    if kind == "wa":
        return "chimera"
    return "wa" if k == 1 else f"wa-misi-{k - 1}"


def cmd_mix(args):
    config = GenConfig()
    batches, manifest = gen_dataset(args.n, args.seed, config)
    save_dataset(batches, manifest, args.out, config)
    log.info("wrote %d mixtures to %s", len(batches), args.out)


def cmd_oracle(args):
    report = oracle_experiment(load_dataset(args.data), args.misi, args.mask, args.gamma)
    report.to_csv(args.out)
    for row in report.rows:
        print(f"{row.name:4s} K={row.eval_k}  {row.mean_sisdr_db:7.2f} dB  (std {row.std_db:.2f}, n={row.n})")


def _train_one(stage, net, train_set, val_set, config, ckpt_dir):
    net, curve = train_stage(net, train_set, stage, config, val_set)
    meta = {"stage": stage, "train_config": config.to_dict()}
    save_checkpoint(net, ckpt_dir / f"{stage}.ckpt", meta)
    write_curve(curve, ckpt_dir / f"{stage}_curve.csv")
    log.info("saved %s", ckpt_dir / f"{stage}.ckpt")
    return net


def cmd_train(args):
    config = TrainConfig(seed=args.seed, activation=args.activation, k_max=args.k_max)
    train_set = load_dataset(args.data)
    val_set = load_dataset(args.val) if args.val else None
    ckpt_dir = Path(args.ckpt)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    stages = stage_names(config.k_max) if args.stage == "all" else [args.stage]
    parse_stage(stages[0])

    prev = _previous_stage(stages[0])
    if prev is None:
        net = MaskerNet.init(NetConfig(activation=args.activation), args.seed)
    else:
        path = ckpt_dir / f"{prev}.ckpt"
        if not path.exists():
            raise ConfigError(f"stage {stages[0]} starts from {path}, which does not exist")
        net, _ = load_checkpoint(path)
        if net.config.activation != args.activation:
            raise ConfigError(f"{path} uses activation {net.config.activation}, not {args.activation}")
    for stage in stages:
        net = _train_one(stage, net, train_set, val_set, config, ckpt_dir)


def _mixture_stem(path: Path) -> str:
    stem = path.stem
    return stem[: -len("_mix")] if stem.endswith("_mix") else stem


def cmd_separate(args):
    net, _ = load_checkpoint(args.ckpt)
    src = Path(getattr(args, "in"))
    estimates = separate(net, read_wav(src), args.misi)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = _mixture_stem(src)
    for c, est in enumerate(estimates, start=1):
        write_wav(out / f"{stem}_s{c}.wav", est)
    log.info("wrote %d estimates for %s", len(estimates), stem)


def cmd_evaluate(args):
    report = score_directories(args.est, args.ref)
    report.to_csv(args.out)
    row = report.rows[0]
    print(f"{row.name}: {row.mean_sisdr_db:.2f} dB (std {row.std_db:.2f}, n={row.n})")


def _stage_order(path: Path):
    try:
        kind, k = parse_stage(path.stem)
    except ConfigError:
        return (3, 0, path.stem)
    return ({"chimera": 0, "wa": 1}.get(kind, 2), k, path.stem)


def cmd_sweep_misi(args):
    paths = sorted(Path(args.ckpts).glob("*.ckpt"), key=_stage_order)
    if not paths:
        raise ConfigError(f"no .ckpt files in {args.ckpts}")
    nets = {p.stem: load_checkpoint(p)[0] for p in paths}
    report = misi_sweep(nets, load_dataset(args.data), range(args.k_max + 1))
    report.to_csv(args.out)
    for row in report.rows:
        print(f"{row.name:12s} K={row.eval_k}  {row.mean_sisdr_db:7.2f} dB")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unfoldsep", description="Mask-based separation with unfolded MISI.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mix", help="generate a synthetic two-source corpus")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("oracle", help="score oracle masks with K MISI iterations")
    s.add_argument("--data", required=True)
    s.add_argument("--mask", nargs="+", choices=["ibm", "mrm", "iam", "psm"], default=["ibm", "mrm", "iam", "psm"])
    s.add_argument("--misi", nargs="+", type=int, default=[0, 5], metavar="K")
    s.add_argument("--gamma", type=float, default=2.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("train", help="train one curriculum stage (or all of them)")
    s.add_argument("--data", required=True)
    s.add_argument("--val")
    s.add_argument("--activation", choices=["sigmoid", "dsig", "crelu", "csoftmax"], default="sigmoid")
    s.add_argument("--stage", required=True, help="chimera, wa, wa-misi-K or all")
    s.add_argument("--ckpt", required=True, help="checkpoint directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k-max", type=int, default=5)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("separate", help="separate one mixture file")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", required=True, metavar="WAV")
    s.add_argument("--misi", type=int, default=5, metavar="K")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("evaluate", help="SI-SDR of estimate files against references")
    s.add_argument("--est", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep-misi", help="SI-SDR of every checkpoint versus test-time K")
    s.add_argument("--ckpts", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--k-max", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep_misi)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SeparationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
