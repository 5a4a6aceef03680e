"""``dcfnet`` command line: synth, train, eval, gradcheck, ablate, config.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .config import PRESETS, RunConfig, load_config, preset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_config_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk", help="compiled-in preset (default: desk)")
    p.add_argument("--config", help="key = value config file applied on top of the preset")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")


def resolve_config(args) -> RunConfig:
    cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        try:
            cfg.set(key.strip(), value.strip())
        except (KeyError, TypeError, ValueError, SyntaxError) as exc:
            raise UsageError(f"--set {item}: {exc}") from None
    cfg.model.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcfnet", description="Target speaker extraction: data synthesis, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic two-speaker dataset")
    p.add_argument("--train", type=int, default=200, help="number of training mixtures")
    p.add_argument("--test", type=int, default=50, help="number of test mixtures")
    p.add_argument("--condition", choices=["clean", "noisy", "reverb", "reverberant"], default="clean",
                   help="acoustic condition (reverb is an alias of reverberant)")
    p.add_argument("--seed", type=int, default=0, help="dataset seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speakers", type=int, default=10, help="size of the speaker pool")
    p.add_argument("--duration", type=float, default=1.0, help="mixture length in seconds")
    p.add_argument("--enroll-duration", type=float, default=1.0, help="enrollment length in seconds")
    p.add_argument("--rt60", type=float, default=0.3, help="reverberation time for --condition reverb")
    p.add_argument("--noise-snr", type=float, default=10.0, help="target-to-noise ratio in dB for noisy")
    p.add_argument("--disjoint", action="store_true", help="use disjoint train/test speaker pools")

    p = sub.add_parser("train", help="train a model on a manifest")
    _add_config_flags(p)
    p.add_argument("--manifest", help="manifest.jsonl (overrides data.manifest)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--epochs", type=int, help="shortcut for --set train.epochs=N")

    p = sub.add_parser("eval", help="score a checkpoint (or a reference system) on the test split")
    p.add_argument("--checkpoint", help="checkpoint file (required for --mode model)")
    p.add_argument("--manifest", required=True, help="manifest.jsonl")
    p.add_argument("--mode", choices=["model", "oracle", "identity"], default="model",
                   help="model output, the reference itself, or the unprocessed mixture")
    p.add_argument("--split", choices=["test", "all"], default="test", help="records to score")
    p.add_argument("--out", required=True, help="directory for eval.csv and scatter.csv")

    p = sub.add_parser("gradcheck", help="finite-difference check of every registered layer")
    p.add_argument("--layers", help="comma-separated subset (default: all)")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds (default: 0,1,2)")
    p.add_argument("--step", type=float, default=1e-5, help="finite-difference step")

    p = sub.add_parser("ablate", help="train and score a sweep of DSFB counts or extractor kinds")
    _add_config_flags(p)
    p.add_argument("--manifest", required=True, help="manifest.jsonl")
    p.add_argument("--out", required=True, help="sweep directory")
    p.add_argument("--O", dest="o_list", help="comma-separated DSFB counts, e.g. 0,1,2")
    p.add_argument("--extractor", help="comma-separated extractor kinds from rnn,base,improved")
    p.add_argument("--epochs", type=int, help="shortcut for --set train.epochs=N")

    p = sub.add_parser("config", help="inspect configurations")
    csub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    show = csub.add_parser("show", help="print the resolved configuration and its parameter count")
    _add_config_flags(show)
    return parser


def _ints(text, flag):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None


def cmd_synth(args) -> int:
    from .synthdata import build_dataset

    condition = "reverberant" if args.condition == "reverb" else args.condition
    records = build_dataset(args.train, args.test, args.speakers, condition, args.seed, args.out,
                            duration=args.duration, enroll_duration=args.enroll_duration,
                            disjoint_speakers=args.disjoint, rt60=args.rt60, noise_snr_db=args.noise_snr)
    print(f"wrote {len(records)} records to {Path(args.out) / 'manifest.jsonl'}")
    return 0


def cmd_train(args) -> int:
    from .train import train_loop

    cfg = resolve_config(args)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.manifest:
        cfg.data.manifest = str(args.manifest)
    if not cfg.data.manifest:
        raise UsageError("train needs --manifest or data.manifest in the config")
    history = train_loop(cfg, args.out, resume=args.resume)
    print(f"finished {len(history)} epochs; log at {Path(args.out) / 'train_log.csv'}")
    return 0


def _select(records, split):
    return [r for r in records if r["id"].startswith("test-")] if split == "test" else records


def cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .synthdata import read_manifest
    from .train import model_from_checkpoint

    if args.mode == "model" and not args.checkpoint:
        raise UsageError("--mode model needs --checkpoint")
    model = model_from_checkpoint(args.checkpoint)[0] if args.mode == "model" else None
    records = _select(read_manifest(args.manifest), args.split)
    if not records:
        raise ValueError(f"no {args.split} records in {args.manifest}")
    report = evaluate(records, args.mode, model)
    out = Path(args.out)
    report.write_csv(out / "eval.csv")
    report.write_scatter_csv(out / "scatter.csv")
    print(f"{len(report.items)} items  SI-SDRi {report.mean_si_sdri:.2f} dB  SDRi {report.mean_sdri:.2f} dB  "
          f"TCP {100 * report.tcp_rate:.1f}%")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import REGISTRY, run_suite

    names = [n.strip() for n in args.layers.split(",")] if args.layers else sorted(REGISTRY)
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise UsageError(f"unknown layers {unknown}; known: {', '.join(sorted(REGISTRY))}")
    results = run_suite(names, _ints(args.seeds, "--seeds"), h=args.step)
    for r in results:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.name:<22} max rel err {r.error:.3e}  ({r.worst_leaf})  {r.seconds:.1f}s")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


ABLATION_FIELDS = ("label", "O", "extractor", "params", "mean_si_sdri", "mean_sdri", "tcp_rate")


def variant_label(O: int, extractor: str, sweep: str) -> str:
    if sweep == "extractor":
        return {"rnn": "RNN", "base": "BT", "improved": "IT"}[extractor]
    return "CC" if O == 0 else f"O={O}"


def cmd_ablate(args) -> int:
    from .evaluation import evaluate
    from .model import DCFNet
    from .synthdata import read_manifest
    from .train import model_from_checkpoint, train_loop

    base = resolve_config(args)
    if args.epochs is not None:
        base.train.epochs = args.epochs
    if bool(args.o_list) == bool(args.extractor):
        raise UsageError("give exactly one of --O or --extractor")
    if args.o_list:
        sweep, variants = "O", [(o, base.model.extractor) for o in _ints(args.o_list, "--O")]
    else:
        kinds = [k.strip() for k in args.extractor.split(",") if k.strip()]
        bad = [k for k in kinds if k not in ("rnn", "base", "improved")]
        if bad:
            raise UsageError(f"unknown extractor kinds {bad}")
        sweep, variants = "extractor", [(base.model.O, k) for k in kinds]
    test = _select(read_manifest(args.manifest), "test")
    out = Path(args.out)
    rows = []
    for O, kind in variants:
        cfg = RunConfig.from_dict(base.to_dict())
        cfg.model.O, cfg.model.extractor = O, kind
        cfg.data.manifest = str(args.manifest)
        label = variant_label(O, kind, sweep)
        run_dir = out / label.replace("=", "")
        train_loop(cfg, run_dir)
        model = model_from_checkpoint(run_dir / "checkpoints" / "best.ckpt")[0]
        report = evaluate(test, "model", model)
        report.write_csv(run_dir / "eval.csv")
        rows.append(dict(label=label, O=O, extractor=kind, params=DCFNet(cfg.model).num_parameters(),
                         mean_si_sdri=report.mean_si_sdri, mean_sdri=report.mean_sdri, tcp_rate=report.tcp_rate))
        print(f"{label}: SI-SDRi {report.mean_si_sdri:.2f} dB")
    out.mkdir(parents=True, exist_ok=True)
    with (out / "ablation.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ABLATION_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return 0


def cmd_config(args) -> int:
    from .model import DCFNet

    cfg = resolve_config(args)
    sys.stdout.write(cfg.dumps())
    print(f"# params = {DCFNet(cfg.model).num_parameters()}")
    return 0


COMMANDS = dict(synth=cmd_synth, train=cmd_train, eval=cmd_eval, gradcheck=cmd_gradcheck,
                ablate=cmd_ablate, config=cmd_config)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - surface every runtime failure as exit 2
        print(f"dcfnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
