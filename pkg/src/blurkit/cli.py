"""Command-line interface.

Subcommands: gen-data, train, eval, verify, visualize-kernel, fft-relu,
mem-report, dump. Every flag mirrors a config-file key (sections
[model], [train], [data]); flags override file values. Exit codes:
0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod
from .blur import DatasetManifest, estimate_kernel_oracle, fft_relu_pattern, generate_dataset
from .engine import Tensor, load_tensor, save_tensor, describe
from .model import (
    DMSUNet,
    ModelConfig,
    extract_kernel_visual,
    format_memory_report,
    load_checkpoint,
    memory_report,
)
from .train import TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # reject unknown flags with usage text, exit 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_VALIDATION)


_SECTION_CLASSES = {"model": ModelConfig, "train": TrainConfig, "data": DatasetManifest}


def _add_section_flags(parser: argparse.ArgumentParser, section: str):
    cls = _SECTION_CLASSES[section]
    group = parser.add_argument_group(f"[{section}] overrides")
    for f in dc_fields(cls):
        default = getattr(cls(), f.name)
        if isinstance(default, list):
            default = ",".join(str(v) for v in default)
        group.add_argument(
            f"--{section}-{f.name.replace('_', '-')}",
            dest=f"{section}__{f.name}",
            metavar="V",
            help=f"default {default}",
        )


def _merge_section(sections: dict, section: str, args) -> dict:
    body = dict(sections.get(section, {}))
    for key, value in vars(args).items():
        if value is None or "__" not in key:
            continue
        sec, name = key.split("__", 1)
        if sec == section:
            body[name] = value
    return {section: body}


def _build(section: str, sections: dict, args):
    merged = _merge_section(sections, section, args)
    cls = _SECTION_CLASSES[section]
    if section == "model":
        return ModelConfig.from_sections(merged)
    if section == "train":
        return TrainConfig.from_sections(merged)
    body = merged["data"]
    kwargs = {}
    for f in dc_fields(DatasetManifest):
        if f.name in body:
            kwargs[f.name] = cfgmod.coerce(body[f.name], type(getattr(DatasetManifest(), f.name)))
    return DatasetManifest(**kwargs)


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}")
    return cfgmod.load_config(p)


def _image_from_file(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".drt":
        return load_tensor(path)
    from .report import load_image

    return load_image(path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blurkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"blurkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[], help="generate a synthetic sharp/blur dataset")
    p.add_argument("--config", help="config file with a [data] section")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--png", action="store_true", help="write 8-bit PNG mirrors")
    _add_section_flags(p, "data")

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--config", help="config file with [model]/[train] sections")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True, help="run directory for checkpoints/metrics")
    p.add_argument("--tiny", action="store_true", help="start from the desk-scale model defaults")
    _add_section_flags(p, "model")
    _add_section_flags(p, "train")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--limit", type=int, default=None)

    p = sub.add_parser("verify", help="run the property suite")

    p = sub.add_parser("visualize-kernel", help="render the estimated kernel beside the truth")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("fft-relu", help="emit the rectified-spectrum blur pattern of an image")
    p.add_argument("--in", dest="input", required=True, help="input PNG or DRT")
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("mem-report", help="compare naive vs reversible activation memory")
    p.add_argument("--config", help="config file with a [model] section")
    p.add_argument("--tiny", action="store_true")
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--out", help="optional figure path")
    _add_section_flags(p, "model")

    p = sub.add_parser("dump", help="inspect or convert a raw tensor dump")
    p.add_argument("--in", dest="input", required=True, help=".drt file")
    p.add_argument("--png", help="optional PNG export path")
    return parser


def _model_from_args(sections, args) -> ModelConfig:
    if getattr(args, "tiny", False):
        base = ModelConfig.tiny()
        merged = dict(base.to_sections()["model"])
        merged.update(_merge_section(sections, "model", args)["model"])
        return ModelConfig.from_sections({"model": merged})
    return _build("model", sections, args)


def cmd_gen_data(args) -> int:
    sections = _load_config(args.config)
    manifest = _build("data", sections, args)
    root = generate_dataset(manifest, args.out, png_mirrors=args.png)
    print(f"dataset written to {root} ({manifest.train_count} train / {manifest.val_count} val)")
    return EXIT_OK


def cmd_train(args) -> int:
    from .report import save_loss_curve

    sections = _load_config(args.config)
    model_cfg = _model_from_args(sections, args)
    train_cfg = _build("train", sections, args)
    result = train(train_cfg, model_cfg, args.data, args.out)
    save_loss_curve(Path(args.out) / "loss_curve.png", result.loss_history, result.val_records)
    if result.val_records:
        last = result.val_records[-1]
        print(f"final: step {last.step} val psnr {last.psnr:.2f} dB ssim {last.ssim:.4f}")
    print(f"checkpoint: {result.checkpoint}")
    print(f"metrics stream: {result.metrics_path}")
    if result.status != "ok":
        print(f"training aborted: {result.status}; last good checkpoint retained")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_eval(args) -> int:
    from .report import save_cka_curve, save_metric_bars

    model, _, _, _ = load_checkpoint(args.checkpoint)
    rec = evaluate(model, args.data, split=args.split, limit=args.limit)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.txt", "w") as fh:
        fh.write("# index\tpsnr\tssim\n")
        for line in rec.lines():
            fh.write(line + "\n")
        fh.write(
            f"# mean\t{rec.psnr:.4f}\t{rec.ssim:.5f}\t(input psnr {rec.psnr_input:.4f})\n"
        )
    save_metric_bars(
        out / "psnr_summary.png",
        ["input", "restored"],
        [rec.psnr_input, rec.psnr],
        "PSNR (dB)",
        f"{args.split} split, {len(rec.per_sample)} samples",
    )
    print(f"psnr {rec.psnr:.3f} dB (input {rec.psnr_input:.3f}), ssim {rec.ssim:.4f}")
    if not math.isnan(rec.orientation_err_mean):
        print(
            f"kernel orientation: mean err {rec.orientation_err_mean:.1f} deg, "
            f"within-tolerance rate {rec.orientation_hit_rate:.0%}"
        )
    if rec.cka:
        save_cka_curve(out / "cka_depths.png", rec.cka)
        print("cka per depth:", ", ".join(f"{c:.3f}" for c in rec.cka))
    print(f"report written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    ok = run_all()
    print("verify:", "all checks passed" if ok else "FAILURES present")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_visualize_kernel(args) -> int:
    from .blur import embed_centered, load_sample
    from .engine import no_grad
    from .report import save_panel

    model, _, _, _ = load_checkpoint(args.checkpoint)
    if model.cfg.fke_enabled is False:
        raise CliError("checkpoint was trained without the kernel estimator")
    sample = load_sample(args.data, args.split, args.index)
    x = Tensor(sample.blur[None])
    with no_grad():
        _, diag = model.forward(x, collect_estimates=True)
    est = diag["estimates"][(0, model.cfg.columns - 1)]
    visual = extract_kernel_visual(est)
    h, w = visual.shape
    truth = embed_centered(sample.kernel.astype(np.float64), h, w)
    truth = truth / truth.max() if truth.max() > 0 else truth
    oracle = estimate_kernel_oracle(sample.blur, sample.sharp)
    og = np.clip(oracle.grid, 0, None)
    og = og / og.max() if og.max() > 0 else og
    save_panel(
        args.out,
        [sample.blur, visual, og, truth],
        ["blurred input", "estimated kernel", "oracle kernel", "true kernel"],
    )
    print(f"kernel panel written to {args.out}")
    return EXIT_OK


def cmd_fft_relu(args) -> int:
    from .report import save_image

    img = _image_from_file(args.input)
    pattern = fft_relu_pattern(Tensor(img)).data
    lo, hi = pattern.min(), pattern.max()
    norm = (pattern - lo) / (hi - lo) if hi > lo else pattern * 0
    save_image(args.out, norm)
    print(f"pattern written to {args.out}")
    return EXIT_OK


def cmd_mem_report(args) -> int:
    sections = _load_config(args.config)
    model_cfg = _model_from_args(sections, args)
    model = DMSUNet(model_cfg)
    naive, rev = memory_report(model, patch=args.patch, batch=args.batch)
    print(format_memory_report(naive, rev))
    if args.out:
        from .report import save_metric_bars

        save_metric_bars(
            args.out,
            ["naive", "reversible"],
            [naive.stored_bytes / 1e6, rev.stored_bytes / 1e6],
            "stored activations (MB)",
            f"patch {args.patch}, batch {args.batch}, columns {model_cfg.columns}",
        )
        print(f"figure written to {args.out}")
    return EXIT_OK


def cmd_dump(args) -> int:
    print(describe(args.input))
    if args.png:
        from .report import save_image

        arr = load_tensor(args.input)
        save_image(args.png, arr)
        print(f"png written to {args.png}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "visualize-kernel": cmd_visualize_kernel,
    "fft-relu": cmd_fft_relu,
    "mem-report": cmd_mem_report,
    "dump": cmd_dump,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (CliError, cfgmod.ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
