"""Command-line entry point.

Subcommands: gen-data, train, render, animate, swap, eval.
Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataset as dataset_mod
from . import metrics as metrics_mod
from . import rasterizer as raster_mod
from . import texture as texture_mod
from .losses import LossWeights
from .scene import (Pose, SequenceConfig, WeakPerspectiveCamera,
                    generate_sequence, skin_mesh)
from .training import (TrainConfig, TrainState, TrainingAborted,
                       configure_threads, train)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Run-config files: flat "key = value" text covering every train-config field
# ---------------------------------------------------------------------------

_BOOL = {"true": True, "false": False}


def serialize_config(cfg):
    d = cfg.to_dict()
    w = d.pop("loss_weights")
    flat = dict(d)
    for k, v in w.items():
        flat["loss_weights." + k] = v
    lines = []
    for k in sorted(flat):
        v = flat[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append("%s = %s" % (k, v))
    return "\n".join(lines) + "\n"


def parse_config_text(text):
    base = TrainConfig().to_dict()
    weights = base.pop("loss_weights")
    seen = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value" % ln)
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("loss_weights."):
            sub = key[len("loss_weights."):]
            if sub not in weights:
                raise ConfigError("unknown config key %r" % key)
            weights[sub] = _parse_value(val, weights[sub])
        elif key in base:
            base[key] = _parse_value(val, base[key])
        else:
            raise ConfigError("unknown config key %r" % key)
        if key in seen:
            raise ConfigError("duplicate config key %r" % key)
        seen[key] = True
    base["loss_weights"] = weights
    return TrainConfig.from_dict(base)


def _parse_value(text, default):
    if isinstance(default, bool):
        if text.lower() not in _BOOL:
            raise ConfigError("expected true/false, got %r" % text)
        return _BOOL[text.lower()]
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, (list, tuple)):
        return [float(x) for x in text.split(",") if x.strip()]
    return text


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


class OutputLock:
    """Rejects concurrent commands on the same output directory."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, ".texavatar.lock")

    def __enter__(self):
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError("output directory is locked by another command "
                              "(%s)" % self.path)
        return self

    def __exit__(self, *exc):
        os.close(self.fd)
        os.unlink(self.path)


def _parse_data_args(items):
    """--data entries: either 'identity=path' or a bare path (identity =
    directory basename)."""
    datasets = {}
    for item in items:
        if "=" in item:
            ident, path = item.split("=", 1)
        else:
            path = item
            ident = os.path.basename(os.path.normpath(item))
        if ident in datasets:
            raise ConfigError("duplicate identity %r" % ident)
        datasets[ident] = dataset_mod.load_sequence(path)
    return datasets


def _save_png(path, img_m11):
    from PIL import Image
    Image.fromarray(dataset_mod._to_u8(img_m11)).save(path)


def _save_mask_png(path, mask01):
    from PIL import Image
    Image.fromarray(dataset_mod._mask_to_u8(mask01)).save(path)


def _load_pose_stream(args):
    records = []
    if args.pose_file:
        with open(args.pose_file) as f:
            records = [json.loads(line) for line in f if line.strip()]
    else:
        with open(os.path.join(args.pose_seq, "poses.jsonl")) as f:
            records = [json.loads(line) for line in f if line.strip()]
    out = []
    for rec in records:
        pose = Pose(np.array(rec["quaternions"]), np.array(rec["root_translation"]))
        cam = WeakPerspectiveCamera(rec["camera_scale"],
                                    np.array(rec["camera_rotation"]),
                                    np.array(rec["camera_translation"]),
                                    (0, 0))
        out.append((pose, cam))
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    if args.resolution < 8:
        raise ConfigError("--resolution must be >= 8")
    cfg = SequenceConfig(frame_count=args.frames, width=args.resolution,
                         height=args.resolution, segment_count=args.segments,
                         misalignment=args.misalignment,
                         overhang_amplitude=args.overhang)
    seq = generate_sequence(cfg, args.seed)
    with OutputLock(args.out):
        dataset_mod.save_sequence(seq, args.out)
    # summary: proxy-vs-mask silhouette agreement
    ious = []
    rc = raster_mod.RasterConfig(cfg.width, cfg.height)
    for frame in seq.frames[:min(10, len(seq.frames))]:
        pv, pn = skin_mesh(seq.mesh, seq.skeleton, frame.pose)
        r = raster_mod.rasterize(pv, pn, seq.mesh, frame.camera, rc)
        ious.append(metrics_mod.mask_iou(r.coverage, frame.mask))
    print("wrote %d frames to %s (proxy silhouette IoU %.4f)"
          % (len(seq.frames), args.out, float(np.mean(ious))))
    return EXIT_OK


def cmd_train(args):
    cfg = TrainConfig()
    if args.config:
        with open(args.config) as f:
            cfg = parse_config_text(f.read())
    # CLI flags override the config file
    if args.steps is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "steps": args.steps})
    if args.seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    if args.dnr_baseline:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "model_type": "dnr"})
    if args.model_type:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "model_type": args.model_type})

    datasets = _parse_data_args(args.data)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.tav")
    log_path = os.path.join(args.out, "loss_log.jsonl")

    with OutputLock(args.out):
        with open(os.path.join(args.out, "effective_config.txt"), "w") as f:
            f.write(serialize_config(cfg))
        if args.resume:
            configure_threads()
            state = TrainState.load_checkpoint(args.resume)
            state.attach_datasets(datasets)
            every = args.checkpoint_every
            log_mode = "a"
        else:
            state = None
            every = args.checkpoint_every
            log_mode = "w"

        logged = 0

        def on_step(st):
            nonlocal logged
            if st.step % every == 0:
                st.save_checkpoint(ckpt_path)
            with open(log_path, "a") as f:
                for entry in st.loss_log[logged:]:
                    f.write(json.dumps(entry, sort_keys=True) + "\n")
            logged = len(st.loss_log)

        if log_mode == "w" and os.path.exists(log_path):
            os.unlink(log_path)
        try:
            if state is None:
                state = train(datasets, cfg, on_step=on_step)
            else:
                state.run(on_step=on_step)
        except TrainingAborted as e:
            print("error: %s (last periodic checkpoint kept)" % e,
                  file=sys.stderr)
            return EXIT_NUMERIC
        state.save_checkpoint(ckpt_path)
    print("trained %d steps; checkpoint at %s" % (state.step, ckpt_path))
    return EXIT_OK


def cmd_render(args):
    state = TrainState.load_checkpoint(args.ckpt)
    if args.identity not in state.textures:
        raise ConfigError("unknown identity %r; available: %s"
                          % (args.identity, ", ".join(sorted(state.textures))))
    if args.data:
        state.attach_datasets(_parse_data_args(args.data))
    background = None
    if args.background:
        from PIL import Image
        background = dataset_mod._from_u8(
            np.asarray(Image.open(args.background), dtype=np.float64))
    stream = _load_pose_stream(args)
    os.makedirs(args.out, exist_ok=True)
    with OutputLock(args.out):
        for i, (pose, cam) in enumerate(stream):
            blended, mask, _ = state.render_pose(args.identity, pose, cam,
                                                 background)
            _save_png(os.path.join(args.out, "frame_%06d.png" % i), blended)
            _save_mask_png(os.path.join(args.out, "mask_%06d.png" % i), mask)
    print("rendered %d frames to %s" % (len(stream), args.out))
    return EXIT_OK


def cmd_swap(args):
    state = TrainState.load_checkpoint(args.ckpt)
    for ident in (args.id_a, args.id_b):
        if ident not in state.textures:
            raise ConfigError("unknown identity %r; available: %s"
                              % (ident, ", ".join(sorted(state.textures))))
    if args.new_id in state.textures:
        raise ConfigError("identity %r already exists" % args.new_id)
    try:
        u0, v0, u1, v1 = (float(x) for x in args.region.split(","))
    except ValueError:
        raise ConfigError("--region expects u0,v0,u1,v1")
    tex_a = texture_mod.NeuralTexture(state.textures[args.id_a].detach(),
                                      args.id_a, state.config.seed)
    tex_b = texture_mod.NeuralTexture(state.textures[args.id_b].detach(),
                                      args.id_b, state.config.seed)
    swapped = texture_mod.swap_region(tex_a, tex_b,
                                      texture_mod.TextureRegion((u0, v0, u1, v1)))
    import torch
    state.textures[args.new_id] = torch.nn.Parameter(swapped.data.clone())
    state.opt_tex[args.new_id] = torch.optim.Adam(
        [state.textures[args.new_id]], lr=state.config.lr_texture,
        betas=(0.5, 0.999))
    out = args.out or args.ckpt
    state.save_checkpoint(out)
    print("registered identity %r in %s" % (args.new_id, out))
    return EXIT_OK


def cmd_eval(args):
    try:
        state = TrainState.load_checkpoint(args.ckpt)
    except (OSError, ValueError) as e:
        print("error: cannot read checkpoint: %s" % e, file=sys.stderr)
        return EXIT_IO
    datasets = _parse_data_args(args.data)
    state.attach_datasets(datasets)
    os.makedirs(os.path.dirname(os.path.abspath(args.report)) or ".",
                exist_ok=True)
    reports = {}
    for ident in sorted(datasets):
        frames = state.test_indices[ident]
        reports[ident] = metrics_mod.evaluate(state, frames, ident)
    combined = {ident: json.loads(r.to_json()) for ident, r in reports.items()}
    with open(args.report + ".json", "w") as f:
        json.dump(combined, f, sort_keys=True, indent=1)
    with open(args.report + ".csv", "w") as f:
        for ident, r in reports.items():
            f.write("# identity: %s\n" % ident)
            f.write(r.to_csv())
    if args.plot:
        _write_eval_plots(reports, args.report)
    for ident, r in reports.items():
        agg = r.aggregate
        print("%s: ssim %.4f  feature %.4f  masked_l1 %.4f  iou %.4f"
              % (ident, agg["ssim"], agg["feature_distance"],
                 agg["masked_l1"], agg["mask_iou"]))
    return EXIT_OK


def _write_eval_plots(reports, prefix):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    for metric in ("ssim", "feature_distance", "masked_l1", "mask_iou"):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        for ident, r in reports.items():
            xs = [row["frame"] for row in r.per_frame]
            ys = [row[metric] for row in r.per_frame]
            ax.plot(xs, ys, marker=".", label=ident)
        ax.set_xlabel("frame")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig("%s_%s.png" % (prefix, metric), dpi=120)
        plt.close(fig)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="texavatar")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--resolution", type=int, default=128)
    g.add_argument("--segments", type=int, default=3)
    g.add_argument("--misalignment", type=float, default=0.0)
    g.add_argument("--overhang", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", action="append", required=True,
                   help="dataset dir or identity=dir; repeatable")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--dnr-baseline", action="store_true")
    t.add_argument("--model-type", choices=("anr", "anr_nosplit",
                                            "single_matched", "pixel_only", "dnr"))
    t.add_argument("--resume")
    t.add_argument("--checkpoint-every", type=int, default=500)
    t.set_defaults(func=cmd_train)

    for name in ("render", "animate"):
        r = sub.add_parser(name, help="render pose streams from a checkpoint")
        r.add_argument("--ckpt", required=True)
        r.add_argument("--identity", required=True)
        src = r.add_mutually_exclusive_group(required=True)
        src.add_argument("--pose-file")
        src.add_argument("--pose-seq")
        r.add_argument("--background")
        r.add_argument("--data", action="append", default=[])
        r.add_argument("--out", required=True)
        r.set_defaults(func=cmd_render)

    s = sub.add_parser("swap", help="swap a texture region between identities")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--id-a", required=True)
    s.add_argument("--id-b", required=True)
    s.add_argument("--region", required=True, help="u0,v0,u1,v1")
    s.add_argument("--new-id", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_swap)

    e = sub.add_parser("eval", help="evaluate a checkpoint on held-out frames")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", action="append", required=True)
    e.add_argument("--report", required=True, help="output path prefix")
    e.add_argument("--plot", action="store_true")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
