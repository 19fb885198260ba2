"""Split-optimization training.

The loop alternates a renderer-only objective over ordinary training frames
with a texture+renderer objective restricted to greedily selected keyframes,
schedules identities at random, applies crop/rescale and uv-perturbation
augmentation, and checkpoints deterministically.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np
import torch

from . import losses as L
from . import rasterizer as raster_mod
from . import renderer as render_mod
from . import texture as texture_mod
from .archive import load_archive, save_archive
from .scene import CoarseMesh, Skeleton, skin_mesh

# Ablation ladder: each variant after "anr" removes one more mechanism.
#   anr            two-stage renderer, full loss suite, split optimization
#   anr_nosplit    same model and losses, joint texture+renderer updates
#   single_matched parameter-matched one-stage renderer, joint updates
#   pixel_only     one-stage renderer, pixel+mask losses only, joint updates
#   dnr            one-stage renderer, plain L1, mask taken from coverage
MODEL_TYPES = ("anr", "anr_nosplit", "single_matched", "pixel_only", "dnr")

CHECKPOINT_VERSION = 1


class TrainingAborted(RuntimeError):
    def __init__(self, step, term):
        super().__init__("training aborted at step %d (non-finite loss: %s)"
                         % (step, term))
        self.step = step
        self.term = term


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 1
    lr_renderer: float = 2e-4
    lr_discriminator: float = 2e-4
    lr_texture: float = 1e-2
    alternation_ratio: int = 1     # renderer-only steps per keyframe step
    train_fraction: float = 0.85   # leading fraction of frames used for training
    keyframe_fraction: float = 0.075
    keyframe_budget: int = 0       # 0 = derive from fraction
    keyframe_mode: str = "texel"   # or "silhouette" (image-space union)
    rescale_min: float = 0.5
    rescale_max: float = 1.25
    uv_perturb: float = 0.02
    mask_corruption: float = 0.0
    texture_size: int = 64
    texture_channels: int = 8
    stage_depth: int = 4
    stage_channels: int = 32
    latent_channels: int = 16
    disc_scales: int = 2
    disc_channels: int = 32
    feature_seed: int = 0
    seed: int = 0
    resolution: int = 128
    model_type: str = "anr"
    loss_weights: L.LossWeights = field(default_factory=L.LossWeights)

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch size must be positive")
        if min(self.lr_renderer, self.lr_discriminator, self.lr_texture) <= 0:
            raise ValueError("learning rates must be positive")
        if not (0 < self.rescale_min <= self.rescale_max):
            raise ValueError("rescale range must be within (0, inf)")
        if self.model_type not in MODEL_TYPES:
            raise ValueError("unknown model type %r" % self.model_type)

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__
             if k != "loss_weights"}
        w = self.loss_weights
        d["loss_weights"] = {k: getattr(w, k) for k in w.__dataclass_fields__}
        d["loss_weights"]["feature_layer_weights"] = list(w.feature_layer_weights)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        w = d.pop("loss_weights", None)
        if w is not None:
            w = dict(w)
            if "feature_layer_weights" in w:
                w["feature_layer_weights"] = tuple(w["feature_layer_weights"])
            d["loss_weights"] = L.LossWeights(**w)
        return TrainConfig(**d)

    def hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass
class KeyframeSet:
    frame_indices: list
    covered_texels: set
    budget: int


def select_keyframes(frame_texel_sets, budget):
    """Greedy max-marginal-gain coverage; ties to the lowest frame index,
    early stop at zero gain.  `frame_texel_sets` is a list of
    (frame_index, set) pairs."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not frame_texel_sets:
        raise ValueError("empty sequence")
    chosen, covered = [], set()
    remaining = list(frame_texel_sets)
    while len(chosen) < budget and remaining:
        best_gain, best_pos = 0, None
        for pos, (fi, texels) in enumerate(remaining):
            gain = len(texels - covered)
            if gain > best_gain:
                best_gain, best_pos = gain, pos
        if best_pos is None:
            break
        fi, texels = remaining.pop(best_pos)
        chosen.append(fi)
        covered |= texels
    return KeyframeSet(frame_indices=chosen, covered_texels=covered, budget=budget)


def identity_schedule(identity_ids, steps, seed):
    """Seeded uniform identity choice per training step."""
    rng = np.random.default_rng([int(seed), 0x1DE7])
    ids = sorted(identity_ids)
    return [ids[i] for i in rng.integers(0, len(ids), size=steps)]


def corrupt_mask(mask, amount, rng):
    """Erode or dilate by up to `amount` pixels (seeded), emulating matting
    errors in the mask supervision."""
    m = (np.asarray(mask) > 0.5).astype(np.float64)
    k = int(rng.integers(-int(round(amount)), int(round(amount)) + 1))
    for _ in range(abs(k)):
        shifted = [m,
                   np.roll(m, 1, 0), np.roll(m, -1, 0),
                   np.roll(m, 1, 1), np.roll(m, -1, 1)]
        m = np.maximum.reduce(shifted) if k > 0 else np.minimum.reduce(shifted)
    return m


def hash_tensor(t):
    return hashlib.sha256(np.ascontiguousarray(
        t.detach().cpu().numpy()).tobytes()).hexdigest()


def _crop_params(resolution, f, rng):
    s = max(8, int(round(resolution / f)))
    lo, hi = min(0, resolution - s), max(0, resolution - s)
    x0 = int(rng.integers(lo, hi + 1))
    y0 = int(rng.integers(lo, hi + 1))
    return s, x0, y0


def _augment(image, mask, background, uv, coverage, normal, f, x0, y0, out):
    """Nearest-resample a crop window (size res/f at (x0,y0), possibly
    extending past the frame) to `out` x `out`.  All channels are resampled
    identically so per-pixel correspondence is preserved; out-of-frame
    pixels become background with zero coverage."""
    res = image.shape[0]
    s = max(8, int(round(res / f)))
    src = np.floor((np.arange(out) + 0.5) * s / out).astype(np.int64)
    sx, sy = src + x0, src + y0
    valid = ((sx >= 0) & (sx < res))[None, :] & ((sy >= 0) & (sy < res))[:, None]
    cx, cy = np.clip(sx, 0, res - 1), np.clip(sy, 0, res - 1)
    ix = np.broadcast_to(cx[None, :], (out, out))
    iy = np.broadcast_to(cy[:, None], (out, out))
    bg = background[iy, ix]
    img = np.where(valid[..., None], image[iy, ix], bg)
    msk = np.where(valid, mask[iy, ix], 0.0)
    cov = np.where(valid, coverage[iy, ix], 0).astype(np.uint8)
    uv_o = np.where((cov > 0)[..., None], uv[iy, ix], 0.0)
    nrm = np.where((cov > 0)[..., None], normal[iy, ix], 0.0)
    return img, msk, bg, uv_o, cov, nrm


class TrainState:
    """Single-writer training state: model(s), discriminator, identity bank,
    optimizers, RNG, caches."""

    def __init__(self, config, mesh, skeleton, seed_rng=True):
        self.config = config
        self.mesh = mesh
        self.skeleton = skeleton
        self.step = 0
        self.datasets = {}
        self.keyframes = {}
        self.train_indices = {}
        self.test_indices = {}
        self._raster_cache = {}
        self._sup_mask_cache = {}
        self.loss_log = []

        cfg = config
        if cfg.model_type in ("anr", "anr_nosplit"):
            self.model = render_mod.ANRModel(
                cfg.texture_channels,
                render_mod.StageConfig(cfg.stage_depth, cfg.stage_channels,
                                       cfg.latent_channels),
                render_mod.StageConfig(cfg.stage_depth, cfg.stage_channels, 4),
                seed=cfg.seed)
        elif cfg.model_type in ("single_matched", "pixel_only"):
            ref = render_mod.ANRModel(
                cfg.texture_channels,
                render_mod.StageConfig(cfg.stage_depth, cfg.stage_channels,
                                       cfg.latent_channels),
                render_mod.StageConfig(cfg.stage_depth, cfg.stage_channels, 4),
                seed=cfg.seed)
            self.model = render_mod.matched_single_stage(
                cfg.texture_channels, render_mod.count_parameters(ref),
                depth=cfg.stage_depth, with_mask=True, seed=cfg.seed)
        else:  # dnr
            self.model = render_mod.SingleStageModel(
                cfg.texture_channels, cfg.stage_depth, cfg.stage_channels,
                with_mask=False, seed=cfg.seed)

        self.uses_adversary = (cfg.model_type not in ("dnr", "pixel_only")
                               and cfg.loss_weights.lambda_adv > 0)
        self.disc = None
        self.opt_disc = None
        if self.uses_adversary:
            self.disc = render_mod.MultiscaleDiscriminator(
                3, cfg.disc_scales, cfg.disc_channels, seed=cfg.seed + 1)
            self.opt_disc = torch.optim.Adam(self.disc.parameters(),
                                             lr=cfg.lr_discriminator,
                                             betas=(0.5, 0.999))
        self.extractor = L.FeatureExtractor(seed=cfg.feature_seed)
        self.opt_model = torch.optim.Adam(self.model.parameters(),
                                          lr=cfg.lr_renderer, betas=(0.5, 0.999))
        self.textures = {}
        self.opt_tex = {}
        if seed_rng:
            self.rng = np.random.default_rng([int(cfg.seed), 0x7EA1])
        self.schedule = None

    # -- setup ------------------------------------------------------------

    def add_identity(self, identity_id, sequence):
        cfg = self.config
        self.datasets[identity_id] = sequence
        tex = texture_mod.init_texture(cfg.texture_size, cfg.texture_size,
                                       cfg.texture_channels, cfg.seed,
                                       identity_id)
        param = torch.nn.Parameter(tex.data.clone())
        self.textures[identity_id] = param
        self.opt_tex[identity_id] = torch.optim.Adam([param], lr=cfg.lr_texture,
                                                     betas=(0.5, 0.999))
        n = len(sequence.frames)
        n_train = max(1, int(round(cfg.train_fraction * n)))
        self.train_indices[identity_id] = list(range(n_train))
        self.test_indices[identity_id] = list(range(n_train, n))
        self._select_keyframes_for(identity_id)

    def _select_keyframes_for(self, identity_id):
        cfg = self.config
        train_idx = [i for i in self.train_indices[identity_id]
                     if self.datasets[identity_id].frames[i].is_keyframe_candidate]
        budget = cfg.keyframe_budget or max(
            1, int(round(cfg.keyframe_fraction * len(train_idx))))
        sets = []
        for fi in train_idx:
            r = self.raster(identity_id, fi)
            if cfg.keyframe_mode == "silhouette":
                texels = set(np.flatnonzero(r.coverage.reshape(-1)).tolist())
            else:
                texels = raster_mod.coverage_texels(
                    r, (cfg.texture_size, cfg.texture_size))
            sets.append((fi, texels))
        self.keyframes[identity_id] = select_keyframes(sets, budget)

    # -- caches -----------------------------------------------------------

    def raster(self, identity_id, frame_idx):
        key = (identity_id, frame_idx)
        if key not in self._raster_cache:
            seq = self.datasets[identity_id]
            frame = seq.frames[frame_idx]
            posed_v, posed_n = skin_mesh(seq.mesh, seq.skeleton, frame.pose)
            rc = raster_mod.RasterConfig(self.config.resolution,
                                         self.config.resolution)
            self._raster_cache[key] = raster_mod.rasterize(
                posed_v, posed_n, seq.mesh, frame.camera, rc)
        return self._raster_cache[key]

    def supervision_mask(self, identity_id, frame_idx):
        key = (identity_id, frame_idx)
        if key not in self._sup_mask_cache:
            frame = self.datasets[identity_id].frames[frame_idx]
            m = frame.mask
            if self.config.mask_corruption > 0:
                rng = np.random.default_rng(
                    [self.config.seed, 0xC0, hash(identity_id) & 0xFFFF, frame_idx])
                m = corrupt_mask(m, self.config.mask_corruption, rng)
            self._sup_mask_cache[key] = m
        return self._sup_mask_cache[key]

    # -- forward ----------------------------------------------------------

    def _forward(self, tex_data, uv, coverage, normal):
        shim = SimpleNamespace(uv=uv, coverage=coverage)
        tex = texture_mod.NeuralTexture(tex_data, "", 0)
        neural = texture_mod.sample_texture(tex, shim)
        cfg = self.config
        if cfg.model_type in ("anr", "anr_nosplit"):
            return render_mod.forward_anr(self.model, neural, normal)
        if cfg.model_type in ("single_matched", "pixel_only"):
            rgb, mask = render_mod.forward_dnr(self.model, neural)
            return render_mod.RenderOutput(J_hat=rgb, latent=rgb, I_hat=rgb,
                                           M_hat=mask)
        rgb, _ = render_mod.forward_dnr(self.model, neural)  # dnr
        return render_mod.RenderOutput(
            J_hat=rgb, latent=rgb, I_hat=rgb,
            M_hat=torch.as_tensor(coverage, dtype=rgb.dtype))

    def _prepare(self, identity_id, frame_idx, augment=True):
        cfg = self.config
        seq = self.datasets[identity_id]
        frame = seq.frames[frame_idx]
        r = self.raster(identity_id, frame_idx)
        sup_mask = self.supervision_mask(identity_id, frame_idx)
        if augment and cfg.uv_perturb > 0:
            r = texture_mod.perturb_uv(r, cfg.uv_perturb,
                                       int(self.rng.integers(0, 2 ** 31)))
        if augment:
            f = float(self.rng.uniform(cfg.rescale_min, cfg.rescale_max))
            _, x0, y0 = _crop_params(cfg.resolution, f, self.rng)
            img, msk, bg, uv, cov, nrm = _augment(
                frame.image, sup_mask, frame.background, r.uv, r.coverage,
                r.normal_image, f, x0, y0, cfg.resolution)
        else:
            img, msk, bg = frame.image, sup_mask, frame.background
            uv, cov, nrm = r.uv, r.coverage, r.normal_image
        return {"image": torch.as_tensor(img, dtype=torch.float32),
                "mask": torch.as_tensor(msk, dtype=torch.float32),
                "background": torch.as_tensor(bg, dtype=torch.float32),
                "uv": uv, "coverage": cov, "normal": nrm}

    def _losses(self, out, sample):
        cfg = self.config
        target, sup_mask, bg = sample["image"], sample["mask"], sample["background"]
        w = cfg.loss_weights
        if cfg.model_type == "dnr":
            # single-objective baseline: plain full-image L1
            terms = {"p": (out.I_hat - target).abs().mean()}
            return terms, L.total_loss(terms, replace(w, lambda_p=1.0,
                                                      lambda_feat=0, lambda_mask=0,
                                                      lambda_adv=0, lambda_tv=0))
        blended = L.blend(out.I_hat, out.M_hat, bg)
        terms = {"p": L.pixel_loss(out, target),
                 "mask": L.mask_loss(out.M_hat, sup_mask)}
        if cfg.model_type != "pixel_only":
            terms["feat"] = L.feature_loss(self.extractor, blended, target,
                                           w.feature_layer_weights)
            terms["tv"] = L.tv_loss(blended, out.M_hat, w.beta_i, w.beta_m)
            if self.uses_adversary:
                terms["adv"] = L.adv_loss(self.disc, blended)
        weights = w if cfg.model_type != "pixel_only" else replace(
            w, lambda_feat=0, lambda_adv=0, lambda_tv=0)
        return terms, L.total_loss(terms, weights)

    # -- optimization steps ------------------------------------------------

    def _generator_step(self, identity_id, frame_indices, update_texture):
        cfg = self.config
        tex_param = self.textures[identity_id]
        tex_data = tex_param if update_texture else tex_param.detach()
        self.opt_model.zero_grad(set_to_none=True)
        if update_texture:
            self.opt_tex[identity_id].zero_grad(set_to_none=True)
        record = {}
        total_val = 0.0
        blended_for_disc, real_for_disc = None, None
        for fi in frame_indices:
            sample = self._prepare(identity_id, fi)
            out = self._forward(tex_data, sample["uv"], sample["coverage"],
                                sample["normal"])
            terms, total = self._losses(out, sample)
            (total / len(frame_indices)).backward()
            total_val += float(total.detach()) / len(frame_indices)
            for k, v in terms.items():
                record[k] = record.get(k, 0.0) + float(v.detach()) / len(frame_indices)
            if self.uses_adversary:
                blended_for_disc = L.blend(out.I_hat.detach(), out.M_hat.detach(),
                                           sample["background"])
                real_for_disc = sample["image"]
        self.opt_model.step()
        if update_texture:
            self.opt_tex[identity_id].step()
        record["total"] = total_val
        if self.uses_adversary and blended_for_disc is not None:
            self.opt_disc.zero_grad(set_to_none=True)
            dl = L.disc_loss(self.disc, real_for_disc, blended_for_disc)
            dl.backward()
            self.opt_disc.step()
            record["disc"] = float(dl.detach())
        return record

    def train_step_renderer(self, identity_id, frame_indices):
        """Renderer-only objective: texture gradients are blocked."""
        return self._generator_step(identity_id, frame_indices,
                                    update_texture=False)

    def train_step_keyframe(self, identity_id, frame_indices):
        """Keyframe objective: texture and renderer both update."""
        return self._generator_step(identity_id, frame_indices,
                                    update_texture=True)

    def _batch(self, pool):
        n = min(self.config.batch_size, len(pool))
        picks = self.rng.choice(len(pool), size=n, replace=len(pool) < n)
        return [pool[i] for i in picks]

    def run(self, until_step=None, on_step=None):
        cfg = self.config
        if self.schedule is None:
            self.schedule = identity_schedule(list(self.datasets), cfg.steps,
                                              cfg.seed)
        stop = cfg.steps if until_step is None else min(until_step, cfg.steps)
        joint = cfg.model_type != "anr"
        while self.step < stop:
            ident = self.schedule[self.step]
            keys = self.keyframes[ident].frame_indices
            non_key = [i for i in self.train_indices[ident] if i not in keys]
            try:
                if joint:
                    rec = self.train_step_keyframe(ident, self._batch(
                        self.train_indices[ident]))
                    recs = {"renderer": rec}
                else:
                    rec_r = self.train_step_renderer(ident, self._batch(non_key))
                    recs = {"renderer": rec_r}
                    if (self.step + 1) % max(1, cfg.alternation_ratio) == 0 and keys:
                        recs["keyframe"] = self.train_step_keyframe(
                            ident, self._batch(keys))
            except L.LossNaNError as e:
                raise TrainingAborted(self.step, e.term)
            self.step += 1
            for phase, rec in recs.items():
                entry = {"step": self.step, "phase": phase, "identity": ident}
                entry.update(rec)
                self.loss_log.append(entry)
            if on_step is not None:
                on_step(self)
        return self

    # -- inference --------------------------------------------------------

    def render_pose(self, identity_id, pose, camera, background=None):
        """Render an arbitrary pose/camera; returns (blended, mask, coverage)."""
        cfg = self.config
        seq = self.datasets.get(identity_id)
        if identity_id not in self.textures:
            raise KeyError(identity_id)
        mesh = seq.mesh if seq else self.mesh
        skel = seq.skeleton if seq else self.skeleton
        posed_v, posed_n = skin_mesh(mesh, skel, pose)
        rc = raster_mod.RasterConfig(cfg.resolution, cfg.resolution)
        r = raster_mod.rasterize(posed_v, posed_n, mesh, camera, rc)
        return self._render_raster(identity_id, r, background)

    def render_frame(self, identity_id, frame_idx):
        frame = self.datasets[identity_id].frames[frame_idx]
        r = self.raster(identity_id, frame_idx)
        return self._render_raster(identity_id, r, frame.background)

    def _render_raster(self, identity_id, r, background):
        with torch.no_grad():
            out = self._forward(self.textures[identity_id].detach(),
                                r.uv, r.coverage, r.normal_image)
            if self.config.model_type == "dnr":
                blended = out.I_hat
            else:
                bg = torch.zeros_like(out.I_hat) if background is None \
                    else torch.as_tensor(background, dtype=out.I_hat.dtype)
                blended = L.blend(out.I_hat, out.M_hat, bg)
        return (blended.numpy().astype(np.float64),
                out.M_hat.detach().numpy().astype(np.float64),
                r.coverage.copy())

    # -- persistence ------------------------------------------------------

    def config_hash(self):
        return self.config.hash()

    def _optimizer_arrays(self, prefix, opt, params):
        arrays, steps = {}, {}
        for i, p in enumerate(params):
            st = opt.state.get(p)
            if not st:
                continue
            arrays["%s/%d/exp_avg" % (prefix, i)] = st["exp_avg"].numpy()
            arrays["%s/%d/exp_avg_sq" % (prefix, i)] = st["exp_avg_sq"].numpy()
            s = st["step"]
            steps["%s/%d" % (prefix, i)] = int(s.item() if torch.is_tensor(s) else s)
        return arrays, steps

    def _restore_optimizer(self, prefix, opt, params, arrays, steps):
        for i, p in enumerate(params):
            k = "%s/%d" % (prefix, i)
            if k not in steps:
                continue
            opt.state[p] = {
                "step": torch.tensor(float(steps[k])),
                "exp_avg": torch.as_tensor(arrays[k + "/exp_avg"]).clone(),
                "exp_avg_sq": torch.as_tensor(arrays[k + "/exp_avg_sq"]).clone(),
            }

    def save_checkpoint(self, path):
        arrays = {}
        opt_steps = {}
        for name, p in self.model.state_dict().items():
            arrays["model/" + name] = p.numpy()
        if self.disc is not None:
            for name, p in self.disc.state_dict().items():
                arrays["disc/" + name] = p.numpy()
        for ident, tex in self.textures.items():
            arrays["texture/" + ident] = tex.detach().numpy()
        a, s = self._optimizer_arrays("opt_model", self.opt_model,
                                      list(self.model.parameters()))
        arrays.update(a); opt_steps.update(s)
        if self.opt_disc is not None:
            a, s = self._optimizer_arrays("opt_disc", self.opt_disc,
                                          list(self.disc.parameters()))
            arrays.update(a); opt_steps.update(s)
        for ident in sorted(self.textures):
            a, s = self._optimizer_arrays("opt_tex/" + ident,
                                          self.opt_tex[ident],
                                          [self.textures[ident]])
            arrays.update(a); opt_steps.update(s)
        arrays["mesh/vertices"] = self.mesh.vertices
        arrays["mesh/faces"] = self.mesh.faces
        arrays["mesh/uvs"] = self.mesh.uvs
        arrays["mesh/vertex_normals"] = self.mesh.vertex_normals
        arrays["mesh/skin_weights"] = self.mesh.skin_weights
        arrays["skeleton/parents"] = self.skeleton.parents
        arrays["skeleton/rest_rotations"] = self.skeleton.rest_rotations
        arrays["skeleton/rest_translations"] = self.skeleton.rest_translations
        manifest = {
            "format_version": CHECKPOINT_VERSION,
            "step": self.step,
            "model_type": self.config.model_type,
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "identities": sorted(self.textures),
            "texture_seed": self.config.seed,
            "rng_state": _rng_state_to_json(self.rng),
            "optimizer_steps": opt_steps,
        }
        save_archive(path, manifest, arrays)

    @classmethod
    def load_checkpoint(cls, path):
        manifest, arrays = load_archive(path)
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        cfg = TrainConfig.from_dict(manifest["config"])
        mesh = CoarseMesh(arrays["mesh/vertices"], arrays["mesh/faces"],
                          arrays["mesh/uvs"], arrays["mesh/vertex_normals"],
                          arrays["mesh/skin_weights"])
        skel = Skeleton(arrays["skeleton/parents"],
                        arrays["skeleton/rest_rotations"],
                        arrays["skeleton/rest_translations"])
        state = cls(cfg, mesh, skel, seed_rng=False)
        state.step = manifest["step"]
        state.rng = _rng_state_from_json(manifest["rng_state"])
        model_sd = {k[len("model/"):]: torch.as_tensor(v).clone()
                    for k, v in arrays.items() if k.startswith("model/")}
        state.model.load_state_dict(model_sd)
        if state.disc is not None:
            disc_sd = {k[len("disc/"):]: torch.as_tensor(v).clone()
                       for k, v in arrays.items() if k.startswith("disc/")}
            state.disc.load_state_dict(disc_sd)
        steps = manifest["optimizer_steps"]
        state._restore_optimizer("opt_model", state.opt_model,
                                 list(state.model.parameters()), arrays, steps)
        if state.opt_disc is not None:
            state._restore_optimizer("opt_disc", state.opt_disc,
                                     list(state.disc.parameters()), arrays, steps)
        for ident in manifest["identities"]:
            param = torch.nn.Parameter(
                torch.as_tensor(arrays["texture/" + ident]).clone())
            state.textures[ident] = param
            state.opt_tex[ident] = torch.optim.Adam([param], lr=cfg.lr_texture,
                                                    betas=(0.5, 0.999))
            state._restore_optimizer("opt_tex/" + ident, state.opt_tex[ident],
                                     [param], arrays, steps)
        return state

    def attach_datasets(self, datasets):
        """Re-attach sequences after loading a checkpoint (needed for
        further training and evaluation; keyframes are recomputed
        deterministically)."""
        for ident, seq in datasets.items():
            if ident not in self.textures:
                raise KeyError("checkpoint has no texture for %r" % ident)
            self.datasets[ident] = seq
            n = len(seq.frames)
            n_train = max(1, int(round(self.config.train_fraction * n)))
            self.train_indices[ident] = list(range(n_train))
            self.test_indices[ident] = list(range(n_train, n))
            self._select_keyframes_for(ident)


def _rng_state_to_json(rng):
    st = rng.bit_generator.state
    return json.loads(json.dumps(st, default=int))


def _rng_state_from_json(state):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng


def configure_threads():
    """TEXAVATAR_THREADS=1 forces bit-reproducible single-threaded mode."""
    n = os.environ.get("TEXAVATAR_THREADS")
    if n:
        torch.set_num_threads(max(1, int(n)))


def train(datasets, config, on_step=None):
    """Build a TrainState over `datasets` (identity -> SyntheticSequence)
    and run the full schedule; returns the trained state."""
    if not datasets:
        raise ValueError("at least one identity required")
    configure_threads()
    first = next(iter(datasets.values()))
    state = TrainState(config, first.mesh, first.skeleton)
    for ident in sorted(datasets):
        state.add_identity(ident, datasets[ident])
    state.run(on_step=on_step)
    return state
