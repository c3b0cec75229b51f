"""Training orchestration: alternating critic / generator-detector updates,
seeded data sampling, checkpointing, and epoch evaluation.

All run randomness (batch order, crops, flips, gradient-penalty mixing)
is drawn from a single torch.Generator whose state travels with the
checkpoint, so (config, manifest, seed) fully determine every step and a
resumed run continues exactly where the interrupted one left off.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from . import detection as det
from . import losses as L
from .annotations import AnnotationRecord
from .checkpoint import load_checkpoint, save_checkpoint
from .degrade import bicubic_upsample, synthesize_lr
from .image import ImageArray, center_crop_to_multiple, load_png
from .manifest import DatasetManifest
from .metrics import GroundTruthBox, Prediction, map_at, mse, psnr, ssim
from .models import (
    Critic,
    DetectorConfig,
    DetectorHead,
    GeneratorConfig,
    HRGenerator,
    LRGenerator,
    init_parameters,
)
from .report import MetricsReport


class TrainStepError(RuntimeError):
    """A step hit a non-finite loss; model state was left untouched."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 2
    crop_size: int = 64  # LR pixels
    scale: int = 4
    lr_generator: float = 1e-4
    lr_critic: float = 1e-4
    lr_detector: float = 1e-4
    critic_steps: int = 1
    seed: int = 0
    checkpoint_every: int = 1  # epochs
    eval_every: int = 1  # epochs
    detector_warmup_epochs: int = 0
    reduction: str = "mean"
    max_steps: int | None = None
    conf_threshold: float = 0.05
    nms_iou: float = 0.45
    eval_iou: float = 0.5
    augment_flips: bool = True
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    weights: L.LossWeights = field(default_factory=L.LossWeights)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.crop_size < 1:
            raise ValueError("batch_size and crop_size must be positive")
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if self.critic_steps < 1 or self.critic_steps > 5:
            raise ValueError(f"critic_steps must be in [1, 5], got {self.critic_steps}")
        if min(self.lr_generator, self.lr_critic, self.lr_detector) < 0:
            raise ValueError("learning rates must be >= 0")
        self.generator = replace(self.generator, scale=self.scale)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        nested = {
            "generator": GeneratorConfig,
            "detector": DetectorConfig,
            "weights": L.LossWeights,
        }
        kwargs = {}
        for key, sub_cls in nested.items():
            if key in doc:
                sub = doc.pop(key)
                _reject_unknown(sub, sub_cls, key)
                kwargs[key] = sub_cls(**{k: _tuplify(v) for k, v in sub.items()})
        _reject_unknown(doc, cls, "config")
        kwargs.update(doc)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _tuplify(v):
    return tuple(v) if isinstance(v, list) else v


def _reject_unknown(doc: dict, cls, where: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Geometry helpers


def crop_annotations(records: list[AnnotationRecord], img_w: int, img_h: int,
                     left: int, top: int, size: int) -> list[AnnotationRecord]:
    """Re-express annotations in a square pixel crop; objects whose center
    falls outside the crop are dropped, boxes are clipped to the crop."""
    out = []
    for r in records:
        cx = r.cx * img_w - left
        cy = r.cy * img_h - top
        if not (0 <= cx < size and 0 <= cy < size):
            continue
        x0 = max(0.0, cx - r.w * img_w / 2)
        x1 = min(float(size), cx + r.w * img_w / 2)
        y0 = max(0.0, cy - r.h * img_h / 2)
        y1 = min(float(size), cy + r.h * img_h / 2)
        if x1 - x0 <= 1e-9 or y1 - y0 <= 1e-9:
            continue
        out.append(
            AnnotationRecord(r.class_id, (x0 + x1) / 2 / size, (y0 + y1) / 2 / size,
                             (x1 - x0) / size, (y1 - y0) / size)
        )
    return out


def flip_annotations(records: list[AnnotationRecord], horizontal: bool,
                     vertical: bool) -> list[AnnotationRecord]:
    out = []
    for r in records:
        cx = 1.0 - r.cx if horizontal else r.cx
        cy = 1.0 - r.cy if vertical else r.cy
        out.append(replace(r, cx=min(cx, 1.0), cy=min(cy, 1.0)))
    return out


# ---------------------------------------------------------------------------
# Model state

_MODULE_NAMES = ("hr_gen", "lr_gen", "critic_hr", "critic_lr", "detector")


@dataclass
class ModelState:
    hr_gen: HRGenerator
    lr_gen: LRGenerator
    critic_hr: Critic
    critic_lr: Critic
    detector: DetectorHead
    opt_gen: torch.optim.Adam
    opt_critic: torch.optim.Adam
    torch_gen: torch.Generator
    anchors: list[list[tuple[float, float]]]
    step: int = 0
    epoch: int = 0

    def modules(self) -> dict[str, torch.nn.Module]:
        return {name: getattr(self, name) for name in _MODULE_NAMES}

    def parameters_finite(self) -> bool:
        return all(
            torch.isfinite(p).all()
            for m in self.modules().values()
            for p in m.parameters()
        )


def build_model_state(config: TrainConfig,
                      anchors: list[list[tuple[float, float]]] | None = None) -> ModelState:
    gen_cfg = config.generator
    hr_gen = HRGenerator(gen_cfg)
    lr_gen = LRGenerator(gen_cfg)
    critic_hr = Critic(gen_cfg.in_channels, input_size=config.crop_size * config.scale)
    critic_lr = Critic(gen_cfg.in_channels, input_size=config.crop_size)
    detector = DetectorHead(config.detector, gen_cfg.in_channels)
    for i, m in enumerate((hr_gen, lr_gen, critic_hr, critic_lr, detector)):
        init_parameters(m, seed=config.seed * 1000 + i)
    opt_gen = torch.optim.Adam(
        [
            {"params": list(hr_gen.parameters()) + list(lr_gen.parameters()),
             "lr": config.lr_generator},
            {"params": list(detector.parameters()), "lr": config.lr_detector},
        ],
        betas=(0.5, 0.9),
    )
    opt_critic = torch.optim.Adam(
        list(critic_hr.parameters()) + list(critic_lr.parameters()),
        lr=config.lr_critic, betas=(0.5, 0.9),
    )
    torch_gen = torch.Generator().manual_seed(config.seed)
    if anchors is None:
        anchors = det.default_anchors(config.detector.strides,
                                      config.detector.anchors_per_level)
    return ModelState(hr_gen, lr_gen, critic_hr, critic_lr, detector,
                      opt_gen, opt_critic, torch_gen, anchors)


def state_arrays(state: ModelState) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for name, module in state.modules().items():
        for pname, p in module.state_dict().items():
            arrays[f"params.{name}.{pname}"] = p.detach().numpy()
    for label, opt in (("gen", state.opt_gen), ("critic", state.opt_critic)):
        sd = opt.state_dict()
        for pidx, st in sd["state"].items():
            for k, v in st.items():
                arrays[f"opt.{label}.{pidx}.{k}"] = (
                    v.detach().numpy() if torch.is_tensor(v) else np.asarray(v)
                )
    arrays["rng.torch"] = state.torch_gen.get_state().numpy()
    return arrays


def save_state(state: ModelState, config: TrainConfig, path: str | Path) -> None:
    meta = {
        "step": state.step,
        "epoch": state.epoch,
        "anchors": [[list(a) for a in level] for level in state.anchors],
        "config": _jsonable(config.to_dict()),
    }
    save_checkpoint(path, state_arrays(state), meta)


def load_state(path: str | Path) -> tuple[ModelState, TrainConfig]:
    arrays, meta = load_checkpoint(path)
    config = TrainConfig.from_dict(meta["config"])
    anchors = [[tuple(a) for a in level] for level in meta["anchors"]]
    state = build_model_state(config, anchors=anchors)
    for name, module in state.modules().items():
        sd = {
            pname: torch.from_numpy(arrays[f"params.{name}.{pname}"].copy())
            for pname in module.state_dict()
        }
        module.load_state_dict(sd)
    for label, opt in (("gen", state.opt_gen), ("critic", state.opt_critic)):
        prefix = f"opt.{label}."
        per_param: dict[int, dict[str, torch.Tensor]] = {}
        for key, arr in arrays.items():
            if key.startswith(prefix):
                _, _, pidx, k = key.split(".", 3)
                t = torch.from_numpy(arr.copy())
                if k == "step":
                    t = t.reshape(())  # Adam keeps its step counter 0-d
                per_param.setdefault(int(pidx), {})[k] = t
        if per_param:
            sd = opt.state_dict()
            sd["state"] = per_param
            opt.load_state_dict(sd)
    state.torch_gen.set_state(torch.from_numpy(arrays["rng.torch"].copy()))
    state.step = int(meta["step"])
    state.epoch = int(meta["epoch"])
    return state, config


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _snapshot(state: ModelState):
    params = {
        name: {k: v.clone() for k, v in m.state_dict().items()}
        for name, m in state.modules().items()
    }
    opts = (
        _clone_opt_state(state.opt_gen),
        _clone_opt_state(state.opt_critic),
    )
    return params, opts


def _clone_opt_state(opt):
    sd = opt.state_dict()
    return {
        "state": {
            i: {k: (v.clone() if torch.is_tensor(v) else v) for k, v in st.items()}
            for i, st in sd["state"].items()
        },
        "param_groups": [dict(g) for g in sd["param_groups"]],
    }


def _restore(state: ModelState, snap) -> None:
    params, opts = snap
    for name, m in state.modules().items():
        m.load_state_dict(params[name])
    state.opt_gen.load_state_dict(opts[0])
    state.opt_critic.load_state_dict(opts[1])


# ---------------------------------------------------------------------------
# Batches


@dataclass
class TrainBatch:
    lr: torch.Tensor  # (B, C, h, w) in [0, 1]
    hr: torch.Tensor  # (B, C, s*h, s*w) in [0, 1]
    annotations: list[list[AnnotationRecord]]  # per HR crop


def train_step(batch: TrainBatch, state: ModelState, config: TrainConfig) -> L.LossReport:
    """One MCGR optimization step; raises TrainStepError (state untouched)
    if any loss term goes non-finite."""
    hr_size = config.crop_size * config.scale
    if tuple(batch.hr.shape[-2:]) != (hr_size, hr_size):
        raise ValueError(
            f"HR batch {tuple(batch.hr.shape[-2:])} does not match crop "
            f"{hr_size} for scale {config.scale}"
        )
    grid = det.build_anchor_grid((hr_size, hr_size), config.detector.strides, state.anchors)
    joint = state.epoch >= config.detector_warmup_epochs
    snap = _snapshot(state)
    try:
        report = _train_step_inner(batch, state, config, grid, joint)
    except (ValueError, FloatingPointError) as exc:
        _restore(state, snap)
        raise TrainStepError(f"step {state.step}: {exc}") from exc
    if not state.parameters_finite():
        _restore(state, snap)
        raise TrainStepError(f"step {state.step}: update produced non-finite parameters")
    state.step += 1
    return report


def _require_finite(value: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise ValueError(f"non-finite {what} ({float(value)})")
    return value


def _train_step_inner(batch: TrainBatch, state: ModelState, config: TrainConfig,
                      grid: det.AnchorGrid, joint: bool) -> L.LossReport:
    w = config.weights
    red = config.reduction
    lr_img, hr_img = batch.lr, batch.hr

    # (a) critic updates on detached generator outputs
    with torch.no_grad():
        sr_fixed = state.hr_gen(lr_img)
        lr_fixed = state.lr_gen(hr_img)
    l_critic_val = 0.0
    l_gp_val = 0.0
    for _ in range(config.critic_steps):
        gp_hr = L.gradient_penalty(state.critic_hr, hr_img, sr_fixed,
                                   w.lambda_gp, state.torch_gen)
        gp_lr = L.gradient_penalty(state.critic_lr, lr_img, lr_fixed,
                                   w.lambda_gp, state.torch_gen)
        loss_c = (
            L.critic_loss(state.critic_hr(hr_img), state.critic_hr(sr_fixed), gp_hr)
            + L.critic_loss(state.critic_lr(lr_img), state.critic_lr(lr_fixed), gp_lr)
        )
        _require_finite(loss_c, "critic loss")
        state.opt_critic.zero_grad(set_to_none=True)
        loss_c.backward()
        state.opt_critic.step()
        l_critic_val = float(loss_c.detach())
        l_gp_val = float((gp_hr + gp_lr).detach())

    # (b) joint generator (+ detector) update
    sr = state.hr_gen(lr_img)
    lr_fake = state.lr_gen(hr_img)
    l_gen_l1 = L.generator_l1(sr, hr_img, red)
    l_cyclic = (
        L.l1_loss(sr, hr_img, red)
        + L.mse_loss(state.hr_gen(lr_fake), hr_img, red)
        + L.l1_loss(lr_fake, lr_img, red)
        + L.mse_loss(state.lr_gen(sr), lr_img, red)
    )
    l_adv = L.generator_adversarial(state.critic_hr(sr)) + L.generator_adversarial(
        state.critic_lr(lr_fake)
    )
    zero = sr.new_zeros(())
    l_bbox, l_obj, l_cls = zero, zero, zero
    if joint:
        n_classes = config.detector.n_classes
        bbox_terms, obj_terms, cls_terms = [], [], []
        for i, records in enumerate(batch.annotations):
            grids = state.detector(sr[i : i + 1])
            assignments = det.assign_targets(records, grid)
            preds = det.gather_box_predictions(grids, assignments, grid, n_classes)
            targets = torch.tensor([a.target for a in assignments], dtype=sr.dtype)
            bbox_terms.append(L.bbox_loss(preds, targets.reshape(-1, 4)))
            o, c = det.objectness_class_losses(grids, assignments, grid, n_classes)
            obj_terms.append(o)
            cls_terms.append(c)
        b = len(batch.annotations)
        l_bbox = torch.stack(bbox_terms).sum() / b
        l_obj = torch.stack(obj_terms).sum() / b
        l_cls = torch.stack(cls_terms).sum() / b
    l_det = l_bbox + w.objectness * l_obj + w.classification * l_cls
    loss_g = w.mu1 * l_gen_l1 + l_cyclic + w.adversarial * l_adv + w.mu3 * l_det
    _require_finite(loss_g, "generator loss")
    state.opt_gen.zero_grad(set_to_none=True)
    loss_g.backward()
    state.opt_gen.step()

    l_total = L.total_loss(l_gen_l1.detach(), torch.tensor(l_critic_val),
                           l_det.detach(), w)
    return L.LossReport(
        l_cyclic=float(l_cyclic.detach()),
        l_gen_l1=float(l_gen_l1.detach()),
        l_adversarial=float(l_adv.detach()),
        l_critic=l_critic_val,
        l_gp=l_gp_val,
        l_bbox=float(l_bbox.detach()),
        l_objectness=float(l_obj.detach()),
        l_classification=float(l_cls.detach()),
        l_total=float(l_total),
    )


# ---------------------------------------------------------------------------
# Data access


class CorpusImages:
    """Images and annotations for one manifest split, held in memory."""

    def __init__(self, manifest: DatasetManifest, split: str, data_root: str | Path = "."):
        self.items: list[tuple[ImageArray, list[AnnotationRecord]]] = []
        root = Path(data_root)
        for e in manifest.entries:
            if e.split != split:
                continue
            path = Path(e.image_path)
            if not path.is_absolute():
                path = root / path
            self.items.append((load_png(path), list(e.annotations)))
        if not self.items:
            raise ValueError(f"split {split!r} is empty")

    def __len__(self):
        return len(self.items)


def sample_batch(corpus: CorpusImages, indices: list[int], state: ModelState,
                 config: TrainConfig) -> TrainBatch:
    s = config.scale
    hr_size = config.crop_size * s
    lrs, hrs, anns = [], [], []
    for idx in indices:
        img, records = corpus.items[idx]
        h, w = img.height, img.width
        if h < hr_size or w < hr_size:
            raise ValueError(f"image {h}x{w} smaller than HR crop {hr_size}")
        top = int(torch.randint(0, (h - hr_size) // s + 1, (1,),
                                generator=state.torch_gen)) * s
        left = int(torch.randint(0, (w - hr_size) // s + 1, (1,),
                                 generator=state.torch_gen)) * s
        crop = img.data[:, top : top + hr_size, left : left + hr_size] / img.peak
        recs = crop_annotations(records, w, h, left, top, hr_size)
        if config.augment_flips:
            flips = torch.randint(0, 2, (2,), generator=state.torch_gen)
            fh, fv = bool(flips[0]), bool(flips[1])
            if fh:
                crop = crop[:, :, ::-1]
            if fv:
                crop = crop[:, ::-1, :]
            recs = flip_annotations(recs, fh, fv)
        crop = np.ascontiguousarray(crop)
        hr_arr = ImageArray(crop, peak=1.0)
        lr_arr = synthesize_lr(hr_arr, s)
        hrs.append(torch.from_numpy(crop).float())
        lrs.append(torch.from_numpy(lr_arr.data).float())
        anns.append(recs)
    return TrainBatch(torch.stack(lrs), torch.stack(hrs), anns)


# ---------------------------------------------------------------------------
# Run loop


def train(config: TrainConfig, manifest: DatasetManifest, run_dir: str | Path,
          data_root: str | Path = ".",
          resume_from: str | Path | None = None) -> ModelState:
    """Full training run; writes config snapshot, NDJSON step log,
    per-cadence checkpoints, and validation metric reports to run_dir."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    train_corpus = CorpusImages(manifest, "train", data_root)
    val_corpus = CorpusImages(manifest, "val", data_root)

    if resume_from is not None:
        # Architecture and optimizer settings come from the checkpoint;
        # loop-control fields come from the caller so a resumed run can
        # train past the point where the interrupted one stopped.
        state, loaded = load_state(resume_from)
        config = replace(loaded, epochs=config.epochs, max_steps=config.max_steps)
        start_epoch = state.epoch
    else:
        boxes = [(a.w, a.h) for img, recs in train_corpus.items for a in recs]
        anchors = det.kmeans_anchors(
            boxes, config.crop_size * config.scale, config.detector.strides,
            config.detector.anchors_per_level, seed=config.seed,
        )
        state = build_model_state(config, anchors=anchors)
        start_epoch = 0
        (run_dir / "config.json").write_text(
            json.dumps(_jsonable(config.to_dict()), indent=2, sort_keys=True)
        )

    steps_per_epoch = max(1, len(train_corpus) // config.batch_size)
    log_path = run_dir / "train_log.ndjson"
    log_mode = "a" if resume_from is not None else "w"
    best_map = -1.0
    with open(log_path, log_mode, encoding="utf-8") as log:
        for epoch in range(start_epoch, config.epochs):
            state.epoch = epoch
            perm = torch.randperm(len(train_corpus), generator=state.torch_gen).tolist()
            for j in range(steps_per_epoch):
                if config.max_steps is not None and state.step >= config.max_steps:
                    break
                indices = perm[j * config.batch_size : (j + 1) * config.batch_size]
                if len(indices) < config.batch_size:
                    break
                batch = sample_batch(train_corpus, indices, state, config)
                try:
                    report = train_step(batch, state, config)
                except TrainStepError:
                    save_state(state, config, run_dir / f"checkpoint_halt_{state.step:07d}.ckpt")
                    raise
                rec = {
                    "step": state.step,
                    "epoch": epoch,
                    "losses": report.to_dict(),
                    "lr_generator": config.lr_generator,
                    "lr_critic": config.lr_critic,
                }
                log.write(json.dumps(rec, sort_keys=True) + "\n")
            state.epoch = epoch + 1
            if (epoch + 1) % config.eval_every == 0:
                rep = evaluate(state, manifest, "val", config.scale,
                               iou_thresholds=(config.eval_iou,),
                               conf_threshold=config.conf_threshold,
                               data_root=data_root, corpus=val_corpus)
                (run_dir / f"metrics_epoch_{epoch + 1:04d}.json").write_text(
                    json.dumps(rep.to_dict(), indent=2, sort_keys=True)
                )
                cur = rep.map_sf2 if config.scale == 2 else rep.map_sf4
                if cur is not None and cur > best_map:
                    best_map = cur
                    save_state(state, config, run_dir / "checkpoint_best.ckpt")
            if (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs:
                save_state(state, config, run_dir / f"checkpoint_{state.step:07d}.ckpt")
            if config.max_steps is not None and state.step >= config.max_steps:
                break
    save_state(state, config, run_dir / "checkpoint_final.ckpt")
    return state


# ---------------------------------------------------------------------------
# Evaluation


def _detect(state: ModelState, img_unit: torch.Tensor, config: TrainConfig,
            image_id: str) -> list[Prediction]:
    h, w = img_unit.shape[-2:]
    grid = det.build_anchor_grid((w, h), config.detector.strides, state.anchors)
    with torch.no_grad():
        raw = state.detector(img_unit[None])
    boxes = det.decode_predictions(raw, grid, config.conf_threshold,
                                   config.detector.n_classes)
    boxes = det.nms(boxes, config.nms_iou)
    return [Prediction(image_id, b) for b in boxes]


def evaluate(state: ModelState, manifest: DatasetManifest, split: str, scale: int,
             iou_thresholds: tuple[float, ...] = (0.5,), conf_threshold: float | None = None,
             data_root: str | Path = ".", corpus: CorpusImages | None = None,
             sr_fn=None) -> MetricsReport:
    """Per-image IQA of the SR output against HR plus detection mAP on HR
    and SR inputs.  `sr_fn` (ImageArray lr -> ImageArray sr) overrides the
    generator, e.g. for the bicubic baseline."""
    config = _config_of(state, scale, conf_threshold)
    if corpus is None:
        corpus = CorpusImages(manifest, split, data_root)
    multiple = scale * max(config.detector.strides)
    mses, psnrs, ssims, times = [], [], [], []
    preds_hr: list[Prediction] = []
    preds_sr: list[Prediction] = []
    gts: list[GroundTruthBox] = []
    for i, (img, records) in enumerate(corpus.items):
        image_id = f"{split}_{i:05d}"
        hr = center_crop_to_multiple(img, multiple)
        left = (img.width - hr.width) // 2
        top = (img.height - hr.height) // 2
        recs = _crop_rect(records, img, left, top, hr.width, hr.height)
        for r in recs:
            gts.append(GroundTruthBox(image_id, r.class_id, (
                (r.cx - r.w / 2) * hr.width, (r.cy - r.h / 2) * hr.height,
                (r.cx + r.w / 2) * hr.width, (r.cy + r.h / 2) * hr.height,
            )))
        lr = synthesize_lr(hr, scale)
        t0 = time.perf_counter()
        if sr_fn is not None:
            sr_img = sr_fn(lr)
        else:
            with torch.no_grad():
                lr_t = torch.from_numpy(lr.to_unit()).float()[None]
                sr_t = state.hr_gen(lr_t)[0].clamp(0, 1)
            sr_img = ImageArray(sr_t.numpy().astype(np.float64) * hr.peak, peak=hr.peak)
        sr_preds = _detect(state, torch.from_numpy(sr_img.to_unit()).float(),
                           config, image_id)
        times.append((time.perf_counter() - t0) * 1e3)
        preds_sr.extend(sr_preds)
        preds_hr.extend(
            _detect(state, torch.from_numpy(hr.to_unit()).float(), config, image_id)
        )
        mses.append(mse(sr_img, hr))
        psnrs.append(psnr(sr_img, hr, peak=255.0))
        ssims.append(ssim(sr_img, hr, peak=255.0))
    iou_thr = iou_thresholds[0]
    all_ids = {f"{split}_{i:05d}" for i in range(len(corpus.items))}
    map_hr, _ = map_at(preds_hr, gts, iou_thr, valid_ids=all_ids)
    map_sr, per_class_sr = map_at(preds_sr, gts, iou_thr, valid_ids=all_ids)
    per_class = {f"class_{c}": e.ap for c, e in per_class_sr.items()}
    curves = {f"class_{c}": e.pr_points for c, e in per_class_sr.items()}
    return MetricsReport(
        mse=float(np.mean(mses)),
        psnr=float(np.mean(psnrs)),
        ssim=float(np.mean(ssims)),
        map_hr=map_hr,
        map_sf2=map_sr if scale == 2 else None,
        map_sf4=map_sr if scale == 4 else None,
        mean_inference_ms=float(np.mean(times)),
        split=split,
        iou_threshold=iou_thr,
        n_images=len(corpus.items),
        per_class_ap=per_class,
        pr_curves=curves,
    )


def bicubic_sr_fn(scale: int):
    """Stand-in generator: plain bicubic upsampling (the Bicubic baseline)."""
    return lambda lr: bicubic_upsample(lr, scale)


def _crop_rect(records, img, left, top, cw, ch):
    # rectangular center crop; like crop_annotations but non-square
    out = []
    for r in records:
        cx = r.cx * img.width - left
        cy = r.cy * img.height - top
        if not (0 <= cx < cw and 0 <= cy < ch):
            continue
        x0 = max(0.0, cx - r.w * img.width / 2)
        x1 = min(float(cw), cx + r.w * img.width / 2)
        y0 = max(0.0, cy - r.h * img.height / 2)
        y1 = min(float(ch), cy + r.h * img.height / 2)
        if x1 - x0 <= 1e-9 or y1 - y0 <= 1e-9:
            continue
        out.append(AnnotationRecord(r.class_id, (x0 + x1) / 2 / cw, (y0 + y1) / 2 / ch,
                                    (x1 - x0) / cw, (y1 - y0) / ch))
    return out


def _config_of(state: ModelState, scale: int, conf_threshold: float | None) -> TrainConfig:
    cfg = TrainConfig(
        scale=scale,
        generator=replace(state.hr_gen.cfg, scale=scale),
        detector=state.detector.cfg,
    )
    if conf_threshold is not None:
        cfg.conf_threshold = conf_threshold
    return cfg
