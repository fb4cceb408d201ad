"""Joint training of the depth and pose/mask networks.

One snippet per step: forward both networks, evaluate the multi-scale
view-synthesis loss, backpropagate, apply an adaptive-moment update.  Runs
are bit-reproducible for a fixed seed: snippet order is derived from
(seed, epoch) alone, so resuming from a checkpoint continues the exact
uninterrupted trajectory.

Checkpoint container layout (little-endian): magic ``CYLSFMCKPT``, uint32
format version, uint32 entry count, then per entry a uint32 name length,
the UTF-8 name, uint32 rank, ``rank`` uint64 dims, and the float64 payload.
The training step and the config echo travel as the reserved entries
``__step__`` and ``__config__`` (UTF-8 bytes widened to float64).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CylSfmError, Diverged
from .losses import LossConfig, total_loss
from .nets import (NetSpec, depth_backward, depth_forward, init_depth_params,
                   init_pose_params, pose_mask_backward, pose_mask_forward)
from .optim import Adam

CKPT_MAGIC = b"CYLSFMCKPT"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    arrays: dict
    step: int = 0
    config_echo: str = ""


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write atomically: compose in a temp file, then rename over the target."""
    entries = dict(ckpt.arrays)
    entries["__step__"] = np.array(float(ckpt.step))
    entries["__config__"] = np.frombuffer(
        ckpt.config_echo.encode("utf-8"), dtype=np.uint8).astype(np.float64)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(entries)))
        for name in sorted(entries):
            arr = np.ascontiguousarray(entries[name], dtype=np.float64)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(arr.astype("<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        if f.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise CylSfmError(f"{path} is not a checkpoint file")
        version, count = struct.unpack("<II", f.read(8))
        if version != CKPT_VERSION:
            raise CylSfmError(f"unsupported checkpoint version {version}")
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = [struct.unpack("<Q", f.read(8))[0] for _ in range(rank)]
            n = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(dims)
            arrays[name] = np.array(data)
    step = int(arrays.pop("__step__", np.zeros(()))[()])
    config = arrays.pop("__config__", np.zeros(0))
    echo = bytes(config.astype(np.uint8)).decode("utf-8") if config.size else ""
    return Checkpoint(arrays, step, echo)


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 0      # 0 disables periodic checkpoints
    log_path: str | None = None    # append-only metrics log


@dataclass
class TrainResult:
    depth_params: dict
    pose_params: dict
    trace: list = field(default_factory=list)
    checkpoint: Checkpoint | None = None


def _snippet_order(seed, epoch, n):
    return np.random.default_rng([seed, epoch]).permutation(n)


def _log_line(step, breakdown):
    parts = [f"step={step}"]
    parts += [f"{k}={breakdown[k]:.17g}" for k in ("total", "pixel", "smooth", "exp")]
    return " ".join(parts)


def _split_params(arrays):
    depth = {k[len("depth."):]: v for k, v in arrays.items() if k.startswith("depth.")}
    pose = {k[len("pose."):]: v for k, v in arrays.items() if k.startswith("pose.")}
    return depth, pose


def train(snippets, spec: NetSpec, cfg: TrainConfig, loss_cfg: LossConfig,
          checkpoint_path=None, resume_from=None) -> TrainResult:
    """Run cfg.steps single-snippet updates over the dataset.

    All snippets must share dimensions and source count.  When
    ``resume_from`` (a path or Checkpoint) is given, parameters, moments and
    the step counter are restored and the run continues the original
    trajectory exactly.
    """
    if not snippets:
        raise CylSfmError("empty snippet list")
    n_src = snippets[0].n_sources
    use_mask = loss_cfg.lambda_e > 0

    echo = f"spec={spec} train={cfg} loss={loss_cfg}"
    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) \
            else load_checkpoint(resume_from)
        flat = {k: v for k, v in ckpt.arrays.items() if not k.startswith("adam.")}
        depth_params, pose_params = _split_params(flat)
        start_step = ckpt.step
    else:
        depth_params = init_depth_params(spec, seed=cfg.seed)
        pose_params = init_pose_params(spec, n_src, seed=cfg.seed + 1)
        start_step = 0

    flat = {f"depth.{k}": v for k, v in depth_params.items()}
    flat.update({f"pose.{k}": v for k, v in pose_params.items()})
    opt = Adam(flat, cfg.beta1, cfg.beta2)
    if resume_from is not None and any(k.startswith("adam.") for k in ckpt.arrays):
        opt.load_state_arrays(ckpt.arrays)

    log_f = open(cfg.log_path, "a") if cfg.log_path else None
    trace = []
    n = len(snippets)
    try:
        for step in range(start_step, cfg.steps):
            epoch, pos = divmod(step, n)
            snip = snippets[_snippet_order(cfg.seed, epoch, n)[pos]]

            disps, d_cache = depth_forward(depth_params, snip.target, spec)
            poses, masks, p_cache = pose_mask_forward(
                pose_params, snip.target, snip.sources, spec)
            res, grads = total_loss(
                snip.target, snip.sources, disps,
                [p.to_vector() for p in poses],
                masks if use_mask else None,
                snip.cam, loss_cfg, want_grads=True)
            if not np.isfinite(res.total):
                raise Diverged(f"training loss became {res.total} at step {step}")

            d_grads = depth_backward(depth_params, d_cache,
                                     grads.disparities, spec)
            p_grads = pose_mask_backward(pose_params, p_cache, grads.poses,
                                         grads.mask_logits if use_mask else None,
                                         spec)
            gflat = {f"depth.{k}": v for k, v in d_grads.items()}
            gflat.update({f"pose.{k}": v for k, v in p_grads.items()})
            opt.step(flat, gflat, cfg.lr)
            if not all(np.isfinite(v).all() for v in flat.values()):
                raise Diverged(f"parameters became non-finite at step {step}")

            trace.append(res.breakdown())
            if log_f:
                log_f.write(_log_line(step, trace[-1]) + "\n")

            done = step + 1
            if checkpoint_path and cfg.checkpoint_every \
                    and done % cfg.checkpoint_every == 0 and done < cfg.steps:
                save_checkpoint(f"{checkpoint_path}.step{done}",
                                _make_ckpt(flat, opt, done, echo))
    finally:
        if log_f:
            log_f.close()

    ckpt = _make_ckpt(flat, opt, cfg.steps, echo)
    if checkpoint_path:
        save_checkpoint(checkpoint_path, ckpt)
    return TrainResult(depth_params, pose_params, trace, ckpt)


def _make_ckpt(flat, opt, step, echo):
    arrays = {k: v.copy() for k, v in flat.items()}
    arrays.update({k: v.copy() if isinstance(v, np.ndarray) else v
                   for k, v in opt.state_arrays().items()})
    return Checkpoint(arrays, step, echo)


def params_from_checkpoint(ckpt: Checkpoint):
    """(depth_params, pose_params) views of a loaded checkpoint."""
    flat = {k: v for k, v in ckpt.arrays.items() if not k.startswith("adam.")}
    return _split_params(flat)
