"""Convolutional gain/exposure regressor.

Input: 15 channels at ``resolution x resolution``, ordered
``[I_t x3, I_{t-1} x3, I_{t-2} x3, G_t, G_{t-1}, G_{t-2}, E_t, E_{t-1}, E_{t-2}]``
where the image channels hold the (downsampled, replicated) frame intensity
in [0, 1] and the parameter channels are constant planes holding the
normalized gain and exposure. Output: unclamped normalized (gain, exposure)
for the next frame.
"""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
import torch
from torch import nn

from .params import CameraParams, denormalize, normalize
from .scene_sim import Frame

log = logging.getLogger(__name__)

N_CHANNELS = 15
CHECKPOINT_MAGIC = b"PEXCKPT\0"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    resolution: int = 64
    conv_widths: tuple[int, int, int, int] = (8, 16, 32, 32)
    fc_widths: tuple[int, int] = (64, 32)
    kernel_size: int = 3
    dropout_p: float = 0.4
    epsilon: float = 0.5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if len(self.conv_widths) != 4:
            raise ValueError("exactly four convolutional blocks are required")
        if len(self.fc_widths) != 2:
            raise ValueError("two hidden fully-connected layers are required (three in total)")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        object.__setattr__(self, "conv_widths", tuple(int(w) for w in self.conv_widths))
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))

    @property
    def feature_side(self) -> int:
        """Spatial side after four ceil-mode 2x poolings."""
        side = self.resolution
        for _ in range(4):
            side = math.ceil(side / 2)
        return side

    @property
    def flat_features(self) -> int:
        return self.conv_widths[-1] * self.feature_side ** 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    holdout_fraction: float = 0.1
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2:
            raise ValueError("need epochs >= 1 and batch_size >= 2")


class ExposureNet(nn.Module):
    def __init__(self, cfg: NetworkConfig = NetworkConfig()):
        super().__init__()
        self.cfg = cfg
        blocks = []
        c_in = N_CHANNELS
        for c_out in cfg.conv_widths:
            blocks += [
                nn.Conv2d(c_in, c_out, cfg.kernel_size, padding=cfg.kernel_size // 2, bias=False),
                nn.BatchNorm2d(c_out, momentum=cfg.bn_momentum),
                nn.ReLU(),
                nn.MaxPool2d(2, ceil_mode=True),
            ]
            c_in = c_out
        self.features = nn.Sequential(*blocks)
        f1, f2 = cfg.fc_widths
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(cfg.flat_features, f1, bias=False),
            nn.BatchNorm1d(f1, momentum=cfg.bn_momentum),
            nn.ReLU(),
            nn.Dropout(cfg.dropout_p),
            nn.Linear(f1, f2, bias=False),
            nn.BatchNorm1d(f2, momentum=cfg.bn_momentum),
            nn.ReLU(),
            nn.Dropout(cfg.dropout_p),
            nn.Linear(f2, 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        r = self.cfg.resolution
        if x.ndim != 4 or x.shape[1:] != (N_CHANNELS, r, r):
            raise ValueError(f"expected input of shape (N, {N_CHANNELS}, {r}, {r}), got {tuple(x.shape)}")
        return self.head(self.features(x))


@dataclass
class Checkpoint:
    config: NetworkConfig
    state: dict
    round: int = 1
    meta: dict = field(default_factory=dict)
    _net: ExposureNet | None = field(default=None, repr=False, compare=False)

    def network(self) -> ExposureNet:
        """Eval-mode network holding this checkpoint's weights (built once)."""
        if self._net is None:
            net = ExposureNet(self.config)
            net.load_state_dict(self.state)
            net.eval()
            self._net = net
        return self._net


# ------------------------------------------------------------------- inputs

def downsample(frame: Frame, resolution: int) -> np.ndarray:
    img = frame.normalized_image()
    return cv2.resize(img, (resolution, resolution), interpolation=cv2.INTER_AREA)


def assemble_input(images: Sequence[np.ndarray], params: Sequence[CameraParams]) -> np.ndarray:
    """Build one (15, r, r) input from three downsampled images, oldest first."""
    if len(images) != 3 or len(params) != 3:
        raise ValueError("exactly three timesteps are required")
    r = images[0].shape[0]
    out = np.empty((N_CHANNELS, r, r), dtype=np.float32)
    newest_first = list(range(2, -1, -1))
    for k, idx in enumerate(newest_first):
        out[3 * k:3 * k + 3] = images[idx]
    for k, idx in enumerate(newest_first):
        g, e = normalize(params[idx])
        out[9 + k] = g
        out[12 + k] = e
    return out


def history_input(history: Sequence[Frame], resolution: int) -> np.ndarray:
    """Network input from the latest frames; short histories repeat the earliest frame."""
    if len(history) == 0:
        raise ValueError("empty history")
    frames = list(history[-3:])
    while len(frames) < 3:
        frames.insert(0, frames[0])
    return assemble_input([downsample(f, resolution) for f in frames], [f.params for f in frames])


# ------------------------------------------------------------------- loss

def exposure_gain_loss(pred: torch.Tensor, target: torch.Tensor, epsilon: float = 0.5) -> torch.Tensor:
    """``eps * mean|g - g*| + (1 - eps) * mean|e - e*|`` over the batch."""
    gain_err = (pred[:, 0] - target[:, 0]).abs().mean()
    exp_err = (pred[:, 1] - target[:, 1]).abs().mean()
    return epsilon * gain_err + (1.0 - epsilon) * exp_err


def loss(predictions, targets, epsilon: float = 0.5) -> float:
    """Array-friendly wrapper of :func:`exposure_gain_loss`."""
    p = torch.as_tensor(np.asarray(predictions, dtype=np.float64)).reshape(-1, 2)
    t = torch.as_tensor(np.asarray(targets, dtype=np.float64)).reshape(-1, 2)
    return float(exposure_gain_loss(p, t, epsilon))


# ------------------------------------------------------------------- inference

def forward(inputs, checkpoint: Checkpoint, mode: str = "eval") -> np.ndarray:
    """Raw (N, 2) outputs. ``mode='train'`` enables dropout and batch statistics."""
    net = checkpoint.network()
    x = torch.as_tensor(np.asarray(inputs, dtype=np.float32))
    if x.ndim == 3:
        x = x[None]
    net.train(mode == "train")
    try:
        with torch.no_grad():
            out = net(x)
    finally:
        net.eval()
    return out.numpy().astype(np.float64)


def clamp_outputs(raw: Sequence[float]) -> CameraParams:
    g, e = float(raw[0]), float(raw[1])
    return denormalize(min(max(g, 0.0), 1.0), min(max(e, 0.0), 1.0))


def predict_next(history: Sequence[Frame], checkpoint: Checkpoint) -> CameraParams:
    x = history_input(history, checkpoint.config.resolution)
    return clamp_outputs(forward(x, checkpoint)[0])


# ------------------------------------------------------------------- training

class SampleBank:
    """Downsampled frames shared by many samples, assembled into batches lazily."""

    def __init__(self, samples, resolution: int):
        self.resolution = resolution
        self._cache: dict[int, np.ndarray] = {}
        self.samples = list(samples)
        self.targets = np.array([s.target for s in self.samples], dtype=np.float32).reshape(-1, 2)

    def _image(self, frame: Frame) -> np.ndarray:
        key = id(frame)
        img = self._cache.get(key)
        if img is None:
            img = downsample(frame, self.resolution)
            self._cache[key] = img
        return img

    def batch(self, idx: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
        x = np.stack([assemble_input([self._image(f) for f in self.samples[i].frames],
                                     [f.params for f in self.samples[i].frames]) for i in idx])
        return torch.from_numpy(x), torch.from_numpy(self.targets[idx])

    def __len__(self) -> int:
        return len(self.samples)


def split_by_episode(samples, holdout_fraction: float, seed: int):
    episodes = sorted({s.episode for s in samples})
    n_hold = int(round(holdout_fraction * len(episodes)))
    if holdout_fraction > 0 and n_hold == 0 and len(episodes) >= 2:
        n_hold = 1
    rng = np.random.default_rng([int(seed), 0x5E])
    held = set(rng.permutation(episodes)[:n_hold].tolist()) if n_hold else set()
    train = [s for s in samples if s.episode not in held]
    hold = [s for s in samples if s.episode in held]
    return train, hold


def _evaluate(net: ExposureNet, bank: SampleBank, epsilon: float, batch_size: int) -> float:
    if len(bank) == 0:
        return float("nan")
    net.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(bank), batch_size):
            idx = np.arange(start, min(start + batch_size, len(bank)))
            x, y = bank.batch(idx)
            total += float(exposure_gain_loss(net(x), y, epsilon)) * len(idx)
    return total / len(bank)


def train(samples, config: NetworkConfig = NetworkConfig(), hyper: TrainConfig = TrainConfig(),
          seed: int = 0, round: int = 1, init: Checkpoint | None = None,
          history: list | None = None) -> Checkpoint:
    """Minibatch Adam on the gain/exposure loss.

    ``history`` (if given) receives one dict per epoch with the mean train-mode
    loss, the eval-mode loss over the training split and the held-out loss.
    Row 0 holds the losses of the untrained network.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no training samples")
    torch.set_num_threads(hyper.threads)
    torch.manual_seed(seed)
    train_s, hold_s = split_by_episode(samples, hyper.holdout_fraction, seed)
    train_bank = SampleBank(train_s, config.resolution)
    hold_bank = SampleBank(hold_s, config.resolution)

    net = ExposureNet(config)
    if init is not None:
        net.load_state_dict(init.state)
    opt = torch.optim.Adam(net.parameters(), lr=hyper.learning_rate, weight_decay=hyper.weight_decay)
    rng = np.random.default_rng([int(seed), 0x7A])
    n = len(train_bank)
    if history is not None:
        history.append({"epoch": 0, "train_loss": float("nan"),
                        "held_out_loss": _evaluate(net, hold_bank, config.epsilon, 256),
                        "train_eval_loss": _evaluate(net, train_bank, config.epsilon, 256)})
    for epoch in range(1, hyper.epochs + 1):
        net.train()
        order = rng.permutation(n)
        running, seen = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            if len(idx) < 2:      # batch norm needs at least two samples
                continue
            x, y = train_bank.batch(idx)
            opt.zero_grad()
            batch_loss = exposure_gain_loss(net(x), y, config.epsilon)
            if not torch.isfinite(batch_loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            batch_loss.backward()
            opt.step()
            running += batch_loss.item() * len(idx)
            seen += len(idx)
        row = {"epoch": epoch, "train_loss": running / max(seen, 1),
               "held_out_loss": _evaluate(net, hold_bank, config.epsilon, 256)}
        if history is not None:
            row["train_eval_loss"] = _evaluate(net, train_bank, config.epsilon, 256)
            history.append(row)
        log.info("epoch %d train %.5f held-out %.5f", epoch, row["train_loss"], row["held_out_loss"])
    net.eval()
    state = {k: v.detach().clone() for k, v in net.state_dict().items()}
    return Checkpoint(config, state, round=round,
                      meta={"seed": seed, "epochs": hyper.epochs, "n_train": len(train_s),
                            "n_held_out": len(hold_s)})


# ------------------------------------------------------------------- checkpoint I/O
#
# Layout (little-endian):
#   8 bytes  magic  b"PEXCKPT\0"
#   u32      format version
#   u32      length of the JSON header, then the UTF-8 JSON header
#            {"config": ..., "round": ..., "meta": ..., "tensors": [[name, shape], ...]}
#   per tensor, in header order: prod(shape) float32 values, C order.

def _header(ckpt: Checkpoint) -> dict:
    return {
        "config": asdict(ckpt.config),
        "round": ckpt.round,
        "meta": ckpt.meta,
        "tensors": [[name, list(t.shape)] for name, t in ckpt.state.items()],
    }


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = json.dumps(_header(ckpt), sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    for t in ckpt.state.values():
        buf.write(t.detach().cpu().numpy().astype("<f4").tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    cfg = header["config"]
    cfg["conv_widths"] = tuple(cfg["conv_widths"])
    cfg["fc_widths"] = tuple(cfg["fc_widths"])
    config = NetworkConfig(**cfg)
    offset = 16 + hlen
    reference = ExposureNet(config).state_dict()
    state = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        state[name] = torch.from_numpy(arr.copy()).to(reference[name].dtype)
    return Checkpoint(config, state, round=header["round"], meta=header["meta"])
