"""Residual 1-D convolutional classifier over raw window tensors.

Three residual blocks (64, 128, 128 filters; kernel widths 8, 5, 3 inside each
block), batch normalization and ReLU after every convolution, a 1x1-projected
shortcut where channel widths differ, global average pooling over time, and a
softmax output layer fed by the pooled vector concatenated with any static
features (annotation dummies, demographics).

Built on torch (CPU). Determinism contract: a fixed single-threaded torch
configuration, parameter init from the training seed, and seeded batch order
make identical (data, config, seed) runs bit-identical; per-channel
standardization is fitted on the training data only and stored in the model.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

RESNET_FORMAT = "tscope-resnet"
RESNET_VERSION = 1
_MAGIC = b"TSRN\x01"

BLOCK_FILTERS = (64, 128, 128)
KERNEL_WIDTHS = (8, 5, 3)

# Fixed intra-op thread count: reductions then have one schedule, so repeated
# runs are bit-identical regardless of the --jobs setting of the caller.
torch.set_num_threads(1)


class TrainingDivergedError(RuntimeError):
    def __init__(self, lr: float, epoch: int, batch_index: int):
        super().__init__(
            f"NaN loss during training (lr={lr}, epoch={epoch}, batch_index={batch_index})"
        )
        self.lr = lr
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class ResnetConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    patience: int = 20          # early stop on training-loss plateau
    min_delta: float = 1e-5
    shuffle: str = "per-epoch"  # or "fixed": one seeded shuffle before epoch 1
    dtype: str = "float64"      # "float64" | "float32"

    def torch_dtype(self):
        return torch.float64 if self.dtype == "float64" else torch.float32


class _ResidualBlock(nn.Module):
    def __init__(self, in_channels: int, filters: int):
        super().__init__()
        self.conv1 = nn.Conv1d(in_channels, filters, KERNEL_WIDTHS[0], padding="same")
        self.bn1 = nn.BatchNorm1d(filters)
        self.conv2 = nn.Conv1d(filters, filters, KERNEL_WIDTHS[1], padding="same")
        self.bn2 = nn.BatchNorm1d(filters)
        self.conv3 = nn.Conv1d(filters, filters, KERNEL_WIDTHS[2], padding="same")
        self.bn3 = nn.BatchNorm1d(filters)
        if in_channels != filters:
            self.shortcut = nn.Conv1d(in_channels, filters, 1)
            self.shortcut_bn = nn.BatchNorm1d(filters)
        else:
            self.shortcut = None
            self.shortcut_bn = None

    def forward(self, x):
        h = torch.relu(self.bn1(self.conv1(x)))
        h = torch.relu(self.bn2(self.conv2(h)))
        h = self.bn3(self.conv3(h))
        s = x if self.shortcut is None else self.shortcut_bn(self.shortcut(x))
        return torch.relu(h + s)


class _ResNet(nn.Module):
    def __init__(self, in_channels: int, n_statics: int, n_classes: int = 2):
        super().__init__()
        blocks = []
        prev = in_channels
        for filters in BLOCK_FILTERS:
            blocks.append(_ResidualBlock(prev, filters))
            prev = filters
        self.blocks = nn.ModuleList(blocks)
        self.n_statics = n_statics
        self.fc = nn.Linear(prev + n_statics, n_classes)

    def forward(self, x, statics):
        # x: (N, C, T); pooling removes the time axis, so 89- and 90-step
        # windows flow through the same parameters.
        h = x
        for block in self.blocks:
            h = block(h)
        pooled = h.mean(dim=2)
        if self.n_statics:
            pooled = torch.cat([pooled, statics], dim=1)
        return self.fc(pooled)


@dataclass(eq=False)
class ResnetModel:
    net: _ResNet
    config: ResnetConfig
    channel_names: list[str]
    static_names: list[str]
    class_names: tuple[str, str]
    channel_mean: np.ndarray
    channel_std: np.ndarray
    static_mean: np.ndarray
    static_std: np.ndarray
    seed: int = 0

    def _prepare(self, tensor: np.ndarray, statics: np.ndarray | None):
        tensor = np.asarray(tensor, dtype=np.float64)
        if tensor.ndim != 3 or tensor.shape[2] != len(self.channel_names):
            raise ValueError(
                f"dimension mismatch: expected (n, t, {len(self.channel_names)}), "
                f"got {tensor.shape}"
            )
        n_statics = len(self.static_names)
        if n_statics:
            if statics is None or np.asarray(statics).shape[1] != n_statics:
                raise ValueError(f"dimension mismatch: expected {n_statics} static features")
            statics = np.asarray(statics, dtype=np.float64)
        else:
            statics = np.zeros((tensor.shape[0], 0), dtype=np.float64)
        x = (tensor - self.channel_mean) / self.channel_std
        s = (statics - self.static_mean) / self.static_std if n_statics else statics
        dtype = self.config.torch_dtype()
        xt = torch.from_numpy(np.ascontiguousarray(x.transpose(0, 2, 1))).to(dtype)
        st = torch.from_numpy(np.ascontiguousarray(s)).to(dtype)
        return xt, st

    def predict_proba(
        self, tensor: np.ndarray, statics: np.ndarray | None = None, batch_size: int = 256
    ) -> np.ndarray:
        xt, st = self._prepare(tensor, statics)
        self.net.eval()
        outputs = []
        with torch.no_grad():
            for lo in range(0, xt.shape[0], batch_size):
                logits = self.net(xt[lo : lo + batch_size], st[lo : lo + batch_size])
                outputs.append(torch.softmax(logits, dim=1))
        return torch.cat(outputs, dim=0).double().numpy()

    def conv_parameter_count(self) -> int:
        total = 0
        for block in self.net.blocks:
            for mod in (block.conv1, block.conv2, block.conv3, block.shortcut):
                if mod is not None:
                    total += sum(p.numel() for p in mod.parameters())
        return total

    # -- serialization: binary tensor pack + JSON config sidecar ------------

    def save(self, basepath: str | Path) -> list[Path]:
        base = Path(basepath)
        tensors: list[tuple[str, np.ndarray]] = []
        for name, value in self.net.state_dict().items():
            tensors.append((name, value.detach().cpu().double().numpy()))
        tensors += [
            ("normalizer.channel_mean", self.channel_mean),
            ("normalizer.channel_std", self.channel_std),
            ("normalizer.static_mean", self.static_mean),
            ("normalizer.static_std", self.static_std),
        ]
        bin_path = base.with_suffix(".bin")
        with open(bin_path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(tensors)))
            for name, arr in tensors:
                arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
                encoded = name.encode()
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}Q" if arr.ndim else "<0Q", *arr.shape))
                fh.write(arr.tobytes())
        sidecar = {
            "format": RESNET_FORMAT,
            "version": RESNET_VERSION,
            "config": asdict(self.config),
            "channel_names": self.channel_names,
            "static_names": self.static_names,
            "class_names": list(self.class_names),
            "seed": self.seed,
        }
        json_path = base.with_suffix(".json")
        with open(json_path, "w") as fh:
            json.dump(sidecar, fh, indent=2)
            fh.write("\n")
        return [bin_path, json_path]

    @classmethod
    def load(cls, basepath: str | Path) -> "ResnetModel":
        base = Path(basepath)
        with open(base.with_suffix(".json")) as fh:
            sidecar = json.load(fh)
        if sidecar.get("format") != RESNET_FORMAT:
            raise ValueError(f"{base}: not a {RESNET_FORMAT} sidecar")
        config = ResnetConfig(**sidecar["config"])
        tensors: dict[str, np.ndarray] = {}
        with open(base.with_suffix(".bin"), "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{base}: bad magic in model binary")
            (count,) = struct.unpack("<Q", fh.read(8))
            for _ in range(count):
                (name_len,) = struct.unpack("<I", fh.read(4))
                name = fh.read(name_len).decode()
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
                n_items = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(fh.read(8 * n_items), dtype="<f8").reshape(shape)
                tensors[name] = data
        net = _ResNet(len(sidecar["channel_names"]), len(sidecar["static_names"]))
        net = net.to(config.torch_dtype())
        state = {}
        for name, value in net.state_dict().items():
            stored = tensors[name]
            state[name] = torch.from_numpy(np.ascontiguousarray(stored)).to(value.dtype)
        net.load_state_dict(state)
        return cls(
            net=net,
            config=config,
            channel_names=list(sidecar["channel_names"]),
            static_names=list(sidecar["static_names"]),
            class_names=tuple(sidecar["class_names"]),
            channel_mean=tensors["normalizer.channel_mean"].copy(),
            channel_std=tensors["normalizer.channel_std"].copy(),
            static_mean=tensors["normalizer.static_mean"].copy(),
            static_std=tensors["normalizer.static_std"].copy(),
            seed=int(sidecar.get("seed", 0)),
        )


def _safe_std(std: np.ndarray) -> np.ndarray:
    std = std.copy()
    std[std == 0.0] = 1.0
    return std


def train_resnet_arrays(
    tensor: np.ndarray,
    statics: np.ndarray | None,
    labels: np.ndarray,
    config: ResnetConfig | None = None,
    seed: int = 0,
    channel_names: list[str] | None = None,
    static_names: list[str] | None = None,
    class_names: tuple[str, str] = ("negative", "positive"),
) -> ResnetModel:
    """Adam on cross-entropy over seeded minibatches, with plateau early stopping."""
    config = config or ResnetConfig()
    tensor = np.asarray(tensor, dtype=np.float64)
    n, _, n_channels = tensor.shape
    if statics is None:
        statics = np.zeros((n, 0), dtype=np.float64)
    statics = np.asarray(statics, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    channel_names = channel_names or [f"ch{j}" for j in range(n_channels)]
    static_names = static_names if static_names is not None else [
        f"s{j}" for j in range(statics.shape[1])
    ]

    # Standardization is fitted here, on the training windows only.
    ch_mean = tensor.mean(axis=(0, 1))
    ch_std = _safe_std(tensor.std(axis=(0, 1)))
    st_mean = statics.mean(axis=0) if statics.shape[1] else np.zeros(0)
    st_std = _safe_std(statics.std(axis=0)) if statics.shape[1] else np.zeros(0)

    torch.manual_seed(seed)
    net = _ResNet(n_channels, statics.shape[1]).to(config.torch_dtype())

    model = ResnetModel(
        net=net,
        config=config,
        channel_names=list(channel_names),
        static_names=list(static_names),
        class_names=class_names,
        channel_mean=ch_mean,
        channel_std=ch_std,
        static_mean=st_mean,
        static_std=st_std,
        seed=seed,
    )
    xt, st = model._prepare(tensor, statics if statics.shape[1] else None)
    yt = torch.from_numpy(labels)

    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr)
    loss_fn = nn.CrossEntropyLoss()
    order_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    order = order_rng.permutation(n)

    best_loss = np.inf
    stale = 0
    net.train()
    for epoch in range(config.epochs):
        if config.shuffle == "per-epoch" and epoch > 0:
            order = order_rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            rows = order[lo : lo + config.batch_size]
            optimizer.zero_grad()
            logits = net(xt[rows], st[rows])
            loss = loss_fn(logits, yt[rows])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(config.lr, epoch, bi)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        epoch_loss /= max(n_batches, 1)
        if epoch_loss < best_loss - config.min_delta:
            best_loss = epoch_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    net.eval()
    return model


def train_resnet(
    windowset,
    static_features: np.ndarray | None = None,
    config: ResnetConfig | None = None,
    seed: int = 0,
    static_names: list[str] | None = None,
) -> ResnetModel:
    """Train on a WindowSet; statics default to its aggregated annotation dummies."""
    if static_features is None and windowset.dummy_names:
        static_features = windowset.aggregates()
        static_names = list(windowset.dummy_names)
    return train_resnet_arrays(
        windowset.tensor(),
        static_features,
        windowset.labels(),
        config=config,
        seed=seed,
        channel_names=list(windowset.channel_names),
        static_names=static_names,
        class_names=windowset.class_names(),
    )


def predict_proba_resnet(
    model: ResnetModel, windowset_or_tensor, statics: np.ndarray | None = None
) -> np.ndarray:
    if hasattr(windowset_or_tensor, "tensor"):
        ws = windowset_or_tensor
        if statics is None and model.static_names and ws.dummy_names:
            statics = ws.aggregates()
        return model.predict_proba(ws.tensor(), statics)
    return model.predict_proba(np.asarray(windowset_or_tensor), statics)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def _loss_fn_for(name: str):
    if name == "cross_entropy":
        return lambda logits, y: nn.functional.cross_entropy(logits, y)
    if name == "mse":
        return lambda out, y: torch.mean((out.squeeze(-1) - y.double()) ** 2)
    raise ValueError(f"unknown loss '{name}'")


def gradient_check_module(
    net: nn.Module,
    inputs: tuple,
    targets,
    fraction: float = 0.01,
    step: float = 1e-4,
    seed: int = 0,
    loss: str = "cross_entropy",
    max_checks: int | None = None,
) -> float:
    """Max relative error between autograd and central finite differences.

    Runs in float64 and eval mode (fixed normalization statistics) so the loss
    is a pure function of the parameters. Relative error uses the denominator
    max(|g_a|, |g_fd|, 1e-2) to keep near-zero gradients from dividing by zero.

    A central difference whose probe interval straddles a rectifier kink is
    biased by the slope jump, not by any gradient defect. Each probe therefore
    refines the step (step, step/4, step/16, step/32) until the finite
    difference agrees with the analytic value, and reports the best agreement;
    shrinking the interval walks it off the kink, while a genuinely wrong
    analytic gradient disagrees with every refinement and still fails.
    """
    net = copy.deepcopy(net).double().eval()
    inputs = tuple(torch.as_tensor(t).double() for t in inputs)
    targets = torch.as_tensor(targets)
    loss_fn = _loss_fn_for(loss)

    base = loss_fn(net(*inputs), targets)
    params = [p for p in net.parameters() if p.requires_grad]
    grads = torch.autograd.grad(base, params)

    def evaluate() -> float:
        with torch.no_grad():
            return float(loss_fn(net(*inputs), targets))

    def central(flat, i, orig, h) -> float:
        flat[i] = orig + h
        up = evaluate()
        flat[i] = orig - h
        down = evaluate()
        flat[i] = orig
        return (up - down) / (2.0 * h)

    def relative_error(ga: float, fd: float) -> float:
        return abs(ga - fd) / max(abs(ga), abs(fd), 1e-2)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    worst = 0.0
    checked = 0
    budget = max_checks if max_checks is not None else np.inf
    for param, grad in zip(params, grads):
        flat = param.data.view(-1)
        g = grad.view(-1)
        n = flat.numel()
        take = max(1, int(round(fraction * n)))
        take = int(min(take, budget - checked)) if np.isfinite(budget) else take
        if take <= 0:
            break
        idx = rng.choice(n, size=min(take, n), replace=False)
        for i in idx:
            orig = float(flat[i])
            ga = float(g[i])
            err = np.inf
            for h in (step, step / 4.0, step / 16.0, step / 32.0):
                err = min(err, relative_error(ga, central(flat, i, orig, h)))
                if err <= 1e-6:
                    break
            worst = max(worst, err)
            checked += 1
    return worst


def gradient_check(
    model: ResnetModel,
    tensor: np.ndarray,
    statics: np.ndarray | None,
    labels,
    fraction: float = 0.01,
    step: float = 1e-4,
    seed: int = 0,
    max_checks: int | None = None,
) -> float:
    xt, st = model._prepare(np.asarray(tensor), statics)
    return gradient_check_module(
        model.net,
        (xt, st),
        torch.as_tensor(np.asarray(labels, dtype=np.int64)),
        fraction=fraction,
        step=step,
        seed=seed,
        loss="cross_entropy",
        max_checks=max_checks,
    )
