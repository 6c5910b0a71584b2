"""Mini-batch training: supervised teacher fitting and DKD student distillation."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distill import DkdConfig, cross_entropy, student_objective, warmup_weight
from .store import ModelFormatError, model_from_bytes, model_to_bytes

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"KDCK"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, step: int, value: float):
        super().__init__(
            f"loss became non-finite ({value}) at epoch {epoch}, step {step}; "
            "try a smaller learning rate"
        )
        self.epoch, self.step, self.value = epoch, step, value


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    dkd: DkdConfig | None = None
    class_weights: tuple | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if self.class_weights is not None:
            if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
                raise ValueError("class_weights must be a positive pair")


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict):
        for name, p in params.items():
            p -= self.lr * grads[name]

    def state(self) -> dict:
        return {}

    def load_state(self, state: dict):
        pass


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        out = {"t": np.array([self.t], dtype=np.float64)}
        out.update({f"m/{k}": v for k, v in self.m.items()})
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, state: dict):
        self.t = int(state.get("t", [0])[0])
        self.m = {k[2:]: v.copy() for k, v in state.items() if k.startswith("m/")}
        self.v = {k[2:]: v.copy() for k, v in state.items() if k.startswith("v/")}


OPTIMIZERS = {"adam": Adam, "sgd": Sgd}


@dataclass
class EpochLog:
    epoch: int
    hard_loss: float
    dkd_loss: float = 0.0
    warmup_weight: float = 0.0
    total_loss: float = field(default=float("nan"))


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def _check(value, epoch, step):
    if not np.isfinite(value):
        raise DivergenceError(epoch, step, value)


def _run(model, train, cfg: TrainConfig, step_fn, checkpoint_path=None, resume_from=None):
    if train.features.shape[1] != model.input_dim:
        raise ValueError(
            f"model expects {model.input_dim} features but the dataset has {train.features.shape[1]}"
        )
    rng = np.random.default_rng(cfg.seed)
    opt = OPTIMIZERS[cfg.optimizer](cfg.learning_rate)
    history: list[EpochLog] = []
    start = 0
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        if ck.model.kind != model.kind or ck.model.dims != model.dims:
            raise ModelFormatError("checkpoint model does not match the network being trained")
        for name, arr in model.params().items():
            arr[...] = ck.model.params()[name]
        rng.bit_generator.state = ck.rng_state
        opt.load_state(ck.optimizer_state)
        start = ck.epoch + 1
    x, y = train.features, np.asarray(train.labels, dtype=np.intp)
    params = model.params()
    for epoch in range(start, cfg.epochs):
        sums = np.zeros(3)
        n_seen = 0
        weight = 0.0
        for step, idx in enumerate(_batches(len(y), cfg.batch_size, rng)):
            total, hard, dkd, weight, grads = step_fn(x[idx], y[idx], epoch)
            _check(total, epoch, step)
            opt.step(params, grads)
            sums += np.array([hard, dkd, total]) * len(idx)
            n_seen += len(idx)
        hard, dkd, total = sums / n_seen
        entry = EpochLog(epoch, hard, dkd, weight, total)
        history.append(entry)
        log.debug("epoch %d: %s", epoch, entry)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, model, epoch, total, rng, opt)
    return model, history


def train_teacher(net, train, cfg: TrainConfig, checkpoint_path=None, resume_from=None):
    """Plain cross-entropy training; returns ``(net, history)``."""
    if cfg.dkd is not None:
        raise ValueError("teacher training takes no distillation config")

    def step(xb, yb, epoch):
        logits, caches = net.forward_cached(xb)
        loss, g = cross_entropy(logits, yb, cfg.class_weights)
        grads, _ = net.backward(caches, g)
        return loss, loss, 0.0, 0.0, grads

    return _run(net, train, cfg, step, checkpoint_path, resume_from)


def distill_student(student, teacher, train, cfg: TrainConfig, checkpoint_path=None, resume_from=None):
    """Train ``student`` on ``(1 - lam) * CE + lam * min(epoch / warmup, 1) * DKD``.

    The teacher is only evaluated; its parameters are never touched.
    """
    if cfg.dkd is None:
        raise ValueError("distillation needs a DkdConfig")
    if teacher.input_dim != student.input_dim or teacher.output_dim != student.output_dim:
        raise ValueError(
            f"teacher dims {teacher.dims} and student dims {student.dims} disagree on input/output size"
        )

    def step(xb, yb, epoch):
        t_logits = teacher.forward(xb)
        s_logits, caches = student.forward_cached(xb)
        total, hard, dkd, weight, g = student_objective(
            t_logits, s_logits, yb, epoch, cfg.dkd, cfg.class_weights
        )
        grads, _ = student.backward(caches, g)
        return total, hard, dkd, weight, grads

    return _run(student, train, cfg, step, checkpoint_path, resume_from)


def write_history(history, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "hard_loss", "dkd_loss", "warmup_weight", "total_loss"])
        for h in history:
            w.writerow([h.epoch, repr(h.hard_loss), repr(h.dkd_loss), repr(h.warmup_weight), repr(h.total_loss)])
    return path


def parameter_digest(net) -> str:
    h = hashlib.sha256()
    for name, arr in sorted(net.params().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# --------------------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    model: object
    epoch: int
    running_loss: float
    rng_state: dict
    optimizer_state: dict = field(default_factory=dict)


def _pack_arrays(arrays: dict) -> bytes:
    meta = {k: list(v.shape) for k, v in arrays.items()}
    blob = json.dumps(meta, sort_keys=True).encode()
    data = b"".join(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes() for k in sorted(arrays))
    return struct.pack("<I", len(blob)) + blob + data


def _unpack_arrays(raw: bytes) -> dict:
    (n,) = struct.unpack_from("<I", raw)
    meta = json.loads(raw[4 : 4 + n])
    off, out = 4 + n, {}
    for k in sorted(meta):
        shape = tuple(meta[k])
        count = int(np.prod(shape))
        out[k] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += 8 * count
    return out


def save_checkpoint(path, model, epoch, running_loss, rng, optimizer=None) -> Path:
    sections = [
        model_to_bytes(model),
        json.dumps(rng.bit_generator.state, sort_keys=True).encode(),
        _pack_arrays(optimizer.state() if optimizer is not None else {}),
    ]
    body = CHECKPOINT_MAGIC + struct.pack("<IId", CHECKPOINT_VERSION, epoch, running_loss)
    for s in sections:
        body += struct.pack("<Q", len(s)) + s
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ModelFormatError(f"{path}: not a checkpoint file")
    if zlib.crc32(raw[:-4]) != struct.unpack("<I", raw[-4:])[0]:
        raise ModelFormatError(f"{path}: checkpoint checksum mismatch")
    version, epoch, loss = struct.unpack_from("<IId", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ModelFormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    off = 4 + struct.calcsize("<IId")
    sections = []
    for _ in range(3):
        (n,) = struct.unpack_from("<Q", raw, off)
        off += 8
        sections.append(raw[off : off + n])
        off += n
    return Checkpoint(
        model_from_bytes(sections[0]),
        epoch,
        loss,
        json.loads(sections[1]),
        _unpack_arrays(sections[2]),
    )
