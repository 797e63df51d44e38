"""Shared optimization machinery: stepped-decay Adam schedule, gradient
verification by central finite differences, deterministic seeding, and
a byte-stable checkpoint container.
"""
from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

CLIP_NORM = 5.0

_CKPT_MAGIC = b"MVCKPT1\n"


@dataclass(frozen=True)
class OptimizerSchedule:
    """Learning rate ell * r^floor(k / s); r=1 or s=None means constant."""
    initial_rate: float
    decay_factor: float = 1.0
    decay_interval: int | None = None
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    def __post_init__(self):
        if self.initial_rate <= 0:
            raise ValueError("initial_rate must be positive")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_interval is not None and self.decay_interval < 1:
            raise ValueError("decay_interval must be >= 1")


def learning_rate_at(schedule: OptimizerSchedule, iteration: int) -> float:
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if schedule.decay_interval is None or schedule.decay_factor == 1.0:
        return schedule.initial_rate
    steps = iteration // schedule.decay_interval
    return schedule.initial_rate * schedule.decay_factor ** steps


def make_optimizer(params, schedule: OptimizerSchedule) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=schedule.initial_rate,
                            betas=(schedule.beta1, schedule.beta2),
                            eps=schedule.eps)


def set_learning_rate(optimizer, rate: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = rate


def set_seed(seed: int) -> np.random.Generator:
    """Seed torch and the stdlib; hand back a numpy generator for data
    order so nothing touches numpy's global state."""
    torch.manual_seed(seed)
    random.seed(seed)
    return np.random.default_rng(seed)


def format_log_line(iteration: int, loss: float, lr: float) -> str:
    return f"{iteration}\t{loss:.6f}\t{lr:.8g}"


# ---------------------------------------------------------------------------
# gradient verification

@dataclass
class GradCheckReport:
    block_errors: dict = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(err <= self.tolerance
                   for err in self.block_errors.values())

    def __str__(self) -> str:
        lines = [f"{name}: rel_err={err:.3e} "
                 f"{'ok' if err <= self.tolerance else 'FAIL'}"
                 for name, err in sorted(self.block_errors.items())]
        return "\n".join(lines)


def finite_difference_check(loss_fn, params: dict, tolerance: float = 1e-4,
                            epsilon: float = 1e-6,
                            max_entries: int = 32) -> GradCheckReport:
    """Central differences vs autograd for each named parameter block.

    loss_fn is a closure over params and returns a scalar tensor. Use
    float64 parameters; per block at most max_entries coordinates are
    probed (deterministic choice) to keep big tensors affordable.
    """
    for name, p in params.items():
        if not p.requires_grad:
            raise ValueError(f"parameter {name!r} does not require grad")
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise ValueError("loss is not finite at the evaluation point")
    grads = torch.autograd.grad(loss, list(params.values()),
                                allow_unused=True)

    report = GradCheckReport(tolerance=tolerance)
    rng = np.random.default_rng(0)
    for (name, p), grad in zip(params.items(), grads):
        if grad is None:
            grad = torch.zeros_like(p)
        flat = p.detach().reshape(-1)
        n = flat.shape[0]
        picks = (np.arange(n) if n <= max_entries
                 else rng.choice(n, size=max_entries, replace=False))
        worst = 0.0
        for idx in picks:
            idx = int(idx)
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + epsilon
            plus = float(loss_fn().detach())
            with torch.no_grad():
                flat[idx] = orig - epsilon
            minus = float(loss_fn().detach())
            with torch.no_grad():
                flat[idx] = orig
            fd = (plus - minus) / (2.0 * epsilon)
            an = float(grad.reshape(-1)[idx])
            denom = max(abs(fd), abs(an), 1e-8)
            worst = max(worst, abs(fd - an) / denom)
        report.block_errors[name] = worst
    return report


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    tag: str
    config: dict
    iteration: int
    seed: int
    arrays: dict
    extra: dict


def save_checkpoint(path: str | Path, tag: str, arrays: dict, config: dict,
                    iteration: int, seed: int,
                    extra: dict | None = None) -> None:
    """Versioned container: JSON header + named little-endian blobs.

    Serialization is canonical (sorted names, sorted JSON keys) so
    save -> load -> save is byte-identical.
    """
    named = {}
    for name in sorted(arrays):
        a = arrays[name]
        if isinstance(a, torch.Tensor):
            a = a.detach().cpu().numpy()
        a = np.ascontiguousarray(a)
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        named[name] = a
    header = {
        "tag": tag,
        "config": config,
        "iteration": int(iteration),
        "seed": int(seed),
        "extra": extra or {},
        "arrays": [{"name": n, "dtype": named[n].dtype.name,
                    "shape": list(named[n].shape)} for n in sorted(named)],
    }
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in sorted(named):
            f.write(named[n].tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"], dtype=np.int64)) if spec["shape"] else 1
            raw = f.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype=dtype).reshape(
                spec["shape"]).copy()
        trailing = f.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after arrays")
    return Checkpoint(tag=header["tag"], config=header["config"],
                      iteration=header["iteration"], seed=header["seed"],
                      arrays=arrays, extra=header["extra"])


def model_state_arrays(module: torch.nn.Module, prefix: str = "model/") -> dict:
    out = {}
    for name, tensor in module.state_dict().items():
        out[prefix + name] = tensor.detach().cpu().numpy()
    return out


def load_model_state(module: torch.nn.Module, arrays: dict,
                     prefix: str = "model/") -> None:
    state = {}
    for name, tensor in module.state_dict().items():
        key = prefix + name
        if key not in arrays:
            raise KeyError(f"checkpoint missing {key!r}")
        state[name] = torch.from_numpy(np.array(arrays[key])).to(tensor.dtype)
    module.load_state_dict(state)


def training_state_arrays(model: torch.nn.Module,
                          optimizer: torch.optim.Adam) -> dict:
    """Parameters, Adam moments, and the torch RNG state, as arrays."""
    out = model_state_arrays(model)
    names = [n for n, _ in model.named_parameters()]
    params = [p for _, p in model.named_parameters()]
    for name, p in zip(names, params):
        state = optimizer.state.get(p)
        if not state:
            continue
        out[f"opt/{name}/step"] = np.asarray(float(state["step"]))
        out[f"opt/{name}/exp_avg"] = state["exp_avg"].detach().cpu().numpy()
        out[f"opt/{name}/exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
    out["rng/torch"] = torch.get_rng_state().numpy()
    return out


def restore_training_state(model: torch.nn.Module,
                           optimizer: torch.optim.Adam,
                           arrays: dict) -> None:
    load_model_state(model, arrays)
    for name, p in model.named_parameters():
        key = f"opt/{name}/step"
        if key not in arrays:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(np.asarray(arrays[key]).item()),
            "exp_avg": torch.from_numpy(
                np.array(arrays[f"opt/{name}/exp_avg"])).to(p.dtype),
            "exp_avg_sq": torch.from_numpy(
                np.array(arrays[f"opt/{name}/exp_avg_sq"])).to(p.dtype),
        }
    if "rng/torch" in arrays:
        torch.set_rng_state(torch.from_numpy(
            np.array(arrays["rng/torch"])).to(torch.uint8))


def train_steps(model: torch.nn.Module, optimizer: torch.optim.Adam,
                schedule: OptimizerSchedule, batch_loss_fn, iterations: int,
                start_iteration: int = 0, clip_norm: float = CLIP_NORM,
                log_interval: int = 10, log_lines: list | None = None):
    """Generic single-writer loop: set the scheduled rate, step, clip.

    batch_loss_fn(iteration) must return a scalar loss tensor. Returns
    the list of losses; log lines go to log_lines when provided.
    """
    losses = []
    for k in range(start_iteration, start_iteration + iterations):
        rate = learning_rate_at(schedule, k)
        set_learning_rate(optimizer, rate)
        optimizer.zero_grad()
        loss = batch_loss_fn(k)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite loss at iteration {k}")
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), clip_norm)
        optimizer.step()
        losses.append(float(loss.detach()))
        if log_lines is not None and k % log_interval == 0:
            log_lines.append(format_log_line(k, losses[-1], rate))
    return losses
