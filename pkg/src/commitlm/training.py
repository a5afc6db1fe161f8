"""Model state, the AdamW update, per-task losses and the training step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import torch

from .errors import NonFiniteLoss
from .model import (
    CommitTransformer, ModelConfig, contrastive_loss, init_params, loss_seq2seq, pooled_representation, simcse_pair,
)
from .sequence import SegmentedSequence


class Example(Protocol):
    task: object
    source: SegmentedSequence
    target: SegmentedSequence | None
    paired_source: SegmentedSequence | None


@dataclass
class TrainHyper:
    lr: float = 2e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    warmup_steps: int = 0

    def lr_at(self, step: int) -> float:
        if self.warmup_steps and step < self.warmup_steps:
            return self.lr * (step + 1) / self.warmup_steps
        return self.lr

    @classmethod
    def with_warmup(cls, total_steps: int, **kwargs) -> "TrainHyper":
        """Warm up over the first 1% of ``total_steps``."""
        return cls(warmup_steps=max(1, total_steps // 100), **kwargs)


@dataclass
class ModelState:
    config: ModelConfig
    model: CommitTransformer
    exp_avg: dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def fresh(cls, config: ModelConfig, seed: int) -> "ModelState":
        return cls(config, init_params(config, seed))

    def named_tensors(self) -> dict[str, torch.Tensor]:
        """Every tensor a checkpoint must carry, under stable names."""
        out = {f"param/{k}": v for k, v in self.model.state_dict().items()}
        out.update({f"adam_m/{k}": v for k, v in self.exp_avg.items()})
        out.update({f"adam_v/{k}": v for k, v in self.exp_avg_sq.items()})
        return out


def _no_decay(name: str) -> bool:
    return name.endswith("bias") or "norm" in name


@torch.no_grad()
def adamw_update(state: ModelState, hyper: TrainHyper) -> None:
    """Adam moments with decoupled weight decay (no decay on biases and norms)."""
    t = state.step + 1
    lr = hyper.lr_at(state.step)
    bc1 = 1 - hyper.beta1 ** t
    bc2 = 1 - hyper.beta2 ** t
    for name, p in state.model.named_parameters():
        if p.grad is None:
            continue
        g = p.grad
        m = state.exp_avg.setdefault(name, torch.zeros_like(p))
        v = state.exp_avg_sq.setdefault(name, torch.zeros_like(p))
        m.mul_(hyper.beta1).add_(g, alpha=1 - hyper.beta1)
        v.mul_(hyper.beta2).addcmul_(g, g, value=1 - hyper.beta2)
        if hyper.weight_decay and not _no_decay(name):
            p.mul_(1 - lr * hyper.weight_decay)
        denom = (v / bc2).sqrt_().add_(hyper.eps)
        p.addcdiv_(m, denom, value=-lr / bc1)


def batch_loss(model: CommitTransformer, batch: Sequence[Example], gen: torch.Generator | None) -> torch.Tensor:
    """Loss for a task-homogeneous batch, chosen by the examples' shape.

    Examples with a target train sequence-to-sequence; examples with a paired
    source train message/code alignment; bare sources train SimCSE.
    """
    tasks = {ex.task for ex in batch}
    if len(tasks) != 1:
        raise ValueError(f"batch mixes tasks: {sorted(map(str, tasks))}")
    first = batch[0]
    if first.target is not None:
        return loss_seq2seq(model, [ex.source for ex in batch], [ex.target for ex in batch], gen)
    if first.paired_source is not None:
        reps = pooled_representation(model, [ex.source for ex in batch], gen)
        pos = pooled_representation(model, [ex.paired_source for ex in batch], gen)
        return contrastive_loss(reps, pos, model.cfg.tau)
    if gen is None:
        raise ValueError("SimCSE needs a dropout generator")
    a, b = simcse_pair(model, [ex.source for ex in batch], gen)
    return contrastive_loss(a, b, model.cfg.tau)


def step_generator(seed: int, step: int) -> torch.Generator:
    """Dropout RNG for one optimisation step, derived from (seed, step) only."""
    return torch.Generator().manual_seed((seed * 1_000_003 + step) % (2**63))


def train_step(state: ModelState, batch: Sequence[Example], hyper: TrainHyper, seed: int) -> float:
    """One clipped AdamW step in place; returns the batch loss."""
    model = state.model
    model.train()
    model.zero_grad(set_to_none=True)
    loss = batch_loss(model, batch, step_generator(seed, state.step))
    value = float(loss.detach())
    if not math.isfinite(value):
        raise NonFiniteLoss(f"loss is {value} at step {state.step} (task {batch[0].task})")
    loss.backward()
    if hyper.clip_norm:
        torch.nn.utils.clip_grad_norm_(model.parameters(), hyper.clip_norm)
    adamw_update(state, hyper)
    state.step += 1
    model.eval()
    return value
