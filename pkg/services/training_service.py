"""Teacher-forced training: cross-entropy, Adam, stepped learning-rate decay."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import structlog

from core.foundation import ConfigurationError, DatasetValidationError, MolcapException
from models.schemas import SampleManifest, TrainConfig, TrainResult
from services.autodiff import ComputationTape, Tensor, backward, concat_rows, xent_loss
from services.caption_decoder import decode_forward
from services.checkpoint_store import save_checkpoint
from services.model_weights import CaptionModel
from services.tokenizer import PAD_ID, Vocab, encode
from services.vit_encoder import encode_image, image_to_input
from utils.images import load_image

logger = structlog.get_logger()


# ============================================================================
# OPTIMIZER / SCHEDULE
# ============================================================================


@dataclass
class AdamState:
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[Optional[np.ndarray]],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One in-place Adam update with bias correction."""
    if len(params) != len(grads):
        raise ConfigurationError("adam", f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for index, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            continue
        m = state.m[index]
        v = state.v[index]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)
    return state


def _scheduled_lr(lr: float, decay: float, epochs: int, epoch: int) -> float:
    if not 1 <= epoch <= epochs:
        raise ConfigurationError("epoch", f"epoch {epoch} outside 1..{epochs}")
    if decay == 1.0 or epochs < 2:
        return lr
    if epoch == epochs:
        return lr * decay * decay
    if epoch == epochs - 1:
        return lr * decay
    return lr


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """lr for epochs 1..E-2, lr*decay at E-1, lr*decay^2 at E (1-based)."""
    return _scheduled_lr(cfg.lr, cfg.decay, cfg.epochs, epoch)


def clip_gradients(grads: List[np.ndarray], max_norm: float) -> float:
    """Scale grads in place to global L2 norm <= max_norm; returns the norm before clipping."""
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for g in grads:
            g *= factor
    return norm


# ============================================================================
# DATA
# ============================================================================


def split_dataset(manifest: SampleManifest, seed: int) -> Tuple[SampleManifest, SampleManifest, SampleManifest]:
    """Shuffle under ``seed`` and cut (train, validation, test) at 70% / 20% / rest."""
    n = len(manifest)
    if n == 0:
        raise DatasetValidationError(["manifest has no samples to split"])
    order = np.random.default_rng(seed).permutation(n)
    train_n = (7 * n) // 10
    val_n = (2 * n) // 10
    cuts = (order[:train_n], order[train_n : train_n + val_n], order[train_n + val_n :])
    return tuple(  # type: ignore[return-value]
        SampleManifest(rows=[manifest.rows[i] for i in part], source=manifest.source, path=manifest.path)
        for part in cuts
    )


@dataclass(frozen=True)
class Example:
    image: Tensor
    ids: Tuple[int, ...]
    label: str


def prepare_examples(manifest: SampleManifest, vocab: Vocab, model: CaptionModel) -> List[Example]:
    """Load and tokenize every sample; reject the whole set if any sample is unusable."""
    enc = model.config.encoder
    max_len = model.config.decoder.max_len
    problems: List[str] = []
    examples: List[Example] = []
    for row in manifest.rows:
        where = f"line {row.line} ({row.image_path})"
        try:
            ids = encode(vocab, row.label)
        except MolcapException as exc:
            problems.append(f"{where}: {exc.message}")
            continue
        if len(ids) > max_len:
            problems.append(f"{where}: label needs {len(ids)} positions, max_len is {max_len}")
            continue
        try:
            pixels = load_image(row.path)
        except MolcapException as exc:
            problems.append(f"{where}: {exc.message}")
            continue
        if pixels.shape != (enc.image_size, enc.image_size):
            problems.append(f"{where}: image is {pixels.shape}, model expects {enc.image_size}x{enc.image_size}")
            continue
        examples.append(Example(image=image_to_input(pixels), ids=tuple(ids), label=row.label))
    if problems:
        raise DatasetValidationError(problems)
    return examples


def teacher_forcing_pair(ids: Sequence[int], length: int) -> Tuple[List[int], List[int]]:
    """Decoder input [SOS]+tokens and target tokens+[EOS], PAD-extended to ``length``."""
    inputs = list(ids[:-1]) + [PAD_ID] * (length - (len(ids) - 1))
    targets = list(ids[1:]) + [PAD_ID] * (length - (len(ids) - 1))
    return inputs, targets


def batch_loss(
    model: CaptionModel,
    batch: Sequence[Example],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    pad_to: Optional[int] = None,
) -> Tensor:
    """Mean cross-entropy over all non-PAD targets in the batch."""
    cfg = model.config
    length = max(len(example.ids) - 1 for example in batch)
    if pad_to is not None:
        length = max(length, pad_to)
    all_logits: List[Tensor] = []
    all_targets: List[int] = []
    for example in batch:
        inputs, targets = teacher_forcing_pair(example.ids, length)
        memory = encode_image(example.image, cfg.encoder, model.weights, training=training, rng=rng)
        all_logits.append(decode_forward(inputs, memory, cfg.decoder, model.weights, training=training, rng=rng))
        all_targets.extend(targets)
    logits = all_logits[0] if len(all_logits) == 1 else concat_rows(all_logits)
    return xent_loss(logits, all_targets, PAD_ID)


# ============================================================================
# LOOP
# ============================================================================


class TrainingService:
    """Runs epochs of shuffled mini-batches and saves a checkpoint after each."""

    def __init__(
        self,
        model: CaptionModel,
        cfg: TrainConfig,
        checkpoint_path: Optional[Union[str, Path]] = None,
        sink: Optional[TextIO] = None,
    ):
        self.model = model
        self.cfg = cfg
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.sink = sink if sink is not None else sys.stdout
        self.state = AdamState()
        self.step = 0

    def _epochs(self, examples: int) -> int:
        if self.cfg.max_steps is None:
            return self.cfg.epochs
        per_epoch = math.ceil(examples / self.cfg.batch_size)
        return max(1, math.ceil(self.cfg.max_steps / per_epoch))

    def validation_loss(self, examples: Sequence[Example]) -> float:
        """Token-weighted mean loss over ``examples`` with dropout off."""
        total, tokens = 0.0, 0
        for start in range(0, len(examples), self.cfg.batch_size):
            batch = examples[start : start + self.cfg.batch_size]
            count = sum(len(example.ids) - 1 for example in batch)
            total += batch_loss(self.model, batch).item() * count
            tokens += count
        return total / tokens if tokens else float("nan")

    def train_step(self, batch: Sequence[Example], lr: float, rng: np.random.Generator) -> float:
        params = self.model.weights.parameters()
        self.model.weights.zero_grad()
        with ComputationTape() as tape:
            loss = batch_loss(self.model, batch, training=True, rng=rng)
        backward(tape, loss)
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
        clip_gradients(grads, self.cfg.grad_clip_norm)
        adam_step(params, grads, self.state, lr, self.cfg.beta1, self.cfg.beta2, self.cfg.eps)
        self.step += 1
        return loss.item()

    def fit(self, examples: Sequence[Example], validation: Sequence[Example] = ()) -> TrainResult:
        if not examples:
            raise DatasetValidationError(["no training samples"])
        epochs = self._epochs(len(examples))
        shuffle = np.random.default_rng(self.cfg.seed)
        dropout_rng = np.random.default_rng([self.cfg.seed, 1])
        result = TrainResult(steps=0)

        for epoch in range(1, epochs + 1):
            lr = _scheduled_lr(self.cfg.lr, self.cfg.decay, epochs, epoch)
            order = shuffle.permutation(len(examples))
            losses: List[float] = []
            for start in range(0, len(order), self.cfg.batch_size):
                batch = [examples[i] for i in order[start : start + self.cfg.batch_size]]
                loss = self.train_step(batch, lr, dropout_rng)
                losses.append(loss)
                print(f"epoch {epoch} step {self.step} loss {loss:.6f}", file=self.sink)
                if self.cfg.max_steps is not None and self.step >= self.cfg.max_steps:
                    break

            mean_loss = sum(losses) / len(losses)
            result.epoch_losses.append(mean_loss)
            context = {"epoch": epoch, "steps": self.step, "mean_loss": round(mean_loss, 6), "lr": lr}
            if validation:
                val_loss = self.validation_loss(validation)
                result.validation_losses.append(val_loss)
                context["validation_loss"] = round(val_loss, 6)
            logger.info("epoch_completed", **context)
            if self.checkpoint_path is not None:
                save_checkpoint(self.checkpoint_path, self.model)
                result.checkpoint_path = str(self.checkpoint_path)
            if self.cfg.max_steps is not None and self.step >= self.cfg.max_steps:
                break

        result.steps = self.step
        return result
