"""
Training loop: label-smoothed cross-entropy, Adam with warmup schedules, and gradient checking
"""

import copy
import math
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from config import TrainConfig
from services.corpus import Token
from services.modeling import BOS, EOS, PAD, EncoderInput, QFASTransformer, Vocab, collate_inputs

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or infinite"""

    def __init__(self, step: int, loss: float):
        super().__init__(f"Training diverged at step {step}: loss={loss}")
        self.step = step
        self.loss = loss


@dataclass(frozen=True)
class TrainingExample:
    encoder_input: EncoderInput
    target_ids: Tuple[int, ...]

    def __post_init__(self):
        if not self.target_ids or self.target_ids[-1] != EOS:
            raise ValueError("Target ids must end with [EOS]")


def make_target(tokens: Sequence[Token], vocab: Vocab, max_tgt_len: int) -> Tuple[int, ...]:
    """Token ids cut to max_tgt_len - 1, then [EOS]"""
    return tuple(vocab.encode(tokens)[:max(0, max_tgt_len - 1)]) + (EOS,)


def collate_targets(targets: Sequence[Sequence[int]]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Decoder inputs ([BOS] + target[:-1]), outputs (target) and the padding mask"""
    length = max(len(t) for t in targets)
    tgt_in = torch.full((len(targets), length), PAD, dtype=torch.long)
    tgt_out = torch.full((len(targets), length), PAD, dtype=torch.long)
    for i, target in enumerate(targets):
        tgt_out[i, :len(target)] = torch.tensor(list(target), dtype=torch.long)
        tgt_in[i, :len(target)] = torch.tensor([BOS] + list(target[:-1]), dtype=torch.long)
    return tgt_in, tgt_out, tgt_out == PAD


def sequence_loss(model: QFASTransformer, batch: Sequence[TrainingExample], label_smoothing: float) -> torch.Tensor:
    """Mean label-smoothed cross-entropy of next-token prediction over non-padding targets"""
    enc = collate_inputs([example.encoder_input for example in batch])
    tgt_in, tgt_out, tgt_pad = collate_targets([example.target_ids for example in batch])
    logits = model(enc, tgt_in, tgt_pad)
    return F.cross_entropy(
        logits.reshape(-1, logits.size(-1)),
        tgt_out.reshape(-1),
        ignore_index=PAD,
        label_smoothing=label_smoothing,
    )


def extractive_loss(model: QFASTransformer, items: Sequence[Tuple[EncoderInput, Sequence[float]]]) -> torch.Tensor:
    """Binary cross-entropy of the sentence-scoring head against 0/1 sentence labels"""
    enc = collate_inputs([encoder_input for encoder_input, _ in items])
    hidden = model.encode(enc)
    logits, labels = [], []
    for i, (encoder_input, target) in enumerate(items):
        if not encoder_input.cls_positions:
            continue
        logits.append(model.sentence_logits(hidden[i], encoder_input.cls_positions))
        labels.append(torch.tensor(list(target)[:len(encoder_input.cls_positions)], dtype=hidden.dtype))
    if not logits:
        return hidden.sum() * 0.0
    return F.binary_cross_entropy_with_logits(torch.cat(logits), torch.cat(labels))


def warmup_factor(schedule: str, warmup_steps: int) -> Callable[[int], float]:
    """
    Multiplier on the base learning rate as a function of the step count

    linear_warmup ramps linearly over warmup_steps then stays flat; noam ramps
    linearly and then decays with the inverse square root of the step.
    """
    if schedule == 'noam':
        def noam(step: int) -> float:
            s = step + 1
            if warmup_steps <= 0:
                return s ** -0.5
            return min(s ** -0.5, s * warmup_steps ** -1.5)
        return noam

    def linear(step: int) -> float:
        if warmup_steps <= 0:
            return 1.0
        return min(1.0, (step + 1) / warmup_steps)
    return linear


def _parameter_groups(model: QFASTransformer):
    encoder, decoder = [], []
    for name, param in model.named_parameters():
        if name.startswith(('decoder_layers.', 'generator.')):
            decoder.append(param)
        else:
            encoder.append(param)
    return encoder, decoder


def build_optimizer(model: QFASTransformer, cfg: TrainConfig, learning_rate: Optional[float] = None,
                    warmup_steps: Optional[int] = None):
    """
    Adam over separate encoder and decoder parameter groups with a per-group schedule

    Args:
        model: Model to optimize
        cfg: Training settings; encoder_/decoder_ rates and warmups override the shared ones
        learning_rate: Shared rate for this run (defaults to cfg.learning_rate)
        warmup_steps: Shared warmup for this run (defaults to cfg.warmup_steps)
    """
    base_lr = cfg.learning_rate if learning_rate is None else learning_rate
    base_warmup = cfg.warmup_steps if warmup_steps is None else warmup_steps
    enc_lr = cfg.encoder_learning_rate or base_lr
    dec_lr = cfg.decoder_learning_rate or base_lr
    enc_warmup = base_warmup if cfg.encoder_warmup_steps is None else cfg.encoder_warmup_steps
    dec_warmup = base_warmup if cfg.decoder_warmup_steps is None else cfg.decoder_warmup_steps

    encoder_params, decoder_params = _parameter_groups(model)
    optimizer = torch.optim.Adam(
        [{'params': encoder_params, 'lr': enc_lr}, {'params': decoder_params, 'lr': dec_lr}],
        betas=(0.9, 0.999),
        eps=1e-9,
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda=[
        warmup_factor(cfg.lr_schedule, enc_warmup),
        warmup_factor(cfg.lr_schedule, dec_warmup),
    ])
    return optimizer, scheduler


class ProgressTracker:
    """Track training progress and report it every log_interval steps"""

    def __init__(self, stage: str, total_steps: int, log_interval: int = 50, show_progress: bool = False):
        self.stage = stage
        self.total_steps = total_steps
        self.log_interval = log_interval
        self.history: List[Tuple[int, float]] = []
        self._window: List[float] = []
        self._bar = tqdm(total=total_steps, desc=stage, disable=not show_progress, leave=False)

    def on_step(self, step: int, loss: float) -> None:
        self._bar.update(1)
        self._window.append(loss)
        if step % self.log_interval == 0 or step == self.total_steps:
            mean = float(np.mean(self._window))
            self.history.append((step, mean))
            self._window = []
            self._bar.set_postfix(loss=f"{mean:.4f}")
            logger.info(f"[{self.stage}] step {step}/{self.total_steps} loss {mean:.4f}")

    def close(self) -> None:
        self._bar.close()


class Trainer:
    """Single-model training loop; one instance per fine-tuning run"""

    def __init__(self, model: QFASTransformer, cfg: TrainConfig, learning_rate: Optional[float] = None,
                 warmup_steps: Optional[int] = None):
        self.model = model
        self.cfg = cfg
        self.label_smoothing = model.config.label_smoothing
        self.optimizer, self.scheduler = build_optimizer(model, cfg, learning_rate, warmup_steps)
        self.step = 0

    def _apply(self, loss: torch.Tensor) -> float:
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(self.step + 1, value)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.scheduler.step()
        self.step += 1
        return value

    def train_step(self, batch: Sequence[TrainingExample]) -> float:
        """One optimizer update; returns the loss before the update"""
        self.model.train()
        return self._apply(sequence_loss(self.model, batch, self.label_smoothing))

    def extractive_step(self, items: Sequence[Tuple[EncoderInput, Sequence[float]]]) -> float:
        self.model.train()
        return self._apply(extractive_loss(self.model, items))

    def fit(self, examples: Sequence, steps: int, seed: int, stage: str = 'train',
            step_fn: Optional[Callable[[Sequence], float]] = None) -> List[Tuple[int, float]]:
        """
        Run `steps` updates over shuffled mini-batches

        Returns:
            Per-interval mean losses as (step, loss) pairs
        """
        if not examples:
            raise ValueError(f"No training examples for stage {stage!r}")
        step_fn = step_fn or self.train_step
        torch.manual_seed(seed)
        rng = np.random.default_rng(seed)
        tracker = ProgressTracker(stage, steps, self.cfg.log_interval, self.cfg.show_progress)
        order: List[int] = []
        try:
            for step in range(1, steps + 1):
                if len(order) < self.cfg.batch_size:
                    order.extend(rng.permutation(len(examples)).tolist())
                batch = [examples[i] for i in order[:self.cfg.batch_size]]
                del order[:self.cfg.batch_size]
                tracker.on_step(step, step_fn(batch))
        finally:
            tracker.close()
        return tracker.history


def grad_check(model: QFASTransformer, example: TrainingExample, sentence_labels: Optional[Sequence[float]] = None,
               eps: float = 1e-5, entries_per_tensor: Optional[int] = 6, seed: int = 0,
               floor: float = 1e-3) -> float:
    """
    Compare backprop gradients with central finite differences in 64-bit precision

    The loss is the sequence loss plus the sentence-scoring loss, so every parameter
    tensor receives a gradient. This is a sampled check: `entries_per_tensor` seeded
    random entries are checked per tensor (None checks every entry).

    Relative error is |a - n| / max(|a|, |n|, floor). Gradients smaller than `floor`
    are held to an absolute bound of floor * tolerance. Finite-difference noise at
    eps=1e-5 is around 1e-11.

    Returns:
        Maximum relative error over all checked entries
    """
    checked = copy.deepcopy(model).double()
    checked.eval()
    rng = np.random.default_rng(seed)
    n_sentences = len(example.encoder_input.cls_positions)
    if sentence_labels is None:
        sentence_labels = rng.integers(0, 2, size=n_sentences).astype(float).tolist()

    def loss_fn() -> torch.Tensor:
        loss = sequence_loss(checked, [example], checked.config.label_smoothing)
        if n_sentences:
            loss = loss + extractive_loss(checked, [(example.encoder_input, sentence_labels)])
        return loss

    checked.zero_grad()
    loss_fn().backward()

    worst = 0.0
    for name, param in checked.named_parameters():
        flat = param.data.view(-1)
        analytic = param.grad.view(-1) if param.grad is not None else torch.zeros_like(flat)
        if entries_per_tensor is None:
            entries = np.arange(flat.numel())
        else:
            entries = rng.choice(flat.numel(), size=min(entries_per_tensor, flat.numel()), replace=False)
        for index in entries:
            original = flat[index].item()
            with torch.no_grad():
                flat[index] = original + eps
                plus = loss_fn().item()
                flat[index] = original - eps
                minus = loss_fn().item()
                flat[index] = original
            numeric = (plus - minus) / (2 * eps)
            a = analytic[index].item()
            error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if error > worst:
                worst = error
                logger.debug(f"grad_check {name}[{index}]: analytic={a:.6e} numeric={numeric:.6e}")
    logger.info(f"Gradient check max relative error {worst:.3e}")
    return worst
