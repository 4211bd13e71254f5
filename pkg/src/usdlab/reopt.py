"""Frozen-oracle re-optimization of a trained decoder.

The decoder's continuous prediction is compared element-wise against the
true error; the absolute difference is pushed through a differentiable
stand-in for the syndrome map (a trained MLP or the closed-form function),
and the decoder is nudged so that stand-in output approaches the zero
vector.  Residuals that differ from the truth by a stabilizer element
already map to zero, so the loss only penalises logical damage.

The oracle stays fixed throughout: the optimizer is built over decoder
parameters alone, and the oracle weights are compared bit-for-bit after
every epoch so an accidental update aborts loudly instead of silently
co-training."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import autodiff, optim
from .autodiff import Tensor
from .decoder import PairDataset, TransformerDecoder
from .errors import ValidationError

__all__ = ["ReoptConfig", "ReoptEpochLog", "ReoptResult", "reopt_loss",
           "reopt_step", "clone_decoder", "run_reopt"]


@dataclass
class ReoptConfig:
    """Published settings: tiny learning rate, fixed budget, no early stop."""
    batch_size: int = 1000
    epochs: int = 75
    lr: float = 1e-7
    optimizer: str = "RAdam"
    seed: int = 0

    def __post_init__(self):
        # lr 0 is allowed so the null-update identity stays checkable
        if self.lr < 0:
            raise ValidationError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReoptEpochLog:
    epoch: int
    loss: float


@dataclass
class ReoptResult:
    """Re-optimized model plus the per-epoch mean loss.  When a batch loss
    turns NaN the run stops and the model is restored to the last completed
    epoch, recorded in `aborted`."""
    model: TransformerDecoder
    log: List[ReoptEpochLog] = field(default_factory=list)
    aborted: bool = False


def reopt_loss(model: TransformerDecoder, oracle_like, synd: np.ndarray,
               errs: np.ndarray) -> Tensor:
    """Composite objective for one batch: BCE between the oracle's view of
    the continuous residual |prediction - truth| and the zero vector."""
    pred = model.forward(Tensor(synd))
    resid = autodiff.absolute_value(pred - Tensor(errs))
    s_hat = oracle_like.forward(resid)
    target = Tensor(np.zeros(s_hat.shape, dtype=s_hat.dtype))
    return autodiff.loss_bce(s_hat, target)


def reopt_step(model: TransformerDecoder, oracle_like, synd: np.ndarray,
               errs: np.ndarray, opt: optim.Optimizer) -> float:
    """One gradient step on the decoder; the oracle is not in the optimizer
    so its weights cannot move.  Returns the batch loss; on NaN the step is
    skipped so parameters keep their last good values."""
    loss = reopt_loss(model, oracle_like, synd, errs)
    value = loss.item()
    if np.isnan(value):
        return value
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value


def clone_decoder(model: TransformerDecoder) -> TransformerDecoder:
    """Independent copy with identical weights; re-optimization works on the
    copy so the caller keeps the pre-reopt model intact."""
    twin = TransformerDecoder(dtype=model.Wout.dtype, **model.arch_dict())
    twin.load_state_arrays(model.state_arrays())
    return twin


def _snapshot(params) -> Dict[str, np.ndarray]:
    return {p.name: p.data.copy() for p in params}


def _check_oracle_frozen(oracle_like, before: Dict[str, np.ndarray]) -> None:
    for p in oracle_like.parameters():
        if not np.array_equal(p.data, before[p.name], equal_nan=True):
            raise ValidationError(
                f"frozen-oracle contract violated: parameter {p.name!r} "
                "changed during re-optimization")


def run_reopt(model: TransformerDecoder, oracle_like, dataset: PairDataset,
              config: ReoptConfig,
              progress: Optional[Callable[[ReoptEpochLog], None]] = None
              ) -> ReoptResult:
    """Fixed-budget descent over the decoder's original training set.

    Batches are reshuffled each epoch from the run seed.  The input model is
    never mutated; the result holds a re-optimized copy."""
    if len(dataset) < 1:
        raise ValidationError("dataset is empty")
    work = clone_decoder(model)
    opt = optim.make_optimizer(config.optimizer, work.parameters(), lr=config.lr)
    shuffle_rng = np.random.default_rng(config.seed)
    oracle_before = _snapshot(oracle_like.parameters())

    synd = dataset.syndromes.astype(np.float32)
    errs = dataset.errors.astype(np.float32)

    result = ReoptResult(model=work)
    good = work.state_arrays()
    good = {k: v.copy() for k, v in good.items()}
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(len(dataset))
        total, count = 0.0, 0
        for lo in range(0, len(dataset), config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            value = reopt_step(work, oracle_like, synd[sel], errs[sel], opt)
            if np.isnan(value):
                work.load_state_arrays(good)
                result.aborted = True
                return result
            total += value * len(sel)
            count += len(sel)
        _check_oracle_frozen(oracle_like, oracle_before)
        entry = ReoptEpochLog(epoch=epoch, loss=total / count)
        result.log.append(entry)
        if progress is not None:
            progress(entry)
        good = {k: v.copy() for k, v in work.state_arrays().items()}
    return result
