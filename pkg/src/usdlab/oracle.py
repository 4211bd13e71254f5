"""Continuous extension of syndrome measurement and its MLP surrogate.

The exact map sends a real error vector e to f_i(e) = (1 - cos(v_i pi))/2
where v_i is the integer-valued (on binary inputs) linear form read off
generator i.  On binary inputs it reproduces syndrome() bit for bit; on
real inputs it is smooth, so gradients can flow through it.  The MLP
approximates f from uniform samples on [-0.5, 1]^{2n}.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff, checkpoint, optim
from .autodiff import Tensor
from .codes import CheckMatrix, definition_hash
from .errors import DimensionError, NumericError, ValidationError


def _coeffs(code: CheckMatrix, dtype) -> np.ndarray:
    """Per-generator coefficient matrix of the forms v_i, shape (n-1, 2n)."""
    return code.syndrome_matrix.astype(dtype)


def exact_f(code: CheckMatrix, e: np.ndarray) -> np.ndarray:
    """Continuous syndrome of a single real vector, components in [0, 1]."""
    e = np.asarray(e)
    if not np.issubdtype(e.dtype, np.floating):
        e = e.astype(np.float64)
    if e.shape != (2 * code.n,):
        raise DimensionError(f"expected length {2 * code.n}, got shape {e.shape}")
    v = _coeffs(code, e.dtype) @ e
    return 0.5 * (1.0 - autodiff.cospi_array(v))


def exact_f_batch(code: CheckMatrix, E: np.ndarray) -> np.ndarray:
    """Row-wise exact_f for a (batch, 2n) matrix."""
    E = np.asarray(E)
    if not np.issubdtype(E.dtype, np.floating):
        E = E.astype(np.float64)
    if E.ndim != 2 or E.shape[1] != 2 * code.n:
        raise DimensionError(f"expected (batch, {2 * code.n}), got {E.shape}")
    v = E @ _coeffs(code, E.dtype).T
    return 0.5 * (1.0 - autodiff.cospi_array(v))


def exact_f_grad(code: CheckMatrix, e: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of exact_f, shape (n-1, 2n):
    d f_i / d e_j = (pi/2) sin(v_i pi) * coefficient of e_j in v_i."""
    e = np.asarray(e)
    if not np.issubdtype(e.dtype, np.floating):
        e = e.astype(np.float64)
    if e.shape != (2 * code.n,):
        raise DimensionError(f"expected length {2 * code.n}, got shape {e.shape}")
    A = _coeffs(code, e.dtype)
    v = A @ e
    return (0.5 * np.pi) * autodiff.sinpi_array(v)[:, None] * A


def exact_f_grad_batch(code: CheckMatrix, E: np.ndarray) -> np.ndarray:
    """Per-row Jacobians, shape (batch, n-1, 2n)."""
    E = np.asarray(E)
    if not np.issubdtype(E.dtype, np.floating):
        E = E.astype(np.float64)
    if E.ndim != 2 or E.shape[1] != 2 * code.n:
        raise DimensionError(f"expected (batch, {2 * code.n}), got {E.shape}")
    A = _coeffs(code, E.dtype)
    v = E @ A.T
    return (0.5 * np.pi) * autodiff.sinpi_array(v)[:, :, None] * A[None, :, :]


class ExactOracle:
    """exact_f behind the same interface as the trained MLP, so the
    re-optimization loop and the metric bench can swap either in."""

    kind = "exact"

    def __init__(self, code: CheckMatrix):
        self.code = code

    def parameters(self) -> List[Tensor]:
        return []

    def predict(self, E: np.ndarray) -> np.ndarray:
        return exact_f_batch(self.code, E)

    def forward(self, x: Tensor) -> Tensor:
        """Graph-recording forward: matmul against the constant coefficient
        matrix, then the cosine map.  Gradients flow through, not into."""
        At = Tensor(_coeffs(self.code, x.dtype).T)
        v = autodiff.matmul(x, At)
        return autodiff.cospi(v) * (-0.5) + 0.5


class OracleMLP:
    """2n -> hidden SeLU -> (n-1) sigmoid approximator of exact_f."""

    kind = "mlp"

    def __init__(self, n: int, hidden: int = 1000,
                 rng: Optional[np.random.Generator] = None,
                 dtype=np.float32):
        if rng is None:
            rng = np.random.default_rng(0)
        self.n = n
        self.hidden = hidden
        self.W1 = Tensor(autodiff.kaiming_uniform(rng, (2 * n, hidden), 2 * n, dtype),
                         requires_grad=True, name="W1")
        self.b1 = Tensor(autodiff.kaiming_uniform(rng, (hidden,), 2 * n, dtype),
                         requires_grad=True, name="b1")
        self.W2 = Tensor(autodiff.kaiming_uniform(rng, (hidden, n - 1), hidden, dtype),
                         requires_grad=True, name="W2")
        self.b2 = Tensor(autodiff.kaiming_uniform(rng, (n - 1,), hidden, dtype),
                         requires_grad=True, name="b2")

    def parameters(self) -> List[Tensor]:
        return [self.W1, self.b1, self.W2, self.b2]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != 2 * self.n:
            raise DimensionError(f"expected trailing dim {2 * self.n}, got {x.shape}")
        h = autodiff.selu(autodiff.linear(x, self.W1, self.b1))
        return autodiff.sigmoid(autodiff.linear(h, self.W2, self.b2))

    def predict(self, E: np.ndarray, chunk: int = 10000) -> np.ndarray:
        E = np.asarray(E, dtype=self.W1.dtype)
        out = np.empty((E.shape[0], self.n - 1), dtype=E.dtype)
        with autodiff.no_grad():
            for lo in range(0, E.shape[0], chunk):
                out[lo:lo + chunk] = self.forward(Tensor(E[lo:lo + chunk])).data
        return out

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1.data, "b1": self.b1.data,
                "W2": self.W2.data, "b2": self.b2.data}

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise ValidationError(f"checkpoint missing array {p.name!r}")
            if arrays[p.name].shape != p.shape:
                raise ValidationError(
                    f"array {p.name!r} shape {arrays[p.name].shape} != {p.shape}")
            p.data = arrays[p.name].astype(p.dtype)


@dataclass
class SampleBatch:
    """Uniform inputs on [-0.5, 1]^{2n} with exact-oracle targets."""
    inputs: np.ndarray
    targets: np.ndarray


def sample_training_batch(code: CheckMatrix, batch: int,
                          rng: np.random.Generator,
                          dtype=np.float32) -> SampleBatch:
    if batch < 1:
        raise ValidationError(f"batch must be >= 1, got {batch}")
    inputs = rng.uniform(-0.5, 1.0, size=(batch, 2 * code.n)).astype(dtype)
    return SampleBatch(inputs=inputs, targets=exact_f_batch(code, inputs))


@dataclass
class OracleConfig:
    """Training settings; defaults are the full-scale published run."""
    train_samples: int = 10_000_000
    test_samples: int = 100_000
    batch_size: int = 1000
    epochs: int = 50
    lr: float = 1e-4
    optimizer: str = "AdamW"
    hidden: int = 1000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochLog:
    epoch: int
    train_mse: float
    test_mse: float


def _batch_rng(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_seq))


def train_oracle(code: CheckMatrix, config: OracleConfig,
                 progress=None) -> Tuple[OracleMLP, List[EpochLog]]:
    """Train the MLP on streamed batches regenerated from per-batch seeds,
    so each epoch revisits an identical virtual dataset without holding
    train_samples x 2n floats in memory."""
    if config.epochs < 1 or config.train_samples < 1:
        raise ValidationError("epochs and train_samples must be >= 1")
    n_batches = -(-config.train_samples // config.batch_size)
    root = np.random.SeedSequence(config.seed)
    init_seq, test_seq, *batch_seqs = root.spawn(n_batches + 2)
    model = OracleMLP(code.n, hidden=config.hidden, rng=_batch_rng(init_seq))
    opt = optim.make_optimizer(config.optimizer, model.parameters(), lr=config.lr)

    test = sample_training_batch(code, config.test_samples, _batch_rng(test_seq))
    log: List[EpochLog] = []
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for b, seq in enumerate(batch_seqs):
            size = min(config.batch_size, config.train_samples - b * config.batch_size)
            batch = sample_training_batch(code, size, _batch_rng(seq))
            pred = model.forward(Tensor(batch.inputs))
            loss = autodiff.loss_mse(pred, Tensor(batch.targets))
            value = loss.item()
            if np.isnan(value):
                raise NumericError(f"oracle training diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * size
            count += size
        test_mse = evaluate_mse(model, test)
        log.append(EpochLog(epoch=epoch, train_mse=total / count, test_mse=test_mse))
        if progress is not None:
            progress(log[-1])
    return model, log


def evaluate_mse(model: OracleMLP, batch: SampleBatch) -> float:
    pred = model.predict(batch.inputs)
    diff = pred - batch.targets.astype(pred.dtype)
    return float((diff * diff).mean())


def materialize_dataset(code: CheckMatrix, config: OracleConfig, path) -> None:
    """Write the streamed training set to disk for audit."""
    n_batches = -(-config.train_samples // config.batch_size)
    root = np.random.SeedSequence(config.seed)
    _, _, *batch_seqs = root.spawn(n_batches + 2)
    inputs = np.empty((config.train_samples, 2 * code.n), dtype=np.float32)
    targets = np.empty((config.train_samples, code.n - 1), dtype=np.float32)
    row = 0
    for b, seq in enumerate(batch_seqs):
        size = min(config.batch_size, config.train_samples - b * config.batch_size)
        batch = sample_training_batch(code, size, _batch_rng(seq))
        inputs[row:row + size] = batch.inputs
        targets[row:row + size] = batch.targets
        row += size
    checkpoint.save_arrays(path, {"inputs": inputs, "targets": targets})


def save_oracle(model: OracleMLP, path, code: CheckMatrix,
                config: Optional[OracleConfig] = None,
                metrics: Optional[dict] = None) -> None:
    checkpoint.save_arrays(path, model.state_arrays())
    info = {
        "type": "oracle",
        "code_name": code.name,
        "code_hash": definition_hash(code),
        "n": model.n,
        "hidden": model.hidden,
        "config": config.to_dict() if config is not None else None,
        "metrics": metrics or {},
    }
    checkpoint.write_sidecar(path, info)


def load_oracle(path, code: Optional[CheckMatrix] = None) -> OracleMLP:
    arrays = checkpoint.load_arrays(path)
    if set(arrays) != {"W1", "b1", "W2", "b2"}:
        raise ValidationError(f"not an oracle checkpoint: arrays {sorted(arrays)}")
    two_n, hidden = arrays["W1"].shape
    model = OracleMLP(two_n // 2, hidden=hidden)
    model.load_state_arrays(arrays)
    if code is not None:
        try:
            info = checkpoint.read_sidecar(path)
        except FileNotFoundError:
            info = {}
        want = definition_hash(code)
        if info.get("code_hash") not in (None, want):
            raise ValidationError(
                f"oracle was trained for code hash {info['code_hash'][:12]}..., "
                f"requested code hashes to {want[:12]}...")
        if model.n != code.n:
            raise ValidationError(f"oracle n={model.n} != code n={code.n}")
    return model


__all__ = [
    "exact_f", "exact_f_batch", "exact_f_grad", "exact_f_grad_batch",
    "ExactOracle", "OracleMLP", "SampleBatch", "sample_training_batch",
    "OracleConfig", "EpochLog", "train_oracle", "evaluate_mse",
    "materialize_dataset", "save_oracle", "load_oracle",
]
