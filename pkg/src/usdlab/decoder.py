"""Encoder-only Transformer mapping syndromes to error predictions.

Each of the n-1 syndrome bits becomes one token: a continuous blend of
two learned symbol embeddings (so real-valued syndromes are accepted)
plus a learned positional embedding.  Four post-norm encoder layers
(8-head self-attention, SeLU feed-forward at 4x width) feed a mean-pool
or flatten readout ending in 2n sigmoid outputs.  Supervised training
minimizes BCE against the true error bits.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff, checkpoint, codes, evalbench, optim
from .autodiff import Tensor
from .codes import CheckMatrix, PauliVector, Syndrome, definition_hash
from .errors import DimensionError, NumericError, ValidationError

DATA_MAGIC = b"USDDATA1"
DEFAULT_P_SCHEDULE = (0.01, 0.02, 0.03, 0.04, 0.05)


# ---------------------------------------------------------------------------
# supervised dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupervisedPair:
    syndrome: Syndrome
    error: PauliVector


class PairDataset:
    """Sequence of SupervisedPair stored as two packed bit matrices."""

    def __init__(self, n: int, syndromes: np.ndarray, errors: np.ndarray,
                 seed: Optional[int] = None,
                 p_schedule: Sequence[float] = DEFAULT_P_SCHEDULE):
        syndromes = np.asarray(syndromes, dtype=np.uint8)
        errors = np.asarray(errors, dtype=np.uint8)
        if syndromes.shape != (errors.shape[0], n - 1) or errors.shape[1] != 2 * n:
            raise DimensionError(
                f"inconsistent dataset shapes {syndromes.shape} / {errors.shape}")
        self.n = n
        self.syndromes = syndromes
        self.errors = errors
        self.seed = seed
        self.p_schedule = tuple(float(p) for p in p_schedule)

    def __len__(self) -> int:
        return self.syndromes.shape[0]

    def __getitem__(self, idx: int) -> SupervisedPair:
        return SupervisedPair(syndrome=Syndrome(self.syndromes[idx]),
                              error=PauliVector(self.errors[idx]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def verify(self, code: CheckMatrix) -> None:
        if code.n != self.n:
            raise ValidationError(f"dataset n={self.n} != code n={code.n}")
        recomputed = codes.syndrome_batch(code, self.errors)
        if not np.array_equal(recomputed, self.syndromes):
            bad = int(np.argmax(np.any(recomputed != self.syndromes, axis=1)))
            raise ValidationError(f"stored syndrome mismatch at pair {bad}")


def make_training_set(code: CheckMatrix, size: int,
                      p: Union[float, Sequence[float]],
                      rng: Union[int, np.random.Generator]) -> PairDataset:
    """Sample errors from the noise channel and attach exact syndromes.
    p may be one rate or a schedule drawn uniformly per pair."""
    if size < 1:
        raise ValidationError(f"size must be >= 1, got {size}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = np.random.default_rng(rng) if seed is not None else rng
    if np.ndim(p) == 0:
        schedule = (float(p),)
        p_rows: Union[float, np.ndarray] = float(p)
    else:
        schedule = tuple(float(v) for v in p)
        p_rows = gen.choice(np.asarray(schedule), size=size)
    errors = evalbench.sample_error_bits(code.n, p_rows, gen, size)
    syndromes = codes.syndrome_batch(code, errors)
    return PairDataset(code.n, syndromes, errors, seed=seed, p_schedule=schedule)


def save_dataset(dataset: PairDataset, path) -> None:
    bits = np.hstack([dataset.syndromes, dataset.errors])
    packed = np.packbits(bits, axis=1)
    header = json.dumps({
        "format": DATA_MAGIC.decode(),
        "n": dataset.n,
        "count": len(dataset),
        "seed": dataset.seed,
        "p_schedule": list(dataset.p_schedule),
    }).encode()
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(packed.tobytes())


def load_dataset(path, code: CheckMatrix) -> PairDataset:
    """Read a dataset and re-verify every stored syndrome against the code."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != DATA_MAGIC:
            raise ValidationError(f"bad dataset magic {magic!r} in {path}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        n, count = header["n"], header["count"]
        width = 3 * n - 1
        row_bytes = -(-width // 8)
        raw = fh.read(count * row_bytes)
    if len(raw) != count * row_bytes:
        raise ValidationError(f"truncated dataset {path}")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(count, row_bytes)
    bits = np.unpackbits(packed, axis=1)[:, :width]
    dataset = PairDataset(n, bits[:, :n - 1], bits[:, n - 1:],
                          seed=header.get("seed"),
                          p_schedule=header.get("p_schedule", DEFAULT_P_SCHEDULE))
    dataset.verify(code)
    return dataset


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class EncoderLayer:
    """Post-norm encoder block: self-attention then feed-forward, each with
    a residual connection and layer norm carrying a learned gain and bias."""

    def __init__(self, prefix: str, dim: int, heads: int, ff_dim: int,
                 rng: np.random.Generator, dtype):
        if dim % heads != 0:
            raise ValidationError(f"embed dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads

        def weight(name, shape, fan_in):
            t = Tensor(autodiff.kaiming_uniform(rng, shape, fan_in, dtype),
                       requires_grad=True, name=f"{prefix}.{name}")
            return t

        def vector(name, size, value):
            t = Tensor(np.full(size, value, dtype=dtype), requires_grad=True,
                       name=f"{prefix}.{name}")
            return t

        self.Wqkv = weight("Wqkv", (dim, 3 * dim), dim)
        self.bqkv = vector("bqkv", 3 * dim, 0.0)
        self.Wo = weight("Wo", (dim, dim), dim)
        self.bo = vector("bo", dim, 0.0)
        self.ln1_g = vector("ln1_g", dim, 1.0)
        self.ln1_b = vector("ln1_b", dim, 0.0)
        self.W1 = weight("W1", (dim, ff_dim), dim)
        self.b1 = vector("b1", ff_dim, 0.0)
        self.W2 = weight("W2", (ff_dim, dim), ff_dim)
        self.b2 = vector("b2", dim, 0.0)
        self.ln2_g = vector("ln2_g", dim, 1.0)
        self.ln2_b = vector("ln2_b", dim, 0.0)

    def parameters(self) -> List[Tensor]:
        return [self.Wqkv, self.bqkv, self.Wo, self.bo, self.ln1_g, self.ln1_b,
                self.W1, self.b1, self.W2, self.b2, self.ln2_g, self.ln2_b]

    def forward(self, x: Tensor) -> Tensor:
        attn = autodiff.self_attention(x, self.Wqkv, self.bqkv, self.Wo,
                                       self.bo, self.heads)
        h = autodiff.layer_norm_affine(x + attn, self.ln1_g, self.ln1_b)
        ff = autodiff.ff_block(h, self.W1, self.b1, self.W2, self.b2)
        return autodiff.layer_norm_affine(h + ff, self.ln2_g, self.ln2_b)


class TransformerDecoder:
    """Syndrome (length n-1) in, continuous error prediction (length 2n) out."""

    def __init__(self, n: int, embed_dim: int = 128, heads: int = 8,
                 layers: int = 4, ff_mult: int = 4, readout: str = "mean",
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        if readout not in ("mean", "flatten"):
            raise ValidationError(f"readout must be mean or flatten, got {readout!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.n = n
        self.seq_len = n - 1
        self.embed_dim = embed_dim
        self.heads = heads
        self.num_layers = layers
        self.ff_mult = ff_mult
        self.readout = readout
        self.emb0 = Tensor((0.02 * rng.standard_normal(embed_dim)).astype(dtype),
                           requires_grad=True, name="emb0")
        self.emb1 = Tensor((0.02 * rng.standard_normal(embed_dim)).astype(dtype),
                           requires_grad=True, name="emb1")
        self.pos = Tensor((0.02 * rng.standard_normal((self.seq_len, embed_dim))
                           ).astype(dtype), requires_grad=True, name="pos")
        self.layers = [EncoderLayer(f"l{i}", embed_dim, heads, ff_mult * embed_dim,
                                    rng, dtype) for i in range(layers)]
        head_in = embed_dim if readout == "mean" else self.seq_len * embed_dim
        self.Wout = Tensor(autodiff.kaiming_uniform(rng, (head_in, 2 * n), head_in,
                                                    dtype),
                           requires_grad=True, name="Wout")
        self.bout = Tensor(np.zeros(2 * n, dtype=dtype), requires_grad=True,
                           name="bout")

    def parameters(self) -> List[Tensor]:
        params = [self.emb0, self.emb1, self.pos]
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend([self.Wout, self.bout])
        return params

    def arch_dict(self) -> dict:
        return {"n": self.n, "embed_dim": self.embed_dim, "heads": self.heads,
                "layers": self.num_layers, "ff_mult": self.ff_mult,
                "readout": self.readout}

    def forward(self, m: Tensor) -> Tensor:
        if m.data.ndim != 2 or m.shape[1] != self.seq_len:
            raise DimensionError(
                f"expected (batch, {self.seq_len}) syndromes, got {m.shape}")
        B, L = m.shape
        x = autodiff.binary_token_embed(m, self.emb0, self.emb1, self.pos)
        for layer in self.layers:
            x = layer.forward(x)
        if self.readout == "mean":
            pooled = autodiff.mean(x, axis=1)
        else:
            pooled = autodiff.reshape(x, (B, L * self.embed_dim))
        return autodiff.sigmoid(autodiff.linear(pooled, self.Wout, self.bout))

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise ValidationError(f"checkpoint missing array {p.name!r}")
            if arrays[p.name].shape != p.shape:
                raise ValidationError(
                    f"array {p.name!r} shape {arrays[p.name].shape} != {p.shape}")
            p.data = arrays[p.name].astype(p.dtype)


def decode(model: TransformerDecoder, m: np.ndarray) -> np.ndarray:
    """Forward one syndrome; pure function of (model, input)."""
    m = np.asarray(m, dtype=np.float32)
    if m.shape != (model.seq_len,):
        raise DimensionError(f"expected length {model.seq_len}, got {m.shape}")
    with autodiff.no_grad():
        return model.forward(Tensor(m[None, :])).data[0]


def decode_batch(model: TransformerDecoder, M: np.ndarray,
                 chunk: int = 2000) -> np.ndarray:
    M = np.asarray(M, dtype=np.float32)
    out = np.empty((M.shape[0], 2 * model.n), dtype=np.float32)
    with autodiff.no_grad():
        for lo in range(0, M.shape[0], chunk):
            out[lo:lo + chunk] = model.forward(Tensor(M[lo:lo + chunk])).data
    return out


def as_decoder_fn(model: TransformerDecoder) -> evalbench.DecoderFn:
    return lambda synd: decode_batch(model, synd)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class DecoderConfig:
    """Training settings; defaults are the published full-scale run for the
    17-qubit code (the 23-qubit run used 30 epochs)."""
    batch_size: int = 1000
    epochs: int = 50
    lr: float = 1e-4
    optimizer: str = "RAdam"
    embed_dim: int = 128
    heads: int = 8
    layers: int = 4
    ff_mult: int = 4
    readout: str = "mean"
    seed: int = 0
    to_convergence: bool = False
    patience: int = 5
    max_epochs: int = 500
    eval_size: int = 2000

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DecoderEpochLog:
    epoch: int
    train_bce: float
    test_bce: float


def train_decoder(code: CheckMatrix, dataset: PairDataset, config: DecoderConfig,
                  progress=None) -> Tuple[TransformerDecoder, List[DecoderEpochLog]]:
    if config.epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if len(dataset) < 1:
        raise ValidationError("dataset is empty")
    root = np.random.SeedSequence(config.seed)
    init_seq, shuffle_seq, eval_seq = root.spawn(3)
    model = TransformerDecoder(code.n, embed_dim=config.embed_dim,
                               heads=config.heads, layers=config.layers,
                               ff_mult=config.ff_mult, readout=config.readout,
                               rng=np.random.Generator(np.random.PCG64(init_seq)))
    opt = optim.make_optimizer(config.optimizer, model.parameters(), lr=config.lr)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_seq))

    eval_set = make_training_set(code, config.eval_size, dataset.p_schedule,
                                 np.random.Generator(np.random.PCG64(eval_seq)))
    synd = dataset.syndromes.astype(np.float32)
    errs = dataset.errors.astype(np.float32)

    log: List[DecoderEpochLog] = []
    best = np.inf
    since_best = 0
    epoch = 0
    while True:
        perm = shuffle_rng.permutation(len(dataset))
        total, count = 0.0, 0
        for lo in range(0, len(dataset), config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            pred = model.forward(Tensor(synd[sel]))
            loss = autodiff.loss_bce(pred, Tensor(errs[sel]))
            value = loss.item()
            if np.isnan(value):
                raise NumericError(f"decoder training diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(sel)
            count += len(sel)
        test_bce = evaluate_bce(model, eval_set)
        log.append(DecoderEpochLog(epoch=epoch, train_bce=total / count,
                                   test_bce=test_bce))
        if progress is not None:
            progress(log[-1])
        epoch += 1
        if test_bce < best:
            best, since_best = test_bce, 0
        else:
            since_best += 1
        if epoch >= config.epochs:
            if not config.to_convergence or since_best >= config.patience \
                    or epoch >= config.max_epochs:
                break
    return model, log


def evaluate_bce(model: TransformerDecoder, dataset: PairDataset,
                 chunk: int = 2000) -> float:
    total = 0.0
    with autodiff.no_grad():
        for lo in range(0, len(dataset), chunk):
            synd = dataset.syndromes[lo:lo + chunk].astype(np.float32)
            errs = dataset.errors[lo:lo + chunk].astype(np.float32)
            pred = model.forward(Tensor(synd))
            loss = autodiff.loss_bce(pred, Tensor(errs))
            total += loss.item() * synd.shape[0]
    return total / len(dataset)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_decoder(model: TransformerDecoder, path, code: CheckMatrix,
                 config: Optional[DecoderConfig] = None,
                 epochs_run: Optional[int] = None,
                 final_test_bce: Optional[float] = None) -> None:
    checkpoint.save_arrays(path, model.state_arrays())
    info = {
        "type": "decoder",
        "code_name": code.name,
        "code_hash": definition_hash(code),
        "arch": model.arch_dict(),
        "config": config.to_dict() if config is not None else None,
        "epochs_run": epochs_run,
        "final_test_bce": final_test_bce,
    }
    checkpoint.write_sidecar(path, info)


def load_decoder(path, code: Optional[CheckMatrix] = None) -> TransformerDecoder:
    info = checkpoint.read_sidecar(path)
    if info.get("type") != "decoder":
        raise ValidationError(f"not a decoder checkpoint: {path}")
    arch = info["arch"]
    if code is not None:
        want = definition_hash(code)
        if info.get("code_hash") not in (None, want):
            raise ValidationError(
                f"decoder was trained for code hash {info['code_hash'][:12]}..., "
                f"requested code hashes to {want[:12]}...")
        if arch["n"] != code.n:
            raise ValidationError(f"decoder n={arch['n']} != code n={code.n}")
    model = TransformerDecoder(arch["n"], embed_dim=arch["embed_dim"],
                               heads=arch["heads"], layers=arch["layers"],
                               ff_mult=arch["ff_mult"], readout=arch["readout"])
    model.load_state_arrays(checkpoint.load_arrays(path))
    return model


__all__ = [
    "SupervisedPair", "PairDataset", "make_training_set",
    "save_dataset", "load_dataset", "DATA_MAGIC", "DEFAULT_P_SCHEDULE",
    "EncoderLayer", "TransformerDecoder", "decode", "decode_batch",
    "as_decoder_fn", "DecoderConfig", "DecoderEpochLog",
    "train_decoder", "evaluate_bce",
    "save_decoder", "load_decoder",
]
