"""Noise sampling, logical-error-rate sweeps, reference decoding, metrics.

A decoder-like object here is any callable mapping a (batch, n-1) float
syndrome matrix to a (batch, 2n) prediction matrix; the Transformer, the
lookup table, and the zero-correction baseline all fit that shape.  Paired
sweeps reuse one error sample per p across decoders, so difference curves
carry no sampling noise.
"""
from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff, codes, oracle as oracle_mod
from .autodiff import Tensor
from .codes import CheckMatrix, PauliVector
from .errors import DimensionError, NumericError, ResourceError, ValidationError

DecoderFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# noise model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Single-parameter depolarizing-style channel: each qubit independently
    suffers X, Z, or Y, each with probability p/3."""
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p < 0.75):
            raise ValidationError(f"p must lie in [0, 0.75), got {self.p}")

    @property
    def p_x(self) -> float:
        return self.p / 3.0

    @property
    def p_z(self) -> float:
        return self.p / 3.0

    @property
    def p_y(self) -> float:
        return self.p / 3.0


def sample_error_bits(n: int, p, rng: np.random.Generator,
                      count: int) -> np.ndarray:
    """(count, 2n) uint8 error sample; p is a scalar or per-row array."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    u = rng.random((count, n))
    x_err = u < 2.0 * p / 3.0          # X or Y
    z_err = (u >= p / 3.0) & (u < p)   # Z or Y
    out = np.empty((count, 2 * n), dtype=np.uint8)
    out[:, :n] = x_err
    out[:, n:] = z_err
    return out


def sample_error(code: CheckMatrix, noise: NoiseModel,
                 rng: np.random.Generator) -> PauliVector:
    return PauliVector(sample_error_bits(code.n, noise.p, rng, 1)[0])


def sample_error_batch(code: CheckMatrix, noise: NoiseModel,
                       rng: np.random.Generator, count: int) -> np.ndarray:
    return sample_error_bits(code.n, noise.p, rng, count)


# ---------------------------------------------------------------------------
# adjudication
# ---------------------------------------------------------------------------

class Adjudication(enum.Enum):
    SUCCESS = "success"
    LOGICAL_FAILURE = "logical_failure"


def threshold(predicted: np.ndarray) -> np.ndarray:
    """Continuous predictions to binary corrections at the sigmoid midpoint."""
    return (np.asarray(predicted) > 0.5).astype(np.uint8)


def adjudicate(code: CheckMatrix, true_e: PauliVector,
               predicted: np.ndarray) -> Adjudication:
    predicted = np.asarray(predicted)
    if predicted.shape != (2 * code.n,):
        raise DimensionError(f"expected length {2 * code.n}, got {predicted.shape}")
    residual = PauliVector(true_e.bits ^ threshold(predicted))
    ok = codes.is_in_stabilizer_group(code, residual)
    return Adjudication.SUCCESS if ok else Adjudication.LOGICAL_FAILURE


def adjudicate_batch(code: CheckMatrix, true_E: np.ndarray,
                     predicted: np.ndarray) -> np.ndarray:
    """Boolean success vector for (batch, 2n) truths and predictions."""
    true_E = np.asarray(true_E, dtype=np.uint8)
    if true_E.shape != np.asarray(predicted).shape:
        raise DimensionError(
            f"shape mismatch {true_E.shape} vs {np.asarray(predicted).shape}")
    residuals = true_E ^ threshold(predicted)
    return codes.is_in_stabilizer_group_batch(code, residuals)


# ---------------------------------------------------------------------------
# confidence intervals and sweeps
# ---------------------------------------------------------------------------

def wilson_interval(failures: int, trials: int, z: float = 1.959963984540054
                    ) -> Tuple[float, float]:
    """95% score interval for a binomial rate."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    phat = failures / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class SweepPoint:
    p: float
    trials: int
    failures: int
    rate: float
    ci_low: float
    ci_high: float


@dataclass
class SweepResult:
    decoder_id: str
    seed: int
    points: List[SweepPoint] = field(default_factory=list)

    def rates(self) -> np.ndarray:
        return np.array([pt.rate for pt in self.points])

    def grid(self) -> np.ndarray:
        return np.array([pt.p for pt in self.points])


@dataclass
class PairedSweep:
    """Two sweeps over one shared error sample plus per-p paired statistics:
    only_a / only_b count trials where exactly one decoder failed, so the
    standard error of the rate difference needs no independence assumption."""
    a: SweepResult
    b: SweepResult
    only_a: List[int] = field(default_factory=list)
    only_b: List[int] = field(default_factory=list)

    def difference(self) -> np.ndarray:
        return self.a.rates() - self.b.rates()

    def difference_sigma(self) -> np.ndarray:
        out = []
        for pt, na, nb in zip(self.a.points, self.only_a, self.only_b):
            t = pt.trials
            var = (na + nb) / t - ((na - nb) / t) ** 2
            out.append(np.sqrt(max(var, 0.0) / t))
        return np.array(out)


DESK_GRID = tuple(round(0.005 * k, 3) for k in range(1, 11))


def full_grid() -> Tuple[float, ...]:
    """The published 491-point grid: 0.001 to 0.05 in steps of 0.0001."""
    return tuple(round(0.001 + 0.0001 * k, 4) for k in range(491))


def _grid_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,))))


def sweep(code: CheckMatrix, decoder_fn: DecoderFn, grid: Sequence[float],
          trials: int, seed: int, decoder_id: str = "decoder") -> SweepResult:
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    result = SweepResult(decoder_id=decoder_id, seed=seed)
    for idx, p in enumerate(grid):
        rng = _grid_rng(seed, idx)
        E = sample_error_bits(code.n, p, rng, trials)
        synd = codes.syndrome_batch(code, E).astype(np.float32)
        pred = decoder_fn(synd)
        ok = adjudicate_batch(code, E, pred)
        failures = int(trials - ok.sum())
        lo, hi = wilson_interval(failures, trials)
        result.points.append(SweepPoint(p=float(p), trials=trials, failures=failures,
                                        rate=failures / trials, ci_low=lo, ci_high=hi))
    return result


def sweep_paired(code: CheckMatrix, fn_a: DecoderFn, fn_b: DecoderFn,
                 grid: Sequence[float], trials: int, seed: int,
                 id_a: str = "a", id_b: str = "b") -> PairedSweep:
    """Both decoders consume the identical error sample at every p."""
    res_a = SweepResult(decoder_id=id_a, seed=seed)
    res_b = SweepResult(decoder_id=id_b, seed=seed)
    paired = PairedSweep(a=res_a, b=res_b)
    for idx, p in enumerate(grid):
        rng = _grid_rng(seed, idx)
        E = sample_error_bits(code.n, p, rng, trials)
        synd = codes.syndrome_batch(code, E).astype(np.float32)
        ok_a = adjudicate_batch(code, E, fn_a(synd))
        ok_b = adjudicate_batch(code, E, fn_b(synd))
        for res, ok in ((res_a, ok_a), (res_b, ok_b)):
            failures = int(trials - ok.sum())
            lo, hi = wilson_interval(failures, trials)
            res.points.append(SweepPoint(p=float(p), trials=trials, failures=failures,
                                         rate=failures / trials, ci_low=lo, ci_high=hi))
        paired.only_a.append(int((~ok_a & ok_b).sum()))
        paired.only_b.append(int((ok_a & ~ok_b).sum()))
    return paired


def zero_decoder(code: CheckMatrix) -> DecoderFn:
    """Baseline that never corrects anything."""
    def fn(synd: np.ndarray) -> np.ndarray:
        return np.zeros((synd.shape[0], 2 * code.n), dtype=np.float32)
    return fn


# ---------------------------------------------------------------------------
# sweep persistence
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ["p", "trials", "failures", "rate", "ci_low", "ci_high",
                 "decoder_id", "seed"]


def save_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for pt in result.points:
            writer.writerow([f"{pt.p:.6g}", pt.trials, pt.failures,
                             f"{pt.rate:.8g}", f"{pt.ci_low:.8g}", f"{pt.ci_high:.8g}",
                             result.decoder_id, result.seed])


def load_sweep_csv(path) -> SweepResult:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SWEEP_COLUMNS:
        raise ValidationError(f"not a sweep CSV: {path}")
    result: Optional[SweepResult] = None
    for row in rows[1:]:
        p, trials, failures, rate, lo, hi, decoder_id, seed = row
        if result is None:
            result = SweepResult(decoder_id=decoder_id, seed=int(seed))
        result.points.append(SweepPoint(p=float(p), trials=int(trials),
                                        failures=int(failures), rate=float(rate),
                                        ci_low=float(lo), ci_high=float(hi)))
    if result is None:
        raise ValidationError(f"empty sweep CSV: {path}")
    return result


def save_difference_csv(paired: PairedSweep, path) -> None:
    sigma = paired.difference_sigma()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "rate_a", "rate_b", "diff", "sigma",
                         "decoder_a", "decoder_b", "seed"])
        for i, (pa, pb) in enumerate(zip(paired.a.points, paired.b.points)):
            writer.writerow([f"{pa.p:.6g}", f"{pa.rate:.8g}", f"{pb.rate:.8g}",
                             f"{pa.rate - pb.rate:.8g}", f"{sigma[i]:.8g}",
                             paired.a.decoder_id, paired.b.decoder_id,
                             paired.a.seed])


def _save_svg(fig, path) -> None:
    # no date metadata and a fixed hash salt, so reruns are byte-identical
    import matplotlib
    with matplotlib.rc_context({"svg.hashsalt": "usdlab"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def plot_sweeps(results: Sequence[SweepResult], path) -> None:
    """Rate vs p on a log-y axis, one line per decoder."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for res in results:
        grid = res.grid()
        rates = res.rates()
        ax.plot(grid, np.maximum(rates, 1e-12), marker="o", markersize=3,
                label=res.decoder_id)
        ax.fill_between(grid, np.maximum([pt.ci_low for pt in res.points], 1e-12),
                        np.maximum([pt.ci_high for pt in res.points], 1e-12),
                        alpha=0.2)
    ax.set_xlabel("physical error rate p")
    ax.set_ylabel("logical error rate")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_difference(paired: PairedSweep, path) -> None:
    """Rate difference a-b vs p with a shaded one-sigma band."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    grid = paired.a.grid()
    diff = paired.difference()
    sigma = paired.difference_sigma()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.plot(grid, diff, marker="o", markersize=3,
            label=f"{paired.a.decoder_id} - {paired.b.decoder_id}")
    ax.fill_between(grid, diff - sigma, diff + sigma, alpha=0.3)
    ax.set_xlabel("physical error rate p")
    ax.set_ylabel("logical error rate difference")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# lookup-table decoder
# ---------------------------------------------------------------------------

MAX_LUT_SYNDROME_BITS = 26


class LutDecoder:
    """Total map from every syndrome to a minimum-weight consistent error,
    stored as packed per-qubit X and Z masks (n <= 32)."""

    def __init__(self, code: CheckMatrix, xmask: np.ndarray, zmask: np.ndarray,
                 weight: np.ndarray):
        self.code = code
        self.xmask = xmask
        self.zmask = zmask
        self.weight = weight
        self.decoder_id = f"lut-{code.name}"

    def corrections(self, syndromes: np.ndarray) -> np.ndarray:
        """(batch, n-1) binary syndromes to (batch, 2n) binary corrections."""
        syndromes = threshold(syndromes)
        n = self.code.n
        if syndromes.ndim != 2 or syndromes.shape[1] != n - 1:
            raise DimensionError(f"expected (batch, {n - 1}), got {syndromes.shape}")
        weights = (1 << np.arange(n - 1, dtype=np.int64))
        idx = syndromes.astype(np.int64) @ weights
        qubit_bits = (1 << np.arange(n, dtype=np.int64))
        out = np.empty((syndromes.shape[0], 2 * n), dtype=np.uint8)
        out[:, :n] = (self.xmask[idx].astype(np.int64)[:, None] & qubit_bits) != 0
        out[:, n:] = (self.zmask[idx].astype(np.int64)[:, None] & qubit_bits) != 0
        return out

    def __call__(self, syndromes: np.ndarray) -> np.ndarray:
        return self.corrections(syndromes).astype(np.float32)


def build_lut_decoder(code: CheckMatrix) -> LutDecoder:
    """Breadth-first search outward from the zero syndrome over single-qubit
    X/Z/Y moves; the first visit to a syndrome is at minimal error weight."""
    n = code.n
    bits = code.num_rows
    if bits > MAX_LUT_SYNDROME_BITS:
        raise ResourceError(
            f"2^{bits} syndrome table exceeds the 2^{MAX_LUT_SYNDROME_BITS} budget")
    size = 1 << bits
    place = (1 << np.arange(bits, dtype=np.int64))

    # syndrome of each single-qubit Pauli as a packed integer
    deltas = []
    for q in range(n):
        for xbit, zbit in ((1, 0), (0, 1), (1, 1)):   # X, Z, Y
            e = np.zeros(2 * n, dtype=np.uint8)
            e[q] = xbit
            e[q + n] = zbit
            s = codes.syndrome_batch(code, e[None, :])[0]
            deltas.append((int(s.astype(np.int64) @ place),
                           xbit << q, zbit << q))

    dist = np.full(size, -1, dtype=np.int8)
    xmask = np.zeros(size, dtype=np.uint32)
    zmask = np.zeros(size, dtype=np.uint32)
    dist[0] = 0
    frontier = np.array([0], dtype=np.int64)
    level = 0
    while frontier.size:
        level += 1
        nxt = []
        for delta, xset, zset in deltas:
            cand = frontier ^ delta
            fresh = dist[cand] < 0
            if not fresh.any():
                continue
            new = cand[fresh]
            src = frontier[fresh]
            dist[new] = level
            # applying the move twice on the same qubit would not be minimal,
            # so OR never collides with an already-set bit of the source mask
            xmask[new] = xmask[src] | np.uint32(xset)
            zmask[new] = zmask[src] | np.uint32(zset)
            nxt.append(new)
        frontier = np.concatenate(nxt) if nxt else np.array([], dtype=np.int64)
    if (dist < 0).any():
        raise ValidationError("syndrome table incomplete: generators not full rank")
    return LutDecoder(code, xmask, zmask, dist.astype(np.int8))


def enumerate_errors(n: int, max_weight: int) -> np.ndarray:
    """All Pauli errors of weight <= max_weight as a (N, 2n) uint8 matrix."""
    rows = [np.zeros(2 * n, dtype=np.uint8)]
    for w in range(1, max_weight + 1):
        for qubits in itertools.combinations(range(n), w):
            for paulis in itertools.product((1, 2, 3), repeat=w):   # 1=X, 2=Z, 3=Y
                e = np.zeros(2 * n, dtype=np.uint8)
                for q, t in zip(qubits, paulis):
                    if t in (1, 3):
                        e[q] = 1
                    if t in (2, 3):
                        e[q + n] = 1
                rows.append(e)
    return np.stack(rows)


# ---------------------------------------------------------------------------
# oracle structural metrics
# ---------------------------------------------------------------------------

def oracle_quality(oracle_like, code: CheckMatrix, samples: int,
                   rng: np.random.Generator) -> Tuple[float, float, float]:
    """(cosine similarity, MSE, MAE) against exact_f on uniform inputs."""
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    X = rng.uniform(-0.5, 1.0, size=(samples, 2 * code.n)).astype(np.float32)
    pred = np.asarray(oracle_like.predict(X), dtype=np.float64)
    truth = oracle_mod.exact_f_batch(code, X).astype(np.float64)
    diff = pred - truth
    mse = float((diff * diff).mean())
    mae = float(np.abs(diff).mean())

    num = (pred * truth).sum(axis=1)
    den = np.linalg.norm(pred, axis=1) * np.linalg.norm(truth, axis=1)
    cos = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    # bitwise-identical rows are perfectly similar even where rounding in
    # the quotient would say 0.9999...; this pins the exact-oracle case to 1
    identical = np.all(pred == truth, axis=1)
    cos[identical] = 1.0
    return float(cos.mean()), mse, mae


def _mlp_jacobian_sq_sum(oracle_like, X: np.ndarray) -> np.ndarray:
    """Per-sample squared Frobenius norm of the oracle Jacobian, computed
    by one reverse-mode sweep per output component."""
    outputs = X.shape[0]
    x = Tensor(X, requires_grad=True)
    out = oracle_like.forward(x)
    m = out.shape[1]
    total = np.zeros(outputs, dtype=np.float64)
    for i in range(m):
        onehot = np.zeros((m, 1), dtype=X.dtype)
        onehot[i] = 1.0
        col = autodiff.matmul(out, Tensor(onehot))
        x.grad = None
        autodiff.mean(col).backward()
        rows = x.grad.astype(np.float64) * (outputs * 1.0)
        total += (rows * rows).sum(axis=1)
    return total


def dirichlet_ratio(oracle_like, code: CheckMatrix, samples: int,
                    rng: np.random.Generator, chunk: int = 1000) -> float:
    """Monte-Carlo E(oracle)/E(f) where E is the mean squared Jacobian
    Frobenius norm over uniform inputs; both estimates share the samples."""
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    e_num = 0.0
    e_den = 0.0
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        X = rng.uniform(-0.5, 1.0, size=(take, 2 * code.n)).astype(np.float32)
        e_num += float(_mlp_jacobian_sq_sum(oracle_like, X).sum())
        J = oracle_mod.exact_f_grad_batch(code, X.astype(np.float64))
        e_den += float((J * J).sum())
        done += take
    if e_den == 0.0:
        raise NumericError("degenerate Dirichlet denominator: E(f) estimate is 0")
    return e_num / e_den


def group_invariance(oracle_like, code: CheckMatrix, samples: int,
                     rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """Per-generator MSE between exact_f(x) and oracle(x xor generator) on
    random binary x, plus the mean over generators."""
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    X = (rng.random((samples, 2 * code.n)) < 0.5).astype(np.float32)
    base = oracle_mod.exact_f_batch(code, X.astype(np.float64))
    per_gen = np.empty(code.num_rows, dtype=np.float64)
    for i, row in enumerate(code.rows):
        shifted = np.abs(X - row.bits.astype(np.float32))
        pred = np.asarray(oracle_like.predict(shifted), dtype=np.float64)
        d = pred - base
        per_gen[i] = (d * d).mean()
    return per_gen, float(per_gen.mean())


__all__ = [
    "NoiseModel", "sample_error", "sample_error_batch", "sample_error_bits",
    "Adjudication", "threshold", "adjudicate", "adjudicate_batch",
    "wilson_interval", "SweepPoint", "SweepResult", "PairedSweep",
    "DESK_GRID", "full_grid", "sweep", "sweep_paired", "zero_decoder",
    "SWEEP_COLUMNS", "save_sweep_csv", "load_sweep_csv", "save_difference_csv",
    "plot_sweeps", "plot_difference",
    "LutDecoder", "build_lut_decoder", "enumerate_errors",
    "oracle_quality", "dirichlet_ratio", "group_invariance",
]
