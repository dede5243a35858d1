"""Corpus handling, truncated-BPTT training, evaluation and checkpointing.

A corpus is any byte file. The first 90% is the training split, the next 5%
validation, the rest test. Training repeatedly samples a batch of random
long chunks from the training split, walks each one in seq_len windows with
state carried across window boundaries (gradients truncated at them), and
applies one clipped Adadelta update per window.

Checkpoint format (version 1), all integers and floats little-endian:

    bytes 0..3   magic "SZO1"
    bytes 4..7   uint32 format version
    bytes 8..15  uint64 JSON header length
    header       UTF-8 JSON: step, precision, variant, tau, zoneout_rate,
                 hidden/vocab sizes, vocab byte values, optimizer
                 hyperparameters, rng stream states, config echo
    arrays       raw C-order little-endian float arrays: the 18 parameter
                 blocks in PARAM_KEYS order, then the E[g^2] accumulators,
                 then the E[dx^2] accumulators, same order

A checkpoint is written only at chunk boundaries, so resuming reproduces the
uninterrupted run bit for bit: lane states restart at the next chunk anyway
and every random draw is replayed from the stored stream counters.
"""

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .cell import (
    PARAM_KEYS,
    VARIANTS,
    GradientSet,
    ModelParams,
    RecurrentState,
    backward_window,
    cross_entropy_bpc,
    forward_step,
    fuse_gate_weights,
)
from .numerics import DTYPES, NumericalError, RngState, one_hot
from .optim import AdadeltaState, adadelta_step, clip_gradients, xavier_init

CHECKPOINT_MAGIC = b"SZO1"
CHECKPOINT_VERSION = 1

# rng stream tags; forked off the config seed
STREAM_INIT = 1
STREAM_DATA = 2
STREAM_MASK = 3
STREAM_EVAL = 4
STREAM_SAMPLE = 5

LOG_HEADER = "step\ttrain_bpc\tvalid_bpc\tmean_z\tmean_update_rate\twall_ms"


@dataclass
class Corpus:
    """A byte corpus with its vocabulary and fixed 90/5/5 split boundaries."""

    data: np.ndarray      # raw bytes, uint8
    vocab: np.ndarray     # sorted distinct byte values, uint8
    encoded: np.ndarray   # symbol indices into vocab, uint8
    train_end: int
    valid_end: int

    @property
    def vocab_size(self):
        return len(self.vocab)

    def split(self, name):
        if name == "train":
            return self.encoded[: self.train_end]
        if name == "valid":
            return self.encoded[self.train_end: self.valid_end]
        if name == "test":
            return self.encoded[self.valid_end:]
        raise ValueError(f"unknown split {name!r}, expected train/valid/test")

    def encode_bytes(self, raw):
        """Symbol indices for raw bytes; rejects bytes absent from the vocabulary."""
        arr = np.frombuffer(raw, dtype=np.uint8)
        table = np.full(256, -1, dtype=np.int16)
        table[self.vocab] = np.arange(self.vocab_size, dtype=np.int16)
        idx = table[arr]
        if np.any(idx < 0):
            bad = int(arr[np.argmax(idx < 0)])
            raise ValueError(f"byte 0x{bad:02x} does not occur in the corpus vocabulary")
        return idx.astype(np.uint8)

    def decode(self, indices):
        """Bytes for a sequence of symbol indices."""
        return self.vocab[np.asarray(indices)].tobytes()


def load_corpus(path):
    """Read a byte corpus, build its vocabulary and record split offsets."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw:
        raise ValueError(f"corpus file {path} is empty")
    data = np.frombuffer(raw, dtype=np.uint8)
    vocab = np.unique(data)
    table = np.zeros(256, dtype=np.int16)
    table[vocab] = np.arange(len(vocab), dtype=np.int16)
    encoded = table[data].astype(np.uint8)
    length = len(data)
    train_end = length * 9 // 10
    valid_end = train_end + length // 20
    return Corpus(data=data, vocab=vocab, encoded=encoded,
                  train_end=train_end, valid_end=valid_end)


@dataclass
class TrainConfig:
    seq_len: int = 100
    batch_size: int = 128
    chunk_len: int = 10000
    hidden: int = 256
    variant: str = "adaptive"
    tau: float = 0.05
    zoneout_rate: float = 0.5
    seed: int = 0
    steps: int = 1000
    precision: str = "f32"
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 0.001
    clip_norm: float = 5.0
    eval_mask_mode: str = "expected"
    val_interval: int = 100
    val_prefix: int = 100000
    val_lanes: int = 0          # 0 means batch_size

    def validate(self):
        for name in ("seq_len", "batch_size", "chunk_len", "hidden",
                     "val_interval", "val_prefix"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.chunk_len % self.seq_len != 0:
            raise ValueError(
                f"chunk_len ({self.chunk_len}) must be divisible by seq_len ({self.seq_len})"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.precision not in DTYPES:
            raise ValueError(f"unknown precision {self.precision!r}, expected f32 or f64")
        if self.eval_mask_mode not in ("expected", "sampled"):
            raise ValueError(f"unknown eval_mask_mode {self.eval_mask_mode!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 <= self.zoneout_rate <= 1.0:
            raise ValueError(f"zoneout_rate must lie in [0, 1], got {self.zoneout_rate}")
        return self

    @property
    def dtype(self):
        return DTYPES[self.precision]

    @property
    def windows_per_chunk(self):
        return self.chunk_len // self.seq_len


@dataclass
class LogRecord:
    step: int
    train_bpc: float
    valid_bpc: float
    mean_z: float
    mean_update_rate: float
    wall_ms: float

    def line(self):
        return (f"{self.step}\t{self.train_bpc:.6f}\t{self.valid_bpc:.6f}"
                f"\t{self.mean_z:.6f}\t{self.mean_update_rate:.6f}\t{self.wall_ms:.1f}")


@dataclass
class TrainResult:
    params: ModelParams
    opt: AdadeltaState
    records: list
    losses: list           # per-window mean loss in nats, one entry per step
    step: int


def sample_training_chunks(corpus, cfg, rng):
    """Uniform random chunk start offsets inside the training split, one per lane.

    Each chunk provides chunk_len inputs plus one trailing symbol for the
    final target.
    """
    limit = corpus.train_end - cfg.chunk_len
    if limit < 1:
        raise ValueError(
            f"training split ({corpus.train_end} symbols) shorter than "
            f"chunk_len + 1 ({cfg.chunk_len + 1})"
        )
    return rng.integers(0, limit, size=cfg.batch_size)


def run_tbptt_window(states, inputs, targets, params, rng, grads,
                     mask_mode="sampled", fused=None, step_hook=None):
    """One truncated-BPTT window: forward with caching, then a reverse sweep.

    inputs and targets are (seq_len, batch) index arrays with targets[t] the
    symbol after inputs[t]. Gradients accumulate into grads; the returned
    states carry no gradient across the boundary. Returns (states,
    loss_nats) with the loss averaged per symbol.
    """
    if fused is None:
        fused = fuse_gate_weights(params)
    seq_len = inputs.shape[0]
    caches = []
    total = 0.0
    state = states
    for t in range(seq_len):
        x = one_hot(inputs[t], params.vocab_size, dtype=params.dtype)
        state, cache, loss = forward_step(state, x, params, rng=rng,
                                          mask_mode=mask_mode,
                                          target=targets[t], fused=fused,
                                          x_idx=inputs[t])
        caches.append(cache)
        total += loss
        if step_hook is not None:
            step_hook(cache)
    backward_window(caches, params, targets, grads, fused=fused)
    return state, total / seq_len


def evaluate_bpc(params, split, cfg, lanes=1, seed=None):
    """Frozen-weight pass over a split; returns mean bits per character.

    With lanes=1 this is a strict single sequential pass with state carried
    the whole way. lanes>1 cuts the split into that many contiguous segments
    scored in parallel (each segment still sequential), which changes nothing
    but the handful of fresh-state boundaries. Surprisal feedback only ever
    sees symbols already scored. Parameters are never written.
    """
    split = np.asarray(split)
    if lanes < 1:
        raise ValueError(f"lanes must be >= 1, got {lanes}")
    seg = len(split) // lanes
    if seg < 2:
        raise ValueError(f"split of {len(split)} symbols is too short for {lanes} lanes")
    arr = split[: seg * lanes].reshape(lanes, seg)
    state = RecurrentState.initial(lanes, params.hidden_size, params.vocab_size,
                                   dtype=params.dtype)
    rng = RngState(cfg.seed if seed is None else seed).fork(STREAM_EVAL)
    fused = fuse_gate_weights(params)
    total = 0.0
    for t in range(seg - 1):
        x = one_hot(arr[:, t], params.vocab_size, dtype=params.dtype)
        state, _, loss = forward_step(state, x, params, rng=rng,
                                      mask_mode=cfg.eval_mask_mode,
                                      target=arr[:, t + 1], fused=fused,
                                      x_idx=arr[:, t])
        total += loss
    return cross_entropy_bpc(total / (seg - 1))


def _window_slices(corpus, offsets, window_index, seq_len):
    base = offsets + window_index * seq_len
    idx = base[:, None] + np.arange(seq_len + 1)[None, :]
    seq = corpus.encoded[idx]          # (batch, seq_len + 1)
    return seq[:, :-1].T.copy(), seq[:, 1:].T.copy()


def init_model(corpus, cfg, rng_init=None):
    """Fresh Xavier-initialized parameters and optimizer state for a corpus."""
    if rng_init is None:
        rng_init = RngState(cfg.seed).fork(STREAM_INIT)
    params = ModelParams.zeros(corpus.vocab_size, cfg.hidden, variant=cfg.variant,
                               tau=cfg.tau, zoneout_rate=cfg.zoneout_rate,
                               dtype=cfg.dtype)
    xavier_init(params, rng_init)
    opt = AdadeltaState(params, rho=cfg.rho, eps=cfg.eps, lr=cfg.lr)
    return params, opt


def train(cfg, corpus, log_path=None, ckpt_path=None, resume=None, quiet=True):
    """Training driver; returns a TrainResult.

    Emits one LogRecord per val_interval optimizer steps (plus one at step 0)
    and appends the tab-separated line to log_path when given. ckpt_path,
    when given, is rewritten at every chunk boundary and once at the end.
    resume takes a Checkpoint and continues it exactly.
    """
    cfg.validate()
    if resume is not None:
        params = resume.params
        opt = resume.opt
        if params.hidden_size != cfg.hidden or params.variant != cfg.variant:
            raise ValueError(
                f"checkpoint ({params.variant}, N={params.hidden_size}) does not match "
                f"config ({cfg.variant}, N={cfg.hidden})"
            )
        rng_data = RngState(*resume.rng["data"])
        rng_mask = RngState(*resume.rng["mask"])
        step = resume.step
    else:
        params, opt = init_model(corpus, cfg)
        rng_data = RngState(cfg.seed).fork(STREAM_DATA)
        rng_mask = RngState(cfg.seed).fork(STREAM_MASK)
        step = 0

    grads = GradientSet.zeros_like(params)
    records = []
    losses = []
    t_start = time.monotonic()

    valid = corpus.split("valid")
    val_prefix = valid[: cfg.val_prefix]
    val_lanes = cfg.val_lanes or cfg.batch_size
    val_lanes = max(1, min(val_lanes, len(val_prefix) // 2))

    def emit(step, train_bpc, z_sum, mask_sum, n_sym):
        valid_bpc = evaluate_bpc(params, val_prefix, cfg, lanes=val_lanes)
        rec = LogRecord(
            step=step,
            train_bpc=train_bpc,
            valid_bpc=float(valid_bpc),
            mean_z=z_sum / n_sym if n_sym else float("nan"),
            mean_update_rate=mask_sum / n_sym if n_sym else float("nan"),
            wall_ms=(time.monotonic() - t_start) * 1e3,
        )
        records.append(rec)
        if log_path:
            fresh = not os.path.exists(log_path)
            with open(log_path, "a") as fh:
                if fresh:
                    fh.write(LOG_HEADER + "\n")
                fh.write(rec.line() + "\n")
        if not quiet:
            print(rec.line(), flush=True)
        return rec

    def save(path):
        if path:
            save_checkpoint(path, params, opt, cfg, corpus.vocab, step,
                            rng={"data": rng_data.state(), "mask": rng_mask.state()})

    emit(step, float("nan"), 0.0, 0.0, 0)

    states = None
    offsets = None
    window_index = 0
    windows_left = 0
    interval_nats = []
    z_sum = mask_sum = 0.0
    n_sym = 0
    wpc = cfg.windows_per_chunk

    while step < cfg.steps:
        if windows_left == 0:
            # chunk boundary; the checkpoint written here resumes bit-exactly
            save(ckpt_path)
            offsets = sample_training_chunks(corpus, cfg, rng_data)
            states = RecurrentState.initial(cfg.batch_size, cfg.hidden,
                                            corpus.vocab_size, dtype=cfg.dtype)
            windows_left = wpc
            window_index = 0
        inputs, targets = _window_slices(corpus, offsets, window_index, cfg.seq_len)

        stats = {"z": 0.0, "mask": 0.0, "n": 0}

        def hook(cache):
            stats["z"] += float(cache.z.sum())
            stats["mask"] += float(cache.mask.sum())
            stats["n"] += cache.z.size

        grads.zero_()
        fused = fuse_gate_weights(params)
        states, loss_nats = run_tbptt_window(states, inputs, targets, params,
                                             rng_mask, grads, mask_mode="sampled",
                                             fused=fused, step_hook=hook)
        if not np.isfinite(loss_nats):
            raise NumericalError(
                f"non-finite loss at step {step + 1} "
                f"(chunk offsets {offsets.tolist()}, window {window_index}); "
                f"grad norm {grads.global_norm():.3e}"
            )
        losses.append(loss_nats)
        interval_nats.append(loss_nats)
        z_sum += stats["z"] / stats["n"]
        mask_sum += stats["mask"] / stats["n"]
        n_sym += 1

        clip_gradients(grads, cfg.clip_norm)
        adadelta_step(params, grads, opt)
        step += 1
        window_index += 1
        windows_left -= 1

        if step % cfg.val_interval == 0 or step == cfg.steps:
            train_bpc = cross_entropy_bpc(float(np.mean(interval_nats)))
            emit(step, train_bpc, z_sum, mask_sum, n_sym)
            interval_nats = []
            z_sum = mask_sum = 0.0
            n_sym = 0

    save(ckpt_path)
    return TrainResult(params=params, opt=opt, records=records, losses=losses, step=step)


@dataclass
class Checkpoint:
    params: ModelParams
    opt: AdadeltaState
    config: dict
    vocab: np.ndarray
    step: int
    rng: dict


def save_checkpoint(path, params, opt, cfg, vocab, step, rng=None):
    """Write the versioned binary checkpoint format documented above."""
    header = {
        "step": int(step),
        "precision": "f64" if params.dtype == np.float64 else "f32",
        "hidden": int(params.hidden_size),
        "vocab_size": int(params.vocab_size),
        "vocab": [int(v) for v in vocab],
        "variant": params.variant,
        "tau": params.tau,
        "zoneout_rate": params.zoneout_rate,
        "rho": opt.rho,
        "eps": opt.eps,
        "lr": opt.lr,
        "rng": {k: list(v) for k, v in (rng or {}).items()},
        "config": asdict(cfg) if isinstance(cfg, TrainConfig) else dict(cfg or {}),
    }
    blob = json.dumps(header).encode("utf-8")
    dtype_le = "<f8" if params.dtype == np.float64 else "<f4"
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array([CHECKPOINT_VERSION], dtype="<u4").tobytes())
        fh.write(np.array([len(blob)], dtype="<u8").tobytes())
        fh.write(blob)
        for _, block in params.blocks():
            fh.write(np.ascontiguousarray(block, dtype=dtype_le).tobytes())
        for accum in (opt.eg2, opt.edx2):
            for _, block in accum.items():
                fh.write(np.ascontiguousarray(block, dtype=dtype_le).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; magic, version and shape mismatches all hard-fail."""
    with open(path, "rb") as fh:
        raw = fh.read()

    def take(n, what):
        nonlocal pos
        if pos + n > len(raw):
            raise ValueError(f"truncated checkpoint {path}: short read in {what}")
        chunk = raw[pos: pos + n]
        pos += n
        return chunk

    pos = 0
    if take(4, "magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    version = int(np.frombuffer(take(4, "version"), dtype="<u4")[0])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    hlen = int(np.frombuffer(take(8, "header length"), dtype="<u8")[0])
    header = json.loads(take(hlen, "header").decode("utf-8"))

    dtype = DTYPES[header["precision"]]
    dtype_le = "<f8" if dtype == np.float64 else "<f4"
    params = ModelParams.zeros(header["vocab_size"], header["hidden"],
                               variant=header["variant"], tau=header["tau"],
                               zoneout_rate=header["zoneout_rate"], dtype=dtype)

    def read_block(shape, what):
        count = int(np.prod(shape, dtype=np.int64))
        buf = take(count * np.dtype(dtype_le).itemsize, what)
        return np.frombuffer(buf, dtype=dtype_le).astype(dtype).reshape(shape)

    for name, block in params.blocks():
        block[...] = read_block(block.shape, name)
    opt = AdadeltaState(params, rho=header["rho"], eps=header["eps"], lr=header["lr"])
    for tag, accum in (("eg2", opt.eg2), ("edx2", opt.edx2)):
        for name, block in accum.items():
            block[...] = read_block(block.shape, f"{tag}.{name}")
    if pos != len(raw):
        raise ValueError(f"checkpoint {path} has {len(raw) - pos} trailing bytes")

    return Checkpoint(
        params=params,
        opt=opt,
        config=header.get("config", {}),
        vocab=np.array(header["vocab"], dtype=np.uint8),
        step=int(header["step"]),
        rng={k: tuple(v) for k, v in header.get("rng", {}).items()},
    )
