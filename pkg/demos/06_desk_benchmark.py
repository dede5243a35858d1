"""Desk-scale benchmark on the first 1 MB of enwik8 (or any byte corpus).

Usage:
    python demos/06_desk_benchmark.py path/to/enwik8 [steps]

Trains the adaptive variant and a matched no-zoneout baseline with the same
seed and budget (default 10000 optimizer steps; expect a couple of hours for
the full budget, or pass a smaller step count for a quicker look), then
reports validation/test BPC and the cell-change comparison. Equivalent CLI
recipes are in the README.
"""

import sys
import time

import numpy as np

from szlstm import TrainConfig, evaluate_bpc, load_corpus, train
from szlstm.trace import cell_change_stats, trace_stream

if len(sys.argv) < 2:
    sys.exit(__doc__)
source = sys.argv[1]
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 10000

with open(source, "rb") as fh:
    head = fh.read(1_000_000)
prefix_path = source + ".1mb"
with open(prefix_path, "wb") as fh:
    fh.write(head)
corpus = load_corpus(prefix_path)
print(f"corpus prefix: {len(corpus.data)} bytes, vocabulary {corpus.vocab_size}, "
      f"uniform {np.log2(corpus.vocab_size):.3f} bpc")

results = {}
for variant in ("adaptive", "standard"):
    cfg = TrainConfig(seq_len=100, batch_size=32, chunk_len=10000, hidden=256,
                      variant=variant, steps=steps, seed=0, precision="f32",
                      lr=1.0, val_interval=max(steps // 10, 1), val_prefix=100_000)
    t0 = time.monotonic()
    print(f"== training {variant} for {steps} steps")
    results[variant] = train(cfg, corpus, quiet=False)
    print(f"   {time.monotonic() - t0:.0f}s")

cfg_eval = TrainConfig(hidden=256, seed=0)
print()
for variant, result in results.items():
    test_bpc = evaluate_bpc(result.params, corpus.split("test"), cfg_eval, lanes=1)
    print(f"{variant:>9}: valid {result.records[-1].valid_bpc:.3f} bpc, "
          f"test {test_bpc:.3f} bpc")

stream = corpus.split("test")[:401]
for variant, result in results.items():
    buffer = trace_stream(result.params, stream, window=400, seed=1)
    print(f"{variant:>9}: mean cell change {cell_change_stats(buffer)[1]:.4f} per step")
