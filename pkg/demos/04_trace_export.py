"""Export gate-activation and cell-change traces for plotting.

Trains a small adaptive model and a matched no-zoneout baseline, traces both
over the same held-out stream, writes the CSVs, and prints the cell-change
summary. The gate CSV column order (i, o, f) maps to an RGB composite:
write -> red, read -> green, erase -> blue; black rows are masked-out steps.
"""

import os
import tempfile

import numpy as np

from szlstm import TrainConfig, load_corpus, train
from szlstm.trace import cell_change_stats, export_cell_change, export_gate_map, trace_stream

words = [b"<page>", b"</page>", b"<title>", b"</title>", b"the ", b"of ",
         b"and ", b"data ", b"[[link]] ", b"0123 "]
picks = np.random.default_rng(0).integers(0, len(words), size=12000)
corpus_path = os.path.join(tempfile.gettempdir(), "szlstm_demo_corpus")
with open(corpus_path, "wb") as fh:
    fh.write(b"".join(words[i] for i in picks))
corpus = load_corpus(corpus_path)

out_dir = tempfile.mkdtemp(prefix="szlstm_traces_")
stream = corpus.split("test")[:201]
for variant in ("adaptive", "standard"):
    cfg = TrainConfig(seq_len=25, batch_size=16, chunk_len=500, hidden=64,
                      variant=variant, steps=400, val_interval=400,
                      seed=1, lr=1.0, val_prefix=3000)
    result = train(cfg, corpus)
    buffer = trace_stream(result.params, stream, window=200, seed=5)
    gates = os.path.join(out_dir, f"{variant}_gates.csv")
    cells = os.path.join(out_dir, f"{variant}_cellchange.csv")
    export_gate_map(buffer, gates)
    export_cell_change(buffer, cells)
    per_step, overall = cell_change_stats(buffer)
    print(f"{variant:>9}: mean |cell change| {overall:.4f} per step "
          f"(peak {per_step.max():.4f}) -> {gates}")

print()
print(f"CSVs in {out_dir}; render them with any plotting tool.")
