"""Train a small model on synthetic tag-structured text and watch BPC fall.

Writes a corpus of nested markup-ish tokens, trains the adaptive variant for
a few hundred optimizer steps, and prints the training log. The same loop
scales to real corpora; see the README for the enwik8 recipe.
"""

import os
import tempfile

import numpy as np

from szlstm import TrainConfig, load_corpus, train

words = [b"<page>", b"</page>", b"<title>", b"</title>", b"the ", b"of ",
         b"and ", b"data ", b"[[link]] ", b"0123 "]
picks = np.random.default_rng(0).integers(0, len(words), size=12000)
corpus_path = os.path.join(tempfile.gettempdir(), "szlstm_demo_corpus")
with open(corpus_path, "wb") as fh:
    fh.write(b"".join(words[i] for i in picks))

corpus = load_corpus(corpus_path)
print(f"corpus: {len(corpus.data)} bytes, vocabulary of {corpus.vocab_size}")
print(f"uniform rate would be {np.log2(corpus.vocab_size):.3f} bpc")
print()

cfg = TrainConfig(seq_len=25, batch_size=16, chunk_len=500, hidden=64,
                  variant="adaptive", steps=600, val_interval=100,
                  seed=1, lr=1.0, val_prefix=3000)
result = train(cfg, corpus, quiet=False)

print()
final = result.records[-1]
print(f"validation ended at {final.valid_bpc:.3f} bpc with a mean update "
      f"rate of {final.mean_update_rate:.2f}")
