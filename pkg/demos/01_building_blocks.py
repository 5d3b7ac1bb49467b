# %% [markdown]
# # Building blocks: tape autodiff, the sentence encoder, and the four models
#
# Every model in `racnn` is built from a handful of numpy ops recorded on a
# `Tape`.  This notebook walks through the encoder geometry, shows how the
# rationale gate turns a Doc-CNN into an RA-CNN, and checks each model's
# analytic gradients against central finite differences.

# %%
import numpy as np

from racnn import tensor as T
from racnn.config import TrainConfig
from racnn.gradcheck import check_gradients
from racnn.models import bind, forward, init_params, racnn_forward, rank_rationales
from racnn.text import PAD, Document

rng = np.random.default_rng(0)

# %% [markdown]
# ## Feature maps
# A filter of height h sliding over an n-token sentence yields n - h + 1
# responses.  Over seven tokens, heights 2 and 3 give maps of length 6 and 5.

# %%
X = rng.normal(size=(7, 4))                  # 7 tokens, 4-dim embeddings
for h in (2, 3):
    fmap = T.conv1d_valid(X, rng.normal(size=(h, 4)), 0.0)
    print(f"height {h}: feature map length {fmap.shape[0]}")

# %% [markdown]
# ## Gradients through a tiny graph
# `Tape.param` registers a trainable array; anything else is a constant.

# %%
tape = T.Tape()
w = tape.param("w", rng.normal(size=(3, 2)))
x = T.Tensor(rng.normal(size=(5, 3)))
loss = T.cross_entropy(T.softmax(T.matmul(x, w)), np.array([0, 1, 1, 0, 1]))
print("loss", loss.data, "\ndL/dw\n", tape.backward(loss)["w"])

# %% [markdown]
# ## The rationale gate
# RA-CNN weights each sentence vector by max(p_pos, p_neg) from its sentence
# classifier.  Forcing every gate to 1 recovers the plain sum of Doc-CNN.

# %%
cfg = TrainConfig(model="ra-cnn", heights=(2, 3), maps_per_height=3, embedding_dim=4)
params = {k: rng.normal(size=v.shape) for k, v in init_params(cfg, 20, rng).items()}
params["E"][PAD] = 0.0
doc = Document("demo", [[2, 3, 4], [5, 6], [7, 8, 9, 10]], 1, [False, True, False])

P = bind(params, None)
gated = forward([doc], P, cfg).doc_vectors.data
forced = forward([doc], P, cfg, force_gate=1.0).doc_vectors.data
summed = forward([doc], P, cfg.replace(model="doc-cnn")).doc_vectors.data
print("gated vs summed differ:", not np.allclose(gated, summed))
print("forced-gate == Doc-CNN:", np.abs(forced - summed).max())

pred = racnn_forward(doc, params, cfg)
print("class probabilities", pred.class_probs)
print("ranked sentences (index, score):", rank_rationales(pred))

# %% [markdown]
# ## Gradient check for every model kind

# %%
for kind in ("cnn", "doc-cnn", "at-cnn", "ra-cnn"):
    res = check_gradients(kind, seed=0)
    print(f"{kind:8s} max relative error {res.max_error:.2e}  worst parameter {res.worst_param}")
