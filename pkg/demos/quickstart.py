# Quickstart: generate a small shared-latent corpus, train the projection
# heads for a few epochs and look at retrieval, the loss breakdown and the
# learned sparse mask. Runs in well under a minute on one core.

import numpy as np
import torch

from dias.config import TrainConfig
from dias.core import LocalBatch
from dias.corpus import SynthSpec, gen_synth, separation
from dias.interaction import similarity_matrix
from dias.sparse import hard_mask, thresholds_for
from dias.spatial import inter_residual
from dias.train import train

# --- data ----------------------------------------------------------------------
# every region/word of pair i is a fixed linear image of a latent u_i plus noise
synth = gen_synth(SynthSpec(num_pairs=300, latent_dim=8, d_in_image=16, d_in_text=16, seed=0))
corpus = synth.corpus
matched, unmatched = separation(synth)
print(f"{corpus.num_images} images, {len(corpus.texts)} texts")
print(f"decoded-latent cosine: matched {matched:.3f}, unmatched {unmatched:.3f}")

# --- training --------------------------------------------------------------------
cfg = TrainConfig(dim=16, epochs=5, val_size=60).with_overrides(
    {"batch": {"clusters_M": 4, "per_cluster_P": 8, "kmeans_k": 8}})
res = train(corpus, cfg)

print("\nepoch   lr        loss     L_loc    L_dim    val rSum")
for rec in res.trace:
    print(f"{rec['epoch']:>5}   {rec['lr']:.2e}  {rec['loss_total']:7.3f}  {rec['loss_loc']:7.3f}"
          f"  {rec['loss_dim']:7.3f}  {rec['val_rsum']:7.1f}")
print(f"\nuntrained rSum {res.initial_val_rsum:.1f} -> trained {res.final_val_rsum:.1f}")
print("final report:", res.final_report.as_dict())
print("learned betas (inter row/col, intra row/col):", res.state.betas.numpy().round(3))

# --- which inter-modal pairs does the sparse mask keep? ----------------------------------
p = res.state.projection
idx = np.arange(8)
with torch.no_grad():
    imgs = LocalBatch.from_arrays([corpus.images[i] for i in idx]).project(p.weight_image, p.bias_image)
    txts = LocalBatch.from_arrays([corpus.texts[corpus.text_ids[i][0]] for i in idx]).project(
        p.weight_text, p.bias_text)
    res_x = inter_residual(1.0 - similarity_matrix(imgs, txts))
    th = thresholds_for(res_x, res.state.betas[0], res.state.betas[1])
    mask = hard_mask(res_x, th)
print(f"\ninter residual |X - X^T| on 8 pairs (max {float(res_x.values.max()):.3f}),"
      f" {mask.selected_count} entries selected")
print(np.round(res_x.values.numpy(), 3))
# in magnitude space an entry survives only when it exceeds sigmoid(-r) statistics,
# so well-aligned embeddings (small residuals) usually leave the mask empty
