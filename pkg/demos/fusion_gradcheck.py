"""
Checking the fusion backward pass
=================================

Fuse text, visual and context features, then compare the hand-written
gradients with central finite differences.
"""

import numpy as np

from cimr import generate_scenario
from cimr.encoders import default_encoder_params, encode_context, encode_text, encode_visual
from cimr.fusion import check_gradients, default_attention_params, fuse, fuse_backward, gradcheck_suite
from cimr.mapsim import render

enc, att = default_encoder_params(), default_attention_params()
scenario = generate_scenario(1, "identify_all")

f_t = encode_text(scenario.instruction, enc)
f_v = encode_visual(render(scenario.scene, 0), enc)
f_c = encode_context(scenario.initial_context, enc)
print("tokens per modality:", len(f_t), len(f_v), len(f_c))

out = fuse(f_t, f_v, f_c, att)
print("fused:", out.vectors.shape, "attention:", out.attention.shape)

# how much attention each modality receives, averaged over heads and queries
bounds = np.cumsum([0, len(f_t), len(f_v), len(f_c)])
share = [out.attention[:, :, a:b].sum(axis=-1).mean() for a, b in zip(bounds, bounds[1:])]
print("attention share (text, visual, context):", np.round(share, 3))

# gradient of the pooled feature's first coordinate
g = np.zeros(64)
g[0] = 1.0
grads = fuse_backward(f_t, f_v, f_c, att, grad_pooled=g)
print("grad norms:", {k: round(float(np.linalg.norm(v)), 4) for k, v in grads.items()})

# finite-difference checks: a single instance, then the full randomized suite
print("instance (4,5,2):", f"{check_gradients(9, (4, 5, 2)):.2e}")
worst = max(err for _, _, err in gradcheck_suite(seed=0, instances=100))
print(f"100 random instances, worst relative error: {worst:.2e}")
