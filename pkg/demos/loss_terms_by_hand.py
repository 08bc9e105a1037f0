# Each objective term on inputs small enough to check with pencil and paper.

import math

import numpy as np
import torch

from dias.dim_align import dim_align_loss
from dias.objective import triplet_loss
from dias.sparse import conditional_probabilities, hard_mask, smooth_mask, soft_thresholds, thresholds_for
from dias.spatial import dense_loss, inter_residual, intra_residual

# --- triplet hinge -----------------------------------------------------------------
# positive cosine 0.5, both negatives 0.4, margin 0.2: each side costs 0.2 - 0.5 + 0.4
v = np.array([1.0, 0.0])
t = np.array([0.5, math.sqrt(0.75)])
t_neg = np.array([0.4, math.sqrt(0.84)])
ang = math.acos(0.5) + math.acos(0.4)
v_neg = np.array([math.cos(ang), math.sin(ang)])
print("triplet:", float(triplet_loss(v, t, t_neg, v_neg, 0.2)))     # 0.2

# --- dimension alignment ------------------------------------------------------------------
C = np.array([[1.0, 0.5], [0.5, 1.0]])
# every row/column sums to 1.5 in absolute value: -(2/1.5 + 2/1.5) = -8/3
print("L_dim normalized:", float(dim_align_loss(C)))
print("L_dim naive:", float(dim_align_loss(C, "naive")))       # -2*2 + 3
print("L_dim at identity (d=4):", float(dim_align_loss(np.eye(4))))  # -2d

# --- spatial constraints ---------------------------------------------------------------
X = np.array([[0.0, 1.0], [3.0, 0.0]])
print("L_inter:", float(dense_loss(inter_residual(X))))        # 2^2 + 2^2
Y = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.array([[0.0, 3.0], [3.0, 0.0]])
print("L_intra:", float(dense_loss(intra_residual(Y, Z))))     # 8 again

# --- soft thresholds and masks -------------------------------------------------------------
P = torch.tensor([[0.2, 0.4, 0.6]], dtype=torch.float64)
print("kappa(beta=1):", float(soft_thresholds(P, 1.0, 1.0).row_thresholds[0]))   # 0.4 + sqrt(0.08/3)

r = torch.tensor([[0.0, 5.0], [5.0, 0.0]], dtype=torch.float64)
print("p = sigmoid(-r):\n", conditional_probabilities(r).values.numpy().round(5))
th = thresholds_for(r, 0.0, 0.0)
print("hard mask:\n", hard_mask(r, th).values.numpy())
print("smooth mask (tau=0.1):\n", smooth_mask(r, th, 0.1).numpy().round(4))
