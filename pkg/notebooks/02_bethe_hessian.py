# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
# ---

# %% [markdown]
# # Spectral detection with the Bethe Hessian
#
# Sample a graph from a resolvable model, count the negative eigenvalues of
# `BH(eta)` and `BH(-eta)` to choose `q`, then cluster the eigenvector
# embedding.

# %%
import numpy as np

from minority_sbm.graphgen import sample_direct
from minority_sbm.metrics import ami, confusion_matrix
from minority_sbm.spectral import bethe_hessian, detect_bh, negative_count
from minority_sbm.theory import MinorityModel, closed_form_spectrum

m = MinorityModel(3000, 2, 2, 0.44, 0.0038, 5)
g = sample_direct(m, seed=1)
print(g.n, "nodes", g.m, "edges, mean degree", round(g.mean_degree(), 3))
print("theory expects q =", closed_form_spectrum(m).expected_q)

# %%
eta = np.sqrt(g.mean_degree())
print("negative eigenvalues of BH(+eta):", negative_count(bethe_hessian(g, eta)))
print("negative eigenvalues of BH(-eta):", negative_count(bethe_hessian(g, -eta)))

# %%
part, diag = detect_bh(g, seed=0)
print("detected q:", diag.q, " AMI:", round(ami(g.planted, part), 3))

# %% [markdown]
# Rows are planted communities (minorities first), columns the matched
# detected ones.

# %%
cm = confusion_matrix(g.planted, part)
print(np.round(cm.proportions, 2))

# %% [markdown]
# Closer to the distinguishable phase the two minorities merge into one
# detected block.

# %%
g2 = sample_direct(m.with_(rho=0.39), seed=2)
part2, diag2 = detect_bh(g2, seed=0)
print("q =", diag2.q)
print(np.round(confusion_matrix(g2.planted, part2).proportions, 2))
