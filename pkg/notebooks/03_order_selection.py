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
# # Choosing the number of communities
#
# Three rules are compared on one graph: negative-eigenvalue counting,
# minimum Bethe free energy (BP with EM) and minimum description length.

# %%
from minority_sbm.bp import em_fit, mfe_select
from minority_sbm.graphgen import sample_consistent_degree
from minority_sbm.mdl import mdl_select
from minority_sbm.metrics import ami
from minority_sbm.spectral import bh_partition_at, detect_bh
from minority_sbm.theory import MinorityModel, closed_form_spectrum

m = MinorityModel(3000, 2, 3, 0.24, 0.0044, 5, "consistent_degree")
g = sample_consistent_degree(m, seed=3)
print("planted q:", m.q, " theory expects:", closed_form_spectrum(m).expected_q)

# %% [markdown]
# Free energy per node against `q`. The selected order is the elbow: the
# first `q` whose rounded free energy is no lower than at `q - 1`.

# %%
q_star, trace = mfe_select(g, 6, t=2, seed=0)
for q, f, r in zip(trace.q, trace.f_min, trace.rounded):
    print(f"q={q}  f={f:.5f}  rounded={r}")
print("MFE picks", q_star)

# %%
state, learned = em_fit(g, q_star, t=2, seed=1)
print("AMI at the MFE order:", round(ami(g.planted, state.partition()), 3))

# %%
_, diag = detect_bh(g, seed=0)
print("NEC picks", diag.q)

# %%
candidates = {q: bh_partition_at(g, q, 0) for q in range(1, 7)}
res = mdl_select(g, candidates)
for q, length in res.curve.items():
    print(f"q={q}  L={length:.1f}")
print("MDL picks", res.q)

# %% [markdown]
# At mean degree 5 the `N log q` cost of the labels outweighs what a finer
# partition saves on the edges, so MDL settles on very few blocks. On this
# graph MFE stops one order above the spectral count.
