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
# # Detectability phases of minority communities
#
# A model has `q_s` minority and `q_b` majority communities. The minorities
# hold a fraction `rho` of the nodes, `delta` is the in/out probability gap
# and `d` the mean degree. Every quantity below comes from the closed-form
# spectrum of the signal matrix `Q = N * Omega`.

# %%
import numpy as np

from minority_sbm.theory import (MinorityModel, build_signal_matrix, closed_form_spectrum,
                                 edge_probabilities, feasible_delta_range)

m = MinorityModel(n=3000, q_s=2, q_b=2, rho=0.44, delta=0.0038, d=5)
p = edge_probabilities(m)
print(f"p_in={p.p_in:.5f}  p_out={p.p_out:.5f}")
print("feasible delta range:", feasible_delta_range(m))

# %% [markdown]
# The closed form agrees with a dense eigendecomposition of `Q`.

# %%
rep = closed_form_spectrum(m)
for (value, mult), name in zip(rep.lambdas, rep.contrasts):
    print(f"{name:>9}: {value:8.4f}  x{mult}")
dense = np.sort(np.linalg.eigvals(build_signal_matrix(m)).real)[::-1]
print("dense:", np.round(dense, 4))

# %% [markdown]
# Ratios `lambda_k^2 / lambda_1` above one mark the visible eigenvalues.
# Their count is the number of communities a spectral method can expect
# to find.

# %%
for k in (2, 3, 4):
    print(f"lambda_{k}^2/lambda_1 = {rep.ratio(k):.3f}")
print("phase:", rep.phase.value, " expected q:", rep.expected_q)

# %% [markdown]
# Moving along `rho` at fixed `delta` crosses the three phases.

# %%
for rho in (0.1, 0.25, 0.39, 0.44):
    r = closed_form_spectrum(m.with_(rho=rho))
    print(f"rho={rho:.2f}  {r.phase.value:<15} q={r.expected_q}")

# %% [markdown]
# In the consistent-degree scenario every community shares the mean degree,
# so `lambda_1 = d` exactly.

# %%
cd = MinorityModel(3000, 2, 3, 0.24, 0.0044, 5, "consistent_degree")
r = closed_form_spectrum(cd)
print(r.values[0], r.multiplicities, r.phase.value)
