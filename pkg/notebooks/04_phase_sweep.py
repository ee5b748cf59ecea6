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
# # A small phase-diagram sweep
#
# A coarse grid over `(rho, delta)` with a few replicates per cell. Output
# lands in a checkpointed directory: rerunning skips finished tasks.

# %%
import tempfile
from pathlib import Path

import numpy as np

from minority_sbm.svgplot import heatmap_svg
from minority_sbm.sweep import SweepSpec, linear_grid, run_grid

spec = SweepSpec(n=1500, q_s=2, q_b=2, d=5,
                 rhos=linear_grid(0.05, 0.45, 5),
                 deltas=tuple(np.linspace(1, 14, 5) / 1500),
                 replicates=3, master_seed=7)
out = Path(tempfile.mkdtemp()) / "sweep"
res = run_grid(spec, out)
print(sorted(p.name for p in out.iterdir()))

# %%
q, a = res.table("bh+nec")
np.set_printoptions(precision=2, suppress=True)
print("mean detected q (rows rho, columns delta):")
print(q)
print("mean AMI:")
print(a)

# %% [markdown]
# Threshold curves where `lambda_k^2 / lambda_1 = 1` are exported with the
# sweep and drawn over the heatmap.

# %%
print({name for name, _, _ in res.overlays})
svg = heatmap_svg(res.rows, res.overlays, value="mean_q", title="mean detected q")
(out / "phase.svg").write_text(svg)
print(out / "phase.svg", len(svg), "bytes")
