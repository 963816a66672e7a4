"""
Learning the TV weight from a cost landscape
============================================

The upper-level problem picks the weight whose reconstruction is closest
to the ground truth.  With one weight the landscape is cheap enough to
tabulate on the 51-value grid and then refine.
"""

# %%
import numpy as np

from huberlearn import RegularizerKind
from huberlearn.bilevel import AlphaGrid, argmin_landscape, landscape, refine, unimodality_violations
from huberlearn.costs import CostKind
from huberlearn.fileio import make_fixture
from huberlearn.regeval import check_interior_tv

f, f0 = make_fixture(64, sigma=0.1, seed=0)

# %%
# Noise raises the total variation, so a strictly positive weight must be
# optimal for the squared-L2 cost.  The check is exact for TV.
rep = check_interior_tv(f, f0)
print(f"TV(f) = {rep.lhs:.1f} > TV(f0) = {rep.rhs:.1f}: {rep.satisfied}")

# %%
# Warm starts reuse the previous solution along the grid.
grid = AlphaGrid.builtin("paperU")
ls = landscape(RegularizerKind.TV, f, f0, grid, 100.0, 1e-10, CostKind.l2sq())
alpha, interior, idx = argmin_landscape(ls)
print(f"grid argmin alpha = {alpha[0]} (interior: {interior})")
print(f"unimodality violations: {unimodality_violations(ls)}")

# a coarse text plot of the cost curve
c = ls.cost_values
for a, v in zip(grid.axes[0][::5], c[::5]):
    print(f"{a:6.3f} {'#' * int(40 * (v - c.min()) / (c.max() - c.min()) + 1)}")

# %%
# Golden-section refinement around the grid argmin.
ref = refine(RegularizerKind.TV, f, f0, alpha, 100.0, 1e-10, CostKind.l2sq(), radius=0.01)
print(f"refined alpha = {ref.alpha[0]:.4f}, cost {ref.cost:.5f} (grid {ref.start_cost:.5f})")
print(f"cost at smallest weight / at argmin: {c[0] / c[idx]:.1f}x")
print(np.round(ls.psnr[[0, idx[0], -1]], 2), "dB at first / best / last grid point")
