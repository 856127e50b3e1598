"""Schauder ratio [u]_{2.5} / [f]_{0.5} of exact solutions across S-families with many switches."""

# %%
import numpy as np

from pertou import (GaussianBump, HolderGrid, OperatorSpec, PerturbationSchedule, SourceFunction,
                    check_kalman, closed_form_field, holder_seminorm_aniso)
from pertou.norms import holder_separable_gaussian

spec = OperatorSpec([[0, 0], [1, 0]], np.diag([1.0, 0.0]))
st = check_kalman(spec)
f = SourceFunction.constant_in_time([GaussianBump(1.0, [0.0, 0.0], [0.25, 0.25])], 1.0)
den = holder_separable_gaussian(1.0, [0.5, 0.5], 0.5, st)
grid = HolderGrid.around(np.zeros(2), 2.5, 17, st)

# %% The ratio should not drift as S(t) oscillates faster.
mats = [np.diag([0.5, 0.0]), np.diag([0.0, 0.5])]
for n in (1, 4, 16, 64, 256):
    S = PerturbationSchedule.alternating(mats, n, 1.0)
    num = max(holder_seminorm_aniso(closed_form_field(spec, S, f, t, n_per_panel=max(2, 96 // (n + 1))),
                                    2.5, st, grid) for t in (0.5, 1.0))
    print(f"switches={n:<4} ratio = {num / den:.4f}")
