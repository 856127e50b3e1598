"""Monte Carlo solve of the perturbed kinetic problem against the closed-form Gaussian oracle."""

# %%
import time

import numpy as np

from pertou import (GaussianBump, MCParams, OperatorSpec, PerturbationSchedule, SourceFunction,
                    check_kalman, gaussian_closed_form, solve_perturbed_batch)

spec = OperatorSpec([[0, 0], [1, 0]], np.diag([1.0, 0.0]))
st = check_kalman(spec)
f = SourceFunction.constant_in_time([GaussianBump(1.0, [0.0, 0.0], [0.25, 0.25])], 1.0)

# %% S(t) switches four times between three matrices with ||S|| <= 1.
mats = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), [[0.5, 0.4], [0.4, 0.5]]]
S = PerturbationSchedule.alternating(mats, 4, 1.0)

# %% The perturbation is replaced by compound-Poisson jumps of size eps.
X = np.array([[0.0, 0.0], [0.5, -0.3], [-1.0, 1.0], [1.5, 0.5]])
exact = gaussian_closed_form(spec, S, f, 1.0, X)
for eps in (0.4, 0.1, 0.05):
    start = time.perf_counter()
    est = solve_perturbed_batch(spec, st, S, f, eps, 1.0, X, MCParams(samples=40_000, seed=1),
                                inner="exact")
    print(f"eps={eps:<5} max |MC - exact| = {np.abs(est.values - exact).max():.2e}  "
          f"(3 se = {3 * est.std_errors.max():.1e}, {time.perf_counter() - start:.1f} s)")

# %% Maximum principle: |u| <= T sup|f| = 1.
print("closed form:", np.round(exact, 5))
