"""Kalman structure, intrinsic exponents and the parabolic geometry of the kinetic operator."""

# %%
import numpy as np

from pertou import (OperatorSpec, check_kalman, dilation_apply, intrinsic_scaling,
                    parabolic_distance)

# %% The kinetic model: noise in the velocity x0, transport into the position x1.
spec = OperatorSpec([[0, 0], [1, 0]], np.diag([1.0, 0.0]))
st = check_kalman(spec)
print("rank condition:", st.satisfied, "| blocks:", list(st.dims), "| exponents:", list(st.exponents))

# %% Without drift the noise never reaches x1.
flat = check_kalman(OperatorSpec(np.zeros((2, 2)), np.diag([1.0, 0.0])))
print("no drift, rank condition:", flat.satisfied)

# %% Position moves cost a cube root: d((0,0),(1,8)) = 1 + 2.
print("d((0,0),(1,8)) =", parabolic_distance([0, 0], [1, 8], st))

# %% The distance is homogeneous of degree one under the intrinsic scaling.
rng = np.random.default_rng(0)
x, y = rng.normal(size=2), rng.normal(size=2)
for rho in (0.5, 2.0, 4.0):
    _, xs = intrinsic_scaling(rho, 0.0, x, st)
    _, ys = intrinsic_scaling(rho, 0.0, y, st)
    print(f"rho={rho}: d(scaled)/d = {parabolic_distance(xs, ys, st) / parabolic_distance(x, y, st):.6f}")

# %% The dilation group in its lambda parametrisation.
print("delta_8(1, (1, 1)) =", dilation_apply(8.0, 1.0, [1.0, 1.0], st))
