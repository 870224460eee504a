# %% [markdown]
# # The mollified gradient
#
# The cross terms use the gradient of `J_delta * f` instead of the gradient
# of `f`. Here we look at the kernel, compare the discrete operator with the
# continuous one, and watch how a short run responds to the couplings.

# %%
import numpy as np

from thermidor import (Discretization, InitialData, ModelParams, build_structured_mesh,
                       make_kernel, make_space, mollified_gradient_analytic,
                       mollified_gradient_discrete, run_simulation, UNIT_SQUARE)
from thermidor.fem import interpolate

PI = np.pi

# %% [markdown]
# ## Kernel
#
# `J` is a smooth bump supported in the disk of radius `delta`. The
# normalizing constant is stored as a logarithm because it overflows for
# small radii.

# %%
for delta in (0.05, 0.1, 0.25, 1.0):
    k = make_kernel(delta)
    print(f"delta = {delta:5.2f}  log C = {k.log_norm:10.3f}  J(0) = {k(np.zeros(2)):.4e}")

# %% [markdown]
# ## Discrete against continuous
#
# For a smooth field the P1 interpolant's mollified gradient converges at
# second order to the exact one.

# %%
def f(x, y):
    return np.sin(PI * x) * np.sin(PI * y)

k = make_kernel(0.25)
pts = np.array([[0.5, 0.5], [0.2, 0.7], [0.05, 0.05]])
exact = mollified_gradient_analytic(k, f, UNIT_SQUARE, pts)
for n in (8, 16, 32):
    s = make_space(build_structured_mesh(n, n), "dirichlet0")
    g = mollified_gradient_discrete(k, s, interpolate(s, f), pts)
    print(f"n = {n:3d}  max deviation {np.abs(g - exact).max():.3e}")

# %% [markdown]
# ## A short coupled run
#
# Two colloid species starting from a bump, a warm spot in one corner. The
# printout shows the minima reported each step; small negative values are
# possible since the scheme has no discrete maximum principle.

# %%
p = ModelParams(n_species=2, K=0.5, D=[0.2, 0.1], S=[0.1, 0.1], F=[0.5, 0.5],
                A=[0.3, 0.3], B=[0.1, 0.1], beta_kernel=1.0, delta=0.15)
disc = Discretization(p, build_structured_mesh(24, 24))
init = InitialData(theta0=lambda x, y: 1 + np.exp(-20 * (x ** 2 + y ** 2)),
                   u0=[f, lambda x, y: 0.5 * f(x, y)],
                   v0=[lambda x, y: 0 * x] * 2)
state, reports = run_simulation(disc, init, 0.01, 0.1)
for r in reports[::3]:
    print(f"t = {r.t:.2f}  min u_1 {r.min_values['u_1']:+.2e}  "
          f"min theta {r.min_values['theta']:+.3f}")
