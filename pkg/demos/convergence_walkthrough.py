# %% [markdown]
# # Convergence walkthrough
#
# We solve the decoupled heat/diffusion eigenmode problem and the fully
# coupled manufactured problem, and read the observed orders off the EOC
# tables. Runtime is well under a minute.

# %%
import numpy as np

from thermidor import StudyProtocol, convergence_study, exact_decoupled_case
from thermidor.physics import ModelParams
from thermidor.verification import coupled_mms_case, mms_residuals

# %% [markdown]
# ## Spatial order on the eigenmode
#
# With `tau = h^2 / 4` the time error shrinks with the square of the mesh
# size, so the final-time L2 errors should fall by a factor of four per
# refinement.

# %%
case = exact_decoupled_case(K=1.0, D=1.0)
space = convergence_study("space", case, StudyProtocol(t_end=0.1, nx0=8, levels=3))
print(space.format())

# %% [markdown]
# ## Temporal order
#
# A fixed 64 x 64 mesh and halving steps. Small diffusivities keep the
# spatial error well below the step error over `[0, 1]`.

# %%
slow = exact_decoupled_case(K=0.1, D=0.1)
time = convergence_study("time", slow, StudyProtocol(t_end=1.0, nx_fine=64, levels=3))
print(time.format())

# %% [markdown]
# ## Coupled manufactured solution
#
# Soret and Dufour couplings, coagulation and deposition all switched on.
# First check that the forcing balances the equations pointwise, then
# refine.

# %%
params = ModelParams(n_species=2, K=0.5, D=[0.4, 0.3], S=[0.1, 0.2], F=[0.3, 0.1],
                     A=[0.5, 0.2], B=[0.1, 0.3], beta_kernel=[[1.0, 0.5], [0.5, 2.0]],
                     delta=0.25)
mms = coupled_mms_case(params)
rng = np.random.default_rng(0)
worst = max(np.abs(r).max() for _ in range(10)
            for r in mms_residuals(mms, rng.random((1, 2)), rng.random()))
print(f"largest residual {worst:.2e}")

# %%
coupled = convergence_study("coupled", mms,
                            StudyProtocol(t_end=0.1, nx0=8, levels=3, tau_factor=1.0))
print(coupled.format())
